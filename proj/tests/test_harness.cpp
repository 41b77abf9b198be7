#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iterator>

#include "snrge/error.hpp"
#include "snrge/harness.hpp"
#include "test_util.hpp"

using namespace snrge;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

DatasetConfig small_dataset() {
  DatasetConfig dc;
  dc.grid = {0, 10};
  dc.clips_per_level = 20;
  dc.noise_clips = 20;
  dc.seed = 17;
  return dc;
}

EvalReport sample_report() {
  EvalReport r;
  r.config["method"] = "snn-knn";
  r.manifest_digest = "0123456789abcdef";
  r.created_utc = "2024-01-01T00:00:00Z";
  EvalRecord& a = r.record(10);
  a.n_samples = 5;
  a.nc_accuracy = 0.8;
  a.rmsde_weighted = 1.25;
  EvalRecord& b = r.record(-5);
  b.n_samples = 5;
  b.frequency_score = 0.1;
  r.samples.push_back({"frequency", -5, "snr_-5dB/sim_00000.wav", 0.3, 0.6, 0});
  r.losses.push_back({"all", {{1, 0.5, 0.6}, {2, 0.3, 0.4}}});
  ElbowCurves e;
  e.ks = {1, 2, 3};
  e.rmse = {3.0, 2.0, 1.9};
  e.r2 = {0.5, 0.7, 0.71};
  e.max_dist = {0.1, 0.2, 0.3};
  e.chosen_k = 2;
  r.elbow = e;
  r.knn_k = 2;
  r.test_rmsde_weighted = 1.5;
  Projection2D p;
  p.points = {{0, 0}, {1, 1}, {2, 0}, {3, 1}};
  p.labels = {"noise", "noise", "10", "10"};
  p.final_kl = 0.4;
  r.projection_real = p;
  r.notes.push_back("level 5: diverged");
  return r;
}

}  // namespace

TEST_CASE("fnv1a digest") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("records stay sorted") {
  EvalReport r;
  r.record(10).n_samples = 1;
  r.record(-15).n_samples = 2;
  r.record(0).n_samples = 3;
  r.record(10).n_samples = 4;
  REQUIRE(r.records.size() == 3);
  CHECK(r.records[0].snr_db == -15);
  CHECK(r.records[2].n_samples == 4);
  CHECK(r.find(0) != nullptr);
  CHECK(r.find(5) == nullptr);
}

TEST_CASE("report JSON round trip") {
  const EvalReport r = sample_report();
  const std::string text = report_to_json(r);
  const EvalReport back = report_from_json(text);
  CHECK(report_to_json(back) == text);
  CHECK(back.created_utc == r.created_utc);
  CHECK(back.records.size() == 2);
  CHECK_FALSE(back.find(10)->frequency_score.has_value());
  CHECK(*back.find(10)->nc_accuracy == 0.8);
  CHECK(back.elbow->chosen_k == 2);
  CHECK(back.projection_real->points.size() == 4);
  CHECK(back.notes == r.notes);
  CHECK(report_to_json(r, false).find("created_utc") == std::string::npos);
  CHECK_THROWS_AS(report_from_json("{not json"), DataError);
  CHECK_THROWS_AS(report_from_json("[1,2]"), DataError);
}

TEST_CASE("merge") {
  EvalReport a = sample_report();
  EvalReport f;
  f.record(10).pixel_score = 0.9;
  f.record(10).nc_accuracy = 0.7;
  f.record(5).n_samples = 3;
  f.notes.push_back("x");
  merge_reports(a, f);
  CHECK(a.records.size() == 3);
  CHECK(*a.find(10)->pixel_score == 0.9);
  CHECK(*a.find(10)->nc_accuracy == 0.7);
  CHECK(*a.find(10)->rmsde_weighted == 1.25);
  CHECK(a.notes.size() == 2);
  CHECK(a.elbow.has_value());
}

TEST_CASE("emit_report") {
  testutil::TempDir dir("emit");
  EvalReport r;
  for (int db = -20; db <= 30; db += 2) {
    EvalRecord& rec = r.record(db);
    rec.n_samples = 10;
    rec.frequency_score = 0.5 + db / 100.0;
  }
  REQUIRE(r.records.size() == 26);
  emit_report(r, dir / "out");
  const std::string scores = slurp(dir / "out" / "scores.csv");
  CHECK(lines(scores) == 27);
  CHECK(scores.rfind("snr_db,n_samples,frequency_score,", 0) == 0);
  CHECK(scores.find("\n-20,10,0.3,,,,,,,,,\n") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "out" / "report.json"));
  CHECK(std::filesystem::exists(dir / "out" / "scores_vs_snr.svg"));

  const EvalReport full = sample_report();
  emit_report(full, dir / "full");
  for (const char* f : {"report.json", "scores.csv", "samples.csv", "elbow.csv", "elbow_rmse.svg",
                        "projection_real.svg", "loss_all.csv"}) {
    CHECK_MESSAGE(std::filesystem::exists(dir / "full" / f), f);
  }
  CHECK(lines(slurp(dir / "full" / "elbow.csv")) == 4);
  CHECK(report_from_json(slurp(dir / "full" / "report.json")).records.size() == 2);

  CHECK_THROWS_AS(emit_report(r, dir / "no" / "such" / "dir"), DataError);
  CHECK_THROWS_AS(emit_report(r, dir / "out" / "scores.csv"), DataError);
  CHECK_THROWS_AS(emit_report(EvalReport{}, dir / "empty"), UsageError);
}

TEST_CASE("loss_outliers") {
  CHECK(loss_outliers({{0, 0.1}, {5, 5.0}}).empty());
  const auto out = loss_outliers({{-15, 0.10}, {-10, 0.11}, {-5, 0.12}, {0, 0.10}, {5, 0.9}});
  REQUIRE(out.size() == 1);
  CHECK(out[0] == 5);
  CHECK(loss_outliers({{0, 0.1}, {5, 0.1}, {10, 0.1}}).empty());
}

TEST_CASE("sources") {
  testutil::TempDir dir("sources");
  CHECK_THROWS_AS(resolve_source(SampleSource::wav_directory(dir.path()), 32000, 32000), DataError);
  CHECK_THROWS_AS(resolve_source(SampleSource::wav_directory(dir / "missing"), 32000, 32000), DataError);

  SimulatorConfig sim;
  sim.count = 6;
  const auto levels = resolve_source(SampleSource::simulated(sim, {-5, 10}), 32000, 32000);
  REQUIRE(levels.size() == 2);
  CHECK(levels[0].target_db == -5);
  CHECK(levels[1].clips.size() == 6);
  CHECK(levels[1].names[0] == "snr_10dB/sim_00000.wav");

  write_source(levels, dir / "sim");
  const auto back = resolve_source(SampleSource::wav_directory(dir / "sim"), 32000, 32000);
  REQUIRE(back.size() == 2);
  CHECK(back[0].target_db == -5);
  CHECK(back[1].clips.size() == 6);
  CHECK_THROWS_AS(resolve_source(SampleSource::wav_directory(dir / "sim"), 16000, 32000), DataError);
  CHECK_THROWS_AS(resolve_source(SampleSource::wav_directory(dir / "sim"), 32000, 16000), DataError);
}

TEST_CASE("WAV directory and simulator sources score alike") {
  testutil::TempDir dir("equiv");
  const Dataset ds = make_dataset(small_dataset());
  SimulatorConfig sim;
  sim.count = 30;
  const auto direct = resolve_source(SampleSource::simulated(sim, {0, 10}), 32000, 32000);
  write_source(direct, dir / "src");
  const auto from_disk = resolve_source(SampleSource::wav_directory(dir / "src"), 32000, 32000);
  for (SpectralMethod m : {SpectralMethod::kFrequency, SpectralMethod::kPixels}) {
    const EvalReport a = run_spectral_workflow(ds, direct, m);
    const EvalReport b = run_spectral_workflow(ds, from_disk, m);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
      const auto& ra = a.records[i];
      const auto& rb = b.records[i];
      const double sa = ra.frequency_score ? *ra.frequency_score : *ra.pixel_score;
      const double sb = rb.frequency_score ? *rb.frequency_score : *rb.pixel_score;
      CHECK(std::abs(sa - sb) <= 0.01);
    }
  }
}

TEST_CASE("spectral workflow rejects levels outside the grid") {
  const Dataset ds = make_dataset(small_dataset());
  SimulatorConfig sim;
  sim.count = 2;
  const auto src = resolve_source(SampleSource::simulated(sim, {5}), 32000, 32000);
  CHECK_THROWS_AS(run_spectral_workflow(ds, src, SpectralMethod::kFrequency), DataError);
}

TEST_CASE("dataset directory round trip keeps the digest") {
  testutil::TempDir dir("dataset");
  DatasetConfig dc = small_dataset();
  dc.clips_per_level = 5;
  dc.noise_clips = 5;
  build_dataset(dc, dir / "ds");
  const Dataset a = open_dataset(dir / "ds");
  const Dataset b = make_dataset(dc);
  CHECK(a.manifest_digest == b.manifest_digest);
  CHECK(a.clips.size() == b.clips.size());
  CHECK(a.manifest_digest.size() == 16);
  CHECK_THROWS_AS(open_dataset(dir / "nothing"), DataError);
}

TEST_CASE("single-network workflow on a tiny dataset") {
  const Dataset ds = make_dataset(small_dataset());
  SimulatorConfig sim;
  sim.count = 10;
  const auto src = resolve_source(SampleSource::simulated(sim, {0, 10}), 32000, 32000);
  EmbedderConfig cfg;
  cfg.conv_blocks = 3;
  cfg.input_rows = cfg.input_cols = 32;
  cfg.epochs = 2;
  SingleOptions so;
  so.k_max = 50;
  so.tsne.perplexity = 2;
  so.tsne.iterations = 300;
  const SingleResult res = run_single_snn_workflow(ds, src, cfg, so);
  const EvalReport& r = res.report;
  REQUIRE(r.knn_k.has_value());
  CHECK(*r.knn_k >= 1);
  REQUIRE(r.elbow.has_value());
  CHECK(r.elbow->ks.size() <= 50);
  REQUIRE(r.find(10) != nullptr);
  CHECK(r.find(10)->nc_accuracy.has_value());
  CHECK(r.find(10)->rmsde_weighted.has_value());
  CHECK(r.test_rmsde_weighted.has_value());
  CHECK(r.projection_real.has_value());
  CHECK(r.projection_source.has_value());
  CHECK(r.losses.size() == 1);
  CHECK(r.losses[0].epochs.size() == 2);
  CHECK(r.manifest_digest == ds.manifest_digest);

  SingleOptions fixed = so;
  fixed.knn_k = 3;
  fixed.project = false;
  const SingleResult again = run_single_snn_workflow(ds, src, cfg, fixed, &res.network);
  CHECK(*again.report.knn_k == 3);
  CHECK_FALSE(again.report.projection_real.has_value());
}

TEST_CASE("option builders") {
  Config c;
  c.set("knn_k", "7");
  c.set("knn_weighting", "uniform");
  c.set("project", "false");
  c.set("stft_window", "512");
  const SingleOptions so = single_options(c);
  CHECK(so.knn_k == 7);
  CHECK(so.elbow_weighting == KnnWeighting::kUniform);
  CHECK_FALSE(so.project);
  CHECK(so.stft.window == 512);
  c.set("knn_weighting", "cubic");
  CHECK_THROWS_AS(single_options(c), UsageError);
  Config s;
  s.set("sim_quality", "great");
  CHECK_THROWS_AS(simulator_config(s, DatasetConfig{}), UsageError);
  s.set("sim_quality", "degraded");
  s.set("sim_bias", "5");
  const SimulatorConfig sim = simulator_config(s, DatasetConfig{});
  CHECK(sim.snr_bias_db == 5.0);
  CHECK(sim.quality == GeneratorQuality::kDegraded);
  CHECK(sim.count == 200);
}
