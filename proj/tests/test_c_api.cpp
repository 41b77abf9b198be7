#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "snrge/snrge.h"
#include "test_util.hpp"

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  snrge_string_free(s);
  return out;
}

snrge_config* tiny_config() {
  snrge_config* cfg = nullptr;
  REQUIRE(snrge_config_new(&cfg) == SNRGE_OK);
  for (const char* kv : {"grid=0,10", "clips_per_level=12", "noise_clips=12", "eval_count=4",
                         "epochs=1", "conv_blocks=3", "input_rows=32", "input_cols=32",
                         "k_max=20", "project=false"}) {
    REQUIRE(snrge_config_assign(cfg, kv) == SNRGE_OK);
  }
  return cfg;
}

}  // namespace

TEST_CASE("version and errors") {
  CHECK(std::string(snrge_version()).size() > 0);
  snrge_config* cfg = nullptr;
  CHECK(snrge_config_load("/nonexistent/x.cfg", &cfg) == SNRGE_E_DATA);
  CHECK(cfg == nullptr);
  CHECK(std::string(snrge_last_error()).find("x.cfg") != std::string::npos);
  CHECK(snrge_config_new(nullptr) == SNRGE_E_USAGE);
  snrge_config_free(nullptr);
  snrge_clip_free(nullptr);
  snrge_string_free(nullptr);
}

TEST_CASE("config handle") {
  snrge_config* cfg = nullptr;
  REQUIRE(snrge_config_new(&cfg) == SNRGE_OK);
  CHECK(snrge_config_set(cfg, "epochs", "3") == SNRGE_OK);
  CHECK(snrge_config_assign(cfg, "margin = 0.5") == SNRGE_OK);
  CHECK(snrge_config_assign(cfg, "no equals sign") == SNRGE_E_USAGE);
  char* v = nullptr;
  REQUIRE(snrge_config_get(cfg, "margin", &v) == SNRGE_OK);
  CHECK(take(v) == "0.5");
  CHECK(snrge_config_get(cfg, "missing", &v) == SNRGE_E_USAGE);
  char* text = nullptr;
  REQUIRE(snrge_config_to_string(cfg, &text) == SNRGE_OK);
  CHECK(take(text).find("epochs = 3") != std::string::npos);
  snrge_config_free(cfg);
}

TEST_CASE("numeric helpers") {
  double out = 0.0;
  const double x[] = {3.0, -4.0};
  REQUIRE(snrge_rms(x, 2, &out) == SNRGE_OK);
  CHECK(out == doctest::Approx(std::sqrt(12.5)));
  REQUIRE(snrge_db_to_linear(10.0, &out) == SNRGE_OK);
  CHECK(out == doctest::Approx(10.0));
  REQUIRE(snrge_linear_to_db(0.0, -40.0, &out) == SNRGE_OK);
  CHECK(out == -40.0);
  REQUIRE(snrge_mix_beta(1.0, 1.0, 0.0, &out) == SNRGE_OK);
  CHECK(out == doctest::Approx(1.0));
  const double y[] = {1.0, 2.0, 3.0};
  const double z[] = {2.0, 4.0, 6.0};
  REQUIRE(snrge_pearson(y, z, 3, &out) == SNRGE_OK);
  CHECK(out == doctest::Approx(1.0));
  CHECK(snrge_rms(nullptr, 0, &out) != SNRGE_OK);
}

TEST_CASE("clip round trip") {
  testutil::TempDir dir("capi_clip");
  std::vector<double> s(800);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = 0.5 * std::sin(0.01 * static_cast<double>(i));
  snrge_clip* c = nullptr;
  REQUIRE(snrge_clip_new(s.data(), s.size(), 8000, &c) == SNRGE_OK);
  const std::string path = (dir / "a.wav").string();
  REQUIRE(snrge_clip_write(c, path.c_str()) == SNRGE_OK);
  snrge_clip* back = nullptr;
  REQUIRE(snrge_clip_read(path.c_str(), &back) == SNRGE_OK);
  CHECK(snrge_clip_length(back) == 800);
  CHECK(snrge_clip_sample_rate(back) == 8000);
  CHECK(std::abs(snrge_clip_samples(back)[100] - s[100]) < 1e-4);
  CHECK(snrge_clip_read((dir / "none.wav").string().c_str(), &back) == SNRGE_E_DATA);
  snrge_clip_free(c);
  snrge_clip_free(back);
}

TEST_CASE("dataset, evaluation and reports") {
  testutil::TempDir dir("capi_flow");
  snrge_config* cfg = tiny_config();
  const std::string ds_dir = (dir / "ds").string();
  REQUIRE(snrge_dataset_generate(cfg, ds_dir.c_str()) == SNRGE_OK);
  snrge_dataset* ds = nullptr;
  REQUIRE(snrge_dataset_open(ds_dir.c_str(), &ds) == SNRGE_OK);
  CHECK(snrge_dataset_size(ds) == 36);
  char* digest = nullptr;
  REQUIRE(snrge_dataset_digest(ds, &digest) == SNRGE_OK);
  const std::string d = take(digest);
  CHECK(d.size() == 16);

  snrge_dataset* mem = nullptr;
  REQUIRE(snrge_dataset_synthesize(cfg, &mem) == SNRGE_OK);
  REQUIRE(snrge_dataset_digest(mem, &digest) == SNRGE_OK);
  CHECK(take(digest) == d);

  snrge_report* spectra = nullptr;
  REQUIRE(snrge_evaluate(ds, cfg, SNRGE_METHOD_SPECTRA, nullptr, nullptr, &spectra) == SNRGE_OK);
  char* json = nullptr;
  REQUIRE(snrge_report_to_json(spectra, 0, &json) == SNRGE_OK);
  const std::string j = take(json);
  CHECK(j.find("frequency_score") != std::string::npos);
  CHECK(j.find(d) != std::string::npos);

  const std::string src = (dir / "src").string();
  REQUIRE(snrge_simulate(ds, cfg, src.c_str()) == SNRGE_OK);
  snrge_report* pixels = nullptr;
  REQUIRE(snrge_evaluate(ds, cfg, SNRGE_METHOD_PIXELS, src.c_str(), nullptr, &pixels) == SNRGE_OK);
  REQUIRE(snrge_report_merge(spectra, pixels) == SNRGE_OK);
  const std::string out = (dir / "report").string();
  REQUIRE(snrge_report_write(spectra, out.c_str()) == SNRGE_OK);
  snrge_report* loaded = nullptr;
  REQUIRE(snrge_report_load(out.c_str(), &loaded) == SNRGE_OK);
  REQUIRE(snrge_report_to_json(loaded, 0, &json) == SNRGE_OK);
  const std::string merged = take(json);
  CHECK(merged.find("pixel_score") != std::string::npos);

  snrge_embedder* e = nullptr;
  snrge_report* hist = nullptr;
  REQUIRE(snrge_embedder_train_all(ds, cfg, &e, &hist) == SNRGE_OK);
  CHECK(snrge_embedder_dim(e) == 16);
  const std::string model = (dir / "m.snrm").string();
  REQUIRE(snrge_embedder_save(e, model.c_str()) == SNRGE_OK);
  snrge_embedder* e2 = nullptr;
  REQUIRE(snrge_embedder_load(model.c_str(), &e2) == SNRGE_OK);

  std::vector<double> audio(32000);
  for (std::size_t i = 0; i < audio.size(); ++i) audio[i] = 0.1 * std::sin(0.3 * static_cast<double>(i));
  snrge_clip* clip = nullptr;
  REQUIRE(snrge_clip_new(audio.data(), audio.size(), 32000, &clip) == SNRGE_OK);
  std::vector<double> v1(16), v2(16);
  REQUIRE(snrge_embedder_embed(e, clip, cfg, v1.data()) == SNRGE_OK);
  REQUIRE(snrge_embedder_embed(e2, clip, cfg, v2.data()) == SNRGE_OK);
  CHECK(v1 == v2);
  double norm = 0.0;
  for (double x : v1) norm += x * x;
  CHECK(std::sqrt(norm) == doctest::Approx(1.0));

  snrge_report* knn = nullptr;
  REQUIRE(snrge_evaluate(ds, cfg, SNRGE_METHOD_SNN_KNN, src.c_str(), model.c_str(), &knn) == SNRGE_OK);
  snrge_report* ks = nullptr;
  REQUIRE(snrge_select_k(ds, e, cfg, &ks) == SNRGE_OK);
  REQUIRE(snrge_report_to_json(ks, 0, &json) == SNRGE_OK);
  CHECK(take(json).find("elbow") != std::string::npos);

  snrge_report* other = nullptr;
  REQUIRE(snrge_report_new(&other) == SNRGE_OK);
  CHECK(snrge_report_merge(knn, other) == SNRGE_OK);
  CHECK(snrge_report_write(other, out.c_str()) == SNRGE_E_USAGE);

  CHECK(snrge_evaluate(ds, cfg, SNRGE_METHOD_SNN_KNN, (dir / "nowhere").string().c_str(), nullptr,
                       &knn) == SNRGE_E_DATA);
  snrge_config* bad = tiny_config();
  snrge_config_set(bad, "knn_weighting", "cubic");
  snrge_report* r = nullptr;
  CHECK(snrge_evaluate(ds, bad, SNRGE_METHOD_SNN_KNN, src.c_str(), model.c_str(), &r) == SNRGE_E_USAGE);
  CHECK(r == nullptr);

  for (snrge_report* p : {spectra, pixels, loaded, hist, knn, ks, other}) snrge_report_free(p);
  snrge_embedder_free(e);
  snrge_embedder_free(e2);
  snrge_clip_free(clip);
  snrge_config_free(bad);
  snrge_config_free(cfg);
  snrge_dataset_free(ds);
  snrge_dataset_free(mem);
}
