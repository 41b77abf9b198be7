#include "snrge/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include <json.hpp>

#include "snrge/parallel.hpp"
#include "snrge/rng.hpp"

namespace snrge {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Datasets and sources

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Dataset make_dataset(const DatasetConfig& cfg) {
  Dataset d;
  d.config = cfg;
  d.manifest = plan_dataset(cfg);
  d.clips = synthesize_dataset(cfg);
  d.manifest_digest = fnv1a_hex(manifest_jsonl(d.manifest));
  return d;
}

Dataset open_dataset(const std::filesystem::path& dir) {
  Dataset d;
  const auto cfg_path = dir / "dataset.cfg";
  if (std::filesystem::exists(cfg_path)) {
    d.config = DatasetConfig::from_config(Config::load(cfg_path));
  }
  d.manifest = load_manifest(dir);
  d.config.grid = d.manifest.grid;
  d.clips = load_dataset(dir);
  std::ifstream in(dir / "manifest.jsonl", std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  d.manifest_digest = fnv1a_hex(ss.str());
  if (!d.clips.empty()) d.config.sample_rate = d.clips.front().clip.sample_rate;
  return d;
}

SampleSource SampleSource::wav_directory(const std::filesystem::path& dir) {
  SampleSource s;
  s.kind = Kind::kWavDirectory;
  s.directory = dir;
  return s;
}

SampleSource SampleSource::simulated(const SimulatorConfig& sim, const std::vector<double>& levels) {
  SampleSource s;
  s.kind = Kind::kSimulator;
  s.simulator = sim;
  s.levels = levels;
  return s;
}

namespace {

std::optional<double> level_from_dirname(std::string name) {
  if (name.rfind("snr_", 0) == 0) name = name.substr(4);
  try {
    const SnrLabel l = SnrLabel::parse(name);
    if (l.is_noise()) return std::nullopt;
    return l.db();
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::string level_dirname(double db) { return "snr_" + SnrLabel::decibel(db).str() + "dB"; }

}  // namespace

std::vector<SourceLevel> resolve_source(const SampleSource& source, int sample_rate,
                                        std::size_t clip_samples) {
  std::vector<SourceLevel> out;
  if (source.kind == SampleSource::Kind::kSimulator) {
    if (source.levels.empty()) throw UsageError("simulator source has no levels");
    for (std::size_t i = 0; i < source.levels.size(); ++i) {
      SimulatorConfig sim = source.simulator;
      sim.target_db = source.levels[i];
      sim.seed = derive_seed(source.simulator.seed, i, 31);
      SourceLevel level;
      level.target_db = sim.target_db;
      level.clips = simulate_generator(sim);
      for (std::size_t k = 0; k < level.clips.size(); ++k) {
        char name[64];
        std::snprintf(name, sizeof name, "/sim_%05zu.wav", k);
        level.names.push_back(level_dirname(sim.target_db) + name);
      }
      out.push_back(std::move(level));
    }
    return out;
  }

  const auto& dir = source.directory;
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("source directory not found: " + dir.string());
  }
  std::vector<std::pair<double, std::filesystem::path>> level_dirs;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_directory()) continue;
    if (const auto db = level_from_dirname(e.path().filename().string())) {
      level_dirs.emplace_back(*db, e.path());
    }
  }
  if (level_dirs.empty()) {
    // A flat directory named after its level.
    if (const auto db = level_from_dirname(dir.filename().string())) {
      level_dirs.emplace_back(*db, dir);
    }
  }
  std::sort(level_dirs.begin(), level_dirs.end());
  for (const auto& [db, path] : level_dirs) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(path)) {
      if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) continue;
    SourceLevel level;
    level.target_db = db;
    level.clips.resize(files.size());
    parallel_for(files.size(), [&](std::size_t i) { level.clips[i] = read_wav(files[i]); });
    for (std::size_t i = 0; i < files.size(); ++i) {
      const AudioClip& c = level.clips[i];
      if (c.sample_rate != sample_rate) {
        throw DataError(files[i].string() + ": sample rate " + std::to_string(c.sample_rate) +
                        " != " + std::to_string(sample_rate));
      }
      if (c.size() != clip_samples) {
        throw DataError(files[i].string() + ": " + std::to_string(c.size()) +
                        " samples, expected " + std::to_string(clip_samples));
      }
      level.names.push_back(std::filesystem::relative(files[i], dir).generic_string());
    }
    out.push_back(std::move(level));
  }
  if (out.empty()) throw DataError("empty source: no WAV files under " + dir.string());
  return out;
}

void write_source(const std::vector<SourceLevel>& levels, const std::filesystem::path& dir) {
  for (const auto& level : levels) {
    const auto sub = dir / level_dirname(level.target_db);
    std::filesystem::create_directories(sub);
    for (std::size_t i = 0; i < level.clips.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "sim_%05zu.wav", i);
      write_wav(sub / name, level.clips[i]);
    }
  }
}

// ---------------------------------------------------------------------------
// Reports

EvalRecord& EvalReport::record(double snr_db) {
  for (auto& r : records) {
    if (r.snr_db == snr_db) return r;
  }
  EvalRecord r;
  r.snr_db = snr_db;
  records.push_back(r);
  std::sort(records.begin(), records.end(),
            [](const EvalRecord& a, const EvalRecord& b) { return a.snr_db < b.snr_db; });
  for (auto& rec : records) {
    if (rec.snr_db == snr_db) return rec;
  }
  return records.back();
}

const EvalRecord* EvalReport::find(double snr_db) const {
  for (const auto& r : records) {
    if (r.snr_db == snr_db) return &r;
  }
  return nullptr;
}

void merge_reports(EvalReport& into, const EvalReport& f) {
  for (const auto& [k, v] : f.config) into.config[k] = v;
  if (!f.manifest_digest.empty()) into.manifest_digest = f.manifest_digest;
  for (const auto& src : f.records) {
    EvalRecord& dst = into.record(src.snr_db);
    dst.n_samples = std::max(dst.n_samples, src.n_samples);
    const auto take = [](std::optional<double>& d, const std::optional<double>& s) {
      if (s) d = s;
    };
    take(dst.frequency_score, src.frequency_score);
    take(dst.pixel_score, src.pixel_score);
    take(dst.nc_accuracy, src.nc_accuracy);
    take(dst.noise_accuracy, src.noise_accuracy);
    take(dst.rmsde_uniform, src.rmsde_uniform);
    take(dst.rmsde_weighted, src.rmsde_weighted);
    take(dst.mean_predicted_db, src.mean_predicted_db);
    take(dst.test_nc_accuracy, src.test_nc_accuracy);
    take(dst.test_rmsde_weighted, src.test_rmsde_weighted);
    take(dst.final_val_loss, src.final_val_loss);
  }
  into.samples.insert(into.samples.end(), f.samples.begin(), f.samples.end());
  into.losses.insert(into.losses.end(), f.losses.begin(), f.losses.end());
  if (!f.loss_outlier_levels.empty()) into.loss_outlier_levels = f.loss_outlier_levels;
  if (f.elbow) into.elbow = f.elbow;
  if (f.knn_k) into.knn_k = f.knn_k;
  if (f.test_rmsde_weighted) into.test_rmsde_weighted = f.test_rmsde_weighted;
  if (f.test_rmsde_uniform) into.test_rmsde_uniform = f.test_rmsde_uniform;
  if (f.projection_real) into.projection_real = f.projection_real;
  if (f.projection_source) into.projection_source = f.projection_source;
  into.notes.insert(into.notes.end(), f.notes.begin(), f.notes.end());
}

namespace {

ojson opt_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

std::optional<double> opt_from(const ojson& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

ojson projection_json(const Projection2D& p) {
  ojson pts = ojson::array();
  for (const auto& pt : p.points) pts.push_back({pt.x, pt.y});
  ojson j;
  j["points"] = pts;
  j["labels"] = p.labels;
  j["final_kl"] = p.final_kl;
  j["kl_after_exaggeration"] = p.kl_after_exaggeration;
  return j;
}

Projection2D projection_from(const ojson& j) {
  Projection2D p;
  for (const auto& pt : j.at("points")) p.points.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
  p.labels = j.at("labels").get<std::vector<std::string>>();
  p.final_kl = j.at("final_kl").get<double>();
  p.kl_after_exaggeration = j.at("kl_after_exaggeration").get<double>();
  return p;
}

}  // namespace

std::string report_to_json(const EvalReport& r, bool include_timestamp) {
  ojson j;
  j["schema_version"] = r.schema_version;
  ojson meta;
  meta["config"] = r.config;
  meta["manifest_digest"] = r.manifest_digest;
  if (include_timestamp && !r.created_utc.empty()) meta["created_utc"] = r.created_utc;
  j["metadata"] = meta;

  ojson recs = ojson::array();
  for (const auto& rec : r.records) {
    ojson o;
    o["snr_db"] = rec.snr_db;
    o["n_samples"] = rec.n_samples;
    o["frequency_score"] = opt_json(rec.frequency_score);
    o["pixel_score"] = opt_json(rec.pixel_score);
    o["nc_accuracy"] = opt_json(rec.nc_accuracy);
    o["noise_accuracy"] = opt_json(rec.noise_accuracy);
    o["rmsde_uniform"] = opt_json(rec.rmsde_uniform);
    o["rmsde_weighted"] = opt_json(rec.rmsde_weighted);
    o["mean_predicted_db"] = opt_json(rec.mean_predicted_db);
    o["test_nc_accuracy"] = opt_json(rec.test_nc_accuracy);
    o["test_rmsde_weighted"] = opt_json(rec.test_rmsde_weighted);
    o["final_val_loss"] = opt_json(rec.final_val_loss);
    recs.push_back(o);
  }
  j["records"] = recs;

  ojson samples = ojson::array();
  for (const auto& s : r.samples) {
    samples.push_back({{"method", s.method}, {"snr_db", s.snr_db}, {"name", s.name},
                       {"c_whistle", s.c_whistle}, {"c_noise", s.c_noise}, {"score", s.score}});
  }
  j["samples"] = samples;

  ojson losses = ojson::array();
  for (const auto& h : r.losses) {
    ojson eps = ojson::array();
    for (const auto& e : h.epochs) eps.push_back({e.epoch, e.train_loss, e.val_loss});
    losses.push_back({{"model", h.model}, {"epochs", eps}});
  }
  j["losses"] = losses;
  j["loss_outlier_levels"] = r.loss_outlier_levels;

  if (r.elbow) {
    j["elbow"] = {{"ks", r.elbow->ks},
                  {"rmse", r.elbow->rmse},
                  {"r2", r.elbow->r2},
                  {"max_dist", r.elbow->max_dist},
                  {"chosen_k", r.elbow->chosen_k}};
  } else {
    j["elbow"] = nullptr;
  }
  j["knn_k"] = r.knn_k ? ojson(*r.knn_k) : ojson(nullptr);
  j["test_rmsde_weighted"] = opt_json(r.test_rmsde_weighted);
  j["test_rmsde_uniform"] = opt_json(r.test_rmsde_uniform);
  j["projection_real"] = r.projection_real ? projection_json(*r.projection_real) : ojson(nullptr);
  j["projection_source"] =
      r.projection_source ? projection_json(*r.projection_source) : ojson(nullptr);
  j["notes"] = r.notes;
  return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  EvalReport r;
  try {
    const ojson j = ojson::parse(text);
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != kReportSchemaVersion) {
      throw DataError("unsupported report schema version " + std::to_string(r.schema_version));
    }
    const auto& meta = j.at("metadata");
    r.config = meta.at("config").get<std::map<std::string, std::string>>();
    r.manifest_digest = meta.at("manifest_digest").get<std::string>();
    r.created_utc = meta.value("created_utc", "");
    for (const auto& o : j.at("records")) {
      EvalRecord rec;
      rec.snr_db = o.at("snr_db").get<double>();
      rec.n_samples = o.at("n_samples").get<std::size_t>();
      rec.frequency_score = opt_from(o, "frequency_score");
      rec.pixel_score = opt_from(o, "pixel_score");
      rec.nc_accuracy = opt_from(o, "nc_accuracy");
      rec.noise_accuracy = opt_from(o, "noise_accuracy");
      rec.rmsde_uniform = opt_from(o, "rmsde_uniform");
      rec.rmsde_weighted = opt_from(o, "rmsde_weighted");
      rec.mean_predicted_db = opt_from(o, "mean_predicted_db");
      rec.test_nc_accuracy = opt_from(o, "test_nc_accuracy");
      rec.test_rmsde_weighted = opt_from(o, "test_rmsde_weighted");
      rec.final_val_loss = opt_from(o, "final_val_loss");
      r.records.push_back(rec);
    }
    for (const auto& o : j.at("samples")) {
      r.samples.push_back({o.at("method").get<std::string>(), o.at("snr_db").get<double>(),
                           o.at("name").get<std::string>(), o.at("c_whistle").get<double>(),
                           o.at("c_noise").get<double>(), o.at("score").get<int>()});
    }
    for (const auto& o : j.at("losses")) {
      LossHistory h;
      h.model = o.at("model").get<std::string>();
      for (const auto& e : o.at("epochs")) {
        h.epochs.push_back({e.at(0).get<std::size_t>(), e.at(1).get<double>(), e.at(2).get<double>()});
      }
      r.losses.push_back(std::move(h));
    }
    r.loss_outlier_levels = j.at("loss_outlier_levels").get<std::vector<double>>();
    if (!j.at("elbow").is_null()) {
      const auto& e = j.at("elbow");
      ElbowCurves c;
      c.ks = e.at("ks").get<std::vector<std::size_t>>();
      c.rmse = e.at("rmse").get<std::vector<double>>();
      c.r2 = e.at("r2").get<std::vector<double>>();
      c.max_dist = e.at("max_dist").get<std::vector<double>>();
      c.chosen_k = e.at("chosen_k").get<std::size_t>();
      r.elbow = c;
    }
    if (!j.at("knn_k").is_null()) r.knn_k = j.at("knn_k").get<std::size_t>();
    r.test_rmsde_weighted = opt_from(j, "test_rmsde_weighted");
    r.test_rmsde_uniform = opt_from(j, "test_rmsde_uniform");
    if (!j.at("projection_real").is_null()) r.projection_real = projection_from(j.at("projection_real"));
    if (!j.at("projection_source").is_null()) {
      r.projection_source = projection_from(j.at("projection_source"));
    }
    r.notes = j.value("notes", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report JSON: ") + e.what());
  }
  return r;
}

namespace {

std::string cell(const std::optional<double>& v) {
  if (!v) return "";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, *v);
  return std::string(buf, res.ptr);
}

std::string num(double v) { return cell(v); }

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + p.string());
  f << text;
  if (!f) throw DataError("write failed: " + p.string());
}

}  // namespace

void emit_report(const EvalReport& r, const std::filesystem::path& out_dir) {
  if (r.records.empty() && !r.elbow && !r.projection_real && r.losses.empty()) {
    throw UsageError("refusing to emit an empty report");
  }
  if (!std::filesystem::exists(out_dir)) {
    const auto parent = out_dir.has_parent_path() ? out_dir.parent_path() : ".";
    if (!std::filesystem::is_directory(parent)) {
      throw DataError("report directory parent does not exist: " + parent.string());
    }
    std::error_code ec;
    std::filesystem::create_directory(out_dir, ec);
    if (ec) throw DataError("cannot create report directory: " + out_dir.string());
  } else if (!std::filesystem::is_directory(out_dir)) {
    throw DataError("not a directory: " + out_dir.string());
  }

  write_file(out_dir / "report.json", report_to_json(r));

  std::string csv =
      "snr_db,n_samples,frequency_score,pixel_score,nc_accuracy,noise_accuracy,rmsde_uniform,"
      "rmsde_weighted,mean_predicted_db,test_nc_accuracy,test_rmsde_weighted,final_val_loss\n";
  for (const auto& rec : r.records) {
    csv += num(rec.snr_db) + "," + std::to_string(rec.n_samples) + "," + cell(rec.frequency_score) +
           "," + cell(rec.pixel_score) + "," + cell(rec.nc_accuracy) + "," +
           cell(rec.noise_accuracy) + "," + cell(rec.rmsde_uniform) + "," +
           cell(rec.rmsde_weighted) + "," + cell(rec.mean_predicted_db) + "," +
           cell(rec.test_nc_accuracy) + "," + cell(rec.test_rmsde_weighted) + "," +
           cell(rec.final_val_loss) + "\n";
  }
  write_file(out_dir / "scores.csv", csv);

  if (!r.samples.empty()) {
    std::string s = "method,snr_db,path,c_w,c_n,score\n";
    for (const auto& row : r.samples) {
      s += row.method + "," + num(row.snr_db) + "," + row.name + "," + num(row.c_whistle) + "," +
           num(row.c_noise) + "," + std::to_string(row.score) + "\n";
    }
    write_file(out_dir / "samples.csv", s);
  }
  if (r.elbow) {
    std::string s = "k,rmse,r2,max_dist\n";
    for (std::size_t i = 0; i < r.elbow->ks.size(); ++i) {
      s += std::to_string(r.elbow->ks[i]) + "," + num(r.elbow->rmse[i]) + "," +
           num(r.elbow->r2[i]) + "," + num(r.elbow->max_dist[i]) + "\n";
    }
    write_file(out_dir / "elbow.csv", s);
  }
  for (const auto& h : r.losses) {
    write_loss_history(out_dir / ("loss_" + h.model + ".csv"), h.epochs);
  }

  // Figures.
  const auto series_of = [&](const char* name, auto field) {
    LineSeries s;
    s.name = name;
    for (const auto& rec : r.records) {
      if (const auto& v = rec.*field) {
        s.x.push_back(rec.snr_db);
        s.y.push_back(*v);
      }
    }
    return s;
  };
  std::vector<LineSeries> scores;
  for (auto s : {series_of("frequency", &EvalRecord::frequency_score),
                 series_of("pixel", &EvalRecord::pixel_score),
                 series_of("NC accuracy", &EvalRecord::nc_accuracy),
                 series_of("noise accuracy", &EvalRecord::noise_accuracy)}) {
    if (!s.x.empty()) scores.push_back(std::move(s));
  }
  if (!scores.empty()) {
    emit_line_chart(scores, out_dir / "scores_vs_snr.svg", "Scores by SNR", "SNR (dB)", "score");
  }
  std::vector<LineSeries> errs;
  for (auto s : {series_of("RMSDE uniform", &EvalRecord::rmsde_uniform),
                 series_of("RMSDE weighted", &EvalRecord::rmsde_weighted),
                 series_of("test RMSDE weighted", &EvalRecord::test_rmsde_weighted)}) {
    if (!s.x.empty()) errs.push_back(std::move(s));
  }
  if (!errs.empty()) {
    emit_line_chart(errs, out_dir / "rmsde_vs_snr.svg", "RMSDE by SNR", "SNR (dB)", "RMSDE (dB)");
  }
  if (r.elbow) {
    LineSeries s{"RMSE", {}, r.elbow->rmse};
    for (std::size_t k : r.elbow->ks) s.x.push_back(static_cast<double>(k));
    emit_line_chart(std::vector<LineSeries>{s}, out_dir / "elbow_rmse.svg", "KNN RMSE by K", "K",
                    "RMSE (linear SNR)");
  }
  if (r.projection_real) {
    emit_scatter(*r.projection_real, out_dir / "projection_real.svg", "Real embeddings (t-SNE)");
  }
  if (r.projection_source) {
    emit_scatter(*r.projection_source, out_dir / "projection_source.svg",
                 "Candidate embeddings (t-SNE)");
  }
}

std::vector<double> loss_outliers(const std::vector<std::pair<double, double>>& level_losses) {
  if (level_losses.size() < 3) return {};
  const auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  std::vector<double> losses;
  for (const auto& [db, l] : level_losses) losses.push_back(l);
  const double med = median(losses);
  std::vector<double> dev;
  for (double l : losses) dev.push_back(std::abs(l - med));
  const double mad = median(dev);
  std::vector<double> out;
  for (const auto& [db, l] : level_losses) {
    if (std::abs(l - med) > 2.0 * mad && mad > 0.0) out.push_back(db);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Workflows

namespace {

std::vector<const LabeledClip*> select_clips(const Dataset& d, const SnrLabel& label, Split split) {
  std::vector<const LabeledClip*> out;
  for (const auto& c : d.clips) {
    if (c.label == label && c.split == split) out.push_back(&c);
  }
  return out;
}

std::vector<AudioClip> audio_of(const std::vector<const LabeledClip*>& clips, std::size_t limit) {
  std::vector<AudioClip> out;
  for (const auto* c : clips) {
    if (limit != 0 && out.size() >= limit) break;
    out.push_back(c->clip);
  }
  return out;
}

void absorb(std::map<std::string, std::string>& into, const Config& c) {
  for (const auto& [k, v] : c.values()) into[k] = v;
}

void stamp_common(EvalReport& r, const Dataset& d) {
  r.manifest_digest = d.manifest_digest;
  absorb(r.config, d.config.to_config());
}

bool in_grid(const Dataset& d, double db) {
  return std::find(d.config.grid.begin(), d.config.grid.end(), db) != d.config.grid.end();
}

}  // namespace

EvalReport run_spectral_workflow(const Dataset& dataset, const std::vector<SourceLevel>& source,
                                 SpectralMethod method, const SpectralOptions& opts) {
  if (source.empty()) throw DataError("empty source");
  EvalReport report;
  stamp_common(report, dataset);
  const char* name = method == SpectralMethod::kFrequency ? "spectra" : "pixels";
  report.config["method"] = name;
  report.config["fft_size"] = std::to_string(opts.fft_size);
  report.config["stft_window"] = std::to_string(opts.stft.window);
  report.config["stft_hop"] = std::to_string(opts.stft.hop);
  report.config["stft_floor_db"] = format_list({opts.stft.floor_db});

  const auto noise = audio_of(select_clips(dataset, SnrLabel::noise(), Split::kTrain),
                              opts.reference_count);
  if (noise.empty()) throw DataError("dataset has no train-split noise clips");
  for (const auto& level : source) {
    if (level.clips.empty()) throw DataError("empty source level " + SnrLabel::decibel(level.target_db).str());
    if (!in_grid(dataset, level.target_db)) {
      throw DataError("source level " + SnrLabel::decibel(level.target_db).str() +
                      " dB is not in the dataset grid");
    }
    const auto whistles = audio_of(
        select_clips(dataset, SnrLabel::decibel(level.target_db), Split::kTrain), opts.reference_count);
    if (whistles.empty()) throw DataError("no train-split whistles for a source level");
    SnrScore score;
    if (method == SpectralMethod::kFrequency) {
      const auto refs = build_spectrum_references(whistles, noise, opts.fft_size);
      score = evaluate_snr_level(level.clips, refs, SnrLabel::decibel(level.target_db));
    } else {
      const auto refs = build_pid_references(whistles, noise, opts.stft);
      score = evaluate_snr_level(level.clips, refs, SnrLabel::decibel(level.target_db));
    }
    EvalRecord& rec = report.record(level.target_db);
    rec.n_samples = score.n_samples;
    (method == SpectralMethod::kFrequency ? rec.frequency_score : rec.pixel_score) = score.mean_score;
    for (std::size_t i = 0; i < score.samples.size(); ++i) {
      const auto& s = score.samples[i];
      report.samples.push_back({name, level.target_db,
                                i < level.names.size() ? level.names[i] : std::to_string(i),
                                s.c_whistle, s.c_noise, s.score});
    }
  }
  return report;
}

std::vector<GreySpectrogram> prepare_images(std::span<const AudioClip> clips,
                                            const StftConfig& stft, std::size_t rows,
                                            std::size_t cols) {
  std::vector<GreySpectrogram> out(clips.size());
  parallel_for(clips.size(), [&](std::size_t i) {
    out[i] = resize_bilinear(stft_spectrogram(clips[i], stft), rows, cols);
  });
  return out;
}

namespace {

std::vector<GreySpectrogram> images_of(const std::vector<const LabeledClip*>& clips,
                                       const StftConfig& stft, const EmbedderConfig& cfg) {
  std::vector<AudioClip> audio;
  audio.reserve(clips.size());
  for (const auto* c : clips) audio.push_back(c->clip);
  return prepare_images(audio, stft, cfg.input_rows, cfg.input_cols);
}

void append_set(TrainingSet& set, std::vector<GreySpectrogram> images, int label) {
  for (auto& img : images) {
    set.images.push_back(std::move(img));
    set.labels.push_back(label);
  }
}

}  // namespace

IndividualResult run_individual_snn_workflow(const Dataset& dataset,
                                             const std::vector<SourceLevel>& source,
                                             const EmbedderConfig& config,
                                             const IndividualOptions& opts,
                                             const LevelNetworks* pretrained) {
  IndividualResult result;
  EvalReport& report = result.report;
  stamp_common(report, dataset);
  report.config["method"] = "snn-nc";
  absorb(report.config, config.to_config());
  report.config["stop_band_lower"] = format_list({opts.stop_band_lower});
  report.config["stop_band_upper"] = format_list({opts.stop_band_upper});

  EmbedderConfig level_cfg = config;
  level_cfg.early_stop_val_loss = opts.stop_band_upper;

  const SnrLabel noise = SnrLabel::noise();
  const auto noise_images = [&](Split s) {
    return images_of(select_clips(dataset, noise, s), opts.stft, level_cfg);
  };
  const auto noise_train = noise_images(Split::kTrain);
  const auto noise_val = noise_images(Split::kVal);
  const auto noise_test = noise_images(Split::kTest);

  std::vector<std::pair<double, double>> final_losses;
  for (std::size_t li = 0; li < dataset.config.grid.size(); ++li) {
    const double db = dataset.config.grid[li];
    const SnrLabel whistle = SnrLabel::decibel(db);
    EvalRecord& rec = report.record(db);
    const EmbedderNetwork* given = nullptr;
    if (pretrained != nullptr) {
      for (const auto& [level_db, n] : *pretrained) {
        if (level_db == db) given = &n;
      }
    }
    try {
      EmbedderNetwork net;
      if (given != nullptr) {
        net = *given;
      } else {
        TrainingSet train_set, val_set;
        append_set(train_set, noise_train, 0);
        append_set(train_set, images_of(select_clips(dataset, whistle, Split::kTrain), opts.stft, level_cfg), 1);
        append_set(val_set, noise_val, 0);
        append_set(val_set, images_of(select_clips(dataset, whistle, Split::kVal), opts.stft, level_cfg), 1);

        EmbedderConfig cfg = level_cfg;
        cfg.seed = derive_seed(config.seed, li, 41);
        net = EmbedderNetwork(cfg);
        const TrainResult tr = train(net, train_set, val_set);
        LossHistory hist;
        hist.model = whistle.str();
        hist.epochs = tr.history;
        report.losses.push_back(hist);
        if (!tr.history.empty()) {
          rec.final_val_loss = tr.history.back().val_loss;
          final_losses.emplace_back(db, tr.history.back().val_loss);
        }
      }
      const EmbedderConfig& cfg = net.config();

      const auto test_whistles =
          images_of(select_clips(dataset, whistle, Split::kTest), opts.stft, cfg);
      const auto emb_noise = embed_all(net, noise_test);
      const auto emb_whistle = embed_all(net, test_whistles);
      std::vector<Embedding> all = emb_noise;
      all.insert(all.end(), emb_whistle.begin(), emb_whistle.end());
      std::vector<SnrLabel> labels(emb_noise.size(), noise);
      labels.resize(all.size(), whistle);
      const CentroidSet centroids = compute_centroids(all, labels);

      std::vector<SnrLabel> test_pred;
      for (const auto& e : all) test_pred.push_back(nc_predict(centroids, e));
      rec.test_nc_accuracy = label_accuracy(test_pred, labels);

      for (const auto& level : source) {
        if (level.target_db != db) continue;
        const auto imgs = prepare_images(level.clips, opts.stft, cfg.input_rows, cfg.input_cols);
        const auto emb = embed_all(net, imgs);
        std::vector<SnrLabel> pred;
        for (const auto& e : emb) pred.push_back(nc_predict(centroids, e));
        const std::vector<SnrLabel> expected(pred.size(), whistle);
        rec.nc_accuracy = label_accuracy(pred, expected);
        rec.n_samples = pred.size();
      }
      result.networks.emplace_back(db, std::move(net));
    } catch (const NumericError& e) {
      report.notes.push_back("level " + whistle.str() + " dB: " + e.what());
    }
  }
  for (const auto& level : source) {
    if (!in_grid(dataset, level.target_db)) {
      report.notes.push_back("source level " + SnrLabel::decibel(level.target_db).str() +
                             " dB has no per-level network");
    }
  }
  report.loss_outlier_levels = loss_outliers(final_losses);
  return result;
}

namespace {

struct LabelIndex {
  std::vector<SnrLabel> labels;  // ascending, id = position
  int id(const SnrLabel& l) const {
    const auto it = std::lower_bound(labels.begin(), labels.end(), l);
    if (it == labels.end() || !(*it == l)) throw DataError("label not in dataset: " + l.str());
    return static_cast<int>(it - labels.begin());
  }
};

LabelIndex label_index(const Dataset& d) {
  std::set<SnrLabel> s;
  for (const auto& c : d.clips) s.insert(c.label);
  return {std::vector<SnrLabel>(s.begin(), s.end())};
}

struct SplitData {
  std::vector<GreySpectrogram> images;
  std::vector<SnrLabel> labels;
};

SplitData split_data(const Dataset& d, Split split, const StftConfig& stft,
                     const EmbedderConfig& cfg) {
  std::vector<const LabeledClip*> clips;
  for (const auto& c : d.clips) {
    if (c.split == split) clips.push_back(&c);
  }
  SplitData out;
  out.images = images_of(clips, stft, cfg);
  for (const auto* c : clips) out.labels.push_back(c->label);
  return out;
}

TrainingSet to_training_set(SplitData data, const LabelIndex& index) {
  TrainingSet t;
  t.images = std::move(data.images);
  for (const auto& l : data.labels) t.labels.push_back(index.id(l));
  return t;
}

std::vector<double> linear_targets(const std::vector<SnrLabel>& labels) {
  std::vector<double> v;
  for (const auto& l : labels) v.push_back(label_to_linear(l));
  return v;
}

}  // namespace

EmbedderNetwork train_all_levels(const Dataset& dataset, const EmbedderConfig& config,
                                 const StftConfig& stft, TrainResult* history) {
  const LabelIndex index = label_index(dataset);
  const TrainingSet train_set = to_training_set(split_data(dataset, Split::kTrain, stft, config), index);
  const TrainingSet val_set = to_training_set(split_data(dataset, Split::kVal, stft, config), index);
  EmbedderNetwork net(config);
  TrainResult tr = train(net, train_set, val_set);
  if (history != nullptr) *history = std::move(tr);
  return net;
}

ElbowCurves select_k_for(const Dataset& dataset, const EmbedderNetwork& net,
                         const StftConfig& stft, std::size_t k_max, KnnWeighting weighting) {
  const SplitData train = split_data(dataset, Split::kTrain, stft, net.config());
  const SplitData val = split_data(dataset, Split::kVal, stft, net.config());
  const auto ref_emb = embed_all(net, train.images);
  const auto val_emb = embed_all(net, val.images);
  return select_k_elbow(ref_emb, linear_targets(train.labels), val_emb, linear_targets(val.labels),
                        1, k_max, weighting);
}

SingleResult run_single_snn_workflow(const Dataset& dataset,
                                     const std::vector<SourceLevel>& source,
                                     const EmbedderConfig& config, const SingleOptions& opts,
                                     const EmbedderNetwork* pretrained) {
  SingleResult result;
  EvalReport& report = result.report;
  stamp_common(report, dataset);
  report.config["method"] = "snn-knn";
  const EmbedderConfig& net_cfg = pretrained ? pretrained->config() : config;
  absorb(report.config, net_cfg.to_config());

  const LabelIndex index = label_index(dataset);
  SplitData train = split_data(dataset, Split::kTrain, opts.stft, net_cfg);
  SplitData val = split_data(dataset, Split::kVal, opts.stft, net_cfg);
  const SplitData test = split_data(dataset, Split::kTest, opts.stft, net_cfg);

  if (pretrained != nullptr) {
    result.network = *pretrained;
  } else {
    SplitData train_copy = train, val_copy = val;
    const TrainingSet train_set = to_training_set(std::move(train_copy), index);
    const TrainingSet val_set = to_training_set(std::move(val_copy), index);
    result.network = EmbedderNetwork(net_cfg);
    const TrainResult tr = snrge::train(result.network, train_set, val_set);
    report.losses.push_back({"all", tr.history});
  }
  const EmbedderNetwork& net = result.network;

  const auto train_emb = embed_all(net, train.images);
  const auto val_emb = embed_all(net, val.images);
  const auto test_emb = embed_all(net, test.images);
  const auto train_lin = linear_targets(train.labels);

  const CentroidSet centroids = compute_centroids(train_emb, train.labels);
  ElbowCurves curves = select_k_elbow(train_emb, train_lin, val_emb, linear_targets(val.labels), 1,
                                      opts.k_max, opts.elbow_weighting);
  const std::size_t k = opts.knn_k > 0 ? std::min(opts.knn_k, train_emb.size()) : curves.chosen_k;
  report.elbow = std::move(curves);
  report.knn_k = k;
  report.config["knn_k"] = std::to_string(k);
  report.config["k_max"] = std::to_string(opts.k_max);
  report.config["zero_floor_db"] = format_list({opts.zero_floor_db});

  KnnConfig uniform{k, KnnWeighting::kUniform, opts.zero_floor_db};
  KnnConfig weighted{k, KnnWeighting::kInverseDistance, opts.zero_floor_db};
  const auto predict_db = [&](const std::vector<Embedding>& emb, const KnnConfig& cfg) {
    std::vector<double> out(emb.size());
    parallel_for(emb.size(), [&](std::size_t i) {
      out[i] = linear_to_snr_db(knn_predict_snr(train_emb, train_lin, emb[i], cfg), cfg.zero_floor_db);
    });
    return out;
  };

  // Held-out real data, per level and pooled over whistle levels.
  {
    std::vector<double> pooled_pred_w, pooled_pred_u, pooled_actual;
    const auto test_w = predict_db(test_emb, weighted);
    const auto test_u = predict_db(test_emb, uniform);
    for (double db : dataset.config.grid) {
      std::vector<double> pw, actual;
      std::vector<SnrLabel> nc_pred, nc_true;
      for (std::size_t i = 0; i < test.labels.size(); ++i) {
        if (test.labels[i].is_noise() || test.labels[i].db() != db) continue;
        pw.push_back(test_w[i]);
        actual.push_back(db);
        pooled_pred_w.push_back(test_w[i]);
        pooled_pred_u.push_back(test_u[i]);
        pooled_actual.push_back(db);
        nc_pred.push_back(nc_predict(centroids, test_emb[i]));
        nc_true.push_back(test.labels[i]);
      }
      if (pw.empty()) continue;
      EvalRecord& rec = report.record(db);
      rec.test_rmsde_weighted = rmsde(pw, actual);
      rec.test_nc_accuracy = label_accuracy(nc_pred, nc_true);
    }
    if (!pooled_actual.empty()) {
      report.test_rmsde_weighted = rmsde(pooled_pred_w, pooled_actual);
      report.test_rmsde_uniform = rmsde(pooled_pred_u, pooled_actual);
    }
  }

  std::vector<Embedding> source_emb_all;
  std::vector<std::string> source_labels_all;
  for (const auto& level : source) {
    if (level.clips.empty()) throw DataError("empty source level");
    const auto imgs = prepare_images(level.clips, opts.stft, net_cfg.input_rows, net_cfg.input_cols);
    const auto emb = embed_all(net, imgs);
    const SnrLabel target = SnrLabel::decibel(level.target_db);
    std::vector<SnrLabel> nc_pred;
    for (const auto& e : emb) nc_pred.push_back(nc_predict(centroids, e));
    const std::vector<SnrLabel> expected(emb.size(), target);
    const auto pw = predict_db(emb, weighted);
    const auto pu = predict_db(emb, uniform);
    const std::vector<double> actual(emb.size(), level.target_db);
    EvalRecord& rec = report.record(level.target_db);
    rec.n_samples = emb.size();
    rec.nc_accuracy = label_accuracy(nc_pred, expected);
    // Every candidate is meant to contain a whistle.
    const std::unique_ptr<bool[]> is_noise(new bool[emb.size()]());
    rec.noise_accuracy = noise_binary_accuracy(nc_pred, std::span<const bool>(is_noise.get(), emb.size()));
    rec.rmsde_weighted = rmsde(pw, actual);
    rec.rmsde_uniform = rmsde(pu, actual);
    double mean = 0.0;
    for (double v : pw) mean += v;
    rec.mean_predicted_db = mean / static_cast<double>(pw.size());
    for (std::size_t i = 0; i < emb.size(); ++i) {
      source_emb_all.push_back(emb[i]);
      source_labels_all.push_back(target.str());
    }
  }

  if (opts.project) {
    report.config["tsne_perplexity"] = format_list({opts.tsne.perplexity});
    report.config["tsne_iterations"] = std::to_string(opts.tsne.iterations);
    report.config["tsne_cap_per_label"] = std::to_string(opts.tsne_cap_per_label);
    const auto project = [&](const std::vector<Embedding>& emb, const std::vector<std::string>& labels)
        -> std::optional<Projection2D> {
      const auto keep = subsample_per_label(labels, opts.tsne_cap_per_label, opts.tsne.seed);
      std::vector<Embedding> e;
      std::vector<std::string> l;
      for (std::size_t i : keep) {
        e.push_back(emb[i]);
        l.push_back(labels[i]);
      }
      if (e.size() > kTsneMaxPoints) {
        e.resize(kTsneMaxPoints);
        l.resize(kTsneMaxPoints);
      }
      if (e.size() < 4 || !(3.0 * opts.tsne.perplexity < static_cast<double>(e.size()))) {
        report.notes.push_back("skipped t-SNE projection: " + std::to_string(e.size()) +
                               " points is too few for perplexity " +
                               format_list({opts.tsne.perplexity}));
        return std::nullopt;
      }
      return tsne_project(e, l, opts.tsne);
    };
    std::vector<std::string> test_labels;
    for (const auto& l : test.labels) test_labels.push_back(l.str());
    report.projection_real = project(test_emb, test_labels);
    if (!source_emb_all.empty()) report.projection_source = project(source_emb_all, source_labels_all);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Options from configuration

namespace {

StftConfig stft_from(const Config& c) {
  StftConfig s;
  s.window = static_cast<std::size_t>(c.get_int("stft_window", static_cast<long>(s.window)));
  s.hop = static_cast<std::size_t>(c.get_int("stft_hop", static_cast<long>(s.hop)));
  s.floor_db = c.get_double("stft_floor_db", s.floor_db);
  return s;
}

KnnWeighting weighting_from(const std::string& s) {
  if (s == "uniform") return KnnWeighting::kUniform;
  if (s == "inverse_distance" || s == "weighted") return KnnWeighting::kInverseDistance;
  throw UsageError("unknown KNN weighting '" + s + "'");
}

}  // namespace

SpectralOptions spectral_options(const Config& c) {
  SpectralOptions o;
  o.fft_size = static_cast<std::size_t>(c.get_int("fft_size", static_cast<long>(o.fft_size)));
  o.stft = stft_from(c);
  o.reference_count = static_cast<std::size_t>(c.get_int("reference_count", 0));
  return o;
}

IndividualOptions individual_options(const Config& c) {
  IndividualOptions o;
  o.stft = stft_from(c);
  o.stop_band_lower = c.get_double("stop_band_lower", o.stop_band_lower);
  o.stop_band_upper = c.get_double("stop_band_upper", o.stop_band_upper);
  if (!(o.stop_band_upper > 0.0) || o.stop_band_lower > o.stop_band_upper) {
    throw UsageError("stop band must satisfy 0 <= lower <= upper, upper > 0");
  }
  return o;
}

SingleOptions single_options(const Config& c) {
  SingleOptions o;
  o.stft = stft_from(c);
  o.knn_k = static_cast<std::size_t>(c.get_int("knn_k", 0));
  o.k_max = static_cast<std::size_t>(c.get_int("k_max", static_cast<long>(o.k_max)));
  o.elbow_weighting = weighting_from(c.get_string("knn_weighting", "inverse_distance"));
  o.zero_floor_db = c.get_double("zero_floor_db", o.zero_floor_db);
  o.project = c.get_bool("project", o.project);
  o.tsne.perplexity = c.get_double("tsne_perplexity", o.tsne.perplexity);
  o.tsne.iterations = static_cast<std::size_t>(c.get_int("tsne_iterations", static_cast<long>(o.tsne.iterations)));
  o.tsne.learning_rate = c.get_double("tsne_learning_rate", o.tsne.learning_rate);
  o.tsne.seed = static_cast<std::uint64_t>(c.get_int("tsne_seed", 1));
  o.tsne_cap_per_label = static_cast<std::size_t>(c.get_int("tsne_cap", static_cast<long>(o.tsne_cap_per_label)));
  return o;
}

SimulatorConfig simulator_config(const Config& c, const DatasetConfig& d) {
  SimulatorConfig s;
  s.snr_bias_db = c.get_double("sim_bias", 0.0);
  const std::string q = c.get_string("sim_quality", "clean");
  if (q == "clean") {
    s.quality = GeneratorQuality::kClean;
  } else if (q == "degraded") {
    s.quality = GeneratorQuality::kDegraded;
  } else {
    throw UsageError("sim_quality must be clean|degraded");
  }
  const long count = c.get_int("eval_count", 200);
  if (count < 1) throw UsageError("eval_count must be >= 1");
  s.count = static_cast<std::size_t>(count);
  s.seed = static_cast<std::uint64_t>(c.get_int("sim_seed", 7));
  s.ranges = d.ranges;
  s.noise_kind = d.noise_kind;
  s.sample_rate = d.sample_rate;
  s.clip_len = d.clip_len;
  return s;
}

EmbedderConfig embedder_config(const Config& c) { return EmbedderConfig::from_config(c); }

}  // namespace snrge
