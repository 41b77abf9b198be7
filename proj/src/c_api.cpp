#include "snrge/snrge.h"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <memory>
#include <sstream>

#include "snrge/harness.hpp"

struct snrge_config {
  snrge::Config cfg;
};
struct snrge_clip {
  snrge::AudioClip clip;
};
struct snrge_dataset {
  snrge::Dataset ds;
};
struct snrge_embedder {
  snrge::EmbedderNetwork net;
};
struct snrge_report {
  snrge::EvalReport report;
};

namespace {

thread_local std::string g_last_error;

snrge_status fail(snrge_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <class F>
snrge_status guard(F&& body) {
  try {
    body();
    g_last_error.clear();
    return SNRGE_OK;
  } catch (const snrge::Error& e) {
    return fail(static_cast<snrge_status>(static_cast<int>(e.kind())), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(SNRGE_E_DATA, e.what());
  } catch (const std::bad_alloc&) {
    return fail(SNRGE_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SNRGE_E_INTERNAL, e.what());
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw snrge::UsageError(std::string("null argument: ") + what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

const snrge::Config& config_or_empty(const snrge_config* c) {
  static const snrge::Config empty;
  return c != nullptr ? c->cfg : empty;
}

std::size_t clip_samples(const snrge::DatasetConfig& d) {
  return static_cast<std::size_t>(std::llround(d.clip_len * d.sample_rate));
}

std::vector<snrge::SourceLevel> source_levels(const snrge::Dataset& ds, const snrge::Config& cfg,
                                              const char* source_dir) {
  snrge::SampleSource src;
  if (source_dir != nullptr) {
    src = snrge::SampleSource::wav_directory(source_dir);
  } else {
    src = snrge::SampleSource::simulated(snrge::simulator_config(cfg, ds.config),
                                         cfg.get_list("eval_levels", ds.config.grid));
  }
  return snrge::resolve_source(src, ds.config.sample_rate, clip_samples(ds.config));
}

// Every run records its resolved settings.
void note_source(snrge::EvalReport& r, const snrge::Config& cfg, const char* source_dir) {
  for (const auto& [k, v] : cfg.values()) r.config.emplace(k, v);  // resolved values win
  r.config["source"] = source_dir != nullptr ? source_dir : "simulator";
}

std::string level_model_name(double db) {
  return "level_" + snrge::SnrLabel::decibel(db).str() + ".snrm";
}

}  // namespace

extern "C" {

const char* snrge_version(void) { return "0.1.0"; }
const char* snrge_last_error(void) { return g_last_error.c_str(); }
void snrge_string_free(char* s) { std::free(s); }

snrge_status snrge_config_new(snrge_config** out) {
  return guard([&] {
    require(out, "out");
    *out = new snrge_config{};
  });
}

snrge_status snrge_config_load(const char* path, snrge_config** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new snrge_config{snrge::Config::load(path)};
  });
}

snrge_status snrge_config_set(snrge_config* cfg, const char* key, const char* value) {
  return guard([&] {
    require(cfg, "cfg");
    require(key, "key");
    require(value, "value");
    if (*key == '\0') throw snrge::UsageError("empty configuration key");
    cfg->cfg.set(key, value);
  });
}

snrge_status snrge_config_assign(snrge_config* cfg, const char* assignment) {
  return guard([&] {
    require(cfg, "cfg");
    require(assignment, "assignment");
    const snrge::Config parsed = snrge::Config::parse(assignment);
    if (parsed.values().empty()) {
      throw snrge::UsageError(std::string("expected key=value, got '") + assignment + "'");
    }
    cfg->cfg.merge(parsed);
  });
}

snrge_status snrge_config_get(const snrge_config* cfg, const char* key, char** out) {
  return guard([&] {
    require(cfg, "cfg");
    require(key, "key");
    require(out, "out");
    if (!cfg->cfg.has(key)) throw snrge::UsageError(std::string("no such key: ") + key);
    *out = dup_string(cfg->cfg.get_string(key, ""));
  });
}

snrge_status snrge_config_to_string(const snrge_config* cfg, char** out) {
  return guard([&] {
    require(cfg, "cfg");
    require(out, "out");
    *out = dup_string(cfg->cfg.to_string());
  });
}

void snrge_config_free(snrge_config* cfg) { delete cfg; }

snrge_status snrge_clip_new(const double* samples, size_t n, int sample_rate, snrge_clip** out) {
  return guard([&] {
    require(out, "out");
    if (n > 0) require(samples, "samples");
    if (sample_rate <= 0) throw snrge::UsageError("sample rate must be positive");
    auto c = std::make_unique<snrge_clip>();
    c->clip.samples.assign(samples, samples + n);
    c->clip.sample_rate = sample_rate;
    *out = c.release();
  });
}

snrge_status snrge_clip_read(const char* path, snrge_clip** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new snrge_clip{snrge::read_wav(path)};
  });
}

snrge_status snrge_clip_write(const snrge_clip* clip, const char* path) {
  return guard([&] {
    require(clip, "clip");
    require(path, "path");
    snrge::write_wav(path, clip->clip);
  });
}

size_t snrge_clip_length(const snrge_clip* clip) { return clip ? clip->clip.size() : 0; }
int snrge_clip_sample_rate(const snrge_clip* clip) { return clip ? clip->clip.sample_rate : 0; }
const double* snrge_clip_samples(const snrge_clip* clip) {
  return clip ? clip->clip.samples.data() : nullptr;
}
void snrge_clip_free(snrge_clip* clip) { delete clip; }

snrge_status snrge_rms(const double* x, size_t n, double* out) {
  return guard([&] {
    require(out, "out");
    if (n > 0) require(x, "x");
    *out = snrge::rms(std::span<const double>(x, n));
  });
}

snrge_status snrge_mix_beta(double signal_rms, double noise_rms, double snr_db, double* out) {
  return guard([&] {
    require(out, "out");
    *out = snrge::compute_beta(signal_rms, noise_rms, snrge::snr_db_to_linear(snr_db));
  });
}

snrge_status snrge_db_to_linear(double db, double* out) {
  return guard([&] {
    require(out, "out");
    *out = snrge::snr_db_to_linear(db);
  });
}

snrge_status snrge_linear_to_db(double ratio, double floor_db, double* out) {
  return guard([&] {
    require(out, "out");
    *out = snrge::linear_to_snr_db(ratio, floor_db);
  });
}

snrge_status snrge_pearson(const double* x, const double* y, size_t n, double* out) {
  return guard([&] {
    require(x, "x");
    require(y, "y");
    require(out, "out");
    *out = snrge::pearson(std::span<const double>(x, n), std::span<const double>(y, n));
  });
}

snrge_status snrge_dataset_generate(const snrge_config* cfg, const char* out_dir) {
  return guard([&] {
    require(out_dir, "out_dir");
    snrge::build_dataset(snrge::DatasetConfig::from_config(config_or_empty(cfg)), out_dir);
  });
}

snrge_status snrge_dataset_synthesize(const snrge_config* cfg, snrge_dataset** out) {
  return guard([&] {
    require(out, "out");
    *out = new snrge_dataset{
        snrge::make_dataset(snrge::DatasetConfig::from_config(config_or_empty(cfg)))};
  });
}

snrge_status snrge_dataset_open(const char* dir, snrge_dataset** out) {
  return guard([&] {
    require(dir, "dir");
    require(out, "out");
    *out = new snrge_dataset{snrge::open_dataset(dir)};
  });
}

size_t snrge_dataset_size(const snrge_dataset* ds) { return ds ? ds->ds.clips.size() : 0; }

snrge_status snrge_dataset_digest(const snrge_dataset* ds, char** out) {
  return guard([&] {
    require(ds, "ds");
    require(out, "out");
    *out = dup_string(ds->ds.manifest_digest);
  });
}

void snrge_dataset_free(snrge_dataset* ds) { delete ds; }

snrge_status snrge_simulate(const snrge_dataset* ds, const snrge_config* cfg, const char* out_dir) {
  return guard([&] {
    require(ds, "ds");
    require(out_dir, "out_dir");
    snrge::write_source(source_levels(ds->ds, config_or_empty(cfg), nullptr), out_dir);
  });
}

snrge_status snrge_embedder_train_all(const snrge_dataset* ds, const snrge_config* cfg,
                                      snrge_embedder** out, snrge_report** history) {
  return guard([&] {
    require(ds, "ds");
    require(out, "out");
    const snrge::Config& c = config_or_empty(cfg);
    snrge::TrainResult tr;
    auto e = std::make_unique<snrge_embedder>();
    e->net = snrge::train_all_levels(ds->ds, snrge::embedder_config(c),
                                     snrge::single_options(c).stft, &tr);
    if (history != nullptr) {
      auto r = std::make_unique<snrge_report>();
      r->report.manifest_digest = ds->ds.manifest_digest;
      const snrge::Config net_cfg = e->net.config().to_config();
      for (const auto& [k, v] : net_cfg.values()) r->report.config[k] = v;
      r->report.losses.push_back({"all", tr.history});
      if (tr.skipped_steps > 0) {
        r->report.notes.push_back(std::to_string(tr.skipped_steps) +
                                  " optimizer steps skipped (non-finite gradient)");
      }
      *history = r.release();
    }
    *out = e.release();
  });
}

snrge_status snrge_embedder_train_per_snr(const snrge_dataset* ds, const snrge_config* cfg,
                                          const char* model_dir, snrge_report** history) {
  return guard([&] {
    require(ds, "ds");
    require(model_dir, "model_dir");
    const snrge::Config& c = config_or_empty(cfg);
    // Training happens inside the workflow; no candidate source is needed.
    snrge::IndividualResult res = snrge::run_individual_snn_workflow(
        ds->ds, {}, snrge::embedder_config(c), snrge::individual_options(c));
    std::filesystem::create_directories(model_dir);
    for (const auto& [db, net] : res.networks) {
      snrge::save_checkpoint(net, std::filesystem::path(model_dir) / level_model_name(db));
    }
    if (history != nullptr) *history = new snrge_report{std::move(res.report)};
  });
}

snrge_status snrge_embedder_save(const snrge_embedder* e, const char* path) {
  return guard([&] {
    require(e, "embedder");
    require(path, "path");
    snrge::save_checkpoint(e->net, path);
  });
}

snrge_status snrge_embedder_load(const char* path, snrge_embedder** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new snrge_embedder{snrge::load_checkpoint(path)};
  });
}

size_t snrge_embedder_dim(const snrge_embedder* e) {
  return e ? e->net.config().embedding_dim : 0;
}

snrge_status snrge_embedder_embed(const snrge_embedder* e, const snrge_clip* clip,
                                  const snrge_config* cfg, double* out) {
  return guard([&] {
    require(e, "embedder");
    require(clip, "clip");
    require(out, "out");
    const auto& nc = e->net.config();
    const auto imgs = snrge::prepare_images(std::span<const snrge::AudioClip>(&clip->clip, 1),
                                            snrge::single_options(config_or_empty(cfg)).stft,
                                            nc.input_rows, nc.input_cols);
    const auto emb = snrge::forward_embed(e->net, imgs.front());
    std::copy(emb.begin(), emb.end(), out);
  });
}

void snrge_embedder_free(snrge_embedder* e) { delete e; }

snrge_status snrge_evaluate(const snrge_dataset* ds, const snrge_config* cfg, snrge_method method,
                            const char* source_dir, const char* model, snrge_report** out) {
  return guard([&] {
    require(ds, "ds");
    require(out, "out");
    const snrge::Config& c = config_or_empty(cfg);
    const auto source = source_levels(ds->ds, c, source_dir);
    snrge::EvalReport report;
    switch (method) {
      case SNRGE_METHOD_SPECTRA:
      case SNRGE_METHOD_PIXELS:
        report = snrge::run_spectral_workflow(
            ds->ds, source,
            method == SNRGE_METHOD_SPECTRA ? snrge::SpectralMethod::kFrequency
                                           : snrge::SpectralMethod::kPixels,
            snrge::spectral_options(c));
        break;
      case SNRGE_METHOD_SNN_NC: {
        snrge::LevelNetworks nets;
        if (model != nullptr) {
          for (double db : ds->ds.config.grid) {
            const auto p = std::filesystem::path(model) / level_model_name(db);
            if (std::filesystem::exists(p)) nets.emplace_back(db, snrge::load_checkpoint(p));
          }
          if (nets.empty()) throw snrge::DataError(std::string("no per-level models in ") + model);
        }
        report = snrge::run_individual_snn_workflow(ds->ds, source, snrge::embedder_config(c),
                                                    snrge::individual_options(c),
                                                    model != nullptr ? &nets : nullptr)
                     .report;
        break;
      }
      case SNRGE_METHOD_SNN_KNN: {
        std::optional<snrge::EmbedderNetwork> pre;
        if (model != nullptr) pre = snrge::load_checkpoint(model);
        report = snrge::run_single_snn_workflow(ds->ds, source, snrge::embedder_config(c),
                                                snrge::single_options(c), pre ? &*pre : nullptr)
                     .report;
        break;
      }
      default:
        throw snrge::UsageError("unknown evaluation method");
    }
    note_source(report, c, source_dir);
    report.created_utc = utc_now();
    *out = new snrge_report{std::move(report)};
  });
}

snrge_status snrge_select_k(const snrge_dataset* ds, const snrge_embedder* e,
                            const snrge_config* cfg, snrge_report** out) {
  return guard([&] {
    require(ds, "ds");
    require(e, "embedder");
    require(out, "out");
    const snrge::SingleOptions o = snrge::single_options(config_or_empty(cfg));
    auto r = std::make_unique<snrge_report>();
    r->report.manifest_digest = ds->ds.manifest_digest;
    r->report.elbow = snrge::select_k_for(ds->ds, e->net, o.stft, o.k_max, o.elbow_weighting);
    r->report.knn_k = r->report.elbow->chosen_k;
    r->report.config["k_max"] = std::to_string(o.k_max);
    r->report.config["knn_k"] = std::to_string(r->report.elbow->chosen_k);
    r->report.created_utc = utc_now();
    *out = r.release();
  });
}

snrge_status snrge_project(const snrge_dataset* ds, const snrge_embedder* e,
                           const snrge_config* cfg, const char* source_dir, snrge_report** out) {
  return guard([&] {
    require(ds, "ds");
    require(e, "embedder");
    require(out, "out");
    const snrge::Config& c = config_or_empty(cfg);
    snrge::SingleOptions o = snrge::single_options(c);
    o.project = true;
    const auto source = source_levels(ds->ds, c, source_dir);
    snrge::EvalReport full =
        snrge::run_single_snn_workflow(ds->ds, source, e->net.config(), o, &e->net).report;
    if (!full.projection_real && !full.projection_source) {
      throw snrge::UsageError("nothing to project: t-SNE needs at least 4 points and more than "
                              "3 * tsne_perplexity of them");
    }
    auto r = std::make_unique<snrge_report>();
    r->report.manifest_digest = full.manifest_digest;
    for (const auto& [k, v] : full.config) {
      if (k.rfind("tsne_", 0) == 0) r->report.config[k] = v;
    }
    r->report.projection_real = std::move(full.projection_real);
    r->report.projection_source = std::move(full.projection_source);
    r->report.notes = std::move(full.notes);
    r->report.created_utc = utc_now();
    *out = r.release();
  });
}

snrge_status snrge_report_new(snrge_report** out) {
  return guard([&] {
    require(out, "out");
    *out = new snrge_report{};
  });
}

snrge_status snrge_report_load(const char* path, snrge_report** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    std::filesystem::path p(path);
    if (std::filesystem::is_directory(p)) p /= "report.json";
    std::ifstream in(p, std::ios::binary);
    if (!in) throw snrge::DataError("cannot open report " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    *out = new snrge_report{snrge::report_from_json(ss.str())};
  });
}

snrge_status snrge_report_merge(snrge_report* into, const snrge_report* fragment) {
  return guard([&] {
    require(into, "into");
    require(fragment, "fragment");
    if (!into->report.manifest_digest.empty() && !fragment->report.manifest_digest.empty() &&
        into->report.manifest_digest != fragment->report.manifest_digest) {
      throw snrge::DataError("report fragments come from different datasets");
    }
    snrge::merge_reports(into->report, fragment->report);
    if (into->report.created_utc < fragment->report.created_utc) {
      into->report.created_utc = fragment->report.created_utc;
    }
  });
}

snrge_status snrge_report_to_json(const snrge_report* r, int include_timestamp, char** out) {
  return guard([&] {
    require(r, "report");
    require(out, "out");
    *out = dup_string(snrge::report_to_json(r->report, include_timestamp != 0));
  });
}

snrge_status snrge_report_write(const snrge_report* r, const char* out_dir) {
  return guard([&] {
    require(r, "report");
    require(out_dir, "out_dir");
    snrge::emit_report(r->report, out_dir);
  });
}

void snrge_report_free(snrge_report* r) { delete r; }

}  // extern "C"
