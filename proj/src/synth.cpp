#include "snrge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>

#include <json.hpp>

#include "snrge/dsp.hpp"
#include "snrge/parallel.hpp"
#include "snrge/rng.hpp"

namespace snrge {
namespace {

std::size_t clip_samples(double clip_len, int sample_rate) {
  if (!(clip_len > 0.0)) throw UsageError("clip length must be positive");
  if (sample_rate <= 0) throw UsageError("sample rate must be positive");
  return static_cast<std::size_t>(std::llround(clip_len * sample_rate));
}

void scale_in_place(AudioClip& clip, double k) {
  for (double& s : clip.samples) s *= k;
}

double peak_abs(const AudioClip& clip) {
  double p = 0.0;
  for (double s : clip.samples) p = std::max(p, std::abs(s));
  return p;
}

std::string level_dir(const SnrLabel& label) {
  return label.is_noise() ? "noise" : "snr_" + label.str() + "dB";
}

}  // namespace

NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "pink") return NoiseKind::kPink;
  if (s == "white") return NoiseKind::kWhite;
  throw UsageError("unknown noise kind '" + s + "' (expected pink|white)");
}

std::string to_string(NoiseKind k) { return k == NoiseKind::kPink ? "pink" : "white"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw UsageError("unknown split '" + s + "'");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

SplitCounts split_counts(std::size_t n, const SplitRatio& ratio) {
  if (ratio.train < 0 || ratio.val < 0 || ratio.test < 0 ||
      std::abs(ratio.train + ratio.val + ratio.test - 1.0) > 1e-9) {
    throw UsageError("split ratio must be non-negative and sum to 1");
  }
  SplitCounts c;
  c.train = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(n * ratio.train)));
  c.val = std::min<std::size_t>(n - c.train,
                                static_cast<std::size_t>(std::llround(n * ratio.val)));
  c.test = n - c.train - c.val;
  return c;
}

AudioClip gen_whistle(const WhistleSpec& spec, double clip_len, int sample_rate) {
  const std::size_t n = clip_samples(clip_len, sample_rate);
  const double nyquist = sample_rate / 2.0;
  if (!(spec.f_start > 0.0) || !(spec.f_end > spec.f_start)) {
    throw UsageError("whistle must be an upsweep with 0 < f_start < f_end");
  }
  if (spec.f_end > nyquist) throw UsageError("whistle f_end above Nyquist");
  if (!(spec.duration > 0.0) || spec.onset < 0.0 ||
      spec.onset + spec.duration > clip_len + 1e-12) {
    throw UsageError("whistle duration exceeds clip");
  }
  if (!(spec.amplitude > 0.0) || spec.amplitude > 1.0) {
    throw UsageError("whistle amplitude must be in (0, 1]");
  }

  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.assign(n, 0.0);
  const double sweep_rate = (spec.f_end - spec.f_start) / spec.duration;
  const double fade = std::min(kFadeSeconds, spec.duration / 2.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double tau = static_cast<double>(i) / sample_rate - spec.onset;
    if (tau < 0.0 || tau > spec.duration) continue;
    double env = 1.0;
    if (tau < fade) {
      env = 0.5 - 0.5 * std::cos(std::numbers::pi * tau / fade);
    } else if (spec.duration - tau < fade) {
      env = 0.5 - 0.5 * std::cos(std::numbers::pi * (spec.duration - tau) / fade);
    }
    const double phase =
        2.0 * std::numbers::pi * (spec.f_start * tau + 0.5 * sweep_rate * tau * tau);
    clip.samples[i] = spec.amplitude * env * std::sin(phase);
  }
  return clip;
}

WhistleSpec draw_whistle(const WhistleRanges& r, double clip_len, int sample_rate,
                         std::uint64_t seed) {
  Rng rng(seed);
  WhistleSpec spec;
  spec.f_start = rng.uniform(r.f_start_min, r.f_start_max);
  spec.f_end = std::min(spec.f_start + rng.uniform(r.bandwidth_min, r.bandwidth_max),
                        sample_rate / 2.0);
  spec.duration = std::min(rng.uniform(r.duration_min, r.duration_max), clip_len);
  spec.onset = rng.uniform(0.0, clip_len - spec.duration);
  spec.amplitude = r.amplitude;
  return spec;
}

AudioClip gen_noise(NoiseKind kind, double clip_len, int sample_rate, std::uint64_t seed) {
  const std::size_t n = clip_samples(clip_len, sample_rate);
  Rng rng(seed);
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(n);
  if (kind == NoiseKind::kWhite) {
    for (double& s : clip.samples) s = kNoiseRms * rng.normal();
    return clip;
  }

  std::size_t m = 1;
  while (m < n) m <<= 1;
  std::vector<std::complex<double>> buf(m);
  for (auto& v : buf) v = rng.normal();
  fft_inplace(buf);
  const double df = static_cast<double>(sample_rate) / static_cast<double>(m);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t kk = std::min(k, m - k);
    const double f = static_cast<double>(kk) * df;
    buf[k] *= f >= kPinkLowCutHz ? 1.0 / std::sqrt(f) : 0.0;
  }
  fft_inplace(buf, /*inverse=*/true);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += buf[i].real();
  mean /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) clip.samples[i] = buf[i].real() - mean;
  scale_in_place(clip, kNoiseRms / rms(clip));
  return clip;
}

double compute_beta(double a_s, double a_n, double snr_linear) {
  if (!(a_n > 0.0)) throw UsageError("compute_beta: noise amplitude must be positive");
  if (!(snr_linear > 0.0)) throw UsageError("compute_beta: SNR ratio must be positive");
  if (a_s < 0.0) throw UsageError("compute_beta: negative signal amplitude");
  return a_s / (a_n * std::sqrt(snr_linear));
}

Mixture mix_components(const AudioClip& signal, const AudioClip& noise, double snr_db,
                       bool normalize) {
  if (signal.size() != noise.size() || signal.sample_rate != noise.sample_rate) {
    throw UsageError("mix: signal and noise differ in length or rate");
  }
  if (signal.empty()) throw UsageError("mix: empty clips");
  if (!std::isfinite(snr_db)) throw UsageError("mix: SNR must be finite");
  const double a_s = rms(signal);
  const double a_n = rms(noise);
  if (a_s == 0.0) throw UsageError("mix: silent signal");
  if (a_n == 0.0) throw UsageError("mix: silent noise");

  Mixture m;
  m.beta = compute_beta(a_s, a_n, std::pow(10.0, snr_db / 10.0));
  m.signal = signal;
  m.noise = noise;
  scale_in_place(m.noise, m.beta);
  m.mixed.sample_rate = signal.sample_rate;
  m.mixed.samples.resize(signal.size());
  for (std::size_t i = 0; i < signal.size(); ++i) {
    m.mixed.samples[i] = m.signal.samples[i] + m.noise.samples[i];
  }
  if (normalize) {
    const double peak = peak_abs(m.mixed);
    if (peak > 0.0) {
      m.gain = kMixPeak / peak;
      scale_in_place(m.signal, m.gain);
      scale_in_place(m.noise, m.gain);
      // Re-sum so the stored components add up to the mixture exactly.
      for (std::size_t i = 0; i < signal.size(); ++i) {
        m.mixed.samples[i] = m.signal.samples[i] + m.noise.samples[i];
      }
    }
  }
  return m;
}

AudioClip mix_at_snr(const AudioClip& signal, const AudioClip& noise, const SnrLabel& snr,
                     bool normalize) {
  if (snr.is_noise()) throw UsageError("mix_at_snr needs a decibel label");
  return mix_components(signal, noise, snr.db(), normalize).mixed;
}

double component_snr_db(const AudioClip& signal, const AudioClip& noise) {
  const double ps = rms(signal), pn = rms(noise);
  return 10.0 * std::log10((ps * ps) / (pn * pn));
}

// ---------------------------------------------------------------------------

DatasetConfig DatasetConfig::from_config(const Config& c) {
  DatasetConfig d;
  d.grid = c.get_list("grid", d.grid);
  d.clips_per_level = static_cast<std::size_t>(c.get_int("clips_per_level", 500));
  d.noise_clips = static_cast<std::size_t>(
      c.get_int("noise_clips", static_cast<long>(d.clips_per_level)));
  d.ranges.f_start_min = c.get_double("f_start_min", d.ranges.f_start_min);
  d.ranges.f_start_max = c.get_double("f_start_max", d.ranges.f_start_max);
  d.ranges.bandwidth_min = c.get_double("bandwidth_min", d.ranges.bandwidth_min);
  d.ranges.bandwidth_max = c.get_double("bandwidth_max", d.ranges.bandwidth_max);
  d.ranges.duration_min = c.get_double("duration_min", d.ranges.duration_min);
  d.ranges.duration_max = c.get_double("duration_max", d.ranges.duration_max);
  d.ranges.amplitude = c.get_double("amplitude", d.ranges.amplitude);
  d.noise_kind = parse_noise_kind(c.get_string("noise_kind", "pink"));
  d.split.train = c.get_double("split_train", d.split.train);
  d.split.val = c.get_double("split_val", d.split.val);
  d.split.test = c.get_double("split_test", d.split.test);
  d.seed = static_cast<std::uint64_t>(c.get_int("seed", 1));
  d.sample_rate = static_cast<int>(c.get_int("sample_rate", d.sample_rate));
  d.clip_len = c.get_double("clip_len", d.clip_len);
  d.noise_dir = c.get_string("noise_dir", "");
  if (d.grid.empty()) throw UsageError("dataset grid is empty");
  if (d.clips_per_level < 1) throw UsageError("clips_per_level must be >= 1");
  return d;
}

Config DatasetConfig::to_config() const {
  Config c;
  c.set("grid", format_list(grid));
  c.set("clips_per_level", std::to_string(clips_per_level));
  c.set("noise_clips", std::to_string(noise_clips));
  c.set("f_start_min", format_list({ranges.f_start_min}));
  c.set("f_start_max", format_list({ranges.f_start_max}));
  c.set("bandwidth_min", format_list({ranges.bandwidth_min}));
  c.set("bandwidth_max", format_list({ranges.bandwidth_max}));
  c.set("duration_min", format_list({ranges.duration_min}));
  c.set("duration_max", format_list({ranges.duration_max}));
  c.set("amplitude", format_list({ranges.amplitude}));
  c.set("noise_kind", to_string(noise_kind));
  c.set("split_train", format_list({split.train}));
  c.set("split_val", format_list({split.val}));
  c.set("split_test", format_list({split.test}));
  c.set("seed", std::to_string(seed));
  c.set("sample_rate", std::to_string(sample_rate));
  c.set("clip_len", format_list({clip_len}));
  if (!noise_dir.empty()) c.set("noise_dir", noise_dir.string());
  return c;
}

DatasetManifest plan_dataset(const DatasetConfig& cfg) {
  if (cfg.grid.empty()) throw UsageError("dataset grid is empty");
  if (cfg.clips_per_level < 1) throw UsageError("clips_per_level must be >= 1");
  for (std::size_t i = 0; i < cfg.grid.size(); ++i) {
    for (std::size_t j = i + 1; j < cfg.grid.size(); ++j) {
      if (cfg.grid[i] == cfg.grid[j]) throw UsageError("dataset grid has duplicate levels");
    }
  }
  DatasetManifest m;
  m.grid = cfg.grid;
  m.clips_per_level = cfg.clips_per_level;

  std::vector<std::pair<SnrLabel, std::size_t>> classes;
  for (double db : cfg.grid) classes.emplace_back(SnrLabel::decibel(db), cfg.clips_per_level);
  if (cfg.noise_clips > 0) classes.emplace_back(SnrLabel::noise(), cfg.noise_clips);

  std::uint64_t global = 0;
  char name[64];
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto& [label, count] = classes[c];
    const SplitCounts counts = split_counts(count, cfg.split);
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    Rng(derive_seed(cfg.seed, c, 99)).shuffle(order.begin(), order.end());
    std::vector<Split> split_of(count);
    for (std::size_t r = 0; r < count; ++r) {
      split_of[order[r]] = r < counts.train                ? Split::kTrain
                           : r < counts.train + counts.val ? Split::kVal
                                                           : Split::kTest;
    }
    for (std::size_t i = 0; i < count; ++i, ++global) {
      std::snprintf(name, sizeof name, "/%s_%05zu.wav", label.is_noise() ? "noise" : "clip", i);
      DatasetEntry e;
      e.path = level_dir(label) + name;
      e.label = label;
      e.split = split_of[i];
      e.seed = derive_seed(cfg.seed, global);
      m.entries.push_back(std::move(e));
    }
  }
  return m;
}

NoiseBank NoiseBank::load(const std::filesystem::path& dir, int sample_rate, double clip_len) {
  NoiseBank bank;
  if (dir.empty()) return bank;
  if (!std::filesystem::is_directory(dir)) throw DataError("noise directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  const std::size_t need = clip_samples(clip_len, sample_rate);
  for (const auto& f : files) {
    AudioClip clip = read_wav(f);
    if (clip.sample_rate != sample_rate) {
      throw DataError(f.string() + ": sample rate " + std::to_string(clip.sample_rate) +
                      " does not match configured " + std::to_string(sample_rate));
    }
    if (clip.size() < need) throw DataError(f.string() + ": shorter than one clip");
    if (rms(clip) == 0.0) throw DataError(f.string() + ": silent recording");
    bank.recordings.push_back(std::move(clip));
  }
  if (bank.recordings.empty()) throw DataError("no WAV files in noise directory " + dir.string());
  return bank;
}

AudioClip draw_noise(const DatasetConfig& cfg, const NoiseBank& bank, std::uint64_t seed) {
  if (bank.empty()) return gen_noise(cfg.noise_kind, cfg.clip_len, cfg.sample_rate, seed);
  Rng rng(seed);
  const AudioClip& rec = bank.recordings[rng.below(bank.recordings.size())];
  const std::size_t n = clip_samples(cfg.clip_len, cfg.sample_rate);
  const std::size_t offset = rng.below(rec.size() - n + 1);
  AudioClip out;
  out.sample_rate = cfg.sample_rate;
  out.samples.assign(rec.samples.begin() + static_cast<std::ptrdiff_t>(offset),
                     rec.samples.begin() + static_cast<std::ptrdiff_t>(offset + n));
  if (rms(out) == 0.0) {
    // A silent stretch cannot be SNR-scaled; fall back to the model.
    return gen_noise(cfg.noise_kind, cfg.clip_len, cfg.sample_rate, seed);
  }
  return out;
}

AudioClip synthesize_entry(const DatasetConfig& cfg, const NoiseBank& bank,
                           const DatasetEntry& entry) {
  AudioClip noise = draw_noise(cfg, bank, derive_seed(entry.seed, 0, 2));
  if (entry.label.is_noise()) {
    const double peak = peak_abs(noise);
    if (peak > 0.0) scale_in_place(noise, kMixPeak / peak);
    return noise;
  }
  const WhistleSpec spec =
      draw_whistle(cfg.ranges, cfg.clip_len, cfg.sample_rate, derive_seed(entry.seed, 0, 1));
  const AudioClip whistle = gen_whistle(spec, cfg.clip_len, cfg.sample_rate);
  return mix_components(whistle, noise, entry.label.db(), true).mixed;
}

std::vector<LabeledClip> synthesize_dataset(const DatasetConfig& cfg) {
  const DatasetManifest m = plan_dataset(cfg);
  const NoiseBank bank = NoiseBank::load(cfg.noise_dir, cfg.sample_rate, cfg.clip_len);
  std::vector<LabeledClip> out(m.entries.size());
  parallel_for(m.entries.size(), [&](std::size_t i) {
    const DatasetEntry& e = m.entries[i];
    out[i] = LabeledClip{synthesize_entry(cfg, bank, e), e.label, e.split, e.path};
  });
  return out;
}

std::string manifest_jsonl(const DatasetManifest& manifest) {
  std::string out;
  for (const auto& e : manifest.entries) {
    nlohmann::ordered_json j;
    j["path"] = e.path;
    if (e.label.is_noise()) {
      j["label"] = "noise";
    } else {
      j["label"] = e.label.db();
    }
    j["split"] = to_string(e.split);
    j["seed"] = e.seed;
    out += j.dump();
    out += "\n";
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write manifest: " + path.string());
  f << manifest_jsonl(manifest);
  if (!f) throw DataError("manifest write failed: " + path.string());
}

DatasetManifest build_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir) {
  const DatasetManifest m = plan_dataset(cfg);
  const NoiseBank bank = NoiseBank::load(cfg.noise_dir, cfg.sample_rate, cfg.clip_len);
  try {
    std::filesystem::create_directories(out_dir);
    for (double db : cfg.grid) {
      std::filesystem::create_directories(out_dir / level_dir(SnrLabel::decibel(db)));
    }
    if (cfg.noise_clips > 0) std::filesystem::create_directories(out_dir / "noise");
  } catch (const std::filesystem::filesystem_error& e) {
    throw DataError(std::string("cannot create dataset directory: ") + e.what());
  }
  parallel_for(m.entries.size(), [&](std::size_t i) {
    const DatasetEntry& e = m.entries[i];
    write_wav(out_dir / e.path, synthesize_entry(cfg, bank, e));
  });
  write_manifest(out_dir / "manifest.jsonl", m);
  cfg.to_config().save(out_dir / "dataset.cfg");
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::filesystem::path file = path;
  std::filesystem::path dir = path.parent_path();
  if (std::filesystem::is_directory(path)) {
    file = path / "manifest.jsonl";
    dir = path;
  }
  std::ifstream in(file);
  if (!in) throw DataError("cannot read manifest: " + file.string());
  DatasetManifest m;
  std::string line;
  std::map<SnrLabel, std::size_t> per_label;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      DatasetEntry e;
      e.path = j.at("path").get<std::string>();
      const auto& label = j.at("label");
      e.label = label.is_string() ? SnrLabel::parse(label.get<std::string>())
                                  : SnrLabel::decibel(label.get<double>());
      e.split = parse_split(j.at("split").get<std::string>());
      e.seed = j.value("seed", std::uint64_t{0});
      ++per_label[e.label];
      m.entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw DataError(file.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  const auto cfg_path = dir / "dataset.cfg";
  if (std::filesystem::exists(cfg_path)) {
    const DatasetConfig cfg = DatasetConfig::from_config(Config::load(cfg_path));
    m.grid = cfg.grid;
    m.clips_per_level = cfg.clips_per_level;
  } else {
    for (const auto& [label, count] : per_label) {
      if (label.is_noise()) continue;
      m.grid.push_back(label.db());
      m.clips_per_level = std::max(m.clips_per_level, count);
    }
  }
  return m;
}

std::vector<LabeledClip> load_dataset(const std::filesystem::path& dataset_dir) {
  const DatasetManifest m = load_manifest(dataset_dir);
  const std::filesystem::path dir =
      std::filesystem::is_directory(dataset_dir) ? dataset_dir : dataset_dir.parent_path();
  std::vector<LabeledClip> out(m.entries.size());
  parallel_for(m.entries.size(), [&](std::size_t i) {
    const DatasetEntry& e = m.entries[i];
    out[i] = LabeledClip{read_wav(dir / e.path), e.label, e.split, e.path};
  });
  return out;
}

// ---------------------------------------------------------------------------

std::vector<Mixture> simulate_mixtures(const SimulatorConfig& cfg) {
  if (cfg.count < 1) throw UsageError("simulator count must be >= 1");
  const double actual_db = cfg.target_db - cfg.snr_bias_db;
  std::vector<Mixture> out(cfg.count);
  parallel_for(cfg.count, [&](std::size_t i) {
    const std::uint64_t seed = derive_seed(cfg.seed, i);
    WhistleSpec spec =
        draw_whistle(cfg.ranges, cfg.clip_len, cfg.sample_rate, derive_seed(seed, 0, 1));
    if (cfg.quality == GeneratorQuality::kDegraded) {
      Rng jitter(derive_seed(seed, 0, 3));
      const double nyquist = cfg.sample_rate / 2.0;
      double lo = spec.f_start * jitter.uniform(0.9, 1.1);
      double hi = std::min(spec.f_end * jitter.uniform(0.9, 1.1), nyquist);
      if (hi <= lo) std::swap(lo, hi);
      if (hi <= lo) hi = std::min(lo * 1.01, nyquist);
      spec.f_start = lo;
      spec.f_end = hi;
    }
    const AudioClip whistle = gen_whistle(spec, cfg.clip_len, cfg.sample_rate);
    const AudioClip noise =
        gen_noise(cfg.noise_kind, cfg.clip_len, cfg.sample_rate, derive_seed(seed, 0, 2));
    out[i] = mix_components(whistle, noise, actual_db, true);
  });
  return out;
}

std::vector<AudioClip> simulate_generator(const SimulatorConfig& cfg) {
  std::vector<Mixture> mixes = simulate_mixtures(cfg);
  std::vector<AudioClip> out;
  out.reserve(mixes.size());
  for (auto& m : mixes) out.push_back(std::move(m.mixed));
  return out;
}

}  // namespace snrge
