#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "snrge/audio.hpp"
#include "snrge/config.hpp"
#include "snrge/label.hpp"

namespace snrge {

/// Linear upsweep: frequency rises from f_start to f_end over `duration`
/// seconds beginning at `onset`.
struct WhistleSpec {
  double f_start = 3000.0;  // Hz
  double f_end = 6000.0;    // Hz
  double onset = 0.0;       // s
  double duration = 0.5;    // s
  double amplitude = 0.5;   // peak, (0, 1]
};

/// Uniform ranges the dataset builder draws whistle shapes from. Onset is
/// drawn uniformly over whatever room the duration leaves in the clip.
struct WhistleRanges {
  double f_start_min = 2000.0, f_start_max = 5000.0;
  double bandwidth_min = 1000.0, bandwidth_max = 3000.0;
  double duration_min = 0.3, duration_max = 0.8;
  double amplitude = 0.5;
};

enum class NoiseKind { kPink, kWhite };
enum class Split { kTrain, kVal, kTest };
enum class GeneratorQuality { kClean, kDegraded };

NoiseKind parse_noise_kind(const std::string& s);
std::string to_string(NoiseKind k);
Split parse_split(const std::string& s);
std::string to_string(Split s);

/// Fraction of a class going to each split; fractions must sum to 1.
struct SplitRatio {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
};

/// train = round(n·train), val = round(n·val), test = remainder.
SplitCounts split_counts(std::size_t n, const SplitRatio& ratio);

constexpr double kFadeSeconds = 0.010;
constexpr double kMixPeak = 0.9;
constexpr double kNoiseRms = 0.1;
constexpr double kPinkLowCutHz = 50.0;

AudioClip gen_whistle(const WhistleSpec& spec, double clip_len, int sample_rate);

/// Draws a whistle shape from `ranges` that fits a clip of `clip_len`
/// seconds at `sample_rate`.
WhistleSpec draw_whistle(const WhistleRanges& ranges, double clip_len, int sample_rate,
                         std::uint64_t seed);

/// White: N(0, kNoiseRms²) samples. Pink: 1/f power spectrum between
/// kPinkLowCutHz and Nyquist, zero-mean, scaled to kNoiseRms.
AudioClip gen_noise(NoiseKind kind, double clip_len, int sample_rate, std::uint64_t seed);

/// A_s / (A_n √snr_linear).
double compute_beta(double a_s, double a_n, double snr_linear);

/// Mixture plus the scaled components it is the sum of (after any joint
/// normalization), so the achieved SNR can be measured.
struct Mixture {
  AudioClip mixed;
  AudioClip signal;
  AudioClip noise;
  double beta = 0.0;
  double gain = 1.0;
};

Mixture mix_components(const AudioClip& signal, const AudioClip& noise, double snr_db,
                       bool normalize = true);

/// x = s + βn for a decibel label, optionally peak-normalized to kMixPeak with
/// signal and noise scaled together.
AudioClip mix_at_snr(const AudioClip& signal, const AudioClip& noise, const SnrLabel& snr,
                     bool normalize = true);

/// 10·log10(rms(signal)² / rms(noise)²).
double component_snr_db(const AudioClip& signal, const AudioClip& noise);

// ---------------------------------------------------------------------------
// Datasets

struct DatasetConfig {
  std::vector<double> grid{-15, -10, -5, 0, 5, 10};
  std::size_t clips_per_level = 500;
  std::size_t noise_clips = 500;
  WhistleRanges ranges;
  NoiseKind noise_kind = NoiseKind::kPink;
  SplitRatio split;
  std::uint64_t seed = 1;
  int sample_rate = 32000;
  double clip_len = 1.0;
  /// Optional directory of mono WAVs at `sample_rate` to draw noise
  /// segments from instead of the synthetic model.
  std::filesystem::path noise_dir;

  static DatasetConfig from_config(const Config& cfg);
  Config to_config() const;
};

struct DatasetEntry {
  std::string path;  // relative to the dataset directory
  SnrLabel label;
  Split split = Split::kTrain;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  std::vector<DatasetEntry> entries;
  std::vector<double> grid;
  std::size_t clips_per_level = 0;
};

/// Assigns labels, per-clip seeds, file names and stratified splits. Pure
/// function of the config.
DatasetManifest plan_dataset(const DatasetConfig& cfg);

/// Noise segments loaded from DatasetConfig::noise_dir.
struct NoiseBank {
  std::vector<AudioClip> recordings;
  static NoiseBank load(const std::filesystem::path& dir, int sample_rate, double clip_len);
  bool empty() const { return recordings.empty(); }
};

/// Background noise for one clip: a random segment of the bank when it is
/// non-empty, the synthetic model otherwise.
AudioClip draw_noise(const DatasetConfig& cfg, const NoiseBank& bank, std::uint64_t seed);

/// Audio for one manifest entry, regenerated from its seed.
AudioClip synthesize_entry(const DatasetConfig& cfg, const NoiseBank& bank,
                           const DatasetEntry& entry);

struct LabeledClip {
  AudioClip clip;
  SnrLabel label;
  Split split = Split::kTrain;
  std::string path;
};

/// In-memory equivalent of build_dataset (no quantization).
std::vector<LabeledClip> synthesize_dataset(const DatasetConfig& cfg);

/// Writes every clip as WAV plus `manifest.jsonl` and `dataset.cfg`.
DatasetManifest build_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir);

/// One JSON object per line: path, label (dB or "noise"), split, seed.
std::string manifest_jsonl(const DatasetManifest& manifest);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
/// Reads `manifest.jsonl` (and `dataset.cfg` if present) from a dataset
/// directory, or a manifest file path directly.
DatasetManifest load_manifest(const std::filesystem::path& path);
std::vector<LabeledClip> load_dataset(const std::filesystem::path& dataset_dir);

// ---------------------------------------------------------------------------
// Generator-under-test stand-in

struct SimulatorConfig {
  double target_db = 10.0;
  double snr_bias_db = 0.0;  // actual SNR = target - bias
  GeneratorQuality quality = GeneratorQuality::kClean;
  std::size_t count = 500;
  std::uint64_t seed = 7;
  WhistleRanges ranges;
  NoiseKind noise_kind = NoiseKind::kPink;
  int sample_rate = 32000;
  double clip_len = 1.0;
};

std::vector<Mixture> simulate_mixtures(const SimulatorConfig& cfg);
std::vector<AudioClip> simulate_generator(const SimulatorConfig& cfg);

}  // namespace snrge
