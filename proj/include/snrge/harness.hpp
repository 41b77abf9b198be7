#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "snrge/config.hpp"
#include "snrge/embedder.hpp"
#include "snrge/snr_inference.hpp"
#include "snrge/spectral_metrics.hpp"
#include "snrge/synth.hpp"
#include "snrge/viz.hpp"

namespace snrge {

inline constexpr int kReportSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Datasets and sample sources

/// A labeled dataset plus the digest of its manifest.
struct Dataset {
  DatasetConfig config;
  DatasetManifest manifest;
  std::vector<LabeledClip> clips;
  std::string manifest_digest;
};

/// FNV-1a 64-bit digest, hex encoded.
std::string fnv1a_hex(std::string_view bytes);

/// Synthesized in memory; no files are written.
Dataset make_dataset(const DatasetConfig& cfg);
/// Reads a directory written by build_dataset.
Dataset open_dataset(const std::filesystem::path& dir);

/// Candidate audio to evaluate, grouped by the SNR it was meant to have.
struct SourceLevel {
  double target_db = 0.0;
  std::vector<AudioClip> clips;
  std::vector<std::string> names;
};

/// Where candidate samples come from. A WAV directory holds one
/// sub-directory per level, named by its dB value ("10", "-15dB",
/// "snr_5dB"). The simulator produces `simulator.count` clips per level.
struct SampleSource {
  enum class Kind { kWavDirectory, kSimulator };
  Kind kind = Kind::kSimulator;
  std::filesystem::path directory;
  SimulatorConfig simulator;
  std::vector<double> levels;

  static SampleSource wav_directory(const std::filesystem::path& dir);
  static SampleSource simulated(const SimulatorConfig& sim, const std::vector<double>& levels);
};

/// Loads or generates every level. WAV clips must match `sample_rate` and
/// `clip_samples`.
std::vector<SourceLevel> resolve_source(const SampleSource& source, int sample_rate,
                                        std::size_t clip_samples);

/// Writes simulator output in the WAV-directory layout.
void write_source(const std::vector<SourceLevel>& levels, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Reports

struct EvalRecord {
  double snr_db = 0.0;
  std::size_t n_samples = 0;
  std::optional<double> frequency_score;
  std::optional<double> pixel_score;
  std::optional<double> nc_accuracy;
  std::optional<double> noise_accuracy;
  std::optional<double> rmsde_uniform;
  std::optional<double> rmsde_weighted;
  std::optional<double> mean_predicted_db;  // weighted KNN, after flooring
  std::optional<double> test_nc_accuracy;   // held-out real data
  std::optional<double> test_rmsde_weighted;
  std::optional<double> final_val_loss;  // per-level networks
};

struct SampleRow {
  std::string method;
  double snr_db = 0.0;
  std::string name;
  double c_whistle = 0.0;
  double c_noise = 0.0;
  int score = 0;
};

struct LossHistory {
  std::string model;  // "all" or the level in dB
  std::vector<EpochLoss> epochs;
};

struct EvalReport {
  int schema_version = kReportSchemaVersion;
  std::map<std::string, std::string> config;
  std::string manifest_digest;
  std::string created_utc;  // empty unless stamped; excluded from comparisons
  std::vector<EvalRecord> records;
  std::vector<SampleRow> samples;
  std::vector<LossHistory> losses;
  std::vector<double> loss_outlier_levels;
  std::optional<ElbowCurves> elbow;
  std::optional<std::size_t> knn_k;
  std::optional<double> test_rmsde_weighted;  // pooled over whistle levels
  std::optional<double> test_rmsde_uniform;
  std::optional<Projection2D> projection_real;
  std::optional<Projection2D> projection_source;
  std::vector<std::string> notes;  // non-fatal per-level failures

  EvalRecord& record(double snr_db);
  const EvalRecord* find(double snr_db) const;
};

/// Folds `fragment` into `into`: per-level fields present in the fragment
/// overwrite, everything else accumulates.
void merge_reports(EvalReport& into, const EvalReport& fragment);

std::string report_to_json(const EvalReport& report, bool include_timestamp = true);
EvalReport report_from_json(const std::string& text);

/// Writes report.json, scores.csv, optional samples.csv / elbow.csv /
/// loss CSVs, and SVG figures. Creates `out_dir` if its parent exists.
void emit_report(const EvalReport& report, const std::filesystem::path& out_dir);

/// Levels whose final validation loss lies more than two median absolute
/// deviations from the median over all levels.
std::vector<double> loss_outliers(const std::vector<std::pair<double, double>>& level_losses);

// ---------------------------------------------------------------------------
// Workflows

struct SpectralOptions {
  std::size_t fft_size = 32768;
  StftConfig stft;
  /// Train clips per class used for the reference averages; 0 = all.
  std::size_t reference_count = 0;
};

/// Scores every source level against averages of the train-split whistles
/// of the same level and the train-split noise.
EvalReport run_spectral_workflow(const Dataset& dataset, const std::vector<SourceLevel>& source,
                                 SpectralMethod method, const SpectralOptions& opts = {});

/// Resized greyscale spectrograms used as embedder input.
std::vector<GreySpectrogram> prepare_images(std::span<const AudioClip> clips,
                                            const StftConfig& stft, std::size_t rows,
                                            std::size_t cols);

struct IndividualOptions {
  StftConfig stft;
  /// Early-stop band for per-level training; training stops at the upper
  /// edge.
  double stop_band_lower = 0.08;
  double stop_band_upper = 0.12;
};

struct IndividualResult {
  EvalReport report;
  std::vector<std::pair<double, EmbedderNetwork>> networks;
};


using LevelNetworks = std::vector<std::pair<double, EmbedderNetwork>>;

/// One whistle-vs-noise network per grid level; source samples are labeled
/// by the nearest of the whistle/noise test-split centroids. Training
/// failures are recorded per level without stopping the others. Levels
/// found in `pretrained` are not retrained.
IndividualResult run_individual_snn_workflow(const Dataset& dataset,
                                             const std::vector<SourceLevel>& source,
                                             const EmbedderConfig& config,
                                             const IndividualOptions& opts = {},
                                             const LevelNetworks* pretrained = nullptr);

struct SingleOptions {
  StftConfig stft;
  std::size_t knn_k = 0;  // 0 = elbow selection
  std::size_t k_max = 1000;
  KnnWeighting elbow_weighting = KnnWeighting::kInverseDistance;
  double zero_floor_db = -40.0;
  bool project = true;
  TsneConfig tsne;
  std::size_t tsne_cap_per_label = 200;
};

struct SingleResult {
  EvalReport report;
  EmbedderNetwork network;
};

/// One network over every level plus noise. Nearest-centroid labels and
/// KNN-regressed SNR come from train-split references; K is chosen on the
/// validation split unless fixed.
SingleResult run_single_snn_workflow(const Dataset& dataset,
                                     const std::vector<SourceLevel>& source,
                                     const EmbedderConfig& config, const SingleOptions& opts = {},
                                     const EmbedderNetwork* pretrained = nullptr);

/// Trains the all-level network only.
EmbedderNetwork train_all_levels(const Dataset& dataset, const EmbedderConfig& config,
                                 const StftConfig& stft, TrainResult* history = nullptr);

/// Elbow curves for a trained network: references from train, queries
/// from validation.
ElbowCurves select_k_for(const Dataset& dataset, const EmbedderNetwork& net,
                         const StftConfig& stft, std::size_t k_max, KnnWeighting weighting);

/// Option structs built from flat configuration keys.
SpectralOptions spectral_options(const Config& cfg);
IndividualOptions individual_options(const Config& cfg);
SingleOptions single_options(const Config& cfg);
SimulatorConfig simulator_config(const Config& cfg, const DatasetConfig& dataset);
EmbedderConfig embedder_config(const Config& cfg);

}  // namespace snrge
