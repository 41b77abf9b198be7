#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "snrge/config.hpp"
#include "snrge/dsp.hpp"
#include "snrge/snr_inference.hpp"

namespace snrge {

struct EmbedderConfig {
  std::size_t conv_blocks = 3;
  std::size_t dense_layers = 1;  // the last one outputs the embedding
  std::size_t dense_width = 64;  // width of hidden dense layers
  std::size_t embedding_dim = 16;
  std::size_t base_channels = 8;  // doubled by every conv block
  double learning_rate = 2e-4;
  double margin = 0.2;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  std::size_t input_rows = 128;
  std::size_t input_cols = 128;
  /// Stop once validation loss is at or below this value; 0 disables.
  double early_stop_val_loss = 0.0;

  /// The large reference architecture: 7 conv blocks, 2 dense layers,
  /// 56-d embedding, Adam at 2e-4.
  static EmbedderConfig reference();

  /// Throws UsageError on invalid values, including inputs too small for the
  /// requested depth.
  void validate() const;

  static EmbedderConfig from_config(const Config& cfg);
  static EmbedderConfig from_config(const Config& cfg, const EmbedderConfig& base);
  Config to_config() const;
};

/// 3×3 convolution, stride 2, zero padding 1, followed by ReLU.
struct ConvLayer {
  std::size_t in_ch = 0, out_ch = 0;
  std::size_t in_h = 0, in_w = 0, out_h = 0, out_w = 0;
  std::size_t weight_offset = 0, bias_offset = 0;
};

/// Fully connected layer; ReLU on every layer except the last.
struct DenseLayer {
  std::size_t in = 0, out = 0;
  std::size_t weight_offset = 0, bias_offset = 0;
  bool relu = true;
};

/// All parameters live in one flat vector, layer by layer (weights then
/// bias), in declaration order.
class EmbedderNetwork {
 public:
  EmbedderNetwork() = default;
  explicit EmbedderNetwork(const EmbedderConfig& config);

  const EmbedderConfig& config() const noexcept { return config_; }
  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  const std::vector<ConvLayer>& conv_layers() const noexcept { return conv_; }
  const std::vector<DenseLayer>& dense_layers() const noexcept { return dense_; }

 private:
  EmbedderConfig config_;
  std::vector<ConvLayer> conv_;
  std::vector<DenseLayer> dense_;
  std::vector<double> params_;
};

/// Builds the architecture and draws weights from U(±√(6/fan_in)) with the
/// config seed; biases start at zero.
EmbedderNetwork init_network(const EmbedderConfig& config);

/// Activations kept for backpropagation. acts[0] is the scaled input,
/// acts[i + 1] the output of layer i (conv layers first). The last entry is
/// the raw embedding before normalization.
struct ForwardCache {
  std::vector<std::vector<double>> acts;
  Embedding embedding;
  double norm = 0.0;
};

/// Pixels divided by 255, one input channel.
ForwardCache forward_cached(const EmbedderNetwork& net, const GreySpectrogram& img);

/// L2-normalized embedding. An all-zero raw output maps to the first basis
/// vector.
Embedding forward_embed(const EmbedderNetwork& net, const GreySpectrogram& img);
std::vector<Embedding> embed_all(const EmbedderNetwork& net,
                                 std::span<const GreySpectrogram> images);

/// Adds d(loss)/d(params) into `grad` given d(loss)/d(normalized embedding).
void backward(const EmbedderNetwork& net, const ForwardCache& cache,
              std::span<const double> d_embedding, std::span<double> grad);

// ---------------------------------------------------------------------------
// Triplet objective

struct Triplet {
  std::size_t anchor = 0, positive = 0, negative = 0;
  friend bool operator==(const Triplet&, const Triplet&) = default;
};

double euclidean(const Embedding& a, const Embedding& b);

/// For every ordered (anchor, positive) pair with equal labels, picks the
/// closest negative with d_ap < d_an < d_ap + margin; when the band is empty,
/// the closest negative overall. Equal distances resolve to the lower index.
std::vector<Triplet> semi_hard_triplets(std::span<const Embedding> embeddings,
                                        std::span<const int> labels, double margin);

/// max(0, d_ap - d_an + margin).
double triplet_loss(double d_ap, double d_an, double margin);

/// Mean triplet loss over `triplets`; when `grad` is non-null it receives
/// d(loss)/d(embedding) for every embedding.
double triplet_batch_loss(std::span<const Embedding> embeddings,
                          std::span<const Triplet> triplets, double margin,
                          std::vector<Embedding>* grad);

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Batch triplet loss for fixed triplets and its gradient with respect to
/// every network parameter. Per-sample gradients are summed in batch order.
LossAndGradient batch_loss_and_gradient(const EmbedderNetwork& net,
                                        std::span<const GreySpectrogram> images,
                                        std::span<const Triplet> triplets);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamParams {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  std::uint64_t t = 0;  // steps taken
};

/// One bias-corrected Adam update. Returns false, leaving params and state
/// untouched, if any gradient is non-finite.
bool adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamParams& hp);

// ---------------------------------------------------------------------------
// Training

struct TrainingSet {
  std::vector<GreySpectrogram> images;
  std::vector<int> labels;
};

struct EpochLoss {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochLoss> history;
  bool early_stopped = false;
  std::size_t skipped_steps = 0;
};

/// Class-stratified batches of every class, max(2, batch_size / classes)
/// members each. Returns batches of indices into `labels`.
std::vector<std::vector<std::size_t>> stratified_batches(std::span<const int> labels,
                                                         std::size_t batch_size,
                                                         std::uint64_t seed);

double evaluate_loss(const EmbedderNetwork& net, const TrainingSet& data);

/// Mined-triplet Adam training. Deterministic for a given config and data at
/// any worker count. Throws NumericError on a non-finite loss.
TrainResult train(EmbedderNetwork& net, const TrainingSet& train_set,
                  const TrainingSet& val_set);

void write_loss_history(const std::filesystem::path& path, std::span<const EpochLoss> history);

struct SearchSpace {
  std::size_t conv_blocks_min = 2, conv_blocks_max = 4;
  std::size_t dense_layers_min = 1, dense_layers_max = 2;
  double learning_rate_min = 1e-4, learning_rate_max = 1e-3;  // log-uniform
  std::size_t embedding_dim_min = 8, embedding_dim_max = 32;
};

struct SearchTrial {
  EmbedderConfig config;
  double val_loss = 0.0;
};

struct SearchResult {
  EmbedderConfig best;
  std::vector<SearchTrial> trials;
};

/// Seeded random search; every trial trains from `base` with the sampled
/// dimensions and is ranked by final validation loss (earlier trial wins
/// ties).
SearchResult hyper_search(const SearchSpace& space, const EmbedderConfig& base,
                          std::size_t budget, std::uint64_t seed, const TrainingSet& train_set,
                          const TrainingSet& val_set);

// ---------------------------------------------------------------------------
// Checkpoints: "SNRGEMBD", u32 version, config block, u64 parameter count,
// then f64 parameters; all little-endian.

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const EmbedderNetwork& net, const std::filesystem::path& path);
EmbedderNetwork load_checkpoint(const std::filesystem::path& path);

}  // namespace snrge
