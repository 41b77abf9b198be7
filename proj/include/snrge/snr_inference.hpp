#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "snrge/label.hpp"

namespace snrge {

using Embedding = std::vector<double>;

/// One mean embedding per label, labels in ascending order (Noise first).
struct CentroidSet {
  std::vector<SnrLabel> labels;
  std::vector<Embedding> centroids;
};

enum class KnnWeighting { kUniform, kInverseDistance };

struct KnnConfig {
  std::size_t k = 1;
  KnnWeighting weighting = KnnWeighting::kInverseDistance;
  double zero_floor_db = -40.0;
};

inline constexpr double kInverseDistanceEps = 1e-12;

CentroidSet compute_centroids(std::span<const Embedding> embeddings,
                              std::span<const SnrLabel> labels);

/// Label of the nearest centroid (Euclidean). Ties go to the lower label.
SnrLabel nc_predict(const CentroidSet& centroids, const Embedding& query);

double snr_db_to_linear(double db);
/// 10·log10(ratio); a ratio of exactly zero maps to zero_floor_db.
double linear_to_snr_db(double ratio, double zero_floor_db = -40.0);

/// Linear SNR used as a regression target; Noise is 0.
double label_to_linear(const SnrLabel& label);

struct Neighbor {
  double distance = 0.0;
  std::size_t index = 0;
};

/// The k nearest references ordered by (distance, index).
std::vector<Neighbor> nearest_neighbors(std::span<const Embedding> references,
                                        const Embedding& query, std::size_t k);

/// Uniform mean or inverse-distance weighted mean of neighbor values.
double weighted_neighbor_value(std::span<const Neighbor> neighbors,
                               std::span<const double> values, KnnWeighting weighting);

/// Predicted linear SNR from the k nearest references.
double knn_predict_snr(std::span<const Embedding> references,
                       std::span<const double> reference_linear_snr, const Embedding& query,
                       const KnnConfig& cfg);

/// Root mean square of (predicted - actual), both in dB.
double rmsde(std::span<const double> predicted_db, std::span<const double> actual_db);

/// Fraction of predictions whose noise/not-noise outcome matches the flag.
double noise_binary_accuracy(std::span<const SnrLabel> predictions,
                             std::span<const bool> actual_is_noise);

/// Fraction of exact label matches.
double label_accuracy(std::span<const SnrLabel> predictions, std::span<const SnrLabel> actual);

struct ElbowCurves {
  std::vector<std::size_t> ks;
  std::vector<double> rmse;      // linear-SNR RMSE on the validation set
  std::vector<double> r2;        // coefficient of determination
  std::vector<double> max_dist;  // mean over queries of the k-th neighbor distance
  std::size_t chosen_k = 1;
};

/// Knee of a curve: the point with the largest perpendicular distance to the
/// chord joining its endpoints, both axes scaled to [0, 1]. A curve with no
/// point off the chord returns the smallest x.
std::size_t elbow_knee(std::span<const std::size_t> xs, std::span<const double> ys);

/// KNN fitted on `references`, scored on `validation` for every k in
/// [k_min, k_max] (k_max capped at the reference count). K is the knee of
/// the RMSE curve.
ElbowCurves select_k_elbow(std::span<const Embedding> references,
                           std::span<const double> reference_linear_snr,
                           std::span<const Embedding> validation,
                           std::span<const double> validation_linear_snr, std::size_t k_min,
                           std::size_t k_max, KnnWeighting weighting);

}  // namespace snrge
