#include "snrge/snr_inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "snrge/error.hpp"
#include "snrge/parallel.hpp"

namespace snrge {
namespace {

double squared_distance(const Embedding& a, const Embedding& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

bool neighbor_less(const Neighbor& a, const Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
}

}  // namespace

CentroidSet compute_centroids(std::span<const Embedding> embeddings,
                              std::span<const SnrLabel> labels) {
  if (embeddings.size() != labels.size()) throw UsageError("centroids: length mismatch");
  if (embeddings.empty()) throw UsageError("centroids: empty class set");
  const std::size_t dim = embeddings[0].size();
  std::map<SnrLabel, std::pair<Embedding, std::size_t>> sums;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].size() != dim) throw UsageError("centroids: dimension mismatch");
    auto& [sum, count] = sums[labels[i]];
    if (sum.empty()) sum.assign(dim, 0.0);
    for (std::size_t d = 0; d < dim; ++d) sum[d] += embeddings[i][d];
    ++count;
  }
  CentroidSet set;
  for (auto& [label, acc] : sums) {
    auto& [sum, count] = acc;
    for (double& v : sum) v /= static_cast<double>(count);
    set.labels.push_back(label);
    set.centroids.push_back(std::move(sum));
  }
  return set;
}

SnrLabel nc_predict(const CentroidSet& centroids, const Embedding& query) {
  if (centroids.centroids.empty()) throw UsageError("nc_predict: empty centroid set");
  std::size_t best = 0;
  double best_d = 0.0;
  for (std::size_t c = 0; c < centroids.centroids.size(); ++c) {
    if (centroids.centroids[c].size() != query.size()) {
      throw UsageError("nc_predict: dimension mismatch");
    }
    const double d = squared_distance(centroids.centroids[c], query);
    // Labels are ascending, so strict < keeps the lower label on ties.
    if (c == 0 || d < best_d) {
      best = c;
      best_d = d;
    }
  }
  return centroids.labels[best];
}

double snr_db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

double linear_to_snr_db(double ratio, double zero_floor_db) {
  if (ratio < 0.0 || std::isnan(ratio)) throw UsageError("linear SNR must be >= 0");
  if (ratio == 0.0) return zero_floor_db;
  return 10.0 * std::log10(ratio);
}

double label_to_linear(const SnrLabel& label) {
  return label.is_noise() ? 0.0 : snr_db_to_linear(label.db());
}

std::vector<Neighbor> nearest_neighbors(std::span<const Embedding> references,
                                        const Embedding& query, std::size_t k) {
  if (k == 0 || k > references.size()) {
    throw UsageError("knn: k must be in [1, reference count]");
  }
  std::vector<Neighbor> all(references.size());
  for (std::size_t i = 0; i < references.size(); ++i) {
    if (references[i].size() != query.size()) throw UsageError("knn: dimension mismatch");
    all[i] = {std::sqrt(squared_distance(references[i], query)), i};
  }
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(),
                    neighbor_less);
  all.resize(k);
  return all;
}

double weighted_neighbor_value(std::span<const Neighbor> neighbors,
                               std::span<const double> values, KnnWeighting weighting) {
  if (neighbors.empty()) throw UsageError("knn: no neighbors");
  double num = 0.0, den = 0.0;
  for (const auto& n : neighbors) {
    const double w =
        weighting == KnnWeighting::kUniform ? 1.0 : 1.0 / (n.distance + kInverseDistanceEps);
    num += w * values[n.index];
    den += w;
  }
  return num / den;
}

double knn_predict_snr(std::span<const Embedding> references,
                       std::span<const double> reference_linear_snr, const Embedding& query,
                       const KnnConfig& cfg) {
  if (references.size() != reference_linear_snr.size()) {
    throw UsageError("knn: reference/value length mismatch");
  }
  const auto nb = nearest_neighbors(references, query, cfg.k);
  return weighted_neighbor_value(nb, reference_linear_snr, cfg.weighting);
}

double rmsde(std::span<const double> predicted_db, std::span<const double> actual_db) {
  if (predicted_db.size() != actual_db.size()) throw UsageError("rmsde: length mismatch");
  if (predicted_db.empty()) throw UsageError("rmsde: no samples");
  double acc = 0.0;
  for (std::size_t i = 0; i < predicted_db.size(); ++i) {
    const double d = predicted_db[i] - actual_db[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(predicted_db.size()));
}

double noise_binary_accuracy(std::span<const SnrLabel> predictions,
                             std::span<const bool> actual_is_noise) {
  if (predictions.size() != actual_is_noise.size()) {
    throw UsageError("noise accuracy: length mismatch");
  }
  if (predictions.empty()) throw UsageError("noise accuracy: no samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    hits += predictions[i].is_noise() == actual_is_noise[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double label_accuracy(std::span<const SnrLabel> predictions, std::span<const SnrLabel> actual) {
  if (predictions.size() != actual.size()) throw UsageError("accuracy: length mismatch");
  if (predictions.empty()) throw UsageError("accuracy: no samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == actual[i];
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

std::size_t elbow_knee(std::span<const std::size_t> xs, std::span<const double> ys) {
  if (xs.empty() || xs.size() != ys.size()) throw UsageError("elbow: empty or mismatched curve");
  if (xs.size() < 3) return xs.front();
  const double x0 = static_cast<double>(xs.front());
  const double x_span = static_cast<double>(xs.back()) - x0;
  const auto [lo, hi] = std::minmax_element(ys.begin(), ys.end());
  const double y_span = *hi - *lo;
  if (x_span <= 0.0 || y_span <= 0.0) return xs.front();

  const auto nx = [&](std::size_t i) { return (static_cast<double>(xs[i]) - x0) / x_span; };
  const auto ny = [&](std::size_t i) { return (ys[i] - *lo) / y_span; };
  const double ax = nx(0), ay = ny(0);
  const double dx = nx(xs.size() - 1) - ax, dy = ny(xs.size() - 1) - ay;
  const double len = std::hypot(dx, dy);

  std::size_t best = 0;
  double best_d = 0.0;
  for (std::size_t i = 1; i + 1 < xs.size(); ++i) {
    const double d = std::abs(dx * (ny(i) - ay) - dy * (nx(i) - ax)) / len;
    if (d > best_d) {
      best_d = d;
      best = i;
    }
  }
  // Anything within rounding of the chord counts as "no knee".
  if (best_d <= 1e-9) return xs.front();
  return xs[best];
}

ElbowCurves select_k_elbow(std::span<const Embedding> references,
                           std::span<const double> reference_linear_snr,
                           std::span<const Embedding> validation,
                           std::span<const double> validation_linear_snr, std::size_t k_min,
                           std::size_t k_max, KnnWeighting weighting) {
  if (references.size() != reference_linear_snr.size() ||
      validation.size() != validation_linear_snr.size()) {
    throw UsageError("select_k: length mismatch");
  }
  if (references.empty() || validation.empty()) throw UsageError("select_k: empty inputs");
  k_min = std::max<std::size_t>(k_min, 1);
  k_max = std::min(k_max, references.size());
  if (k_min > k_max) throw UsageError("select_k: empty k range");

  const std::size_t nq = validation.size();
  const std::size_t nk = k_max - k_min + 1;
  // Per-query predictions and k-th distances for every k in range.
  std::vector<std::vector<double>> pred(nq, std::vector<double>(nk));
  std::vector<std::vector<double>> kth(nq, std::vector<double>(nk));
  parallel_for(nq, [&](std::size_t q) {
    const auto nb = nearest_neighbors(references, validation[q], k_max);
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < k_max; ++j) {
      const double w = weighting == KnnWeighting::kUniform
                           ? 1.0
                           : 1.0 / (nb[j].distance + kInverseDistanceEps);
      num += w * reference_linear_snr[nb[j].index];
      den += w;
      if (j + 1 >= k_min) {
        pred[q][j + 1 - k_min] = num / den;
        kth[q][j + 1 - k_min] = nb[j].distance;
      }
    }
  });

  double mean = 0.0;
  for (double v : validation_linear_snr) mean += v;
  mean /= static_cast<double>(nq);
  double ss_tot = 0.0;
  for (double v : validation_linear_snr) ss_tot += (v - mean) * (v - mean);

  ElbowCurves out;
  for (std::size_t i = 0; i < nk; ++i) {
    double ss_res = 0.0, dist = 0.0;
    for (std::size_t q = 0; q < nq; ++q) {
      const double e = pred[q][i] - validation_linear_snr[q];
      ss_res += e * e;
      dist += kth[q][i];
    }
    out.ks.push_back(k_min + i);
    out.rmse.push_back(std::sqrt(ss_res / static_cast<double>(nq)));
    out.r2.push_back(ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0);
    out.max_dist.push_back(dist / static_cast<double>(nq));
  }
  out.chosen_k = elbow_knee(out.ks, out.rmse);
  return out;
}

}  // namespace snrge
