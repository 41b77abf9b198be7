#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "snrge/label.hpp"
#include "snrge/snr_inference.hpp"

namespace snrge {

struct Point2 {
  double x = 0.0, y = 0.0;
};

struct Projection2D {
  std::vector<Point2> points;
  std::vector<std::string> labels;  // one per point, used for legend grouping
  double final_kl = 0.0;
  double kl_after_exaggeration = 0.0;  // KL at the first plain iteration
};

struct TsneConfig {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  double learning_rate = 200.0;
  double exaggeration = 12.0;
  std::size_t exaggeration_iters = 250;
  std::uint64_t seed = 1;
};

inline constexpr std::size_t kTsneMaxPoints = 5000;

/// Row-stochastic conditional affinities p(j|i); each row's Gaussian
/// bandwidth is found by bisection so its entropy equals log(perplexity).
/// Row-major n×n.
std::vector<double> conditional_affinities(std::span<const Embedding> points, double perplexity);

/// Exact O(N²) t-SNE with early exaggeration, momentum and per-coordinate
/// gains. Requires 4 ≤ N ≤ kTsneMaxPoints and 3·perplexity < N.
Projection2D tsne_project(std::span<const Embedding> points, std::span<const std::string> labels,
                          const TsneConfig& cfg = {});

/// Deterministic subsample keeping at most `cap_per_label` points of each
/// label; returned indices are ascending.
std::vector<std::size_t> subsample_per_label(std::span<const std::string> labels,
                                             std::size_t cap_per_label, std::uint64_t seed);

/// Mean silhouette coefficient of 2-D points under the given labels.
double silhouette(std::span<const Point2> points, std::span<const std::string> labels);

/// Scatter plot, one color per distinct label with a legend. A sibling CSV
/// (same stem, .csv) lists x, y, label per point.
void emit_scatter(const Projection2D& proj, const std::filesystem::path& svg_path,
                  const std::string& title = "");

struct LineSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Line chart with markers and a legend; sibling CSV has series, x, y rows.
void emit_line_chart(std::span<const LineSeries> series, const std::filesystem::path& svg_path,
                     const std::string& title = "", const std::string& x_label = "",
                     const std::string& y_label = "");

}  // namespace snrge
