#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "snrge/error.hpp"
#include "snrge/rng.hpp"
#include "snrge/viz.hpp"
#include "test_util.hpp"

using namespace snrge;

namespace {

struct Cloud {
  std::vector<Embedding> points;
  std::vector<std::string> labels;
};

Cloud clusters(std::size_t per, std::size_t dim, double sep, std::uint64_t seed) {
  Cloud c;
  Rng rng(seed);
  for (int k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < per; ++i) {
      Embedding e(dim);
      for (auto& v : e) v = 0.3 * rng.normal();
      e[0] += k == 0 ? -sep : sep;
      c.points.push_back(std::move(e));
      c.labels.push_back(k == 0 ? "noise" : "10");
    }
  }
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

TsneConfig quick() {
  TsneConfig t;
  t.perplexity = 10.0;
  t.iterations = 500;
  t.seed = 4;
  return t;
}

}  // namespace

TEST_CASE("conditional affinities are row-stochastic with the requested perplexity") {
  const Cloud c = clusters(20, 5, 1.0, 1);
  const std::size_t n = c.points.size();
  const auto p = conditional_affinities(c.points, 8.0);
  REQUIRE(p.size() == n * n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0, h = 0.0;
    CHECK(p[i * n + i] == 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      sum += p[i * n + j];
      if (p[i * n + j] > 0.0) h -= p[i * n + j] * std::log(p[i * n + j]);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::exp(h) == doctest::Approx(8.0).epsilon(1e-3));
  }
  CHECK_THROWS_AS(conditional_affinities(c.points, 0.0), UsageError);
}

TEST_CASE("t-SNE separates two clusters") {
  const Cloud c = clusters(40, 8, 2.0, 2);
  const Projection2D proj = tsne_project(c.points, c.labels, quick());
  REQUIRE(proj.points.size() == c.points.size());
  CHECK(proj.labels == c.labels);
  for (const auto& pt : proj.points) {
    CHECK(std::isfinite(pt.x));
    CHECK(std::isfinite(pt.y));
  }
  CHECK(silhouette(proj.points, proj.labels) >= 0.3);
  CHECK(proj.final_kl <= proj.kl_after_exaggeration);
  CHECK(proj.final_kl >= 0.0);

  const Projection2D again = tsne_project(c.points, c.labels, quick());
  for (std::size_t i = 0; i < proj.points.size(); ++i) {
    CHECK(proj.points[i].x == again.points[i].x);
    CHECK(proj.points[i].y == again.points[i].y);
  }
}

TEST_CASE("t-SNE is invariant to rotating the input") {
  const Cloud c = clusters(30, 2, 1.5, 3);
  // A quarter turn is exact in floating point, so the output must match bit for bit.
  Cloud q = c;
  for (auto& e : q.points) e = {-e[1], e[0]};
  const Projection2D pc = tsne_project(c.points, c.labels, quick());
  const Projection2D pq = tsne_project(q.points, q.labels, quick());
  for (std::size_t i = 0; i < pc.points.size(); ++i) {
    CHECK(pc.points[i].x == pq.points[i].x);
    CHECK(pc.points[i].y == pq.points[i].y);
  }

  // A generic angle perturbs distances by rounding only; neighbourhood
  // structure and separation must survive.
  Cloud r = c;
  const double a = 0.7;
  for (auto& e : r.points) {
    const double x = e[0], y = e[1];
    e[0] = std::cos(a) * x - std::sin(a) * y;
    e[1] = std::sin(a) * x + std::cos(a) * y;
  }
  const Projection2D pr = tsne_project(r.points, r.labels, quick());
  const auto knn_agreement = [](const Projection2D& p) {
    const std::size_t n = p.points.size();
    std::size_t agree = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::pair<double, std::size_t>> d;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        d.push_back({std::hypot(p.points[i].x - p.points[j].x, p.points[i].y - p.points[j].y), j});
      }
      std::partial_sort(d.begin(), d.begin() + 5, d.end());
      for (std::size_t k = 0; k < 5; ++k) agree += p.labels[d[k].second] == p.labels[i];
    }
    return static_cast<double>(agree) / static_cast<double>(5 * n);
  };
  CHECK(std::abs(knn_agreement(pc) - knn_agreement(pr)) <= 0.1);
  CHECK(silhouette(pc.points, pc.labels) >= 0.3);
  CHECK(silhouette(pr.points, pr.labels) >= 0.3);
}

TEST_CASE("t-SNE input validation") {
  const Cloud c = clusters(10, 3, 1.0, 4);
  TsneConfig t = quick();
  t.perplexity = 30.0;  // 3 * 30 >= 20
  CHECK_THROWS_AS(tsne_project(c.points, c.labels, t), UsageError);
  const std::vector<Embedding> three(c.points.begin(), c.points.begin() + 3);
  const std::vector<std::string> three_l(c.labels.begin(), c.labels.begin() + 3);
  CHECK_THROWS_AS(tsne_project(three, three_l, quick()), UsageError);
  const std::vector<std::string> short_labels(c.labels.begin(), c.labels.end() - 1);
  t.perplexity = 3.0;
  CHECK_THROWS_AS(tsne_project(c.points, short_labels, t), UsageError);
  t.iterations = 10;
  CHECK_THROWS_AS(tsne_project(c.points, c.labels, t), UsageError);
}

TEST_CASE("subsample_per_label") {
  std::vector<std::string> labels;
  for (int i = 0; i < 50; ++i) labels.push_back(i % 5 == 0 ? "a" : "b");
  const auto idx = subsample_per_label(labels, 6, 1);
  CHECK(std::is_sorted(idx.begin(), idx.end()));
  std::size_t a = 0, b = 0;
  for (auto i : idx) (labels[i] == "a" ? a : b)++;
  CHECK(a == 6);
  CHECK(b == 6);
  CHECK(idx == subsample_per_label(labels, 6, 1));
  CHECK(subsample_per_label(labels, 100, 1).size() == 50);
}

TEST_CASE("silhouette") {
  const std::vector<Point2> pts = {{0, 0}, {0, 1}, {10, 0}, {10, 1}};
  const std::vector<std::string> l = {"a", "a", "b", "b"};
  CHECK(silhouette(pts, l) > 0.85);
  const std::vector<std::string> mixed = {"a", "b", "a", "b"};
  CHECK(silhouette(pts, mixed) < 0.0);
  CHECK_THROWS_AS(silhouette(pts, std::vector<std::string>(4, "a")), UsageError);
}

TEST_CASE("scatter output") {
  testutil::TempDir dir("scatter");
  Projection2D proj;
  proj.points = {{0, 0}, {1, 1}, {2, 0.5}, {3, 3}, {-1, 2}};
  proj.labels = {"noise", "-5", "noise", "10", "-5"};
  emit_scatter(proj, dir / "p.svg", "title");
  const std::string svg = slurp(dir / "p.svg");
  CHECK(svg.find("<svg xmlns") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(count(svg, "class=\"legend-entry\"") == 3);
  CHECK(svg.find("title") != std::string::npos);

  const std::string csv = slurp(dir / "p.csv");
  CHECK(csv.rfind("x,y,label\n", 0) == 0);
  CHECK(count(csv, "\n") == 6);

  emit_scatter(proj, dir / "q.svg", "title");
  CHECK(slurp(dir / "q.svg") == svg);

  Projection2D empty;
  CHECK_THROWS_AS(emit_scatter(empty, dir / "e.svg"), UsageError);
  CHECK_THROWS_AS(emit_scatter(proj, dir / "missing" / "deeper" / "x.svg"), DataError);
}

TEST_CASE("line chart output") {
  testutil::TempDir dir("lines");
  const std::vector<LineSeries> s = {{"frequency", {-20, -10, 0}, {0.1, 0.5, 0.9}},
                                     {"pixel, raw", {-20, -10, 0}, {0.2, 0.4, 0.6}}};
  emit_line_chart(s, dir / "l.svg", "t", "SNR (dB)", "score");
  const std::string svg = slurp(dir / "l.svg");
  CHECK(count(svg, "class=\"legend-entry\"") == 2);
  CHECK(svg.find("SNR (dB)") != std::string::npos);
  const std::string csv = slurp(dir / "l.csv");
  CHECK(csv.rfind("series,x,y\n", 0) == 0);
  CHECK(count(csv, "\n") == 7);
  CHECK(csv.find("\"pixel, raw\"") != std::string::npos);

  emit_line_chart(s, dir / "m.svg", "t", "SNR (dB)", "score");
  CHECK(slurp(dir / "m.svg") == svg);

  const std::vector<LineSeries> bad = {{"x", {1, 2}, {1}}};
  CHECK_THROWS_AS(emit_line_chart(bad, dir / "b.svg"), UsageError);
  CHECK_THROWS_AS(emit_line_chart(std::vector<LineSeries>{}, dir / "b.svg"), UsageError);
}
