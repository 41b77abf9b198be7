#include "snrge/viz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "snrge/error.hpp"
#include "snrge/parallel.hpp"
#include "snrge/rng.hpp"

namespace snrge {
namespace {

const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string color_for(std::size_t i) {
  if (i < std::size(kPalette)) return kPalette[i];
  // Golden-angle hues past the fixed palette.
  char buf[32];
  std::snprintf(buf, sizeof buf, "hsl(%d,65%%,45%%)", static_cast<int>((i * 137) % 360));
  return buf;
}

std::string fmt(double v, const char* spec = "%.2f") {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string escape_csv(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Distinct labels in a stable order: SNR-like labels sorted numerically
// (noise first), anything else lexicographically after them.
std::vector<std::string> ordered_labels(std::span<const std::string> labels) {
  std::vector<std::string> uniq(labels.begin(), labels.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  std::stable_sort(uniq.begin(), uniq.end(), [](const std::string& a, const std::string& b) {
    const auto key = [](const std::string& s) -> std::pair<int, double> {
      try {
        const SnrLabel l = SnrLabel::parse(s);
        return {0, l.is_noise() ? -std::numeric_limits<double>::infinity() : l.db()};
      } catch (const Error&) {
        return {1, 0.0};
      }
    };
    return key(a) < key(b);
  });
  return uniq;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f) throw DataError("write failed: " + path.string());
}

struct Frame {
  double width = 720, height = 480;
  double left = 70, right = 170, top = 40, bottom = 55;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
  double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

void pad_range(double& lo, double& hi) {
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
    return;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
}

void svg_header(std::ostringstream& s, const Frame& f, const std::string& title) {
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << f.width
    << "\" height=\"" << f.height << "\" viewBox=\"0 0 " << f.width << " " << f.height << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) {
    s << "<text x=\"" << f.width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"15\">" << escape_xml(title) << "</text>\n";
  }
  s << "<rect x=\"" << f.left << "\" y=\"" << f.top << "\" width=\"" << f.width - f.left - f.right
    << "\" height=\"" << f.height - f.top - f.bottom
    << "\" fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n";
}

void svg_axes(std::ostringstream& s, const Frame& f, const std::string& xl, const std::string& yl) {
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    s << "<text x=\"" << fmt(f.px(xv)) << "\" y=\"" << fmt(f.height - f.bottom + 16)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
      << fmt(xv, "%.3g") << "</text>\n";
    s << "<text x=\"" << fmt(f.left - 6) << "\" y=\"" << fmt(f.py(yv) + 4)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(yv, "%.3g")
      << "</text>\n";
  }
  if (!xl.empty()) {
    s << "<text x=\"" << fmt((f.left + f.width - f.right) / 2) << "\" y=\"" << fmt(f.height - 12)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape_xml(xl)
      << "</text>\n";
  }
  if (!yl.empty()) {
    const double cy = (f.top + f.height - f.bottom) / 2;
    s << "<text x=\"16\" y=\"" << fmt(cy) << "\" transform=\"rotate(-90 16 " << fmt(cy)
      << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
      << escape_xml(yl) << "</text>\n";
  }
}

void svg_legend(std::ostringstream& s, const Frame& f, const std::vector<std::string>& names) {
  s << "<g class=\"legend\">\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = f.top + 10 + 18.0 * static_cast<double>(i);
    const double x = f.width - f.right + 14;
    s << "<g class=\"legend-entry\"><rect x=\"" << fmt(x) << "\" y=\"" << fmt(y - 9)
      << "\" width=\"10\" height=\"10\" fill=\"" << color_for(i) << "\"/><text x=\"" << fmt(x + 16)
      << "\" y=\"" << fmt(y) << "\" font-family=\"sans-serif\" font-size=\"12\">"
      << escape_xml(names[i]) << "</text></g>\n";
  }
  s << "</g>\n";
}

std::filesystem::path csv_path_for(const std::filesystem::path& svg) {
  std::filesystem::path p = svg;
  p.replace_extension(".csv");
  return p;
}

}  // namespace

std::vector<double> conditional_affinities(std::span<const Embedding> points, double perplexity) {
  const std::size_t n = points.size();
  if (!(perplexity > 0.0)) throw UsageError("perplexity must be positive");
  std::vector<double> d2(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < points[i].size(); ++k) {
        const double d = points[i][k] - points[j][k];
        acc += d * d;
      }
      d2[i * n + j] = d2[j * n + i] = acc;
    }
  }
  const double target = std::log(perplexity);
  std::vector<double> p(n * n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double* row = p.data() + i * n;
    const double* dr = d2.data() + i * n;
    // Shift by the smallest off-diagonal distance so exp() cannot underflow
    // to an all-zero row.
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) dmin = std::min(dmin, dr[j]);
    }
    for (int iter = 0; iter < 200; ++iter) {
      double sum = 0.0, wsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        row[j] = j == i ? 0.0 : std::exp(-(dr[j] - dmin) * beta);
        sum += row[j];
        wsum += (dr[j] - dmin) * row[j];
      }
      const double entropy = std::log(sum) + beta * wsum / sum;
      for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
      const double diff = entropy - target;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
  });
  return p;
}

Projection2D tsne_project(std::span<const Embedding> points, std::span<const std::string> labels,
                          const TsneConfig& cfg) {
  const std::size_t n = points.size();
  if (n < 4) throw UsageError("t-SNE needs at least 4 points");
  if (n > kTsneMaxPoints) {
    throw UsageError("t-SNE is capped at " + std::to_string(kTsneMaxPoints) +
                     " points; subsample first");
  }
  if (labels.size() != n) throw UsageError("t-SNE: label count mismatch");
  if (!(3.0 * cfg.perplexity < static_cast<double>(n))) {
    throw UsageError("t-SNE perplexity infeasible: need 3 * perplexity < point count");
  }
  if (cfg.iterations < 250) throw UsageError("t-SNE needs at least 250 iterations");

  std::vector<double> P = conditional_affinities(points, cfg.perplexity);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = (P[i * n + j] + P[j * n + i]) / (2.0 * static_cast<double>(n));
      P[i * n + j] = P[j * n + i] = std::max(v, 1e-12);
    }
    P[i * n + i] = 0.0;
  }

  Rng rng(derive_seed(cfg.seed, 0, 21));
  std::vector<double> y(2 * n), update(2 * n, 0.0), gains(2 * n, 1.0), grad(2 * n);
  for (double& v : y) v = 1e-4 * rng.normal();
  std::vector<double> num(n * n);

  const auto compute_q = [&]() {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      num[i * n + i] = 0.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
        const double q = 1.0 / (1.0 + dx * dx + dy * dy);
        num[i * n + j] = num[j * n + i] = q;
        sum += 2.0 * q;
      }
    }
    return sum;
  };
  const auto kl_divergence = [&](double qsum) {
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double p = P[i * n + j];
        const double q = std::max(num[i * n + j] / qsum, 1e-300);
        kl += p * std::log(p / q);
      }
    }
    return kl;
  };

  Projection2D out;
  for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
    const bool early = iter < cfg.exaggeration_iters;
    const double exag = early ? cfg.exaggeration : 1.0;
    const double momentum = early ? 0.5 : 0.8;
    const double qsum = compute_q();
    if (iter == cfg.exaggeration_iters) out.kl_after_exaggeration = kl_divergence(qsum);
    parallel_for(n, [&](std::size_t i) {
      double gx = 0.0, gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double q = num[i * n + j];
        const double m = (exag * P[i * n + j] - q / qsum) * q;
        gx += m * (y[2 * i] - y[2 * j]);
        gy += m * (y[2 * i + 1] - y[2 * j + 1]);
      }
      grad[2 * i] = 4.0 * gx;
      grad[2 * i + 1] = 4.0 * gy;
    });
    for (std::size_t k = 0; k < 2 * n; ++k) {
      const bool same_sign = (grad[k] > 0.0) == (update[k] > 0.0);
      gains[k] = same_sign ? gains[k] * 0.8 : gains[k] + 0.2;
      gains[k] = std::max(gains[k], 0.01);
      update[k] = momentum * update[k] - cfg.learning_rate * gains[k] * grad[k];
      y[k] += update[k];
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += y[2 * i];
      my += y[2 * i + 1];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[2 * i] -= mx;
      y[2 * i + 1] -= my;
    }
  }
  out.final_kl = kl_divergence(compute_q());
  if (cfg.iterations == cfg.exaggeration_iters) out.kl_after_exaggeration = out.final_kl;
  out.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(y[2 * i]) || !std::isfinite(y[2 * i + 1])) {
      throw NumericError("t-SNE produced non-finite coordinates");
    }
    out.points[i] = {y[2 * i], y[2 * i + 1]};
  }
  out.labels.assign(labels.begin(), labels.end());
  return out;
}

std::vector<std::size_t> subsample_per_label(std::span<const std::string> labels,
                                             std::size_t cap_per_label, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  std::vector<std::size_t> keep;
  std::uint64_t g = 0;
  for (auto& [label, idx] : groups) {
    if (idx.size() > cap_per_label) {
      Rng(derive_seed(seed, g, 23)).shuffle(idx.begin(), idx.end());
      idx.resize(cap_per_label);
    }
    ++g;
    keep.insert(keep.end(), idx.begin(), idx.end());
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

double silhouette(std::span<const Point2> points, std::span<const std::string> labels) {
  const std::size_t n = points.size();
  if (labels.size() != n) throw UsageError("silhouette: label count mismatch");
  std::map<std::string, std::size_t> ids;
  for (const auto& l : labels) ids.emplace(l, ids.size());
  if (ids.size() < 2 || n < 2) throw UsageError("silhouette needs at least two labels");
  std::vector<std::size_t> id(n), size(ids.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    id[i] = ids.at(labels[i]);
    ++size[id[i]];
  }
  double total = 0.0;
  std::vector<double> sums(ids.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      sums[id[j]] += std::hypot(points[i].x - points[j].x, points[i].y - points[j].y);
    }
    if (size[id[i]] < 2) continue;  // singleton clusters score 0
    const double a = sums[id[i]] / static_cast<double>(size[id[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sums.size(); ++c) {
      if (c != id[i]) b = std::min(b, sums[c] / static_cast<double>(size[c]));
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

void emit_scatter(const Projection2D& proj, const std::filesystem::path& svg_path,
                  const std::string& title) {
  if (proj.points.empty()) throw UsageError("scatter: no points");
  if (proj.labels.size() != proj.points.size()) throw UsageError("scatter: label count mismatch");
  const auto names = ordered_labels(proj.labels);
  std::map<std::string, std::size_t> color_index;
  for (std::size_t i = 0; i < names.size(); ++i) color_index[names[i]] = i;

  Frame f;
  f.x0 = f.x1 = proj.points[0].x;
  f.y0 = f.y1 = proj.points[0].y;
  for (const auto& p : proj.points) {
    f.x0 = std::min(f.x0, p.x);
    f.x1 = std::max(f.x1, p.x);
    f.y0 = std::min(f.y0, p.y);
    f.y1 = std::max(f.y1, p.y);
  }
  pad_range(f.x0, f.x1);
  pad_range(f.y0, f.y1);

  std::ostringstream s;
  svg_header(s, f, title);
  svg_axes(s, f, "", "");
  // Draw label groups in legend order so overlaps are reproducible.
  for (const auto& name : names) {
    s << "<g fill=\"" << color_for(color_index[name]) << "\" fill-opacity=\"0.75\">\n";
    for (std::size_t i = 0; i < proj.points.size(); ++i) {
      if (proj.labels[i] != name) continue;
      s << "<circle cx=\"" << fmt(f.px(proj.points[i].x)) << "\" cy=\""
        << fmt(f.py(proj.points[i].y)) << "\" r=\"3\"/>\n";
    }
    s << "</g>\n";
  }
  svg_legend(s, f, names);
  s << "</svg>\n";
  write_text(svg_path, s.str());

  std::ostringstream csv;
  csv << "x,y,label\n";
  for (std::size_t i = 0; i < proj.points.size(); ++i) {
    csv << fmt(proj.points[i].x, "%.17g") << "," << fmt(proj.points[i].y, "%.17g") << ","
        << escape_csv(proj.labels[i]) << "\n";
  }
  write_text(csv_path_for(svg_path), csv.str());
}

void emit_line_chart(std::span<const LineSeries> series, const std::filesystem::path& svg_path,
                     const std::string& title, const std::string& x_label,
                     const std::string& y_label) {
  bool any = false;
  Frame f;
  for (const auto& sr : series) {
    if (sr.x.size() != sr.y.size()) throw UsageError("line chart: x/y length mismatch");
    for (std::size_t i = 0; i < sr.x.size(); ++i) {
      if (!std::isfinite(sr.x[i]) || !std::isfinite(sr.y[i])) continue;
      if (!any) {
        f.x0 = f.x1 = sr.x[i];
        f.y0 = f.y1 = sr.y[i];
        any = true;
      }
      f.x0 = std::min(f.x0, sr.x[i]);
      f.x1 = std::max(f.x1, sr.x[i]);
      f.y0 = std::min(f.y0, sr.y[i]);
      f.y1 = std::max(f.y1, sr.y[i]);
    }
  }
  if (!any) throw UsageError("line chart: no data");
  pad_range(f.x0, f.x1);
  pad_range(f.y0, f.y1);

  std::ostringstream s;
  svg_header(s, f, title);
  svg_axes(s, f, x_label, y_label);
  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& sr = series[k];
    names.push_back(sr.name);
    const std::string color = color_for(k);
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < sr.x.size(); ++i) {
      if (!std::isfinite(sr.x[i]) || !std::isfinite(sr.y[i])) continue;
      s << (first ? "" : " ") << fmt(f.px(sr.x[i])) << "," << fmt(f.py(sr.y[i]));
      first = false;
    }
    s << "\"/>\n<g fill=\"" << color << "\">\n";
    for (std::size_t i = 0; i < sr.x.size(); ++i) {
      if (!std::isfinite(sr.x[i]) || !std::isfinite(sr.y[i])) continue;
      s << "<circle cx=\"" << fmt(f.px(sr.x[i])) << "\" cy=\"" << fmt(f.py(sr.y[i]))
        << "\" r=\"3\"/>\n";
    }
    s << "</g>\n";
  }
  svg_legend(s, f, names);
  s << "</svg>\n";
  write_text(svg_path, s.str());

  std::ostringstream csv;
  csv << "series,x,y\n";
  for (const auto& sr : series) {
    for (std::size_t i = 0; i < sr.x.size(); ++i) {
      csv << escape_csv(sr.name) << "," << fmt(sr.x[i], "%.17g") << "," << fmt(sr.y[i], "%.17g")
          << "\n";
    }
  }
  write_text(csv_path_for(svg_path), csv.str());
}

}  // namespace snrge
