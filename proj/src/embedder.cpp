#include "snrge/embedder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>

#include "snrge/parallel.hpp"
#include "snrge/rng.hpp"

namespace snrge {

// ---------------------------------------------------------------------------
// Config

EmbedderConfig EmbedderConfig::reference() {
  EmbedderConfig c;
  c.conv_blocks = 7;
  c.dense_layers = 2;
  c.dense_width = 128;
  c.embedding_dim = 56;
  c.learning_rate = 2e-4;
  return c;
}

void EmbedderConfig::validate() const {
  if (conv_blocks < 1) throw UsageError("embedder needs at least one conv block");
  if (dense_layers < 1) throw UsageError("embedder needs at least one dense layer");
  if (embedding_dim < 2) throw UsageError("embedding_dim must be >= 2");
  if (dense_layers > 1 && dense_width < 1) throw UsageError("dense_width must be >= 1");
  if (base_channels < 1) throw UsageError("base_channels must be >= 1");
  if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be > 0");
  if (!(margin > 0.0)) throw UsageError("margin must be > 0");
  if (batch_size < 4) throw UsageError("batch_size must be >= 4");
  if (input_rows < 1 || input_cols < 1) throw UsageError("input shape must be non-empty");
  if (conv_blocks >= 63 || (input_rows >> conv_blocks) < 1 || (input_cols >> conv_blocks) < 1) {
    throw UsageError("input " + std::to_string(input_rows) + "x" + std::to_string(input_cols) +
                     " collapses below 1 pixel after " + std::to_string(conv_blocks) +
                     " stride-2 blocks");
  }
  if (base_channels << (conv_blocks - 1) > (std::size_t{1} << 20)) {
    throw UsageError("channel count overflows");
  }
}

EmbedderConfig EmbedderConfig::from_config(const Config& c) { return from_config(c, EmbedderConfig{}); }

EmbedderConfig EmbedderConfig::from_config(const Config& c, const EmbedderConfig& base) {
  EmbedderConfig e = base;
  const auto sz = [&](const char* key, std::size_t fallback) {
    const long v = c.get_int(key, static_cast<long>(fallback));
    if (v < 0) throw UsageError(std::string("config key '") + key + "' must be >= 0");
    return static_cast<std::size_t>(v);
  };
  e.conv_blocks = sz("conv_blocks", e.conv_blocks);
  e.dense_layers = sz("dense_layers", e.dense_layers);
  e.dense_width = sz("dense_width", e.dense_width);
  e.embedding_dim = sz("embedding_dim", e.embedding_dim);
  e.base_channels = sz("base_channels", e.base_channels);
  e.learning_rate = c.get_double("learning_rate", e.learning_rate);
  e.margin = c.get_double("margin", e.margin);
  e.batch_size = sz("batch_size", e.batch_size);
  e.epochs = sz("epochs", e.epochs);
  e.seed = static_cast<std::uint64_t>(c.get_int("embedder_seed", static_cast<long>(e.seed)));
  e.input_rows = sz("input_rows", e.input_rows);
  e.input_cols = sz("input_cols", e.input_cols);
  e.early_stop_val_loss = c.get_double("early_stop_val_loss", e.early_stop_val_loss);
  return e;
}

Config EmbedderConfig::to_config() const {
  Config c;
  c.set("conv_blocks", std::to_string(conv_blocks));
  c.set("dense_layers", std::to_string(dense_layers));
  c.set("dense_width", std::to_string(dense_width));
  c.set("embedding_dim", std::to_string(embedding_dim));
  c.set("base_channels", std::to_string(base_channels));
  c.set("learning_rate", format_list({learning_rate}));
  c.set("margin", format_list({margin}));
  c.set("batch_size", std::to_string(batch_size));
  c.set("epochs", std::to_string(epochs));
  c.set("embedder_seed", std::to_string(seed));
  c.set("input_rows", std::to_string(input_rows));
  c.set("input_cols", std::to_string(input_cols));
  c.set("early_stop_val_loss", format_list({early_stop_val_loss}));
  return c;
}

// ---------------------------------------------------------------------------
// Network

EmbedderNetwork::EmbedderNetwork(const EmbedderConfig& config) : config_(config) {
  config_.validate();
  std::size_t offset = 0;
  std::size_t ch = 1, h = config_.input_rows, w = config_.input_cols;
  for (std::size_t b = 0; b < config_.conv_blocks; ++b) {
    ConvLayer l;
    l.in_ch = ch;
    l.out_ch = config_.base_channels << b;
    l.in_h = h;
    l.in_w = w;
    l.out_h = (h + 1) / 2;
    l.out_w = (w + 1) / 2;
    l.weight_offset = offset;
    offset += l.out_ch * l.in_ch * 9;
    l.bias_offset = offset;
    offset += l.out_ch;
    conv_.push_back(l);
    ch = l.out_ch;
    h = l.out_h;
    w = l.out_w;
  }
  std::size_t in = ch * h * w;
  for (std::size_t d = 0; d < config_.dense_layers; ++d) {
    DenseLayer l;
    l.in = in;
    l.relu = d + 1 < config_.dense_layers;
    l.out = l.relu ? config_.dense_width : config_.embedding_dim;
    l.weight_offset = offset;
    offset += l.in * l.out;
    l.bias_offset = offset;
    offset += l.out;
    dense_.push_back(l);
    in = l.out;
  }
  params_.assign(offset, 0.0);

  Rng rng(derive_seed(config_.seed, 0, 11));
  for (const auto& l : conv_) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l.in_ch * 9));
    for (std::size_t i = 0; i < l.out_ch * l.in_ch * 9; ++i) {
      params_[l.weight_offset + i] = rng.uniform(-bound, bound);
    }
  }
  for (const auto& l : dense_) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l.in));
    for (std::size_t i = 0; i < l.in * l.out; ++i) {
      params_[l.weight_offset + i] = rng.uniform(-bound, bound);
    }
  }
}

EmbedderNetwork init_network(const EmbedderConfig& config) { return EmbedderNetwork(config); }

namespace {

// Output rows/cols touched by kernel offset k: input index 2·o + k - 1 must
// lie in [0, in).
struct Range {
  std::size_t lo, hi;  // inclusive lo, exclusive hi
};

Range valid_outputs(std::size_t k, std::size_t in, std::size_t out) {
  const std::size_t lo = k == 0 ? 1 : 0;
  // 2o + k - 1 <= in - 1  <=>  o <= (in - k) / 2
  const std::size_t hi = in >= k ? std::min(out, (in - k) / 2 + 1) : 0;
  return {lo, std::max(lo, hi)};
}

void conv_forward(const ConvLayer& l, std::span<const double> p, const double* in, double* out) {
  const std::size_t plane_in = l.in_h * l.in_w;
  const std::size_t plane_out = l.out_h * l.out_w;
  for (std::size_t oc = 0; oc < l.out_ch; ++oc) {
    double* o = out + oc * plane_out;
    std::fill(o, o + plane_out, p[l.bias_offset + oc]);
    for (std::size_t ic = 0; ic < l.in_ch; ++ic) {
      const double* src = in + ic * plane_in;
      const double* wk = p.data() + l.weight_offset + (oc * l.in_ch + ic) * 9;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const Range ry = valid_outputs(ky, l.in_h, l.out_h);
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const Range rx = valid_outputs(kx, l.in_w, l.out_w);
          const double w = wk[ky * 3 + kx];
          for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
            const double* irow = src + (2 * oy + ky - 1) * l.in_w;
            double* orow = o + oy * l.out_w;
            for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) orow[ox] += w * irow[2 * ox + kx - 1];
          }
        }
      }
    }
    for (std::size_t i = 0; i < plane_out; ++i) o[i] = std::max(0.0, o[i]);
  }
}

// `d_out` holds d(loss)/d(post-ReLU output) and is masked in place.
void conv_backward(const ConvLayer& l, std::span<const double> p, const double* in,
                   const double* out, double* d_out, double* d_in, std::span<double> grad) {
  const std::size_t plane_in = l.in_h * l.in_w;
  const std::size_t plane_out = l.out_h * l.out_w;
  if (d_in != nullptr) std::fill(d_in, d_in + l.in_ch * plane_in, 0.0);
  for (std::size_t oc = 0; oc < l.out_ch; ++oc) {
    double* dpre = d_out + oc * plane_out;
    const double* o = out + oc * plane_out;
    double bias_grad = 0.0;
    for (std::size_t i = 0; i < plane_out; ++i) {
      if (o[i] <= 0.0) dpre[i] = 0.0;
      bias_grad += dpre[i];
    }
    grad[l.bias_offset + oc] += bias_grad;
    for (std::size_t ic = 0; ic < l.in_ch; ++ic) {
      const double* src = in + ic * plane_in;
      const std::size_t woff = l.weight_offset + (oc * l.in_ch + ic) * 9;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const Range ry = valid_outputs(ky, l.in_h, l.out_h);
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const Range rx = valid_outputs(kx, l.in_w, l.out_w);
          const double w = p[woff + ky * 3 + kx];
          double acc = 0.0;
          for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
            const double* irow = src + (2 * oy + ky - 1) * l.in_w;
            const double* drow = dpre + oy * l.out_w;
            for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) acc += drow[ox] * irow[2 * ox + kx - 1];
            if (d_in != nullptr) {
              double* dst = d_in + ic * plane_in + (2 * oy + ky - 1) * l.in_w;
              for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) dst[2 * ox + kx - 1] += w * drow[ox];
            }
          }
          grad[woff + ky * 3 + kx] += acc;
        }
      }
    }
  }
}

void dense_forward(const DenseLayer& l, std::span<const double> p, const double* in,
                   double* out) {
  for (std::size_t o = 0; o < l.out; ++o) {
    const double* w = p.data() + l.weight_offset + o * l.in;
    double acc = p[l.bias_offset + o];
    for (std::size_t i = 0; i < l.in; ++i) acc += w[i] * in[i];
    out[o] = l.relu ? std::max(0.0, acc) : acc;
  }
}

void dense_backward(const DenseLayer& l, std::span<const double> p, const double* in,
                    const double* out, double* d_out, double* d_in, std::span<double> grad) {
  if (d_in != nullptr) std::fill(d_in, d_in + l.in, 0.0);
  for (std::size_t o = 0; o < l.out; ++o) {
    if (l.relu && out[o] <= 0.0) d_out[o] = 0.0;
    const double g = d_out[o];
    grad[l.bias_offset + o] += g;
    if (g == 0.0) continue;
    const double* w = p.data() + l.weight_offset + o * l.in;
    double* gw = grad.data() + l.weight_offset + o * l.in;
    for (std::size_t i = 0; i < l.in; ++i) gw[i] += g * in[i];
    if (d_in != nullptr) {
      for (std::size_t i = 0; i < l.in; ++i) d_in[i] += g * w[i];
    }
  }
}

}  // namespace

ForwardCache forward_cached(const EmbedderNetwork& net, const GreySpectrogram& img) {
  const EmbedderConfig& cfg = net.config();
  if (img.rows != cfg.input_rows || img.cols != cfg.input_cols ||
      img.pixels.size() != img.rows * img.cols) {
    throw UsageError("embedder input is " + std::to_string(img.rows) + "x" +
                     std::to_string(img.cols) + ", expected " + std::to_string(cfg.input_rows) +
                     "x" + std::to_string(cfg.input_cols));
  }
  const auto p = net.params();
  ForwardCache cache;
  cache.acts.reserve(net.conv_layers().size() + net.dense_layers().size() + 1);
  std::vector<double> input(img.pixels.size());
  for (std::size_t i = 0; i < input.size(); ++i) input[i] = img.pixels[i] / 255.0;
  cache.acts.push_back(std::move(input));
  for (const auto& l : net.conv_layers()) {
    std::vector<double> out(l.out_ch * l.out_h * l.out_w);
    conv_forward(l, p, cache.acts.back().data(), out.data());
    cache.acts.push_back(std::move(out));
  }
  for (const auto& l : net.dense_layers()) {
    std::vector<double> out(l.out);
    dense_forward(l, p, cache.acts.back().data(), out.data());
    cache.acts.push_back(std::move(out));
  }
  const auto& z = cache.acts.back();
  double ss = 0.0;
  for (double v : z) ss += v * v;
  cache.norm = std::sqrt(ss);
  cache.embedding.assign(z.size(), 0.0);
  if (!std::isfinite(cache.norm)) throw NumericError("non-finite embedding");
  if (cache.norm > 0.0) {
    for (std::size_t i = 0; i < z.size(); ++i) cache.embedding[i] = z[i] / cache.norm;
  } else {
    cache.embedding[0] = 1.0;
  }
  return cache;
}

Embedding forward_embed(const EmbedderNetwork& net, const GreySpectrogram& img) {
  return forward_cached(net, img).embedding;
}

std::vector<Embedding> embed_all(const EmbedderNetwork& net,
                                 std::span<const GreySpectrogram> images) {
  std::vector<Embedding> out(images.size());
  parallel_for(images.size(), [&](std::size_t i) { out[i] = forward_embed(net, images[i]); });
  return out;
}

void backward(const EmbedderNetwork& net, const ForwardCache& cache,
              std::span<const double> d_embedding, std::span<double> grad) {
  if (grad.size() != net.parameter_count()) throw UsageError("gradient buffer size mismatch");
  if (cache.norm == 0.0) return;
  const auto p = net.params();
  const Embedding& e = cache.embedding;
  double dot = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) dot += e[i] * d_embedding[i];
  std::vector<double> d_cur(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    d_cur[i] = (d_embedding[i] - e[i] * dot) / cache.norm;
  }

  const auto& conv = net.conv_layers();
  const auto& dense = net.dense_layers();
  std::vector<double> d_prev;
  for (std::size_t k = dense.size(); k-- > 0;) {
    const std::size_t a = conv.size() + k;  // index of this layer's input in acts
    d_prev.assign(dense[k].in, 0.0);
    dense_backward(dense[k], p, cache.acts[a].data(), cache.acts[a + 1].data(), d_cur.data(),
                   d_prev.data(), grad);
    d_cur.swap(d_prev);
  }
  for (std::size_t k = conv.size(); k-- > 0;) {
    const ConvLayer& l = conv[k];
    const bool need_input_grad = k > 0;
    if (need_input_grad) d_prev.assign(l.in_ch * l.in_h * l.in_w, 0.0);
    conv_backward(l, p, cache.acts[k].data(), cache.acts[k + 1].data(), d_cur.data(),
                  need_input_grad ? d_prev.data() : nullptr, grad);
    if (need_input_grad) d_cur.swap(d_prev);
  }
}

// ---------------------------------------------------------------------------
// Triplets

double euclidean(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) throw UsageError("embedding dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

std::vector<Triplet> semi_hard_triplets(std::span<const Embedding> embeddings,
                                        std::span<const int> labels, double margin) {
  const std::size_t n = embeddings.size();
  if (labels.size() != n) throw UsageError("mining: label count mismatch");
  if (n > 0 && std::all_of(labels.begin(), labels.end(), [&](int l) { return l == labels[0]; })) {
    throw UsageError("mining: batch contains a single class");
  }
  if (n == 0) throw UsageError("mining: empty batch");
  std::vector<double> dist(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      dist[i * n + j] = dist[j * n + i] = i == j ? 0.0 : euclidean(embeddings[i], embeddings[j]);
    }
  }
  std::vector<Triplet> out;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      const double d_ap = dist[a * n + p];
      std::size_t band = n, hardest = n;
      for (std::size_t k = 0; k < n; ++k) {
        if (labels[k] == labels[a]) continue;
        const double d_an = dist[a * n + k];
        if (hardest == n || d_an < dist[a * n + hardest]) hardest = k;
        if (d_an > d_ap && d_an < d_ap + margin && (band == n || d_an < dist[a * n + band])) {
          band = k;
        }
      }
      out.push_back({a, p, band != n ? band : hardest});
    }
  }
  return out;
}

double triplet_loss(double d_ap, double d_an, double margin) {
  return std::max(0.0, d_ap - d_an + margin);
}

double triplet_batch_loss(std::span<const Embedding> embeddings,
                          std::span<const Triplet> triplets, double margin,
                          std::vector<Embedding>* grad) {
  if (triplets.empty()) throw UsageError("no triplets");
  if (grad != nullptr) {
    grad->assign(embeddings.size(), Embedding(embeddings.empty() ? 0 : embeddings[0].size(), 0.0));
  }
  const double scale = 1.0 / static_cast<double>(triplets.size());
  double total = 0.0;
  for (const auto& t : triplets) {
    const Embedding& a = embeddings[t.anchor];
    const Embedding& p = embeddings[t.positive];
    const Embedding& n = embeddings[t.negative];
    const double d_ap = euclidean(a, p);
    const double d_an = euclidean(a, n);
    const double loss = triplet_loss(d_ap, d_an, margin);
    total += loss;
    if (grad == nullptr || loss <= 0.0) continue;
    auto& ga = (*grad)[t.anchor];
    auto& gp = (*grad)[t.positive];
    auto& gn = (*grad)[t.negative];
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double u = d_ap > 0.0 ? (a[i] - p[i]) / d_ap : 0.0;
      const double v = d_an > 0.0 ? (a[i] - n[i]) / d_an : 0.0;
      ga[i] += scale * (u - v);
      gp[i] -= scale * u;
      gn[i] += scale * v;
    }
  }
  return total * scale;
}

namespace {

// Forward pass, triplet selection on the resulting embeddings, loss and
// backward pass. `select` maps embeddings to the triplets to use.
template <class Select>
LossAndGradient loss_and_gradient(const EmbedderNetwork& net,
                                  std::span<const GreySpectrogram> images, Select&& select) {
  const std::size_t b = images.size();
  std::vector<ForwardCache> caches(b);
  parallel_for(b, [&](std::size_t i) { caches[i] = forward_cached(net, images[i]); });
  std::vector<Embedding> emb(b);
  for (std::size_t i = 0; i < b; ++i) emb[i] = caches[i].embedding;

  LossAndGradient out;
  std::vector<Embedding> d_emb;
  const std::vector<Triplet> triplets = select(emb);
  out.loss = triplet_batch_loss(emb, triplets, net.config().margin, &d_emb);

  const std::size_t np = net.parameter_count();
  std::vector<std::vector<double>> per_sample(b);
  parallel_for(b, [&](std::size_t i) {
    const bool touched =
        std::any_of(d_emb[i].begin(), d_emb[i].end(), [](double v) { return v != 0.0; });
    if (!touched) return;
    per_sample[i].assign(np, 0.0);
    backward(net, caches[i], d_emb[i], per_sample[i]);
  });
  out.grad.assign(np, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    if (per_sample[i].empty()) continue;
    for (std::size_t j = 0; j < np; ++j) out.grad[j] += per_sample[i][j];
  }
  return out;
}

}  // namespace

LossAndGradient batch_loss_and_gradient(const EmbedderNetwork& net,
                                        std::span<const GreySpectrogram> images,
                                        std::span<const Triplet> triplets) {
  for (const auto& t : triplets) {
    if (t.anchor >= images.size() || t.positive >= images.size() ||
        t.negative >= images.size()) {
      throw UsageError("triplet index out of range");
    }
  }
  return loss_and_gradient(net, images, [&](const std::vector<Embedding>&) {
    return std::vector<Triplet>(triplets.begin(), triplets.end());
  });
}

// ---------------------------------------------------------------------------
// Adam

bool adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamParams& hp) {
  if (params.size() != grads.size()) throw UsageError("adam: parameter/gradient size mismatch");
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw UsageError("adam: state size mismatch");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) return false;
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(hp.beta1, t);
  const double c2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * grads[i];
    state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= hp.learning_rate * m_hat / (std::sqrt(v_hat) + hp.epsilon);
  }
  return true;
}

// ---------------------------------------------------------------------------
// Training

std::vector<std::vector<std::size_t>> stratified_batches(std::span<const int> labels,
                                                         std::size_t batch_size,
                                                         std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  if (by_class.size() < 2) {
    throw UsageError("unsatisfiable batch stratification: fewer than two classes");
  }
  std::size_t smallest = labels.size(), largest = 0;
  for (const auto& [label, idx] : by_class) {
    smallest = std::min(smallest, idx.size());
    largest = std::max(largest, idx.size());
  }
  if (smallest < 2) {
    throw UsageError("unsatisfiable batch stratification: a class has fewer than two members");
  }
  const std::size_t per_class =
      std::min(smallest, std::max<std::size_t>(2, batch_size / by_class.size()));
  std::size_t c = 0;
  for (auto& [label, idx] : by_class) {
    Rng(derive_seed(seed, c++, 5)).shuffle(idx.begin(), idx.end());
  }
  const std::size_t n_batches = (largest + per_class - 1) / per_class;
  std::vector<std::vector<std::size_t>> batches(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    for (const auto& [label, idx] : by_class) {
      for (std::size_t j = 0; j < per_class; ++j) {
        batches[b].push_back(idx[(b * per_class + j) % idx.size()]);
      }
    }
  }
  return batches;
}

namespace {

template <class T>
std::vector<T> gather(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

void check_set(const TrainingSet& s, const char* name) {
  if (s.images.size() != s.labels.size()) {
    throw UsageError(std::string(name) + " set: image/label count mismatch");
  }
}

}  // namespace

double evaluate_loss(const EmbedderNetwork& net, const TrainingSet& data) {
  check_set(data, "evaluation");
  const auto batches =
      stratified_batches(data.labels, net.config().batch_size, derive_seed(net.config().seed, 0, 6));
  const std::vector<Embedding> emb = embed_all(net, data.images);
  double total = 0.0;
  for (const auto& batch : batches) {
    const auto be = gather(emb, batch);
    const auto bl = gather(data.labels, batch);
    const auto triplets = semi_hard_triplets(be, bl, net.config().margin);
    total += triplet_batch_loss(be, triplets, net.config().margin, nullptr);
  }
  return total / static_cast<double>(batches.size());
}

TrainResult train(EmbedderNetwork& net, const TrainingSet& train_set, const TrainingSet& val_set) {
  check_set(train_set, "training");
  check_set(val_set, "validation");
  const EmbedderConfig& cfg = net.config();
  // Surface stratification problems before any work is done.
  stratified_batches(train_set.labels, cfg.batch_size, 0);
  stratified_batches(val_set.labels, cfg.batch_size, 0);

  AdamState state;
  AdamParams hp;
  hp.learning_rate = cfg.learning_rate;
  TrainResult result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto batches =
        stratified_batches(train_set.labels, cfg.batch_size, derive_seed(cfg.seed, epoch, 7));
    double epoch_loss = 0.0;
    for (const auto& batch : batches) {
      const auto images = gather(train_set.images, batch);
      const auto labels = gather(train_set.labels, batch);
      const LossAndGradient lg = loss_and_gradient(net, images, [&](const std::vector<Embedding>& emb) {
        return semi_hard_triplets(emb, labels, cfg.margin);
      });
      if (!std::isfinite(lg.loss)) {
        throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
      }
      epoch_loss += lg.loss;
      if (!adam_step(net.params(), lg.grad, state, hp)) ++result.skipped_steps;
    }
    EpochLoss e;
    e.epoch = epoch;
    e.train_loss = epoch_loss / static_cast<double>(batches.size());
    e.val_loss = evaluate_loss(net, val_set);
    if (!std::isfinite(e.val_loss)) {
      throw NumericError("training diverged: non-finite validation loss");
    }
    result.history.push_back(e);
    if (cfg.early_stop_val_loss > 0.0 && e.val_loss <= cfg.early_stop_val_loss) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

void write_loss_history(const std::filesystem::path& path, std::span<const EpochLoss> history) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write loss history: " + path.string());
  f << "epoch,train_loss,val_loss\n";
  char buf[96];
  for (const auto& e : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", e.epoch, e.train_loss, e.val_loss);
    f << buf;
  }
}

SearchResult hyper_search(const SearchSpace& space, const EmbedderConfig& base,
                          std::size_t budget, std::uint64_t seed, const TrainingSet& train_set,
                          const TrainingSet& val_set) {
  if (budget < 1) throw UsageError("hyper_search: budget must be >= 1");
  if (space.conv_blocks_min > space.conv_blocks_max ||
      space.dense_layers_min > space.dense_layers_max ||
      space.embedding_dim_min > space.embedding_dim_max ||
      !(space.learning_rate_min > 0.0) || space.learning_rate_min > space.learning_rate_max) {
    throw UsageError("hyper_search: empty search space");
  }
  Rng rng(derive_seed(seed, 0, 13));
  const auto pick = [&](std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
  };
  SearchResult result;
  for (std::size_t trial = 0; trial < budget; ++trial) {
    EmbedderConfig cfg = base;
    cfg.conv_blocks = pick(space.conv_blocks_min, space.conv_blocks_max);
    cfg.dense_layers = pick(space.dense_layers_min, space.dense_layers_max);
    cfg.embedding_dim = pick(space.embedding_dim_min, space.embedding_dim_max);
    const double u = rng.uniform();
    cfg.learning_rate = space.learning_rate_min *
                        std::pow(space.learning_rate_max / space.learning_rate_min, u);
    EmbedderNetwork net(cfg);
    const TrainResult tr = train(net, train_set, val_set);
    const double val = tr.history.empty() ? evaluate_loss(net, val_set) : tr.history.back().val_loss;
    result.trials.push_back({cfg, val});
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < result.trials.size(); ++i) {
    if (result.trials[i].val_loss < result.trials[best].val_loss) best = i;
  }
  result.best = result.trials[best].config;
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'S', 'N', 'R', 'G', 'E', 'M', 'B', 'D'};

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* p, std::size_t n) { bytes.insert(bytes.end(), p, p + n); }
  std::vector<char> bytes;

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
};

class Reader {
 public:
  explicit Reader(std::vector<char> b) : bytes_(std::move(b)) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  void raw(char* out, std::size_t n) {
    need(n);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("checkpoint truncated");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const EmbedderNetwork& net, const std::filesystem::path& path) {
  const EmbedderConfig& c = net.config();
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  for (std::size_t v : {c.conv_blocks, c.dense_layers, c.dense_width, c.embedding_dim,
                        c.base_channels, c.batch_size, c.epochs, c.input_rows, c.input_cols}) {
    w.u64(v);
  }
  w.u64(c.seed);
  w.f64(c.learning_rate);
  w.f64(c.margin);
  w.f64(c.early_stop_val_loss);
  w.u64(net.parameter_count());
  for (double p : net.params()) w.f64(p);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write checkpoint: " + path.string());
  f.write(w.bytes.data(), static_cast<std::streamsize>(w.bytes.size()));
  if (!f) throw DataError("checkpoint write failed: " + path.string());
}

EmbedderNetwork load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read checkpoint: " + path.string());
  Reader r(std::vector<char>((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>()));
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw DataError(path.string() + ": not an embedder checkpoint (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  EmbedderConfig c;
  std::size_t* fields[] = {&c.conv_blocks, &c.dense_layers, &c.dense_width,
                           &c.embedding_dim, &c.base_channels, &c.batch_size,
                           &c.epochs, &c.input_rows, &c.input_cols};
  for (std::size_t* field : fields) *field = static_cast<std::size_t>(r.u64());
  c.seed = r.u64();
  c.learning_rate = r.f64();
  c.margin = r.f64();
  c.early_stop_val_loss = r.f64();
  EmbedderNetwork net;
  try {
    net = EmbedderNetwork(c);
  } catch (const UsageError& e) {
    throw DataError(path.string() + ": invalid architecture: " + e.what());
  }
  const std::uint64_t count = r.u64();
  if (count != net.parameter_count()) {
    throw DataError(path.string() + ": architecture mismatch (parameter count " +
                    std::to_string(count) + " vs " + std::to_string(net.parameter_count()) + ")");
  }
  for (double& p : net.params()) p = r.f64();
  if (!r.at_end()) throw DataError(path.string() + ": trailing bytes after parameters");
  return net;
}

}  // namespace snrge
