#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "snrge/embedder.hpp"
#include "snrge/error.hpp"
#include "snrge/rng.hpp"
#include "test_util.hpp"

using namespace snrge;

namespace {

EmbedderConfig tiny(std::size_t rows = 16, std::size_t cols = 16) {
  EmbedderConfig c;
  c.conv_blocks = 2;
  c.base_channels = 3;
  c.dense_layers = 2;
  c.dense_width = 6;
  c.embedding_dim = 4;
  c.input_rows = rows;
  c.input_cols = cols;
  c.batch_size = 8;
  c.seed = 9;
  return c;
}

GreySpectrogram random_image(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  GreySpectrogram g;
  g.rows = rows;
  g.cols = cols;
  g.pixels.resize(rows * cols);
  Rng rng(seed);
  for (auto& p : g.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return g;
}

// Straight-line reimplementation of the forward pass.
Embedding oracle_forward(const EmbedderNetwork& net, const GreySpectrogram& img) {
  const auto p = net.params();
  std::vector<double> x(img.pixels.begin(), img.pixels.end());
  for (auto& v : x) v /= 255.0;
  for (const auto& l : net.conv_layers()) {
    std::vector<double> y(l.out_ch * l.out_h * l.out_w);
    for (std::size_t oc = 0; oc < l.out_ch; ++oc) {
      for (std::size_t oy = 0; oy < l.out_h; ++oy) {
        for (std::size_t ox = 0; ox < l.out_w; ++ox) {
          long double acc = p[l.bias_offset + oc];
          for (std::size_t ic = 0; ic < l.in_ch; ++ic) {
            for (int ky = 0; ky < 3; ++ky) {
              for (int kx = 0; kx < 3; ++kx) {
                const long iy = 2 * static_cast<long>(oy) + ky - 1;
                const long ix = 2 * static_cast<long>(ox) + kx - 1;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(l.in_h) ||
                    ix >= static_cast<long>(l.in_w)) {
                  continue;
                }
                acc += p[l.weight_offset + (oc * l.in_ch + ic) * 9 + ky * 3 + kx] *
                       x[(ic * l.in_h + iy) * l.in_w + ix];
              }
            }
          }
          y[(oc * l.out_h + oy) * l.out_w + ox] = std::max(0.0L, acc);
        }
      }
    }
    x = std::move(y);
  }
  for (const auto& l : net.dense_layers()) {
    std::vector<double> y(l.out);
    for (std::size_t o = 0; o < l.out; ++o) {
      long double acc = p[l.bias_offset + o];
      for (std::size_t i = 0; i < l.in; ++i) acc += p[l.weight_offset + o * l.in + i] * x[i];
      y[o] = l.relu ? std::max(0.0L, acc) : acc;
    }
    x = std::move(y);
  }
  double ss = 0.0;
  for (double v : x) ss += v * v;
  if (ss == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    x[0] = 1.0;
    return x;
  }
  for (auto& v : x) v /= std::sqrt(ss);
  return x;
}

// Two separable classes: a bright band in the top or bottom half.
TrainingSet toy_set(std::size_t per_class, std::uint64_t seed) {
  TrainingSet s;
  Rng rng(seed);
  for (int label = 0; label < 2; ++label) {
    for (std::size_t i = 0; i < per_class; ++i) {
      GreySpectrogram g;
      g.rows = g.cols = 16;
      g.pixels.resize(256);
      for (std::size_t r = 0; r < 16; ++r) {
        const bool lit = label == 0 ? r < 8 : r >= 8;
        for (std::size_t c = 0; c < 16; ++c) {
          const double base = lit ? 180.0 : 40.0;
          g.pixels[r * 16 + c] = static_cast<std::uint8_t>(base + rng.uniform(-30.0, 30.0));
        }
      }
      s.images.push_back(std::move(g));
      s.labels.push_back(label);
    }
  }
  return s;
}

}  // namespace

TEST_CASE("architecture validation") {
  const EmbedderConfig ref = EmbedderConfig::reference();
  CHECK(ref.conv_blocks == 7);
  CHECK(ref.dense_layers == 2);
  CHECK(ref.embedding_dim == 56);
  CHECK(ref.learning_rate == doctest::Approx(2e-4));
  CHECK_NOTHROW(ref.validate());

  EmbedderConfig deep = ref;
  deep.conv_blocks = 8;
  deep.input_rows = deep.input_cols = 64;
  CHECK_THROWS_AS(deep.validate(), UsageError);

  EmbedderConfig bad = tiny();
  bad.embedding_dim = 1;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = tiny();
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = tiny();
  bad.margin = -1.0;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = tiny();
  bad.conv_blocks = 0;
  CHECK_THROWS_AS(EmbedderNetwork{bad}, UsageError);
}

TEST_CASE("config round trip") {
  EmbedderConfig c = tiny();
  c.learning_rate = 3.5e-4;
  c.early_stop_val_loss = 0.12;
  const EmbedderConfig back = EmbedderConfig::from_config(c.to_config());
  CHECK(back.conv_blocks == c.conv_blocks);
  CHECK(back.dense_width == c.dense_width);
  CHECK(back.embedding_dim == c.embedding_dim);
  CHECK(back.learning_rate == c.learning_rate);
  CHECK(back.early_stop_val_loss == c.early_stop_val_loss);
  CHECK(back.seed == c.seed);
}

TEST_CASE("initialization is seeded") {
  const EmbedderNetwork a = init_network(tiny());
  const EmbedderNetwork b = init_network(tiny());
  CHECK(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
  EmbedderConfig other = tiny();
  other.seed = 10;
  const EmbedderNetwork c = init_network(other);
  CHECK_FALSE(std::equal(a.params().begin(), a.params().end(), c.params().begin()));

  const auto& l0 = a.conv_layers()[0];
  const double bound = std::sqrt(6.0 / 9.0);
  for (std::size_t i = 0; i < l0.out_ch * 9; ++i) CHECK(std::abs(a.params()[l0.weight_offset + i]) <= bound);
  for (std::size_t i = 0; i < l0.out_ch; ++i) CHECK(a.params()[l0.bias_offset + i] == 0.0);
}

TEST_CASE("forward pass matches an independent implementation") {
  for (auto [rows, cols] : {std::pair<std::size_t, std::size_t>{16, 16}, {13, 9}, {7, 21}}) {
    const EmbedderNetwork net = init_network(tiny(rows, cols));
    CHECK(net.conv_layers()[0].out_h == (rows + 1) / 2);
    for (std::uint64_t s = 0; s < 4; ++s) {
      const auto img = random_image(rows, cols, 100 + s);
      const Embedding e = forward_embed(net, img);
      const Embedding o = oracle_forward(net, img);
      REQUIRE(e.size() == 4);
      double norm = 0.0;
      for (std::size_t i = 0; i < e.size(); ++i) {
        CHECK(std::abs(e[i] - o[i]) <= 1e-10);
        norm += e[i] * e[i];
      }
      CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  const EmbedderNetwork net = init_network(tiny());
  CHECK_THROWS_AS(forward_embed(net, random_image(8, 16, 1)), UsageError);
}

TEST_CASE("embed_all matches per-image forward") {
  const EmbedderNetwork net = init_network(tiny());
  std::vector<GreySpectrogram> imgs;
  for (int i = 0; i < 9; ++i) imgs.push_back(random_image(16, 16, 40 + i));
  const auto all = embed_all(net, imgs);
  for (std::size_t i = 0; i < imgs.size(); ++i) CHECK(all[i] == forward_embed(net, imgs[i]));
}

TEST_CASE("semi-hard mining") {
  // 1-D embeddings padded to 2-D.
  auto emb = [](std::initializer_list<double> xs) {
    std::vector<Embedding> e;
    for (double x : xs) e.push_back({x, 0.0});
    return e;
  };
  SUBCASE("band negative preferred over a closer hard negative") {
    const auto e = emb({0.0, 1.0, 0.5, 1.2, 3.0});
    const std::vector<int> l = {0, 0, 1, 1, 1};
    const auto t = semi_hard_triplets(e, l, 0.5);
    // anchor 0, positive 1: d_ap = 1, band (1, 1.5) holds index 3 (1.2).
    REQUIRE(t.size() >= 1);
    CHECK(t[0] == Triplet{0, 1, 3});
  }
  SUBCASE("empty band falls back to the closest negative") {
    const auto e = emb({0.0, 1.0, 0.5, 4.0});
    const std::vector<int> l = {0, 0, 1, 1};
    const auto t = semi_hard_triplets(e, l, 0.5);
    CHECK(t[0] == Triplet{0, 1, 2});
  }
  SUBCASE("ties go to the lower index") {
    const auto e = emb({0.0, 1.0, 1.2, -1.2});
    const std::vector<int> l = {0, 0, 1, 1};
    const auto t = semi_hard_triplets(e, l, 0.5);
    CHECK(t[0] == Triplet{0, 1, 2});
  }
  SUBCASE("one triplet per ordered positive pair") {
    const auto e = emb({0.0, 1.0, 2.0, 5.0, 6.0});
    const std::vector<int> l = {0, 0, 0, 1, 1};
    CHECK(semi_hard_triplets(e, l, 0.2).size() == 3 * 2 + 2 * 1);
  }
  SUBCASE("invalid batches") {
    const auto e = emb({0.0, 1.0});
    CHECK_THROWS_AS(semi_hard_triplets(e, std::vector<int>{0, 0}, 0.2), UsageError);
    CHECK_THROWS_AS(semi_hard_triplets(e, std::vector<int>{0}, 0.2), UsageError);
  }
}

TEST_CASE("triplet loss") {
  CHECK(triplet_loss(1.0, 1.5, 0.2) == 0.0);
  CHECK(triplet_loss(1.0, 1.1, 0.2) == doctest::Approx(0.1));
  CHECK(triplet_loss(2.0, 1.0, 0.2) == doctest::Approx(1.2));

  const std::vector<Embedding> e = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 0.5}};
  const std::vector<Triplet> t = {{0, 1, 2}};
  std::vector<Embedding> g;
  const double loss = triplet_batch_loss(e, t, 0.2, &g);
  CHECK(loss == doctest::Approx(0.7));
  CHECK(g[0][0] == doctest::Approx(-1.0));
  CHECK(g[0][1] == doctest::Approx(1.0));
  CHECK(g[1][0] == doctest::Approx(1.0));
  CHECK(g[2][1] == doctest::Approx(-1.0));
  CHECK_THROWS_AS(triplet_batch_loss(e, {}, 0.2, nullptr), UsageError);

  // Unit-norm embeddings bound the loss by 2 + margin.
  Rng rng(3);
  std::vector<Embedding> unit(20, Embedding(5));
  std::vector<int> labels(20);
  for (std::size_t i = 0; i < unit.size(); ++i) {
    double ss = 0.0;
    for (auto& v : unit[i]) ss += (v = rng.normal()) * v;
    for (auto& v : unit[i]) v /= std::sqrt(ss);
    labels[i] = static_cast<int>(i % 3);
  }
  const auto trip = semi_hard_triplets(unit, labels, 0.3);
  const double l = triplet_batch_loss(unit, trip, 0.3, nullptr);
  CHECK(l >= 0.0);
  CHECK(l <= 2.3);
}

TEST_CASE("adam") {
  std::vector<double> w = {1.0, -2.0};
  AdamState st;
  AdamParams hp;
  hp.learning_rate = 0.1;
  CHECK(adam_step(w, std::vector<double>{0.0, 0.0}, st, hp));
  CHECK(w[0] == 1.0);
  CHECK(w[1] == -2.0);
  CHECK(st.t == 1);

  const std::vector<double> bad = {1.0, std::numeric_limits<double>::quiet_NaN()};
  const AdamState before = st;
  CHECK_FALSE(adam_step(w, bad, st, hp));
  CHECK(st.t == before.t);
  CHECK(st.m == before.m);
  CHECK(w[0] == 1.0);

  CHECK_THROWS_AS(adam_step(w, std::vector<double>{1.0}, st, hp), UsageError);
}

TEST_CASE("stratified batches") {
  const std::vector<int> labels = {0, 0, 0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 2, 2, 2};
  const auto b = stratified_batches(labels, 6, 4);
  REQUIRE_FALSE(b.empty());
  for (const auto& batch : b) {
    CHECK(batch.size() == 6);
    for (int c = 0; c < 3; ++c) {
      CHECK(std::count_if(batch.begin(), batch.end(), [&](std::size_t i) { return labels[i] == c; }) == 2);
    }
  }
  CHECK(b == stratified_batches(labels, 6, 4));
  CHECK_THROWS_AS(stratified_batches(std::vector<int>{0, 0, 0}, 4, 1), UsageError);
  CHECK_THROWS_AS(stratified_batches(std::vector<int>{0, 0, 1}, 4, 1), UsageError);
}

TEST_CASE("toy training converges and is repeatable") {
  const TrainingSet tr = toy_set(24, 1);
  const TrainingSet va = toy_set(12, 2);
  EmbedderConfig c = tiny();
  c.dense_layers = 1;
  c.learning_rate = 3e-3;
  c.epochs = 30;
  c.batch_size = 16;
  c.early_stop_val_loss = 0.01;
  EmbedderNetwork a(c);
  const TrainResult ra = train(a, tr, va);
  REQUIRE_FALSE(ra.history.empty());
  CHECK(ra.history.back().val_loss <= 0.1);
  CHECK(ra.history.back().val_loss < ra.history.front().val_loss + 1e-12);

  EmbedderNetwork b(c);
  const TrainResult rb = train(b, tr, va);
  CHECK(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
  CHECK(ra.history.size() == rb.history.size());

  TrainingSet one_class = tr;
  std::fill(one_class.labels.begin(), one_class.labels.end(), 0);
  EmbedderNetwork d(c);
  CHECK_THROWS_AS(train(d, one_class, va), UsageError);

  testutil::TempDir dir("loss_history");
  write_loss_history(dir / "loss.csv", ra.history);
  std::ifstream f(dir / "loss.csv");
  std::string line;
  std::getline(f, line);
  CHECK(line == "epoch,train_loss,val_loss");
  std::size_t rows = 0;
  while (std::getline(f, line)) ++rows;
  CHECK(rows == ra.history.size());
}

TEST_CASE("hyper_search") {
  const TrainingSet tr = toy_set(8, 5);
  const TrainingSet va = toy_set(4, 6);
  EmbedderConfig base = tiny();
  base.epochs = 2;
  base.batch_size = 8;
  SearchSpace space;
  space.conv_blocks_min = 1;
  space.conv_blocks_max = 3;
  space.embedding_dim_min = 2;
  space.embedding_dim_max = 6;

  const SearchResult one = hyper_search(space, base, 1, 3, tr, va);
  REQUIRE(one.trials.size() == 1);
  CHECK(one.best.conv_blocks == one.trials[0].config.conv_blocks);

  SearchSpace fixed = space;
  fixed.conv_blocks_min = fixed.conv_blocks_max = 2;
  fixed.dense_layers_min = fixed.dense_layers_max = 1;
  fixed.embedding_dim_min = fixed.embedding_dim_max = 4;
  fixed.learning_rate_min = fixed.learning_rate_max = 1e-3;
  const SearchResult deg = hyper_search(fixed, base, 2, 3, tr, va);
  CHECK(deg.best.conv_blocks == 2);
  CHECK(deg.best.learning_rate == doctest::Approx(1e-3));

  const SearchResult eight = hyper_search(space, base, 8, 3, tr, va);
  REQUIRE(eight.trials.size() == 8);
  std::vector<double> losses;
  for (const auto& t : eight.trials) {
    losses.push_back(t.val_loss);
    CHECK(t.config.conv_blocks >= 1);
    CHECK(t.config.conv_blocks <= 3);
    CHECK(t.config.learning_rate >= 1e-4);
    CHECK(t.config.learning_rate <= 1e-3);
  }
  std::sort(losses.begin(), losses.end());
  double best_loss = 0.0;
  for (const auto& t : eight.trials) {
    if (t.config.conv_blocks == eight.best.conv_blocks &&
        t.config.embedding_dim == eight.best.embedding_dim &&
        t.config.learning_rate == eight.best.learning_rate) {
      best_loss = t.val_loss;
    }
  }
  CHECK(best_loss == losses.front());
  CHECK(best_loss <= 0.5 * (losses[3] + losses[4]));

  CHECK_THROWS_AS(hyper_search(space, base, 0, 3, tr, va), UsageError);
  SearchSpace empty = space;
  empty.conv_blocks_min = 5;
  CHECK_THROWS_AS(hyper_search(empty, base, 1, 3, tr, va), UsageError);
}

TEST_CASE("checkpoints") {
  testutil::TempDir dir("checkpoint");
  const EmbedderNetwork net = init_network(tiny(13, 9));
  save_checkpoint(net, dir / "a.snrm");
  const EmbedderNetwork back = load_checkpoint(dir / "a.snrm");
  CHECK(back.config().conv_blocks == 2);
  CHECK(back.config().input_rows == 13);
  CHECK(back.config().input_cols == 9);
  REQUIRE(back.parameter_count() == net.parameter_count());
  CHECK(std::equal(net.params().begin(), net.params().end(), back.params().begin()));
  const auto img = random_image(13, 9, 2);
  CHECK(forward_embed(net, img) == forward_embed(back, img));

  EmbedderConfig big = EmbedderConfig::reference();
  big.base_channels = 1;
  big.dense_width = 4;
  big.embedding_dim = 3;
  const EmbedderNetwork deep(big);
  save_checkpoint(deep, dir / "deep.snrm");
  const EmbedderNetwork deep_back = load_checkpoint(dir / "deep.snrm");
  CHECK(deep_back.config().conv_blocks == 7);
  CHECK(deep_back.config().dense_layers == 2);

  {
    std::fstream f(dir / "a.snrm", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "a.snrm"), DataError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.snrm"), DataError);

  std::filesystem::resize_file(dir / "deep.snrm", std::filesystem::file_size(dir / "deep.snrm") - 8);
  CHECK_THROWS_AS(load_checkpoint(dir / "deep.snrm"), DataError);
}
