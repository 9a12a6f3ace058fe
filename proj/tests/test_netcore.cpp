#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <vector>

#include "aoplab/net.hpp"
#include "aoplab/rng.hpp"

using namespace aoplab;

namespace {

// Straight-line re-implementation of the forward pass, kept deliberately
// independent of the library code path (no shared helpers).
std::vector<double> oracle_logits(const MlpSpec& spec, const ParamSet& params,
                                  const std::vector<double>& x) {
  std::vector<double> cur = x;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& w = params.layers[l].weight;
    const auto& b = params.layers[l].bias;
    std::vector<double> next(w.rows, 0.0);
    for (std::size_t j = 0; j < w.rows; ++j) {
      double acc = b[j];
      for (std::size_t i = 0; i < w.cols; ++i) acc += w.at(j, i) * cur[i];
      next[j] = acc;
    }
    if (l + 1 < params.layers.size()) {
      for (double& v : next) v = std::max(0.0, v);
    }
    cur = next;
  }
  return cur;
}

Tensor2 random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Tensor2 b(rows, cols);
  for (double& v : b.data) v = rng.normal();
  return b;
}

double scalar_loss(const MlpSpec& spec, const ParamSet& params,
                   const Tensor2& batch, const std::vector<int>& labels) {
  // Loss only (through the library forward, used for finite differences).
  ForwardTrace t = forward(spec, params, batch);
  const std::size_t n = batch.rows, C = spec.num_classes;
  double loss = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const double* z = t.logits.row(s);
    double m = z[0];
    for (std::size_t c = 1; c < C; ++c) m = std::max(m, z[c]);
    double lse = 0.0;
    for (std::size_t c = 0; c < C; ++c) lse += std::exp(z[c] - m);
    loss += m + std::log(lse) - z[static_cast<std::size_t>(labels[s])];
  }
  return loss / static_cast<double>(n);
}

}  // namespace

TEST_CASE("forward: zero network gives zero logits and uniform softmax") {
  MlpSpec spec{3, {4}, 3};
  ParamSet p = init_params(spec, 1);
  p.fill(0.0);
  const Tensor2 batch = random_batch(5, 3, 7);
  const ForwardTrace t = forward(spec, p, batch);
  for (double v : t.logits.data) CHECK(v == 0.0);
  const Tensor2 probs = softmax_rows(t.logits);
  for (double v : probs.data) CHECK(v == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("forward: identity single layer passes input through") {
  MlpSpec spec{4, {}, 4};
  ParamSet p = init_params(spec, 1);
  p.fill(0.0);
  for (std::size_t i = 0; i < 4; ++i) p.layers[0].weight.at(i, i) = 1.0;
  const Tensor2 batch = random_batch(6, 4, 9);
  const ForwardTrace t = forward(spec, p, batch);
  for (std::size_t s = 0; s < 6; ++s)
    for (std::size_t c = 0; c < 4; ++c)
      CHECK(t.logits.at(s, c) == batch.at(s, c));
  // With no hidden layer the features are the inputs themselves.
  CHECK(t.features.data == batch.data);
}

TEST_CASE("forward: random 2-layer net matches hand-rolled oracle to 1e-12") {
  MlpSpec spec{5, {7}, 3};
  const ParamSet p = init_params(spec, 42);
  const Tensor2 batch = random_batch(3, 5, 11);
  const ForwardTrace t = forward(spec, p, batch);
  for (std::size_t s = 0; s < batch.rows; ++s) {
    std::vector<double> x(batch.row(s), batch.row(s) + 5);
    const auto expect = oracle_logits(spec, p, x);
    for (std::size_t c = 0; c < 3; ++c)
      CHECK(t.logits.at(s, c) == doctest::Approx(expect[c]).epsilon(1e-12));
  }
}

TEST_CASE("forward: shape mismatch names the offending layer") {
  MlpSpec spec{5, {7}, 3};
  ParamSet p = init_params(spec, 42);
  p.layers[1].weight = Tensor2(3, 6);
  CHECK_THROWS_WITH_AS(forward(spec, p, random_batch(2, 5, 1)),
                       doctest::Contains("layer 1"), std::invalid_argument);
  const ParamSet ok = init_params(spec, 42);
  CHECK_THROWS_AS(forward(spec, ok, random_batch(2, 4, 1)),
                  std::invalid_argument);
}

TEST_CASE("softmax rows sum to 1 within 1e-12") {
  Rng rng(3);
  Tensor2 logits(40, 6);
  for (double& v : logits.data) v = 20.0 * rng.normal();
  const Tensor2 probs = softmax_rows(logits);
  for (std::size_t s = 0; s < probs.rows; ++s) {
    double sum = 0.0;
    for (std::size_t c = 0; c < probs.cols; ++c) sum += probs.at(s, c);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("backward: uniform logits give per-sample loss ln(num_classes)") {
  MlpSpec spec{3, {4}, 5};
  ParamSet p = init_params(spec, 1);
  p.fill(0.0);
  const Tensor2 batch = random_batch(4, 3, 5);
  const auto res = backward(spec, p, batch, {0, 1, 2, 4});
  CHECK(res.loss == doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("backward: analytic gradients match central finite differences") {
  // 3-class toy net; every parameter within 1e-6 relative error (h = 1e-5).
  MlpSpec spec{4, {5}, 3};
  ParamSet p = init_params(spec, 77);
  const Tensor2 batch = random_batch(6, 4, 13);
  const std::vector<int> labels = {0, 1, 2, 0, 1, 2};
  const auto res = backward(spec, p, batch, labels);

  const double h = 1e-5;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    for (std::size_t i = 0; i < p.layers[l].weight.size(); ++i) {
      const double orig = p.layers[l].weight.data[i];
      p.layers[l].weight.data[i] = orig + h;
      const double up = scalar_loss(spec, p, batch, labels);
      p.layers[l].weight.data[i] = orig - h;
      const double down = scalar_loss(spec, p, batch, labels);
      p.layers[l].weight.data[i] = orig;
      const double fd = (up - down) / (2 * h);
      const double an = res.grads.layers[l].weight.data[i];
      CHECK(std::fabs(an - fd) <=
            1e-6 * std::max({std::fabs(an), std::fabs(fd), 1e-4}));
    }
    for (std::size_t i = 0; i < p.layers[l].bias.size(); ++i) {
      const double orig = p.layers[l].bias[i];
      p.layers[l].bias[i] = orig + h;
      const double up = scalar_loss(spec, p, batch, labels);
      p.layers[l].bias[i] = orig - h;
      const double down = scalar_loss(spec, p, batch, labels);
      p.layers[l].bias[i] = orig;
      const double fd = (up - down) / (2 * h);
      const double an = res.grads.layers[l].bias[i];
      CHECK(std::fabs(an - fd) <=
            1e-6 * std::max({std::fabs(an), std::fabs(fd), 1e-4}));
    }
  }
}

TEST_CASE("backward: input gradients match central finite differences") {
  MlpSpec spec{4, {6}, 3};
  const ParamSet p = init_params(spec, 5);
  Tensor2 batch = random_batch(3, 4, 21);
  const std::vector<int> labels = {0, 2, 1};
  const auto res = backward(spec, p, batch, labels);

  const double h = 1e-5;
  for (std::size_t i = 0; i < batch.data.size(); ++i) {
    const double orig = batch.data[i];
    batch.data[i] = orig + h;
    const double up = scalar_loss(spec, p, batch, labels);
    batch.data[i] = orig - h;
    const double down = scalar_loss(spec, p, batch, labels);
    batch.data[i] = orig;
    const double fd = (up - down) / (2 * h);
    CHECK(res.input_grads.data[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("backward: masked weight gradient is exactly zero") {
  MlpSpec spec{3, {4}, 3};
  const ParamSet p = init_params(spec, 9);
  SparsityMask mask = SparsityMask::full(p);
  mask.layer_bits[0][2] = 0;
  mask.layer_bits[1][5] = 0;
  const Tensor2 batch = random_batch(4, 3, 17);
  const auto res = backward(spec, p, batch, {0, 1, 2, 0}, &mask);
  CHECK(res.grads.layers[0].weight.data[2] == 0.0);
  CHECK(res.grads.layers[1].weight.data[5] == 0.0);
}

TEST_CASE("gradient check on random small nets (<= 64 params)") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Rng shape_rng(seed);
    MlpSpec spec;
    spec.input_dim = 2 + shape_rng.uniform_below(3);
    spec.num_classes = 2 + shape_rng.uniform_below(2);
    if (seed % 3 != 0)
      spec.hidden_widths = {2 + shape_rng.uniform_below(3)};
    ParamSet p = init_params(spec, seed * 31 + 1);
    REQUIRE(p.total_count() <= 64);

    const Tensor2 batch = random_batch(5, spec.input_dim, seed + 100);
    std::vector<int> labels(5);
    for (std::size_t i = 0; i < 5; ++i)
      labels[i] = static_cast<int>(i % spec.num_classes);
    const auto res = backward(spec, p, batch, labels);

    const double h = 1e-5;
    double max_rel = 0.0;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      for (std::size_t i = 0; i < p.layers[l].weight.size(); ++i) {
        const double orig = p.layers[l].weight.data[i];
        p.layers[l].weight.data[i] = orig + h;
        const double up = scalar_loss(spec, p, batch, labels);
        p.layers[l].weight.data[i] = orig - h;
        const double down = scalar_loss(spec, p, batch, labels);
        p.layers[l].weight.data[i] = orig;
        const double fd = (up - down) / (2 * h);
        const double an = res.grads.layers[l].weight.data[i];
        max_rel = std::max(max_rel, std::fabs(an - fd) /
                                        std::max({std::fabs(fd), std::fabs(an), 1e-4}));
      }
    }
    CHECK(max_rel <= 1e-6);
  }
}

TEST_CASE("sgd_step: single plain step") {
  MlpSpec spec{1, {}, 2};
  ParamSet p = init_params(spec, 1);
  p.fill(0.0);
  ParamSet g = p, v = p;
  g.layers[0].weight.at(0, 0) = 1.0;
  SgdConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  sgd_step(p, g, v, cfg, 0.1);
  CHECK(p.layers[0].weight.at(0, 0) == doctest::Approx(-0.1).epsilon(1e-15));
}

TEST_CASE("sgd_step: two momentum steps reproduce the hand-computed recursion") {
  // theta=0, v=0, momentum 0.9, lr 0.1:
  //   g1 = 1.0 -> v = 1.0,  theta = -0.1
  //   g2 = 0.5 -> v = 1.4,  theta = -0.24
  MlpSpec spec{1, {}, 2};
  ParamSet p = init_params(spec, 1);
  p.fill(0.0);
  ParamSet g = p, v = p;
  SgdConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.9;
  cfg.weight_decay = 0.0;
  g.layers[0].weight.at(0, 0) = 1.0;
  sgd_step(p, g, v, cfg, 0.1);
  CHECK(p.layers[0].weight.at(0, 0) == doctest::Approx(-0.1).epsilon(1e-15));
  g.layers[0].weight.at(0, 0) = 0.5;
  sgd_step(p, g, v, cfg, 0.1);
  CHECK(v.layers[0].weight.at(0, 0) == doctest::Approx(1.4).epsilon(1e-15));
  CHECK(p.layers[0].weight.at(0, 0) == doctest::Approx(-0.24).epsilon(1e-15));
}

TEST_CASE("sgd_step: masked scalar stays exactly 0 over 100 steps") {
  MlpSpec spec{1, {}, 2};
  ParamSet p = init_params(spec, 1);
  ParamSet g = p, v = p;
  g.fill(0.0);
  v.fill(0.0);
  SparsityMask mask = SparsityMask::full(p);
  mask.layer_bits[0][0] = 0;
  SgdConfig cfg;
  cfg.momentum = 0.9;
  cfg.weight_decay = 1e-4;
  for (int i = 0; i < 100; ++i) {
    g.layers[0].weight.at(0, 0) = 1.0 + i;
    sgd_step(p, g, v, cfg, 0.1, &mask);
    CHECK(p.layers[0].weight.at(0, 0) == 0.0);
  }
}

TEST_CASE("lr schedule: cumulative step decay") {
  SgdConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.lr_schedule = {{100, 0.1}, {150, 0.1}};
  CHECK(lr_at_epoch(cfg, 1) == doctest::Approx(0.1));
  CHECK(lr_at_epoch(cfg, 100) == doctest::Approx(0.01));
  CHECK(lr_at_epoch(cfg, 150) == doctest::Approx(0.001));
  SgdConfig bad = cfg;
  bad.lr_schedule = {{150, 0.1}, {100, 0.1}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("training determinism: identical seed gives bitwise-identical weights") {
  MlpSpec spec{6, {8}, 3};
  const ParamSet start = init_params(spec, 3);
  const Tensor2 inputs = random_batch(30, 6, 2);
  std::vector<int> labels(30);
  for (std::size_t i = 0; i < 30; ++i) labels[i] = static_cast<int>(i % 3);
  SgdConfig cfg;
  cfg.learning_rate = 0.05;
  TrainOptions opts;
  opts.epochs = 5;
  opts.batch_size = 8;
  opts.seed = 99;
  const auto a = train_classifier(spec, start, inputs, labels, cfg, opts);
  const auto b = train_classifier(spec, start, inputs, labels, cfg, opts);
  CHECK(a.params.to_flat() == b.params.to_flat());
}

TEST_CASE("training under a mask keeps masked coordinates at 0 every step") {
  MlpSpec spec{4, {6}, 2};
  const ParamSet start = init_params(spec, 8);
  SparsityMask mask = SparsityMask::full(start);
  for (std::size_t i = 0; i < mask.layer_bits[0].size(); i += 3)
    mask.layer_bits[0][i] = 0;
  const Tensor2 inputs = random_batch(24, 4, 4);
  std::vector<int> labels(24);
  for (std::size_t i = 0; i < 24; ++i) labels[i] = static_cast<int>(i % 2);
  SgdConfig cfg;
  TrainOptions opts;
  opts.epochs = 4;
  opts.batch_size = 6;
  opts.mask = &mask;
  opts.on_epoch_end = [&](std::size_t, const ParamSet& p) {
    for (std::size_t i = 0; i < mask.layer_bits[0].size(); ++i) {
      if (!mask.layer_bits[0][i]) CHECK(p.layers[0].weight.data[i] == 0.0);
    }
  };
  train_classifier(spec, start, inputs, labels, cfg, opts);
}

TEST_CASE("init_params is reproducible and He-scaled") {
  MlpSpec spec{100, {50}, 10};
  const ParamSet a = init_params(spec, 12345);
  const ParamSet b = init_params(spec, 12345);
  CHECK(a.to_flat() == b.to_flat());
  // Empirical std of the first layer should sit near sqrt(2/fan_in).
  double ss = 0.0;
  for (double v : a.layers[0].weight.data) ss += v * v;
  const double std_hat = std::sqrt(ss / static_cast<double>(a.layers[0].weight.size()));
  CHECK(std_hat == doctest::Approx(std::sqrt(2.0 / 100.0)).epsilon(0.1));
  for (double v : a.layers[0].bias) CHECK(v == 0.0);
}
