#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "aoplab/averaging.hpp"
#include "aoplab/landscape.hpp"
#include "aoplab/metrics.hpp"

using namespace aoplab;

namespace {

double row_norm(const Tensor2& t, std::size_t r) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.cols; ++i) s += t.at(r, i) * t.at(r, i);
  return std::sqrt(s);
}

double full_norm(const ParamSet& p) {
  double s = 0.0;
  for (const auto& l : p.layers) {
    for (double v : l.weight.data) s += v * v;
    for (double v : l.bias) s += v * v;
  }
  return std::sqrt(s);
}

struct Scene {
  MlpSpec spec{4, {12}, 3};
  ParamSet params;
  BlobTask task;
};

Scene make_scene(std::uint64_t seed) {
  Scene s;
  BlobTaskSpec bspec;
  bspec.num_classes = 3;
  bspec.special_dims = 2;
  bspec.common_dims = 2;
  bspec.class_separation = 3.0;
  bspec.noise_sigma = 0.8;
  bspec.seed = seed;
  s.task = make_blob_task(bspec, 96, 96, 96);
  SgdConfig sgd;
  sgd.learning_rate = 0.05;
  TrainOptions opts;
  opts.epochs = 25;
  opts.batch_size = 32;
  opts.seed = seed;
  s.params = train_classifier(s.spec, init_params(s.spec, seed),
                              s.task.train.inputs, s.task.train.labels, sgd,
                              opts)
                 .params;
  return s;
}

}  // namespace

TEST_CASE("make_direction: filterwise rows carry the weight row norms") {
  const Scene s = make_scene(3);
  ParamSet base = s.params;
  base.layers[0].weight.at(1, 0) = 0.0;  // leave other entries as trained
  // Zero one full row to exercise the degenerate rule.
  for (std::size_t i = 0; i < base.layers[0].weight.cols; ++i)
    base.layers[0].weight.at(2, i) = 0.0;

  const ParamSet dir =
      make_direction(base, {7, DirectionNorm::per_unit_filterwise});
  for (std::size_t l = 0; l < base.layers.size(); ++l) {
    for (std::size_t r = 0; r < base.layers[l].weight.rows; ++r) {
      const double wn = row_norm(base.layers[l].weight, r);
      const double dn = row_norm(dir.layers[l].weight, r);
      CHECK(dn == doctest::Approx(wn).epsilon(1e-12));
    }
    for (double b : dir.layers[l].bias) CHECK(b == 0.0);
  }
  // The zeroed weight row produced a zero direction row.
  for (std::size_t i = 0; i < dir.layers[0].weight.cols; ++i)
    CHECK(dir.layers[0].weight.at(2, i) == 0.0);
}

TEST_CASE("make_direction: global norm matches the parameter norm") {
  const Scene s = make_scene(4);
  const ParamSet dir = make_direction(s.params, {11, DirectionNorm::global_norm});
  CHECK(full_norm(dir) == doctest::Approx(full_norm(s.params)).epsilon(1e-12));
}

TEST_CASE("make_direction: seeded and reproducible") {
  const Scene s = make_scene(5);
  const ParamSet a = make_direction(s.params, {3, DirectionNorm::none});
  const ParamSet b = make_direction(s.params, {3, DirectionNorm::none});
  const ParamSet c = make_direction(s.params, {4, DirectionNorm::none});
  CHECK(a.to_flat() == b.to_flat());
  CHECK(a.to_flat() != c.to_flat());
}

TEST_CASE("perturbation round-trips: theta + a d - a d = theta to 1e-12") {
  const Scene s = make_scene(6);
  const ParamSet dir = make_direction(s.params, {1, DirectionNorm::per_unit_filterwise});
  ParamSet moved = s.params;
  moved.axpy(0.37, dir);
  moved.axpy(-0.37, dir);
  const auto a = moved.to_flat();
  const auto b = s.params.to_flat();
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(std::fabs(a[i] - b[i]) <= 1e-12 * std::max(1.0, std::fabs(b[i])));
}

TEST_CASE("landscape_scan: alpha = 0 row equals the baseline bitwise") {
  const Scene s = make_scene(7);
  const ParamSet dir = make_direction(s.params, {0, DirectionNorm::per_unit_filterwise});
  const auto rows = landscape_scan(s.spec, s.params, dir, {-0.4, 0.0, 0.4},
                                   s.task.test, s.task.ood, ScorerKind::msp,
                                   ScorerConfig{});
  REQUIRE(rows.size() == 3);

  const ForwardTrace id_t = forward(s.spec, s.params, s.task.test.inputs);
  const ForwardTrace ood_t = forward(s.spec, s.params, s.task.ood.inputs);
  LabeledScores base{score_msp(id_t), score_msp(ood_t)};
  CHECK(rows[1].alpha == 0.0);
  CHECK(rows[1].auroc == auroc(base));
  CHECK(rows[1].fpr95 == fpr_at_tpr(base, 0.95));
  CHECK(rows[1].acc ==
        1.0 - classification_error(id_t.logits, s.task.test.labels));
}

TEST_CASE("landscape_scan: alpha/-alpha with d/-d mirror each other") {
  const Scene s = make_scene(8);
  const ParamSet dir = make_direction(s.params, {2, DirectionNorm::per_unit_filterwise});
  ParamSet neg = dir;
  for (auto& l : neg.layers) {
    for (double& v : l.weight.data) v = -v;
    for (double& v : l.bias) v = -v;
  }
  const std::vector<double> alphas = {-0.6, -0.2, 0.0, 0.2, 0.6};
  std::vector<double> mirrored;
  for (double a : alphas) mirrored.push_back(-a);
  const auto a = landscape_scan(s.spec, s.params, dir, alphas, s.task.test,
                                s.task.ood, ScorerKind::msp, ScorerConfig{});
  const auto b = landscape_scan(s.spec, s.params, neg, mirrored, s.task.test,
                                s.task.ood, ScorerKind::msp, ScorerConfig{});
  for (std::size_t i = 0; i < a.size(); ++i) {
    // theta + alpha d and theta + (-alpha)(-d) are the same point.
    CHECK(a[i].auroc == b[i].auroc);
    CHECK(a[i].fpr95 == b[i].fpr95);
    CHECK(a[i].acc == b[i].acc);
  }
}

TEST_CASE("landscape_scan: non-finite rows are flagged, scan continues") {
  const Scene s = make_scene(9);
  ParamSet dir = make_direction(s.params, {5, DirectionNorm::none});
  for (auto& l : dir.layers)
    for (double& v : l.weight.data) v *= 1e160;
  const auto rows = landscape_scan(s.spec, s.params, dir, {0.0, 1e160},
                                   s.task.test, s.task.ood, ScorerKind::msp,
                                   ScorerConfig{});
  CHECK(rows[0].finite);
  CHECK(!rows[1].finite);
}

TEST_CASE("averaged checkpoint is no less stable than the online one") {
  // Micro version of the stability probe: median AUROC range over seeded
  // directions, alpha in [-0.5, 0.5].
  BlobTaskSpec bspec;
  bspec.num_classes = 3;
  bspec.special_dims = 2;
  bspec.common_dims = 16;
  bspec.class_separation = 2.5;
  bspec.common_mean = 0.1;
  bspec.noise_sigma = 1.0;
  bspec.seed = 21;
  const BlobTask task = make_blob_task(bspec, 120, 240, 240);
  MlpSpec spec{bspec.input_dim(), {48}, 3};

  SgdConfig sgd;
  sgd.learning_rate = 0.08;
  ModelAverager avg(20);
  TrainOptions opts;
  opts.epochs = 40;
  opts.batch_size = 32;
  opts.seed = 77;
  opts.on_epoch_end = [&](std::size_t e, const ParamSet& p) { avg.absorb(e, p); };
  const ParamSet online = train_classifier(spec, init_params(spec, 77),
                                           task.train.inputs, task.train.labels,
                                           sgd, opts)
                              .params;
  const ParamSet averaged = avg.snapshot();

  const std::vector<double> alphas = {-0.5, -0.375, -0.25, -0.125, 0.0,
                                      0.125, 0.25,  0.375, 0.5};
  const auto median_range = [&](const ParamSet& params) {
    std::vector<double> ranges;
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      const ParamSet dir =
          make_direction(params, {seed, DirectionNorm::per_unit_filterwise});
      const auto rows = landscape_scan(spec, params, dir, alphas, task.test,
                                       task.ood, ScorerKind::msp, ScorerConfig{});
      double lo = 2.0, hi = -1.0;
      for (const auto& r : rows) {
        if (!r.finite) continue;
        lo = std::min(lo, r.auroc);
        hi = std::max(hi, r.auroc);
      }
      ranges.push_back(hi - lo);
    }
    std::sort(ranges.begin(), ranges.end());
    return 0.5 * (ranges[2] + ranges[3]);
  };
  CHECK(median_range(averaged) <= median_range(online) + 0.02);
}
