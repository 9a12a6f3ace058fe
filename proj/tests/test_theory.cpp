#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <vector>

#include "aoplab/rng.hpp"
#include "aoplab/theory.hpp"

using namespace aoplab;

TEST_CASE("bayes classifier weights") {
  TheoryParams p;
  p.eta = 0.0;
  CHECK(bayes_classifier(p).w1 == 1.0);
  CHECK(bayes_classifier(p).wc == 0.0);
  p.eta = 0.37;
  p.d = 0;
  const LinearClassifier f = bayes_classifier(p);
  CHECK(f.w1 == 1.0);
  CHECK(f.wc == 0.37);  // irrelevant at d = 0: no common feature to weight
}

TEST_CASE("lasso classifier: positive-part solution") {
  TheoryParams p;
  p.eta = 0.01;
  p.lambda = 1.5;
  CHECK(lasso_classifier(p).w1 == 0.0);
  CHECK(lasso_classifier(p).wc == 0.0);

  p.lambda = p.eta;
  const LinearClassifier at_eta = lasso_classifier(p);
  CHECK(at_eta.w1 == doctest::Approx(1.0 - 0.01).epsilon(1e-16));
  CHECK(at_eta.wc == 0.0);  // common features exactly eliminated

  p.lambda = 0.0;
  const LinearClassifier at_zero = lasso_classifier(p);
  CHECK(at_zero.w1 == bayes_classifier(p).w1);
  CHECK(at_zero.wc == bayes_classifier(p).wc);
}

TEST_CASE("lasso classifier: exact over random (eta, lambda)") {
  Rng rng(2);
  for (int it = 0; it < 1000; ++it) {
    TheoryParams p;
    p.eta = rng.uniform();
    p.lambda = rng.uniform() * 1.5;
    const LinearClassifier f = lasso_classifier(p);
    CHECK(f.w1 == std::max(0.0, 1.0 - p.lambda));
    CHECK(f.wc == std::max(0.0, p.eta - p.lambda));
  }
}

TEST_CASE("closed-form risks: frozen high-precision spot values") {
  TheoryParams p;
  p.sigma = 1.0;
  p.eta = 0.01;

  p.d = 0;
  CHECK(closed_form_risks(bayes_classifier(p), p).r_id ==
        doctest::Approx(0.15865525393145707).epsilon(1e-12));

  p.d = 10000;  // d*eta^2 = 1, sqrt(1 + d eta^2) = sqrt 2
  CHECK(closed_form_risks(bayes_classifier(p), p).r_id ==
        doctest::Approx(0.07864960352514257).epsilon(1e-12));

  p.delta = 2.0;
  CHECK(closed_form_risks(bayes_classifier(p), p).r_ood ==
        doctest::Approx(0.2566974878558214).epsilon(1e-12));
}

TEST_CASE("closed-form risks: delta = 0 makes r_ood exactly 1") {
  TheoryParams p;
  p.delta = 0.0;
  p.d = 500;
  for (double lambda : {0.0, 0.005, 0.02}) {
    p.lambda = lambda;
    const RiskPair r = closed_form_risks(lasso_classifier(p), p);
    CHECK(r.r_ood == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("closed-form risks: zero classifier rejected") {
  TheoryParams p;
  p.lambda = 1.0;
  CHECK_THROWS_AS(closed_form_risks(lasso_classifier(p), p),
                  std::invalid_argument);
}

TEST_CASE("Eq-5 specialization: generalized formula reduces to the textbook form") {
  for (std::size_t d : {0ul, 100ul, 10000ul, 100000ul}) {
    for (double delta : {0.5, 1.0, 2.0, 3.0}) {
      TheoryParams p;
      p.d = d;
      p.eta = 0.01;
      p.sigma = 1.3;
      p.delta = delta;
      const RiskPair r = closed_form_risks(bayes_classifier(p), p);
      const double u = static_cast<double>(d) * p.eta * p.eta;
      const double r_id_direct = normal_upper_tail(std::sqrt(1.0 + u) / p.sigma);
      const double r_ood_direct =
          normal_upper_tail((delta - u) / (p.sigma * std::sqrt(1.0 + u))) +
          normal_upper_tail((delta + u) / (p.sigma * std::sqrt(1.0 + u)));
      CHECK(std::fabs(r.r_id - r_id_direct) <= 1e-14);
      CHECK(std::fabs(r.r_ood - r_ood_direct) <= 1e-14);
    }
  }
}

TEST_CASE("tail symmetry: Qbar(-a) + Qbar(a) = 1 over [-8, 8]") {
  for (double a = -8.0; a <= 8.0; a += 0.125) {
    CHECK(std::fabs(normal_upper_tail(-a) + normal_upper_tail(a) - 1.0) <= 1e-14);
  }
}

TEST_CASE("positive scaling: r_id invariant, r_ood maps delta -> delta/c") {
  TheoryParams p;
  p.d = 2000;
  p.eta = 0.02;
  p.sigma = 0.8;
  p.delta = 1.7;
  const LinearClassifier f{0.9, 0.015, p.d};
  const RiskPair base = closed_form_risks(f, p);
  for (double c : {0.1, 2.0, 17.0}) {
    const LinearClassifier scaled{c * f.w1, c * f.wc, f.d};
    const RiskPair rs = closed_form_risks(scaled, p);
    // The ratio m/sqrt(v) is unchanged; only rounding of c*w separates them.
    CHECK(rs.r_id == doctest::Approx(base.r_id).epsilon(1e-12));
    TheoryParams shifted = p;
    shifted.delta = p.delta / c;
    const RiskPair rd = closed_form_risks(f, shifted);
    CHECK(rs.r_ood == doctest::Approx(rd.r_ood).epsilon(1e-13));
  }
}

TEST_CASE("monte carlo: sigma -> 0 limit is deterministic") {
  TheoryParams p;
  p.sigma = 1e-12;
  p.eta = 0.01;
  p.d = 40000;   // d eta^2 = 4
  p.delta = 2.0; // < d eta^2, so every OOD draw is accepted
  const auto mc = monte_carlo_risks(bayes_classifier(p), p, 10000, 5);
  CHECK(mc.risks.r_id == 0.0);
  CHECK(mc.risks.r_ood == 1.0);
}

TEST_CASE("monte carlo: fixed seed reproduces bitwise") {
  TheoryParams p;
  p.d = 1000;
  p.delta = 1.0;
  const auto a = monte_carlo_risks(bayes_classifier(p), p, 50000, 77);
  const auto b = monte_carlo_risks(bayes_classifier(p), p, 50000, 77);
  CHECK(a.risks.r_id == b.risks.r_id);
  CHECK(a.risks.r_ood == b.risks.r_ood);
  CHECK_THROWS_AS(monte_carlo_risks(bayes_classifier(p), p, 100, 1),
                  std::invalid_argument);
}

TEST_CASE("monte carlo agrees with closed form over a 3x3x3 grid at n = 1e6") {
  const std::size_t n = 1000000;
  std::uint64_t seed = 0;
  for (std::size_t d : {0ul, 1000ul, 50000ul}) {
    for (double delta : {1.0, 2.0, 3.0}) {
      for (double lambda : {0.0, 0.01, 0.5}) {
        TheoryParams p;
        p.d = d;
        p.delta = delta;
        p.lambda = lambda;
        const LinearClassifier f = lasso_classifier(p);
        const RiskPair cf = closed_form_risks(f, p);
        const auto mc = monte_carlo_risks(f, p, n, ++seed);
        const double se_floor = 1.0 / static_cast<double>(n);
        CHECK(std::fabs(mc.risks.r_id - cf.r_id) <=
              4.0 * std::max(mc.standard_errors.r_id, se_floor));
        CHECK(std::fabs(mc.risks.r_ood - cf.r_ood) <=
              4.0 * std::max(mc.standard_errors.r_ood, se_floor));
      }
    }
  }
}

TEST_CASE("monte carlo against the full per-coordinate generator at small d") {
  // Bridges the summed-common-feature sampler to literal per-coordinate
  // draws of the data model.
  TheoryParams p;
  p.d = 10;
  p.eta = 0.3;
  p.sigma = 1.0;
  p.delta = 1.2;
  const LinearClassifier f = bayes_classifier(p);
  const std::size_t n = 400000;

  Rng rng(mix_seed(123, 0x3C4));
  std::size_t id_wrong = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = (rng.next_u64() & 1) ? 1.0 : -1.0;
    double logit = f.w1 * (y + p.sigma * rng.normal());
    for (std::size_t k = 0; k < p.d; ++k)
      logit += f.wc * (y * p.eta + p.sigma * rng.normal());
    if (logit * y <= 0.0) ++id_wrong;
  }
  const double direct = static_cast<double>(id_wrong) / static_cast<double>(n);
  const auto mc = monte_carlo_risks(f, p, n, 123);
  const double se = std::sqrt(direct * (1 - direct) / n);
  CHECK(std::fabs(direct - mc.risks.r_id) <= 5.0 * se * std::sqrt(2.0));
}

TEST_CASE("monte carlo error shrinks like 1/sqrt(n)") {
  TheoryParams p;  // r_id = Qbar(1) ~ 0.159
  const LinearClassifier f = bayes_classifier(p);
  const RiskPair cf = closed_form_risks(f, p);
  std::vector<double> log_n, log_err;
  for (std::size_t n : {1000ul, 10000ul, 100000ul, 1000000ul}) {
    double mean_abs = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto mc = monte_carlo_risks(f, p, n, 1000 + seed);
      mean_abs += std::fabs(mc.risks.r_id - cf.r_id);
    }
    mean_abs /= 20.0;
    log_n.push_back(std::log(static_cast<double>(n)));
    log_err.push_back(std::log(mean_abs));
  }
  // Least-squares slope of log-error vs log-n.
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < log_n.size(); ++i) {
    mx += log_n[i];
    my += log_err[i];
  }
  mx /= log_n.size();
  my /= log_err.size();
  double num = 0, den = 0;
  for (std::size_t i = 0; i < log_n.size(); ++i) {
    num += (log_n[i] - mx) * (log_err[i] - my);
    den += (log_n[i] - mx) * (log_n[i] - mx);
  }
  const double slope = num / den;
  CHECK(slope <= -0.4);
  CHECK(slope >= -0.6);
}

TEST_CASE("sweep_d: risks move monotonically in d") {
  TheoryParams tmpl;
  tmpl.eta = 0.01;
  tmpl.sigma = 1.0;
  std::vector<std::size_t> d_values;
  for (std::size_t d = 0; d <= 100000; d += 2500) d_values.push_back(d);
  const auto rows = sweep_d(tmpl, d_values, {1.0, 2.0, 3.0});
  for (double delta : {1.0, 2.0, 3.0}) {
    double prev_id = 1.0, prev_ood = -1.0, prev_first_tail = -1.0;
    for (const auto& r : rows) {
      if (r.delta != delta) continue;
      CHECK(r.r_id < prev_id);  // strictly decreasing for eta > 0
      CHECK(r.r_ood >= prev_ood);
      const double u = static_cast<double>(r.d) * tmpl.eta * tmpl.eta;
      const double first_tail =
          normal_upper_tail((delta - u) / std::sqrt(1.0 + u));
      CHECK(first_tail >= prev_first_tail);
      prev_id = r.r_id;
      prev_ood = r.r_ood;
      prev_first_tail = first_tail;
    }
  }
}

TEST_CASE("sweep_lambda: r_ood falls and r_id rises; zero classifier rejected") {
  TheoryParams tmpl;
  tmpl.d = 50000;
  tmpl.eta = 0.01;
  tmpl.sigma = 1.0;
  tmpl.delta = 2.0;
  std::vector<double> lambdas;
  for (int i = 0; i <= 99; ++i) lambdas.push_back(0.01 * i);
  const auto rows = sweep_lambda(tmpl, lambdas);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].r_ood <= rows[i - 1].r_ood + 1e-15);
    CHECK(rows[i].r_id >= rows[i - 1].r_id - 1e-15);
  }
  // Past eta the common weight is 0 and both tails coincide.
  for (const auto& r : rows) {
    if (r.lambda >= tmpl.eta) {
      const double w1 = 1.0 - r.lambda;
      const double expect = 2.0 * normal_upper_tail(tmpl.delta / (tmpl.sigma * w1));
      CHECK(r.r_ood == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(sweep_lambda(tmpl, {0.5, 1.0}), std::invalid_argument);
}
