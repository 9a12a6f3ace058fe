#include "aoplab/theory.hpp"

#include <cmath>
#include <stdexcept>

#include "aoplab/rng.hpp"

namespace aoplab {

void TheoryParams::validate() const {
  if (sigma <= 0) throw std::invalid_argument("sigma must be > 0");
  if (delta < 0) throw std::invalid_argument("delta must be >= 0");
  if (lambda < 0) throw std::invalid_argument("lambda must be >= 0");
}

double normal_upper_tail(double x) {
  return 0.5 * std::erfc(x / std::sqrt(2.0));
}

LinearClassifier bayes_classifier(const TheoryParams& p) {
  p.validate();
  return LinearClassifier{1.0, p.eta, p.d};
}

LinearClassifier lasso_classifier(const TheoryParams& p) {
  p.validate();
  const auto positive_part = [](double v) { return v > 0.0 ? v : 0.0; };
  return LinearClassifier{positive_part(1.0 - p.lambda),
                          positive_part(p.eta - p.lambda), p.d};
}

RiskPair closed_form_risks(const LinearClassifier& f, const TheoryParams& p) {
  p.validate();
  const double dd = static_cast<double>(f.d);
  const double v = p.sigma * p.sigma * (f.w1 * f.w1 + dd * f.wc * f.wc);
  if (v <= 0.0) {
    throw std::invalid_argument(
        "closed_form_risks: degenerate classifier (zero logit variance)");
  }
  const double sd = std::sqrt(v);
  const double m = f.w1 + f.wc * dd * p.eta;   // ID logit mean (y = +1)
  const double m0 = f.wc * dd * p.eta;         // OOD logit mean (q = +1)

  RiskPair r;
  r.r_id = normal_upper_tail(m / sd);
  r.r_ood = normal_upper_tail((p.delta - m0) / sd) +
            normal_upper_tail((p.delta + m0) / sd);
  return r;
}

MonteCarloRisks monte_carlo_risks(const LinearClassifier& f,
                                  const TheoryParams& p, std::size_t n,
                                  std::uint64_t seed) {
  p.validate();
  if (n < 1000) throw std::invalid_argument("monte_carlo_risks: n must be >= 1e3");

  const double dd = static_cast<double>(f.d);
  const double common_sd = p.sigma * std::sqrt(dd);
  Rng rng(mix_seed(seed, 0x3C4));

  std::size_t id_wrong = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = (rng.next_u64() & 1) ? 1.0 : -1.0;
    const double x1 = y * 1.0 + p.sigma * rng.normal();
    const double common_sum = y * dd * p.eta + common_sd * rng.normal();
    const double logit = f.w1 * x1 + f.wc * common_sum;
    if (logit * y <= 0.0) ++id_wrong;
  }

  std::size_t ood_accepted = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double q = (rng.next_u64() & 1) ? 1.0 : -1.0;
    const double x1 = p.sigma * rng.normal();  // OOD special mean is 0
    const double common_sum = q * dd * p.eta + common_sd * rng.normal();
    const double logit = f.w1 * x1 + f.wc * common_sum;
    if (std::fabs(logit) > p.delta) ++ood_accepted;
  }

  MonteCarloRisks out;
  const double dn = static_cast<double>(n);
  out.risks.r_id = static_cast<double>(id_wrong) / dn;
  out.risks.r_ood = static_cast<double>(ood_accepted) / dn;
  out.standard_errors.r_id =
      std::sqrt(out.risks.r_id * (1.0 - out.risks.r_id) / dn);
  out.standard_errors.r_ood =
      std::sqrt(out.risks.r_ood * (1.0 - out.risks.r_ood) / dn);
  return out;
}

std::vector<DSweepRow> sweep_d(const TheoryParams& tmpl,
                               const std::vector<std::size_t>& d_values,
                               const std::vector<double>& delta_values) {
  std::vector<DSweepRow> rows;
  rows.reserve(d_values.size() * delta_values.size());
  for (double delta : delta_values) {
    for (std::size_t d : d_values) {
      TheoryParams p = tmpl;
      p.d = d;
      p.delta = delta;
      const RiskPair r = closed_form_risks(bayes_classifier(p), p);
      rows.push_back({d, delta, r.r_id, r.r_ood});
    }
  }
  return rows;
}

std::vector<LambdaSweepRow> sweep_lambda(const TheoryParams& tmpl,
                                         const std::vector<double>& lambda_values) {
  std::vector<LambdaSweepRow> rows;
  rows.reserve(lambda_values.size());
  for (double lambda : lambda_values) {
    if (lambda >= 1.0) {
      throw std::invalid_argument(
          "sweep_lambda: lambda >= 1 yields the zero classifier");
    }
    TheoryParams p = tmpl;
    p.lambda = lambda;
    const RiskPair r = closed_form_risks(lasso_classifier(p), p);
    rows.push_back({lambda, r.r_id, r.r_ood});
  }
  return rows;
}

}  // namespace aoplab
