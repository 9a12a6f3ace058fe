#pragma once

#include <cstdint>
#include <vector>

namespace aoplab {

/// Parameters of the linear-model analysis: d common features with mean eta,
/// unit special-feature separation, isotropic noise sigma, rejection
/// threshold delta and L1 penalty lambda.
struct TheoryParams {
  std::size_t d = 0;
  double eta = 0.01;
  double sigma = 1.0;
  double delta = 1.0;
  double lambda = 0.0;

  void validate() const;
};

/// f(x) = w1 * x_1 + wc * sum of the d common features.
struct LinearClassifier {
  double w1 = 1.0;
  double wc = 0.0;
  std::size_t d = 0;

  bool is_zero() const { return w1 == 0.0 && (wc == 0.0 || d == 0); }
};

struct RiskPair {
  double r_id = 0.0;   // misclassification probability on ID data
  double r_ood = 0.0;  // acceptance probability on OOD data (sum of two tails)
};

/// Upper tail of the standard normal, Pr{N(0,1) > x}. Computed as
/// erfc(x/sqrt(2))/2; erfc is good to about an ulp over the whole range, so
/// no lookup tables or series cutoffs are involved.
double normal_upper_tail(double x);

/// (w1, wc) = (1, eta): the population-optimal linear rule on ID data.
LinearClassifier bayes_classifier(const TheoryParams& p);

/// (w1, wc) = ((1-lambda)+, (eta-lambda)+): the closed-form L1-penalized
/// least-squares solution on the same population.
LinearClassifier lasso_classifier(const TheoryParams& p);

/// Closed-form risks of an arbitrary linear classifier under the Gaussian
/// data model. With logit mean m = w1 + wc*d*eta on ID data (per sign),
/// m0 = wc*d*eta on OOD data and logit variance v = sigma^2*(w1^2 + d*wc^2):
///   r_id  = Qbar(m / sqrt(v))
///   r_ood = Qbar((delta - m0)/sqrt(v)) + Qbar((delta + m0)/sqrt(v))
/// For (1, eta) these reduce to the textbook two-tail expressions.
RiskPair closed_form_risks(const LinearClassifier& f, const TheoryParams& p);

struct MonteCarloRisks {
  RiskPair risks;
  RiskPair standard_errors;  // sqrt(p(1-p)/n) per risk
};

/// Empirical risks over n ID draws and n OOD draws of the data model. The
/// common-feature contribution to the logit is sampled as a single Gaussian
/// N(sign*d*eta, d*sigma^2) - exact for i.i.d. normal coordinates - so the
/// check stays independent of the tail algebra above while large d stays
/// affordable.
MonteCarloRisks monte_carlo_risks(const LinearClassifier& f,
                                  const TheoryParams& p, std::size_t n,
                                  std::uint64_t seed);

struct DSweepRow {
  std::size_t d = 0;
  double delta = 0.0;
  double r_id = 0.0;
  double r_ood = 0.0;
};

/// Bayes-classifier risks over a grid of common-feature counts and
/// thresholds (eta, sigma from the template).
std::vector<DSweepRow> sweep_d(const TheoryParams& tmpl,
                               const std::vector<std::size_t>& d_values,
                               const std::vector<double>& delta_values);

struct LambdaSweepRow {
  double lambda = 0.0;
  double r_id = 0.0;
  double r_ood = 0.0;
};

/// LASSO-classifier risks over a lambda grid (d, eta, sigma, delta from the
/// template). Lambda values >= 1 give the zero classifier and are rejected.
std::vector<LambdaSweepRow> sweep_lambda(const TheoryParams& tmpl,
                                         const std::vector<double>& lambda_values);

}  // namespace aoplab
