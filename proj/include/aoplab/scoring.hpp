#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "aoplab/datagen.hpp"
#include "aoplab/net.hpp"

namespace aoplab {

/// Every scorer returns higher-is-more-in-distribution values, one per
/// sample. The paper-side "reject when large" detectors are negated here,
/// at the scorer boundary, so the metric layer sees one sign convention.

struct ScorerConfig {
  double odin_temperature = 1000.0;
  double odin_epsilon = 0.005;  // in units of the batch input std
  double energy_temperature = 1.0;
  std::size_t knn_k = 50;       // clamped to the bank size
  double react_percentile = 90.0;
  double maha_epsilon = 0.0;    // 0 = pure distance, no input perturbation

  void validate() const;
};

/// Fitted statistics for the feature-space scorers: class-conditional means
/// with a shared (pooled, regularized) covariance, the normalized feature
/// bank for KNN, and per-coordinate activation clip levels for ReAct.
struct FeatureBank {
  std::vector<std::vector<double>> class_means;
  Tensor2 covariance;      // regularized pooled within-class scatter / n
  Tensor2 covariance_inv;
  std::vector<std::vector<double>> knn_bank;  // l2-normalized features
  std::vector<double> react_thresholds;
};

std::vector<double> score_msp(const ForwardTrace& trace);
std::vector<double> score_maxlogit(const ForwardTrace& trace);
std::vector<double> score_energy(const ForwardTrace& trace, double temperature);

/// ODIN: perturb the input against the temperature-scaled NLL gradient of
/// the predicted class, then take the temperature-scaled max softmax.
std::vector<double> score_odin(const MlpSpec& spec, const ParamSet& params,
                               const Tensor2& batch, const ScorerConfig& cfg);

FeatureBank fit_feature_bank(const MlpSpec& spec, const ParamSet& params,
                             const LabeledDataset& train,
                             const ScorerConfig& cfg);

/// -min_c (f - mu_c)^T Sigma^-1 (f - mu_c) per feature row.
std::vector<double> score_mahalanobis(const FeatureBank& bank,
                                      const Tensor2& features);

/// Mahalanobis with the optional input-perturbation refinement (eps > 0
/// nudges the input toward the nearest class mean before re-scoring).
std::vector<double> score_mahalanobis_perturbed(const MlpSpec& spec,
                                                const ParamSet& params,
                                                const FeatureBank& bank,
                                                const Tensor2& batch,
                                                const ScorerConfig& cfg);

/// -(distance to the k-th nearest l2-normalized bank feature).
std::vector<double> score_knn(const FeatureBank& bank, const Tensor2& features,
                              std::size_t k);

/// Clip penultimate activations at the fitted percentile thresholds, push
/// them through the final layer, return the energy score.
std::vector<double> score_react_energy(const MlpSpec& spec,
                                       const ParamSet& params,
                                       const FeatureBank& bank,
                                       const Tensor2& batch,
                                       const ScorerConfig& cfg);

/// Outlier-exposure objective: mean ID cross-entropy plus weight times the
/// mean cross-entropy of outlier predictions against the uniform target
/// (equal to KL(uniform || p) + ln num_classes).
double oe_loss(const ForwardTrace& id_trace, const std::vector<int>& labels,
               const ForwardTrace& ood_trace, double weight);

/// Scorer registry used by the CLI and the experiment runner.
enum class ScorerKind { msp, maxlogit, energy, odin, maha, knn, react };
ScorerKind scorer_from_name(const std::string& name);
std::string scorer_name(ScorerKind kind);

/// Runs any scorer on a batch, fitting nothing (the bank must already be
/// fitted for maha/knn/react; pass nullptr otherwise).
std::vector<double> run_scorer(ScorerKind kind, const MlpSpec& spec,
                               const ParamSet& params, const Tensor2& batch,
                               const FeatureBank* bank,
                               const ScorerConfig& cfg);

}  // namespace aoplab
