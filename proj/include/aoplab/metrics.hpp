#pragma once

#include <cstddef>
#include <vector>

namespace aoplab {

/// Paired higher-is-ID score arrays; the input of every detection metric.
struct LabeledScores {
  std::vector<double> id_scores;
  std::vector<double> ood_scores;
};

/// Per-sample confidence plus correctness; the input of the
/// misclassification-detection metrics.
struct ConfidenceOutcomes {
  std::vector<double> confidence;
  std::vector<bool> correct;
};

struct RocCurve {
  std::vector<double> thresholds;  // descending, one per distinct score
  std::vector<double> tpr;         // starts at 0, ends at 1
  std::vector<double> fpr;
};

/// Threshold sweep with ties grouped; endpoints (0,0) and (1,1).
RocCurve roc_curve(const LabeledScores& s);

/// Area under the ROC curve (trapezoidal over the grouped sweep). Equals the
/// Mann-Whitney statistic with 0.5 credit for ties; ID is the positive class.
double auroc(const LabeledScores& s);

/// Area under precision-recall with ID positive; descending-threshold sweep,
/// step interpolation, ties grouped.
double aupr(const LabeledScores& s);

/// Fraction of OOD samples at or above the score threshold that admits at
/// least tpr_target of the ID samples.
double fpr_at_tpr(const LabeledScores& s, double tpr_target = 0.95);

/// Area under the risk-coverage curve: sort by confidence descending (ties
/// by index), risk_i = error rate among the top-i, averaged over i = 1..n.
double aurc(const ConfidenceOutcomes& c);

/// AURC minus the AURC of the hindsight-optimal ordering at equal accuracy.
double e_aurc(const ConfidenceOutcomes& c);

/// AUPR with score = -confidence and the incorrect predictions as positives.
/// Throws if there are no errors (no positives to rank).
double aupr_err(const ConfidenceOutcomes& c);

}  // namespace aoplab
