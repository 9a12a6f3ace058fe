#include "aoplab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace aoplab {

namespace {

void check_scores(const LabeledScores& s) {
  if (s.id_scores.empty() || s.ood_scores.empty())
    throw std::invalid_argument("metrics: both score arrays must be non-empty");
  for (double v : s.id_scores)
    if (!std::isfinite(v)) throw std::invalid_argument("metrics: non-finite ID score");
  for (double v : s.ood_scores)
    if (!std::isfinite(v)) throw std::invalid_argument("metrics: non-finite OOD score");
}

// Merged (score, is_id) pairs sorted by score descending; equal scores are
// grouped by the callers.
std::vector<std::pair<double, bool>> merged_desc(const LabeledScores& s) {
  std::vector<std::pair<double, bool>> all;
  all.reserve(s.id_scores.size() + s.ood_scores.size());
  for (double v : s.id_scores) all.emplace_back(v, true);
  for (double v : s.ood_scores) all.emplace_back(v, false);
  std::stable_sort(all.begin(), all.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  return all;
}

}  // namespace

RocCurve roc_curve(const LabeledScores& s) {
  check_scores(s);
  const auto all = merged_desc(s);
  const double n_id = static_cast<double>(s.id_scores.size());
  const double n_ood = static_cast<double>(s.ood_scores.size());

  RocCurve curve;
  curve.tpr.push_back(0.0);
  curve.fpr.push_back(0.0);
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < all.size()) {
    const double v = all[i].first;
    // Consume the whole tie group at this threshold in one step.
    while (i < all.size() && all[i].first == v) {
      if (all[i].second) ++tp; else ++fp;
      ++i;
    }
    curve.thresholds.push_back(v);
    curve.tpr.push_back(static_cast<double>(tp) / n_id);
    curve.fpr.push_back(static_cast<double>(fp) / n_ood);
  }
  return curve;
}

double auroc(const LabeledScores& s) {
  const RocCurve c = roc_curve(s);
  double area = 0.0;
  for (std::size_t i = 1; i < c.tpr.size(); ++i) {
    area += (c.fpr[i] - c.fpr[i - 1]) * 0.5 * (c.tpr[i] + c.tpr[i - 1]);
  }
  return area;
}

double aupr(const LabeledScores& s) {
  check_scores(s);
  const auto all = merged_desc(s);
  const double n_id = static_cast<double>(s.id_scores.size());

  double area = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < all.size()) {
    const double v = all[i].first;
    while (i < all.size() && all[i].first == v) {
      if (all[i].second) ++tp; else ++fp;
      ++i;
    }
    const double recall = static_cast<double>(tp) / n_id;
    const double precision =
        static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return area;
}

double fpr_at_tpr(const LabeledScores& s, double tpr_target) {
  check_scores(s);
  if (tpr_target <= 0.0 || tpr_target > 1.0)
    throw std::invalid_argument("tpr_target must be in (0, 1]");

  std::vector<double> id_sorted = s.id_scores;
  std::sort(id_sorted.begin(), id_sorted.end(), std::greater<>());
  // Smallest admitted count reaching the target; threshold sits on that
  // ID score, and admission is score >= threshold.
  const auto need = static_cast<std::size_t>(
      std::ceil(tpr_target * static_cast<double>(id_sorted.size()) -
                1e-12));
  const double threshold = id_sorted[std::max<std::size_t>(need, 1) - 1];

  std::size_t fp = 0;
  for (double v : s.ood_scores) {
    if (v >= threshold) ++fp;
  }
  return static_cast<double>(fp) / static_cast<double>(s.ood_scores.size());
}

namespace {

void check_outcomes(const ConfidenceOutcomes& c) {
  if (c.confidence.empty())
    throw std::invalid_argument("metrics: empty outcome list");
  if (c.confidence.size() != c.correct.size())
    throw std::invalid_argument("metrics: confidence/correct length mismatch");
  for (double v : c.confidence)
    if (!std::isfinite(v)) throw std::invalid_argument("metrics: non-finite confidence");
}

double aurc_of_error_sequence(const std::vector<bool>& errors_in_order) {
  const std::size_t n = errors_in_order.size();
  double sum_risk = 0.0;
  std::size_t errs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (errors_in_order[i]) ++errs;
    sum_risk += static_cast<double>(errs) / static_cast<double>(i + 1);
  }
  return sum_risk / static_cast<double>(n);
}

}  // namespace

double aurc(const ConfidenceOutcomes& c) {
  check_outcomes(c);
  std::vector<std::size_t> order(c.confidence.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return c.confidence[a] > c.confidence[b];
  });
  std::vector<bool> errors(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) errors[i] = !c.correct[order[i]];
  return aurc_of_error_sequence(errors);
}

double e_aurc(const ConfidenceOutcomes& c) {
  check_outcomes(c);
  const std::size_t n = c.confidence.size();
  std::size_t n_err = 0;
  for (bool ok : c.correct)
    if (!ok) ++n_err;
  // Hindsight-optimal ordering: every correct prediction before every error.
  std::vector<bool> oracle(n, false);
  for (std::size_t i = n - n_err; i < n; ++i) oracle[i] = true;
  return aurc(c) - aurc_of_error_sequence(oracle);
}

double aupr_err(const ConfidenceOutcomes& c) {
  check_outcomes(c);
  LabeledScores s;
  for (std::size_t i = 0; i < c.confidence.size(); ++i) {
    if (c.correct[i]) {
      s.ood_scores.push_back(-c.confidence[i]);
    } else {
      s.id_scores.push_back(-c.confidence[i]);
    }
  }
  if (s.id_scores.empty())
    throw std::invalid_argument("aupr_err: no positives (every prediction correct)");
  if (s.ood_scores.empty()) return 1.0;  // only errors: any ranking is perfect
  return aupr(s);
}

}  // namespace aoplab
