#include "aoplab/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace aoplab {

void ScorerConfig::validate() const {
  if (odin_temperature <= 0 || energy_temperature <= 0)
    throw std::invalid_argument("temperatures must be > 0");
  if (odin_epsilon < 0) throw std::invalid_argument("odin_epsilon must be >= 0");
  if (maha_epsilon < 0) throw std::invalid_argument("maha_epsilon must be >= 0");
  if (react_percentile <= 0 || react_percentile > 100)
    throw std::invalid_argument("react_percentile must be in (0, 100]");
  if (knn_k < 1) throw std::invalid_argument("knn_k must be >= 1");
}

std::vector<double> score_msp(const ForwardTrace& trace) {
  const Tensor2 probs = softmax_rows(trace.logits);
  std::vector<double> scores(probs.rows);
  for (std::size_t s = 0; s < probs.rows; ++s) {
    scores[s] = *std::max_element(probs.row(s), probs.row(s) + probs.cols);
  }
  return scores;
}

std::vector<double> score_maxlogit(const ForwardTrace& trace) {
  std::vector<double> scores(trace.logits.rows);
  for (std::size_t s = 0; s < trace.logits.rows; ++s) {
    scores[s] = *std::max_element(trace.logits.row(s),
                                  trace.logits.row(s) + trace.logits.cols);
  }
  return scores;
}

namespace {

double energy_of_row(const double* z, std::size_t n, double T) {
  // T * log sum exp(z/T), max-shifted.
  double m = z[0];
  for (std::size_t c = 1; c < n; ++c) m = std::max(m, z[c]);
  double sum = 0.0;
  for (std::size_t c = 0; c < n; ++c) sum += std::exp((z[c] - m) / T);
  return m + T * std::log(sum);
}

double batch_input_std(const Tensor2& batch) {
  if (batch.data.empty()) return 0.0;
  double mean = 0.0;
  for (double v : batch.data) mean += v;
  mean /= static_cast<double>(batch.data.size());
  double var = 0.0;
  for (double v : batch.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(batch.data.size());
  return std::sqrt(var);
}

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::vector<double> score_energy(const ForwardTrace& trace, double temperature) {
  if (temperature <= 0) throw std::invalid_argument("energy temperature must be > 0");
  std::vector<double> scores(trace.logits.rows);
  for (std::size_t s = 0; s < trace.logits.rows; ++s) {
    scores[s] = energy_of_row(trace.logits.row(s), trace.logits.cols, temperature);
  }
  return scores;
}

std::vector<double> score_odin(const MlpSpec& spec, const ParamSet& params,
                               const Tensor2& batch, const ScorerConfig& cfg) {
  cfg.validate();
  const double T = cfg.odin_temperature;

  Tensor2 perturbed = batch;
  if (cfg.odin_epsilon > 0.0) {
    const ForwardTrace trace = forward(spec, params, batch);
    std::vector<int> predicted(batch.rows);
    for (std::size_t s = 0; s < batch.rows; ++s) {
      const double* z = trace.logits.row(s);
      predicted[s] = static_cast<int>(
          std::max_element(z, z + trace.logits.cols) - z);
    }
    const BackwardResult back =
        backward(spec, params, batch, predicted, nullptr, T);
    // Inputs are not pixel-scaled, so epsilon is taken in units of the
    // batch standard deviation.
    const double scale = batch_input_std(batch);
    const double eps = cfg.odin_epsilon * (scale > 0.0 ? scale : 1.0);
    for (std::size_t i = 0; i < perturbed.data.size(); ++i) {
      perturbed.data[i] -= eps * sign_of(back.input_grads.data[i]);
    }
  }

  const ForwardTrace trace2 = forward(spec, params, perturbed);
  Tensor2 scaled = trace2.logits;
  for (double& v : scaled.data) v /= T;
  const Tensor2 probs = softmax_rows(scaled);
  std::vector<double> scores(probs.rows);
  for (std::size_t s = 0; s < probs.rows; ++s) {
    scores[s] = *std::max_element(probs.row(s), probs.row(s) + probs.cols);
  }
  return scores;
}

namespace {

// Cholesky factorization A = L L^T; returns false when a pivot collapses.
bool cholesky(const Tensor2& a, Tensor2& l, double& min_pivot) {
  const std::size_t n = a.rows;
  l = Tensor2(n, n);
  min_pivot = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    double d = a.at(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l.at(j, k) * l.at(j, k);
    if (d <= 0.0 || !std::isfinite(d)) return false;
    min_pivot = std::min(min_pivot, d);
    l.at(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = a.at(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l.at(i, k) * l.at(j, k);
      l.at(i, j) = v / l.at(j, j);
    }
  }
  return true;
}

// Solve A x = b given the Cholesky factor L.
std::vector<double> chol_solve(const Tensor2& l, const std::vector<double>& b) {
  const std::size_t n = l.rows;
  std::vector<double> y(n), x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = b[i];
    for (std::size_t k = 0; k < i; ++k) v -= l.at(i, k) * y[k];
    y[i] = v / l.at(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double v = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) v -= l.at(k, ii) * x[k];
    x[ii] = v / l.at(ii, ii);
  }
  return x;
}

double percentile_linear(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  if (values.size() == 1) return values[0];
  const double rank = (p / 100.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

std::vector<double> l2_normalized(const double* v, std::size_t n) {
  double norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) norm += v[i] * v[i];
  norm = std::sqrt(norm);
  std::vector<double> out(v, v + n);
  if (norm > 0.0) {
    for (double& x : out) x /= norm;
  }
  return out;
}

}  // namespace

FeatureBank fit_feature_bank(const MlpSpec& spec, const ParamSet& params,
                             const LabeledDataset& train,
                             const ScorerConfig& cfg) {
  cfg.validate();
  if (train.labels.size() != train.inputs.rows)
    throw std::invalid_argument("fit_feature_bank: labeled data required");

  const ForwardTrace trace = forward(spec, params, train.inputs);
  const Tensor2& f = trace.features;
  const std::size_t n = f.rows, dim = f.cols, C = spec.num_classes;

  std::vector<std::size_t> counts(C, 0);
  for (int y : train.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= C)
      throw std::invalid_argument("fit_feature_bank: label out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  for (std::size_t c = 0; c < C; ++c) {
    if (counts[c] < 2)
      throw std::invalid_argument("fit_feature_bank: need >= 2 samples per class (class " +
                                  std::to_string(c) + " has " +
                                  std::to_string(counts[c]) + ")");
  }

  FeatureBank bank;
  bank.class_means.assign(C, std::vector<double>(dim, 0.0));
  for (std::size_t s = 0; s < n; ++s) {
    auto& mu = bank.class_means[static_cast<std::size_t>(train.labels[s])];
    const double* row = f.row(s);
    for (std::size_t i = 0; i < dim; ++i) mu[i] += row[i];
  }
  for (std::size_t c = 0; c < C; ++c) {
    for (double& v : bank.class_means[c]) v /= static_cast<double>(counts[c]);
  }

  bank.covariance = Tensor2(dim, dim);
  std::vector<double> centered(dim);
  for (std::size_t s = 0; s < n; ++s) {
    const auto& mu = bank.class_means[static_cast<std::size_t>(train.labels[s])];
    const double* row = f.row(s);
    for (std::size_t i = 0; i < dim; ++i) centered[i] = row[i] - mu[i];
    for (std::size_t i = 0; i < dim; ++i) {
      const double ci = centered[i];
      if (ci == 0.0) continue;
      double* cov_row = bank.covariance.row(i);
      for (std::size_t j = 0; j < dim; ++j) cov_row[j] += ci * centered[j];
    }
  }
  for (double& v : bank.covariance.data) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < dim; ++i) bank.covariance.at(i, i) += 1e-6;

  Tensor2 l;
  double min_pivot = 0.0;
  if (!cholesky(bank.covariance, l, min_pivot)) {
    throw std::runtime_error(
        "fit_feature_bank: covariance singular after regularization "
        "(smallest Cholesky pivot " + std::to_string(min_pivot) + ")");
  }
  double max_diag = 0.0;
  for (std::size_t i = 0; i < dim; ++i)
    max_diag = std::max(max_diag, bank.covariance.at(i, i));
  if (max_diag / min_pivot > 1e15) {
    throw std::runtime_error(
        "fit_feature_bank: covariance numerically singular, condition estimate " +
        std::to_string(max_diag / min_pivot));
  }

  bank.covariance_inv = Tensor2(dim, dim);
  std::vector<double> e(dim, 0.0);
  for (std::size_t j = 0; j < dim; ++j) {
    e[j] = 1.0;
    const std::vector<double> col = chol_solve(l, e);
    for (std::size_t i = 0; i < dim; ++i) bank.covariance_inv.at(i, j) = col[i];
    e[j] = 0.0;
  }

  bank.knn_bank.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    bank.knn_bank.push_back(l2_normalized(f.row(s), dim));
  }

  bank.react_thresholds.resize(dim);
  std::vector<double> column(n);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t s = 0; s < n; ++s) column[s] = f.at(s, i);
    bank.react_thresholds[i] = percentile_linear(column, cfg.react_percentile);
  }
  return bank;
}

namespace {

double min_mahalanobis_sq(const FeatureBank& bank, const double* f,
                          std::size_t dim, std::size_t* argmin_class) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> diff(dim);
  for (std::size_t c = 0; c < bank.class_means.size(); ++c) {
    const auto& mu = bank.class_means[c];
    for (std::size_t i = 0; i < dim; ++i) diff[i] = f[i] - mu[i];
    double q = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double di = diff[i];
      if (di == 0.0) continue;
      const double* inv_row = bank.covariance_inv.row(i);
      double acc = 0.0;
      for (std::size_t j = 0; j < dim; ++j) acc += inv_row[j] * diff[j];
      q += di * acc;
    }
    if (q < best) {
      best = q;
      if (argmin_class != nullptr) *argmin_class = c;
    }
  }
  return best;
}

}  // namespace

std::vector<double> score_mahalanobis(const FeatureBank& bank,
                                      const Tensor2& features) {
  if (bank.class_means.empty() ||
      features.cols != bank.class_means[0].size())
    throw std::invalid_argument("score_mahalanobis: feature width mismatch");
  std::vector<double> scores(features.rows);
  for (std::size_t s = 0; s < features.rows; ++s) {
    scores[s] = -min_mahalanobis_sq(bank, features.row(s), features.cols, nullptr);
  }
  return scores;
}

std::vector<double> score_mahalanobis_perturbed(const MlpSpec& spec,
                                                const ParamSet& params,
                                                const FeatureBank& bank,
                                                const Tensor2& batch,
                                                const ScorerConfig& cfg) {
  cfg.validate();
  ForwardTrace trace = forward(spec, params, batch);
  if (cfg.maha_epsilon == 0.0) {
    return score_mahalanobis(bank, trace.features);
  }

  const std::size_t dim = trace.features.cols;
  Tensor2 feature_grads(trace.features.rows, dim);
  for (std::size_t s = 0; s < trace.features.rows; ++s) {
    std::size_t c = 0;
    min_mahalanobis_sq(bank, trace.features.row(s), dim, &c);
    // d(distance)/d(f) = 2 Sigma^-1 (f - mu_c*)
    const auto& mu = bank.class_means[c];
    std::vector<double> diff(dim);
    for (std::size_t i = 0; i < dim; ++i)
      diff[i] = trace.features.at(s, i) - mu[i];
    for (std::size_t i = 0; i < dim; ++i) {
      double acc = 0.0;
      const double* inv_row = bank.covariance_inv.row(i);
      for (std::size_t j = 0; j < dim; ++j) acc += inv_row[j] * diff[j];
      feature_grads.at(s, i) = 2.0 * acc;
    }
  }
  const Tensor2 input_grads =
      input_grads_from_feature_grads(spec, params, trace, feature_grads);
  const double scale = batch_input_std(batch);
  const double eps = cfg.maha_epsilon * (scale > 0.0 ? scale : 1.0);
  Tensor2 perturbed = batch;
  for (std::size_t i = 0; i < perturbed.data.size(); ++i) {
    perturbed.data[i] -= eps * sign_of(input_grads.data[i]);
  }
  const ForwardTrace trace2 = forward(spec, params, perturbed);
  return score_mahalanobis(bank, trace2.features);
}

std::vector<double> score_knn(const FeatureBank& bank, const Tensor2& features,
                              std::size_t k) {
  if (bank.knn_bank.empty())
    throw std::invalid_argument("score_knn: empty feature bank");
  if (k < 1) throw std::invalid_argument("score_knn: k must be >= 1");
  if (k > bank.knn_bank.size()) {
    std::cerr << "score_knn: k=" << k << " clamped to bank size "
              << bank.knn_bank.size() << "\n";
    k = bank.knn_bank.size();
  }
  const std::size_t dim = features.cols;
  std::vector<double> scores(features.rows);
  std::vector<double> dists(bank.knn_bank.size());
  for (std::size_t s = 0; s < features.rows; ++s) {
    const std::vector<double> q = l2_normalized(features.row(s), dim);
    for (std::size_t b = 0; b < bank.knn_bank.size(); ++b) {
      const auto& v = bank.knn_bank[b];
      double d2 = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        const double diff = q[i] - v[i];
        d2 += diff * diff;
      }
      dists[b] = d2;
    }
    std::nth_element(dists.begin(), dists.begin() + (k - 1), dists.end());
    scores[s] = -std::sqrt(dists[k - 1]);
  }
  return scores;
}

std::vector<double> score_react_energy(const MlpSpec& spec,
                                       const ParamSet& params,
                                       const FeatureBank& bank,
                                       const Tensor2& batch,
                                       const ScorerConfig& cfg) {
  cfg.validate();
  const ForwardTrace trace = forward(spec, params, batch);
  const std::size_t dim = trace.features.cols;
  if (bank.react_thresholds.size() != dim)
    throw std::invalid_argument("score_react_energy: threshold width mismatch");

  Tensor2 clipped = trace.features;
  for (std::size_t s = 0; s < clipped.rows; ++s) {
    double* row = clipped.row(s);
    for (std::size_t i = 0; i < dim; ++i)
      row[i] = std::min(row[i], bank.react_thresholds[i]);
  }

  // Re-run only the final affine layer on the rectified features.
  const DenseLayer& last = params.layers.back();
  std::vector<double> scores(clipped.rows);
  std::vector<double> logits(spec.num_classes);
  for (std::size_t s = 0; s < clipped.rows; ++s) {
    const double* a = clipped.row(s);
    for (std::size_t j = 0; j < spec.num_classes; ++j) {
      const double* wr = last.weight.row(j);
      double acc = last.bias[j];
      for (std::size_t i = 0; i < dim; ++i) acc += wr[i] * a[i];
      logits[j] = acc;
    }
    scores[s] = energy_of_row(logits.data(), logits.size(), cfg.energy_temperature);
  }
  return scores;
}

double oe_loss(const ForwardTrace& id_trace, const std::vector<int>& labels,
               const ForwardTrace& ood_trace, double weight) {
  if (weight < 0) throw std::invalid_argument("oe_loss: weight must be >= 0");
  if (labels.size() != id_trace.logits.rows)
    throw std::invalid_argument("oe_loss: one label per ID sample required");

  const std::size_t C = id_trace.logits.cols;
  double ce = 0.0;
  for (std::size_t s = 0; s < id_trace.logits.rows; ++s) {
    const double* z = id_trace.logits.row(s);
    double m = z[0];
    for (std::size_t c = 1; c < C; ++c) m = std::max(m, z[c]);
    double lse = 0.0;
    for (std::size_t c = 0; c < C; ++c) lse += std::exp(z[c] - m);
    lse = m + std::log(lse);
    ce += lse - z[static_cast<std::size_t>(labels[s])];
  }
  ce /= static_cast<double>(id_trace.logits.rows);

  if (weight == 0.0) return ce;
  double oe = 0.0;
  const double u = 1.0 / static_cast<double>(C);
  for (std::size_t s = 0; s < ood_trace.logits.rows; ++s) {
    const double* z = ood_trace.logits.row(s);
    double m = z[0];
    for (std::size_t c = 1; c < C; ++c) m = std::max(m, z[c]);
    double lse = 0.0;
    for (std::size_t c = 0; c < C; ++c) lse += std::exp(z[c] - m);
    lse = m + std::log(lse);
    double mean_logit = 0.0;
    for (std::size_t c = 0; c < C; ++c) mean_logit += z[c];
    oe += lse - u * mean_logit;
  }
  oe /= static_cast<double>(ood_trace.logits.rows);
  return ce + weight * oe;
}

ScorerKind scorer_from_name(const std::string& name) {
  if (name == "msp") return ScorerKind::msp;
  if (name == "maxlogit") return ScorerKind::maxlogit;
  if (name == "energy") return ScorerKind::energy;
  if (name == "odin") return ScorerKind::odin;
  if (name == "maha") return ScorerKind::maha;
  if (name == "knn") return ScorerKind::knn;
  if (name == "react") return ScorerKind::react;
  throw std::invalid_argument("unknown scorer '" + name + "'");
}

std::string scorer_name(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::msp: return "msp";
    case ScorerKind::maxlogit: return "maxlogit";
    case ScorerKind::energy: return "energy";
    case ScorerKind::odin: return "odin";
    case ScorerKind::maha: return "maha";
    case ScorerKind::knn: return "knn";
    case ScorerKind::react: return "react";
  }
  return "?";
}

std::vector<double> run_scorer(ScorerKind kind, const MlpSpec& spec,
                               const ParamSet& params, const Tensor2& batch,
                               const FeatureBank* bank,
                               const ScorerConfig& cfg) {
  switch (kind) {
    case ScorerKind::msp:
      return score_msp(forward(spec, params, batch));
    case ScorerKind::maxlogit:
      return score_maxlogit(forward(spec, params, batch));
    case ScorerKind::energy:
      return score_energy(forward(spec, params, batch), cfg.energy_temperature);
    case ScorerKind::odin:
      return score_odin(spec, params, batch, cfg);
    case ScorerKind::maha:
      if (bank == nullptr) throw std::invalid_argument("maha needs a fitted bank");
      return score_mahalanobis_perturbed(spec, params, *bank, batch, cfg);
    case ScorerKind::knn: {
      if (bank == nullptr) throw std::invalid_argument("knn needs a fitted bank");
      const ForwardTrace trace = forward(spec, params, batch);
      return score_knn(*bank, trace.features, cfg.knn_k);
    }
    case ScorerKind::react:
      if (bank == nullptr) throw std::invalid_argument("react needs a fitted bank");
      return score_react_energy(spec, params, *bank, batch, cfg);
  }
  throw std::logic_error("unreachable scorer kind");
}

}  // namespace aoplab
