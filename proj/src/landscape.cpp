#include "aoplab/landscape.hpp"

#include <cmath>
#include <stdexcept>

#include "aoplab/metrics.hpp"
#include "aoplab/rng.hpp"

namespace aoplab {

ParamSet make_direction(const ParamSet& params, const DirectionSpec& spec) {
  Rng rng(mix_seed(spec.seed, 0xD12));
  ParamSet dir = params;
  for (auto& layer : dir.layers) {
    for (double& v : layer.weight.data) v = rng.normal();
    for (double& v : layer.bias) v = rng.normal();
  }

  switch (spec.normalization) {
    case DirectionNorm::none:
      break;
    case DirectionNorm::per_unit_filterwise: {
      for (std::size_t l = 0; l < dir.layers.size(); ++l) {
        Tensor2& dw = dir.layers[l].weight;
        const Tensor2& w = params.layers[l].weight;
        for (std::size_t j = 0; j < dw.rows; ++j) {
          double wn = 0.0, dn = 0.0;
          for (std::size_t i = 0; i < dw.cols; ++i) {
            wn += w.at(j, i) * w.at(j, i);
            dn += dw.at(j, i) * dw.at(j, i);
          }
          wn = std::sqrt(wn);
          dn = std::sqrt(dn);
          const double scale = (wn == 0.0 || dn == 0.0) ? 0.0 : wn / dn;
          for (std::size_t i = 0; i < dw.cols; ++i) dw.at(j, i) *= scale;
        }
        // Weight-space probe: biases stay put under the filterwise scheme.
        for (double& v : dir.layers[l].bias) v = 0.0;
      }
      break;
    }
    case DirectionNorm::global_norm: {
      double wn = 0.0, dn = 0.0;
      for (std::size_t l = 0; l < dir.layers.size(); ++l) {
        for (double v : params.layers[l].weight.data) wn += v * v;
        for (double v : params.layers[l].bias) wn += v * v;
        for (double v : dir.layers[l].weight.data) dn += v * v;
        for (double v : dir.layers[l].bias) dn += v * v;
      }
      const double scale =
          (wn == 0.0 || dn == 0.0) ? 0.0 : std::sqrt(wn) / std::sqrt(dn);
      for (auto& layer : dir.layers) {
        for (double& v : layer.weight.data) v *= scale;
        for (double& v : layer.bias) v *= scale;
      }
      break;
    }
  }
  return dir;
}

std::vector<LandscapeRow> landscape_scan(const MlpSpec& spec,
                                         const ParamSet& params,
                                         const ParamSet& direction,
                                         const std::vector<double>& alphas,
                                         const LabeledDataset& id_data,
                                         const LabeledDataset& ood_data,
                                         ScorerKind scorer,
                                         const ScorerConfig& cfg,
                                         std::uint64_t direction_seed) {
  if (!params.same_shape(direction))
    throw std::invalid_argument("landscape_scan: direction shape mismatch");
  if (id_data.labels.empty())
    throw std::invalid_argument("landscape_scan: labeled ID data required");

  std::vector<LandscapeRow> rows;
  rows.reserve(alphas.size());
  for (double alpha : alphas) {
    // Rebuilt from the base every time so the alpha = 0 row is exact.
    ParamSet perturbed = params;
    if (alpha != 0.0) perturbed.axpy(alpha, direction);

    LandscapeRow row;
    row.direction_seed = direction_seed;
    row.alpha = alpha;

    const ForwardTrace id_trace = forward(spec, perturbed, id_data.inputs);
    const ForwardTrace ood_trace = forward(spec, perturbed, ood_data.inputs);
    if (!id_trace.logits.all_finite() || !ood_trace.logits.all_finite()) {
      row.finite = false;
      rows.push_back(row);
      continue;
    }

    FeatureBank bank;
    const FeatureBank* bank_ptr = nullptr;
    if (scorer == ScorerKind::maha || scorer == ScorerKind::knn ||
        scorer == ScorerKind::react) {
      bank = fit_feature_bank(spec, perturbed, id_data, cfg);
      bank_ptr = &bank;
    }
    LabeledScores s;
    s.id_scores = run_scorer(scorer, spec, perturbed, id_data.inputs, bank_ptr, cfg);
    s.ood_scores = run_scorer(scorer, spec, perturbed, ood_data.inputs, bank_ptr, cfg);
    row.auroc = auroc(s);
    row.fpr95 = fpr_at_tpr(s, 0.95);
    row.acc = 1.0 - classification_error(id_trace.logits, id_data.labels);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace aoplab
