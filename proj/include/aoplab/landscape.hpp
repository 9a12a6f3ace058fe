#pragma once

#include <cstdint>
#include <vector>

#include "aoplab/datagen.hpp"
#include "aoplab/net.hpp"
#include "aoplab/scoring.hpp"

namespace aoplab {

enum class DirectionNorm {
  per_unit_filterwise,  // each weight row rescaled to the weight row norm
  global_norm,          // whole direction rescaled to the weight norm
  none,
};

struct DirectionSpec {
  std::uint64_t seed = 0;
  DirectionNorm normalization = DirectionNorm::per_unit_filterwise;
};

/// Gaussian perturbation direction for the weight-landscape probe. Under
/// per_unit_filterwise each output-unit row of each weight matrix is
/// rescaled to the Euclidean norm of the corresponding weight row (zero
/// rows get a zero direction) and biases are left unperturbed; global_norm
/// rescales the full direction to the full parameter norm.
ParamSet make_direction(const ParamSet& params, const DirectionSpec& spec);

struct LandscapeRow {
  std::uint64_t direction_seed = 0;
  double alpha = 0.0;
  double auroc = 0.0;
  double fpr95 = 0.0;
  double acc = 0.0;
  bool finite = true;  // false when the perturbed logits blew up
};

/// Metrics of theta + alpha*d over the alpha grid. The alpha = 0 row is the
/// unperturbed evaluation, bit for bit.
std::vector<LandscapeRow> landscape_scan(const MlpSpec& spec,
                                         const ParamSet& params,
                                         const ParamSet& direction,
                                         const std::vector<double>& alphas,
                                         const LabeledDataset& id_data,
                                         const LabeledDataset& ood_data,
                                         ScorerKind scorer,
                                         const ScorerConfig& cfg,
                                         std::uint64_t direction_seed = 0);

}  // namespace aoplab
