#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aoplab/datagen.hpp"
#include "aoplab/net.hpp"

namespace aoplab {

enum class ImpVariant {
  rewind,    // restore surviving weights to their epoch-k values
  finetune,  // keep training from the end-of-round weights
  random,    // random mask instead of magnitude ranking, then rewind
};

struct ImpConfig {
  std::size_t rewind_epoch = 2;   // k, in epochs, 0 <= k < train_epochs
  std::size_t train_epochs = 10;  // T
  std::size_t rounds = 9;         // N
  double prune_fraction = 0.2;
  ImpVariant variant = ImpVariant::rewind;

  void validate() const;
};

/// Masks out the floor(fraction * kept_count) surviving weights of smallest
/// magnitude, ranked globally across all weight tensors. Already-pruned
/// weights stay pruned. Ties at the cut magnitude are broken by flat index
/// (lower index pruned first). Biases are untouched.
SparsityMask global_magnitude_prune(const ParamSet& params,
                                    const SparsityMask& mask, double fraction);

/// Same count contract as global_magnitude_prune, but the pruned weights are
/// chosen uniformly at random among survivors (the random-pruning ablation).
SparsityMask random_prune(const SparsityMask& mask, double fraction,
                          std::uint64_t seed);

/// Element-wise product m .* theta: masked coordinates become exactly 0.
ParamSet apply_mask(const ParamSet& params, const SparsityMask& mask);

struct ImpRoundResult {
  std::size_t round = 0;  // 0 = dense
  SparsityMask mask;
  ParamSet round_start;   // weights the round trained from (post-rewind)
  ParamSet trained;       // theta_T of this round (online weights)
  std::size_t kept_count = 0;
  double test_error = 0.0;
  double auroc = 0.0;     // max-softmax score on test vs ood
  double fpr95 = 0.0;
};

struct ImpData {
  LabeledDataset train;
  LabeledDataset test;
  LabeledDataset ood;
};

/// Observation points for callers that track averaging or curves while the
/// pruning loop runs. Rounds are 0-based (0 = dense), epochs 1-based.
struct ImpHooks {
  std::function<void(std::size_t round, const SparsityMask& mask,
                     const ParamSet& start)>
      on_round_start;
  std::function<void(std::size_t round, std::size_t epoch, const ParamSet&)>
      on_epoch_end;
  /// When set, rounds before this index are skipped by loading their
  /// persisted artifacts from artifact_dir (resume support).
  std::size_t resume_from_round = 0;
  /// When set, stop after completing this round (inclusive).
  std::size_t stop_after_round = static_cast<std::size_t>(-1);
};

/// Iterative magnitude pruning with weight rewinding. Round 0 trains the
/// dense network from the seeded initialization, snapshotting the weights
/// at the rewind epoch; every later round prunes, rewinds survivors (per
/// the variant) and retrains under the mask. When artifact_dir is nonempty,
/// per-round checkpoints and a metrics CSV are persisted there.
std::vector<ImpRoundResult> imp_run(const MlpSpec& spec, std::uint64_t init_seed,
                                    const SgdConfig& sgd, const ImpConfig& cfg,
                                    const ImpData& data,
                                    std::size_t batch_size = 64,
                                    const std::string& artifact_dir = "",
                                    const ImpHooks* hooks = nullptr);

}  // namespace aoplab
