#pragma once

#include <cstddef>
#include <stdexcept>

#include "aoplab/net.hpp"

namespace aoplab {

enum class AveragingMode {
  running_mean,  // tau = k/(k+1): arithmetic mean of post-t0 checkpoints
  fixed_ema,     // constant tau
};

/// Maintains the averaged checkpoint alongside the online model. Before
/// epoch t0 the average mirrors the online weights; from the first absorbed
/// checkpoint past t0 on, it is either the running arithmetic mean of those
/// checkpoints or a constant-decay EMA of them.
class ModelAverager {
 public:
  ModelAverager(std::size_t t0, AveragingMode mode = AveragingMode::running_mean,
                double tau = 0.99)
      : t0_(t0), mode_(mode), tau_(tau) {
    if (mode == AveragingMode::fixed_ema && (tau < 0.0 || tau >= 1.0)) {
      throw std::invalid_argument("fixed_ema tau must be in [0, 1)");
    }
  }

  /// Feed the online weights at the end of `epoch` (1-based, strictly
  /// increasing across calls).
  void absorb(std::size_t epoch, const ParamSet& online);

  /// Current averaged weights; does not mutate state. Calling before any
  /// absorb is an error (there is nothing to mirror yet).
  const ParamSet& snapshot() const;

  std::size_t count_since_start() const { return count_since_start_; }
  std::size_t t0() const { return t0_; }

 private:
  std::size_t t0_;
  AveragingMode mode_;
  double tau_;
  std::size_t count_since_start_ = 0;
  bool has_any_ = false;
  std::size_t last_epoch_ = 0;
  ParamSet avg_;
};

}  // namespace aoplab
