#include "aoplab/averaging.hpp"

#include <stdexcept>

namespace aoplab {

void ModelAverager::absorb(std::size_t epoch, const ParamSet& online) {
  if (has_any_ && epoch <= last_epoch_) {
    throw std::invalid_argument(
        "absorb: epochs must be strictly increasing (got " +
        std::to_string(epoch) + " after " + std::to_string(last_epoch_) + ")");
  }
  if (has_any_ && !avg_.same_shape(online)) {
    throw std::invalid_argument("absorb: checkpoint shape changed");
  }

  if (epoch <= t0_) {
    avg_ = online;  // mirror the online model until averaging starts
  } else if (mode_ == AveragingMode::running_mean) {
    const auto k = static_cast<double>(count_since_start_);
    if (count_since_start_ == 0) {
      avg_ = online;
    } else {
      // avg <- (k/(k+1)) avg + (1/(k+1)) online
      for (std::size_t l = 0; l < avg_.layers.size(); ++l) {
        auto& w = avg_.layers[l].weight.data;
        const auto& ow = online.layers[l].weight.data;
        for (std::size_t i = 0; i < w.size(); ++i)
          w[i] = (k * w[i] + ow[i]) / (k + 1.0);
        auto& b = avg_.layers[l].bias;
        const auto& ob = online.layers[l].bias;
        for (std::size_t i = 0; i < b.size(); ++i)
          b[i] = (k * b[i] + ob[i]) / (k + 1.0);
      }
    }
    ++count_since_start_;
  } else {
    if (!has_any_) {
      // Nothing absorbed yet at all: the first checkpoint seeds the EMA.
      avg_ = online;
    } else {
      for (std::size_t l = 0; l < avg_.layers.size(); ++l) {
        auto& w = avg_.layers[l].weight.data;
        const auto& ow = online.layers[l].weight.data;
        for (std::size_t i = 0; i < w.size(); ++i)
          w[i] = tau_ * w[i] + (1.0 - tau_) * ow[i];
        auto& b = avg_.layers[l].bias;
        const auto& ob = online.layers[l].bias;
        for (std::size_t i = 0; i < b.size(); ++i)
          b[i] = tau_ * b[i] + (1.0 - tau_) * ob[i];
      }
    }
    ++count_since_start_;
  }

  has_any_ = true;
  last_epoch_ = epoch;
}

const ParamSet& ModelAverager::snapshot() const {
  if (!has_any_) {
    throw std::logic_error("snapshot: no checkpoint absorbed yet");
  }
  return avg_;
}

}  // namespace aoplab
