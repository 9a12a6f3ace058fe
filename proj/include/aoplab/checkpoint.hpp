#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "aoplab/net.hpp"

namespace aoplab {

/// On-disk checkpoint. Binary layout (all integers and doubles little-endian):
///
///   bytes 0..7   magic "AOPCKPT1"
///   u64          input_dim
///   u64          number of hidden layers
///   u64[]        hidden widths
///   u64          num_classes
///   u64          seed
///   u64          epoch
///   u64          param_count (weights + biases)
///   f64[]        parameters, layer order: weight row-major, then bias
///   u8           has_mask
///   if has_mask: u64 mask bit count (= weight entries), then
///                ceil(bits/8) bytes, LSB-first, flat weight order
///   u8           has_ema
///   if has_ema:  f64[param_count] averaged parameters, same order
struct Checkpoint {
  MlpSpec spec;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  ParamSet params;
  std::optional<SparsityMask> mask;
  std::optional<ParamSet> ema;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace aoplab
