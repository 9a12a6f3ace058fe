#include "aoplab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace aoplab {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'A', 'O', 'P', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_f64s(std::ostream& os, const std::vector<double>& v) {
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void get_f64s(std::istream& is, std::vector<double>& v) {
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!is) throw std::runtime_error("checkpoint: truncated parameter block");
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);

  os.write(kMagic, sizeof kMagic);
  put_u64(os, ckpt.spec.input_dim);
  put_u64(os, ckpt.spec.hidden_widths.size());
  for (std::size_t w : ckpt.spec.hidden_widths) put_u64(os, w);
  put_u64(os, ckpt.spec.num_classes);
  put_u64(os, ckpt.seed);
  put_u64(os, ckpt.epoch);

  const std::vector<double> flat = ckpt.params.to_flat();
  put_u64(os, flat.size());
  put_f64s(os, flat);

  const char has_mask = ckpt.mask.has_value() ? 1 : 0;
  os.put(has_mask);
  if (has_mask) {
    std::uint64_t bit_count = ckpt.mask->total_bits();
    put_u64(os, bit_count);
    std::vector<std::uint8_t> bytes((bit_count + 7) / 8, 0);
    std::size_t idx = 0;
    for (const auto& bits : ckpt.mask->layer_bits) {
      for (std::uint8_t b : bits) {
        if (b) bytes[idx >> 3] |= static_cast<std::uint8_t>(1u << (idx & 7));
        ++idx;
      }
    }
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  }

  const char has_ema = ckpt.ema.has_value() ? 1 : 0;
  os.put(has_ema);
  if (has_ema) {
    const std::vector<double> ema_flat = ckpt.ema->to_flat();
    if (ema_flat.size() != flat.size())
      throw std::invalid_argument("checkpoint: EMA shape mismatch");
    put_f64s(os, ema_flat);
  }
  if (!os) throw std::runtime_error("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);

  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error(path + ": not an AOPCKPT1 checkpoint");

  Checkpoint ckpt;
  ckpt.spec.input_dim = get_u64(is);
  const std::uint64_t nh = get_u64(is);
  ckpt.spec.hidden_widths.resize(nh);
  for (auto& w : ckpt.spec.hidden_widths) w = get_u64(is);
  ckpt.spec.num_classes = get_u64(is);
  ckpt.seed = get_u64(is);
  ckpt.epoch = get_u64(is);
  ckpt.spec.validate();

  ckpt.params = init_params(ckpt.spec, 0);  // allocate shapes
  const std::uint64_t param_count = get_u64(is);
  if (param_count != ckpt.params.total_count())
    throw std::runtime_error(path + ": parameter count does not match dims");
  std::vector<double> flat(param_count);
  get_f64s(is, flat);
  ckpt.params.from_flat(flat);

  const int has_mask = is.get();
  if (has_mask == 1) {
    SparsityMask mask = SparsityMask::full(ckpt.params);
    const std::uint64_t bit_count = get_u64(is);
    if (bit_count != mask.total_bits())
      throw std::runtime_error(path + ": mask bit count mismatch");
    std::vector<std::uint8_t> bytes((bit_count + 7) / 8);
    is.read(reinterpret_cast<char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!is) throw std::runtime_error(path + ": truncated mask");
    std::size_t idx = 0;
    for (auto& bits : mask.layer_bits) {
      for (auto& b : bits) {
        b = (bytes[idx >> 3] >> (idx & 7)) & 1u;
        ++idx;
      }
    }
    ckpt.mask = std::move(mask);
  } else if (has_mask != 0) {
    throw std::runtime_error(path + ": corrupt mask flag");
  }

  const int has_ema = is.get();
  if (has_ema == 1) {
    ParamSet ema = ckpt.params;
    std::vector<double> ema_flat(param_count);
    get_f64s(is, ema_flat);
    ema.from_flat(ema_flat);
    ckpt.ema = std::move(ema);
  } else if (has_ema != 0) {
    throw std::runtime_error(path + ": corrupt EMA flag");
  }
  return ckpt;
}

}  // namespace aoplab
