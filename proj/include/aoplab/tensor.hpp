#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace aoplab {

/// Dense row-major matrix of 64-bit reals.
struct Tensor2 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor2() = default;
  Tensor2(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }

  std::size_t size() const { return data.size(); }
  bool all_finite() const;
};

/// Throws std::invalid_argument naming `what` unless t is rows x cols.
void require_shape(const Tensor2& t, std::size_t rows, std::size_t cols,
                   const std::string& what);

}  // namespace aoplab
