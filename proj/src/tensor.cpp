#include "aoplab/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace aoplab {

bool Tensor2::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void require_shape(const Tensor2& t, std::size_t rows, std::size_t cols,
                   const std::string& what) {
  if (t.rows != rows || t.cols != cols) {
    throw std::invalid_argument(
        what + ": expected shape " + std::to_string(rows) + "x" +
        std::to_string(cols) + ", got " + std::to_string(t.rows) + "x" +
        std::to_string(t.cols));
  }
}

}  // namespace aoplab
