#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace objfield {

// Dense row-major matrix. Vectors are Px1 or 1xP as context demands.
template <class S>
struct Tensor {
  int64_t rows = 0, cols = 0;
  std::vector<S> v;

  Tensor() = default;
  Tensor(int64_t r, int64_t c, S fill = S(0)) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

  S& operator()(int64_t r, int64_t c) { return v[r * cols + c]; }
  S operator()(int64_t r, int64_t c) const { return v[r * cols + c]; }
  int64_t size() const { return rows * cols; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (S x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }
};

// Named learnable array with a persistent gradient accumulator. Shape
// metadata lives with the consumer (MLP layer dims, grid level layout).
template <class S>
struct ParamBlock {
  std::string name;
  std::vector<S> value;
  std::vector<S> grad;
  bool frozen = false;

  ParamBlock() = default;
  ParamBlock(std::string n, size_t size) : name(std::move(n)), value(size, S(0)), grad(size, S(0)) {}

  size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), S(0)); }
  bool all_finite() const {
    for (S x : value)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  template <class U>
  ParamBlock<U> cast() const {
    ParamBlock<U> out;
    out.name = name;
    out.frozen = frozen;
    out.value.assign(value.begin(), value.end());
    out.grad.assign(value.size(), U(0));
    return out;
  }
};

}  // namespace objfield
