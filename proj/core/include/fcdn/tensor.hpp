#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "fcdn/error.hpp"

namespace fcdn::nn {

// Dense row-major tensor. Deliberately minimal: shape + flat storage; layers
// do their own indexing.
template <class T>
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(numel_of(shape)), T{0});
  }

  static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
    std::int64_t n = 1;
    for (std::int64_t d : s) {
      require(d >= 0, "tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void zero() { std::fill(data.begin(), data.end(), T{0}); }

  // Shape the tensor for a fresh write, reusing existing storage when
  // possible instead of reallocating (layer outputs keep their buffers
  // across training steps this way). Contents are zeroed.
  void reset_zero(const std::vector<std::int64_t>& s) {
    reset_raw(s);
    zero();
  }

  // Like reset_zero but leaves the contents unspecified; only for callers
  // that overwrite every element.
  void reset_raw(const std::vector<std::int64_t>& s) {
    if (shape != s) {
      shape = s;
      data.resize(static_cast<std::size_t>(numel_of(s)));
    }
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
      out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

// A learnable tensor and its gradient accumulator.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  void init_shape(std::vector<std::int64_t> s) {
    value = Tensor<T>(s);
    grad = Tensor<T>(std::move(s));
  }
};

}  // namespace fcdn::nn
