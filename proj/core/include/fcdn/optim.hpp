#pragma once

#include <cstdint>
#include <vector>

#include "fcdn/tensor.hpp"

namespace fcdn::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. A step with any non-finite gradient is skipped
// wholesale: parameters, moments and the step counter stay untouched and
// step() returns false so the caller can report it.
template <class T>
class Adam {
 public:
  explicit Adam(std::vector<Parameter<T>*> params, AdamConfig cfg = {});

  bool step();
  std::int64_t steps_taken() const { return t_; }
  std::int64_t steps_skipped() const { return skipped_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Parameter<T>*> params_;
  std::vector<Tensor<T>> m_, v_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::int64_t skipped_ = 0;
};

}  // namespace fcdn::nn
