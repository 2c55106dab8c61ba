#pragma once

#include <span>
#include <string>

#include "fcdn/graph.hpp"

namespace fcdn::nn {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::int64_t worst_index = -1;
  int n_evaluated = 0;
};

// Compares analytic parameter gradients against central finite differences in
// 64-bit precision. The network output is flattened to [batch, features] and
// driven with cross-entropy so any head shape can be checked. Dropout ticks
// are frozen for the duration so every evaluation sees identical masks.
// Errors are |analytic - numeric| / max(|analytic|, |numeric|, 1); at most
// `samples_per_param` entries of each parameter are probed.
GradCheckResult grad_check(Graph<double>& graph, const Tensor<double>& input,
                           std::span<const int> labels, double eps = 1e-3,
                           int samples_per_param = 8, std::uint64_t seed = 0x6C);

}  // namespace fcdn::nn
