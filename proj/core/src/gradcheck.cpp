#include "fcdn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "fcdn/error.hpp"
#include "fcdn/rng.hpp"

namespace fcdn::nn {

namespace {

Tensor<double> as_rows(const Tensor<double>& t) {
  Tensor<double> flat = t;
  flat.shape = {t.dim(0), t.numel() / t.dim(0)};
  return flat;
}

double run_loss(Graph<double>& graph, const Tensor<double>& input,
                std::span<const int> labels) {
  const Tensor<double>& out = graph.forward(input, Mode::train);
  return softmax_cross_entropy<double>(as_rows(out), labels, nullptr);
}

}  // namespace

GradCheckResult grad_check(Graph<double>& graph, const Tensor<double>& input,
                           std::span<const int> labels, double eps,
                           int samples_per_param, std::uint64_t seed) {
  require(eps > 0.0, "grad_check: eps must be positive");
  require(samples_per_param >= 1, "grad_check: need at least one sample per parameter");

  graph.freeze_tick(true);
  const Tensor<double>& out = graph.forward(input, Mode::train);
  Tensor<double> d_flat;
  softmax_cross_entropy(as_rows(out), labels, &d_flat);
  d_flat.shape = out.shape;
  graph.zero_grad();
  graph.backward(d_flat);

  auto params = graph.parameters();
  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);

  GradCheckResult result;
  Rng rng(seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<double>& p = *params[pi];
    const std::int64_t n = p.value.numel();
    std::vector<std::int64_t> idx;
    if (n <= samples_per_param) {
      idx.resize(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    } else {
      for (int i = 0; i < samples_per_param; ++i)
        idx.push_back(static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(n))));
      std::sort(idx.begin(), idx.end());
      idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    }
    for (const std::int64_t j : idx) {
      const double orig = p.value.data[j];
      p.value.data[j] = orig + eps;
      const double lp = run_loss(graph, input, labels);
      p.value.data[j] = orig - eps;
      const double lm = run_loss(graph, input, labels);
      p.value.data[j] = orig;
      const double fd = (lp - lm) / (2.0 * eps);
      const double an = analytic[pi].data[j];
      const double rel =
          std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1.0});
      ++result.n_evaluated;
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_param = p.name;
        result.worst_index = j;
      }
    }
  }
  graph.freeze_tick(false);
  return result;
}

}  // namespace fcdn::nn
