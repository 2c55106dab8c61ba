#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fcdn/layers.hpp"

namespace fcdn::nn {

// Sequential container that owns layers, runs forward/backward, and keeps the
// per-layer activations alive between the two passes. Every forward scans the
// produced activations and reports the first non-finite value together with
// the offending layer's name.
template <class T>
class Graph {
 public:
  Graph() = default;
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;

  Layer<T>& add(std::unique_ptr<Layer<T>> layer);

  template <class L, class... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    add(std::move(layer));
    return ref;
  }

  std::size_t size() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }
  Layer<T>* find(const std::string& name);

  // Initializes parameters and assigns each dropout layer its own seeded
  // stream, all derived from `seed`.
  void init_params(std::uint64_t seed);

  const Tensor<T>& forward(const Tensor<T>& input, Mode mode);
  const Tensor<T>& output() const;
  // `extra` lets callers inject additional gradient terms at intermediate
  // layer outputs (pairs of layer index and a tensor of that layer's output
  // shape); they are added during the reverse sweep.
  void backward(const Tensor<T>& d_out,
                std::span<const std::pair<std::size_t, const Tensor<T>*>> extra = {});
  const Tensor<T>& input_grad() const { return d_input_; }

  const Tensor<T>& activation(const std::string& layer_name) const;

  std::vector<Parameter<T>*> parameters();
  void zero_grad();

  // Shape the graph would produce for a given input shape, without running it.
  std::vector<std::int64_t> output_shape(std::vector<std::int64_t> in) const;

  // While frozen the dropout tick is not advanced, so repeated forwards reuse
  // identical masks (finite-difference gradient checks need this).
  void freeze_tick(bool frozen) { frozen_ = frozen; }
  std::uint64_t tick() const { return tick_; }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<Tensor<T>> acts_;
  Tensor<T> input_, d_input_;
  std::uint64_t tick_ = 0;
  bool frozen_ = false;
  bool ran_forward_ = false;
};

// Mean cross-entropy over the batch from raw logits [B, n_classes]. When
// `d_logits` is given it receives d(loss)/d(logits), already divided by the
// batch size.
template <class T>
double softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels,
                             Tensor<T>* d_logits = nullptr);

}  // namespace fcdn::nn
