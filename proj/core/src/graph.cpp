#include "fcdn/graph.hpp"

#include <cmath>

#include "fcdn/error.hpp"

namespace fcdn::nn {

template <class T>
Layer<T>& Graph<T>::add(std::unique_ptr<Layer<T>> layer) {
  require(layer != nullptr, "graph: null layer");
  for (const auto& l : layers_)
    require(l->name() != layer->name(),
            "graph: duplicate layer name '" + layer->name() + "'");
  layers_.push_back(std::move(layer));
  return *layers_.back();
}

template <class T>
Layer<T>* Graph<T>::find(const std::string& name) {
  for (auto& l : layers_)
    if (l->name() == name) return l.get();
  return nullptr;
}

template <class T>
void Graph<T>::init_params(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x1417}));
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->init(rng);
    if (auto* d = dynamic_cast<Dropout<T>*>(layers_[i].get()))
      d->set_stream_seed(derive_seed(seed, {0xD0, i}));
  }
  tick_ = 0;
}

template <class T>
const Tensor<T>& Graph<T>::forward(const Tensor<T>& input, Mode mode) {
  require(!layers_.empty(), "graph: no layers");
  if (mode == Mode::train && !frozen_) ++tick_;
  input_ = input;
  acts_.resize(layers_.size());
  const Tensor<T>* cur = &input_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->forward(*cur, acts_[i], mode, tick_);
    // NaN/Inf propagate through a sum, so a handful of accumulators check the
    // whole tensor; double cannot overflow from finite float inputs.
    double p0 = 0.0, p1 = 0.0, p2 = 0.0, p3 = 0.0;
    const T* v = acts_[i].data.data();
    const std::size_t n = acts_[i].data.size();
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      p0 += static_cast<double>(v[j]);
      p1 += static_cast<double>(v[j + 1]);
      p2 += static_cast<double>(v[j + 2]);
      p3 += static_cast<double>(v[j + 3]);
    }
    for (; j < n; ++j) p0 += static_cast<double>(v[j]);
    if (!std::isfinite(p0 + p1 + p2 + p3))
      throw Error("non-finite activation after layer '" + layers_[i]->name() + "'");
    cur = &acts_[i];
  }
  ran_forward_ = true;
  return acts_.back();
}

template <class T>
const Tensor<T>& Graph<T>::output() const {
  require(ran_forward_, "graph: output() before forward()");
  return acts_.back();
}

template <class T>
void Graph<T>::backward(const Tensor<T>& d_out,
                        std::span<const std::pair<std::size_t, const Tensor<T>*>> extra) {
  require(ran_forward_, "graph: backward() before forward()");
  require(d_out.shape == acts_.back().shape, "graph: gradient shape mismatch");
  Tensor<T> d = d_out;
  Tensor<T> d_prev;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    for (const auto& [idx, g] : extra) {
      if (idx != i) continue;
      require(g != nullptr && g->shape == acts_[i].shape,
              "graph: extra gradient shape mismatch at layer " + layers_[i]->name());
      for (std::int64_t j = 0; j < d.numel(); ++j) d.data[j] += g->data[j];
    }
    const Tensor<T>& in = i == 0 ? input_ : acts_[i - 1];
    layers_[i]->backward(in, acts_[i], d, d_prev);
    d = std::move(d_prev);
  }
  d_input_ = std::move(d);
}

template <class T>
const Tensor<T>& Graph<T>::activation(const std::string& layer_name) const {
  require(ran_forward_, "graph: activation() before forward()");
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i]->name() == layer_name) return acts_[i];
  throw ValidationError("graph: no layer named '" + layer_name + "'");
}

template <class T>
std::vector<Parameter<T>*> Graph<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& l : layers_)
    for (auto* p : l->params()) out.push_back(p);
  return out;
}

template <class T>
void Graph<T>::zero_grad() {
  for (auto* p : parameters()) p->grad.zero();
}

template <class T>
std::vector<std::int64_t> Graph<T>::output_shape(std::vector<std::int64_t> in) const {
  for (const auto& l : layers_) in = l->output_shape(in);
  return in;
}

template <class T>
double softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels,
                             Tensor<T>* d_logits) {
  require(logits.rank() == 2, "cross_entropy: logits must be [batch, classes]");
  const std::int64_t B = logits.dim(0), C = logits.dim(1);
  require(static_cast<std::int64_t>(labels.size()) == B,
          "cross_entropy: label count must match batch size");
  if (d_logits != nullptr) *d_logits = Tensor<T>(logits.shape);

  double loss = 0.0;
  std::vector<double> p(static_cast<std::size_t>(C));
  for (std::int64_t b = 0; b < B; ++b) {
    const int y = labels[b];
    require(y >= 0 && y < C, "cross_entropy: label out of range");
    const T* x = &logits.data[b * C];
    double mx = -1e300;
    for (std::int64_t c = 0; c < C; ++c) mx = std::max(mx, static_cast<double>(x[c]));
    double z = 0.0;
    for (std::int64_t c = 0; c < C; ++c) {
      p[c] = std::exp(static_cast<double>(x[c]) - mx);
      z += p[c];
    }
    loss += std::log(z) - (static_cast<double>(x[y]) - mx);
    if (d_logits != nullptr) {
      T* g = &d_logits->data[b * C];
      for (std::int64_t c = 0; c < C; ++c)
        g[c] = static_cast<T>((p[c] / z - (c == y ? 1.0 : 0.0)) / B);
    }
  }
  return loss / B;
}

template class Graph<float>;
template class Graph<double>;
template double softmax_cross_entropy<float>(const Tensor<float>&, std::span<const int>,
                                             Tensor<float>*);
template double softmax_cross_entropy<double>(const Tensor<double>&,
                                              std::span<const int>, Tensor<double>*);

}  // namespace fcdn::nn
