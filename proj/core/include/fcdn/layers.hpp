#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "fcdn/rng.hpp"
#include "fcdn/tensor.hpp"

namespace fcdn::nn {

enum class Mode { train, eval };
enum class Padding { valid, same };

// A layer owns its parameters and whatever context it must keep between
// forward and backward (batch statistics, dropout masks, attention maps).
// Graph drives the calls; `tick` feeds seeded dropout streams.
template <class T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  const std::string& name() const { return name_; }
  virtual std::string_view type() const = 0;

  virtual std::vector<std::int64_t> output_shape(
      const std::vector<std::int64_t>& in) const = 0;
  virtual void forward(const Tensor<T>& in, Tensor<T>& out, Mode mode,
                       std::uint64_t tick) = 0;
  // `in`/`out` are the tensors from the matching forward call.
  virtual void backward(const Tensor<T>& in, const Tensor<T>& out,
                        const Tensor<T>& d_out, Tensor<T>& d_in) = 0;

  virtual std::vector<Parameter<T>*> params() { return {}; }
  virtual void init(Rng&) {}

 private:
  std::string name_;
};

template <class T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(std::string name, int in_ch, int out_ch, int kh, int kw, int sh = 1,
         int sw = 1, Padding pad = Padding::valid);
  std::string_view type() const override { return "conv2d"; }
  std::vector<std::int64_t> output_shape(const std::vector<std::int64_t>& in) const override;
  void forward(const Tensor<T>& in, Tensor<T>& out, Mode, std::uint64_t) override;
  void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& d_out,
                Tensor<T>& d_in) override;
  std::vector<Parameter<T>*> params() override { return {&w_, &b_}; }
  void init(Rng& rng) override;

  Parameter<T>& weight() { return w_; }
  Parameter<T>& bias() { return b_; }

 private:
  void pad_amounts(std::int64_t w_in, int& left, int& right, std::int64_t h_in,
                   int& top, int& bottom) const;
  int in_ch_, out_ch_, kh_, kw_, sh_, sw_;
  Padding pad_;
  Parameter<T> w_;  // [out_ch, in_ch, kh, kw]
  Parameter<T> b_;  // [out_ch]
};

template <class T>
class BatchNorm : public Layer<T> {
 public:
  BatchNorm(std::string name, int channels, double eps = 1e-5, double momentum = 0.1);
  std::string_view type() const override { return "batch_norm"; }
  std::vector<std::int64_t> output_shape(const std::vector<std::int64_t>& in) const override;
  void forward(const Tensor<T>& in, Tensor<T>& out, Mode mode, std::uint64_t) override;
  void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& d_out,
                Tensor<T>& d_in) override;
  std::vector<Parameter<T>*> params() override { return {&gamma_, &beta_}; }
  void init(Rng&) override;

  // Running statistics are state, not parameters; exposed for serialization.
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }

 private:
  int channels_;
  double eps_, momentum_;
  Parameter<T> gamma_, beta_;
  Tensor<T> running_mean_, running_var_;
  // Saved train-mode context.
  std::vector<T> batch_mean_, batch_inv_std_;
  Mode last_mode_ = Mode::eval;
};

template <class T>
class Elu : public Layer<T> {
 public:
  explicit Elu(std::string name, double alpha = 1.0);
  std::string_view type() const override { return "elu"; }
  std::vector<std::int64_t> output_shape(const std::vector<std::int64_t>& in) const override {
    return in;
  }
  void forward(const Tensor<T>& in, Tensor<T>& out, Mode, std::uint64_t) override;
  void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& d_out,
                Tensor<T>& d_in) override;

 private:
  double alpha_;
};

template <class T>
class AvgPool : public Layer<T> {
 public:
  AvgPool(std::string name, int kh, int kw, int sh, int sw);
  std::string_view type() const override { return "avg_pool"; }
  std::vector<std::int64_t> output_shape(const std::vector<std::int64_t>& in) const override;
  void forward(const Tensor<T>& in, Tensor<T>& out, Mode, std::uint64_t) override;
  void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& d_out,
                Tensor<T>& d_in) override;

 private:
  int kh_, kw_, sh_, sw_;
};

// Pools the trailing (time) axis to a fixed number of bins regardless of the
// input length, PyTorch adaptive-pool bin arithmetic.
template <class T>
class AdaptiveAvgPoolTime : public Layer<T> {
 public:
  explicit AdaptiveAvgPoolTime(std::string name, int target = 1);
  std::string_view type() const override { return "adaptive_avg_pool_time"; }
  std::vector<std::int64_t> output_shape(const std::vector<std::int64_t>& in) const override;
  void forward(const Tensor<T>& in, Tensor<T>& out, Mode, std::uint64_t) override;
  void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& d_out,
                Tensor<T>& d_in) override;

 private:
  int target_;
};

template <class T>
class Dropout : public Layer<T> {
 public:
  Dropout(std::string name, double p);
  std::string_view type() const override { return "dropout"; }
  std::vector<std::int64_t> output_shape(const std::vector<std::int64_t>& in) const override {
    return in;
  }
  void forward(const Tensor<T>& in, Tensor<T>& out, Mode mode, std::uint64_t tick) override;
  void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& d_out,
                Tensor<T>& d_in) override;
  void set_stream_seed(std::uint64_t s) { stream_seed_ = s; }

 private:
  double p_;
  std::uint64_t stream_seed_ = 0;
  std::vector<T> mask_;
  bool masked_ = false;
};

template <class T>
class Linear : public Layer<T> {
 public:
  Linear(std::string name, int in_dim, int out_dim);
  std::string_view type() const override { return "linear"; }
  std::vector<std::int64_t> output_shape(const std::vector<std::int64_t>& in) const override;
  void forward(const Tensor<T>& in, Tensor<T>& out, Mode, std::uint64_t) override;
  void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& d_out,
                Tensor<T>& d_in) override;
  std::vector<Parameter<T>*> params() override { return {&w_, &b_}; }
  void init(Rng& rng) override;

  Parameter<T>& weight() { return w_; }

 private:
  int in_dim_, out_dim_;
  Parameter<T> w_;  // [in_dim, out_dim]
  Parameter<T> b_;  // [out_dim]
};

template <class T>
class LayerNorm : public Layer<T> {
 public:
  LayerNorm(std::string name, int dim, double eps = 1e-5);
  std::string_view type() const override { return "layer_norm"; }
  std::vector<std::int64_t> output_shape(const std::vector<std::int64_t>& in) const override;
  void forward(const Tensor<T>& in, Tensor<T>& out, Mode, std::uint64_t) override;
  void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& d_out,
                Tensor<T>& d_in) override;
  std::vector<Parameter<T>*> params() override { return {&gamma_, &beta_}; }
  void init(Rng&) override;

 private:
  int dim_;
  double eps_;
  Parameter<T> gamma_, beta_;
  std::vector<T> inv_std_, mean_;
};

template <class T>
class MultiHeadSelfAttention : public Layer<T> {
 public:
  MultiHeadSelfAttention(std::string name, int dim, int heads);
  std::string_view type() const override { return "multi_head_self_attention"; }
  std::vector<std::int64_t> output_shape(const std::vector<std::int64_t>& in) const override;
  void forward(const Tensor<T>& in, Tensor<T>& out, Mode, std::uint64_t) override;
  void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& d_out,
                Tensor<T>& d_in) override;
  std::vector<Parameter<T>*> params() override { return {&wqkv_, &bqkv_, &wproj_, &bproj_}; }
  void init(Rng& rng) override;

  // [B, heads, T, T] attention weights from the last forward.
  const Tensor<T>& last_attention() const { return attn_; }

 private:
  int dim_, heads_, head_dim_;
  Parameter<T> wqkv_;   // [dim, 3*dim]
  Parameter<T> bqkv_;   // [3*dim]
  Parameter<T> wproj_;  // [dim, dim]
  Parameter<T> bproj_;  // [dim]
  Tensor<T> qkv_, attn_, ctx_;  // saved forward context
};

// Patch projection plus class/distillation tokens and learned positional
// embeddings. Also applies a fixed input scale (images arrive in 0..255).
template <class T>
class PatchEmbed : public Layer<T> {
 public:
  PatchEmbed(std::string name, int in_ch, int image, int patch, int dim,
             int n_special, double input_scale);
  std::string_view type() const override { return "patch_embed"; }
  std::vector<std::int64_t> output_shape(const std::vector<std::int64_t>& in) const override;
  void forward(const Tensor<T>& in, Tensor<T>& out, Mode, std::uint64_t) override;
  void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& d_out,
                Tensor<T>& d_in) override;
  std::vector<Parameter<T>*> params() override;
  void init(Rng& rng) override;

  int n_tokens() const { return n_patches_ + n_special_; }
  int n_special() const { return n_special_; }

 private:
  int in_ch_, image_, patch_, dim_, n_special_, n_patches_;
  double input_scale_;
  Parameter<T> proj_w_;  // [dim, in_ch, patch, patch]
  Parameter<T> proj_b_;  // [dim]
  Parameter<T> tokens_;  // [n_special, dim]
  Parameter<T> pos_;     // [n_tokens, dim]
};

template <class T>
class Softmax : public Layer<T> {
 public:
  explicit Softmax(std::string name);
  std::string_view type() const override { return "softmax"; }
  std::vector<std::int64_t> output_shape(const std::vector<std::int64_t>& in) const override {
    return in;
  }
  void forward(const Tensor<T>& in, Tensor<T>& out, Mode, std::uint64_t) override;
  void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& d_out,
                Tensor<T>& d_in) override;
};

// Pre-norm transformer encoder block: x + attn(LN(x)), then x + mlp(LN(x)).
// Composed from the primitive layers above; ELU in the MLP keeps the
// activation vocabulary uniform across the network.
template <class T>
class TransformerBlock : public Layer<T> {
 public:
  TransformerBlock(std::string name, int dim, int heads, double mlp_ratio = 4.0);
  std::string_view type() const override { return "transformer_block"; }
  std::vector<std::int64_t> output_shape(const std::vector<std::int64_t>& in) const override;
  void forward(const Tensor<T>& in, Tensor<T>& out, Mode mode, std::uint64_t tick) override;
  void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& d_out,
                Tensor<T>& d_in) override;
  std::vector<Parameter<T>*> params() override;
  void init(Rng& rng) override;

  const MultiHeadSelfAttention<T>& attention() const { return attn_; }

 private:
  LayerNorm<T> ln1_, ln2_;
  MultiHeadSelfAttention<T> attn_;
  Linear<T> fc1_, fc2_;
  Elu<T> act_;
  // Saved intermediates for backward.
  Tensor<T> n1_, a_out_, mid_, n2_, f1_, e1_;
};

// Linear read-outs applied to the leading special tokens: token i feeds head
// i. Output is [B, n_heads, n_classes].
template <class T>
class TokenHeads : public Layer<T> {
 public:
  TokenHeads(std::string name, int dim, int n_classes, int n_heads);
  std::string_view type() const override { return "token_heads"; }
  std::vector<std::int64_t> output_shape(const std::vector<std::int64_t>& in) const override;
  void forward(const Tensor<T>& in, Tensor<T>& out, Mode, std::uint64_t) override;
  void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& d_out,
                Tensor<T>& d_in) override;
  std::vector<Parameter<T>*> params() override;
  void init(Rng& rng) override;
  // Heads start at zero so class and distillation read-outs agree initially;
  // training separates them.
  void zero_init();

 private:
  int dim_, n_classes_, n_heads_;
  std::vector<Parameter<T>> w_, b_;
};

}  // namespace fcdn::nn
