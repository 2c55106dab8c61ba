#include "fcdn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>
#include <cstring>

#include "fcdn/error.hpp"

namespace fcdn::nn {

namespace {

// C[r,:] += a * B[m,:] style row kernels; everything here leans on
// contiguous inner loops the compiler can vectorize.
template <class T>
void axpy(T a, const T* __restrict x, T* __restrict y, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// y[i] += sum_k w[k] * x[i+k]: all taps fused into one pass over the row, so
// the output row is written once instead of being reread per tap. The
// compile-time tap count lets the inner loop unroll into wide FMAs.
template <class T, int KW>
void corr_row_fixed(const T* __restrict x, const T* __restrict w, T* __restrict y,
                    std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) {
    T acc = y[i];
    for (int k = 0; k < KW; ++k) acc += w[k] * x[i + k];
    y[i] = acc;
  }
}

template <class T>
void corr_row(const T* x, const T* w, T* y, std::int64_t n, int kw) {
  switch (kw) {
    case 1: corr_row_fixed<T, 1>(x, w, y, n); return;
    case 3: corr_row_fixed<T, 3>(x, w, y, n); return;
    case 5: corr_row_fixed<T, 5>(x, w, y, n); return;
    case 7: corr_row_fixed<T, 7>(x, w, y, n); return;
    case 9: corr_row_fixed<T, 9>(x, w, y, n); return;
    case 11: corr_row_fixed<T, 11>(x, w, y, n); return;
    default:
      for (std::int64_t i = 0; i < n; ++i) {
        T acc = y[i];
        for (int k = 0; k < kw; ++k) acc += w[k] * x[i + k];
        y[i] = acc;
      }
  }
}

// Working-precision dot with sixteen partial sums; used where the surrounding
// accumulator is already type T, so double partials would buy nothing.
template <class T>
T dotT(const T* __restrict x, const T* __restrict y, std::int64_t n) {
  T f0{}, f1{}, f2{}, f3{}, f4{}, f5{}, f6{}, f7{};
  T f8{}, f9{}, f10{}, f11{}, f12{}, f13{}, f14{}, f15{};
  std::int64_t i = 0;
  for (; i + 16 <= n; i += 16) {
    f0 += x[i] * y[i];
    f1 += x[i + 1] * y[i + 1];
    f2 += x[i + 2] * y[i + 2];
    f3 += x[i + 3] * y[i + 3];
    f4 += x[i + 4] * y[i + 4];
    f5 += x[i + 5] * y[i + 5];
    f6 += x[i + 6] * y[i + 6];
    f7 += x[i + 7] * y[i + 7];
    f8 += x[i + 8] * y[i + 8];
    f9 += x[i + 9] * y[i + 9];
    f10 += x[i + 10] * y[i + 10];
    f11 += x[i + 11] * y[i + 11];
    f12 += x[i + 12] * y[i + 12];
    f13 += x[i + 13] * y[i + 13];
    f14 += x[i + 14] * y[i + 14];
    f15 += x[i + 15] * y[i + 15];
  }
  for (; i < n; ++i) f0 += x[i] * y[i];
  return (((f0 + f1) + (f2 + f3)) + ((f4 + f5) + (f6 + f7))) +
         (((f8 + f9) + (f10 + f11)) + ((f12 + f13) + (f14 + f15)));
}

// Eight partial sums break the serial addition chain so the reduction can use
// wide FMAs while keeping double accumulation.
template <class T>
double dot(const T* x, const T* y, std::int64_t n) {
  double a0 = 0, a1 = 0, a2 = 0, a3 = 0, a4 = 0, a5 = 0, a6 = 0, a7 = 0;
  std::int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    a0 += static_cast<double>(x[i]) * y[i];
    a1 += static_cast<double>(x[i + 1]) * y[i + 1];
    a2 += static_cast<double>(x[i + 2]) * y[i + 2];
    a3 += static_cast<double>(x[i + 3]) * y[i + 3];
    a4 += static_cast<double>(x[i + 4]) * y[i + 4];
    a5 += static_cast<double>(x[i + 5]) * y[i + 5];
    a6 += static_cast<double>(x[i + 6]) * y[i + 6];
    a7 += static_cast<double>(x[i + 7]) * y[i + 7];
  }
  for (; i < n; ++i) a0 += static_cast<double>(x[i]) * y[i];
  return ((a0 + a1) + (a2 + a3)) + ((a4 + a5) + (a6 + a7));
}

template <class T>
void require_rank(const std::vector<std::int64_t>& shape, int rank, const char* who) {
  require(static_cast<int>(shape.size()) == rank,
          std::string(who) + ": unexpected input rank");
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

template <class T>
Conv2d<T>::Conv2d(std::string name, int in_ch, int out_ch, int kh, int kw, int sh,
                  int sw, Padding pad)
    : Layer<T>(std::move(name)),
      in_ch_(in_ch),
      out_ch_(out_ch),
      kh_(kh),
      kw_(kw),
      sh_(sh),
      sw_(sw),
      pad_(pad) {
  require(in_ch >= 1 && out_ch >= 1 && kh >= 1 && kw >= 1 && sh >= 1 && sw >= 1,
          "conv2d: bad geometry");
  w_.name = this->name() + ".weight";
  w_.init_shape({out_ch_, in_ch_, kh_, kw_});
  b_.name = this->name() + ".bias";
  b_.init_shape({out_ch_});
}

template <class T>
void Conv2d<T>::pad_amounts(std::int64_t, int& left, int& right, std::int64_t,
                            int& top, int& bottom) const {
  if (pad_ == Padding::valid) {
    left = right = top = bottom = 0;
    return;
  }
  // 'same' with unit stride: total pad = k - 1, extra sample on the right.
  left = (kw_ - 1) / 2;
  right = kw_ - 1 - left;
  top = (kh_ - 1) / 2;
  bottom = kh_ - 1 - top;
}

template <class T>
std::vector<std::int64_t> Conv2d<T>::output_shape(
    const std::vector<std::int64_t>& in) const {
  require_rank<T>(in, 4, "conv2d");
  require(in[1] == in_ch_, this->name() + ": channel count mismatch");
  int pl, pr, pt, pb;
  pad_amounts(in[3], pl, pr, in[2], pt, pb);
  const std::int64_t h = (in[2] + pt + pb - kh_) / sh_ + 1;
  const std::int64_t w = (in[3] + pl + pr - kw_) / sw_ + 1;
  require(h >= 1 && w >= 1, this->name() + ": input too small for kernel");
  return {in[0], out_ch_, h, w};
}

template <class T>
void Conv2d<T>::forward(const Tensor<T>& in, Tensor<T>& out, Mode, std::uint64_t) {
  const auto os = output_shape(in.shape);
  out.reset_raw(os);
  const std::int64_t B = in.dim(0), H = in.dim(2), W = in.dim(3);
  const std::int64_t Ho = os[2], Wo = os[3];
  int pl, pr, pt, pb;
  pad_amounts(W, pl, pr, H, pt, pb);
  const std::int64_t Wp = W + pl + pr;

  std::vector<T> xpad(static_cast<std::size_t>(in_ch_) * H * Wp);
  for (std::int64_t b = 0; b < B; ++b) {
    // Horizontal zero-padding once per batch item.
    std::fill(xpad.begin(), xpad.end(), T{0});
    for (int ci = 0; ci < in_ch_; ++ci)
      for (std::int64_t h = 0; h < H; ++h)
        std::copy_n(&in.data[((b * in_ch_ + ci) * H + h) * W], W,
                    &xpad[(static_cast<std::size_t>(ci) * H + h) * Wp + pl]);

    for (int co = 0; co < out_ch_; ++co) {
      for (std::int64_t oh = 0; oh < Ho; ++oh) {
        T* orow = &out.data[((b * out_ch_ + co) * Ho + oh) * Wo];
        std::fill_n(orow, Wo, b_.value.data[co]);
        for (int ci = 0; ci < in_ch_; ++ci) {
          for (int kh = 0; kh < kh_; ++kh) {
            const std::int64_t ih = oh * sh_ + kh - pt;
            if (ih < 0 || ih >= H) continue;
            const T* xrow = &xpad[(static_cast<std::size_t>(ci) * H + ih) * Wp];
            const T* wrow = &w_.value.data[((co * in_ch_ + ci) * kh_ + kh) * kw_];
            if (sw_ == 1) {
              corr_row(xrow, wrow, orow, Wo, kw_);
            } else {
              for (int kw = 0; kw < kw_; ++kw)
                for (std::int64_t ow = 0; ow < Wo; ++ow)
                  orow[ow] += wrow[kw] * xrow[ow * sw_ + kw];
            }
          }
        }
      }
    }
  }
}

template <class T>
void Conv2d<T>::backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& d_out,
                         Tensor<T>& d_in) {
  d_in.reset_raw(in.shape);
  const std::int64_t B = in.dim(0), H = in.dim(2), W = in.dim(3);
  const std::int64_t Ho = d_out.dim(2), Wo = d_out.dim(3);
  int pl, pr, pt, pb;
  pad_amounts(W, pl, pr, H, pt, pb);
  const std::int64_t Wp = W + pl + pr;

  std::vector<T> xpad(static_cast<std::size_t>(in_ch_) * H * Wp);
  std::vector<T> dxpad(xpad.size());
  // Applying the taps in reverse order over a zero-padded gradient row turns
  // the input-gradient scatter into the same fused one-pass correlation as
  // the forward direction.
  std::vector<T> wrev;
  std::vector<T> gpad;
  if (sw_ == 1) {
    wrev.resize(w_.value.data.size());
    for (std::size_t base = 0; base < wrev.size(); base += kw_)
      for (int kw = 0; kw < kw_; ++kw)
        wrev[base + kw] = w_.value.data[base + kw_ - 1 - kw];
    gpad.assign(static_cast<std::size_t>(Wo + 2 * (kw_ - 1)), T{0});
  }

  for (std::int64_t b = 0; b < B; ++b) {
    std::fill(xpad.begin(), xpad.end(), T{0});
    std::fill(dxpad.begin(), dxpad.end(), T{0});
    for (int ci = 0; ci < in_ch_; ++ci)
      for (std::int64_t h = 0; h < H; ++h)
        std::copy_n(&in.data[((b * in_ch_ + ci) * H + h) * W], W,
                    &xpad[(static_cast<std::size_t>(ci) * H + h) * Wp + pl]);

    for (int co = 0; co < out_ch_; ++co) {
      double db = 0.0;
      for (std::int64_t oh = 0; oh < Ho; ++oh) {
        const T* grow = &d_out.data[((b * out_ch_ + co) * Ho + oh) * Wo];
        for (std::int64_t ow = 0; ow < Wo; ++ow) db += grow[ow];
        if (sw_ == 1) std::copy_n(grow, Wo, gpad.data() + (kw_ - 1));
        for (int ci = 0; ci < in_ch_; ++ci) {
          for (int kh = 0; kh < kh_; ++kh) {
            const std::int64_t ih = oh * sh_ + kh - pt;
            if (ih < 0 || ih >= H) continue;
            const T* xrow = &xpad[(static_cast<std::size_t>(ci) * H + ih) * Wp];
            T* dxrow = &dxpad[(static_cast<std::size_t>(ci) * H + ih) * Wp];
            const std::int64_t wbase = ((co * in_ch_ + ci) * kh_ + kh) * kw_;
            T* dwrow = &w_.grad.data[wbase];
            if (sw_ == 1) {
              for (int kw = 0; kw < kw_; ++kw)
                dwrow[kw] += dotT(grow, xrow + kw, Wo);
              corr_row(gpad.data(), &wrev[static_cast<std::size_t>(wbase)], dxrow,
                       Wp, kw_);
            } else {
              const T* wrow = &w_.value.data[wbase];
              for (int kw = 0; kw < kw_; ++kw) {
                double dw = 0.0;
                for (std::int64_t ow = 0; ow < Wo; ++ow) {
                  dw += static_cast<double>(grow[ow]) * xrow[ow * sw_ + kw];
                  dxrow[ow * sw_ + kw] += wrow[kw] * grow[ow];
                }
                dwrow[kw] += static_cast<T>(dw);
              }
            }
          }
        }
      }
      b_.grad.data[co] += static_cast<T>(db);
    }

    for (int ci = 0; ci < in_ch_; ++ci)
      for (std::int64_t h = 0; h < H; ++h)
        for (std::int64_t w = 0; w < W; ++w)
          d_in.data[((b * in_ch_ + ci) * H + h) * W + w] =
              dxpad[(static_cast<std::size_t>(ci) * H + h) * Wp + pl + w];
  }
}

template <class T>
void Conv2d<T>::init(Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(in_ch_) * kh_ * kw_);
  for (auto& v : w_.value.data) v = static_cast<T>(rng.uniform(-s, s));
  for (auto& v : b_.value.data) v = static_cast<T>(rng.uniform(-s, s));
}

// ---------------------------------------------------------------------------
// BatchNorm

template <class T>
BatchNorm<T>::BatchNorm(std::string name, int channels, double eps, double momentum)
    : Layer<T>(std::move(name)), channels_(channels), eps_(eps), momentum_(momentum) {
  require(channels >= 1, "batch_norm: bad channel count");
  gamma_.name = this->name() + ".gamma";
  gamma_.init_shape({channels_});
  beta_.name = this->name() + ".beta";
  beta_.init_shape({channels_});
  running_mean_ = Tensor<T>({channels_});
  running_var_ = Tensor<T>({channels_});
}

template <class T>
void BatchNorm<T>::init(Rng&) {
  std::fill(gamma_.value.data.begin(), gamma_.value.data.end(), T{1});
  std::fill(beta_.value.data.begin(), beta_.value.data.end(), T{0});
  running_mean_.zero();
  std::fill(running_var_.data.begin(), running_var_.data.end(), T{1});
}

template <class T>
std::vector<std::int64_t> BatchNorm<T>::output_shape(
    const std::vector<std::int64_t>& in) const {
  require_rank<T>(in, 4, "batch_norm");
  require(in[1] == channels_, this->name() + ": channel count mismatch");
  return in;
}

template <class T>
void BatchNorm<T>::forward(const Tensor<T>& in, Tensor<T>& out, Mode mode,
                           std::uint64_t) {
  (void)output_shape(in.shape);
  out.reset_raw(in.shape);
  const std::int64_t B = in.dim(0), HW = in.dim(2) * in.dim(3);
  const std::int64_t count = B * HW;
  last_mode_ = mode;
  batch_mean_.assign(channels_, T{0});
  batch_inv_std_.assign(channels_, T{0});

  for (int c = 0; c < channels_; ++c) {
    T mean, inv_std;
    if (mode == Mode::train) {
      require(count > 1, this->name() + ": train-mode batch needs > 1 sample");
      // Four partial sums per statistic keep the double reductions wide.
      double s0 = 0, s1 = 0, s2 = 0, s3 = 0, q0 = 0, q1 = 0, q2 = 0, q3 = 0;
      for (std::int64_t b = 0; b < B; ++b) {
        const T* __restrict x = &in.data[(b * channels_ + c) * HW];
        std::int64_t i = 0;
        for (; i + 4 <= HW; i += 4) {
          const double x0 = x[i], x1 = x[i + 1], x2 = x[i + 2], x3 = x[i + 3];
          s0 += x0; s1 += x1; s2 += x2; s3 += x3;
          q0 += x0 * x0; q1 += x1 * x1; q2 += x2 * x2; q3 += x3 * x3;
        }
        for (; i < HW; ++i) {
          const double xv = x[i];
          s0 += xv;
          q0 += xv * xv;
        }
      }
      const double m = ((s0 + s1) + (s2 + s3)) / static_cast<double>(count);
      const double ex2 = ((q0 + q1) + (q2 + q3)) / static_cast<double>(count);
      const double var = std::max(0.0, ex2 - m * m);
      mean = static_cast<T>(m);
      inv_std = static_cast<T>(1.0 / std::sqrt(var + eps_));
      const double unbiased = var * count / static_cast<double>(count - 1);
      running_mean_.data[c] =
          static_cast<T>((1.0 - momentum_) * running_mean_.data[c] + momentum_ * m);
      running_var_.data[c] = static_cast<T>((1.0 - momentum_) * running_var_.data[c] +
                                            momentum_ * unbiased);
    } else {
      mean = running_mean_.data[c];
      inv_std = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var_.data[c]) + eps_));
    }
    batch_mean_[c] = mean;
    batch_inv_std_[c] = inv_std;
    // y = g*(x-mean)*inv_std + beta folded into one multiply-add.
    const T scale = gamma_.value.data[c] * inv_std;
    const T shift = beta_.value.data[c] - scale * mean;
    for (std::int64_t b = 0; b < B; ++b) {
      const T* __restrict x = &in.data[(b * channels_ + c) * HW];
      T* __restrict y = &out.data[(b * channels_ + c) * HW];
      for (std::int64_t i = 0; i < HW; ++i) y[i] = scale * x[i] + shift;
    }
  }
}

template <class T>
void BatchNorm<T>::backward(const Tensor<T>& in, const Tensor<T>&,
                            const Tensor<T>& d_out, Tensor<T>& d_in) {
  d_in.reset_raw(in.shape);
  const std::int64_t B = in.dim(0), HW = in.dim(2) * in.dim(3);
  const std::int64_t count = B * HW;

  for (int c = 0; c < channels_; ++c) {
    const T mean = batch_mean_[c], inv = batch_inv_std_[c];
    const T g = gamma_.value.data[c];
    // Both modes need sum(g_out) and sum(g_out * xhat); four partial sums per
    // statistic keep the double reductions wide.
    double g0 = 0, g1 = 0, g2 = 0, g3 = 0, h0 = 0, h1 = 0, h2 = 0, h3 = 0;
    const double dm = static_cast<double>(mean), di = static_cast<double>(inv);
    for (std::int64_t b = 0; b < B; ++b) {
      const T* __restrict x = &in.data[(b * channels_ + c) * HW];
      const T* __restrict go = &d_out.data[(b * channels_ + c) * HW];
      std::int64_t i = 0;
      for (; i + 4 <= HW; i += 4) {
        const double o0 = go[i], o1 = go[i + 1], o2 = go[i + 2], o3 = go[i + 3];
        g0 += o0; g1 += o1; g2 += o2; g3 += o3;
        h0 += o0 * (x[i] - dm);
        h1 += o1 * (x[i + 1] - dm);
        h2 += o2 * (x[i + 2] - dm);
        h3 += o3 * (x[i + 3] - dm);
      }
      for (; i < HW; ++i) {
        const double ov = go[i];
        g0 += ov;
        h0 += ov * (x[i] - dm);
      }
    }
    const double sum_g = (g0 + g1) + (g2 + g3);
    const double sum_gx = (((h0 + h1) + (h2 + h3))) * di;
    gamma_.grad.data[c] += static_cast<T>(sum_gx);
    beta_.grad.data[c] += static_cast<T>(sum_g);

    if (last_mode_ == Mode::eval) {
      // Running statistics are constants: plain affine backward.
      const T k = g * inv;
      for (std::int64_t b = 0; b < B; ++b) {
        const T* __restrict go = &d_out.data[(b * channels_ + c) * HW];
        T* __restrict gi = &d_in.data[(b * channels_ + c) * HW];
        for (std::int64_t i = 0; i < HW; ++i) gi[i] = go[i] * k;
      }
      continue;
    }
    // gi = g*inv/n * (n*go - sum_g - xhat*sum_gx) rearranged to
    // gi = A*go + B + C*(x - mean) with per-channel constants.
    const double n = static_cast<double>(count);
    const T A = static_cast<T>(static_cast<double>(g) * di);
    const T Bc = static_cast<T>(-static_cast<double>(g) * di * sum_g / n);
    const T C = static_cast<T>(-static_cast<double>(g) * di * di * sum_gx / n);
    for (std::int64_t b = 0; b < B; ++b) {
      const T* __restrict x = &in.data[(b * channels_ + c) * HW];
      const T* __restrict go = &d_out.data[(b * channels_ + c) * HW];
      T* __restrict gi = &d_in.data[(b * channels_ + c) * HW];
      for (std::int64_t i = 0; i < HW; ++i) gi[i] = A * go[i] + Bc + C * (x[i] - mean);
    }
  }
}

// ---------------------------------------------------------------------------
// Elu

template <class T>
Elu<T>::Elu(std::string name, double alpha) : Layer<T>(std::move(name)), alpha_(alpha) {}

template <class T>
void Elu<T>::forward(const Tensor<T>& in, Tensor<T>& out, Mode, std::uint64_t) {
  out.reset_raw(in.shape);
  const std::int64_t n = in.numel();
  const T* __restrict x = in.data.data();
  T* __restrict y = out.data.data();
  if constexpr (std::is_same_v<T, float>) {
    // expf(v) - 1 instead of expm1: ~3x faster, and the cancellation near
    // zero only costs absolute error ~1e-7, far below training noise. The
    // exp runs unconditionally on the clamped value: signs are effectively
    // random here, so dodging branch mispredictions beats skipping the call.
    const float a = static_cast<float>(alpha_);
    for (std::int64_t i = 0; i < n; ++i) {
      const float v = x[i];
      const float e = a * (std::exp(v < 0.0f ? v : 0.0f) - 1.0f);
      y[i] = v > 0.0f ? v : e;
    }
  } else {
    const T a = static_cast<T>(alpha_);
    for (std::int64_t i = 0; i < n; ++i) {
      const T v = x[i];
      y[i] = v > T{0} ? v : a * static_cast<T>(std::expm1(static_cast<double>(v)));
    }
  }
}

template <class T>
void Elu<T>::backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& d_out,
                      Tensor<T>& d_in) {
  d_in.reset_raw(in.shape);
  const std::int64_t n = in.numel();
  const T* __restrict x = in.data.data();
  const T* __restrict y = out.data.data();
  const T* __restrict go = d_out.data.data();
  T* __restrict gi = d_in.data.data();
  const T a = static_cast<T>(alpha_);
  // sel is exactly 0 or 1, so the select stays arithmetic (no branch to
  // mispredict on random-sign activations).
  for (std::int64_t i = 0; i < n; ++i) {
    const T sel = static_cast<T>(x[i] > T{0});
    const T neg = y[i] + a;
    gi[i] = go[i] * (neg + sel * (T{1} - neg));
  }
}

// ---------------------------------------------------------------------------
// AvgPool

template <class T>
AvgPool<T>::AvgPool(std::string name, int kh, int kw, int sh, int sw)
    : Layer<T>(std::move(name)), kh_(kh), kw_(kw), sh_(sh), sw_(sw) {
  require(kh >= 1 && kw >= 1 && sh >= 1 && sw >= 1, "avg_pool: bad geometry");
}

template <class T>
std::vector<std::int64_t> AvgPool<T>::output_shape(
    const std::vector<std::int64_t>& in) const {
  require_rank<T>(in, 4, "avg_pool");
  require(in[2] >= kh_ && in[3] >= kw_, this->name() + ": input smaller than window");
  return {in[0], in[1], (in[2] - kh_) / sh_ + 1, (in[3] - kw_) / sw_ + 1};
}

template <class T>
void AvgPool<T>::forward(const Tensor<T>& in, Tensor<T>& out, Mode, std::uint64_t) {
  const auto os = output_shape(in.shape);
  out.reset_raw(os);
  const std::int64_t BC = in.dim(0) * in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::int64_t Ho = os[2], Wo = os[3];
  const T inv = static_cast<T>(1.0 / (kh_ * kw_));
  for (std::int64_t bc = 0; bc < BC; ++bc) {
    const T* x = &in.data[bc * H * W];
    T* y = &out.data[bc * Ho * Wo];
    for (std::int64_t oh = 0; oh < Ho; ++oh)
      for (std::int64_t ow = 0; ow < Wo; ++ow) {
        double acc = 0.0;
        for (int i = 0; i < kh_; ++i)
          for (int j = 0; j < kw_; ++j) acc += x[(oh * sh_ + i) * W + ow * sw_ + j];
        y[oh * Wo + ow] = static_cast<T>(acc) * inv;
      }
  }
}

template <class T>
void AvgPool<T>::backward(const Tensor<T>& in, const Tensor<T>& out,
                          const Tensor<T>& d_out, Tensor<T>& d_in) {
  d_in.reset_zero(in.shape);
  const std::int64_t BC = in.dim(0) * in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::int64_t Ho = out.dim(2), Wo = out.dim(3);
  const T inv = static_cast<T>(1.0 / (kh_ * kw_));
  for (std::int64_t bc = 0; bc < BC; ++bc) {
    const T* go = &d_out.data[bc * Ho * Wo];
    T* gi = &d_in.data[bc * H * W];
    for (std::int64_t oh = 0; oh < Ho; ++oh)
      for (std::int64_t ow = 0; ow < Wo; ++ow) {
        const T v = go[oh * Wo + ow] * inv;
        for (int i = 0; i < kh_; ++i)
          for (int j = 0; j < kw_; ++j) gi[(oh * sh_ + i) * W + ow * sw_ + j] += v;
      }
  }
}

// ---------------------------------------------------------------------------
// AdaptiveAvgPoolTime

template <class T>
AdaptiveAvgPoolTime<T>::AdaptiveAvgPoolTime(std::string name, int target)
    : Layer<T>(std::move(name)), target_(target) {
  require(target >= 1, "adaptive_avg_pool_time: bad target");
}

template <class T>
std::vector<std::int64_t> AdaptiveAvgPoolTime<T>::output_shape(
    const std::vector<std::int64_t>& in) const {
  require_rank<T>(in, 4, "adaptive_avg_pool_time");
  require(in[3] >= target_, this->name() + ": time axis shorter than target");
  return {in[0], in[1], in[2], target_};
}

template <class T>
void AdaptiveAvgPoolTime<T>::forward(const Tensor<T>& in, Tensor<T>& out, Mode,
                                     std::uint64_t) {
  const auto os = output_shape(in.shape);
  out.reset_raw(os);
  const std::int64_t rows = in.dim(0) * in.dim(1) * in.dim(2), W = in.dim(3);
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* x = &in.data[r * W];
    T* y = &out.data[r * target_];
    for (int t = 0; t < target_; ++t) {
      const std::int64_t lo = t * W / target_;
      const std::int64_t hi = ((t + 1) * W + target_ - 1) / target_;
      double acc = 0.0;
      for (std::int64_t i = lo; i < hi; ++i) acc += x[i];
      y[t] = static_cast<T>(acc / static_cast<double>(hi - lo));
    }
  }
}

template <class T>
void AdaptiveAvgPoolTime<T>::backward(const Tensor<T>& in, const Tensor<T>&,
                                      const Tensor<T>& d_out, Tensor<T>& d_in) {
  d_in.reset_zero(in.shape);
  const std::int64_t rows = in.dim(0) * in.dim(1) * in.dim(2), W = in.dim(3);
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* go = &d_out.data[r * target_];
    T* gi = &d_in.data[r * W];
    for (int t = 0; t < target_; ++t) {
      const std::int64_t lo = t * W / target_;
      const std::int64_t hi = ((t + 1) * W + target_ - 1) / target_;
      const T v = go[t] / static_cast<T>(hi - lo);
      for (std::int64_t i = lo; i < hi; ++i) gi[i] += v;
    }
  }
}

// ---------------------------------------------------------------------------
// Dropout

template <class T>
Dropout<T>::Dropout(std::string name, double p) : Layer<T>(std::move(name)), p_(p) {
  require(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1)");
}

template <class T>
void Dropout<T>::forward(const Tensor<T>& in, Tensor<T>& out, Mode mode,
                         std::uint64_t tick) {
  out = in;
  if (mode != Mode::train || p_ == 0.0) {
    masked_ = false;
    return;
  }
  masked_ = true;
  mask_.resize(static_cast<std::size_t>(in.numel()));
  Rng rng(derive_seed(stream_seed_, {tick}));
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p_));
  for (std::int64_t i = 0; i < in.numel(); ++i) {
    const bool keep = rng.uniform() >= p_;
    mask_[i] = keep ? keep_scale : T{0};
    out.data[i] = in.data[i] * mask_[i];
  }
}

template <class T>
void Dropout<T>::backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& d_out,
                          Tensor<T>& d_in) {
  d_in = d_out;
  if (!masked_) return;
  require(mask_.size() == static_cast<std::size_t>(in.numel()),
          this->name() + ": stale dropout mask");
  for (std::int64_t i = 0; i < in.numel(); ++i) d_in.data[i] = d_out.data[i] * mask_[i];
}

// ---------------------------------------------------------------------------
// Linear

template <class T>
Linear<T>::Linear(std::string name, int in_dim, int out_dim)
    : Layer<T>(std::move(name)), in_dim_(in_dim), out_dim_(out_dim) {
  require(in_dim >= 1 && out_dim >= 1, "linear: bad dims");
  w_.name = this->name() + ".weight";
  w_.init_shape({in_dim_, out_dim_});
  b_.name = this->name() + ".bias";
  b_.init_shape({out_dim_});
}

template <class T>
std::vector<std::int64_t> Linear<T>::output_shape(
    const std::vector<std::int64_t>& in) const {
  require(in.size() >= 2, this->name() + ": input rank must be >= 2");
  require(in.back() == in_dim_, this->name() + ": feature dim mismatch");
  auto out = in;
  out.back() = out_dim_;
  return out;
}

template <class T>
void Linear<T>::forward(const Tensor<T>& in, Tensor<T>& out, Mode, std::uint64_t) {
  out.reset_raw(output_shape(in.shape));
  const std::int64_t R = in.numel() / in_dim_;
  for (std::int64_t r = 0; r < R; ++r) {
    const T* x = &in.data[r * in_dim_];
    T* y = &out.data[r * out_dim_];
    std::copy_n(b_.value.data.data(), out_dim_, y);
    for (int i = 0; i < in_dim_; ++i)
      axpy(x[i], &w_.value.data[static_cast<std::size_t>(i) * out_dim_], y, out_dim_);
  }
}

template <class T>
void Linear<T>::backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& d_out,
                         Tensor<T>& d_in) {
  d_in.reset_raw(in.shape);
  const std::int64_t R = in.numel() / in_dim_;
  for (std::int64_t r = 0; r < R; ++r) {
    const T* x = &in.data[r * in_dim_];
    const T* go = &d_out.data[r * out_dim_];
    T* gi = &d_in.data[r * in_dim_];
    for (int o = 0; o < out_dim_; ++o) b_.grad.data[o] += go[o];
    for (int i = 0; i < in_dim_; ++i) {
      const T* wrow = &w_.value.data[static_cast<std::size_t>(i) * out_dim_];
      T* dwrow = &w_.grad.data[static_cast<std::size_t>(i) * out_dim_];
      gi[i] = dotT(go, wrow, out_dim_);
      axpy(x[i], go, dwrow, out_dim_);
    }
  }
}

template <class T>
void Linear<T>::init(Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(in_dim_));
  for (auto& v : w_.value.data) v = static_cast<T>(rng.uniform(-s, s));
  for (auto& v : b_.value.data) v = static_cast<T>(rng.uniform(-s, s));
}

// ---------------------------------------------------------------------------
// LayerNorm

template <class T>
LayerNorm<T>::LayerNorm(std::string name, int dim, double eps)
    : Layer<T>(std::move(name)), dim_(dim), eps_(eps) {
  require(dim >= 1, "layer_norm: bad dim");
  gamma_.name = this->name() + ".gamma";
  gamma_.init_shape({dim_});
  beta_.name = this->name() + ".beta";
  beta_.init_shape({dim_});
}

template <class T>
void LayerNorm<T>::init(Rng&) {
  std::fill(gamma_.value.data.begin(), gamma_.value.data.end(), T{1});
  std::fill(beta_.value.data.begin(), beta_.value.data.end(), T{0});
}

template <class T>
std::vector<std::int64_t> LayerNorm<T>::output_shape(
    const std::vector<std::int64_t>& in) const {
  require(in.size() >= 2 && in.back() == dim_, this->name() + ": feature dim mismatch");
  return in;
}

template <class T>
void LayerNorm<T>::forward(const Tensor<T>& in, Tensor<T>& out, Mode, std::uint64_t) {
  (void)output_shape(in.shape);
  out.reset_raw(in.shape);
  const std::int64_t R = in.numel() / dim_;
  mean_.assign(static_cast<std::size_t>(R), T{0});
  inv_std_.assign(static_cast<std::size_t>(R), T{0});
  for (std::int64_t r = 0; r < R; ++r) {
    const T* x = &in.data[r * dim_];
    double m = 0.0;
    for (int i = 0; i < dim_; ++i) m += x[i];
    m /= dim_;
    double var = 0.0;
    for (int i = 0; i < dim_; ++i) var += (x[i] - m) * (x[i] - m);
    var /= dim_;
    const double inv = 1.0 / std::sqrt(var + eps_);
    mean_[r] = static_cast<T>(m);
    inv_std_[r] = static_cast<T>(inv);
    T* y = &out.data[r * dim_];
    for (int i = 0; i < dim_; ++i)
      y[i] = gamma_.value.data[i] * static_cast<T>((x[i] - m) * inv) + beta_.value.data[i];
  }
}

template <class T>
void LayerNorm<T>::backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& d_out,
                            Tensor<T>& d_in) {
  d_in.reset_raw(in.shape);
  const std::int64_t R = in.numel() / dim_;
  for (std::int64_t r = 0; r < R; ++r) {
    const T* x = &in.data[r * dim_];
    const T* go = &d_out.data[r * dim_];
    T* gi = &d_in.data[r * dim_];
    const double m = mean_[r], inv = inv_std_[r];
    double sum_dh = 0.0, sum_dh_xhat = 0.0;
    for (int i = 0; i < dim_; ++i) {
      const double xhat = (x[i] - m) * inv;
      const double dh = static_cast<double>(go[i]) * gamma_.value.data[i];
      gamma_.grad.data[i] += static_cast<T>(go[i] * xhat);
      beta_.grad.data[i] += go[i];
      sum_dh += dh;
      sum_dh_xhat += dh * xhat;
    }
    for (int i = 0; i < dim_; ++i) {
      const double xhat = (x[i] - m) * inv;
      const double dh = static_cast<double>(go[i]) * gamma_.value.data[i];
      gi[i] = static_cast<T>(inv / dim_ * (dim_ * dh - sum_dh - xhat * sum_dh_xhat));
    }
  }
}

// ---------------------------------------------------------------------------
// MultiHeadSelfAttention

template <class T>
MultiHeadSelfAttention<T>::MultiHeadSelfAttention(std::string name, int dim, int heads)
    : Layer<T>(std::move(name)), dim_(dim), heads_(heads), head_dim_(dim / heads) {
  require(heads >= 1 && dim >= 1 && dim % heads == 0,
          "multi_head_self_attention: dim must divide by heads");
  wqkv_.name = this->name() + ".wqkv";
  wqkv_.init_shape({dim_, 3 * dim_});
  bqkv_.name = this->name() + ".bqkv";
  bqkv_.init_shape({3 * dim_});
  wproj_.name = this->name() + ".wproj";
  wproj_.init_shape({dim_, dim_});
  bproj_.name = this->name() + ".bproj";
  bproj_.init_shape({dim_});
}

template <class T>
void MultiHeadSelfAttention<T>::init(Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(dim_));
  for (auto& v : wqkv_.value.data) v = static_cast<T>(rng.uniform(-s, s));
  for (auto& v : bqkv_.value.data) v = T{0};
  for (auto& v : wproj_.value.data) v = static_cast<T>(rng.uniform(-s, s));
  for (auto& v : bproj_.value.data) v = T{0};
}

template <class T>
std::vector<std::int64_t> MultiHeadSelfAttention<T>::output_shape(
    const std::vector<std::int64_t>& in) const {
  require_rank<T>(in, 3, "multi_head_self_attention");
  require(in[2] == dim_, this->name() + ": feature dim mismatch");
  return in;
}

template <class T>
void MultiHeadSelfAttention<T>::forward(const Tensor<T>& in, Tensor<T>& out, Mode,
                                        std::uint64_t) {
  (void)output_shape(in.shape);
  const std::int64_t B = in.dim(0), Tn = in.dim(1);
  const int D = dim_, H = heads_, Dh = head_dim_;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(Dh)));

  // qkv = X Wqkv + b
  qkv_.reset_raw({B, Tn, 3 * D});
  for (std::int64_t r = 0; r < B * Tn; ++r) {
    const T* x = &in.data[r * D];
    T* y = &qkv_.data[r * 3 * D];
    std::copy_n(bqkv_.value.data.data(), 3 * D, y);
    for (int i = 0; i < D; ++i)
      axpy(x[i], &wqkv_.value.data[static_cast<std::size_t>(i) * 3 * D], y, 3 * D);
  }

  attn_.reset_raw({B, H, Tn, Tn});
  ctx_.reset_raw({B, Tn, D});
  std::vector<double> row(static_cast<std::size_t>(Tn));
  for (std::int64_t b = 0; b < B; ++b) {
    for (int h = 0; h < H; ++h) {
      const int qo = h * Dh, ko = D + h * Dh, vo = 2 * D + h * Dh;
      // scores + softmax, one query row at a time
      for (std::int64_t tq = 0; tq < Tn; ++tq) {
        const T* q = &qkv_.data[(b * Tn + tq) * 3 * D + qo];
        double mx = -1e300;
        for (std::int64_t tk = 0; tk < Tn; ++tk) {
          const T* k = &qkv_.data[(b * Tn + tk) * 3 * D + ko];
          row[tk] = dotT(q, k, Dh) * scale;
          mx = std::max(mx, row[tk]);
        }
        double z = 0.0;
        for (std::int64_t tk = 0; tk < Tn; ++tk) {
          row[tk] = std::exp(row[tk] - mx);
          z += row[tk];
        }
        T* arow = &attn_.data[((b * H + h) * Tn + tq) * Tn];
        for (std::int64_t tk = 0; tk < Tn; ++tk)
          arow[tk] = static_cast<T>(row[tk] / z);
        // ctx row for this head
        T* c = &ctx_.data[(b * Tn + tq) * D + qo];
        std::fill_n(c, Dh, T{0});
        for (std::int64_t tk = 0; tk < Tn; ++tk) {
          const T* v = &qkv_.data[(b * Tn + tk) * 3 * D + vo];
          axpy(arow[tk], v, c, Dh);
        }
      }
    }
  }

  out.reset_raw({B, Tn, D});
  for (std::int64_t r = 0; r < B * Tn; ++r) {
    const T* c = &ctx_.data[r * D];
    T* y = &out.data[r * D];
    std::copy_n(bproj_.value.data.data(), D, y);
    for (int i = 0; i < D; ++i)
      axpy(c[i], &wproj_.value.data[static_cast<std::size_t>(i) * D], y, D);
  }
}

template <class T>
void MultiHeadSelfAttention<T>::backward(const Tensor<T>& in, const Tensor<T>&,
                                         const Tensor<T>& d_out, Tensor<T>& d_in) {
  const std::int64_t B = in.dim(0), Tn = in.dim(1);
  const int D = dim_, H = heads_, Dh = head_dim_;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(Dh)));

  // Through the output projection.
  Tensor<T> d_ctx({B, Tn, D});
  for (std::int64_t r = 0; r < B * Tn; ++r) {
    const T* go = &d_out.data[r * D];
    const T* c = &ctx_.data[r * D];
    T* gc = &d_ctx.data[r * D];
    for (int o = 0; o < D; ++o) bproj_.grad.data[o] += go[o];
    for (int i = 0; i < D; ++i) {
      const T* wrow = &wproj_.value.data[static_cast<std::size_t>(i) * D];
      T* dwrow = &wproj_.grad.data[static_cast<std::size_t>(i) * D];
      gc[i] = dotT(go, wrow, D);
      axpy(c[i], go, dwrow, D);
    }
  }

  Tensor<T> d_qkv({B, Tn, 3 * D});
  std::vector<double> d_attn_row(static_cast<std::size_t>(Tn));
  for (std::int64_t b = 0; b < B; ++b) {
    for (int h = 0; h < H; ++h) {
      const int qo = h * Dh, ko = D + h * Dh, vo = 2 * D + h * Dh;
      for (std::int64_t tq = 0; tq < Tn; ++tq) {
        const T* arow = &attn_.data[((b * H + h) * Tn + tq) * Tn];
        const T* gctx = &d_ctx.data[(b * Tn + tq) * D + qo];
        // d_attn = gctx . V^T ; dV += attn^T outer
        double dot_sum = 0.0;
        for (std::int64_t tk = 0; tk < Tn; ++tk) {
          const T* v = &qkv_.data[(b * Tn + tk) * 3 * D + vo];
          T* dv = &d_qkv.data[(b * Tn + tk) * 3 * D + vo];
          d_attn_row[tk] = dotT(gctx, v, Dh);
          axpy(arow[tk], gctx, dv, Dh);
          dot_sum += d_attn_row[tk] * arow[tk];
        }
        // softmax backward -> d_scores, then into q and k
        const T* q = &qkv_.data[(b * Tn + tq) * 3 * D + qo];
        T* dq = &d_qkv.data[(b * Tn + tq) * 3 * D + qo];
        for (std::int64_t tk = 0; tk < Tn; ++tk) {
          const T ds = static_cast<T>(arow[tk] * (d_attn_row[tk] - dot_sum)) * scale;
          const T* k = &qkv_.data[(b * Tn + tk) * 3 * D + ko];
          T* dk = &d_qkv.data[(b * Tn + tk) * 3 * D + ko];
          axpy(ds, k, dq, Dh);
          axpy(ds, q, dk, Dh);
        }
      }
    }
  }

  // Through the qkv projection.
  d_in.reset_raw(in.shape);
  for (std::int64_t r = 0; r < B * Tn; ++r) {
    const T* gq = &d_qkv.data[r * 3 * D];
    const T* x = &in.data[r * D];
    T* gi = &d_in.data[r * D];
    for (int o = 0; o < 3 * D; ++o) bqkv_.grad.data[o] += gq[o];
    for (int i = 0; i < D; ++i) {
      const T* wrow = &wqkv_.value.data[static_cast<std::size_t>(i) * 3 * D];
      T* dwrow = &wqkv_.grad.data[static_cast<std::size_t>(i) * 3 * D];
      gi[i] = dotT(gq, wrow, 3 * D);
      axpy(x[i], gq, dwrow, 3 * D);
    }
  }
}

// ---------------------------------------------------------------------------
// PatchEmbed

template <class T>
PatchEmbed<T>::PatchEmbed(std::string name, int in_ch, int image, int patch, int dim,
                          int n_special, double input_scale)
    : Layer<T>(std::move(name)),
      in_ch_(in_ch),
      image_(image),
      patch_(patch),
      dim_(dim),
      n_special_(n_special),
      input_scale_(input_scale) {
  require(image >= 1 && patch >= 1 && image % patch == 0,
          "patch_embed: image size must divide by patch size");
  require(n_special >= 0 && n_special <= 2, "patch_embed: 0-2 special tokens supported");
  const int grid = image_ / patch_;
  n_patches_ = grid * grid;
  proj_w_.name = this->name() + ".proj_w";
  proj_w_.init_shape({dim_, in_ch_, patch_, patch_});
  proj_b_.name = this->name() + ".proj_b";
  proj_b_.init_shape({dim_});
  tokens_.name = this->name() + ".tokens";
  tokens_.init_shape({n_special_, dim_});
  pos_.name = this->name() + ".pos";
  pos_.init_shape({n_patches_ + n_special_, dim_});
}

template <class T>
std::vector<Parameter<T>*> PatchEmbed<T>::params() {
  std::vector<Parameter<T>*> p = {&proj_w_, &proj_b_, &pos_};
  if (n_special_ > 0) p.push_back(&tokens_);
  return p;
}

template <class T>
void PatchEmbed<T>::init(Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(in_ch_) * patch_ * patch_);
  for (auto& v : proj_w_.value.data) v = static_cast<T>(rng.uniform(-s, s));
  for (auto& v : proj_b_.value.data) v = T{0};
  for (auto& v : tokens_.value.data) v = static_cast<T>(rng.gaussian(0.0, 0.02));
  for (auto& v : pos_.value.data) v = static_cast<T>(rng.gaussian(0.0, 0.02));
}

template <class T>
std::vector<std::int64_t> PatchEmbed<T>::output_shape(
    const std::vector<std::int64_t>& in) const {
  require_rank<T>(in, 4, "patch_embed");
  require(in[1] == in_ch_ && in[2] == image_ && in[3] == image_,
          this->name() + ": input must be [B," + std::to_string(in_ch_) + "," +
              std::to_string(image_) + "," + std::to_string(image_) + "]");
  return {in[0], n_patches_ + n_special_, dim_};
}

template <class T>
void PatchEmbed<T>::forward(const Tensor<T>& in, Tensor<T>& out, Mode, std::uint64_t) {
  out.reset_raw(output_shape(in.shape));
  const std::int64_t B = in.dim(0);
  const int grid = image_ / patch_;
  const T sc = static_cast<T>(input_scale_);
  for (std::int64_t b = 0; b < B; ++b) {
    for (int s = 0; s < n_special_; ++s) {
      T* y = &out.data[(b * n_tokens() + s) * dim_];
      for (int d = 0; d < dim_; ++d)
        y[d] = tokens_.value.data[s * dim_ + d] + pos_.value.data[s * dim_ + d];
    }
    for (int ph = 0; ph < grid; ++ph) {
      for (int pw = 0; pw < grid; ++pw) {
        const int tok = n_special_ + ph * grid + pw;
        T* y = &out.data[(b * n_tokens() + tok) * dim_];
        for (int d = 0; d < dim_; ++d) {
          double acc = proj_b_.value.data[d];
          const T* w = &proj_w_.value.data[static_cast<std::size_t>(d) * in_ch_ *
                                           patch_ * patch_];
          for (int c = 0; c < in_ch_; ++c)
            for (int i = 0; i < patch_; ++i) {
              const T* xr = &in.data[((b * in_ch_ + c) * image_ + ph * patch_ + i) *
                                         image_ +
                                     pw * patch_];
              const T* wr = &w[(c * patch_ + i) * patch_];
              acc += static_cast<double>(sc) * dot(wr, xr, patch_);
            }
          y[d] = static_cast<T>(acc) + pos_.value.data[static_cast<std::size_t>(tok) * dim_ + d];
        }
      }
    }
  }
}

template <class T>
void PatchEmbed<T>::backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& d_out,
                             Tensor<T>& d_in) {
  d_in.reset_zero(in.shape);
  const std::int64_t B = in.dim(0);
  const int grid = image_ / patch_;
  const T sc = static_cast<T>(input_scale_);
  for (std::int64_t b = 0; b < B; ++b) {
    for (int s = 0; s < n_special_; ++s) {
      const T* go = &d_out.data[(b * n_tokens() + s) * dim_];
      for (int d = 0; d < dim_; ++d) {
        tokens_.grad.data[s * dim_ + d] += go[d];
        pos_.grad.data[s * dim_ + d] += go[d];
      }
    }
    for (int ph = 0; ph < grid; ++ph) {
      for (int pw = 0; pw < grid; ++pw) {
        const int tok = n_special_ + ph * grid + pw;
        const T* go = &d_out.data[(b * n_tokens() + tok) * dim_];
        for (int d = 0; d < dim_; ++d) {
          const T g = go[d];
          pos_.grad.data[static_cast<std::size_t>(tok) * dim_ + d] += g;
          proj_b_.grad.data[d] += g;
          T* dw = &proj_w_.grad.data[static_cast<std::size_t>(d) * in_ch_ * patch_ *
                                     patch_];
          const T* w = &proj_w_.value.data[static_cast<std::size_t>(d) * in_ch_ *
                                           patch_ * patch_];
          for (int c = 0; c < in_ch_; ++c)
            for (int i = 0; i < patch_; ++i) {
              const std::int64_t row =
                  ((b * in_ch_ + c) * image_ + ph * patch_ + i) * image_ + pw * patch_;
              const T* xr = &in.data[row];
              T* gi = &d_in.data[row];
              T* dwr = &dw[(c * patch_ + i) * patch_];
              const T* wr = &w[(c * patch_ + i) * patch_];
              axpy(g * sc, xr, dwr, patch_);
              axpy(g * sc, wr, gi, patch_);
            }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Softmax

template <class T>
Softmax<T>::Softmax(std::string name) : Layer<T>(std::move(name)) {}

template <class T>
void Softmax<T>::forward(const Tensor<T>& in, Tensor<T>& out, Mode, std::uint64_t) {
  require(in.rank() >= 1, "softmax: rank must be >= 1");
  out.reset_raw(in.shape);
  const std::int64_t D = in.shape.back();
  const std::int64_t R = in.numel() / D;
  for (std::int64_t r = 0; r < R; ++r) {
    const T* x = &in.data[r * D];
    T* y = &out.data[r * D];
    double mx = -1e300;
    for (std::int64_t i = 0; i < D; ++i) mx = std::max(mx, static_cast<double>(x[i]));
    double z = 0.0;
    for (std::int64_t i = 0; i < D; ++i) {
      const double e = std::exp(static_cast<double>(x[i]) - mx);
      y[i] = static_cast<T>(e);
      z += e;
    }
    for (std::int64_t i = 0; i < D; ++i) y[i] = static_cast<T>(y[i] / z);
  }
}

template <class T>
void Softmax<T>::backward(const Tensor<T>& in, const Tensor<T>& out,
                          const Tensor<T>& d_out, Tensor<T>& d_in) {
  d_in.reset_raw(in.shape);
  const std::int64_t D = in.shape.back();
  const std::int64_t R = in.numel() / D;
  for (std::int64_t r = 0; r < R; ++r) {
    const T* y = &out.data[r * D];
    const T* go = &d_out.data[r * D];
    T* gi = &d_in.data[r * D];
    double s = 0.0;
    for (std::int64_t i = 0; i < D; ++i) s += static_cast<double>(go[i]) * y[i];
    for (std::int64_t i = 0; i < D; ++i)
      gi[i] = static_cast<T>((static_cast<double>(go[i]) - s) * y[i]);
  }
}

// ---------------------------------------------------------------------------
// TransformerBlock

template <class T>
TransformerBlock<T>::TransformerBlock(std::string name, int dim, int heads,
                                      double mlp_ratio)
    : Layer<T>(name),
      ln1_(name + ".ln1", dim),
      ln2_(name + ".ln2", dim),
      attn_(name + ".attn", dim, heads),
      fc1_(name + ".fc1", dim, static_cast<int>(dim * mlp_ratio)),
      fc2_(name + ".fc2", static_cast<int>(dim * mlp_ratio), dim),
      act_(name + ".act") {}

template <class T>
std::vector<Parameter<T>*> TransformerBlock<T>::params() {
  std::vector<Parameter<T>*> out;
  for (Layer<T>* l : std::initializer_list<Layer<T>*>{&ln1_, &attn_, &ln2_, &fc1_, &fc2_})
    for (auto* p : l->params()) out.push_back(p);
  return out;
}

template <class T>
void TransformerBlock<T>::init(Rng& rng) {
  ln1_.init(rng);
  attn_.init(rng);
  ln2_.init(rng);
  fc1_.init(rng);
  fc2_.init(rng);
}

template <class T>
std::vector<std::int64_t> TransformerBlock<T>::output_shape(
    const std::vector<std::int64_t>& in) const {
  return ln1_.output_shape(in);
}

template <class T>
void TransformerBlock<T>::forward(const Tensor<T>& in, Tensor<T>& out, Mode mode,
                                  std::uint64_t tick) {
  ln1_.forward(in, n1_, mode, tick);
  attn_.forward(n1_, a_out_, mode, tick);
  mid_ = in;
  for (std::int64_t i = 0; i < mid_.numel(); ++i) mid_.data[i] += a_out_.data[i];
  ln2_.forward(mid_, n2_, mode, tick);
  fc1_.forward(n2_, f1_, mode, tick);
  act_.forward(f1_, e1_, mode, tick);
  Tensor<T> f2;
  fc2_.forward(e1_, f2, mode, tick);
  out = mid_;
  for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] += f2.data[i];
}

template <class T>
void TransformerBlock<T>::backward(const Tensor<T>& in, const Tensor<T>&,
                                   const Tensor<T>& d_out, Tensor<T>& d_in) {
  Tensor<T> d_e1, d_f1, d_n2, d_mid_mlp, d_n1, d_x_ln;
  fc2_.backward(e1_, e1_, d_out, d_e1);
  act_.backward(f1_, e1_, d_e1, d_f1);
  fc1_.backward(n2_, f1_, d_f1, d_n2);
  ln2_.backward(mid_, n2_, d_n2, d_mid_mlp);
  Tensor<T> g_mid = d_out;
  for (std::int64_t i = 0; i < g_mid.numel(); ++i) g_mid.data[i] += d_mid_mlp.data[i];
  attn_.backward(n1_, a_out_, g_mid, d_n1);
  ln1_.backward(in, n1_, d_n1, d_x_ln);
  d_in = g_mid;
  for (std::int64_t i = 0; i < d_in.numel(); ++i) d_in.data[i] += d_x_ln.data[i];
}

// ---------------------------------------------------------------------------
// TokenHeads

template <class T>
TokenHeads<T>::TokenHeads(std::string name, int dim, int n_classes, int n_heads)
    : Layer<T>(std::move(name)), dim_(dim), n_classes_(n_classes), n_heads_(n_heads) {
  require(n_heads >= 1 && n_heads <= 2, "token_heads: 1 or 2 heads supported");
  w_.resize(n_heads_);
  b_.resize(n_heads_);
  for (int i = 0; i < n_heads_; ++i) {
    const std::string tag = n_heads_ == 1 ? "cls" : (i == 0 ? "cls" : "dist");
    w_[i].name = this->name() + "." + tag + "_w";
    w_[i].init_shape({dim_, n_classes_});
    b_[i].name = this->name() + "." + tag + "_b";
    b_[i].init_shape({n_classes_});
  }
}

template <class T>
std::vector<Parameter<T>*> TokenHeads<T>::params() {
  std::vector<Parameter<T>*> out;
  for (int i = 0; i < n_heads_; ++i) {
    out.push_back(&w_[i]);
    out.push_back(&b_[i]);
  }
  return out;
}

template <class T>
void TokenHeads<T>::init(Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(dim_));
  for (int i = 0; i < n_heads_; ++i) {
    for (auto& v : w_[i].value.data) v = static_cast<T>(rng.uniform(-s, s));
    for (auto& v : b_[i].value.data) v = T{0};
  }
}

template <class T>
void TokenHeads<T>::zero_init() {
  for (int i = 0; i < n_heads_; ++i) {
    w_[i].value.zero();
    b_[i].value.zero();
  }
}

template <class T>
std::vector<std::int64_t> TokenHeads<T>::output_shape(
    const std::vector<std::int64_t>& in) const {
  require_rank<T>(in, 3, "token_heads");
  require(in[1] >= n_heads_, this->name() + ": not enough tokens for heads");
  require(in[2] == dim_, this->name() + ": feature dim mismatch");
  return {in[0], n_heads_, n_classes_};
}

template <class T>
void TokenHeads<T>::forward(const Tensor<T>& in, Tensor<T>& out, Mode, std::uint64_t) {
  out.reset_raw(output_shape(in.shape));
  const std::int64_t B = in.dim(0), Tn = in.dim(1);
  for (std::int64_t b = 0; b < B; ++b) {
    for (int h = 0; h < n_heads_; ++h) {
      const T* x = &in.data[(b * Tn + h) * dim_];
      T* y = &out.data[(b * n_heads_ + h) * n_classes_];
      std::copy_n(b_[h].value.data.data(), n_classes_, y);
      for (int i = 0; i < dim_; ++i)
        axpy(x[i], &w_[h].value.data[static_cast<std::size_t>(i) * n_classes_], y,
             n_classes_);
    }
  }
}

template <class T>
void TokenHeads<T>::backward(const Tensor<T>& in, const Tensor<T>&,
                             const Tensor<T>& d_out, Tensor<T>& d_in) {
  d_in.reset_raw(in.shape);
  const std::int64_t B = in.dim(0), Tn = in.dim(1);
  for (std::int64_t b = 0; b < B; ++b) {
    for (int h = 0; h < n_heads_; ++h) {
      const T* x = &in.data[(b * Tn + h) * dim_];
      const T* go = &d_out.data[(b * n_heads_ + h) * n_classes_];
      T* gi = &d_in.data[(b * Tn + h) * dim_];
      for (int c = 0; c < n_classes_; ++c) b_[h].grad.data[c] += go[c];
      for (int i = 0; i < dim_; ++i) {
        const T* wrow = &w_[h].value.data[static_cast<std::size_t>(i) * n_classes_];
        T* dwrow = &w_[h].grad.data[static_cast<std::size_t>(i) * n_classes_];
        gi[i] = dotT(go, wrow, n_classes_);
        axpy(x[i], go, dwrow, n_classes_);
      }
    }
  }
}

// ---------------------------------------------------------------------------

template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm<float>;
template class BatchNorm<double>;
template class Elu<float>;
template class Elu<double>;
template class AvgPool<float>;
template class AvgPool<double>;
template class AdaptiveAvgPoolTime<float>;
template class AdaptiveAvgPoolTime<double>;
template class Dropout<float>;
template class Dropout<double>;
template class Linear<float>;
template class Linear<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template class MultiHeadSelfAttention<float>;
template class MultiHeadSelfAttention<double>;
template class PatchEmbed<float>;
template class PatchEmbed<double>;
template class Softmax<float>;
template class Softmax<double>;
template class TransformerBlock<float>;
template class TransformerBlock<double>;
template class TokenHeads<float>;
template class TokenHeads<double>;

}  // namespace fcdn::nn
