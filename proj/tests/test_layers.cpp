#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "fcdn/error.hpp"
#include "fcdn/gradcheck.hpp"
#include "fcdn/graph.hpp"
#include "fcdn/layers.hpp"
#include "fcdn/rng.hpp"

using namespace fcdn::nn;
using fcdn::Rng;

namespace {

template <class T>
Tensor<T> random_tensor(std::vector<std::int64_t> shape, std::uint64_t seed,
                        double scale = 1.0) {
  Tensor<T> t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.data) v = static_cast<T>(rng.gaussian(0.0, scale));
  return t;
}

// Direct quadruple-loop cross-correlation in double, the definition the
// optimized kernels must reproduce. Valid padding, arbitrary stride.
template <class T>
Tensor<T> conv_reference(const Tensor<T>& x, const Tensor<T>& w,
                         const Tensor<T>& b, int sh, int sw, int pt, int pl) {
  const std::int64_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::int64_t Hp = H + 2 * pt, Wp = W + 2 * pl;
  const std::int64_t Ho = (Hp - kh) / sh + 1, Wo = (Wp - kw) / sw + 1;
  Tensor<T> y({B, Co, Ho, Wo});
  for (std::int64_t n = 0; n < B; ++n)
    for (std::int64_t co = 0; co < Co; ++co)
      for (std::int64_t oh = 0; oh < Ho; ++oh)
        for (std::int64_t ow = 0; ow < Wo; ++ow) {
          double acc = static_cast<double>(b.data[static_cast<std::size_t>(co)]);
          for (std::int64_t ci = 0; ci < Ci; ++ci)
            for (std::int64_t u = 0; u < kh; ++u)
              for (std::int64_t v = 0; v < kw; ++v) {
                const std::int64_t ih = oh * sh + u - pt, iw = ow * sw + v - pl;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                const double xv = x.data[static_cast<std::size_t>(
                    ((n * Ci + ci) * H + ih) * W + iw)];
                const double wv = w.data[static_cast<std::size_t>(
                    ((co * Ci + ci) * kh + u) * kw + v)];
                acc += xv * wv;
              }
          y.data[static_cast<std::size_t>(((n * Co + co) * Ho + oh) * Wo + ow)] =
              static_cast<T>(acc);
        }
  return y;
}

template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  REQUIRE(a.shape == b.shape);
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
  return m;
}

}  // namespace

TEST_CASE("conv2d forward matches the quadruple-loop definition") {
  struct Case {
    int ci, co, kh, kw, sh, sw;
    std::int64_t B, H, W;
  };
  // Covers the shapes the temporal stacks use (1 x k kernels over [K, T])
  // plus square kernels and strides to exercise the generic path.
  const Case cases[] = {
      {1, 4, 1, 9, 1, 1, 2, 16, 50},
      {4, 8, 1, 9, 1, 1, 2, 16, 42},
      {3, 5, 3, 3, 1, 1, 2, 10, 11},
      {2, 3, 1, 7, 1, 2, 1, 6, 29},
      {2, 3, 2, 5, 2, 1, 2, 9, 13},
      {1, 2, 1, 1, 1, 1, 1, 4, 4},
  };
  for (const auto& c : cases) {
    Conv2d<float> conv("c", c.ci, c.co, c.kh, c.kw, c.sh, c.sw);
    Rng rng(99);
    conv.init(rng);
    const auto x = random_tensor<float>({c.B, c.ci, c.H, c.W}, 7);
    Tensor<float> y;
    conv.forward(x, y, Mode::eval, 0);
    const auto want =
        conv_reference(x, conv.weight().value, conv.bias().value, c.sh, c.sw, 0, 0);
    CHECK(y.shape == want.shape);
    CHECK(max_abs_diff(y, want) < 1e-5);
  }
}

TEST_CASE("same-padded conv2d keeps the width and matches the definition") {
  Conv2d<float> conv("c", 3, 6, 1, 9, 1, 1, Padding::same);
  Rng rng(5);
  conv.init(rng);
  const auto x = random_tensor<float>({2, 3, 8, 40}, 11);
  Tensor<float> y;
  conv.forward(x, y, Mode::eval, 0);
  REQUIRE(y.shape == std::vector<std::int64_t>({2, 6, 8, 40}));
  const auto want =
      conv_reference(x, conv.weight().value, conv.bias().value, 1, 1, 0, 4);
  CHECK(max_abs_diff(y, want) < 1e-5);
}

TEST_CASE("conv2d double instantiation reproduces the definition to 1e-12") {
  Conv2d<double> conv("c", 2, 3, 1, 11, 1, 1);
  Rng rng(3);
  conv.init(rng);
  const auto x = random_tensor<double>({2, 2, 5, 64}, 21);
  Tensor<double> y;
  conv.forward(x, y, Mode::eval, 0);
  const auto want =
      conv_reference(x, conv.weight().value, conv.bias().value, 1, 1, 0, 0);
  CHECK(max_abs_diff(y, want) < 1e-12);
}

TEST_CASE("conv2d input gradient matches central differences") {
  Conv2d<double> conv("c", 2, 3, 1, 5, 1, 1);
  Rng rng(13);
  conv.init(rng);
  const auto x = random_tensor<double>({1, 2, 3, 17}, 31);
  Tensor<double> y;
  conv.forward(x, y, Mode::train, 0);
  // Scalar objective: weighted sum of outputs with fixed coefficients.
  const auto coef = random_tensor<double>(y.shape, 55);
  Tensor<double> d_out = coef, d_in;
  conv.backward(x, y, d_out, d_in);
  const double eps = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.data.size(); i += 7) {
    auto xp = x, xm = x;
    xp.data[i] += eps;
    xm.data[i] -= eps;
    Tensor<double> yp, ym;
    conv.forward(xp, yp, Mode::train, 0);
    conv.forward(xm, ym, Mode::train, 0);
    double fp = 0.0, fm = 0.0;
    for (std::size_t k = 0; k < yp.data.size(); ++k) {
      fp += coef.data[k] * yp.data[k];
      fm += coef.data[k] * ym.data[k];
    }
    const double num = (fp - fm) / (2.0 * eps);
    worst = std::max(worst, std::abs(num - d_in.data[i]));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("average pooling computes plain window means") {
  AvgPool<float> pool("p", 1, 4, 1, 4);
  Tensor<float> x({1, 1, 1, 8});
  for (int i = 0; i < 8; ++i) x.data[static_cast<std::size_t>(i)] = static_cast<float>(i);
  Tensor<float> y;
  pool.forward(x, y, Mode::eval, 0);
  REQUIRE(y.shape == std::vector<std::int64_t>({1, 1, 1, 2}));
  CHECK(y.data[0] == doctest::Approx(1.5));   // mean of 0..3
  CHECK(y.data[1] == doctest::Approx(5.5));   // mean of 4..7
}

TEST_CASE("average pooling backward spreads gradients evenly") {
  AvgPool<double> pool("p", 1, 4, 1, 4);
  const auto x = random_tensor<double>({1, 1, 1, 8}, 3);
  Tensor<double> y;
  pool.forward(x, y, Mode::train, 0);
  Tensor<double> d_out(y.shape), d_in;
  d_out.data = {4.0, 8.0};
  pool.backward(x, y, d_out, d_in);
  for (int i = 0; i < 4; ++i) CHECK(d_in.data[static_cast<std::size_t>(i)] == doctest::Approx(1.0));
  for (int i = 4; i < 8; ++i) CHECK(d_in.data[static_cast<std::size_t>(i)] == doctest::Approx(2.0));
}

TEST_CASE("adaptive time pooling uses the floor/ceil bin rule") {
  // T=10 to 3 bins: [0,4), [3,7), [6,10) under start=floor(i*T/n),
  // end=ceil((i+1)*T/n).
  AdaptiveAvgPoolTime<float> pool("a", 3);
  Tensor<float> x({1, 1, 1, 10});
  for (int i = 0; i < 10; ++i) x.data[static_cast<std::size_t>(i)] = static_cast<float>(i);
  Tensor<float> y;
  pool.forward(x, y, Mode::eval, 0);
  REQUIRE(y.shape == std::vector<std::int64_t>({1, 1, 1, 3}));
  CHECK(y.data[0] == doctest::Approx((0 + 1 + 2 + 3) / 4.0));
  CHECK(y.data[1] == doctest::Approx((3 + 4 + 5 + 6) / 4.0));
  CHECK(y.data[2] == doctest::Approx((6 + 7 + 8 + 9) / 4.0));
}

TEST_CASE("adaptive pooling to one bin is the global time mean") {
  AdaptiveAvgPoolTime<float> pool("a", 1);
  const auto x = random_tensor<float>({2, 3, 4, 29}, 17);
  Tensor<float> y;
  pool.forward(x, y, Mode::eval, 0);
  REQUIRE(y.shape == std::vector<std::int64_t>({2, 3, 4, 1}));
  double mean = 0.0;
  for (int t = 0; t < 29; ++t) mean += x.data[static_cast<std::size_t>(t)];
  mean /= 29.0;
  CHECK(static_cast<double>(y.data[0]) == doctest::Approx(mean).epsilon(1e-5));
}

TEST_CASE("batch norm standardizes over the batch in train mode") {
  BatchNorm<float> bn("bn", 3);
  Rng rng(1);
  bn.init(rng);
  const auto x = random_tensor<float>({8, 3, 4, 10}, 23, 2.5);
  Tensor<float> y;
  bn.forward(x, y, Mode::train, 0);
  const std::int64_t per = 8 * 4 * 10;
  for (int c = 0; c < 3; ++c) {
    double s = 0.0, q = 0.0;
    for (std::int64_t n = 0; n < 8; ++n)
      for (std::int64_t i = 0; i < 40; ++i) {
        const double v = y.data[static_cast<std::size_t>((n * 3 + c) * 40 + i)];
        s += v;
        q += v * v;
      }
    const double mean = s / per;
    CHECK(std::abs(mean) < 1e-4);
    CHECK(q / per - mean * mean == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("batch norm eval uses running statistics, not the batch") {
  BatchNorm<float> bn("bn", 2);
  Rng rng(2);
  bn.init(rng);
  // Warm the running stats on one distribution...
  const auto train_x = random_tensor<float>({16, 2, 1, 50}, 3, 1.0);
  Tensor<float> y;
  for (int step = 0; step < 200; ++step) bn.forward(train_x, y, Mode::train, 0);
  // ...then evaluate two different batches: outputs per element must agree
  // because nothing batch-dependent remains.
  const auto a = random_tensor<float>({4, 2, 1, 50}, 5, 3.0);
  auto b = a;
  b.data.resize(a.data.size() / 2);  // half the batch
  b.shape[0] = 2;
  Tensor<float> ya, yb;
  bn.forward(a, ya, Mode::eval, 0);
  bn.forward(b, yb, Mode::eval, 0);
  for (std::size_t i = 0; i < yb.data.size(); ++i) CHECK(ya.data[i] == yb.data[i]);
}

TEST_CASE("elu is identity for positives and bounded below by -alpha") {
  Elu<float> elu("e");
  Tensor<float> x({1, 7});
  x.data = {-30.0f, -2.0f, -0.5f, 0.0f, 0.5f, 2.0f, 30.0f};
  Tensor<float> y;
  elu.forward(x, y, Mode::eval, 0);
  CHECK(y.data[0] == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(y.data[1] == doctest::Approx(std::expm1(-2.0)).epsilon(1e-5));
  CHECK(y.data[2] == doctest::Approx(std::expm1(-0.5)).epsilon(1e-5));
  CHECK(y.data[3] == 0.0f);
  CHECK(y.data[4] == 0.5f);
  CHECK(y.data[6] == 30.0f);
}

TEST_CASE("elu float path stays within 1e-6 of the double path") {
  Elu<float> ef("e");
  Elu<double> ed("e");
  Tensor<float> xf({1, 2000});
  Tensor<double> xd({1, 2000});
  Rng rng(9);
  for (std::size_t i = 0; i < 2000; ++i) {
    xd.data[i] = rng.gaussian(0.0, 3.0);
    xf.data[i] = static_cast<float>(xd.data[i]);
  }
  Tensor<float> yf;
  Tensor<double> yd;
  ef.forward(xf, yf, Mode::eval, 0);
  ed.forward(xd, yd, Mode::eval, 0);
  double worst = 0.0;
  for (std::size_t i = 0; i < 2000; ++i)
    worst = std::max(worst, std::abs(static_cast<double>(yf.data[i]) - yd.data[i]));
  CHECK(worst < 1e-6);
}

TEST_CASE("dropout is identity in eval mode and rescales in train mode") {
  Dropout<float> drop("d", 0.5);
  drop.set_stream_seed(1234);
  Tensor<float> x({4, 1000});
  for (auto& v : x.data) v = 1.0f;
  Tensor<float> y;
  drop.forward(x, y, Mode::eval, 0);
  CHECK(max_abs_diff(x, y) == 0.0);

  drop.forward(x, y, Mode::train, 0);
  std::int64_t kept = 0;
  double sum = 0.0;
  for (const float v : y.data) {
    REQUIRE((v == 0.0f || v == 2.0f));  // inverted scaling at p = 0.5
    kept += v != 0.0f;
    sum += v;
  }
  CHECK(std::abs(static_cast<double>(kept) / 4000.0 - 0.5) < 0.05);
  CHECK(std::abs(sum / 4000.0 - 1.0) < 0.1);  // expectation preserved
}

TEST_CASE("dropout masks depend on the tick, identically per tick") {
  Dropout<float> drop("d", 0.5);
  drop.set_stream_seed(77);
  Tensor<float> x({1, 500});
  for (auto& v : x.data) v = 1.0f;
  Tensor<float> y0, y0b, y1;
  drop.forward(x, y0, Mode::train, 10);
  drop.forward(x, y0b, Mode::train, 10);
  drop.forward(x, y1, Mode::train, 11);
  CHECK(max_abs_diff(y0, y0b) == 0.0);
  CHECK(max_abs_diff(y0, y1) > 0.0);
}

TEST_CASE("dropout backward kills exactly the dropped positions") {
  Dropout<double> drop("d", 0.3);
  drop.set_stream_seed(5);
  Tensor<double> x({1, 400});
  for (auto& v : x.data) v = 1.0;
  Tensor<double> y, d_in;
  drop.forward(x, y, Mode::train, 0);
  Tensor<double> d_out({1, 400});
  for (auto& v : d_out.data) v = 1.0;
  drop.backward(x, y, d_out, d_in);
  for (std::size_t i = 0; i < 400; ++i)
    CHECK(d_in.data[i] == doctest::Approx(y.data[i]));  // same mask and scale
}

TEST_CASE("linear layer is an affine map") {
  Linear<float> fc("fc", 3, 2);
  fc.weight().value.data = {1, 2, 3, 4, 5, 6};  // [3,2] row-major
  // bias defaults to zero after init_shape; set explicitly
  Tensor<float> x({1, 3});
  x.data = {1.0f, 0.5f, -1.0f};
  Tensor<float> y;
  fc.forward(x, y, Mode::eval, 0);
  REQUIRE(y.shape == std::vector<std::int64_t>({1, 2}));
  CHECK(y.data[0] == doctest::Approx(1 * 1 + 0.5 * 3 + (-1) * 5));
  CHECK(y.data[1] == doctest::Approx(1 * 2 + 0.5 * 4 + (-1) * 6));
}

TEST_CASE("layer norm standardizes every row before the affine") {
  LayerNorm<float> ln("ln", 16);
  Rng rng(4);
  ln.init(rng);
  const auto x = random_tensor<float>({3, 5, 16}, 6, 4.0);
  Tensor<float> y;
  ln.forward(x, y, Mode::eval, 0);
  for (std::int64_t r = 0; r < 15; ++r) {
    double s = 0.0, q = 0.0;
    for (int c = 0; c < 16; ++c) {
      const double v = y.data[static_cast<std::size_t>(r * 16 + c)];
      s += v;
      q += v * v;
    }
    CHECK(std::abs(s / 16.0) < 1e-5);
    CHECK(q / 16.0 == doctest::Approx(1.0).epsilon(2e-3));  // gamma=1, beta=0 at init
  }
}

TEST_CASE("softmax rows are positive and sum to one") {
  Softmax<float> sm("sm");
  const auto x = random_tensor<float>({4, 9}, 8, 5.0);
  Tensor<float> y;
  sm.forward(x, y, Mode::eval, 0);
  for (int r = 0; r < 4; ++r) {
    double s = 0.0;
    for (int c = 0; c < 9; ++c) {
      const double v = y.data[static_cast<std::size_t>(r * 9 + c)];
      REQUIRE(v > 0.0);
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("softmax is invariant to shifting a row by a constant") {
  Softmax<float> sm("sm");
  auto x = random_tensor<float>({1, 6}, 10, 2.0);
  auto shifted = x;
  for (auto& v : shifted.data) v += 100.0f;
  Tensor<float> a, b;
  sm.forward(x, a, Mode::eval, 0);
  sm.forward(shifted, b, Mode::eval, 0);
  CHECK(max_abs_diff(a, b) < 1e-6);
}

TEST_CASE("attention weights are a distribution over keys") {
  MultiHeadSelfAttention<float> attn("at", 32, 4);
  Rng rng(12);
  attn.init(rng);
  const auto x = random_tensor<float>({2, 9, 32}, 14);
  Tensor<float> y;
  attn.forward(x, y, Mode::eval, 0);
  REQUIRE(y.shape == x.shape);
  const auto& a = attn.last_attention();
  REQUIRE(a.shape == std::vector<std::int64_t>({2, 4, 9, 9}));
  for (std::int64_t i = 0; i < 2 * 4 * 9; ++i) {
    double s = 0.0;
    for (int k = 0; k < 9; ++k) {
      const double v = a.data[static_cast<std::size_t>(i * 9 + k)];
      REQUIRE(v >= 0.0);
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("patch embedding produces special tokens plus one token per patch") {
  PatchEmbed<float> pe("pe", 3, 32, 8, 64, 2, 1.0 / 255.0);
  Rng rng(15);
  pe.init(rng);
  CHECK(pe.n_tokens() == 18);  // (32/8)^2 + 2
  const auto x = random_tensor<float>({2, 3, 32, 32}, 16, 64.0);
  Tensor<float> y;
  pe.forward(x, y, Mode::eval, 0);
  CHECK(y.shape == std::vector<std::int64_t>({2, 18, 64}));
}

TEST_CASE("patch embedding applies the fixed input scale") {
  PatchEmbed<float> a("pe", 1, 8, 4, 8, 1, 1.0);
  Rng rng(17);
  a.init(rng);
  const auto x = random_tensor<float>({1, 1, 8, 8}, 18, 100.0);
  auto x_scaled = x;
  for (auto& v : x_scaled.data) v *= 0.5f;
  Tensor<float> ya, yb;
  a.forward(x_scaled, ya, Mode::eval, 0);
  // Same layer driven twice: halving the input must equal halving the scale.
  PatchEmbed<float> c("pe", 1, 8, 4, 8, 1, 0.5);
  Rng rng2(17);
  c.init(rng2);
  c.forward(x, yb, Mode::eval, 0);
  CHECK(max_abs_diff(ya, yb) < 1e-5);
}

TEST_CASE("token heads start at zero and read only their own token") {
  TokenHeads<float> heads("h", 16, 4, 2);
  Rng rng(19);
  heads.init(rng);
  auto x = random_tensor<float>({3, 10, 16}, 20);
  Tensor<float> y;
  heads.forward(x, y, Mode::eval, 0);
  REQUIRE(y.shape == std::vector<std::int64_t>({3, 2, 4}));
  for (const float v : y.data) CHECK(v == 0.0f);  // zero-initialized read-outs

  // Perturbing a non-special token must not change any head output.
  for (auto* p : heads.params())
    for (auto& v : p->value.data) v = 0.01f;
  Tensor<float> y1, y2;
  heads.forward(x, y1, Mode::eval, 0);
  for (int c = 0; c < 16; ++c) x.data[static_cast<std::size_t>(5 * 16 + c)] += 10.0f;
  heads.forward(x, y2, Mode::eval, 0);
  CHECK(max_abs_diff(y1, y2) == 0.0);
}

TEST_CASE("transformer block preserves shape and adds residuals") {
  TransformerBlock<float> blk("b0", 32, 4, 2.0);
  Rng rng(21);
  blk.init(rng);
  const auto x = random_tensor<float>({2, 6, 32}, 22);
  Tensor<float> y;
  blk.forward(x, y, Mode::eval, 0);
  CHECK(y.shape == x.shape);
  // Zeroing every parameter of the block must reduce it to the identity
  // (both sublayers vanish, leaving the residual connections).
  for (auto* p : blk.params())
    for (auto& v : p->value.data) v = 0.0f;
  Tensor<float> y0;
  blk.forward(x, y0, Mode::eval, 0);
  CHECK(max_abs_diff(x, y0) < 1e-6);
}

TEST_CASE("graph rejects non-finite activations with the layer name") {
  Graph<float> g;
  g.emplace<Linear<float>>("proj", 4, 4);
  g.init_params(1);
  Tensor<float> x({1, 4});
  x.data = {1.0f, std::numeric_limits<float>::infinity(), 0.0f, 0.0f};
  bool threw = false;
  try {
    g.forward(x, Mode::eval);
  } catch (const fcdn::Error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("proj") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("graph output_shape predicts the shapes it actually produces") {
  Graph<float> g;
  g.emplace<Conv2d<float>>("c1", 1, 4, 1, 9);
  g.emplace<BatchNorm<float>>("bn", 4);
  g.emplace<Elu<float>>("e");
  g.emplace<AvgPool<float>>("p", 1, 8, 1, 8);
  g.emplace<AdaptiveAvgPoolTime<float>>("a", 1);
  g.init_params(2);
  const std::vector<std::int64_t> in = {2, 1, 16, 250};
  const auto predicted = g.output_shape(in);
  const auto x = random_tensor<float>(in, 23);
  const auto& y = g.forward(x, Mode::eval);
  CHECK(y.shape == predicted);
  CHECK(y.shape == std::vector<std::int64_t>({2, 4, 16, 1}));
}

TEST_CASE("every layer type passes a finite-difference gradient check") {
  // A deliberately mixed graph touching conv (valid/same/stride), batch
  // norm, elu, both poolings, dropout, patch embedding, a transformer block
  // and the token read-outs, all in double precision.
  Graph<double> g;
  g.emplace<Conv2d<double>>("c1", 1, 3, 1, 5);
  g.emplace<BatchNorm<double>>("bn1", 3);
  g.emplace<Elu<double>>("e1");
  g.emplace<Conv2d<double>>("c2", 3, 4, 1, 5, 1, 1, Padding::same);
  g.emplace<AvgPool<double>>("pool", 1, 4, 1, 4);
  g.emplace<Dropout<double>>("drop", 0.25);
  g.emplace<AdaptiveAvgPoolTime<double>>("adapt", 1);
  g.init_params(3);

  Graph<double> trunk;
  trunk.emplace<PatchEmbed<double>>("pe", 1, 8, 4, 16, 2, 1.0 / 255.0);
  trunk.emplace<TransformerBlock<double>>("blk", 16, 2, 2.0);
  trunk.emplace<LayerNorm<double>>("ln", 16);
  trunk.emplace<TokenHeads<double>>("heads", 16, 3, 2);
  trunk.init_params(4);
  // Zero-initialized heads have zero gradients w.r.t. nothing; give them
  // signal so the check exercises them.
  for (auto* p : trunk.parameters())
    if (p->name.rfind("heads", 0) == 0) {
      Rng r(5);
      for (auto& v : p->value.data) v = r.gaussian(0.0, 0.1);
    }

  const auto x1 = random_tensor<double>({4, 1, 6, 37}, 24);
  const int labels1[] = {0, 2, 1, 0};
  const auto r1 = grad_check(g, x1, labels1);
  CAPTURE(r1.worst_param);
  CAPTURE(r1.worst_index);
  CHECK(r1.max_rel_err < 1e-4);

  const auto x2 = random_tensor<double>({3, 1, 8, 8}, 25, 20.0);
  const int labels2[] = {1, 0, 2};
  const auto r2 = grad_check(trunk, x2, labels2);
  CAPTURE(r2.worst_param);
  CAPTURE(r2.worst_index);
  CHECK(r2.max_rel_err < 1e-4);
}
