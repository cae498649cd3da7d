#include <gtest/gtest.h>

#include "stagegate/nncore.hpp"
#include "support.hpp"

using namespace stagegate;
using namespace stagegate::nn;

namespace {

constexpr double kGradTol = 1e-4;

Tensor<double> random_tensor(Shape s, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<double> t(s);
  for (auto& x : t.data) x = rng.uniform(lo, hi);
  return t;
}

template <typename L>
void randomize(L& layer, Rng& rng, double scale = 1.0) {
  for (auto* p : layer.params())
    if (p->trainable)
      for (auto& x : p->value.data) x = rng.uniform(-scale, scale);
}

void expect_grad_ok(const GradCheckReport& r, std::size_t min_checked) {
  EXPECT_LE(r.max_rel_error, kGradTol) << "worst " << r.worst;
  EXPECT_GE(r.checked, min_checked);
}

double sigmoid(double x) { return 1 / (1 + std::exp(-x)); }

std::vector<double> values(const AlignedVector<double>& v) { return {v.begin(), v.end()}; }

// One GRU step written out element by element.
std::vector<double> gru_step_reference(Gru<double>& g, std::span<const double> x, std::span<const double> h,
                                       bool relu) {
  const std::size_t H = g.hidden(), D = g.input_dim();
  const auto& wx = g.wx().value.data;
  const auto& uzr = g.uzr().value.data;
  const auto& uh = g.uh().value.data;
  const auto& b = g.bias().value.data;
  std::vector<double> z(H), r(H), out(H);
  for (std::size_t i = 0; i < H; ++i) {
    double az = b[i], ar = b[H + i];
    for (std::size_t d = 0; d < D; ++d) {
      az += wx[i * D + d] * x[d];
      ar += wx[(H + i) * D + d] * x[d];
    }
    for (std::size_t k = 0; k < H; ++k) {
      az += uzr[i * H + k] * h[k];
      ar += uzr[(H + i) * H + k] * h[k];
    }
    z[i] = sigmoid(az);
    r[i] = sigmoid(ar);
  }
  for (std::size_t i = 0; i < H; ++i) {
    double a = b[2 * H + i];
    for (std::size_t d = 0; d < D; ++d) a += wx[(2 * H + i) * D + d] * x[d];
    for (std::size_t k = 0; k < H; ++k) a += uh[i * H + k] * r[k] * h[k];
    const double cand = relu ? std::max(0.0, a) : std::tanh(a);
    out[i] = std::clamp((1 - z[i]) * h[i] + z[i] * cand, -kGruClip, kGruClip);
  }
  return out;
}

}  // namespace

TEST(Tensor, StorageIsAligned) {
  // reductions over maps must not depend on where a buffer lands
  std::vector<std::vector<char>> spacers;
  for (std::size_t n = 1; n < 200000; n = n * 3 + 1) {
    spacers.emplace_back(n % 13 + 1);
    Tensor<float> f({1, 1, 1, n});
    Tensor<double> d({1, 1, n, 1});
    EXPECT_EQ(reinterpret_cast<std::uintptr_t>(f.data.data()) % EIGEN_MAX_ALIGN_BYTES, 0u);
    EXPECT_EQ(reinterpret_cast<std::uintptr_t>(d.data.data()) % EIGEN_MAX_ALIGN_BYTES, 0u);
  }
}

TEST(Tensor, ShapesAndErrors) {
  Tensor<double> t({2, 3, 4, 5}, 1.5);
  EXPECT_EQ(t.size(), 120u);
  EXPECT_EQ(t.item_size(), 60u);
  t.at(1, 2, 3, 4) = 7;
  EXPECT_EQ(t.data.back(), 7);
  EXPECT_ERROR_CODE(Tensor<double>({1, 0, 1, 1}), ShapeMismatch);
  EXPECT_ERROR_CODE(t.reshaped({1, 1, 1, 7}), ShapeMismatch);
}

TEST(Shapes, ConvAndPoolFloorFormulas) {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t H = 1 + rng.below(40), W = 1 + rng.below(12);
    const std::size_t kh = 1 + rng.below(8), kw = 1 + rng.below(4);
    const std::size_t sh = 1 + rng.below(3), sw = 1 + rng.below(3);
    Conv2d<double> conv(2, 3, kh, kw, sh, sw);
    MaxPool2d<double> pool(kh, kw, sh, sw);
    const Shape in = {4, 2, H, W};
    if (H < kh || W < kw) {
      EXPECT_ERROR_CODE(conv.output_shape(in), KernelTooLarge);
      EXPECT_ERROR_CODE(pool.output_shape(in), KernelTooLarge);
      continue;
    }
    const Shape want_conv = {4, 3, (H - kh) / sh + 1, (W - kw) / sw + 1};
    const Shape want_pool = {4, 2, (H - kh) / sh + 1, (W - kw) / sw + 1};
    EXPECT_EQ(conv.output_shape(in), want_conv);
    EXPECT_EQ(pool.output_shape(in), want_pool);
    if (trial % 20 == 0) {
      conv.init(rng);
      auto x = random_tensor(in, rng);
      EXPECT_EQ(conv.forward(x, false).shape, want_conv);
      EXPECT_EQ(pool.forward(x, false).shape, want_pool);
    }
  }
  Conv2d<double> conv(1, 1, 3, 1);
  EXPECT_ERROR_CODE(conv.output_shape({1, 2, 5, 5}), ShapeMismatch);
  EXPECT_ERROR_CODE(Conv2d<double>(1, 1, 3, 1, 0, 1), InvalidConfig);
}

TEST(Conv2d, MatchesDirectSum) {
  Rng rng(2);
  Conv2d<double> conv(2, 3, 3, 2, 2, 1);
  randomize(conv, rng);
  auto x = random_tensor({2, 2, 9, 4}, rng);
  auto y = conv.forward(x, false);
  auto* w = conv.params()[0];
  auto* b = conv.params()[1];
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t f = 0; f < 3; ++f)
      for (std::size_t i = 0; i < y.h(); ++i)
        for (std::size_t j = 0; j < y.w(); ++j) {
          double s = b->value.data[f];
          for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t u = 0; u < 3; ++u)
              for (std::size_t v = 0; v < 2; ++v) s += w->value.at(f, c, u, v) * x.at(n, c, 2 * i + u, j + v);
          EXPECT_NEAR(y.at(n, f, i, j), s, 1e-12);
        }
}

TEST(MaxPool2d, PicksWindowMaximum) {
  Tensor<double> x({1, 1, 4, 2});
  x.data = {1, 8, 3, 2, 5, 6, 7, 4};
  MaxPool2d<double> pool(2, 1);
  auto y = pool.forward(x, false);
  EXPECT_EQ(y.shape, (Shape{1, 1, 2, 2}));
  EXPECT_EQ(values(y.data), (std::vector<double>{3, 8, 7, 6}));
  Tensor<double> dy(y.shape, 1.0);
  auto dx = pool.backward(dy);
  EXPECT_EQ(values(dx.data), (std::vector<double>{0, 1, 1, 0, 0, 1, 1, 0}));
}

TEST(GradientCheck, Dense) {
  Rng rng(3);
  Dense<double> d(6, 4);
  randomize(d, rng);
  auto x = random_tensor({3, 1, 2, 3}, rng);
  auto r = random_tensor({3, 4, 1, 1}, rng);
  expect_grad_ok(gradient_check_layer(d, x, r), 6 * 4 + 4 + 18);
}

TEST(GradientCheck, ConvKernels) {
  Rng rng(4);
  for (auto [kh, sh] : std::vector<std::pair<std::size_t, std::size_t>>{{5, 2}, {3, 2}, {3, 1}}) {
    Conv2d<double> c(1, 3, kh, 1, sh, 1);
    randomize(c, rng, 0.5);
    auto x = random_tensor({2, 1, 20, 8}, rng);
    auto out = c.output_shape(x.shape);
    auto r = random_tensor(out, rng);
    expect_grad_ok(gradient_check_layer(c, x, r), 3 * kh + 3 + 320);
  }
  Conv2d<double> multi(3, 2, 2, 3, 1, 2);
  randomize(multi, rng);
  auto x = random_tensor({2, 3, 6, 7}, rng);
  auto r = random_tensor(multi.output_shape(x.shape), rng);
  expect_grad_ok(gradient_check_layer(multi, x, r), 36 + 2 + 252);
}

TEST(GradientCheck, MaxPoolReluBatchNormDropout) {
  Rng rng(5);
  MaxPool2d<double> pool(2, 1);
  auto x = random_tensor({2, 2, 8, 3}, rng);
  auto rp = random_tensor(pool.output_shape(x.shape), rng);
  expect_grad_ok(gradient_check_layer(pool, x, rp), 90);

  Relu<double> relu;
  auto xr = random_tensor({2, 3, 4, 1}, rng);
  auto rr = random_tensor(xr.shape, rng);
  expect_grad_ok(gradient_check_layer(relu, xr, rr), 20);

  BatchNorm<double> bn(3);
  randomize(bn, rng);
  auto xb = random_tensor({4, 3, 5, 1}, rng, -2, 3);
  auto rb = random_tensor(xb.shape, rng);
  expect_grad_ok(gradient_check_layer(bn, xb, rb), 6 + 60);

  Dropout<double> drop(0.4, 9);
  drop.set_fixed_mask(true);
  auto xd = random_tensor({3, 4, 1, 1}, rng);
  auto rd = random_tensor(xd.shape, rng);
  expect_grad_ok(gradient_check_layer(drop, xd, rd), 12);
}

TEST(GradientCheck, GruUnrolled) {
  Rng rng(6);
  for (auto act : {GruActivation::Relu, GruActivation::Tanh}) {
    for (bool skip : {false, true}) {
      Gru<double> g(4, 3, act, skip);
      g.init(rng);
      randomize(g, rng, 0.8);
      auto x = random_tensor({2, 1, 5, 4}, rng);
      if (skip)
        for (std::size_t d = 0; d < 4; ++d) x.at(1, 0, 4, d) = x.at(1, 0, 3, d) = 0;  // padded tail
      auto r = random_tensor({2, 3, 1, 1}, rng);
      auto rep = gradient_check_layer(g, x, r, 1e-5, true);
      expect_grad_ok(rep, 36 + 18 + 9 + 9 + 30);
    }
  }
}

TEST(GradientCheck, SoftmaxCrossEntropy) {
  Rng rng(7);
  auto z = random_tensor({5, 4, 1, 1}, rng, -3, 3);
  const std::vector<std::size_t> gold = {0, 3, 1, 2, 3};
  auto r = softmax_xent(z, gold);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double orig = z.data[i];
    z.data[i] = orig + 1e-6;
    const double fp = softmax_xent(z, gold).loss;
    z.data[i] = orig - 1e-6;
    const double fm = softmax_xent(z, gold).loss;
    z.data[i] = orig;
    EXPECT_LE(relative_error(r.grad.data[i], (fp - fm) / 2e-6), kGradTol);
  }
}

TEST(GradientCheck, SmallNetworkEndToEnd) {
  Rng rng(8);
  Sequential<double> net;
  net.add<Conv2d<double>>(1, 3, 3, 2);
  net.add<BatchNorm<double>>(3);
  net.add<Relu<double>>();
  net.add<MaxPool2d<double>>(2, 1);
  auto& drop = net.add<Dropout<double>>(0.3, 4);
  drop.set_fixed_mask(true);
  net.add<Dense<double>>(3 * 4 * 4, 5);
  net.add<Relu<double>>();
  net.add<Dense<double>>(5, 4);
  net.init(rng);
  auto x = random_tensor({3, 1, 10, 5}, rng);
  const std::vector<std::size_t> gold = {1, 0, 3};
  auto rep = gradient_check(net, x, gold);
  EXPECT_LE(rep.max_rel_error, kGradTol) << rep.worst;
  EXPECT_GT(rep.checked, 200u);
}

TEST(Softmax, SumsToOneAndUniformLoss) {
  Rng rng(9);
  auto z = random_tensor({50, 4, 1, 1}, rng, -30, 30);
  z.at(0, 0, 0, 0) = 800;
  auto p = softmax(z);
  for (std::size_t n = 0; n < 50; ++n) {
    double s = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_GE(p.item(n)[k], 0.0);
      s += p.item(n)[k];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  Tensor<double> zero({3, 4, 1, 1});
  const std::vector<std::size_t> gold = {0, 1, 2};
  EXPECT_NEAR(softmax_xent(zero, gold).loss, std::log(4.0), 1e-12);
  const std::vector<std::size_t> bad = {0, 1, 4};
  EXPECT_ERROR_CODE(softmax_xent(zero, bad), InvalidClassIndex);
}

TEST(Gru, StepMatchesReference) {
  Rng rng(10);
  for (bool relu : {true, false}) {
    Gru<double> g(5, 4, relu ? GruActivation::Relu : GruActivation::Tanh);
    g.init(rng);
    randomize(g, rng);
    for (int t = 0; t < 20; ++t) {
      auto x = random_tensor({1, 1, 1, 5}, rng);
      auto h = random_tensor({1, 4, 1, 1}, rng, -2, 2);
      auto out = g.step(x, h);
      auto want = gru_step_reference(g, x.data, h.data, relu);
      for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out.data[i], want[i], 1e-12);
    }
  }
}

TEST(Gru, GateSaturationLimits) {
  Rng rng(11);
  Gru<double> g(3, 2);
  g.init(rng);
  auto x = random_tensor({1, 1, 1, 3}, rng);
  auto h = random_tensor({1, 2, 1, 1}, rng);
  auto& b = g.bias().value.data;
  // update gate closed: the state is carried through
  b[0] = b[1] = -60;
  auto keep = g.step(x, h);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(keep.data[i], h.data[i], 1e-12);
  // update gate open, no recurrent candidate term: h' = relu(Wh x + bh)
  b[0] = b[1] = 60;
  g.uh().value.fill(0);
  auto open = g.step(x, h);
  for (std::size_t i = 0; i < 2; ++i) {
    double a = b[4 + i];
    for (std::size_t d = 0; d < 3; ++d) a += g.wx().value.data[(4 + i) * 3 + d] * x.data[d];
    EXPECT_NEAR(open.data[i], std::max(0.0, a), 1e-12);
  }
}

TEST(Gru, HiddenStateClipped) {
  Gru<double> g(1, 1);
  g.bias().value.data = {60, 0, 1e6};
  Tensor<double> x({1, 1, 3, 1}, 1.0);
  auto y = g.forward(x, false);
  EXPECT_EQ(y.data[0], kGruClip);
}

TEST(Gru, SkipZeroRowsFreezesState) {
  Rng rng(12);
  Gru<double> plain(4, 3, GruActivation::Relu, false), skip(4, 3, GruActivation::Relu, true);
  plain.init(rng);
  for (std::size_t k = 0; k < 4; ++k) skip.params()[k]->value = plain.params()[k]->value;
  auto full = random_tensor({1, 1, 10, 4}, rng);
  for (std::size_t t = 6; t < 10; ++t)
    for (std::size_t d = 0; d < 4; ++d) full.at(0, 0, t, d) = 0;
  Tensor<double> prefix({1, 1, 6, 4});
  std::copy(full.data.begin(), full.data.begin() + 24, prefix.data.begin());
  auto a = skip.forward(full, false), b = plain.forward(prefix, false);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a.data[i], b.data[i], 1e-12);
  auto zero = skip.forward(Tensor<double>({1, 1, 10, 4}), false);
  for (double v : zero.data) EXPECT_EQ(v, 0.0);
}

TEST(Dropout, IdentityAtRateZeroAndInference) {
  Rng rng(13);
  auto x = random_tensor({4, 5, 1, 1}, rng);
  Dropout<double> none(0.0);
  EXPECT_EQ(none.forward(x, true).data, x.data);
  Dropout<double> half(0.5, 3);
  EXPECT_EQ(half.forward(x, false).data, x.data);
  auto y = half.forward(x, true);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (y.data[i] == 0) ++zeros;
    else EXPECT_NEAR(y.data[i], 2 * x.data[i], 1e-15);
  }
  EXPECT_GT(zeros, 0u);
  EXPECT_LT(zeros, x.size());
  EXPECT_ERROR_CODE(Dropout<double>(1.0), InvalidConfig);
}

TEST(BatchNorm, TrainingOutputIsStandardized) {
  Rng rng(14);
  BatchNorm<double> bn(3);
  auto x = random_tensor({8, 3, 6, 1}, rng, 5, 20);
  auto y = bn.forward(x, true);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, ss = 0;
    for (std::size_t n = 0; n < 8; ++n)
      for (std::size_t k = 0; k < 6; ++k) s += y.at(n, c, k, 0);
    const double mean = s / 48;
    for (std::size_t n = 0; n < 8; ++n)
      for (std::size_t k = 0; k < 6; ++k) ss += (y.at(n, c, k, 0) - mean) * (y.at(n, c, k, 0) - mean);
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(ss / 48, 1.0, 1e-4);
  }
  // inference uses the running statistics, which moved toward the batch
  auto* rm = bn.params()[2];
  EXPECT_FALSE(rm->trainable);
  EXPECT_GT(rm->value.data[0], 0.0);
}

TEST(Adam, ZeroGradientsLeaveParametersUnchanged) {
  Param<double> p("p", {1, 1, 1, 3});
  p.value.data = {0.1, -2, 3};
  Optimizer<double> opt({&p}, OptimizerConfig{});
  for (int i = 0; i < 10; ++i) opt.step();
  EXPECT_EQ(values(p.value.data), (std::vector<double>{0.1, -2, 3}));
}

TEST(Adam, QuadraticBowlConvergence) {
  Param<double> p("w", {1, 1, 1, 2});
  p.value.data = {0.5, -0.3};
  Optimizer<double> opt({&p}, OptimizerConfig{.lr = 0.001});
  std::size_t first = 0;
  for (std::size_t t = 1; t <= 2000 && !first; ++t) {
    p.grad.data = p.value.data;  // gradient of ||w||^2 / 2
    opt.step();
    if (std::hypot(p.value.data[0], p.value.data[1]) < 1e-3) first = t;
  }
  EXPECT_EQ(first, 1396u);
}

TEST(Optimizer, SgdAndDeterminism) {
  Param<double> p("w", {1, 1, 1, 2});
  p.value.data = {1, 1};
  p.grad.data = {0.5, -1};
  Optimizer<double> sgd({&p}, OptimizerConfig{.kind = OptimizerKind::Sgd, .lr = 0.1});
  sgd.step();
  EXPECT_NEAR(p.value.data[0], 0.95, 1e-15);
  EXPECT_NEAR(p.value.data[1], 1.1, 1e-15);
  EXPECT_ERROR_CODE(Optimizer<double>({&p}, OptimizerConfig{.lr = 0}), InvalidConfig);

  auto run = [] {
    Rng rng(15);
    Sequential<double> net;
    net.add<Dense<double>>(6, 4);
    net.init(rng);
    Optimizer<double> opt(net.params(), OptimizerConfig{});
    auto x = random_tensor({4, 6, 1, 1}, rng);
    const std::vector<std::size_t> gold = {0, 1, 2, 3};
    for (int i = 0; i < 20; ++i) {
      net.zero_grad();
      net.backward(softmax_xent(net.forward(x, true), gold).grad);
      opt.step();
    }
    return net.params()[0]->value.data;
  };
  EXPECT_EQ(run(), run());
}

TEST(Serialization, RoundTripAndErrors) {
  Rng rng(16);
  Sequential<double> a, b, c;
  for (auto* net : {&a, &b}) {
    net->add<Conv2d<double>>(1, 2, 3, 1);
    net->add<BatchNorm<double>>(2);
    net->add<Dense<double>>(2 * 4 * 3, 4);
  }
  a.init(rng);
  const auto bytes = serialize_params(a.params());
  deserialize_params(bytes, b.params());
  for (std::size_t k = 0; k < a.params().size(); ++k)
    for (std::size_t i = 0; i < a.params()[k]->value.size(); ++i)
      EXPECT_EQ(b.params()[k]->value.data[i], static_cast<double>(static_cast<float>(a.params()[k]->value.data[i])));
  c.add<Dense<double>>(5, 4);
  EXPECT_ERROR_CODE(deserialize_params(bytes, c.params()), ShapeMismatch);
  EXPECT_ERROR_CODE(deserialize_params("XXXX", b.params()), FormatError);
  EXPECT_ERROR_CODE(deserialize_params(bytes.substr(0, bytes.size() - 3), b.params()), FormatError);
  EXPECT_ERROR_CODE(deserialize_params(bytes + "x", b.params()), FormatError);
}
