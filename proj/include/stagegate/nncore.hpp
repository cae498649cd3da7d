#pragma once

// Small dense-tensor layer library with hand-written backward passes.
//
// Tensors are 4-D (batch, channels, height, width), contiguous, row-major.
// Every layer caches what its backward pass needs during forward, so a layer
// instance serves one forward/backward pair at a time.
//
// Templated on the scalar: float for training, double for gradient checks.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stagegate/error.hpp"
#include "stagegate/util.hpp"

namespace stagegate::nn {

using Shape = std::array<std::size_t, 4>;

inline std::string shape_str(const Shape& s) {
  return std::to_string(s[0]) + "x" + std::to_string(s[1]) + "x" + std::to_string(s[2]) + "x" + std::to_string(s[3]);
}

inline std::size_t shape_size(const Shape& s) { return s[0] * s[1] * s[2] * s[3]; }

/// Storage with a fixed alignment: Eigen's vectorized reductions over
/// unaligned maps peel a data-dependent head, so the summation order (and
/// the rounding) would otherwise depend on where the allocator placed a
/// buffer.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
struct Tensor {
  Shape shape{1, 1, 1, 1};
  AlignedVector<T> data = AlignedVector<T>(1, T(0));

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(s) {
    for (auto d : s) {
      if (d == 0) throw Error(ErrorCode::ShapeMismatch, "tensor axes must be >= 1, got " + shape_str(s));
    }
    data.assign(shape_size(s), fill);
  }

  std::size_t n() const { return shape[0]; }
  std::size_t c() const { return shape[1]; }
  std::size_t h() const { return shape[2]; }
  std::size_t w() const { return shape[3]; }
  std::size_t size() const { return data.size(); }
  /// Elements per batch item.
  std::size_t item_size() const { return shape[1] * shape[2] * shape[3]; }

  T& at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
    return data[((a * shape[1] + b) * shape[2] + c) * shape[3] + d];
  }
  T at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
    return data[((a * shape[1] + b) * shape[2] + c) * shape[3] + d];
  }
  T* item(std::size_t i) { return data.data() + i * item_size(); }
  const T* item(std::size_t i) const { return data.data() + i * item_size(); }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  Tensor reshaped(Shape s) const {
    if (shape_size(s) != size()) throw Error(ErrorCode::ShapeMismatch, "cannot reshape " + shape_str(shape) + " to " + shape_str(s));
    Tensor t = *this;
    t.shape = s;
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> t(shape);
    for (std::size_t i = 0; i < size(); ++i) t.data[i] = static_cast<U>(data[i]);
    return t;
  }
};

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;
template <typename T>
using SMapR = Eigen::Map<MatR<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using CSMapR = Eigen::Map<const MatR<T>, 0, Eigen::OuterStride<>>;

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, Shape s, bool train = true) : name(std::move(n)), value(s), grad(s), trainable(train) {}
  void zero_grad() { grad.fill(T(0)); }
};

inline void uniform_init(auto& data, Rng& rng, double limit) {
  for (auto& x : data) x = static_cast<std::remove_reference_t<decltype(x)>>(rng.uniform(-limit, limit));
}

/// Rolling signature of discrete choices (ReLU masks, pooling argmaxes) used
/// by the gradient checker to detect finite differences that cross a kink.
struct Pattern {
  std::uint64_t h = 1469598103934665603ULL;
  void add(std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  }
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, bool training) = 0;
  /// Accumulates parameter gradients and returns the input gradient.
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
  virtual std::string name() const = 0;
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual void init(Rng&) {}
  virtual void set_track_pattern(bool on) { track_ = on; }
  std::uint64_t pattern() const { return pattern_.h; }

 protected:
  bool track_ = false;
  Pattern pattern_;
};

inline void require(bool ok, ErrorCode code, const std::string& msg) {
  if (!ok) throw Error(code, msg);
}

// ---------------------------------------------------------------------------
// Convolution (valid mode)

template <typename T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(std::size_t in_channels, std::size_t filters, std::size_t kh, std::size_t kw, std::size_t sh = 1,
         std::size_t sw = 1)
      : cin_(in_channels), cout_(filters), kh_(kh), kw_(kw), sh_(sh), sw_(sw),
        weight_("conv.weight", {filters, in_channels, kh, kw}), bias_("conv.bias", {1, 1, 1, filters}) {
    require(sh >= 1 && sw >= 1, ErrorCode::InvalidConfig, "stride components must be >= 1");
  }

  std::string name() const override {
    return "conv(" + std::to_string(cout_) + ", " + std::to_string(kh_) + "x" + std::to_string(kw_) + ", stride " +
           std::to_string(sh_) + "x" + std::to_string(sw_) + ")";
  }

  Shape output_shape(const Shape& in) const override {
    require(in[1] == cin_, ErrorCode::ShapeMismatch,
            "conv expects " + std::to_string(cin_) + " channels, got " + std::to_string(in[1]));
    require(in[2] >= kh_ && in[3] >= kw_, ErrorCode::KernelTooLarge,
            "kernel " + std::to_string(kh_) + "x" + std::to_string(kw_) + " exceeds input " + std::to_string(in[2]) +
                "x" + std::to_string(in[3]));
    return {in[0], cout_, (in[2] - kh_) / sh_ + 1, (in[3] - kw_) / sw_ + 1};
  }

  void init(Rng& rng) override {
    uniform_init(weight_.value.data, rng, std::sqrt(6.0 / static_cast<double>(cin_ * kh_ * kw_)));
    bias_.value.fill(T(0));
  }

  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

  Tensor<T> forward(const Tensor<T>& x, bool) override {
    const Shape os = output_shape(x.shape);
    in_shape_ = x.shape;
    const std::size_t K = cin_ * kh_ * kw_, P = os[2] * os[3];
    cols_.resize(x.n() * K * P);
    Tensor<T> y(os);
    CMapR<T> W(weight_.value.data.data(), static_cast<Eigen::Index>(cout_), static_cast<Eigen::Index>(K));
    for (std::size_t n = 0; n < x.n(); ++n) {
      T* col = cols_.data() + n * K * P;
      im2col(x.item(n), x.h(), x.w(), os[2], os[3], col);
      CMapR<T> C(col, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
      MapR<T> Y(y.item(n), static_cast<Eigen::Index>(cout_), static_cast<Eigen::Index>(P));
      Y.noalias() = W * C;
      for (std::size_t f = 0; f < cout_; ++f) Y.row(static_cast<Eigen::Index>(f)).array() += bias_.value.data[f];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const std::size_t K = cin_ * kh_ * kw_, P = dy.h() * dy.w();
    Tensor<T> dx(in_shape_);
    CMapR<T> W(weight_.value.data.data(), static_cast<Eigen::Index>(cout_), static_cast<Eigen::Index>(K));
    MapR<T> dW(weight_.grad.data.data(), static_cast<Eigen::Index>(cout_), static_cast<Eigen::Index>(K));
    MatR<T> dcol(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
    for (std::size_t n = 0; n < dy.n(); ++n) {
      CMapR<T> C(cols_.data() + n * K * P, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
      CMapR<T> dY(dy.item(n), static_cast<Eigen::Index>(cout_), static_cast<Eigen::Index>(P));
      dW.noalias() += dY * C.transpose();
      for (std::size_t f = 0; f < cout_; ++f) bias_.grad.data[f] += dY.row(static_cast<Eigen::Index>(f)).sum();
      dcol.noalias() = W.transpose() * dY;
      col2im(dcol.data(), in_shape_[2], in_shape_[3], dy.h(), dy.w(), dx.item(n));
    }
    return dx;
  }

 private:
  void im2col(const T* x, std::size_t H, std::size_t Wd, std::size_t Ho, std::size_t Wo, T* col) const {
    const std::size_t P = Ho * Wo;
    for (std::size_t ci = 0; ci < cin_; ++ci) {
      for (std::size_t ki = 0; ki < kh_; ++ki) {
        for (std::size_t kj = 0; kj < kw_; ++kj) {
          T* row = col + ((ci * kh_ + ki) * kw_ + kj) * P;
          for (std::size_t oh = 0; oh < Ho; ++oh) {
            const T* src = x + (ci * H + oh * sh_ + ki) * Wd + kj;
            T* dst = row + oh * Wo;
            if (sw_ == 1) std::memcpy(dst, src, Wo * sizeof(T));
            else
              for (std::size_t ow = 0; ow < Wo; ++ow) dst[ow] = src[ow * sw_];
          }
        }
      }
    }
  }

  void col2im(const T* col, std::size_t H, std::size_t Wd, std::size_t Ho, std::size_t Wo, T* dx) const {
    const std::size_t P = Ho * Wo;
    for (std::size_t ci = 0; ci < cin_; ++ci) {
      for (std::size_t ki = 0; ki < kh_; ++ki) {
        for (std::size_t kj = 0; kj < kw_; ++kj) {
          const T* row = col + ((ci * kh_ + ki) * kw_ + kj) * P;
          for (std::size_t oh = 0; oh < Ho; ++oh) {
            T* dst = dx + (ci * H + oh * sh_ + ki) * Wd + kj;
            const T* src = row + oh * Wo;
            for (std::size_t ow = 0; ow < Wo; ++ow) dst[ow * sw_] += src[ow];
          }
        }
      }
    }
  }

  std::size_t cin_, cout_, kh_, kw_, sh_, sw_;
  Param<T> weight_, bias_;
  Shape in_shape_{};
  AlignedVector<T> cols_;
};

// ---------------------------------------------------------------------------
// Max pooling; stride defaults to the kernel size

template <typename T>
class MaxPool2d : public Layer<T> {
 public:
  MaxPool2d(std::size_t kh, std::size_t kw, std::size_t sh = 0, std::size_t sw = 0)
      : kh_(kh), kw_(kw), sh_(sh ? sh : kh), sw_(sw ? sw : kw) {
    require(kh >= 1 && kw >= 1, ErrorCode::InvalidConfig, "pool kernel must be >= 1");
  }

  std::string name() const override {
    return "maxpool(" + std::to_string(kh_) + "x" + std::to_string(kw_) + ", stride " + std::to_string(sh_) + "x" +
           std::to_string(sw_) + ")";
  }

  Shape output_shape(const Shape& in) const override {
    require(in[2] >= kh_ && in[3] >= kw_, ErrorCode::KernelTooLarge,
            "pool window " + std::to_string(kh_) + "x" + std::to_string(kw_) + " exceeds input " +
                std::to_string(in[2]) + "x" + std::to_string(in[3]));
    return {in[0], in[1], (in[2] - kh_) / sh_ + 1, (in[3] - kw_) / sw_ + 1};
  }

  Tensor<T> forward(const Tensor<T>& x, bool) override {
    const Shape os = output_shape(x.shape);
    in_shape_ = x.shape;
    Tensor<T> y(os);
    argmax_.resize(y.size());
    this->pattern_ = {};
    std::size_t o = 0;
    for (std::size_t n = 0; n < os[0]; ++n) {
      for (std::size_t c = 0; c < os[1]; ++c) {
        const std::size_t base = (n * x.c() + c) * x.h() * x.w();
        for (std::size_t oh = 0; oh < os[2]; ++oh) {
          for (std::size_t ow = 0; ow < os[3]; ++ow, ++o) {
            std::size_t best = base + (oh * sh_) * x.w() + ow * sw_;
            for (std::size_t i = 0; i < kh_; ++i) {
              for (std::size_t j = 0; j < kw_; ++j) {
                const std::size_t idx = base + (oh * sh_ + i) * x.w() + ow * sw_ + j;
                if (x.data[idx] > x.data[best]) best = idx;
              }
            }
            argmax_[o] = static_cast<std::uint32_t>(best);
            y.data[o] = x.data[best];
            if (this->track_) this->pattern_.add(best);
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(in_shape_);
    for (std::size_t o = 0; o < dy.size(); ++o) dx.data[argmax_[o]] += dy.data[o];
    return dx;
  }

 private:
  std::size_t kh_, kw_, sh_, sw_;
  Shape in_shape_{};
  std::vector<std::uint32_t> argmax_;
};

// ---------------------------------------------------------------------------
// Dense: flattens each batch item, y = x W' + b

template <typename T>
class Dense : public Layer<T> {
 public:
  Dense(std::size_t in, std::size_t out)
      : in_(in), out_(out), weight_("dense.weight", {1, 1, out, in}), bias_("dense.bias", {1, 1, 1, out}) {}

  std::string name() const override { return "dense(" + std::to_string(out_) + ")"; }

  Shape output_shape(const Shape& in) const override {
    require(in[1] * in[2] * in[3] == in_, ErrorCode::ShapeMismatch,
            "dense expects " + std::to_string(in_) + " inputs per item, got " + shape_str(in));
    return {in[0], out_, 1, 1};
  }

  void init(Rng& rng) override {
    uniform_init(weight_.value.data, rng, std::sqrt(6.0 / static_cast<double>(in_)));
    bias_.value.fill(T(0));
  }

  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

  Tensor<T> forward(const Tensor<T>& x, bool) override {
    const Shape os = output_shape(x.shape);
    x_ = x;
    Tensor<T> y(os);
    CMapR<T> X(x.data.data(), static_cast<Eigen::Index>(x.n()), static_cast<Eigen::Index>(in_));
    CMapR<T> W(weight_.value.data.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    MapR<T> Y(y.data.data(), static_cast<Eigen::Index>(x.n()), static_cast<Eigen::Index>(out_));
    Y.noalias() = X * W.transpose();
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias_.value.data.data(), static_cast<Eigen::Index>(out_));
    Y.rowwise() += b;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(x_.shape);
    const auto N = static_cast<Eigen::Index>(x_.n());
    CMapR<T> X(x_.data.data(), N, static_cast<Eigen::Index>(in_));
    CMapR<T> W(weight_.value.data.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    CMapR<T> dY(dy.data.data(), N, static_cast<Eigen::Index>(out_));
    MapR<T> dW(weight_.grad.data.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    MapR<T> dX(dx.data.data(), N, static_cast<Eigen::Index>(in_));
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(bias_.grad.data.data(), static_cast<Eigen::Index>(out_));
    dW.noalias() += dY.transpose() * X;
    db += dY.colwise().sum();
    dX.noalias() = dY * W;
    return dx;
  }

 private:
  std::size_t in_, out_;
  Param<T> weight_, bias_;
  Tensor<T> x_;
};

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
class Relu : public Layer<T> {
 public:
  std::string name() const override { return "relu"; }
  Shape output_shape(const Shape& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& x, bool) override {
    Tensor<T> y = x;
    this->pattern_ = {};
    for (auto& v : y.data) {
      if (!(v > T(0))) v = T(0);
    }
    if (this->track_) {
      std::uint64_t word = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        word = (word << 1) | (x.data[i] > T(0) ? 1u : 0u);
        if (i % 64 == 63) this->pattern_.add(word);
      }
      this->pattern_.add(word);
    }
    y_ = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (!(y_.data[i] > T(0))) dx.data[i] = T(0);
    }
    return dx;
  }

 private:
  Tensor<T> y_;
};

/// Inverted dropout: kept units scaled by 1/(1-rate) in training, identity
/// in inference. With a fixed mask the same units drop on every call.
template <typename T>
class Dropout : public Layer<T> {
 public:
  explicit Dropout(double rate, std::uint64_t seed = 1) : rate_(rate), seed_(seed), rng_(seed) {
    require(rate >= 0.0 && rate < 1.0, ErrorCode::InvalidConfig, "dropout rate must be in [0, 1)");
  }

  std::string name() const override { return "dropout(" + format_fixed(rate_, 2) + ")"; }
  Shape output_shape(const Shape& in) const override { return in; }
  double rate() const { return rate_; }
  void set_fixed_mask(bool on) { fixed_ = on; }
  void reseed(std::uint64_t seed) {
    seed_ = seed;
    rng_ = Rng(seed);
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) override {
    training_ = training && rate_ > 0.0;
    if (!training_) return x;
    if (fixed_) rng_ = Rng(seed_);
    mask_.resize(x.size());
    const T keep = static_cast<T>(1.0 / (1.0 - rate_));
    Tensor<T> y = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      mask_[i] = rng_.uniform() >= rate_ ? keep : T(0);
      y.data[i] *= mask_[i];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    if (!training_) return dy;
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= mask_[i];
    return dx;
  }

 private:
  double rate_;
  std::uint64_t seed_;
  Rng rng_;
  bool fixed_ = false;
  bool training_ = false;
  AlignedVector<T> mask_;
};

// ---------------------------------------------------------------------------
// Batch normalization over all axes except channels

template <typename T>
class BatchNorm : public Layer<T> {
 public:
  explicit BatchNorm(std::size_t channels, double momentum = 0.1, double eps = 1e-5)
      : c_(channels), momentum_(momentum), eps_(eps),
        gamma_("bn.gamma", {1, 1, 1, channels}), beta_("bn.beta", {1, 1, 1, channels}),
        running_mean_("bn.running_mean", {1, 1, 1, channels}, false),
        running_var_("bn.running_var", {1, 1, 1, channels}, false) {
    gamma_.value.fill(T(1));
    running_var_.value.fill(T(1));
  }

  std::string name() const override { return "batchnorm"; }
  Shape output_shape(const Shape& in) const override {
    require(in[1] == c_, ErrorCode::ShapeMismatch,
            "batchnorm expects " + std::to_string(c_) + " channels, got " + std::to_string(in[1]));
    return in;
  }

  void init(Rng&) override {
    gamma_.value.fill(T(1));
    beta_.value.fill(T(0));
    running_mean_.value.fill(T(0));
    running_var_.value.fill(T(1));
  }

  std::vector<Param<T>*> params() override { return {&gamma_, &beta_, &running_mean_, &running_var_}; }
  Param<T>& gamma() { return gamma_; }
  Param<T>& beta() { return beta_; }

  /// Normalized activations of the last training forward (before scale/shift).
  const Tensor<T>& normalized() const { return xhat_; }

  Tensor<T> forward(const Tensor<T>& x, bool training) override {
    output_shape(x.shape);
    training_ = training;
    const std::size_t N = x.n(), S = x.h() * x.w();
    const double M = static_cast<double>(N * S);
    Tensor<T> y(x.shape);
    xhat_ = Tensor<T>(x.shape);
    inv_std_.assign(c_, T(0));
    for (std::size_t c = 0; c < c_; ++c) {
      double mean, var;
      if (training) {
        double s = 0;
        for (std::size_t n = 0; n < N; ++n) {
          const T* p = x.item(n) + c * S;
          for (std::size_t k = 0; k < S; ++k) s += p[k];
        }
        mean = s / M;
        double v = 0;
        for (std::size_t n = 0; n < N; ++n) {
          const T* p = x.item(n) + c * S;
          for (std::size_t k = 0; k < S; ++k) v += (p[k] - mean) * (p[k] - mean);
        }
        var = v / M;
        running_mean_.value.data[c] = static_cast<T>((1 - momentum_) * running_mean_.value.data[c] + momentum_ * mean);
        running_var_.value.data[c] = static_cast<T>((1 - momentum_) * running_var_.value.data[c] + momentum_ * var);
      } else {
        mean = running_mean_.value.data[c];
        var = running_var_.value.data[c];
      }
      const double inv = 1.0 / std::sqrt(var + eps_);
      inv_std_[c] = static_cast<T>(inv);
      const T g = gamma_.value.data[c], b = beta_.value.data[c];
      for (std::size_t n = 0; n < N; ++n) {
        const T* p = x.item(n) + c * S;
        T* xh = xhat_.item(n) + c * S;
        T* q = y.item(n) + c * S;
        for (std::size_t k = 0; k < S; ++k) {
          xh[k] = static_cast<T>((p[k] - mean) * inv);
          q[k] = g * xh[k] + b;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(dy.shape);
    const std::size_t N = dy.n(), S = dy.h() * dy.w();
    const double M = static_cast<double>(N * S);
    for (std::size_t c = 0; c < c_; ++c) {
      double sum_dy = 0, sum_dy_xhat = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* d = dy.item(n) + c * S;
        const T* xh = xhat_.item(n) + c * S;
        for (std::size_t k = 0; k < S; ++k) {
          sum_dy += d[k];
          sum_dy_xhat += d[k] * xh[k];
        }
      }
      gamma_.grad.data[c] += static_cast<T>(sum_dy_xhat);
      beta_.grad.data[c] += static_cast<T>(sum_dy);
      const double g = gamma_.value.data[c], inv = inv_std_[c];
      for (std::size_t n = 0; n < N; ++n) {
        const T* d = dy.item(n) + c * S;
        const T* xh = xhat_.item(n) + c * S;
        T* o = dx.item(n) + c * S;
        for (std::size_t k = 0; k < S; ++k) {
          if (training_) o[k] = static_cast<T>(g * inv * (d[k] - sum_dy / M - xh[k] * sum_dy_xhat / M));
          else o[k] = static_cast<T>(g * inv * d[k]);
        }
      }
    }
    return dx;
  }

 private:
  std::size_t c_;
  double momentum_, eps_;
  Param<T> gamma_, beta_, running_mean_, running_var_;
  bool training_ = false;
  Tensor<T> xhat_;
  AlignedVector<T> inv_std_;
};

// ---------------------------------------------------------------------------
// Softmax cross-entropy, mean over the batch

template <typename T>
struct XentResult {
  double loss = 0;
  Tensor<T> grad;   // d loss / d logits
  Tensor<T> probs;  // N x K x 1 x 1
};

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  Tensor<T> p(logits.shape);
  const std::size_t K = logits.item_size();
  for (std::size_t n = 0; n < logits.n(); ++n) {
    const T* z = logits.item(n);
    T* q = p.item(n);
    const T mx = *std::max_element(z, z + K);
    double s = 0;
    for (std::size_t k = 0; k < K; ++k) s += std::exp(static_cast<double>(z[k] - mx));
    for (std::size_t k = 0; k < K; ++k) q[k] = static_cast<T>(std::exp(static_cast<double>(z[k] - mx)) / s);
  }
  return p;
}

template <typename T>
XentResult<T> softmax_xent(const Tensor<T>& logits, std::span<const std::size_t> gold) {
  require(gold.size() == logits.n(), ErrorCode::ShapeMismatch, "gold labels differ from batch size");
  const std::size_t K = logits.item_size();
  XentResult<T> r;
  r.grad = Tensor<T>(logits.shape);
  r.probs = Tensor<T>(logits.shape);
  const double invN = 1.0 / static_cast<double>(logits.n());
  for (std::size_t n = 0; n < logits.n(); ++n) {
    if (gold[n] >= K) throw Error(ErrorCode::InvalidClassIndex, "gold class " + std::to_string(gold[n]) + " out of range");
    const T* z = logits.item(n);
    double mx = z[0];
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(z[k]));
    double s = 0;
    for (std::size_t k = 0; k < K; ++k) s += std::exp(z[k] - mx);
    const double lse = mx + std::log(s);
    r.loss += (lse - z[gold[n]]) * invN;
    for (std::size_t k = 0; k < K; ++k) {
      const double p = std::exp(z[k] - lse);
      r.probs.item(n)[k] = static_cast<T>(p);
      r.grad.item(n)[k] = static_cast<T>((p - (k == gold[n] ? 1.0 : 0.0)) * invN);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// GRU
//
//   z  = sigmoid(x Wz' + h Uz' + bz)
//   r  = sigmoid(x Wr' + h Ur' + br)
//   h~ = g(x Wh' + (r * h) Uh' + bh)          g = ReLU (default) or tanh
//   h' = clip((1 - z) * h + z * h~, -50, 50)
//
// Input (N, 1, T, D): row t of each item is step t. Output (N, H, 1, 1): the
// hidden state after the last step, starting from h = 0. With skip_zero_rows,
// an all-zero input row (padding) leaves h unchanged, so the output is the
// state after the last non-zero row.

enum class GruActivation { Relu, Tanh };

inline constexpr double kGruClip = 50.0;

template <typename T>
class Gru : public Layer<T> {
 public:
  Gru(std::size_t input_dim, std::size_t hidden, GruActivation act = GruActivation::Relu,
      bool skip_zero_rows = false)
      : d_(input_dim), h_(hidden), act_(act), skip_(skip_zero_rows),
        wx_("gru.wx", {1, 1, 3 * hidden, input_dim}),
        uzr_("gru.uzr", {1, 1, 2 * hidden, hidden}),
        uh_("gru.uh", {1, 1, hidden, hidden}),
        b_("gru.bias", {1, 1, 1, 3 * hidden}) {
    require(input_dim >= 1 && hidden >= 1, ErrorCode::InvalidConfig, "GRU dimensions must be >= 1");
  }

  std::string name() const override {
    return std::string("gru(") + std::to_string(h_) + (act_ == GruActivation::Relu ? ", relu)" : ", tanh)");
  }

  Shape output_shape(const Shape& in) const override {
    require(in[1] == 1 && in[3] == d_, ErrorCode::ShapeMismatch,
            "GRU expects (N, 1, T, " + std::to_string(d_) + "), got " + shape_str(in));
    return {in[0], h_, 1, 1};
  }

  std::size_t hidden() const { return h_; }
  std::size_t input_dim() const { return d_; }
  GruActivation activation() const { return act_; }
  bool skip_zero_rows() const { return skip_; }

  void init(Rng& rng) override {
    const double lim = 1.0 / std::sqrt(static_cast<double>(h_));
    uniform_init(wx_.value.data, rng, lim);
    uniform_init(uzr_.value.data, rng, lim);
    uniform_init(uh_.value.data, rng, lim);
    b_.value.fill(T(0));
  }

  std::vector<Param<T>*> params() override { return {&wx_, &uzr_, &uh_, &b_}; }
  Param<T>& wx() { return wx_; }
  Param<T>& uzr() { return uzr_; }
  Param<T>& uh() { return uh_; }
  Param<T>& bias() { return b_; }

  /// One step outside of any sequence: x (N x D), h (N x H) as (N,1,1,D) / (N,H,1,1).
  Tensor<T> step(const Tensor<T>& x, const Tensor<T>& h) {
    require(x.item_size() == d_ && h.item_size() == h_ && x.n() == h.n(), ErrorCode::ShapeMismatch,
            "gru step shapes do not match the cell");
    Tensor<T> seq = x.reshaped({x.n(), 1, 1, d_});
    Tensor<T> out = run(seq, &h);
    return out;
  }

  Tensor<T> forward(const Tensor<T>& x, bool) override {
    output_shape(x.shape);
    return run(x, nullptr);
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const auto N = static_cast<Eigen::Index>(n_), H = static_cast<Eigen::Index>(h_);
    const auto H3 = 3 * H;
    MatR<T> dh = CMapR<T>(dy.data.data(), N, H);
    MatR<T> dxp = MatR<T>::Zero(N * static_cast<Eigen::Index>(t_), H3);  // row n*T + t
    CMapR<T> Uzr(uzr_.value.data.data(), 2 * H, H);
    CMapR<T> Uh(uh_.value.data.data(), H, H);
    MapR<T> dUzr(uzr_.grad.data.data(), 2 * H, H);
    MapR<T> dUh(uh_.grad.data.data(), H, H);
    MatR<T> dzr(N, 2 * H), da(N, H), drh(N, H);
    for (std::size_t t = t_; t-- > 0;) {
      const auto& c = cache_[t];
      MatR<T> passed;
      if (skip_) {
        passed = dh.array().colwise() * (T(1) - c.active.array());
        dh.array().colwise() *= c.active.array();
      }
      dh.array() *= c.keep.array();
      // h' = (1-z) h + z h~
      dzr.leftCols(H).array() = dh.array() * (c.hhat.array() - c.hprev.array()) * c.z.array() * (T(1) - c.z.array());
      da.array() = dh.array() * c.z.array() * dact(c).array();
      MatR<T> dprev = dh.array() * (T(1) - c.z.array());
      drh.noalias() = da * Uh;
      dUh.noalias() += da.transpose() * c.rh;
      dzr.rightCols(H).array() = drh.array() * c.hprev.array() * c.r.array() * (T(1) - c.r.array());
      dprev.array() += drh.array() * c.r.array();
      dUzr.noalias() += dzr.transpose() * c.hprev;
      dprev.noalias() += dzr * Uzr;
      SMapR<T> rows(dxp.data() + static_cast<Eigen::Index>(t) * H3, N, H3,
                    Eigen::OuterStride<>(static_cast<Eigen::Index>(t_) * H3));
      rows.leftCols(2 * H) = dzr;
      rows.rightCols(H) = da;
      if (skip_) dprev += passed;
      dh = std::move(dprev);
    }
    dh0_ = dh;
    CMapR<T> X(x_.data.data(), N * static_cast<Eigen::Index>(t_), static_cast<Eigen::Index>(d_));
    MapR<T> dWx(wx_.grad.data.data(), H3, static_cast<Eigen::Index>(d_));
    CMapR<T> Wx(wx_.value.data.data(), H3, static_cast<Eigen::Index>(d_));
    dWx.noalias() += dxp.transpose() * X;
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(b_.grad.data.data(), H3);
    db += dxp.colwise().sum();
    Tensor<T> dx(x_.shape);
    MapR<T> dX(dx.data.data(), N * static_cast<Eigen::Index>(t_), static_cast<Eigen::Index>(d_));
    dX.noalias() = dxp * Wx;
    return dx;
  }

  /// Gradient with respect to the initial hidden state of the last backward.
  const MatR<T>& initial_state_grad() const { return dh0_; }

 private:
  struct StepCache {
    MatR<T> hprev, z, r, rh, a, hhat, keep;
    Eigen::Matrix<T, Eigen::Dynamic, 1> active;  // 1 = row had data
  };

  auto dact(const StepCache& c) const {
    if (act_ == GruActivation::Relu) return MatR<T>((c.a.array() > T(0)).template cast<T>());
    return MatR<T>(T(1) - c.hhat.array().square());
  }

  Tensor<T> run(const Tensor<T>& x, const Tensor<T>* h0) {
    x_ = x;
    n_ = x.n();
    t_ = x.h();
    const auto N = static_cast<Eigen::Index>(n_), H = static_cast<Eigen::Index>(h_);
    const auto H3 = 3 * H;
    CMapR<T> X(x.data.data(), N * static_cast<Eigen::Index>(t_), static_cast<Eigen::Index>(d_));
    CMapR<T> Wx(wx_.value.data.data(), H3, static_cast<Eigen::Index>(d_));
    CMapR<T> Uzr(uzr_.value.data.data(), 2 * H, H);
    CMapR<T> Uh(uh_.value.data.data(), H, H);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(b_.value.data.data(), H3);
    MatR<T> xp = X * Wx.transpose();
    xp.rowwise() += b;
    MatR<T> h = h0 ? MatR<T>(CMapR<T>(h0->data.data(), N, H)) : MatR<T>::Zero(N, H);
    cache_.resize(t_);
    this->pattern_ = {};
    const T clip = static_cast<T>(kGruClip);
    for (std::size_t t = 0; t < t_; ++t) {
      CSMapR<T> rows(xp.data() + static_cast<Eigen::Index>(t) * H3, N, H3,
                     Eigen::OuterStride<>(static_cast<Eigen::Index>(t_) * H3));
      auto& c = cache_[t];
      c.hprev = h;
      MatR<T> zr = rows.leftCols(2 * H);
      zr.noalias() += h * Uzr.transpose();
      zr = (T(1) / (T(1) + (-zr.array()).exp())).matrix();
      c.z = zr.leftCols(H);
      c.r = zr.rightCols(H);
      c.rh = c.r.cwiseProduct(h);
      c.a = rows.rightCols(H);
      c.a.noalias() += c.rh * Uh.transpose();
      if (act_ == GruActivation::Relu) c.hhat = c.a.cwiseMax(T(0));
      else c.hhat = c.a.array().tanh().matrix();
      MatR<T> next = ((T(1) - c.z.array()) * h.array() + c.z.array() * c.hhat.array()).matrix();
      c.keep = ((next.array() <= clip) && (next.array() >= -clip)).template cast<T>().matrix();
      next = next.cwiseMin(clip).cwiseMax(-clip);
      if (skip_) {
        c.active.resize(N);
        for (Eigen::Index i = 0; i < N; ++i) {
          const T* row = x.data.data() + (static_cast<std::size_t>(i) * t_ + t) * d_;
          c.active[i] = std::any_of(row, row + d_, [](T v) { return v != T(0); }) ? T(1) : T(0);
          if (c.active[i] == T(0)) next.row(i) = h.row(i);
          if (this->track_) this->pattern_.add(c.active[i] > T(0) ? 5u : 4u);
        }
      }
      h = std::move(next);
      if (this->track_) {
        for (Eigen::Index i = 0; i < c.a.size(); ++i) {
          this->pattern_.add((act_ == GruActivation::Relu && c.a.data()[i] > T(0) ? 1u : 0u) |
                             (c.keep.data()[i] > T(0) ? 2u : 0u));
        }
      }
    }
    Tensor<T> y({n_, h_, 1, 1});
    MapR<T>(y.data.data(), N, H) = h;
    return y;
  }

  std::size_t d_, h_;
  GruActivation act_;
  bool skip_;
  Param<T> wx_, uzr_, uh_, b_;
  Tensor<T> x_;
  std::size_t n_ = 0, t_ = 0;
  std::vector<StepCache> cache_;
  MatR<T> dh0_;
};

// ---------------------------------------------------------------------------
// Sequential network

template <typename T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto p = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *p;
    layers_.push_back(std::move(p));
    return ref;
  }

  std::size_t size() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_[i]; }
  const Layer<T>& layer(std::size_t i) const { return *layers_[i]; }

  void init(Rng& rng) {
    for (auto& l : layers_) l->init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    Tensor<T> cur = x;
    traced_.clear();
    for (auto& l : layers_) {
      cur = l->forward(cur, training);
      traced_.push_back(cur.shape);
    }
    return cur;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> cur = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
    return cur;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& l : layers_) {
      for (auto* p : l->params()) out.push_back(p);
    }
    return out;
  }

  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }

  /// Statically derived output shape after each layer.
  std::vector<Shape> shape_chain(const Shape& in) const {
    std::vector<Shape> out;
    Shape cur = in;
    for (const auto& l : layers_) {
      cur = l->output_shape(cur);
      out.push_back(cur);
    }
    return out;
  }

  /// Runtime shapes observed in the last forward.
  const std::vector<Shape>& traced_shapes() const { return traced_; }

  void set_track_pattern(bool on) {
    for (auto& l : layers_) l->set_track_pattern(on);
  }

  std::uint64_t pattern() const {
    Pattern p;
    for (const auto& l : layers_) p.add(l->pattern());
    return p.h;
  }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<Shape> traced_;
};

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind { Adam, Sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam:  m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2;
///        w -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
/// SGD:   w -= lr * g.
/// Non-trainable parameters (batch-norm running statistics) are skipped.
template <typename T>
class Optimizer {
 public:
  Optimizer(std::vector<Param<T>*> params, OptimizerConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    require(cfg.lr > 0, ErrorCode::InvalidConfig, "learning rate must be > 0");
    for (auto* p : params_) {
      m_.emplace_back(p->value.size(), 0.0);
      v_.emplace_back(p->value.size(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto* p = params_[k];
      if (!p->trainable) continue;
      require(p->grad.size() == p->value.size(), ErrorCode::ShapeMismatch, "gradient shape differs from parameter");
      auto& w = p->value.data;
      const auto& g = p->grad.data;
      if (cfg_.kind == OptimizerKind::Sgd) {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(w[i] - cfg_.lr * g[i]);
        continue;
      }
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i];
        m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * gi * gi;
        w[i] = static_cast<T>(w[i] - cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps));
      }
    }
  }

  std::size_t steps() const { return t_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  std::vector<Param<T>*> params_;
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckReport {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose finite difference crossed a kink
  std::string worst;
};

inline double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

/// Central differences over the given coordinates. `loss` runs a forward pass
/// and returns the scalar loss; `pattern` returns the kink signature of that
/// pass. A coordinate is skipped when either perturbed pass lands on a
/// different signature than the unperturbed one.
inline GradCheckReport check_coordinates(const std::vector<std::pair<std::string, std::pair<double*, const double*>>>& coords,
                                         const std::function<double()>& loss,
                                         const std::function<std::uint64_t()>& pattern, double eps) {
  GradCheckReport rep;
  loss();
  const auto base = pattern();
  for (const auto& [name, pr] : coords) {
    double* x = pr.first;
    const double analytic = *pr.second;
    const double orig = *x;
    *x = orig + eps;
    const double fp = loss();
    const auto pp = pattern();
    *x = orig - eps;
    const double fm = loss();
    const auto pm = pattern();
    *x = orig;
    if (pp != base || pm != base) {
      ++rep.skipped;
      continue;
    }
    const double numeric = (fp - fm) / (2 * eps);
    const double e = relative_error(analytic, numeric);
    ++rep.checked;
    if (e > rep.max_rel_error) {
      rep.max_rel_error = e;
      rep.worst = name;
    }
  }
  return rep;
}

/// Checks every parameter (and the input) of a network under mean softmax
/// cross-entropy. Runs in training mode; dropout layers should use fixed masks.
inline GradCheckReport gradient_check(Sequential<double>& net, Tensor<double>& x, std::span<const std::size_t> gold,
                                      double eps = 1e-5, bool include_input = true) {
  net.set_track_pattern(true);
  net.zero_grad();
  auto out = net.forward(x, true);
  auto xr = softmax_xent(out, gold);
  Tensor<double> dx = net.backward(xr.grad);
  std::vector<std::pair<std::string, std::pair<double*, const double*>>> coords;
  for (auto* p : net.params()) {
    if (!p->trainable) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i)
      coords.push_back({p->name + "[" + std::to_string(i) + "]", {&p->value.data[i], &p->grad.data[i]}});
  }
  if (include_input) {
    for (std::size_t i = 0; i < x.size(); ++i) coords.push_back({"input[" + std::to_string(i) + "]", {&x.data[i], &dx.data[i]}});
  }
  // Running statistics move on every training forward; they do not affect
  // training-mode outputs, so the loss is unaffected.
  auto rep = check_coordinates(
      coords, [&] { return softmax_xent(net.forward(x, true), gold).loss; }, [&] { return net.pattern(); }, eps);
  net.set_track_pattern(false);
  return rep;
}

/// Checks a single layer under the loss sum(out * r) for a fixed tensor r.
inline GradCheckReport gradient_check_layer(Layer<double>& layer, Tensor<double>& x, const Tensor<double>& r,
                                            double eps = 1e-5, bool include_input = true) {
  layer.set_track_pattern(true);
  for (auto* p : layer.params()) p->zero_grad();
  auto y = layer.forward(x, true);
  require(y.shape == r.shape, ErrorCode::ShapeMismatch, "probe tensor shape differs from layer output");
  Tensor<double> dx = layer.backward(r);
  std::vector<std::pair<std::string, std::pair<double*, const double*>>> coords;
  for (auto* p : layer.params()) {
    if (!p->trainable) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i)
      coords.push_back({p->name + "[" + std::to_string(i) + "]", {&p->value.data[i], &p->grad.data[i]}});
  }
  if (include_input) {
    for (std::size_t i = 0; i < x.size(); ++i) coords.push_back({"input[" + std::to_string(i) + "]", {&x.data[i], &dx.data[i]}});
  }
  auto loss = [&] {
    auto out = layer.forward(x, true);
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out.data[i] * r.data[i];
    return s;
  };
  auto rep = check_coordinates(coords, loss, [&] { return layer.pattern(); }, eps);
  layer.set_track_pattern(false);
  return rep;
}

// ---------------------------------------------------------------------------
// Parameter serialization
//
//   "SGNN" magic, u32 version (1), u32 parameter count, then per parameter:
//   4 x u32 shape, product(shape) x float32. All integers and floats are
//   little-endian; parameters appear in layer order.

inline constexpr std::uint32_t kParamFormatVersion = 1;

namespace detail {
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}
inline std::uint32_t get_u32(std::string_view s, std::size_t& pos) {
  if (pos + 4 > s.size()) throw Error(ErrorCode::FormatError, "truncated parameter file");
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[pos + k])) << (8 * k);
  pos += 4;
  return v;
}
}  // namespace detail

template <typename T>
std::string serialize_params(const std::vector<Param<T>*>& params) {
  std::string out = "SGNN";
  detail::put_u32(out, kParamFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    for (auto d : p->value.shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (auto v : p->value.data) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

template <typename T>
void deserialize_params(std::string_view s, const std::vector<Param<T>*>& params) {
  if (s.substr(0, 4) != "SGNN") throw Error(ErrorCode::FormatError, "not a parameter file");
  std::size_t pos = 4;
  if (detail::get_u32(s, pos) != kParamFormatVersion) throw Error(ErrorCode::FormatError, "unsupported parameter file version");
  if (detail::get_u32(s, pos) != params.size())
    throw Error(ErrorCode::ShapeMismatch, "parameter count differs from the architecture");
  for (auto* p : params) {
    Shape sh;
    for (auto& d : sh) d = detail::get_u32(s, pos);
    if (sh != p->value.shape)
      throw Error(ErrorCode::ShapeMismatch, p->name + ": stored " + shape_str(sh) + ", expected " + shape_str(p->value.shape));
    for (auto& v : p->value.data) v = static_cast<T>(std::bit_cast<float>(detail::get_u32(s, pos)));
  }
  if (pos != s.size()) throw Error(ErrorCode::FormatError, "trailing bytes in parameter file");
}

}  // namespace stagegate::nn
