#include "meal/nets/layers.hpp"

#include <cmath>
#include <utility>

#include "meal/error.hpp"
#include "meal/kernels/kernels.hpp"

namespace meal::nets {
namespace {

Parameter make_parameter(std::string name, std::vector<std::size_t> shape, real fill = 0.0) {
  Parameter p;
  p.name = std::move(name);
  p.value = Tensor(shape, fill);
  p.grad = Tensor(std::move(shape), 0.0);
  return p;
}

void im2col(const real* img, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t oh, std::size_t ow, real* cols) {
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        real* dst = cols + ((c * k + ky) * k + kx) * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * stride + ky) -
                                    static_cast<std::ptrdiff_t>(pad);
          for (std::size_t x = 0; x < ow; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * stride + kx) -
                                      static_cast<std::ptrdiff_t>(pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(h) &&
                                ix < static_cast<std::ptrdiff_t>(w);
            dst[y * ow + x] = inside ? img[(c * h + iy) * w + ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const real* cols, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t oh, std::size_t ow, real* img) {
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const real* src = cols + ((c * k + ky) * k + kx) * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * stride + ky) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t x = 0; x < ow; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * stride + kx) -
                                      static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            img[(c * h + iy) * w + ix] += src[y * ow + x];
          }
        }
      }
    }
  }
}

void require_nchw(const Tensor& x, std::size_t channels, const std::string& who) {
  if (x.rank() != 4 || x.dim(1) != channels)
    throw ShapeError(who + ": expected [N," + std::to_string(channels) + ",H,W] input, got " +
                     shape_string(x.shape()));
}

}  // namespace

// ---------------------------------------------------------------------------

Conv2d::Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels,
               std::size_t kernel, std::size_t stride, std::size_t padding)
    : weight_(make_parameter(std::move(name) + ".weight",
                             {out_channels, in_channels * kernel * kernel})),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding) {}

void Conv2d::init(std::mt19937_64& rng) {
  // Kaiming normal, fan-out mode.
  std::normal_distribution<real> dist(0.0, std::sqrt(2.0 / static_cast<real>(out_ * kernel_ * kernel_)));
  for (real& v : weight_.value.values()) v = dist(rng);
}

Tensor Conv2d::infer(const Tensor& x) const {
  require_nchw(x, in_, weight_.name);
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = out_size(h), ow = out_size(w);
  const std::size_t patch = in_ * kernel_ * kernel_;
  const auto& k = kernels::active();
  Tensor y({n, out_, oh, ow});
  std::vector<real> cols(patch * oh * ow);
  for (std::size_t i = 0; i < n; ++i) {
    im2col(x.data() + i * in_ * h * w, in_, h, w, kernel_, stride_, padding_, oh, ow, cols.data());
    k.gemm_nn(out_, oh * ow, patch, weight_.value.data(), cols.data(),
              y.data() + i * out_ * oh * ow, false);
  }
  return y;
}

Tensor Conv2d::forward(const Tensor& x) {
  input_ = x;
  return infer(x);
}

Tensor Conv2d::backward(const Tensor& dy, bool need_input_grad) {
  const std::size_t n = input_.dim(0), h = input_.dim(2), w = input_.dim(3);
  const std::size_t oh = out_size(h), ow = out_size(w);
  require_shape(dy, {n, out_, oh, ow}, "conv backward");
  const std::size_t patch = in_ * kernel_ * kernel_;
  const auto& k = kernels::active();
  Tensor dx;
  if (need_input_grad) dx = Tensor(input_.shape(), 0.0);
  std::vector<real> cols(patch * oh * ow), dcols(patch * oh * ow);
  for (std::size_t i = 0; i < n; ++i) {
    const real* dyi = dy.data() + i * out_ * oh * ow;
    im2col(input_.data() + i * in_ * h * w, in_, h, w, kernel_, stride_, padding_, oh, ow,
           cols.data());
    if (!weight_.frozen)
      k.gemm_nt(out_, patch, oh * ow, dyi, cols.data(), weight_.grad.data(), true);
    if (need_input_grad) {
      k.gemm_tn(patch, oh * ow, out_, weight_.value.data(), dyi, dcols.data(), false);
      col2im(dcols.data(), in_, h, w, kernel_, stride_, padding_, oh, ow,
             dx.data() + i * in_ * h * w);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------

BatchNorm2d::BatchNorm2d(std::string name, std::size_t channels)
    : gamma_(make_parameter(name + ".weight", {channels}, 1.0)),
      beta_(make_parameter(name + ".bias", {channels}, 0.0)),
      running_mean_{name + ".running_mean", Tensor({channels}, 0.0)},
      running_var_{name + ".running_var", Tensor({channels}, 1.0)},
      channels_(channels) {}

Tensor BatchNorm2d::infer(const Tensor& x) const {
  require_nchw(x, channels_, gamma_.name);
  const std::size_t n = x.dim(0), hw = x.dim(2) * x.dim(3);
  const auto& k = kernels::active();
  Tensor y(x.shape());
  for (std::size_t c = 0; c < channels_; ++c) {
    const real inv = 1.0 / std::sqrt(running_var_.value[c] + kEps);
    const real scale = gamma_.value[c] * inv;
    const real shift = beta_.value[c] - scale * running_mean_.value[c];
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * channels_ + c) * hw;
      k.affine(hw, scale, shift, x.data() + off, y.data() + off);
    }
  }
  return y;
}

Tensor BatchNorm2d::forward(const Tensor& x) {
  require_nchw(x, channels_, gamma_.name);
  const std::size_t n = x.dim(0), hw = x.dim(2) * x.dim(3);
  const real m = static_cast<real>(n * hw);
  const auto& k = kernels::active();
  Tensor y(x.shape());
  normalized_ = Tensor(x.shape());
  inv_std_.assign(channels_, 0.0);
  for (std::size_t c = 0; c < channels_; ++c) {
    real total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += k.sum(hw, x.data() + (i * channels_ + c) * hw);
    const real mean = total / m;
    real sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const real* xi = x.data() + (i * channels_ + c) * hw;
      for (std::size_t j = 0; j < hw; ++j) sq += (xi[j] - mean) * (xi[j] - mean);
    }
    const real var = sq / m;
    const real inv = 1.0 / std::sqrt(var + kEps);
    inv_std_[c] = inv;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * channels_ + c) * hw;
      k.affine(hw, inv, -mean * inv, x.data() + off, normalized_.data() + off);
      k.affine(hw, gamma_.value[c], beta_.value[c], normalized_.data() + off, y.data() + off);
    }
    const real unbiased = m > 1.0 ? sq / (m - 1.0) : var;
    running_mean_.value[c] = (1.0 - kMomentum) * running_mean_.value[c] + kMomentum * mean;
    running_var_.value[c] = (1.0 - kMomentum) * running_var_.value[c] + kMomentum * unbiased;
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  require_shape(dy, normalized_.shape(), "batchnorm backward");
  const std::size_t n = dy.dim(0), hw = dy.dim(2) * dy.dim(3);
  const real m = static_cast<real>(n * hw);
  const auto& k = kernels::active();
  Tensor dx(dy.shape());
  for (std::size_t c = 0; c < channels_; ++c) {
    real sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * channels_ + c) * hw;
      sum_dy += k.sum(hw, dy.data() + off);
      sum_dy_xhat += k.dot(hw, dy.data() + off, normalized_.data() + off);
    }
    if (!gamma_.frozen) gamma_.grad[c] += sum_dy_xhat;
    if (!beta_.frozen) beta_.grad[c] += sum_dy;
    const real a = gamma_.value[c] * inv_std_[c];
    const real b = -a * sum_dy_xhat / m;
    const real shift = -a * sum_dy / m;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * channels_ + c) * hw;
      k.affine(hw, a, shift, dy.data() + off, dx.data() + off);
      k.axpy(hw, b, normalized_.data() + off, dx.data() + off);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------

Linear::Linear(std::string name, std::size_t in_features, std::size_t out_features)
    : weight_(make_parameter(name + ".weight", {out_features, in_features})),
      bias_(make_parameter(name + ".bias", {out_features})),
      in_(in_features),
      out_(out_features) {}

void Linear::init(std::mt19937_64& rng) {
  const real bound = 1.0 / std::sqrt(static_cast<real>(in_));
  std::uniform_real_distribution<real> dist(-bound, bound);
  for (real& v : weight_.value.values()) v = dist(rng);
  for (real& v : bias_.value.values()) v = dist(rng);
}

Tensor Linear::infer(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in_)
    throw ShapeError(weight_.name + ": expected [N," + std::to_string(in_) + "] input, got " +
                     shape_string(x.shape()));
  const std::size_t n = x.dim(0);
  Tensor y({n, out_});
  kernels::active().gemm_nt(n, out_, in_, x.data(), weight_.value.data(), y.data(), false);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < out_; ++j) y[i * out_ + j] += bias_.value[j];
  return y;
}

Tensor Linear::forward(const Tensor& x) {
  input_ = x;
  return infer(x);
}

Tensor Linear::backward(const Tensor& dy, bool need_input_grad) {
  const std::size_t n = input_.dim(0);
  require_shape(dy, {n, out_}, "linear backward");
  const auto& k = kernels::active();
  if (!weight_.frozen) k.gemm_tn(out_, in_, n, dy.data(), input_.data(), weight_.grad.data(), true);
  if (!bias_.frozen)
    for (std::size_t i = 0; i < n; ++i) k.axpy(out_, 1.0, dy.data() + i * out_, bias_.grad.data());
  Tensor dx;
  if (need_input_grad) {
    dx = Tensor({n, in_});
    k.gemm_nn(n, in_, out_, dy.data(), weight_.value.data(), dx.data(), false);
  }
  return dx;
}

// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x) {
  Tensor y(x.shape());
  kernels::active().relu_forward(x.size(), x.data(), y.data());
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  Tensor dx(x.shape());
  kernels::active().relu_backward(x.size(), x.data(), dy.data(), dx.data());
  return dx;
}

}  // namespace meal::nets
