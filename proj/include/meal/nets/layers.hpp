#pragma once

// Building blocks with explicit forward/backward passes.
//
// infer() is const and keeps no state, so an inference-mode model can be
// shared across threads. forward() is the training path: it caches what
// backward() needs and uses batch statistics in BatchNorm2d.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "meal/tensor.hpp"

namespace meal::nets {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool frozen = false;
};

/// Named state that is saved with the model but not optimized.
struct Buffer {
  std::string name;
  Tensor value;
};

using ParameterVisitor = std::function<void(Parameter&)>;
using BufferVisitor = std::function<void(Buffer&)>;

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride, std::size_t padding);

  void init(std::mt19937_64& rng);
  [[nodiscard]] Tensor infer(const Tensor& x) const;
  Tensor forward(const Tensor& x);
  /// Returns dL/dx, or an empty tensor when `need_input_grad` is false.
  Tensor backward(const Tensor& dy, bool need_input_grad = true);

  void visit(const ParameterVisitor& f) { f(weight_); }
  [[nodiscard]] const Parameter& weight() const { return weight_; }
  [[nodiscard]] std::size_t out_size(std::size_t in) const {
    return (in + 2 * padding_ - kernel_) / stride_ + 1;
  }

 private:
  Parameter weight_;  // [out, in * k * k]
  std::size_t in_ = 0, out_ = 0, kernel_ = 0, stride_ = 1, padding_ = 0;
  Tensor input_;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(std::string name, std::size_t channels);

  [[nodiscard]] Tensor infer(const Tensor& x) const;
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

  void visit(const ParameterVisitor& f) {
    f(gamma_);
    f(beta_);
  }
  void visit_buffers(const BufferVisitor& f) {
    f(running_mean_);
    f(running_var_);
  }

  static constexpr real kEps = 1e-5;
  static constexpr real kMomentum = 0.1;

 private:
  Parameter gamma_, beta_;
  Buffer running_mean_, running_var_;
  std::size_t channels_ = 0;
  Tensor normalized_;
  std::vector<real> inv_std_;
};

class Linear {
 public:
  Linear() = default;
  Linear(std::string name, std::size_t in_features, std::size_t out_features);

  void init(std::mt19937_64& rng);
  [[nodiscard]] Tensor infer(const Tensor& x) const;
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy, bool need_input_grad = true);

  void visit(const ParameterVisitor& f) {
    f(weight_);
    f(bias_);
  }
  [[nodiscard]] std::size_t in_features() const { return in_; }
  [[nodiscard]] std::size_t out_features() const { return out_; }
  [[nodiscard]] const Parameter& weight() const { return weight_; }

 private:
  Parameter weight_;  // [out, in]
  Parameter bias_;    // [out]
  std::size_t in_ = 0, out_ = 0;
  Tensor input_;
};

[[nodiscard]] Tensor relu(const Tensor& x);
/// dL/dx of relu at pre-activation `x`.
[[nodiscard]] Tensor relu_backward(const Tensor& x, const Tensor& dy);

}  // namespace meal::nets
