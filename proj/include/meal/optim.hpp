#pragma once

#include <map>
#include <string>
#include <vector>

#include "meal/nets/layers.hpp"
#include "meal/tensor.hpp"

namespace meal::optim {

struct SgdOptions {
  real momentum = 0.9;
  real weight_decay = 0.0;
};

/// Momentum SGD with coupled weight decay. Velocity buffers are keyed by
/// parameter name and created on first use; frozen parameters are skipped.
class Sgd {
 public:
  Sgd() = default;
  explicit Sgd(SgdOptions options) : options_(options) {}

  void step(const std::vector<nets::Parameter*>& params, real lr);

  [[nodiscard]] const SgdOptions& options() const { return options_; }
  [[nodiscard]] const std::map<std::string, Tensor>& velocity() const { return velocity_; }
  void set_velocity(std::map<std::string, Tensor> velocity) { velocity_ = std::move(velocity); }

 private:
  SgdOptions options_;
  std::map<std::string, Tensor> velocity_;
};

}  // namespace meal::optim
