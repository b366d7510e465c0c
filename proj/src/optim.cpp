#include "meal/optim.hpp"

#include "meal/error.hpp"
#include "meal/kernels/kernels.hpp"

namespace meal::optim {

void Sgd::step(const std::vector<nets::Parameter*>& params, real lr) {
  const auto& k = kernels::active();
  for (nets::Parameter* p : params) {
    if (p->frozen) continue;
    auto [it, inserted] = velocity_.try_emplace(p->name, p->value.shape(), 0.0);
    if (!inserted && it->second.shape() != p->value.shape())
      throw ShapeError("optimizer state for " + p->name + " has shape " +
                       shape_string(it->second.shape()));
    k.sgd_momentum(p->value.size(), lr, options_.momentum, options_.weight_decay, p->value.data(),
                   p->grad.data(), it->second.data());
  }
}

}  // namespace meal::optim
