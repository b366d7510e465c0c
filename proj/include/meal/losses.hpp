#pragma once

// Distillation objectives. All losses are in nats and averaged over the batch.
// Each returns the loss value together with its gradient w.r.t. the input the
// student (or discriminator) controls.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "meal/tensor.hpp"

namespace meal::losses {

struct LossValue {
  real value = 0.0;
  std::size_t batch_size = 0;
};

struct LossWithGrad {
  LossValue loss;
  Tensor grad;  // same shape as the differentiated input
};

/// Numerical floor used by bce_loss: probabilities are clamped to [eps, 1 - eps].
inline constexpr real kBceEpsilon = 1e-7;

/// Row-wise softmax of [N,C] logits (temperature 1). Throws NumericalError on non-finite logits.
[[nodiscard]] Tensor softmax(const Tensor& logits);
/// Row-wise log-softmax, computed stably.
[[nodiscard]] Tensor log_softmax(const Tensor& logits);

/// Per-row Shannon entropy (nats) of [N,C] probabilities, averaged over rows.
[[nodiscard]] real mean_entropy(const Tensor& probs);

/// mean_i sum_c p log(p / softmax(z)); zero-mass teacher entries contribute 0.
[[nodiscard]] LossWithGrad kl_loss(const Tensor& teacher_probs, const Tensor& student_logits);
/// mean_i -sum_c p log softmax(z).
[[nodiscard]] LossWithGrad ce_loss(const Tensor& teacher_probs, const Tensor& student_logits);
/// mean_i -[y log p + (1-y) log(1-p)], gradient w.r.t. p.
[[nodiscard]] LossWithGrad bce_loss(std::span<const real> labels, std::span<const real> probs);
/// bce on sigmoid(logit), gradient w.r.t. the logit. Same clamping as bce_loss.
[[nodiscard]] LossWithGrad bce_with_logits(std::span<const real> labels,
                                           std::span<const real> logits);
/// Softmax cross-entropy against class indices.
[[nodiscard]] LossWithGrad hard_label_ce(std::span<const std::int32_t> labels,
                                         const Tensor& student_logits);

[[nodiscard]] inline real sigmoid(real x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace meal::losses
