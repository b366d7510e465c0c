#pragma once

// Teacher-vs-student discriminator over final pre-softmax outputs: a
// three-layer perceptron f followed by the logistic function, trained with
// binary cross-entropy (teacher = 1, student = 0).

#include <array>
#include <cstdint>
#include <vector>

#include "meal/losses.hpp"
#include "meal/nets/layers.hpp"
#include "meal/optim.hpp"

namespace meal::disc {

struct DiscriminatorSpec {
  std::size_t input_dim = 10;
  std::array<std::size_t, 2> hidden_dims{128, 64};
  bool enabled = true;

  void validate() const;
  bool operator==(const DiscriminatorSpec&) const = default;
};

class Discriminator {
 public:
  Discriminator(DiscriminatorSpec spec, std::uint64_t seed);

  [[nodiscard]] const DiscriminatorSpec& spec() const { return spec_; }

  /// f(x) for each row of [N, input_dim] features, as an [N] tensor.
  [[nodiscard]] Tensor scores(const Tensor& features) const;
  /// sigma(f(x)) in (0, 1).
  [[nodiscard]] Tensor prob(const Tensor& features) const;

  /// Training forward (caches activations), returns [N] scores.
  Tensor train_forward(const Tensor& features);
  /// Backward of the last train_forward(); accumulates parameter gradients
  /// unless `param_grads` is false, and returns dL/dfeatures.
  Tensor backward(const Tensor& grad_scores, bool param_grads = true);

  /// BCE of the combined batch labeled teacher = 1 / student = 0. Parameter
  /// gradients are reset and then filled for this loss.
  losses::LossValue compute_gradients(const Tensor& teacher_logits, const Tensor& student_logits);

  [[nodiscard]] std::vector<nets::Parameter*> parameters();
  [[nodiscard]] std::vector<const nets::Parameter*> parameters() const;
  void zero_grad();

 private:
  void check_width(const Tensor& features) const;

  DiscriminatorSpec spec_;
  nets::Linear fc1_, fc2_, fc3_;
  Tensor pre1_, pre2_;
};

[[nodiscard]] Tensor discriminator_prob(const Discriminator& d, const Tensor& features);

/// One SGD step on the discriminator. Inputs are detached copies of the teacher
/// and student logits; the student is never touched here.
losses::LossValue discriminator_step(Discriminator& d, optim::Sgd& optimizer, real lr,
                                     const Tensor& teacher_logits, const Tensor& student_logits);

/// Non-saturating student objective -log sigma(f(z)) (BCE against label 1),
/// with its gradient w.r.t. the student logits. The discriminator is unchanged.
[[nodiscard]] losses::LossWithGrad adversarial_student_loss(const Discriminator& d,
                                                            const Tensor& student_logits);

/// Fraction of rows classified correctly at threshold 0.5.
[[nodiscard]] real discriminator_accuracy(const Discriminator& d, const Tensor& teacher_logits,
                                          const Tensor& student_logits);

}  // namespace meal::disc
