#include "meal/discriminator.hpp"

#include <random>

#include "meal/error.hpp"

namespace meal::disc {

void DiscriminatorSpec::validate() const {
  if (input_dim < 1 || hidden_dims[0] < 1 || hidden_dims[1] < 1)
    throw ConfigError("discriminator widths must be positive");
}

Discriminator::Discriminator(DiscriminatorSpec spec, std::uint64_t seed)
    : spec_(spec),
      fc1_("disc.fc1", spec.input_dim, spec.hidden_dims[0]),
      fc2_("disc.fc2", spec.hidden_dims[0], spec.hidden_dims[1]),
      fc3_("disc.fc3", spec.hidden_dims[1], 1) {
  spec_.validate();
  std::mt19937_64 rng(seed);
  fc1_.init(rng);
  fc2_.init(rng);
  fc3_.init(rng);
}

void Discriminator::check_width(const Tensor& features) const {
  if (features.rank() != 2 || features.dim(1) != spec_.input_dim)
    throw ShapeError("discriminator expects [N," + std::to_string(spec_.input_dim) +
                     "] features, got " + shape_string(features.shape()));
}

Tensor Discriminator::scores(const Tensor& features) const {
  check_width(features);
  Tensor s = fc3_.infer(nets::relu(fc2_.infer(nets::relu(fc1_.infer(features)))));
  s.reshape({features.dim(0)});
  return s;
}

Tensor Discriminator::prob(const Tensor& features) const {
  Tensor s = scores(features);
  for (real& v : s.values()) v = losses::sigmoid(v);
  return s;
}

Tensor Discriminator::train_forward(const Tensor& features) {
  check_width(features);
  pre1_ = fc1_.forward(features);
  pre2_ = fc2_.forward(nets::relu(pre1_));
  Tensor s = fc3_.forward(nets::relu(pre2_));
  s.reshape({features.dim(0)});
  return s;
}

Tensor Discriminator::backward(const Tensor& grad_scores, bool param_grads) {
  std::vector<bool> saved;
  if (!param_grads) {
    for (nets::Parameter* p : parameters()) {
      saved.push_back(p->frozen);
      p->frozen = true;
    }
  }
  Tensor g = grad_scores;
  g.reshape({grad_scores.size(), 1});
  Tensor d2 = nets::relu_backward(pre2_, fc3_.backward(g));
  Tensor d1 = nets::relu_backward(pre1_, fc2_.backward(d2));
  Tensor dx = fc1_.backward(d1);
  if (!param_grads) {
    auto params = parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->frozen = saved[i];
  }
  return dx;
}

losses::LossValue Discriminator::compute_gradients(const Tensor& teacher_logits,
                                                   const Tensor& student_logits) {
  check_width(teacher_logits);
  check_width(student_logits);
  const std::size_t nt = teacher_logits.dim(0), ns = student_logits.dim(0);
  Tensor combined({nt + ns, spec_.input_dim});
  std::copy(teacher_logits.data(), teacher_logits.data() + teacher_logits.size(), combined.data());
  std::copy(student_logits.data(), student_logits.data() + student_logits.size(),
            combined.data() + teacher_logits.size());
  std::vector<real> labels(nt + ns, 0.0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(nt), 1.0);

  zero_grad();
  const Tensor s = train_forward(combined);
  auto bce = losses::bce_with_logits(labels, s.values());
  backward(bce.grad);
  return bce.loss;
}

std::vector<nets::Parameter*> Discriminator::parameters() {
  std::vector<nets::Parameter*> out;
  auto collect = [&](nets::Parameter& p) { out.push_back(&p); };
  fc1_.visit(collect);
  fc2_.visit(collect);
  fc3_.visit(collect);
  return out;
}

std::vector<const nets::Parameter*> Discriminator::parameters() const {
  std::vector<const nets::Parameter*> out;
  for (nets::Parameter* p : const_cast<Discriminator*>(this)->parameters()) out.push_back(p);
  return out;
}

void Discriminator::zero_grad() {
  for (nets::Parameter* p : parameters()) p->grad.fill(0.0);
}

Tensor discriminator_prob(const Discriminator& d, const Tensor& features) { return d.prob(features); }

losses::LossValue discriminator_step(Discriminator& d, optim::Sgd& optimizer, real lr,
                                     const Tensor& teacher_logits, const Tensor& student_logits) {
  const losses::LossValue loss = d.compute_gradients(teacher_logits, student_logits);
  optimizer.step(d.parameters(), lr);
  return loss;
}

losses::LossWithGrad adversarial_student_loss(const Discriminator& d, const Tensor& student_logits) {
  Discriminator work = d;
  const Tensor s = work.train_forward(student_logits);
  const std::vector<real> target(s.size(), 1.0);
  auto bce = losses::bce_with_logits(target, s.values());
  Tensor grad = work.backward(bce.grad, false);
  return {bce.loss, std::move(grad)};
}

real discriminator_accuracy(const Discriminator& d, const Tensor& teacher_logits,
                            const Tensor& student_logits) {
  const Tensor pt = d.prob(teacher_logits), ps = d.prob(student_logits);
  std::size_t correct = 0;
  for (real p : pt.values()) correct += p >= 0.5 ? 1 : 0;
  for (real p : ps.values()) correct += p < 0.5 ? 1 : 0;
  return static_cast<real>(correct) / static_cast<real>(pt.size() + ps.size());
}

}  // namespace meal::disc
