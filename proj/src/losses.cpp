#include "meal/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "meal/error.hpp"

namespace meal::losses {
namespace {

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw ShapeError(std::string(what) + ": expected [N,C], got " + shape_string(t.shape()));
}

void require_pair(const Tensor& teacher, const Tensor& student) {
  require_matrix(teacher, "teacher probabilities");
  require_matrix(student, "student logits");
  if (teacher.shape() != student.shape())
    throw ShapeError("teacher " + shape_string(teacher.shape()) + " and student " +
                     shape_string(student.shape()) + " shapes differ");
  if (teacher.dim(0) == 0) throw ShapeError("empty batch");
}

[[noreturn]] void throw_underflow(real teacher_mass) {
  throw NumericalError("student softmax is exactly 0 where teacher mass is " +
                       std::to_string(teacher_mass) + " (infinite loss)");
}

// Cross-entropy core shared by ce_loss and kl_loss. Returns -sum p log q summed over the batch.
real cross_entropy_sum(const Tensor& p, const Tensor& log_q) {
  real total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (std::exp(log_q[i]) == 0.0) throw_underflow(p[i]);
    total -= p[i] * log_q[i];
  }
  return total;
}

// d/dz of mean_i -sum_c p_ic log softmax(z_i)_c  =  (softmax(z) * sum_c p - p) / N
Tensor soft_target_grad(const Tensor& p, const Tensor& q) {
  const std::size_t n = p.dim(0), c = p.dim(1);
  Tensor g(p.shape());
  for (std::size_t i = 0; i < n; ++i) {
    real mass = 0.0;
    for (std::size_t j = 0; j < c; ++j) mass += p[i * c + j];
    for (std::size_t j = 0; j < c; ++j)
      g[i * c + j] = (q[i * c + j] * mass - p[i * c + j]) / static_cast<real>(n);
  }
  return g;
}

}  // namespace

Tensor log_softmax(const Tensor& logits) {
  require_matrix(logits, "logits");
  require_finite(logits.values(), "logits");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const real* z = logits.data() + i * c;
    const real mx = *std::max_element(z, z + c);
    real s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(z[j] - mx);
    const real lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = z[j] - lse;
  }
  return out;
}

Tensor softmax(const Tensor& logits) {
  Tensor out = log_softmax(logits);
  for (real& v : out.values()) v = std::exp(v);
  return out;
}

real mean_entropy(const Tensor& probs) {
  require_matrix(probs, "probabilities");
  real h = 0.0;
  for (real p : probs.values())
    if (p > 0.0) h -= p * std::log(p);
  return h / static_cast<real>(probs.dim(0));
}

LossWithGrad ce_loss(const Tensor& teacher_probs, const Tensor& student_logits) {
  require_pair(teacher_probs, student_logits);
  const Tensor log_q = log_softmax(student_logits);
  const std::size_t n = teacher_probs.dim(0);
  const real value = cross_entropy_sum(teacher_probs, log_q) / static_cast<real>(n);
  Tensor q = log_q;
  for (real& v : q.values()) v = std::exp(v);
  return {{value, n}, soft_target_grad(teacher_probs, q)};
}

LossWithGrad kl_loss(const Tensor& teacher_probs, const Tensor& student_logits) {
  require_pair(teacher_probs, student_logits);
  const Tensor log_q = log_softmax(student_logits);
  const std::size_t n = teacher_probs.dim(0);
  real total = 0.0;
  for (std::size_t i = 0; i < teacher_probs.size(); ++i) {
    const real p = teacher_probs[i];
    if (p == 0.0) continue;
    if (std::exp(log_q[i]) == 0.0) throw_underflow(p);
    total += p * (std::log(p) - log_q[i]);
  }
  Tensor q = log_q;
  for (real& v : q.values()) v = std::exp(v);
  return {{total / static_cast<real>(n), n}, soft_target_grad(teacher_probs, q)};
}

LossWithGrad bce_loss(std::span<const real> labels, std::span<const real> probs) {
  if (labels.size() != probs.size())
    throw ShapeError("bce: " + std::to_string(labels.size()) + " labels vs " +
                     std::to_string(probs.size()) + " probabilities");
  if (labels.empty()) throw ShapeError("bce: empty batch");
  const std::size_t n = labels.size();
  Tensor grad({n});
  real total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const real y = labels[i];
    if (y != 0.0 && y != 1.0) throw ShapeError("bce: labels must be 0 or 1");
    if (!std::isfinite(probs[i])) throw NumericalError("bce: non-finite probability");
    const real p = std::clamp(probs[i], kBceEpsilon, 1.0 - kBceEpsilon);
    total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    // Inside the clamp the derivative is the analytic one; outside it is flat.
    const bool clamped = probs[i] != p;
    grad[i] = clamped ? 0.0 : (-y / p + (1.0 - y) / (1.0 - p)) / static_cast<real>(n);
  }
  return {{total / static_cast<real>(n), n}, std::move(grad)};
}

LossWithGrad bce_with_logits(std::span<const real> labels, std::span<const real> logits) {
  if (labels.size() != logits.size())
    throw ShapeError("bce: " + std::to_string(labels.size()) + " labels vs " +
                     std::to_string(logits.size()) + " logits");
  std::vector<real> probs(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) throw NumericalError("bce: non-finite logit");
    probs[i] = sigmoid(logits[i]);
  }
  LossWithGrad out = bce_loss(labels, probs);
  for (std::size_t i = 0; i < probs.size(); ++i) out.grad[i] *= probs[i] * (1.0 - probs[i]);
  return out;
}

LossWithGrad hard_label_ce(std::span<const std::int32_t> labels, const Tensor& student_logits) {
  require_matrix(student_logits, "student logits");
  const std::size_t n = student_logits.dim(0), c = student_logits.dim(1);
  if (labels.size() != n)
    throw ShapeError("hard_label_ce: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  if (n == 0) throw ShapeError("empty batch");
  for (std::int32_t y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw ShapeError("hard_label_ce: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(c) + ")");
  const Tensor log_q = log_softmax(student_logits);
  Tensor grad(student_logits.shape());
  real total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total -= log_q[i * c + static_cast<std::size_t>(labels[i])];
    for (std::size_t j = 0; j < c; ++j) {
      const real target = j == static_cast<std::size_t>(labels[i]) ? 1.0 : 0.0;
      grad[i * c + j] = (std::exp(log_q[i * c + j]) - target) / static_cast<real>(n);
    }
  }
  return {{total / static_cast<real>(n), n}, std::move(grad)};
}

}  // namespace meal::losses
