#include <cmath>
#include <random>

#include "doctest.h"
#include "meal/discriminator.hpp"
#include "meal/error.hpp"
#include "oracles.hpp"

using namespace meal;
using namespace meal::disc;

namespace {

Tensor gaussian(std::size_t n, std::size_t d, real mean, std::mt19937_64& rng, real sd = 1.0) {
  std::normal_distribution<real> g(mean, sd);
  Tensor t({n, d});
  for (real& v : t.values()) v = g(rng);
  return t;
}

/// Zeroes the last layer and sets its bias so that f(x) = b for every input.
void set_constant_output(Discriminator& d, real b) {
  for (nets::Parameter* p : d.parameters()) {
    if (p->name == "disc.fc3.weight") p->value.fill(0.0);
    if (p->name == "disc.fc3.bias") p->value.fill(b);
  }
}

}  // namespace

TEST_CASE("three affine layers, logistic output") {
  Discriminator d({10, {128, 64}, true}, 1);
  CHECK(d.parameters().size() == 6);
  std::mt19937_64 rng(2);
  const Tensor x = gaussian(7, 10, 0.0, rng);
  set_constant_output(d, 0.0);
  const Tensor half = d.prob(x);
  CHECK(half.size() == 7);
  for (real p : half.values()) CHECK(p == 0.5);
  set_constant_output(d, std::log(3.0));
  const Tensor three_quarters = discriminator_prob(d, x);
  for (real p : three_quarters.values()) CHECK(p == doctest::Approx(0.75).epsilon(1e-12));
  CHECK_THROWS_AS((void)d.prob(gaussian(2, 9, 0.0, rng)), ShapeError);
  CHECK_THROWS_AS(Discriminator({10, {0, 64}, true}, 1), ConfigError);
}

TEST_CASE("adversarial loss closed forms") {
  Discriminator d({4, {8, 8}, true}, 3);
  std::mt19937_64 rng(4);
  const Tensor z = gaussian(5, 4, 0.0, rng);
  set_constant_output(d, 0.0);
  CHECK(adversarial_student_loss(d, z).loss.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  set_constant_output(d, 40.0);
  CHECK(adversarial_student_loss(d, z).loss.value < 1e-6);
}

TEST_CASE("adversarial loss leaves the discriminator untouched") {
  Discriminator d({4, {8, 8}, true}, 5);
  std::mt19937_64 rng(6);
  const Tensor z = gaussian(5, 4, 0.0, rng);
  const Discriminator before = d;
  (void)adversarial_student_loss(d, z);
  for (std::size_t i = 0; i < d.parameters().size(); ++i) {
    CHECK(d.parameters()[i]->value == before.parameters()[i]->value);
    CHECK(d.parameters()[i]->grad == before.parameters()[i]->grad);
  }
}

TEST_CASE("gradients match central finite differences") {
  std::mt19937_64 rng(7);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Discriminator d({5, {6, 4}, true}, 100 + trial);
    const Tensor teacher = gaussian(3, 5, 0.5, rng, 2.0);
    const Tensor student = gaussian(3, 5, -0.5, rng, 2.0);

    // parameter gradients of the discriminator loss
    (void)d.compute_gradients(teacher, student);
    for (nets::Parameter* p : d.parameters()) {
      const std::vector<real> analytic(p->grad.values().begin(), p->grad.values().end());
      auto f = [&](const std::vector<real>& w) {
        Discriminator probe = d;
        for (nets::Parameter* q : probe.parameters())
          if (q->name == p->name) std::copy(w.begin(), w.end(), q->value.data());
        return probe.compute_gradients(teacher, student).value;
      };
      const auto numeric = oracle::finite_difference(f, {p->value.values().begin(), p->value.values().end()});
      CHECK(oracle::relative_error(analytic, numeric, 1e-8) < 1e-4);
    }

    // input gradient of the student-side objective
    const auto adv = adversarial_student_loss(d, student);
    auto g = [&](const std::vector<real>& v) {
      return adversarial_student_loss(d, Tensor(student.shape(), v)).loss.value;
    };
    const auto numeric = oracle::finite_difference(g, {student.values().begin(), student.values().end()});
    CHECK(oracle::relative_error({adv.grad.values().begin(), adv.grad.values().end()}, numeric, 1e-8) < 1e-4);
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("identical teacher and student inputs: loss stays near ln 2") {
  Discriminator d({6, {16, 16}, true}, 8);
  optim::Sgd opt;
  std::mt19937_64 rng(9);
  real last = 0;
  for (int step = 0; step < 200; ++step) {
    const Tensor x = gaussian(32, 6, 0.0, rng);
    last = discriminator_step(d, opt, 0.01, x, x).value;
  }
  CHECK(last == doctest::Approx(std::log(2.0)).epsilon(1e-2));
}

TEST_CASE("learns separable logit clusters") {
  Discriminator d({6, {128, 64}, true}, 10);
  optim::Sgd opt;
  std::mt19937_64 rng(11);
  real loss = 1.0;
  for (int step = 0; step < 300; ++step) {
    const Tensor t = gaussian(32, 6, 2.0, rng, 0.5);
    const Tensor s = gaussian(32, 6, -2.0, rng, 0.5);
    loss = discriminator_step(d, opt, 0.05, t, s).value;
  }
  CHECK(loss < 0.01);
  const Tensor t = gaussian(200, 6, 2.0, rng, 0.5);
  const Tensor s = gaussian(200, 6, -2.0, rng, 0.5);
  CHECK(discriminator_accuracy(d, t, s) == 1.0);
}
