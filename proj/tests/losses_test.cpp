#include <cmath>
#include <random>

#include "doctest.h"
#include "meal/error.hpp"
#include "meal/losses.hpp"
#include "oracles.hpp"

using namespace meal;
using namespace meal::losses;

namespace {

Tensor row(std::vector<double> v) {
  const std::size_t c = v.size();
  return Tensor({1, c}, std::move(v));
}

Tensor logits_of(const std::vector<double>& probs) {
  std::vector<double> z(probs.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = std::log(probs[i]);
  return row(z);
}

}  // namespace

TEST_CASE("softmax closed forms") {
  Tensor p = softmax(row({0.0, 0.0}));
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.5));
  p = softmax(row({std::log(3.0), 0.0}));
  CHECK(p[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK_THROWS_AS(softmax(row({NAN, 0.0})), NumericalError);
}

TEST_CASE("kl_loss examples") {
  CHECK(kl_loss(row({0.3, 0.7}), logits_of({0.3, 0.7})).loss.value == doctest::Approx(0.0).epsilon(1e-7));
  // 0.5 ln(0.5/0.25) + 0.5 ln(0.5/0.75)
  const double expected = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
  const auto kl = kl_loss(row({0.5, 0.5}), logits_of({0.25, 0.75}));
  CHECK(kl.loss.value == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::abs(kl.loss.value - 0.1438) < 1e-3);
  CHECK(kl.loss.batch_size == 1);
}

TEST_CASE("ce_loss examples") {
  const auto ce = ce_loss(row({0.5, 0.5}), logits_of({0.25, 0.75}));
  CHECK(std::abs(ce.loss.value - 0.8370) < 1e-3);
  CHECK(ce.loss.value == doctest::Approx(-(0.5 * std::log(0.25) + 0.5 * std::log(0.75))).epsilon(1e-12));
  for (std::size_t c : {2u, 5u, 10u}) {
    const auto u = ce_loss(row(std::vector<double>(c, 1.0 / c)), row(std::vector<double>(c, 0.3)));
    CHECK(u.loss.value == doctest::Approx(std::log(static_cast<double>(c))).epsilon(1e-12));
  }
}

TEST_CASE("zero teacher mass contributes nothing; student underflow is an error") {
  const auto kl = kl_loss(row({1.0, 0.0}), row({5.0, 1.0}));
  CHECK(std::isfinite(kl.loss.value));
  CHECK_THROWS_AS(kl_loss(row({0.5, 0.5}), row({0.0, -2000.0})), NumericalError);
  CHECK_THROWS_AS(ce_loss(row({0.5, 0.5}), row({0.0, -2000.0})), NumericalError);
  // the same extreme logit is fine where the teacher puts no mass
  CHECK_NOTHROW(ce_loss(row({1.0, 0.0}), row({0.0, -2000.0})));
}

TEST_CASE("shape mismatch") {
  CHECK_THROWS_AS(kl_loss(row({0.5, 0.5}), row({0.0, 0.0, 0.0})), ShapeError);
  CHECK_THROWS_AS(ce_loss(Tensor({2, 2}, 0.25), row({0.0, 0.0})), ShapeError);
  const std::vector<double> y{1.0}, p{0.5, 0.5};
  CHECK_THROWS_AS(bce_loss(y, p), ShapeError);
}

TEST_CASE("ce minus teacher entropy equals kl; gradients coincide") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d(0.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 4, c = 2 + trial % 9;
    Tensor p({n, c}), z({n, c});
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = oracle::random_simplex(rng, c, 0.5);
      std::copy(s.begin(), s.end(), p.data() + i * c);
    }
    for (double& v : z.values()) v = d(rng);
    const auto kl = kl_loss(p, z), ce = ce_loss(p, z);
    double h = 0;
    for (std::size_t i = 0; i < n; ++i) h += oracle::entropy({p.row(i).begin(), p.row(i).end()});
    h /= static_cast<double>(n);
    CHECK(std::abs(ce.loss.value - kl.loss.value - h) < 1e-6);
    CHECK(kl.loss.value >= -1e-9);
    CHECK(oracle::relative_error(kl.grad.storage(), ce.grad.storage()) < 1e-7);
  }
}

TEST_CASE("soft-target gradients match finite differences") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> d;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3, c = 6;
    Tensor p({n, c}), z({n, c});
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = oracle::random_simplex(rng, c);
      std::copy(s.begin(), s.end(), p.data() + i * c);
    }
    for (double& v : z.values()) v = d(rng);
    for (auto fn : {&kl_loss, &ce_loss}) {
      const auto analytic = fn(p, z).grad.storage();
      const auto numeric = oracle::finite_difference(
          [&](const std::vector<double>& x) { return fn(p, Tensor(z.shape(), x)).loss.value; },
          z.storage());
      CHECK(oracle::relative_error(analytic, numeric) < 1e-4);
    }
  }
}

TEST_CASE("bce_loss examples and clamping") {
  const double eps = kBceEpsilon;
  CHECK(bce_loss(std::vector<double>{1.0}, std::vector<double>{1.0 - eps}).loss.value < 1e-6);
  CHECK(bce_loss(std::vector<double>{1.0}, std::vector<double>{0.5}).loss.value == doctest::Approx(std::log(2.0)));
  CHECK(bce_loss(std::vector<double>{0.0}, std::vector<double>{0.5}).loss.value == doctest::Approx(std::log(2.0)));
  // exact 0 / 1 are clamped, not infinite
  const auto clamped = bce_loss(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0});
  CHECK(clamped.loss.value == doctest::Approx(-std::log(eps)).epsilon(1e-9));
  CHECK_THROWS_AS(bce_loss(std::vector<double>{0.5}, std::vector<double>{0.5}), ShapeError);
}

TEST_CASE("bce gradients match finite differences") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::normal_distribution<double> d(0.0, 3.0);
  std::bernoulli_distribution coin;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> y(7), p(7), z(7);
    for (std::size_t i = 0; i < 7; ++i) {
      y[i] = coin(rng) ? 1.0 : 0.0;
      p[i] = u(rng);
      z[i] = d(rng);
    }
    auto fp = [&](const std::vector<double>& x) { return bce_loss(y, x).loss.value; };
    CHECK(oracle::relative_error(bce_loss(y, p).grad.storage(), oracle::finite_difference(fp, p)) < 1e-4);
    auto fz = [&](const std::vector<double>& x) { return bce_with_logits(y, x).loss.value; };
    CHECK(oracle::relative_error(bce_with_logits(y, z).grad.storage(), oracle::finite_difference(fz, z)) < 1e-4);
  }
}

TEST_CASE("hard_label_ce") {
  const std::vector<std::int32_t> y{2};
  CHECK(hard_label_ce(y, row({-50, -50, 50, -50})).loss.value < 1e-12);
  CHECK(hard_label_ce(y, row(std::vector<double>(10, 0.0))).loss.value == doctest::Approx(std::log(10.0)));
  const std::vector<std::int32_t> bad{4};
  CHECK_THROWS_AS(hard_label_ce(bad, row({0, 0, 0, 0})), ShapeError);

  // reduces to ce_loss against the exact one-hot
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d;
  Tensor z({5, 4});
  for (double& v : z.values()) v = d(rng);
  const std::vector<std::int32_t> labels{0, 3, 1, 1, 2};
  Tensor onehot({5, 4}, 0.0);
  for (std::size_t i = 0; i < 5; ++i) onehot[i * 4 + labels[i]] = 1.0;
  const auto a = hard_label_ce(labels, z), b = ce_loss(onehot, z);
  CHECK(std::abs(a.loss.value - b.loss.value) < 1e-7);
  CHECK(oracle::relative_error(a.grad.storage(), b.grad.storage()) < 1e-12);
}
