#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "meal/error.hpp"
#include "meal/losses.hpp"
#include "meal/nets/model.hpp"
#include "oracles.hpp"

using namespace meal;
using namespace meal::nets;

namespace {

Tensor random_batch(std::size_t n, std::size_t res, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Tensor t({n, 3, res, res});
  for (double& v : t.values()) v = d(rng);
  return t;
}

ModelSpec spec_of(CapacityTier tier, std::size_t classes = 10, std::size_t res = 8) {
  ModelSpec s;
  s.num_classes = classes;
  s.input_resolution = res;
  s.capacity_tier = tier;
  return s;
}

}  // namespace

TEST_CASE("same spec and seed give bit-identical weights") {
  const auto spec = spec_of(CapacityTier::student_tiny);
  const Model a = build_model(spec, 7), b = build_model(spec, 7), c = build_model(spec, 8);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  REQUIRE(pa.size() == pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->name == pb[i]->name);
    CHECK(pa[i]->value == pb[i]->value);
    any_diff |= pa[i]->value != pc[i]->value;
  }
  CHECK(any_diff);
}

TEST_CASE("logits and embeddings have the contracted shapes") {
  const Model m = build_model(spec_of(CapacityTier::student_small, 10, 12), 1);
  const Tensor x = random_batch(4, 12, 3);
  const Tensor z = forward_logits(m, x);
  CHECK(z.shape() == std::vector<std::size_t>{4, 10});
  const Tensor e = forward_embedding(m, x);
  CHECK(e.dim(0) == 4);
  CHECK(e.dim(1) == m.embedding_dim());
  CHECK(m.embedding_dim() == m.head().in_features());

  const Tensor p = losses::softmax(z);
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0;
    for (double v : p.row(i)) s += v;
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("inference is repeatable") {
  const Model m = build_model(spec_of(CapacityTier::student_small), 2);
  const Tensor x = random_batch(3, 8, 9);
  CHECK(forward_logits(m, x) == forward_logits(m, x));
  CHECK(forward_embedding(m, x) == forward_embedding(m, x));
}

TEST_CASE("resolution mismatch is rejected, not resized") {
  const Model m = build_model(spec_of(CapacityTier::student_tiny, 10, 8), 2);
  CHECK_THROWS_AS((void)forward_logits(m, random_batch(2, 10, 1)), ShapeError);
  CHECK_THROWS_AS((void)forward_embedding(m, random_batch(2, 10, 1)), ShapeError);
}

TEST_CASE("spec validation") {
  ModelSpec s = spec_of(CapacityTier::student_tiny);
  s.name = "resnet-50";
  CHECK_THROWS_AS(build_model(s, 0), ConfigError);
  s = spec_of(CapacityTier::student_tiny, 1);
  CHECK_THROWS_AS(build_model(s, 0), ConfigError);
  s = spec_of(CapacityTier::student_tiny, 10, 7);
  CHECK_THROWS_AS(build_model(s, 0), ConfigError);
  CHECK(parse_tier("teacher-medium") == CapacityTier::teacher_medium);
  CHECK_FALSE(parse_tier("huge").has_value());
}

TEST_CASE("weight list names first, middle and last convolutions") {
  const Model m = build_model(spec_of(CapacityTier::teacher_medium), 0);
  const auto convs = m.conv_weight_names();
  std::set<std::string> names;
  for (const Parameter* p : m.parameters()) names.insert(p->name);
  for (auto anchor : {ConvAnchor::first, ConvAnchor::middle, ConvAnchor::last}) {
    const std::string n = m.conv_anchor(anchor);
    CHECK(names.count(n) == 1);
  }
  CHECK(m.conv_anchor(ConvAnchor::first) == convs.front());
  CHECK(m.conv_anchor(ConvAnchor::middle) == "stage2.block1.conv2.weight");
  CHECK(m.conv_anchor(ConvAnchor::last) == "stage3.block1.conv2.weight");
  // stable ordering
  const Model again = build_model(spec_of(CapacityTier::teacher_medium), 5);
  CHECK(again.conv_weight_names() == convs);
}

TEST_CASE("capacity ordering across tiers") {
  auto count = [](CapacityTier t) { return build_model(spec_of(t), 0).parameter_count(); };
  CHECK(count(CapacityTier::teacher_large) > count(CapacityTier::teacher_medium));
  CHECK(count(CapacityTier::teacher_medium) > count(CapacityTier::student_small));
  CHECK(count(CapacityTier::student_small) > count(CapacityTier::student_tiny));
}

TEST_CASE("training-mode backward matches finite differences") {
  // Loss = sum(logits * r) for a fixed random r; checked for a handful of weights in every tensor.
  Model m = build_model(spec_of(CapacityTier::student_tiny, 3, 8), 4);
  const Tensor x = random_batch(3, 8, 6);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d;
  Tensor r({3, 3});
  for (double& v : r.values()) v = d(rng);

  auto loss = [&](Model& model) {
    Model copy = model;  // keeps running statistics of `model` untouched
    const Tensor z = copy.train_forward(x);
    double s = 0;
    for (std::size_t i = 0; i < z.size(); ++i) s += z[i] * r[i];
    return s;
  };

  m.zero_grad();
  {
    Model work = m;
    work.train_forward(x);
    work.backward(r);
    auto params = work.parameters();
    auto base = m.parameters();
    for (std::size_t t = 0; t < params.size(); ++t) {
      CAPTURE(params[t]->name);
      std::vector<double> analytic, numeric;
      const std::size_t stride = std::max<std::size_t>(1, params[t]->value.size() / 5);
      for (std::size_t i = 0; i < params[t]->value.size(); i += stride) {
        const double orig = base[t]->value[i];
        const double h = 1e-7;  // small enough not to step across ReLU kinks
        base[t]->value[i] = orig + h;
        const double up = loss(m);
        base[t]->value[i] = orig - h;
        const double down = loss(m);
        base[t]->value[i] = orig;
        numeric.push_back((up - down) / (2 * h));
        analytic.push_back(params[t]->grad[i]);
      }
      CHECK(oracle::relative_error(analytic, numeric, 1e-6) < 1e-4);
    }
  }
}

TEST_CASE("train_forward updates running statistics, infer does not") {
  Model m = build_model(spec_of(CapacityTier::student_tiny), 4);
  const auto before = m.buffers().front()->value;
  (void)m.logits(random_batch(2, 8, 1));
  CHECK(m.buffers().front()->value == before);
  m.train_forward(random_batch(2, 8, 1));
  CHECK(m.buffers().front()->value != before);
}

TEST_CASE("head reset and backbone freezing") {
  Model m = build_model(spec_of(CapacityTier::student_tiny), 4);
  m.reset_head(4, 9);
  CHECK(m.spec().num_classes == 4);
  CHECK(forward_logits(m, random_batch(2, 8, 1)).dim(1) == 4);
  m.freeze_backbone(true);
  for (const Parameter* p : m.parameters()) CHECK(p->frozen == !m.is_head_parameter(p->name));
}
