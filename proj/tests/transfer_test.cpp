#include <cmath>
#include <random>

#include "doctest.h"
#include "meal/error.hpp"
#include "meal/transfer.hpp"
#include "oracles.hpp"

using namespace meal;
using namespace meal::transfer;

TEST_CASE("multilabel sigmoid CE closed forms and reduction") {
  const auto a = multilabel_sigmoid_ce(Tensor({1, 2}, {1, 0}), Tensor({1, 2}, {0, 0}));
  CHECK(a.loss.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const auto b = multilabel_sigmoid_ce(Tensor({1, 2}, {1, 0}), Tensor({1, 2}, {40, -40}));
  CHECK(b.loss.value < 1e-6);
  // C = 1 reduces to BCE on the sigmoid probability
  const Tensor y({3, 1}, {1, 0, 1}), z({3, 1}, {0.3, -1.2, 2.0});
  std::vector<real> p;
  for (real v : z.values()) p.push_back(losses::sigmoid(v));
  CHECK(multilabel_sigmoid_ce(y, z).loss.value ==
        doctest::Approx(losses::bce_loss(y.values(), p).loss.value).epsilon(1e-12));
  CHECK_THROWS_AS((void)multilabel_sigmoid_ce(Tensor({1, 2}), Tensor({1, 3})), ShapeError);
  CHECK_THROWS_AS((void)multilabel_sigmoid_ce(Tensor({1, 1}, {0.5}), Tensor({1, 1})), ConfigError);
}

TEST_CASE("multilabel sigmoid CE gradient") {
  std::mt19937_64 rng(1);
  std::normal_distribution<real> g(0.0, 2.0);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng() % 4, c = 1 + rng() % 6;
    Tensor y({n, c}), z({n, c});
    for (real& v : y.values()) v = static_cast<real>(rng() % 2);
    for (real& v : z.values()) v = g(rng);
    const auto r = multilabel_sigmoid_ce(y, z);
    const auto num = oracle::finite_difference(
        [&](const std::vector<real>& x) { return multilabel_sigmoid_ce(y, Tensor(z.shape(), x)).loss.value; },
        {z.values().begin(), z.values().end()});
    CHECK(oracle::relative_error({r.grad.values().begin(), r.grad.values().end()}, num) < 1e-4);
  }
}

namespace {

data::Dataset set(const std::string& name, data::Split split) {
  data::DatasetConfig c;
  c.name = name;
  c.resolution = 8;
  c.num_classes = 4;
  c.samples_per_class = 6;
  c.val_samples_per_class = 3;
  return data::load_dataset(c, split);
}

TransferConfig quick(Mode mode) {
  TransferConfig c = TransferConfig::defaults(mode);
  c.epochs = 2;
  c.batch_size = 8;
  return c;
}

}  // namespace

TEST_CASE("mode defaults") {
  CHECK(TransferConfig::defaults(Mode::finetune).lr == 0.01);
  CHECK(TransferConfig::defaults(Mode::linear_probe).lr == 0.1);
  const auto d = TransferConfig::defaults(Mode::finetune);
  CHECK(d.epochs == 200);
  CHECK(d.batch_size == 128);
  CHECK(d.momentum == 0.9);
  CHECK(d.weight_decay == 1e-4);
}

TEST_CASE("linear probe never writes the backbone") {
  const auto tr = set("synthetic-transfer", data::Split::train), va = set("synthetic-transfer", data::Split::val);
  const nets::Model init({std::string(nets::kResNetLite), 10, 8, nets::CapacityTier::student_tiny}, 5);
  const auto res = transfer_run(init, tr, va, {}, quick(Mode::linear_probe));
  const nets::Model after = ckpt::model_from(res.checkpoint);
  for (std::size_t i = 0; i < init.parameters().size(); ++i) {
    const auto* p = init.parameters()[i];
    if (init.is_head_parameter(p->name)) continue;
    CHECK(after.parameters()[i]->value == p->value);
  }
  for (std::size_t i = 0; i < init.buffers().size(); ++i) CHECK(after.buffers()[i]->value == init.buffers()[i]->value);
  CHECK(after.spec().num_classes == 4);

  const auto ft = transfer_run(init, tr, va, {}, quick(Mode::finetune));
  CHECK(ckpt::model_from(ft.checkpoint).parameters()[0]->value != init.parameters()[0]->value);
}

TEST_CASE("multi-label path and configuration errors") {
  const auto tr = set("synthetic-multilabel", data::Split::train), va = set("synthetic-multilabel", data::Split::val);
  const nets::Model init({std::string(nets::kResNetLite), 10, 8, nets::CapacityTier::student_tiny}, 5);
  auto cfg = quick(Mode::finetune);
  CHECK_THROWS_AS((void)transfer_run(init, tr, va, {}, cfg), ConfigError);
  cfg.objective = Objective::sigmoid_ce;
  const auto res = transfer_run(init, tr, va, {}, cfg);
  CHECK(res.final_accuracy >= 0.0);
  CHECK(res.final_accuracy <= 100.0);
  cfg.num_classes = 7;
  CHECK_THROWS_AS((void)transfer_run(init, tr, va, {}, cfg), ConfigError);
  const nets::Model wrong_res({std::string(nets::kResNetLite), 10, 12, nets::CapacityTier::student_tiny}, 5);
  CHECK_THROWS_AS((void)transfer_run(wrong_res, tr, va, {}, quick(Mode::finetune)), ConfigError);
}
