#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "meal/checkpoint.hpp"
#include "meal/error.hpp"

using namespace meal;

TEST_CASE("bundle round-trips bit-exactly") {
  const auto path = std::filesystem::temp_directory_path() / "meal_ckpt_test.ckpt";
  nets::ModelSpec spec{std::string(nets::kResNetLite), 5, 8, nets::CapacityTier::student_tiny};
  nets::Model m(spec, 3);
  auto b = ckpt::capture(m, {}, "distill");
  b.epoch = 7;
  b.config_fingerprint = 0xdeadbeefcafef00dULL;
  b.rng_state = "1 2 3";
  b.kernel_backend = "avx2";
  b.reference_top1 = 12.5;
  b.optimizer_velocity["fc.weight"] = Tensor({2}, {1.0 / 3.0, -0.0});
  disc::Discriminator d({5, {8, 4}, true}, 1);
  optim::Sgd opt;
  b.discriminator = ckpt::capture_discriminator(d, opt);
  ckpt::save(b, path);
  const auto back = ckpt::load(path);
  CHECK(back == b);
  CHECK(std::signbit(back.optimizer_velocity.at("fc.weight")[1]));

  nets::Model restored = ckpt::model_from(back);
  CHECK(ckpt::capture_weights(restored) == ckpt::capture_weights(m));
  disc::Discriminator d2({5, {8, 4}, true}, 99);
  optim::Sgd opt2;
  ckpt::restore_discriminator(d2, opt2, *back.discriminator);
  CHECK(d2.parameters()[0]->value == d.parameters()[0]->value);
  std::filesystem::remove(path);
}

TEST_CASE("restore rejects mismatched weights") {
  nets::ModelSpec a{std::string(nets::kResNetLite), 5, 8, nets::CapacityTier::student_tiny};
  nets::ModelSpec b = a;
  b.num_classes = 6;
  nets::Model ma(a, 1), mb(b, 1);
  CHECK_THROWS_AS(ckpt::restore_weights(mb, ckpt::capture_weights(ma)), ShapeError);
  auto w = ckpt::capture_weights(ma);
  w.pop_back();
  CHECK_THROWS_AS(ckpt::restore_weights(ma, w), ConfigError);
}

TEST_CASE("unreadable files are IoErrors") {
  CHECK_THROWS_AS((void)ckpt::load("/nonexistent/x.ckpt"), IoError);
  const auto path = std::filesystem::temp_directory_path() / "meal_ckpt_garbage.ckpt";
  std::ofstream(path) << "not cbor";
  CHECK_THROWS_AS((void)ckpt::load(path), IoError);
  std::filesystem::remove(path);
}
