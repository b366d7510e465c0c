#include <random>
#include <sstream>

#include "doctest.h"
#include "meal/analysis.hpp"
#include "meal/error.hpp"
#include "meal/trainer.hpp"
#include "oracles.hpp"

using namespace meal;
using namespace meal::analysis;

TEST_CASE("classwise accuracy example and absent classes") {
  const std::vector<std::int32_t> labels{0, 0, 1, 1}, preds{0, 1, 1, 1};
  const auto r = classwise_accuracy(preds, labels, 3);
  CHECK(r.accuracy[0] == 50.0);
  CHECK(r.accuracy[1] == 100.0);
  CHECK(r.overall_top1 == 75.0);
  CHECK(r.absent[2]);
  CHECK(r.confusion[0][1] == 1);
  CHECK_THROWS_AS((void)classwise_accuracy(preds, std::vector<std::int32_t>{0}, 3), ShapeError);
  CHECK_THROWS_AS((void)classwise_accuracy(std::vector<std::int32_t>{3}, std::vector<std::int32_t>{0}, 3), ConfigError);
  const auto perfect = classwise_accuracy(labels, labels, 2);
  CHECK(perfect.accuracy == std::vector<real>{100.0, 100.0});
}

TEST_CASE("classwise accuracy agrees with brute-force counting") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t c = 2 + rng() % 9, n = 1 + rng() % 1000;
    std::vector<std::int32_t> y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<std::int32_t>(rng() % c);
      p[i] = rng() % 3 == 0 ? y[i] : static_cast<std::int32_t>(rng() % c);
    }
    const auto r = classwise_accuracy(p, y, c);
    real weighted = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      std::size_t count = 0, hit = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (y[i] == static_cast<std::int32_t>(k)) {
          ++count;
          hit += p[i] == y[i];
        }
      CHECK(r.counts[k] == count);
      CHECK(r.absent[k] == (count == 0));
      if (count) {
        CHECK(r.accuracy[k] == doctest::Approx(100.0 * hit / count));
        weighted += r.accuracy[k] * count;
      }
    }
    CHECK(r.overall_top1 == doctest::Approx(weighted / n));
  }
}

TEST_CASE("pair summary") {
  const std::vector<std::int32_t> labels{0, 0, 1, 1}, preds{1, 0, 0, 1};
  const auto s = pair_summary(classwise_accuracy(preds, labels, 2), 0, 1);
  CHECK(s.confused_a_as_b == 50.0);
  CHECK(s.confused_b_as_a == 50.0);
}

TEST_CASE("percentiles") {
  const std::vector<real> v{0, 1, 2, 3, 4};
  const auto p = percentiles_of(v);
  CHECK(p[2] == 2.0);
  CHECK(p[0] == doctest::Approx(0.4));
  const std::vector<real> k(7, 1.25);
  for (real x : percentiles_of(k)) CHECK(x == 1.25);
  CHECK_THROWS_AS((void)percentiles_of(std::vector<real>{}), ConfigError);

  std::mt19937_64 rng(2);
  std::normal_distribution<real> g;
  for (int t = 0; t < 100; ++t) {
    std::vector<real> x(1 + rng() % 500);
    for (real& e : x) e = g(rng);
    const auto got = percentiles_of(x);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(got[i] == doctest::Approx(oracle::percentile(x, kPercentiles[i])).epsilon(1e-12));
      if (i) CHECK(got[i - 1] <= got[i]);
    }
  }
}

TEST_CASE("histogram binning") {
  const std::vector<real> v{-1, -0.5, 0, 0.5, 1};
  const auto h = histogram_of("x", v, 2);
  CHECK(h.counts == std::vector<std::size_t>{2, 3});
  CHECK(h.edges == std::vector<real>{-1, 0, 1});
  const auto flat = histogram_of("c", std::vector<real>(9, 0.3), 4);
  std::size_t occupied = 0;
  for (auto c : flat.counts) occupied += c > 0;
  CHECK(occupied == 1);
  for (std::size_t i = 1; i < flat.edges.size(); ++i) CHECK(flat.edges[i] > flat.edges[i - 1]);
}

TEST_CASE("histograms conserve mass on every layer") {
  const nets::Model m({std::string(nets::kResNetLite), 10, 8, nets::CapacityTier::teacher_medium}, 3);
  const auto hs = weight_histogram(m, "all", 17);
  CHECK(hs.size() == m.parameters().size());
  for (std::size_t i = 0; i < hs.size(); ++i) {
    std::size_t total = 0;
    for (auto c : hs[i].counts) total += c;
    CHECK(total == m.parameters()[i]->value.size());
    for (std::size_t e = 1; e < hs[i].edges.size(); ++e) CHECK(hs[i].edges[e] > hs[i].edges[e - 1]);
  }
  CHECK_THROWS_AS((void)weight_histogram(m, "nope", 4), ConfigError);
}

TEST_CASE("layer selectors") {
  const nets::Model m({std::string(nets::kResNetLite), 10, 8, nets::CapacityTier::teacher_medium}, 3);
  CHECK(select_layers(m, "first") == std::vector<std::string>{"stem.conv.weight"});
  CHECK(select_layers(m, "middle").size() == 1);
  CHECK(select_layers(m, "conv").size() == m.conv_weight_names().size());
  CHECK(select_layers(m, "fc.*").size() == 2);
  CHECK(percentile_snapshot(m, "middle").layer == m.conv_anchor(nets::ConvAnchor::middle));
  CHECK_THROWS_AS((void)percentile_snapshot(m, "conv"), ConfigError);
}

TEST_CASE("embedding export") {
  const auto d = data::synthetic_dataset(6, 50, 1);
  const nets::Model m({std::string(nets::kResNetLite), 6, 16, nets::CapacityTier::student_tiny}, 2);
  const auto t = collect_embeddings(m, d, {}, {0, 1, 2, 3});
  CHECK(t.rows.size() == 200);
  for (const auto& r : t.rows) CHECK(r.size() == m.embedding_dim());
  std::ostringstream a, b;
  write_embeddings_csv(a, t);
  write_embeddings_csv(b, collect_embeddings(m, d, {}, {0, 1, 2, 3}));
  CHECK(a.str() == b.str());
  CHECK_THROWS_AS((void)collect_embeddings(m, d, {}, {7}), ConfigError);
  CHECK_THROWS_AS((void)collect_embeddings(m, d, {}, {}), ConfigError);
}

TEST_CASE("linear separability of Gaussian clusters") {
  EmbeddingTable t;
  std::mt19937_64 rng(4);
  std::normal_distribution<real> g;
  for (int i = 0; i < 200; ++i) {
    const std::int32_t c = (i / 2) % 2;
    t.classes.push_back(c);
    t.rows.push_back({g(rng) + (c ? 4.0 : -4.0), g(rng)});
  }
  CHECK(linear_separability(t) == 100.0);
  for (auto& r : t.rows) r[0] = g(rng);
  CHECK(linear_separability(t) < 75.0);
}

TEST_CASE("compare_curves") {
  std::vector<train::MetricsRecord> a(3);
  for (std::size_t i = 0; i < 3; ++i) {
    a[i].epoch = i + 1;
    a[i].val_top1 = 50.0 + i;
    a[i].val_top5 = 80.0 + i;
    a[i].train_top1 = 60.0 + 2 * i;
  }
  const auto same = compare_curves(a, a);
  CHECK(same.final_top1_delta == 0.0);
  CHECK(same.best_top5_delta == 0.0);
  CHECK(*same.final_gap_a == *same.final_gap_b);
  auto b = a;
  b.erase(b.begin());
  for (auto& r : b) r.val_top1 += 1.0;
  const auto cmp = compare_curves(a, b);
  CHECK(cmp.rows.size() == 2);
  CHECK(cmp.dropped_epochs == 1);
  CHECK(cmp.final_top1_delta == doctest::Approx(1.0));
  std::vector<train::MetricsRecord> disjoint(1);
  disjoint[0].epoch = 9;
  CHECK_THROWS_AS((void)compare_curves(a, disjoint), ConfigError);
}
