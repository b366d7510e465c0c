#include "meal/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

#include "meal/error.hpp"
#include "meal/log.hpp"
#include "meal/losses.hpp"
#include "meal/trainer.hpp"

namespace meal::analysis {

namespace {

/// Shortest text that reads back to the same double.
std::string num(real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string pct(real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------

ClasswiseReport classwise_accuracy(std::span<const std::int32_t> predictions,
                                   std::span<const std::int32_t> labels, std::size_t num_classes) {
  if (predictions.size() != labels.size())
    throw ShapeError("classwise_accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  if (num_classes == 0) throw ConfigError("classwise_accuracy: num_classes must be positive");
  ClasswiseReport r;
  r.num_classes = num_classes;
  r.counts.assign(num_classes, 0);
  r.correct.assign(num_classes, 0);
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto y = labels[i], p = predictions[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes || p < 0 ||
        static_cast<std::size_t>(p) >= num_classes)
      throw ConfigError("classwise_accuracy: class index out of range at row " + std::to_string(i));
    ++r.counts[y];
    ++r.confusion[y][p];
    if (y == p) ++r.correct[y];
  }
  r.accuracy.assign(num_classes, 0.0);
  r.absent.assign(num_classes, false);
  std::size_t total_correct = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    total_correct += r.correct[c];
    if (r.counts[c] == 0) {
      r.absent[c] = true;
      continue;
    }
    r.accuracy[c] = 100.0 * static_cast<real>(r.correct[c]) / static_cast<real>(r.counts[c]);
  }
  r.overall_top1 = labels.empty() ? 0.0
                                  : 100.0 * static_cast<real>(total_correct) / static_cast<real>(labels.size());
  return r;
}

PairSummary pair_summary(const ClasswiseReport& r, std::int32_t a, std::int32_t b) {
  const auto in_range = [&](std::int32_t c) { return c >= 0 && static_cast<std::size_t>(c) < r.num_classes; };
  if (!in_range(a) || !in_range(b)) throw ConfigError("pair_summary: class out of range");
  PairSummary s{a, b, r.accuracy[a], r.accuracy[b], 0.0, 0.0};
  if (r.counts[a] > 0) s.confused_a_as_b = 100.0 * static_cast<real>(r.confusion[a][b]) / static_cast<real>(r.counts[a]);
  if (r.counts[b] > 0) s.confused_b_as_a = 100.0 * static_cast<real>(r.confusion[b][a]) / static_cast<real>(r.counts[b]);
  return s;
}

void write_classwise_csv(std::ostream& out, const ClasswiseReport& r,
                         const std::vector<std::pair<std::int32_t, std::int32_t>>& pairs) {
  out << "kind,class,count,correct,accuracy\n";
  for (std::size_t c = 0; c < r.num_classes; ++c)
    out << "class," << c << ',' << r.counts[c] << ',' << r.correct[c] << ','
        << (r.absent[c] ? std::string("absent") : pct(r.accuracy[c])) << '\n';
  out << "overall,," << std::accumulate(r.counts.begin(), r.counts.end(), std::size_t{0}) << ','
      << std::accumulate(r.correct.begin(), r.correct.end(), std::size_t{0}) << ',' << pct(r.overall_top1)
      << '\n';
  if (pairs.empty()) return;
  out << "pair,a,b,accuracy_a,accuracy_b,a_as_b,b_as_a\n";
  for (const auto& [a, b] : pairs) {
    const PairSummary s = pair_summary(r, a, b);
    out << "pair," << a << ',' << b << ',' << pct(s.accuracy_a) << ',' << pct(s.accuracy_b) << ','
        << pct(s.confused_a_as_b) << ',' << pct(s.confused_b_as_a) << '\n';
  }
}

// ---------------------------------------------------------------------------

std::array<real, 5> percentiles_of(std::span<const real> values) {
  if (values.empty()) throw ConfigError("percentiles of an empty tensor");
  std::vector<real> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  std::array<real, 5> out{};
  for (std::size_t i = 0; i < kPercentiles.size(); ++i) {
    const real pos = kPercentiles[i] / 100.0 * static_cast<real>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    out[i] = v[lo] + (pos - static_cast<real>(lo)) * (v[hi] - v[lo]);
  }
  return out;
}

std::vector<std::string> select_layers(const nets::Model& model, const std::string& selector) {
  std::vector<std::string> names;
  if (selector == "first") return {model.conv_anchor(nets::ConvAnchor::first)};
  if (selector == "middle") return {model.conv_anchor(nets::ConvAnchor::middle)};
  if (selector == "last") return {model.conv_anchor(nets::ConvAnchor::last)};
  if (selector == "conv") return model.conv_weight_names();
  const bool prefix = !selector.empty() && selector.back() == '*';
  const std::string stem = prefix ? selector.substr(0, selector.size() - 1) : selector;
  for (const nets::Parameter* p : model.parameters())
    if (selector == "all" || (prefix ? p->name.starts_with(stem) : p->name == selector))
      names.push_back(p->name);
  if (names.empty()) throw ConfigError("layer selector '" + selector + "' matches no parameter");
  return names;
}

namespace {

const nets::Parameter& find_parameter(const nets::Model& model, const std::string& name) {
  for (const nets::Parameter* p : model.parameters())
    if (p->name == name) return *p;
  throw ConfigError("no parameter named '" + name + "'");
}

}  // namespace

PercentileSnapshot percentile_snapshot(const nets::Model& model, const std::string& selector) {
  const auto names = select_layers(model, selector);
  if (names.size() != 1)
    throw ConfigError("percentile selector '" + selector + "' must match exactly one layer");
  const nets::Parameter& p = find_parameter(model, names.front());
  return {p.name, percentiles_of(p.value.values())};
}

WeightHistogram histogram_of(std::string layer, std::span<const real> values, std::size_t num_bins) {
  if (values.empty()) throw ConfigError("histogram of an empty tensor");
  if (num_bins == 0) throw ConfigError("histogram needs at least one bin");
  auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  real lo = *mn, hi = *mx;
  if (!(hi > lo)) {
    const real eps = std::max(std::abs(lo) * 1e-6, 1e-12);
    lo -= eps;
    hi += eps;
  }
  WeightHistogram h{std::move(layer), std::vector<real>(num_bins + 1), std::vector<std::size_t>(num_bins, 0)};
  const real width = (hi - lo) / static_cast<real>(num_bins);
  for (std::size_t i = 0; i <= num_bins; ++i) h.edges[i] = lo + width * static_cast<real>(i);
  h.edges.back() = hi;
  for (real v : values) {
    auto bin = static_cast<std::size_t>(std::floor((v - lo) / width));
    bin = std::min(bin, num_bins - 1);
    // keep the half-open convention exact against the stored edges
    while (bin > 0 && v < h.edges[bin]) --bin;
    while (bin + 1 < num_bins && v >= h.edges[bin + 1]) ++bin;
    ++h.counts[bin];
  }
  return h;
}

std::vector<WeightHistogram> weight_histogram(const nets::Model& model, const std::string& selector,
                                              std::size_t num_bins) {
  std::vector<WeightHistogram> out;
  for (const std::string& name : select_layers(model, selector))
    out.push_back(histogram_of(name, find_parameter(model, name).value.values(), num_bins));
  return out;
}

void write_histograms_csv(std::ostream& out, const std::vector<WeightHistogram>& hs) {
  out << "layer,bin,lower,upper,count\n";
  for (const auto& h : hs)
    for (std::size_t i = 0; i < h.counts.size(); ++i)
      out << h.layer << ',' << i << ',' << num(h.edges[i]) << ',' << num(h.edges[i + 1]) << ','
          << h.counts[i] << '\n';
}

// ---------------------------------------------------------------------------

EmbeddingTable collect_embeddings(const nets::Model& model, const data::Dataset& dataset,
                                  const data::Normalization& norm,
                                  const std::vector<std::int32_t>& classes) {
  if (classes.empty()) throw ConfigError("embedding export needs at least one class");
  for (auto c : classes)
    if (c < 0 || static_cast<std::size_t>(c) >= model.spec().num_classes)
      throw ConfigError("embedding export: unknown class " + std::to_string(c));
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (std::find(classes.begin(), classes.end(), dataset.labels[i]) != classes.end()) rows.push_back(i);
  EmbeddingTable t;
  const std::size_t res = model.spec().input_resolution;
  constexpr std::size_t kBatch = 256;
  for (std::size_t b = 0; b < rows.size(); b += kBatch) {
    const std::size_t e = std::min(rows.size(), b + kBatch);
    std::vector<Tensor> samples;
    for (std::size_t k = b; k < e; ++k) samples.push_back(data::transform_eval(dataset.images[rows[k]], res, norm));
    const Tensor emb = model.embedding(data::stack(samples));
    for (std::size_t k = b; k < e; ++k) {
      t.classes.push_back(dataset.labels[rows[k]]);
      const auto r = emb.row(k - b);
      t.rows.emplace_back(r.begin(), r.end());
    }
  }
  return t;
}

void write_embeddings_csv(std::ostream& out, const EmbeddingTable& t) {
  const std::size_t dim = t.rows.empty() ? 0 : t.rows.front().size();
  out << "class";
  for (std::size_t j = 0; j < dim; ++j) out << ",e" << j;
  out << '\n';
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    out << t.classes[i];
    for (real v : t.rows[i]) out << ',' << num(v);
    out << '\n';
  }
}

real linear_separability(const EmbeddingTable& t, std::uint64_t seed) {
  if (t.rows.size() < 4) throw ConfigError("linear_separability needs at least 4 rows");
  const std::size_t dim = t.rows.front().size();
  std::vector<std::int32_t> classes(t.classes);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  const std::size_t k = classes.size();
  if (k < 2) throw ConfigError("linear_separability needs two classes");
  std::map<std::int32_t, std::size_t> index;
  for (std::size_t i = 0; i < k; ++i) index[classes[i]] = i;

  // standardize with training-half statistics
  std::vector<real> mean(dim, 0.0), sd(dim, 0.0);
  std::size_t ntrain = 0;
  for (std::size_t i = 0; i < t.rows.size(); i += 2, ++ntrain)
    for (std::size_t j = 0; j < dim; ++j) mean[j] += t.rows[i][j];
  for (real& m : mean) m /= static_cast<real>(ntrain);
  for (std::size_t i = 0; i < t.rows.size(); i += 2)
    for (std::size_t j = 0; j < dim; ++j) sd[j] += (t.rows[i][j] - mean[j]) * (t.rows[i][j] - mean[j]);
  for (real& s : sd) s = std::sqrt(s / static_cast<real>(ntrain)) + 1e-8;
  auto feature = [&](std::size_t i) {
    std::vector<real> x(dim);
    for (std::size_t j = 0; j < dim; ++j) x[j] = (t.rows[i][j] - mean[j]) / sd[j];
    return x;
  };

  // multinomial logistic regression, full-batch gradient descent
  Tensor w({k, dim + 1});
  std::mt19937_64 rng(seed);
  std::normal_distribution<real> g(0.0, 0.01);
  for (real& v : w.values()) v = g(rng);
  const real lr = 0.5, l2 = 1e-3;
  for (int iter = 0; iter < 300; ++iter) {
    Tensor grad({k, dim + 1});
    for (std::size_t i = 0; i < t.rows.size(); i += 2) {
      const auto x = feature(i);
      std::vector<real> z(k);
      for (std::size_t c = 0; c < k; ++c) {
        z[c] = w[c * (dim + 1) + dim];
        for (std::size_t j = 0; j < dim; ++j) z[c] += w[c * (dim + 1) + j] * x[j];
      }
      const Tensor p = losses::softmax(Tensor({1, k}, z));
      const std::size_t y = index[t.classes[i]];
      for (std::size_t c = 0; c < k; ++c) {
        const real d = (p[c] - (c == y ? 1.0 : 0.0)) / static_cast<real>(ntrain);
        for (std::size_t j = 0; j < dim; ++j) grad[c * (dim + 1) + j] += d * x[j];
        grad[c * (dim + 1) + dim] += d;
      }
    }
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * (grad[i] + l2 * w[i]);
  }
  std::size_t correct = 0, held = 0;
  for (std::size_t i = 1; i < t.rows.size(); i += 2, ++held) {
    const auto x = feature(i);
    std::size_t best = 0;
    real best_z = -INFINITY;
    for (std::size_t c = 0; c < k; ++c) {
      real z = w[c * (dim + 1) + dim];
      for (std::size_t j = 0; j < dim; ++j) z += w[c * (dim + 1) + j] * x[j];
      if (z > best_z) {
        best_z = z;
        best = c;
      }
    }
    correct += best == index[t.classes[i]] ? 1 : 0;
  }
  return 100.0 * static_cast<real>(correct) / static_cast<real>(held);
}

// ---------------------------------------------------------------------------

CurveComparison compare_curves(const std::vector<train::MetricsRecord>& a,
                               const std::vector<train::MetricsRecord>& b) {
  std::map<std::size_t, const train::MetricsRecord*> by_epoch;
  for (const auto& r : b) by_epoch[r.epoch] = &r;
  CurveComparison cmp;
  std::size_t matched = 0;
  real best_a1 = -INFINITY, best_b1 = -INFINITY, best_a5 = -INFINITY, best_b5 = -INFINITY;
  for (const auto& ra : a) {
    auto it = by_epoch.find(ra.epoch);
    if (it == by_epoch.end()) continue;
    const auto& rb = *it->second;
    ++matched;
    CurveRow row{ra.epoch, ra.val_top1, rb.val_top1, ra.val_top5, rb.val_top5, std::nullopt, std::nullopt};
    if (ra.train_top1) row.a_gap = *ra.train_top1 - ra.val_top1;
    if (rb.train_top1) row.b_gap = *rb.train_top1 - rb.val_top1;
    cmp.rows.push_back(row);
    best_a1 = std::max(best_a1, ra.val_top1);
    best_b1 = std::max(best_b1, rb.val_top1);
    best_a5 = std::max(best_a5, ra.val_top5);
    best_b5 = std::max(best_b5, rb.val_top5);
  }
  cmp.dropped_epochs = a.size() + b.size() - 2 * matched;
  if (cmp.dropped_epochs > 0)
    log::warn("compare_curves: " + std::to_string(cmp.dropped_epochs) +
              " epochs present in only one run were dropped");
  if (cmp.rows.empty()) throw ConfigError("compare_curves: the runs share no epochs");
  std::sort(cmp.rows.begin(), cmp.rows.end(), [](const CurveRow& x, const CurveRow& y) { return x.epoch < y.epoch; });
  const CurveRow& last = cmp.rows.back();
  cmp.final_top1_delta = last.b_val_top1 - last.a_val_top1;
  cmp.final_top5_delta = last.b_val_top5 - last.a_val_top5;
  cmp.best_top1_delta = best_b1 - best_a1;
  cmp.best_top5_delta = best_b5 - best_a5;
  cmp.final_gap_a = last.a_gap;
  cmp.final_gap_b = last.b_gap;
  return cmp;
}

void write_comparison_csv(std::ostream& out, const CurveComparison& cmp) {
  auto opt = [](const std::optional<real>& v) { return v ? pct(*v) : std::string(); };
  out << "epoch,a_val_top1,b_val_top1,delta_top1,a_val_top5,b_val_top5,delta_top5,a_train_val_gap,b_train_val_gap\n";
  for (const auto& r : cmp.rows)
    out << r.epoch << ',' << pct(r.a_val_top1) << ',' << pct(r.b_val_top1) << ','
        << pct(r.b_val_top1 - r.a_val_top1) << ',' << pct(r.a_val_top5) << ',' << pct(r.b_val_top5) << ','
        << pct(r.b_val_top5 - r.a_val_top5) << ',' << opt(r.a_gap) << ',' << opt(r.b_gap) << '\n';
  out << "# final_top1_delta=" << pct(cmp.final_top1_delta) << " final_top5_delta=" << pct(cmp.final_top5_delta)
      << " best_top1_delta=" << pct(cmp.best_top1_delta) << " best_top5_delta=" << pct(cmp.best_top5_delta)
      << " final_gap_a=" << opt(cmp.final_gap_a) << " final_gap_b=" << opt(cmp.final_gap_b) << '\n';
}

void write_gap_csv(std::ostream& out, const GapReport& r) {
  out << "reference,reference_top1,student_top1,gap\n";
  for (const auto& [name, top1] : r.teachers)
    out << name << ',' << pct(top1) << ',' << pct(r.student_top1) << ',' << pct(top1 - r.student_top1) << '\n';
  out << "ensemble," << pct(r.ensemble_top1) << ',' << pct(r.student_top1) << ','
      << pct(r.ensemble_top1 - r.student_top1) << '\n';
}

void write_supervision_csv(std::ostream& out, const ensemble::SupervisionTable& t) {
  out << "class,count";
  for (std::size_t j = 0; j < t.num_classes; ++j) out << ",p" << j;
  out << '\n';
  for (std::size_t c = 0; c < t.num_classes; ++c) {
    out << c << ',' << t.counts[c];
    for (std::size_t j = 0; j < t.num_classes; ++j) out << ',' << (t.absent[c] ? std::string("absent") : num(t.rows[c][j]));
    out << '\n';
  }
}

}  // namespace meal::analysis
