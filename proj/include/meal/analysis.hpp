#pragma once

// Diagnostics over trained models and logged metrics. Every artifact is plain
// CSV or JSON so plots can be made with any external tool.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "meal/data.hpp"
#include "meal/ensemble.hpp"
#include "meal/nets/model.hpp"

namespace meal::train {
struct MetricsRecord;
}

namespace meal::analysis {

// ---------------------------------------------------------------------------
// Class-wise accuracy

struct ClasswiseReport {
  std::size_t num_classes = 0;
  std::vector<std::size_t> counts;
  std::vector<std::size_t> correct;
  /// Percent per class; meaningless where absent[c].
  std::vector<real> accuracy;
  std::vector<bool> absent;
  /// confusion[label][prediction]
  std::vector<std::vector<std::size_t>> confusion;
  real overall_top1 = 0.0;
};

[[nodiscard]] ClasswiseReport classwise_accuracy(std::span<const std::int32_t> predictions,
                                                 std::span<const std::int32_t> labels,
                                                 std::size_t num_classes);

struct PairSummary {
  std::int32_t a = 0, b = 0;
  real accuracy_a = 0.0, accuracy_b = 0.0;
  /// Share of class-a samples predicted as b, and vice versa (percent).
  real confused_a_as_b = 0.0, confused_b_as_a = 0.0;
};

[[nodiscard]] PairSummary pair_summary(const ClasswiseReport& report, std::int32_t a, std::int32_t b);

/// Per-class rows followed by one row per designated pair.
void write_classwise_csv(std::ostream& out, const ClasswiseReport& report,
                         const std::vector<std::pair<std::int32_t, std::int32_t>>& pairs);

// ---------------------------------------------------------------------------
// Weight statistics

inline constexpr std::array<real, 5> kPercentiles{10, 25, 50, 75, 90};

struct PercentileSnapshot {
  std::string layer;
  std::array<real, 5> values{};
};

/// Linear interpolation between order statistics (fractional index q/100 * (n-1)).
[[nodiscard]] std::array<real, 5> percentiles_of(std::span<const real> values);

/// Parameter names picked by `selector`: an exact name, one of the anchors
/// "first" / "middle" / "last", "conv" (every convolution), "all", or a prefix
/// ending in '*'. Throws ConfigError when nothing matches.
[[nodiscard]] std::vector<std::string> select_layers(const nets::Model& model,
                                                     const std::string& selector);

[[nodiscard]] PercentileSnapshot percentile_snapshot(const nets::Model& model,
                                                     const std::string& selector);

struct WeightHistogram {
  std::string layer;
  std::vector<real> edges;  // num_bins + 1, strictly increasing
  std::vector<std::size_t> counts;
};

/// Uniform bins over [min, max]; bins are half-open except the last. A constant
/// tensor gets its range widened so that every value lands in one bin.
[[nodiscard]] WeightHistogram histogram_of(std::string layer, std::span<const real> values,
                                           std::size_t num_bins);

[[nodiscard]] std::vector<WeightHistogram> weight_histogram(const nets::Model& model,
                                                            const std::string& selector,
                                                            std::size_t num_bins);

void write_histograms_csv(std::ostream& out, const std::vector<WeightHistogram>& histograms);

// ---------------------------------------------------------------------------
// Embeddings

struct EmbeddingTable {
  std::vector<std::int32_t> classes;
  std::vector<std::vector<real>> rows;
};

/// Penultimate features of every sample whose class is in `classes`, in dataset order.
[[nodiscard]] EmbeddingTable collect_embeddings(const nets::Model& model,
                                                const data::Dataset& dataset,
                                                const data::Normalization& norm,
                                                const std::vector<std::int32_t>& classes);

/// One CSV row per sample: class, then the embedding.
void write_embeddings_csv(std::ostream& out, const EmbeddingTable& table);

/// Held-out accuracy (percent) of a logistic-regression probe trained on
/// alternating rows of the table. Features are standardized first.
[[nodiscard]] real linear_separability(const EmbeddingTable& table, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Curves and gaps

struct CurveRow {
  std::size_t epoch = 0;
  real a_val_top1 = 0.0, b_val_top1 = 0.0;
  real a_val_top5 = 0.0, b_val_top5 = 0.0;
  std::optional<real> a_gap, b_gap;  // train top-1 minus val top-1
};

struct CurveComparison {
  std::vector<CurveRow> rows;
  real final_top1_delta = 0.0;  // b - a
  real final_top5_delta = 0.0;
  real best_top1_delta = 0.0;
  real best_top5_delta = 0.0;
  std::optional<real> final_gap_a, final_gap_b;
  /// Epochs present in only one run.
  std::size_t dropped_epochs = 0;
};

/// Aligns two runs on their common epochs (warning when some are dropped).
[[nodiscard]] CurveComparison compare_curves(const std::vector<train::MetricsRecord>& a,
                                             const std::vector<train::MetricsRecord>& b);

void write_comparison_csv(std::ostream& out, const CurveComparison& cmp);

struct GapReport {
  real student_top1 = 0.0;
  std::vector<std::pair<std::string, real>> teachers;  // name, top-1
  real ensemble_top1 = 0.0;
};

/// Teacher minus student, per teacher and for the ensemble.
void write_gap_csv(std::ostream& out, const GapReport& report);

void write_supervision_csv(std::ostream& out, const ensemble::SupervisionTable& table);

}  // namespace meal::analysis
