#pragma once

// Frozen teacher ensembles and their averaged soft labels.

#include <filesystem>
#include <optional>
#include <vector>

#include "meal/data.hpp"
#include "meal/nets/model.hpp"

namespace meal::ensemble {

/// Input contract every teacher was trained under.
struct Preprocessing {
  std::size_t input_resolution = 0;
  data::Normalization normalization;
  bool operator==(const Preprocessing&) const = default;
};

struct TeacherRef {
  std::filesystem::path checkpoint;
  /// When set, the checkpoint's model spec must match.
  std::optional<nets::ModelSpec> expected_spec;
};

struct EnsembleSpec {
  std::vector<TeacherRef> teachers;
  /// When set, every checkpoint's preprocessing must match; otherwise the first teacher's is adopted.
  std::optional<Preprocessing> preprocessing;
};

struct EnsembleOutput {
  Tensor probs;      // [N, C], mean of teacher softmaxes
  Tensor log_probs;  // [N, C], log of probs via log-mean-exp, finite where probs underflow
};

class Ensemble {
 public:
  /// Throws ConfigError for K = 0 or teachers disagreeing on classes or resolution.
  Ensemble(std::vector<nets::Model> teachers, Preprocessing preprocessing);

  /// Loads every checkpoint before returning; the first failure is reported by path.
  [[nodiscard]] static Ensemble load(const EnsembleSpec& spec);

  [[nodiscard]] std::size_t size() const { return teachers_.size(); }
  [[nodiscard]] std::size_t num_classes() const { return teachers_.front().spec().num_classes; }
  [[nodiscard]] const Preprocessing& preprocessing() const { return preprocessing_; }
  [[nodiscard]] const std::vector<nets::Model>& teachers() const { return teachers_; }

  /// Teachers run in inference mode; `parallel` evaluates them on separate threads.
  /// The reduction order is fixed, so both paths give identical bits.
  [[nodiscard]] EnsembleOutput forward(const Tensor& batch, bool parallel = false) const;

  /// Throws ConfigError if `dataset` does not satisfy the teachers' input contract.
  void require_compatible(const data::DatasetSpec& dataset) const;

 private:
  std::vector<nets::Model> teachers_;
  Preprocessing preprocessing_;
};

/// Softmax of a single teacher's inference-mode logits.
[[nodiscard]] Tensor teacher_softmax(const nets::Model& teacher, const Tensor& batch);

/// Element-wise mean of the teacher softmaxes.
[[nodiscard]] Tensor ensemble_predict(const Ensemble& ensemble, const Tensor& batch);

struct SupervisionTable {
  std::size_t num_classes = 0;
  /// Row c: mean soft label over samples of ground-truth class c.
  std::vector<std::vector<real>> rows;
  std::vector<std::size_t> counts;
  /// True for classes without samples; their rows are empty.
  std::vector<bool> absent;
};

/// Groups soft labels [N, C] by ground-truth class and averages them.
[[nodiscard]] SupervisionTable supervision_stats(const Tensor& probs,
                                                 std::span<const std::int32_t> labels);

/// Runs the ensemble over `dataset` (single-crop eval transform) and groups by class.
[[nodiscard]] SupervisionTable supervision_stats(const Ensemble& ensemble,
                                                 const data::Dataset& dataset,
                                                 std::size_t batch_size = 256);

}  // namespace meal::ensemble
