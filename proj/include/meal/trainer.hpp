#pragma once

// Hard-label pretraining and ensemble distillation loops.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "meal/checkpoint.hpp"
#include "meal/data.hpp"
#include "meal/ensemble.hpp"
#include "meal/nets/model.hpp"
#include "meal/optim.hpp"

namespace meal::train {

struct Schedule {
  std::size_t total_epochs = 90;
  real lr_init = 0.01;
  std::vector<std::size_t> milestones{50};
  real decay = 0.1;
  std::size_t batch_size = 128;

  void validate() const;
  bool operator==(const Schedule&) const = default;
};

/// 180 epochs, milestone 100, batch 512.
[[nodiscard]] Schedule paper_schedule();
/// Desk mapping: batch 128, milestone at ceil(total / 1.8).
[[nodiscard]] Schedule desk_schedule(std::size_t total_epochs = 90);

/// lr_init * decay^(milestones <= epoch). Throws ConfigError outside [0, total_epochs).
[[nodiscard]] real lr_at(const Schedule& schedule, std::size_t epoch);

enum class InitMode { random, hard_pretrained, superior };
[[nodiscard]] std::string_view init_mode_name(InitMode mode);
[[nodiscard]] std::optional<InitMode> parse_init_mode(std::string_view name);

/// Options shared by both loops.
struct LoopOptions {
  std::uint64_t seed = 0;
  real min_crop_area = data::kMinCropArea;
  std::size_t eval_batch = 256;
  /// Also score the train split (single crop) each epoch for the train-val gap.
  bool train_eval = true;
  /// Layers whose weight percentiles are logged each epoch.
  std::vector<std::string> percentile_layers{"middle"};
  /// Identical results across runs and resumes; disables threaded teacher inference.
  bool deterministic = true;
  std::uint64_t config_fingerprint = 0;
};

struct PretrainConfig {
  Schedule schedule = desk_schedule();
  optim::SgdOptions sgd{0.9, 5e-4};
  LoopOptions loop;
};

struct DistillConfig {
  Schedule schedule = desk_schedule();
  real weight_decay = 0.0;
  real momentum = 0.9;
  real adv_weight = 0.1;
  bool discriminator_enabled = true;
  std::array<std::size_t, 2> discriminator_hidden{128, 64};
  InitMode init_mode = InitMode::hard_pretrained;
  bool use_hard_labels_in_distill = false;
  /// Hash the pixels handed to the teachers and to the student and compare them.
  bool check_crop_consistency = false;
  LoopOptions loop;
};

struct MetricsRecord {
  std::size_t epoch = 0;  // 1-based count of completed epochs
  real lr = 0.0;
  real loss_ce = 0.0;
  std::optional<real> loss_kl;    // distillation only
  std::optional<real> loss_adv;   // discriminator on only
  std::optional<real> loss_disc;  // discriminator on only
  std::optional<real> disc_accuracy;
  std::optional<real> train_top1;
  real val_top1 = 0.0;
  real val_top5 = 0.0;
  real seconds = 0.0;
  std::map<std::string, std::array<real, 5>> percentiles;

  /// Equality on everything except wall-clock time.
  [[nodiscard]] bool same_numbers(const MetricsRecord& other) const;
};

[[nodiscard]] std::string to_json_line(const MetricsRecord& record);
[[nodiscard]] MetricsRecord parse_metrics_line(const std::string& line);
[[nodiscard]] std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

struct Accuracy {
  real top1 = 0.0;
  real top5 = 0.0;  // top-min(5, C)
};

/// Inference-mode logits of every sample under the single-crop transform.
[[nodiscard]] Tensor predict_logits(const nets::Model& model, const data::Dataset& dataset,
                                    const data::Normalization& norm, std::size_t batch = 256);

[[nodiscard]] Accuracy top_k_accuracy(const Tensor& logits, std::span<const std::int32_t> labels);

/// Single-crop top-1 / top-5 in percent. Throws ConfigError on an empty dataset.
[[nodiscard]] Accuracy evaluate(const nets::Model& model, const data::Dataset& dataset,
                                const data::Normalization& norm, std::size_t batch = 256);

struct RunControl {
  /// Continue from this bundle (weights, optimizer state, epoch).
  const ckpt::CheckpointBundle* resume = nullptr;
  /// Return after this many completed epochs.
  std::optional<std::size_t> stop_after;
  /// Called after every epoch with the record and a bundle of the full training state.
  std::function<void(const MetricsRecord&, const ckpt::CheckpointBundle&)> on_epoch;
};

struct RunResult {
  ckpt::CheckpointBundle checkpoint;
  std::vector<MetricsRecord> metrics;
};

/// Supervised training on ground-truth labels. The returned bundle carries the
/// final validation top-1 as its reference accuracy.
[[nodiscard]] RunResult pretrain_hard(nets::Model model, const data::Dataset& train,
                                      const data::Dataset& val, const data::Normalization& norm,
                                      const PretrainConfig& config, const RunControl& control = {});

/// Soft-label distillation from a frozen ensemble. Unless the config asks for
/// hard labels, the step function receives images only.
[[nodiscard]] RunResult distill(nets::Model student, const ensemble::Ensemble& teachers,
                                const data::Dataset& train, const data::Dataset& val,
                                const DistillConfig& config, const RunControl& control = {});

}  // namespace meal::train
