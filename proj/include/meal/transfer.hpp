#pragma once

// Downstream classification transfer: full fine-tuning, frozen-backbone linear
// probing, and the from-scratch control.

#include <optional>
#include <string_view>
#include <vector>

#include "meal/checkpoint.hpp"
#include "meal/data.hpp"
#include "meal/losses.hpp"
#include "meal/trainer.hpp"

namespace meal::transfer {

enum class Mode { finetune, linear_probe };
enum class Objective { softmax_ce, sigmoid_ce };

[[nodiscard]] std::string_view mode_name(Mode mode);
[[nodiscard]] std::optional<Mode> parse_mode(std::string_view name);
[[nodiscard]] std::string_view objective_name(Objective objective);
[[nodiscard]] std::optional<Objective> parse_objective(std::string_view name);

struct TransferConfig {
  Mode mode = Mode::finetune;
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  real lr = 0.01;
  /// Step decay by 0.1 at these epochs; none by default.
  std::vector<std::size_t> lr_milestones;
  real momentum = 0.9;
  real weight_decay = 1e-4;
  Objective objective = Objective::softmax_ce;
  /// When set, must equal the dataset's class count.
  std::optional<std::size_t> num_classes;
  train::LoopOptions loop;

  /// Defaults for a mode: lr 0.01 for fine-tuning, 0.1 for linear probing.
  [[nodiscard]] static TransferConfig defaults(Mode mode);
};

/// Mean over samples and classes of BCE on sigmoid(logit), gradient w.r.t. the logits.
[[nodiscard]] losses::LossWithGrad multilabel_sigmoid_ce(const Tensor& targets, const Tensor& logits);

/// Mean per-class accuracy (percent) of thresholded multi-label predictions.
[[nodiscard]] real multilabel_accuracy(const Tensor& logits, const std::vector<std::vector<real>>& targets);

struct TransferResult {
  ckpt::CheckpointBundle checkpoint;
  std::vector<train::MetricsRecord> metrics;
  /// Top-1 for single-label data, mean per-class accuracy for multi-label data.
  real final_accuracy = 0.0;
};

/// Trains `model` on the downstream set after swapping in a fresh classifier
/// sized to the dataset. In linear-probe mode the backbone runs in inference
/// mode and is never written.
[[nodiscard]] TransferResult transfer_run(nets::Model model, const data::Dataset& train,
                                          const data::Dataset& val, const data::Normalization& norm,
                                          const TransferConfig& config);

/// Same, starting from a checkpoint. The dataset resolution must match the backbone's.
[[nodiscard]] TransferResult transfer_run(const ckpt::CheckpointBundle& pretrained,
                                          const data::Dataset& train, const data::Dataset& val,
                                          const TransferConfig& config);

}  // namespace meal::transfer
