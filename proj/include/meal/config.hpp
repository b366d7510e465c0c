#pragma once

// Run configuration: a flat, human-readable "key = value" file with dotted
// section prefixes. Unknown keys are rejected; a serialized config re-parses
// to the identical configuration.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "meal/data.hpp"
#include "meal/nets/model.hpp"
#include "meal/trainer.hpp"
#include "meal/transfer.hpp"

namespace meal::config {

struct RunConfig {
  // run.*
  std::string name = "run";
  std::filesystem::path output_dir = "runs";
  std::uint64_t seed = 0;
  bool deterministic = false;
  std::string kernels = "auto";
  /// Most recent epoch checkpoints kept on disk (0 keeps all).
  std::size_t keep_checkpoints = 3;

  // data.*
  data::DatasetConfig data;
  std::optional<std::array<real, 3>> mean, stddev;  // dataset default when unset
  real min_crop_area = data::kMinCropArea;

  // model.*
  std::string model_name{nets::kResNetLite};
  nets::CapacityTier tier = nets::CapacityTier::student_small;

  // schedule.*
  train::Schedule schedule = train::desk_schedule();
  real momentum = 0.9;

  // pretrain.*
  real pretrain_weight_decay = 5e-4;

  // distill.*
  real distill_weight_decay = 0.0;
  real adv_weight = 0.1;
  train::InitMode init_mode = train::InitMode::hard_pretrained;
  std::filesystem::path init_checkpoint;  // empty: random initialization
  bool use_hard_labels = false;
  bool check_crop_consistency = false;

  // discriminator.*
  bool discriminator_enabled = true;
  std::array<std::size_t, 2> discriminator_hidden{128, 64};

  // ensemble.*
  std::vector<std::filesystem::path> teachers;

  // transfer.*
  transfer::Mode transfer_mode = transfer::Mode::finetune;
  std::size_t transfer_epochs = 200;
  std::size_t transfer_batch_size = 128;
  std::optional<real> transfer_lr;  // mode default when unset
  real transfer_weight_decay = 1e-4;
  transfer::Objective transfer_objective = transfer::Objective::softmax_ce;
  std::filesystem::path transfer_init;  // empty: from scratch

  // eval.* / analysis.*
  std::size_t eval_batch = 256;
  bool train_eval = true;
  std::vector<std::string> percentile_layers{"middle"};
  std::vector<std::string> histogram_layers{"first", "middle", "last"};
  std::size_t histogram_bins = 50;
  std::pair<std::int32_t, std::int32_t> similar_pair{3, 5};
  std::pair<std::int32_t, std::int32_t> dissimilar_pair{8, 6};
  std::vector<std::int32_t> embedding_classes{3, 5, 8, 6};

  bool operator==(const RunConfig&) const = default;
};

/// Every accepted key, in serialization order.
[[nodiscard]] std::vector<std::string> keys();

/// Parses "key = value" lines ('#' starts a comment). Throws ConfigError naming
/// the offending key or line.
[[nodiscard]] RunConfig parse(const std::string& text);
[[nodiscard]] RunConfig load(const std::filesystem::path& path);

/// Applies one "key=value" override.
void apply_override(RunConfig& config, const std::string& assignment);
void set(RunConfig& config, const std::string& key, const std::string& value);
[[nodiscard]] std::string get(const RunConfig& config, const std::string& key);

/// Canonical text with every key; parse(serialize(c)) == c.
[[nodiscard]] std::string serialize(const RunConfig& config);

/// Hash of the keys that influence training results (run name and output
/// directory excluded).
[[nodiscard]] std::uint64_t fingerprint(const RunConfig& config);

/// Throws ConfigError on inconsistent combinations.
void validate(const RunConfig& config);

[[nodiscard]] std::filesystem::path run_dir(const RunConfig& config);
[[nodiscard]] data::Normalization normalization(const RunConfig& config);
[[nodiscard]] nets::ModelSpec model_spec(const RunConfig& config);
[[nodiscard]] train::LoopOptions loop_options(const RunConfig& config);
[[nodiscard]] train::PretrainConfig pretrain_config(const RunConfig& config);
[[nodiscard]] train::DistillConfig distill_config(const RunConfig& config);
[[nodiscard]] transfer::TransferConfig transfer_config(const RunConfig& config);

}  // namespace meal::config
