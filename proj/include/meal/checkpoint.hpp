#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "meal/data.hpp"
#include "meal/discriminator.hpp"
#include "meal/nets/model.hpp"

namespace meal::ckpt {

struct NamedTensor {
  std::string name;
  Tensor value;
  bool operator==(const NamedTensor&) const = default;
};

struct DiscriminatorState {
  disc::DiscriminatorSpec spec;
  std::vector<NamedTensor> weights;
  std::map<std::string, Tensor> velocity;
  bool operator==(const DiscriminatorState&) const = default;
};

/// Everything needed to evaluate a model or resume its training run.
struct CheckpointBundle {
  std::string kind;  // "init", "pretrain", "distill", "transfer"
  nets::ModelSpec model_spec;
  data::Normalization normalization;
  /// Model parameters followed by buffers, in model order.
  std::vector<NamedTensor> weights;
  std::map<std::string, Tensor> optimizer_velocity;
  std::optional<DiscriminatorState> discriminator;
  /// Completed epochs.
  std::int64_t epoch = 0;
  std::uint64_t config_fingerprint = 0;
  std::string rng_state;
  std::string kernel_backend;
  /// Validation top-1 measured when the checkpoint was written (pretraining baseline).
  std::optional<real> reference_top1;

  bool operator==(const CheckpointBundle&) const = default;
};

[[nodiscard]] std::vector<NamedTensor> capture_weights(const nets::Model& model);
/// Copies named tensors into `model`. Every model tensor must be present with the same shape.
void restore_weights(nets::Model& model, const std::vector<NamedTensor>& weights);

[[nodiscard]] CheckpointBundle capture(const nets::Model& model, const data::Normalization& norm,
                                       std::string kind);
[[nodiscard]] nets::Model model_from(const CheckpointBundle& bundle);

[[nodiscard]] DiscriminatorState capture_discriminator(const disc::Discriminator& d,
                                                       const optim::Sgd& optimizer);
void restore_discriminator(disc::Discriminator& d, optim::Sgd& optimizer,
                           const DiscriminatorState& state);

/// Binary (CBOR) serialization; doubles are stored bit-exactly.
void save(const CheckpointBundle& bundle, const std::filesystem::path& path);
[[nodiscard]] CheckpointBundle load(const std::filesystem::path& path);

}  // namespace meal::ckpt
