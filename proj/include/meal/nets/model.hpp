#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "meal/nets/layers.hpp"
#include "meal/tensor.hpp"

namespace meal::nets {

enum class CapacityTier { teacher_large, teacher_medium, student_small, student_tiny };

[[nodiscard]] std::string_view tier_name(CapacityTier tier);
[[nodiscard]] std::optional<CapacityTier> parse_tier(std::string_view name);

/// Architecture family understood by build_model().
inline constexpr std::string_view kResNetLite = "resnet-lite";

struct ModelSpec {
  std::string name{kResNetLite};
  std::size_t num_classes = 10;
  std::size_t input_resolution = 32;
  CapacityTier capacity_tier = CapacityTier::student_small;

  /// Throws ConfigError for an unknown architecture or out-of-range sizes.
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

inline constexpr std::size_t kImageChannels = 3;

/// Which convolution to pick out of the weight list for the weight diagnostics.
enum class ConvAnchor { first, middle, last };

/// Residual CNN for small square RGB inputs: a 3x3 stem, three stages of
/// basic blocks (stride 1, 2, 2), global average pooling and a linear head.
/// Stage widths and depth come from the capacity tier.
class Model {
 public:
  Model(ModelSpec spec, std::uint64_t seed);

  Model(const Model&) = default;
  Model& operator=(const Model&) = default;
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  [[nodiscard]] const ModelSpec& spec() const { return spec_; }

  /// Inference mode: running BatchNorm statistics, no cached state.
  [[nodiscard]] Tensor logits(const Tensor& batch) const;
  [[nodiscard]] Tensor embedding(const Tensor& batch) const;

  /// Training mode: batch statistics, caches activations for backward().
  Tensor train_forward(const Tensor& batch);
  /// Accumulates parameter gradients for dL/dlogits of the last train_forward().
  void backward(const Tensor& grad_logits);

  [[nodiscard]] std::vector<Parameter*> parameters();
  [[nodiscard]] std::vector<const Parameter*> parameters() const;
  [[nodiscard]] std::vector<Buffer*> buffers();
  [[nodiscard]] std::vector<const Buffer*> buffers() const;
  void zero_grad();

  [[nodiscard]] std::size_t embedding_dim() const { return head_.in_features(); }
  [[nodiscard]] std::size_t parameter_count() const;

  /// Convolution weight names in forward order.
  [[nodiscard]] std::vector<std::string> conv_weight_names() const;
  [[nodiscard]] std::string conv_anchor(ConvAnchor anchor) const;

  /// Parameters of the final classifier.
  [[nodiscard]] bool is_head_parameter(const std::string& name) const;
  /// Swaps in a freshly initialized classifier for `num_classes` outputs.
  void reset_head(std::size_t num_classes, std::uint64_t seed);
  /// Freezes every parameter except the classifier (or unfreezes all).
  void freeze_backbone(bool frozen);
  [[nodiscard]] Linear& head() { return head_; }
  [[nodiscard]] const Linear& head() const { return head_; }

 private:
  struct Block {
    Conv2d conv1, conv2;
    BatchNorm2d bn1, bn2;
    bool projection = false;
    Conv2d shortcut;
    BatchNorm2d shortcut_bn;
    // training caches
    Tensor pre1, pre_out;
  };

  void check_input(const Tensor& batch) const;
  Tensor features(const Tensor& batch) const;
  template <typename F>
  void for_each_parameter(F&& f);
  template <typename F>
  void for_each_buffer(F&& f);

  ModelSpec spec_;
  Conv2d stem_;
  BatchNorm2d stem_bn_;
  std::vector<Block> blocks_;
  Linear head_;
  // training caches
  Tensor stem_pre_;
  std::vector<std::size_t> map_shape_;
};

/// Builds a freshly initialized model; identical (spec, seed) pairs give identical weights.
[[nodiscard]] Model build_model(const ModelSpec& spec, std::uint64_t seed);

/// Inference-mode logits; the batch resolution must equal spec.input_resolution.
[[nodiscard]] Tensor forward_logits(const Model& model, const Tensor& batch);
/// Penultimate activations: the input of the final linear classifier.
[[nodiscard]] Tensor forward_embedding(const Model& model, const Tensor& batch);

}  // namespace meal::nets
