#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "meal/tensor.hpp"

namespace meal::data {

enum class Split { train, val, test };
enum class LabelArity { single, multi };

[[nodiscard]] std::string_view split_name(Split split);

struct Normalization {
  std::array<real, 3> mean{0.5, 0.5, 0.5};
  std::array<real, 3> stddev{0.25, 0.25, 0.25};
  bool operator==(const Normalization&) const = default;
};

struct DatasetSpec {
  std::string name;
  Split split = Split::train;
  std::size_t num_classes = 0;
  std::size_t resolution = 0;
  Normalization normalization;
  LabelArity label_arity = LabelArity::single;
};

/// RGB image, channel-major, values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<real> pixels;  // [3, height, width]

  [[nodiscard]] real at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }
};

class Dataset {
 public:
  DatasetSpec spec;
  std::vector<Image> images;
  /// Class index per image. For multi-label sets this is the source class the
  /// targets were derived from.
  std::vector<std::int32_t> labels;
  /// Binary target vectors (multi-label sets only), length spec.num_classes each.
  std::vector<std::vector<real>> targets;

  [[nodiscard]] std::size_t size() const { return images.size(); }
  /// Throws ConfigError if any label/target is out of contract.
  void validate() const;
};

struct CropParams {
  real area_fraction = 1.0;
  real aspect_ratio = 1.0;
  bool flip = false;
  std::size_t x = 0, y = 0, width = 0, height = 0;
  bool center_fallback = false;
};

inline constexpr real kMinCropArea = 0.08;

/// RandomResizedCrop (area fraction in [min_area, 1], log-uniform aspect ratio in
/// [3/4, 4/3]) followed by a horizontal flip with probability 0.5. Returns the
/// normalized [3, resolution, resolution] tensor and the crop that produced it.
[[nodiscard]] std::pair<Tensor, CropParams> augment_train(const Image& image,
                                                          std::size_t resolution,
                                                          const Normalization& norm,
                                                          std::mt19937_64& rng,
                                                          real min_area = kMinCropArea);

/// Deterministic single-crop transform: resize the shorter side to
/// round(resolution / crop_ratio), then take the centered resolution^2 crop.
[[nodiscard]] Tensor transform_eval(const Image& image, std::size_t resolution,
                                    const Normalization& norm, real crop_ratio = 1.0);

/// Bilinear resample of the source rectangle to out_h x out_w (half-pixel centers).
[[nodiscard]] Image resize_region(const Image& image, std::size_t x, std::size_t y,
                                  std::size_t w, std::size_t h, std::size_t out_h,
                                  std::size_t out_w);

/// Stacks [3,R,R] samples into an [N,3,R,R] batch.
[[nodiscard]] Tensor stack(std::span<const Tensor> samples);

/// [begin, end) ranges of size batch_size covering [0, n). A trailing range of
/// one sample is merged into the previous one.
[[nodiscard]] std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n,
                                                                            std::size_t batch_size);

/// Augmented batch of images[order[p]] for p in [begin, end). Each sample's
/// crop depends only on (seed, epoch, sample index).
[[nodiscard]] Tensor augment_batch(std::span<const Image> images, std::span<const std::size_t> order,
                                   std::size_t begin, std::size_t end, std::size_t epoch,
                                   std::size_t resolution, const Normalization& norm,
                                   std::uint64_t seed, real min_area = kMinCropArea);

/// Seed-deterministic permutation of [0, n).
[[nodiscard]] std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticOptions {
  std::size_t num_classes = 2;
  std::size_t samples_per_class = 10;
  std::size_t resolution = 16;
  std::uint64_t seed = 0;
  /// Seed for the class prototypes; defaults to `seed`. Splits of one dataset
  /// share prototypes and differ in sample seed.
  std::optional<std::uint64_t> prototype_seed;
  real noise_std = 0.05;
  std::size_t max_shift = 1;
  /// Probability of pasting a second, weaker object of another class.
  real distractor_prob = 0.0;
  /// Fraction of labels replaced by a uniformly drawn wrong class.
  real label_noise = 0.0;
  /// Class pairs (a, b) whose prototypes differ only slightly.
  std::vector<std::pair<std::int32_t, std::int32_t>> similar_pairs;
  /// Number of colored blobs per prototype; 0 selects the easy stripe fixture.
  std::size_t blobs_per_class = 0;
};

/// Deterministic toy images: class-keyed patterns plus noise.
[[nodiscard]] Dataset synthetic_dataset(const SyntheticOptions& options, Split split = Split::train);

/// Easy fixture from the class count alone: separable enough for a tiny
/// network to reach near-perfect train accuracy within a few epochs.
[[nodiscard]] Dataset synthetic_dataset(std::size_t num_classes, std::size_t samples_per_class,
                                        std::uint64_t seed);

/// Multi-hot relabeling: class c maps to the binary attribute code `codes[c]`.
[[nodiscard]] Dataset relabel_multi_hot(Dataset base, const std::vector<std::vector<real>>& codes);

// ---------------------------------------------------------------------------
// Registry

struct DatasetConfig {
  std::string name = "synthetic";
  std::filesystem::path root;  // empty: $MEAL_DATA_ROOT
  std::size_t resolution = 16;
  std::size_t num_classes = 10;
  std::size_t samples_per_class = 50;
  std::size_t val_samples_per_class = 20;
  std::uint64_t seed = 0;
  real label_noise = 0.0;
  /// Limit on images read from disk-backed sets (0 = all).
  std::size_t max_samples = 0;

  bool operator==(const DatasetConfig&) const = default;
};

/// Names accepted by load_dataset().
[[nodiscard]] std::vector<std::string> dataset_names();

/// Loads `split` of the named dataset:
///   synthetic             easy fixture (stripes + color per class)
///   synthetic-desk        harder desk set (blobs, similar pairs, distractors)
///   synthetic-transfer    disjoint prototypes for the single-label transfer path
///   synthetic-multilabel  multi-hot relabeling of synthetic-transfer
///   cifar10               CIFAR-10 binary batches under <root>/cifar-10-batches-bin
[[nodiscard]] Dataset load_dataset(const DatasetConfig& config, Split split);

/// Reads CIFAR-10 binary batch files (1 label byte + 3072 pixel bytes per record).
[[nodiscard]] Dataset load_cifar10(const std::filesystem::path& root, Split split,
                                   std::size_t max_samples = 0);

[[nodiscard]] Normalization cifar10_normalization();

/// Dataset root from the config or the MEAL_DATA_ROOT environment variable.
[[nodiscard]] std::filesystem::path resolve_root(const DatasetConfig& config);

}  // namespace meal::data
