#include "meal/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>

#include "meal/error.hpp"
#include "meal/log.hpp"
#include "meal/seed.hpp"

namespace meal::data {

std::string_view split_name(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "?";
}

void Dataset::validate() const {
  if (labels.size() != images.size())
    throw ConfigError(spec.name + ": " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(images.size()) + " images");
  for (std::int32_t y : labels) {
    const bool in_range = y >= 0 && (spec.label_arity == LabelArity::multi ||
                                     static_cast<std::size_t>(y) < spec.num_classes);
    if (!in_range) throw ConfigError(spec.name + ": label " + std::to_string(y) + " out of range");
  }
  if (spec.label_arity == LabelArity::multi) {
    if (targets.size() != images.size()) throw ConfigError(spec.name + ": missing multi-label targets");
    for (const auto& t : targets) {
      if (t.size() != spec.num_classes) throw ConfigError(spec.name + ": target width mismatch");
      for (real v : t)
        if (v != 0.0 && v != 1.0) throw ConfigError(spec.name + ": targets must be binary");
    }
  }
}

// ---------------------------------------------------------------------------

Image resize_region(const Image& image, std::size_t x0, std::size_t y0, std::size_t w,
                    std::size_t h, std::size_t out_h, std::size_t out_w) {
  Image out{out_h, out_w, std::vector<real>(3 * out_h * out_w)};
  const real sy = static_cast<real>(h) / static_cast<real>(out_h);
  const real sx = static_cast<real>(w) / static_cast<real>(out_w);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const real fy = std::clamp((static_cast<real>(oy) + 0.5) * sy - 0.5, 0.0, static_cast<real>(h - 1));
    const auto y_lo = static_cast<std::size_t>(fy);
    const std::size_t y_hi = std::min(y_lo + 1, h - 1);
    const real wy = fy - static_cast<real>(y_lo);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const real fx = std::clamp((static_cast<real>(ox) + 0.5) * sx - 0.5, 0.0, static_cast<real>(w - 1));
      const auto x_lo = static_cast<std::size_t>(fx);
      const std::size_t x_hi = std::min(x_lo + 1, w - 1);
      const real wx = fx - static_cast<real>(x_lo);
      for (std::size_t c = 0; c < 3; ++c) {
        const real a = image.at(c, y0 + y_lo, x0 + x_lo), b = image.at(c, y0 + y_lo, x0 + x_hi);
        const real d = image.at(c, y0 + y_hi, x0 + x_lo), e = image.at(c, y0 + y_hi, x0 + x_hi);
        out.pixels[(c * out_h + oy) * out_w + ox] =
            (1 - wy) * ((1 - wx) * a + wx * b) + wy * ((1 - wx) * d + wx * e);
      }
    }
  }
  return out;
}

namespace {

Tensor to_tensor(const Image& img, const Normalization& norm, bool flip) {
  Tensor t({3, img.height, img.width});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) {
        const std::size_t sx = flip ? img.width - 1 - x : x;
        t[(c * img.height + y) * img.width + x] = (img.at(c, y, sx) - norm.mean[c]) / norm.stddev[c];
      }
  return t;
}

void require_image(const Image& image) {
  if (image.pixels.size() != 3 * image.height * image.width)
    throw ShapeError("image pixel buffer does not match " + std::to_string(image.height) + "x" +
                     std::to_string(image.width) + "x3");
}

}  // namespace

std::pair<Tensor, CropParams> augment_train(const Image& image, std::size_t resolution,
                                            const Normalization& norm, std::mt19937_64& rng,
                                            real min_area) {
  require_image(image);
  const real area = static_cast<real>(image.height * image.width);
  std::uniform_real_distribution<real> area_dist(min_area, 1.0);
  std::uniform_real_distribution<real> log_ratio(std::log(3.0 / 4.0), std::log(4.0 / 3.0));
  CropParams crop;
  bool found = false;
  for (int attempt = 0; attempt < 10 && !found; ++attempt) {
    const real target = area * area_dist(rng);
    const real ratio = std::exp(log_ratio(rng));
    const auto w = static_cast<std::size_t>(std::lround(std::sqrt(target * ratio)));
    const auto h = static_cast<std::size_t>(std::lround(std::sqrt(target / ratio)));
    if (w >= 1 && h >= 1 && w <= image.width && h <= image.height &&
        static_cast<real>(w * h) >= min_area * area) {
      crop.x = std::uniform_int_distribution<std::size_t>(0, image.width - w)(rng);
      crop.y = std::uniform_int_distribution<std::size_t>(0, image.height - h)(rng);
      crop.width = w;
      crop.height = h;
      found = true;
    }
  }
  if (!found) {
    if (image.height == 0 || image.width == 0) throw ShapeError("augment_train: empty image");
    const std::size_t side = std::min(image.height, image.width);
    crop.width = crop.height = side;
    crop.x = (image.width - side) / 2;
    crop.y = (image.height - side) / 2;
    crop.center_fallback = true;
    log::warn("augment_train: no valid random crop in 10 attempts, using center crop");
  }
  crop.area_fraction = static_cast<real>(crop.width * crop.height) / area;
  crop.aspect_ratio = static_cast<real>(crop.width) / static_cast<real>(crop.height);
  crop.flip = std::bernoulli_distribution(0.5)(rng);
  const Image patch =
      resize_region(image, crop.x, crop.y, crop.width, crop.height, resolution, resolution);
  return {to_tensor(patch, norm, crop.flip), crop};
}

Tensor transform_eval(const Image& image, std::size_t resolution, const Normalization& norm,
                      real crop_ratio) {
  require_image(image);
  if (crop_ratio <= 0.0 || crop_ratio > 1.0) throw ConfigError("eval crop ratio must be in (0, 1]");
  const std::size_t shorter = std::min(image.height, image.width);
  const auto target_short = static_cast<std::size_t>(std::lround(static_cast<real>(resolution) / crop_ratio));
  const real scale = static_cast<real>(target_short) / static_cast<real>(shorter);
  const auto rh = std::max(resolution, static_cast<std::size_t>(std::lround(image.height * scale)));
  const auto rw = std::max(resolution, static_cast<std::size_t>(std::lround(image.width * scale)));
  const Image resized = resize_region(image, 0, 0, image.width, image.height, rh, rw);
  const Image crop = resize_region(resized, (rw - resolution) / 2, (rh - resolution) / 2,
                                   resolution, resolution, resolution, resolution);
  return to_tensor(crop, norm, false);
}

Tensor stack(std::span<const Tensor> samples) {
  if (samples.empty()) throw ShapeError("stack: no samples");
  std::vector<std::size_t> shape{samples.size()};
  for (std::size_t d : samples.front().shape()) shape.push_back(d);
  Tensor out(shape);
  const std::size_t per = samples.front().size();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].shape() != samples.front().shape()) throw ShapeError("stack: ragged samples");
    std::copy(samples[i].data(), samples[i].data() + per, out.data() + i * per);
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch_size) out.emplace_back(b, std::min(n, b + batch_size));
  if (out.size() > 1 && out.back().second - out.back().first < 2) {
    out.pop_back();
    out.back().second = n;
  }
  return out;
}

Tensor augment_batch(std::span<const Image> images, std::span<const std::size_t> order, std::size_t begin,
                     std::size_t end, std::size_t epoch, std::size_t resolution, const Normalization& norm,
                     std::uint64_t seed, real min_area) {
  std::vector<Tensor> samples;
  samples.reserve(end - begin);
  for (std::size_t p = begin; p < end; ++p) {
    const std::size_t idx = order[p];
    std::mt19937_64 rng(derive_seed(seed, "augment", epoch * images.size() + idx));
    samples.push_back(augment_train(images[idx], resolution, norm, rng, min_area).first);
  }
  return stack(samples);
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

// ---------------------------------------------------------------------------
// Synthetic generators

namespace {

struct Blob {
  real cx, cy, radius;
  std::array<real, 3> color;
};

struct Prototype {
  std::array<real, 3> base{0.5, 0.5, 0.5};
  // stripe fixture
  real angle = 0.0, frequency = 1.0;
  // blob sets
  std::vector<Blob> blobs;
};

std::vector<Prototype> make_prototypes(const SyntheticOptions& o) {
  std::mt19937_64 rng(derive_seed(o.prototype_seed.value_or(o.seed), "prototypes"));
  std::uniform_real_distribution<real> u01(0.0, 1.0);
  const auto res = static_cast<real>(o.resolution);
  std::vector<Prototype> protos(o.num_classes);
  for (std::size_t c = 0; c < o.num_classes; ++c) {
    Prototype& p = protos[c];
    if (o.blobs_per_class == 0) {
      // Evenly spread hues keep the fixture separable by color alone.
      const real hue = static_cast<real>(c) / static_cast<real>(o.num_classes);
      for (std::size_t ch = 0; ch < 3; ++ch)
        p.base[ch] = 0.5 + 0.35 * std::cos(2.0 * std::numbers::pi * (hue + static_cast<real>(ch) / 3.0));
      p.angle = std::numbers::pi * static_cast<real>(c) / static_cast<real>(o.num_classes);
      p.frequency = 1.0 + static_cast<real>(c % 3);
    } else {
      for (std::size_t b = 0; b < o.blobs_per_class; ++b) {
        Blob blob{res * (0.2 + 0.6 * u01(rng)), res * (0.2 + 0.6 * u01(rng)),
                  res * (0.10 + 0.12 * u01(rng)), {}};
        for (real& v : blob.color) v = 0.8 * (2.0 * u01(rng) - 1.0);
        p.blobs.push_back(blob);
      }
    }
  }
  for (auto [a, b] : o.similar_pairs) {
    if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= o.num_classes ||
        static_cast<std::size_t>(b) >= o.num_classes || protos[a].blobs.empty())
      continue;
    // b keeps a's layout and differs in the color of a single blob.
    protos[b] = protos[a];
    for (real& v : protos[b].blobs.back().color) v = 0.8 * (2.0 * u01(rng) - 1.0);
  }
  return protos;
}

void render(const Prototype& p, const SyntheticOptions& o, real contrast, real dx, real dy,
            real phase, std::vector<real>& px, bool additive) {
  const std::size_t r = o.resolution;
  for (std::size_t y = 0; y < r; ++y) {
    for (std::size_t x = 0; x < r; ++x) {
      const real fx = static_cast<real>(x) - dx, fy = static_cast<real>(y) - dy;
      std::array<real, 3> v{};
      if (p.blobs.empty()) {
        const real t = (fx * std::cos(p.angle) + fy * std::sin(p.angle)) / static_cast<real>(r);
        const real s = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * p.frequency * t + phase);
        for (std::size_t c = 0; c < 3; ++c) v[c] = p.base[c] * (0.6 + 0.4 * s);
      } else {
        for (const Blob& b : p.blobs) {
          const real d2 = (fx - b.cx) * (fx - b.cx) + (fy - b.cy) * (fy - b.cy);
          const real g = std::exp(-d2 / (2.0 * b.radius * b.radius));
          for (std::size_t c = 0; c < 3; ++c) v[c] += contrast * g * b.color[c];
        }
        if (!additive)
          for (real& c : v) c += 0.5;
      }
      for (std::size_t c = 0; c < 3; ++c) {
        real& dst = px[(c * r + y) * r + x];
        dst = additive ? dst + v[c] : v[c];
      }
    }
  }
}

}  // namespace

Dataset synthetic_dataset(const SyntheticOptions& o, Split split) {
  if (o.num_classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
  if (o.samples_per_class < 1) throw ConfigError("synthetic dataset needs samples_per_class >= 1");
  if (o.resolution < 8) throw ConfigError("synthetic resolution must be >= 8");
  const auto protos = make_prototypes(o);
  std::mt19937_64 rng(derive_seed(o.seed, "samples", static_cast<std::uint64_t>(split)));
  std::normal_distribution<real> noise(0.0, o.noise_std);
  std::uniform_real_distribution<real> shift(-static_cast<real>(o.max_shift), static_cast<real>(o.max_shift));
  std::uniform_real_distribution<real> u01(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> other(1, o.num_classes - 1);

  Dataset ds;
  ds.spec = {o.blobs_per_class == 0 ? "synthetic" : "synthetic-blobs", split, o.num_classes,
             o.resolution, Normalization{}, LabelArity::single};
  const std::size_t r = o.resolution;
  for (std::size_t i = 0; i < o.samples_per_class; ++i) {
    for (std::size_t c = 0; c < o.num_classes; ++c) {
      Image img{r, r, std::vector<real>(3 * r * r)};
      const real contrast = 0.7 + 0.6 * u01(rng);
      render(protos[c], o, contrast, shift(rng), shift(rng), 2.0 * std::numbers::pi * u01(rng), img.pixels, false);
      const real distract = u01(rng);
      const std::size_t d = (c + other(rng)) % o.num_classes;
      const real dxs = shift(rng) * 2.0, dys = shift(rng) * 2.0;
      if (distract < o.distractor_prob)
        render(protos[d], o, 0.5 * contrast, dxs, dys, 0.0, img.pixels, true);
      for (real& v : img.pixels) v = std::clamp(v + noise(rng), 0.0, 1.0);
      auto label = static_cast<std::int32_t>(c);
      const real flip = u01(rng);
      const std::size_t wrong = (c + other(rng)) % o.num_classes;
      if (split == Split::train && flip < o.label_noise) label = static_cast<std::int32_t>(wrong);
      ds.images.push_back(std::move(img));
      ds.labels.push_back(label);
    }
  }
  ds.validate();
  return ds;
}

Dataset synthetic_dataset(std::size_t num_classes, std::size_t samples_per_class, std::uint64_t seed) {
  SyntheticOptions o;
  o.num_classes = num_classes;
  o.samples_per_class = samples_per_class;
  o.seed = seed;
  return synthetic_dataset(o, Split::train);
}

Dataset relabel_multi_hot(Dataset base, const std::vector<std::vector<real>>& codes) {
  if (codes.size() < base.spec.num_classes) throw ConfigError("multi-hot codes do not cover every class");
  const std::size_t width = codes.front().size();
  base.targets.clear();
  for (std::int32_t y : base.labels) {
    if (codes[y].size() != width) throw ConfigError("multi-hot codes have ragged widths");
    base.targets.push_back(codes[y]);
  }
  base.spec.num_classes = width;
  base.spec.label_arity = LabelArity::multi;
  base.validate();
  return base;
}

// ---------------------------------------------------------------------------
// Registry

std::vector<std::string> dataset_names() {
  return {"synthetic", "synthetic-desk", "synthetic-transfer", "synthetic-multilabel", "cifar10"};
}

std::filesystem::path resolve_root(const DatasetConfig& config) {
  if (!config.root.empty()) return config.root;
  if (const char* env = std::getenv("MEAL_DATA_ROOT")) return env;
  return {};
}

Normalization cifar10_normalization() {
  return {{0.4914, 0.4822, 0.4465}, {0.2470, 0.2435, 0.2616}};
}

namespace {

SyntheticOptions desk_options(const DatasetConfig& c, Split split) {
  SyntheticOptions o;
  o.num_classes = c.num_classes;
  o.samples_per_class = split == Split::train ? c.samples_per_class : c.val_samples_per_class;
  o.resolution = c.resolution;
  o.seed = c.seed;
  o.blobs_per_class = 3;
  o.noise_std = 0.4;
  o.max_shift = std::max<std::size_t>(1, c.resolution / 4);
  o.distractor_prob = 0.7;
  o.label_noise = c.label_noise;
  if (c.num_classes >= 10) o.similar_pairs = {{3, 5}, {1, 9}};
  return o;
}

}  // namespace

Dataset load_dataset(const DatasetConfig& c, Split split) {
  Dataset ds;
  if (c.name == "synthetic") {
    SyntheticOptions o;
    o.num_classes = c.num_classes;
    o.samples_per_class = split == Split::train ? c.samples_per_class : c.val_samples_per_class;
    o.resolution = c.resolution;
    o.seed = c.seed;
    o.label_noise = c.label_noise;
    ds = synthetic_dataset(o, split);
  } else if (c.name == "synthetic-desk") {
    ds = synthetic_dataset(desk_options(c, split), split);
  } else if (c.name == "synthetic-transfer" || c.name == "synthetic-multilabel") {
    SyntheticOptions o = desk_options(c, split);
    o.prototype_seed = derive_seed(c.seed, "transfer-prototypes");
    o.similar_pairs.clear();
    o.label_noise = 0.0;
    ds = synthetic_dataset(o, split);
    if (c.name == "synthetic-multilabel") {
      std::vector<std::vector<real>> codes(c.num_classes, std::vector<real>(c.num_classes, 0.0));
      for (std::size_t k = 0; k < c.num_classes; ++k) {
        codes[k][k] = 1.0;
        codes[k][(k + 1) % c.num_classes] = 1.0;
      }
      ds = relabel_multi_hot(std::move(ds), codes);
    }
  } else if (c.name == "cifar10") {
    ds = load_cifar10(resolve_root(c), split, c.max_samples);
  } else {
    throw ConfigError("unknown dataset '" + c.name + "'");
  }
  ds.spec.name = c.name;
  ds.spec.split = split;
  ds.spec.resolution = c.resolution;
  if (c.name == "cifar10") ds.spec.normalization = cifar10_normalization();
  return ds;
}

Dataset load_cifar10(const std::filesystem::path& root, Split split, std::size_t max_samples) {
  const std::filesystem::path dir = root / "cifar-10-batches-bin";
  std::vector<std::filesystem::path> files;
  if (split == Split::train) {
    for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
  } else {
    files.push_back(dir / "test_batch.bin");
  }
  Dataset ds;
  ds.spec = {"cifar10", split, 10, 32, cifar10_normalization(), LabelArity::single};
  constexpr std::size_t kSide = 32, kRecord = 1 + 3 * kSide * kSide;
  std::vector<unsigned char> record(kRecord);
  for (const auto& file : files) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open CIFAR-10 batch file " + file.string());
    while (in.read(reinterpret_cast<char*>(record.data()), kRecord)) {
      if (record[0] > 9) throw IoError("corrupt label byte in " + file.string());
      Image img{kSide, kSide, std::vector<real>(3 * kSide * kSide)};
      for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = record[1 + i] / 255.0;
      ds.images.push_back(std::move(img));
      ds.labels.push_back(record[0]);
      if (max_samples != 0 && ds.images.size() >= max_samples) return ds;
    }
    if (in.gcount() != 0) throw IoError("truncated record in " + file.string());
  }
  return ds;
}

}  // namespace meal::data
