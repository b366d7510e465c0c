#include "meal/nets/model.hpp"

#include <array>
#include <random>

#include "meal/error.hpp"
#include "meal/kernels/kernels.hpp"

namespace meal::nets {
namespace {

struct TierLayout {
  std::array<std::size_t, 3> widths;
  std::size_t blocks_per_stage;
};

TierLayout layout(CapacityTier tier) {
  switch (tier) {
    case CapacityTier::teacher_large:
      return {{32, 64, 128}, 2};
    case CapacityTier::teacher_medium:
      return {{16, 32, 64}, 2};
    case CapacityTier::student_small:
      return {{16, 32, 64}, 1};
    case CapacityTier::student_tiny:
      return {{8, 16, 32}, 1};
  }
  throw ConfigError("unknown capacity tier");
}

}  // namespace

std::string_view tier_name(CapacityTier tier) {
  switch (tier) {
    case CapacityTier::teacher_large:
      return "teacher-large";
    case CapacityTier::teacher_medium:
      return "teacher-medium";
    case CapacityTier::student_small:
      return "student-small";
    case CapacityTier::student_tiny:
      return "student-tiny";
  }
  return "?";
}

std::optional<CapacityTier> parse_tier(std::string_view name) {
  for (auto t : {CapacityTier::teacher_large, CapacityTier::teacher_medium,
                 CapacityTier::student_small, CapacityTier::student_tiny}) {
    if (tier_name(t) == name) return t;
  }
  return std::nullopt;
}

void ModelSpec::validate() const {
  if (name != kResNetLite) throw ConfigError("unknown architecture '" + name + "'");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (input_resolution < 8) throw ConfigError("input_resolution must be >= 8");
}

Model::Model(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  const TierLayout lay = layout(spec_.capacity_tier);
  stem_ = Conv2d("stem.conv", kImageChannels, lay.widths[0], 3, 1, 1);
  stem_bn_ = BatchNorm2d("stem.bn", lay.widths[0]);
  std::size_t in = lay.widths[0];
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t b = 0; b < lay.blocks_per_stage; ++b) {
      const std::string prefix = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
      const std::size_t out = lay.widths[s];
      const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
      Block blk;
      blk.conv1 = Conv2d(prefix + ".conv1", in, out, 3, stride, 1);
      blk.bn1 = BatchNorm2d(prefix + ".bn1", out);
      blk.conv2 = Conv2d(prefix + ".conv2", out, out, 3, 1, 1);
      blk.bn2 = BatchNorm2d(prefix + ".bn2", out);
      blk.projection = stride != 1 || in != out;
      if (blk.projection) {
        blk.shortcut = Conv2d(prefix + ".shortcut.conv", in, out, 1, stride, 0);
        blk.shortcut_bn = BatchNorm2d(prefix + ".shortcut.bn", out);
      }
      blocks_.push_back(std::move(blk));
      in = out;
    }
  }
  head_ = Linear("fc", in, spec_.num_classes);

  std::mt19937_64 rng(seed);
  stem_.init(rng);
  for (Block& blk : blocks_) {
    blk.conv1.init(rng);
    blk.conv2.init(rng);
    if (blk.projection) blk.shortcut.init(rng);
  }
  head_.init(rng);
}

void Model::check_input(const Tensor& batch) const {
  if (batch.rank() != 4 || batch.dim(1) != kImageChannels)
    throw ShapeError("model input must be [N,3,H,W], got " + shape_string(batch.shape()));
  if (batch.dim(2) != spec_.input_resolution || batch.dim(3) != spec_.input_resolution)
    throw ShapeError("input resolution " + std::to_string(batch.dim(2)) + "x" +
                     std::to_string(batch.dim(3)) + " does not match model resolution " +
                     std::to_string(spec_.input_resolution));
}

namespace {

Tensor global_average_pool(const Tensor& x) {
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const auto& k = kernels::active();
  Tensor y({n, c});
  for (std::size_t i = 0; i < n * c; ++i) y[i] = k.sum(hw, x.data() + i * hw) / static_cast<real>(hw);
  return y;
}

void add_inplace(Tensor& y, const Tensor& x) {
  kernels::active().axpy(y.size(), 1.0, x.data(), y.data());
}

}  // namespace

Tensor Model::features(const Tensor& batch) const {
  check_input(batch);
  Tensor x = relu(stem_bn_.infer(stem_.infer(batch)));
  for (const Block& blk : blocks_) {
    Tensor h = relu(blk.bn1.infer(blk.conv1.infer(x)));
    Tensor out = blk.bn2.infer(blk.conv2.infer(h));
    if (blk.projection)
      add_inplace(out, blk.shortcut_bn.infer(blk.shortcut.infer(x)));
    else
      add_inplace(out, x);
    x = relu(out);
  }
  return global_average_pool(x);
}

Tensor Model::logits(const Tensor& batch) const { return head_.infer(features(batch)); }

Tensor Model::embedding(const Tensor& batch) const { return features(batch); }

Tensor Model::train_forward(const Tensor& batch) {
  check_input(batch);
  stem_pre_ = stem_bn_.forward(stem_.forward(batch));
  Tensor x = relu(stem_pre_);
  for (Block& blk : blocks_) {
    blk.pre1 = blk.bn1.forward(blk.conv1.forward(x));
    Tensor out = blk.bn2.forward(blk.conv2.forward(relu(blk.pre1)));
    if (blk.projection)
      add_inplace(out, blk.shortcut_bn.forward(blk.shortcut.forward(x)));
    else
      add_inplace(out, x);
    blk.pre_out = std::move(out);
    x = relu(blk.pre_out);
  }
  map_shape_ = x.shape();
  return head_.forward(global_average_pool(x));
}

void Model::backward(const Tensor& grad_logits) {
  if (map_shape_.empty()) throw Error("Model::backward called before train_forward");
  Tensor dpool = head_.backward(grad_logits);
  const std::size_t hw = map_shape_[2] * map_shape_[3];
  Tensor dx(map_shape_);
  for (std::size_t i = 0; i < dpool.size(); ++i) {
    const real g = dpool[i] / static_cast<real>(hw);
    std::fill(dx.data() + i * hw, dx.data() + (i + 1) * hw, g);
  }
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
    Block& blk = *it;
    Tensor dout = relu_backward(blk.pre_out, dx);
    Tensor dh = blk.conv2.backward(blk.bn2.backward(dout));
    Tensor dxin = blk.conv1.backward(blk.bn1.backward(relu_backward(blk.pre1, dh)));
    if (blk.projection)
      add_inplace(dxin, blk.shortcut.backward(blk.shortcut_bn.backward(dout)));
    else
      add_inplace(dxin, dout);
    dx = std::move(dxin);
  }
  stem_.backward(stem_bn_.backward(relu_backward(stem_pre_, dx)), false);
}

template <typename F>
void Model::for_each_parameter(F&& f) {
  stem_.visit(f);
  stem_bn_.visit(f);
  for (Block& blk : blocks_) {
    blk.conv1.visit(f);
    blk.bn1.visit(f);
    blk.conv2.visit(f);
    blk.bn2.visit(f);
    if (blk.projection) {
      blk.shortcut.visit(f);
      blk.shortcut_bn.visit(f);
    }
  }
  head_.visit(f);
}

template <typename F>
void Model::for_each_buffer(F&& f) {
  stem_bn_.visit_buffers(f);
  for (Block& blk : blocks_) {
    blk.bn1.visit_buffers(f);
    blk.bn2.visit_buffers(f);
    if (blk.projection) blk.shortcut_bn.visit_buffers(f);
  }
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  for_each_parameter([&](Parameter& p) { out.push_back(&p); });
  return out;
}

std::vector<const Parameter*> Model::parameters() const {
  std::vector<const Parameter*> out;
  const_cast<Model*>(this)->for_each_parameter([&](Parameter& p) { out.push_back(&p); });
  return out;
}

std::vector<Buffer*> Model::buffers() {
  std::vector<Buffer*> out;
  for_each_buffer([&](Buffer& b) { out.push_back(&b); });
  return out;
}

std::vector<const Buffer*> Model::buffers() const {
  std::vector<const Buffer*> out;
  const_cast<Model*>(this)->for_each_buffer([&](Buffer& b) { out.push_back(&b); });
  return out;
}

void Model::zero_grad() {
  for (Parameter* p : parameters()) p->grad.fill(0.0);
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->value.size();
  return n;
}

std::vector<std::string> Model::conv_weight_names() const {
  std::vector<std::string> names{stem_.weight().name};
  for (const Block& blk : blocks_) {
    names.push_back(blk.conv1.weight().name);
    names.push_back(blk.conv2.weight().name);
    if (blk.projection) names.push_back(blk.shortcut.weight().name);
  }
  return names;
}

std::string Model::conv_anchor(ConvAnchor anchor) const {
  switch (anchor) {
    case ConvAnchor::first:
      return stem_.weight().name;
    case ConvAnchor::middle: {
      std::string name;
      for (const Block& blk : blocks_) {
        if (blk.conv2.weight().name.starts_with("stage2.")) name = blk.conv2.weight().name;
      }
      return name;
    }
    case ConvAnchor::last:
      return blocks_.back().conv2.weight().name;
  }
  return {};
}

bool Model::is_head_parameter(const std::string& name) const { return name.starts_with("fc."); }

void Model::reset_head(std::size_t num_classes, std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  spec_.num_classes = num_classes;
  head_ = Linear("fc", head_.in_features(), num_classes);
  std::mt19937_64 rng(seed);
  head_.init(rng);
}

void Model::freeze_backbone(bool frozen) {
  for (Parameter* p : parameters()) p->frozen = frozen && !is_head_parameter(p->name);
}

Model build_model(const ModelSpec& spec, std::uint64_t seed) { return Model(spec, seed); }

Tensor forward_logits(const Model& model, const Tensor& batch) { return model.logits(batch); }

Tensor forward_embedding(const Model& model, const Tensor& batch) { return model.embedding(batch); }

}  // namespace meal::nets
