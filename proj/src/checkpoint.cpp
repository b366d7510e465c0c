#include "meal/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "meal/error.hpp"

namespace meal::ckpt {
namespace {

using json = nlohmann::json;

constexpr int kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian");

json tensor_to_json(const Tensor& t) {
  std::vector<std::uint8_t> bytes(t.size() * sizeof(real));
  if (!bytes.empty()) std::memcpy(bytes.data(), t.data(), bytes.size());
  return {{"shape", t.shape()}, {"data", json::binary(std::move(bytes))}};
}

Tensor tensor_from_json(const json& j) {
  auto shape = j.at("shape").get<std::vector<std::size_t>>();
  const auto& bytes = j.at("data").get_binary();
  std::vector<real> values(bytes.size() / sizeof(real));
  if (bytes.size() != values.size() * sizeof(real)) throw IoError("corrupt tensor payload");
  if (!bytes.empty()) std::memcpy(values.data(), bytes.data(), bytes.size());
  return Tensor(std::move(shape), std::move(values));
}

json named_to_json(const std::vector<NamedTensor>& v) {
  json arr = json::array();
  for (const auto& nt : v) arr.push_back({{"name", nt.name}, {"tensor", tensor_to_json(nt.value)}});
  return arr;
}

std::vector<NamedTensor> named_from_json(const json& arr) {
  std::vector<NamedTensor> out;
  for (const auto& e : arr) out.push_back({e.at("name").get<std::string>(), tensor_from_json(e.at("tensor"))});
  return out;
}

json map_to_json(const std::map<std::string, Tensor>& m) {
  json obj = json::object();
  for (const auto& [k, v] : m) obj[k] = tensor_to_json(v);
  return obj;
}

std::map<std::string, Tensor> map_from_json(const json& obj) {
  std::map<std::string, Tensor> m;
  for (const auto& [k, v] : obj.items()) m.emplace(k, tensor_from_json(v));
  return m;
}

json bundle_to_json(const CheckpointBundle& b) {
  json j;
  j["format"] = "meal-checkpoint";
  j["version"] = kFormatVersion;
  j["kind"] = b.kind;
  j["model"] = {{"name", b.model_spec.name},
                {"num_classes", b.model_spec.num_classes},
                {"input_resolution", b.model_spec.input_resolution},
                {"capacity_tier", std::string(nets::tier_name(b.model_spec.capacity_tier))}};
  j["normalization"] = {{"mean", b.normalization.mean}, {"std", b.normalization.stddev}};
  j["weights"] = named_to_json(b.weights);
  j["optimizer"] = map_to_json(b.optimizer_velocity);
  if (b.discriminator) {
    const auto& d = *b.discriminator;
    j["discriminator"] = {{"input_dim", d.spec.input_dim},
                          {"hidden_dims", d.spec.hidden_dims},
                          {"enabled", d.spec.enabled},
                          {"weights", named_to_json(d.weights)},
                          {"optimizer", map_to_json(d.velocity)}};
  }
  j["epoch"] = b.epoch;
  j["config_fingerprint"] = b.config_fingerprint;
  j["rng_state"] = b.rng_state;
  j["kernel_backend"] = b.kernel_backend;
  if (b.reference_top1) j["reference_top1"] = *b.reference_top1;
  return j;
}

CheckpointBundle bundle_from_json(const json& j) {
  if (j.value("format", "") != "meal-checkpoint") throw IoError("not a meal checkpoint");
  if (j.at("version").get<int>() != kFormatVersion) throw IoError("unsupported checkpoint version");
  CheckpointBundle b;
  b.kind = j.at("kind").get<std::string>();
  const auto& m = j.at("model");
  b.model_spec.name = m.at("name").get<std::string>();
  b.model_spec.num_classes = m.at("num_classes").get<std::size_t>();
  b.model_spec.input_resolution = m.at("input_resolution").get<std::size_t>();
  const auto tier = nets::parse_tier(m.at("capacity_tier").get<std::string>());
  if (!tier) throw IoError("unknown capacity tier in checkpoint");
  b.model_spec.capacity_tier = *tier;
  b.normalization.mean = j.at("normalization").at("mean").get<std::array<real, 3>>();
  b.normalization.stddev = j.at("normalization").at("std").get<std::array<real, 3>>();
  b.weights = named_from_json(j.at("weights"));
  b.optimizer_velocity = map_from_json(j.at("optimizer"));
  if (j.contains("discriminator")) {
    const auto& d = j.at("discriminator");
    DiscriminatorState s;
    s.spec.input_dim = d.at("input_dim").get<std::size_t>();
    s.spec.hidden_dims = d.at("hidden_dims").get<std::array<std::size_t, 2>>();
    s.spec.enabled = d.at("enabled").get<bool>();
    s.weights = named_from_json(d.at("weights"));
    s.velocity = map_from_json(d.at("optimizer"));
    b.discriminator = std::move(s);
  }
  b.epoch = j.at("epoch").get<std::int64_t>();
  b.config_fingerprint = j.at("config_fingerprint").get<std::uint64_t>();
  b.rng_state = j.at("rng_state").get<std::string>();
  b.kernel_backend = j.at("kernel_backend").get<std::string>();
  if (j.contains("reference_top1")) b.reference_top1 = j.at("reference_top1").get<real>();
  return b;
}

void restore_named(const std::vector<NamedTensor>& from, const std::string& what,
                   const std::vector<std::pair<std::string, Tensor*>>& into) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& nt : from) by_name[nt.name] = &nt.value;
  for (const auto& [name, dst] : into) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ConfigError(what + ": checkpoint lacks tensor '" + name + "'");
    if (it->second->shape() != dst->shape())
      throw ShapeError(what + ": tensor '" + name + "' has shape " + shape_string(it->second->shape()) +
                       ", model expects " + shape_string(dst->shape()));
    *dst = *it->second;
  }
}

}  // namespace

std::vector<NamedTensor> capture_weights(const nets::Model& model) {
  std::vector<NamedTensor> out;
  for (const nets::Parameter* p : model.parameters()) out.push_back({p->name, p->value});
  for (const nets::Buffer* b : model.buffers()) out.push_back({b->name, b->value});
  return out;
}

void restore_weights(nets::Model& model, const std::vector<NamedTensor>& weights) {
  std::vector<std::pair<std::string, Tensor*>> into;
  for (nets::Parameter* p : model.parameters()) into.emplace_back(p->name, &p->value);
  for (nets::Buffer* b : model.buffers()) into.emplace_back(b->name, &b->value);
  restore_named(weights, "model", into);
}

CheckpointBundle capture(const nets::Model& model, const data::Normalization& norm, std::string kind) {
  CheckpointBundle b;
  b.kind = std::move(kind);
  b.model_spec = model.spec();
  b.normalization = norm;
  b.weights = capture_weights(model);
  return b;
}

nets::Model model_from(const CheckpointBundle& bundle) {
  nets::Model m(bundle.model_spec, 0);
  restore_weights(m, bundle.weights);
  return m;
}

DiscriminatorState capture_discriminator(const disc::Discriminator& d, const optim::Sgd& optimizer) {
  DiscriminatorState s;
  s.spec = d.spec();
  for (const nets::Parameter* p : d.parameters()) s.weights.push_back({p->name, p->value});
  s.velocity = optimizer.velocity();
  return s;
}

void restore_discriminator(disc::Discriminator& d, optim::Sgd& optimizer,
                           const DiscriminatorState& state) {
  if (!(state.spec == d.spec())) throw ConfigError("discriminator spec differs from checkpoint");
  std::vector<std::pair<std::string, Tensor*>> into;
  for (nets::Parameter* p : d.parameters()) into.emplace_back(p->name, &p->value);
  restore_named(state.weights, "discriminator", into);
  optimizer.set_velocity(state.velocity);
}

void save(const CheckpointBundle& bundle, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = json::to_cbor(bundle_to_json(bundle));
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

CheckpointBundle load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return bundle_from_json(json::from_cbor(bytes));
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace meal::ckpt
