#include "meal/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "meal/error.hpp"
#include "meal/kernels/kernels.hpp"

namespace meal::config {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <typename T>
T parse_int(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "': '" + v + "' is not a valid integer");
  return out;
}

real parse_real(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const real out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out))
    throw ConfigError("config key '" + key + "': '" + v + "' is not a finite number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::string fmt_real(real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& f) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + f(items[i]);
  return out;
}

template <typename T>
std::vector<T> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) out.push_back(parse_int<T>(key, item));
  return out;
}

std::array<real, 3> parse_triple(const std::string& key, const std::string& v) {
  const auto items = split_list(v);
  if (items.size() != 3) throw ConfigError("config key '" + key + "' needs three comma-separated numbers");
  return {parse_real(key, items[0]), parse_real(key, items[1]), parse_real(key, items[2])};
}

std::pair<std::int32_t, std::int32_t> parse_pair(const std::string& key, const std::string& v) {
  const auto items = parse_int_list<std::int32_t>(key, v);
  if (items.size() != 2) throw ConfigError("config key '" + key + "' needs two comma-separated classes");
  return {items[0], items[1]};
}

struct Entry {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string& key, const std::string&)> set;
  bool affects_results = true;
};

#define MEAL_INT(KEY, FIELD, TYPE)                                      \
  Entry {                                                               \
    KEY, [](const RunConfig& c) { return std::to_string(c.FIELD); },    \
        [](RunConfig& c, const std::string& k, const std::string& v) {  \
          c.FIELD = parse_int<TYPE>(k, v);                              \
        }                                                               \
  }
#define MEAL_REAL(KEY, FIELD)                                                                       \
  Entry {                                                                                           \
    KEY, [](const RunConfig& c) { return fmt_real(c.FIELD); },                                      \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_real(k, v); } \
  }
#define MEAL_BOOL(KEY, FIELD)                                                                       \
  Entry {                                                                                           \
    KEY, [](const RunConfig& c) { return std::string(c.FIELD ? "true" : "false"); },                \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_bool(k, v); } \
  }
#define MEAL_STRING(KEY, FIELD)                                                                 \
  Entry {                                                                                       \
    KEY, [](const RunConfig& c) { return std::string(c.FIELD); },                               \
        [](RunConfig& c, const std::string&, const std::string& v) { c.FIELD = v; }             \
  }

const std::vector<Entry>& table() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e{
        Entry{"run.name", [](const RunConfig& c) { return c.name; },
              [](RunConfig& c, const std::string&, const std::string& v) { c.name = v; }, false},
        Entry{"run.output_dir", [](const RunConfig& c) { return c.output_dir.string(); },
              [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }, false},
        MEAL_INT("run.seed", seed, std::uint64_t),
        MEAL_BOOL("run.deterministic", deterministic),
        MEAL_STRING("run.kernels", kernels),
        Entry{"run.keep_checkpoints", [](const RunConfig& c) { return std::to_string(c.keep_checkpoints); },
              [](RunConfig& c, const std::string& k, const std::string& v) { c.keep_checkpoints = parse_int<std::size_t>(k, v); }, false},

        MEAL_STRING("data.name", data.name),
        Entry{"data.root", [](const RunConfig& c) { return c.data.root.string(); },
              [](RunConfig& c, const std::string&, const std::string& v) { c.data.root = v; }},
        MEAL_INT("data.resolution", data.resolution, std::size_t),
        MEAL_INT("data.num_classes", data.num_classes, std::size_t),
        MEAL_INT("data.samples_per_class", data.samples_per_class, std::size_t),
        MEAL_INT("data.val_samples_per_class", data.val_samples_per_class, std::size_t),
        MEAL_INT("data.seed", data.seed, std::uint64_t),
        MEAL_REAL("data.label_noise", data.label_noise),
        MEAL_INT("data.max_samples", data.max_samples, std::size_t),
        Entry{"data.mean", [](const RunConfig& c) { return c.mean ? join(std::vector<real>(c.mean->begin(), c.mean->end()), fmt_real) : std::string(); },
              [](RunConfig& c, const std::string& k, const std::string& v) {
                if (trim(v).empty()) c.mean.reset(); else c.mean = parse_triple(k, v);
              }},
        Entry{"data.std", [](const RunConfig& c) { return c.stddev ? join(std::vector<real>(c.stddev->begin(), c.stddev->end()), fmt_real) : std::string(); },
              [](RunConfig& c, const std::string& k, const std::string& v) {
                if (trim(v).empty()) c.stddev.reset(); else c.stddev = parse_triple(k, v);
              }},
        MEAL_REAL("data.min_crop_area", min_crop_area),

        MEAL_STRING("model.name", model_name),
        Entry{"model.tier", [](const RunConfig& c) { return std::string(nets::tier_name(c.tier)); },
              [](RunConfig& c, const std::string& k, const std::string& v) {
                const auto t = nets::parse_tier(v);
                if (!t) throw ConfigError("config key '" + k + "': unknown capacity tier '" + v + "'");
                c.tier = *t;
              }},

        MEAL_INT("schedule.total_epochs", schedule.total_epochs, std::size_t),
        MEAL_REAL("schedule.lr_init", schedule.lr_init),
        Entry{"schedule.lr_milestones",
              [](const RunConfig& c) { return join(c.schedule.milestones, [](std::size_t m) { return std::to_string(m); }); },
              [](RunConfig& c, const std::string& k, const std::string& v) {
                c.schedule.milestones = parse_int_list<std::size_t>(k, v);
              }},
        MEAL_REAL("schedule.lr_decay", schedule.decay),
        MEAL_INT("schedule.batch_size", schedule.batch_size, std::size_t),
        MEAL_REAL("schedule.momentum", momentum),

        MEAL_REAL("pretrain.weight_decay", pretrain_weight_decay),

        MEAL_REAL("distill.weight_decay", distill_weight_decay),
        MEAL_REAL("distill.adv_weight", adv_weight),
        Entry{"distill.init_mode", [](const RunConfig& c) { return std::string(train::init_mode_name(c.init_mode)); },
              [](RunConfig& c, const std::string& k, const std::string& v) {
                const auto m = train::parse_init_mode(v);
                if (!m) throw ConfigError("config key '" + k + "': unknown init mode '" + v + "'");
                c.init_mode = *m;
              }},
        Entry{"distill.init_checkpoint", [](const RunConfig& c) { return c.init_checkpoint.string(); },
              [](RunConfig& c, const std::string&, const std::string& v) { c.init_checkpoint = v; }},
        MEAL_BOOL("distill.use_hard_labels", use_hard_labels),
        MEAL_BOOL("distill.check_crop_consistency", check_crop_consistency),

        MEAL_BOOL("discriminator.enabled", discriminator_enabled),
        Entry{"discriminator.hidden_dims",
              [](const RunConfig& c) {
                return std::to_string(c.discriminator_hidden[0]) + "," + std::to_string(c.discriminator_hidden[1]);
              },
              [](RunConfig& c, const std::string& k, const std::string& v) {
                const auto d = parse_int_list<std::size_t>(k, v);
                if (d.size() != 2) throw ConfigError("config key '" + k + "' needs two widths");
                c.discriminator_hidden = {d[0], d[1]};
              }},

        Entry{"ensemble.teachers",
              [](const RunConfig& c) { return join(c.teachers, [](const std::filesystem::path& p) { return p.string(); }); },
              [](RunConfig& c, const std::string&, const std::string& v) {
                c.teachers.clear();
                for (const auto& item : split_list(v)) c.teachers.emplace_back(item);
              }},

        Entry{"transfer.mode", [](const RunConfig& c) { return std::string(transfer::mode_name(c.transfer_mode)); },
              [](RunConfig& c, const std::string& k, const std::string& v) {
                const auto m = transfer::parse_mode(v);
                if (!m) throw ConfigError("config key '" + k + "': unknown transfer mode '" + v + "'");
                c.transfer_mode = *m;
              }},
        MEAL_INT("transfer.epochs", transfer_epochs, std::size_t),
        MEAL_INT("transfer.batch_size", transfer_batch_size, std::size_t),
        Entry{"transfer.lr", [](const RunConfig& c) { return c.transfer_lr ? fmt_real(*c.transfer_lr) : std::string(); },
              [](RunConfig& c, const std::string& k, const std::string& v) {
                if (trim(v).empty()) c.transfer_lr.reset(); else c.transfer_lr = parse_real(k, v);
              }},
        MEAL_REAL("transfer.weight_decay", transfer_weight_decay),
        Entry{"transfer.objective",
              [](const RunConfig& c) { return std::string(transfer::objective_name(c.transfer_objective)); },
              [](RunConfig& c, const std::string& k, const std::string& v) {
                const auto o = transfer::parse_objective(v);
                if (!o) throw ConfigError("config key '" + k + "': unknown objective '" + v + "'");
                c.transfer_objective = *o;
              }},
        Entry{"transfer.init", [](const RunConfig& c) { return c.transfer_init.string(); },
              [](RunConfig& c, const std::string&, const std::string& v) { c.transfer_init = v; }},

        MEAL_INT("eval.batch_size", eval_batch, std::size_t),
        MEAL_BOOL("eval.train_eval", train_eval),

        Entry{"analysis.percentile_layers", [](const RunConfig& c) { return join(c.percentile_layers, [](const std::string& s) { return s; }); },
              [](RunConfig& c, const std::string&, const std::string& v) { c.percentile_layers = split_list(v); }},
        Entry{"analysis.histogram_layers", [](const RunConfig& c) { return join(c.histogram_layers, [](const std::string& s) { return s; }); },
              [](RunConfig& c, const std::string&, const std::string& v) { c.histogram_layers = split_list(v); }, false},
        Entry{"analysis.histogram_bins", [](const RunConfig& c) { return std::to_string(c.histogram_bins); },
              [](RunConfig& c, const std::string& k, const std::string& v) { c.histogram_bins = parse_int<std::size_t>(k, v); }, false},
        Entry{"analysis.similar_pair",
              [](const RunConfig& c) { return std::to_string(c.similar_pair.first) + "," + std::to_string(c.similar_pair.second); },
              [](RunConfig& c, const std::string& k, const std::string& v) { c.similar_pair = parse_pair(k, v); }, false},
        Entry{"analysis.dissimilar_pair",
              [](const RunConfig& c) { return std::to_string(c.dissimilar_pair.first) + "," + std::to_string(c.dissimilar_pair.second); },
              [](RunConfig& c, const std::string& k, const std::string& v) { c.dissimilar_pair = parse_pair(k, v); }, false},
        Entry{"analysis.embedding_classes",
              [](const RunConfig& c) { return join(c.embedding_classes, [](std::int32_t x) { return std::to_string(x); }); },
              [](RunConfig& c, const std::string& k, const std::string& v) { c.embedding_classes = parse_int_list<std::int32_t>(k, v); }, false},
    };
    return e;
  }();
  return entries;
}

#undef MEAL_INT
#undef MEAL_REAL
#undef MEAL_BOOL
#undef MEAL_STRING

const Entry& find(const std::string& key) {
  for (const Entry& e : table())
    if (key == e.key) return e;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

std::vector<std::string> keys() {
  std::vector<std::string> out;
  for (const Entry& e : table()) out.emplace_back(e.key);
  return out;
}

void set(RunConfig& config, const std::string& key, const std::string& value) {
  find(key).set(config, key, trim(value));
}

std::string get(const RunConfig& config, const std::string& key) { return find(key).get(config); }

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set(config, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

RunConfig parse(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " is not 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (std::find(seen.begin(), seen.end(), key) != seen.end())
      throw ConfigError("config key '" + key + "' appears twice");
    seen.push_back(key);
    set(c, key, line.substr(eq + 1));
  }
  return c;
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string serialize(const RunConfig& config) {
  std::string out;
  for (const Entry& e : table()) out += std::string(e.key) + " = " + e.get(config) + "\n";
  return out;
}

std::uint64_t fingerprint(const RunConfig& config) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const Entry& e : table()) {
    if (!e.affects_results) continue;
    for (char ch : std::string(e.key) + "=" + e.get(config) + "\n") {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

void validate(const RunConfig& c) {
  if (c.name.empty() || c.name.find('/') != std::string::npos) throw ConfigError("run.name must be a plain name");
  if (c.kernels != "auto" && !kernels::parse_backend(c.kernels))
    throw ConfigError("run.kernels must be auto, scalar or avx2");
  c.schedule.validate();
  model_spec(c).validate();
  if (c.data.name == "cifar10" && c.data.num_classes != 10) throw ConfigError("cifar10 has 10 classes");
  if (c.min_crop_area <= 0.0 || c.min_crop_area > 1.0) throw ConfigError("data.min_crop_area must be in (0, 1]");
  if (c.adv_weight < 0.0) throw ConfigError("distill.adv_weight must be non-negative");
  if (c.eval_batch == 0) throw ConfigError("eval.batch_size must be positive");
  if (c.histogram_bins == 0) throw ConfigError("analysis.histogram_bins must be positive");
}

std::filesystem::path run_dir(const RunConfig& c) { return c.output_dir / c.name; }

data::Normalization normalization(const RunConfig& c) {
  data::Normalization n = c.data.name == "cifar10" ? data::cifar10_normalization() : data::Normalization{};
  if (c.mean) n.mean = *c.mean;
  if (c.stddev) n.stddev = *c.stddev;
  return n;
}

nets::ModelSpec model_spec(const RunConfig& c) {
  return {c.model_name, c.data.num_classes, c.data.resolution, c.tier};
}

train::LoopOptions loop_options(const RunConfig& c) {
  train::LoopOptions o;
  o.seed = c.seed;
  o.min_crop_area = c.min_crop_area;
  o.eval_batch = c.eval_batch;
  o.train_eval = c.train_eval;
  o.percentile_layers = c.percentile_layers;
  o.deterministic = c.deterministic;
  o.config_fingerprint = fingerprint(c);
  return o;
}

train::PretrainConfig pretrain_config(const RunConfig& c) {
  train::PretrainConfig p;
  p.schedule = c.schedule;
  p.sgd = {c.momentum, c.pretrain_weight_decay};
  p.loop = loop_options(c);
  return p;
}

train::DistillConfig distill_config(const RunConfig& c) {
  train::DistillConfig d;
  d.schedule = c.schedule;
  d.weight_decay = c.distill_weight_decay;
  d.momentum = c.momentum;
  d.adv_weight = c.adv_weight;
  d.discriminator_enabled = c.discriminator_enabled;
  d.discriminator_hidden = c.discriminator_hidden;
  d.init_mode = c.init_mode;
  d.use_hard_labels_in_distill = c.use_hard_labels;
  d.check_crop_consistency = c.check_crop_consistency;
  d.loop = loop_options(c);
  return d;
}

transfer::TransferConfig transfer_config(const RunConfig& c) {
  transfer::TransferConfig t = transfer::TransferConfig::defaults(c.transfer_mode);
  t.epochs = c.transfer_epochs;
  t.batch_size = c.transfer_batch_size;
  if (c.transfer_lr) t.lr = *c.transfer_lr;
  t.momentum = c.momentum;
  t.weight_decay = c.transfer_weight_decay;
  t.objective = c.transfer_objective;
  t.loop = loop_options(c);
  return t;
}

}  // namespace meal::config
