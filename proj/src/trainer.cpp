#include "meal/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "meal/analysis.hpp"
#include "meal/discriminator.hpp"
#include "meal/error.hpp"
#include "meal/kernels/kernels.hpp"
#include "meal/log.hpp"
#include "meal/losses.hpp"
#include "meal/seed.hpp"

namespace meal::train {

using json = nlohmann::json;

void Schedule::validate() const {
  if (total_epochs == 0) throw ConfigError("schedule.total_epochs must be positive");
  if (!(lr_init > 0.0) || !std::isfinite(lr_init)) throw ConfigError("schedule.lr_init must be positive");
  if (!(decay > 0.0) || !std::isfinite(decay)) throw ConfigError("schedule.lr_decay must be positive");
  if (batch_size < 2) throw ConfigError("schedule.batch_size must be at least 2");
  if (!std::is_sorted(milestones.begin(), milestones.end()))
    throw ConfigError("schedule.lr_milestones must be ascending");
}

Schedule paper_schedule() { return {180, 0.01, {100}, 0.1, 512}; }

Schedule desk_schedule(std::size_t total_epochs) {
  const auto milestone = static_cast<std::size_t>(std::ceil(static_cast<real>(total_epochs) / 1.8));
  return {total_epochs, 0.01, {milestone}, 0.1, 128};
}

real lr_at(const Schedule& schedule, std::size_t epoch) {
  if (epoch >= schedule.total_epochs)
    throw ConfigError("epoch " + std::to_string(epoch) + " outside schedule of " +
                      std::to_string(schedule.total_epochs) + " epochs");
  real lr = schedule.lr_init;
  for (std::size_t m : schedule.milestones)
    if (m <= epoch) lr *= schedule.decay;
  return lr;
}

std::string_view init_mode_name(InitMode mode) {
  switch (mode) {
    case InitMode::random: return "random";
    case InitMode::hard_pretrained: return "hard-label-pretrained";
    case InitMode::superior: return "superior";
  }
  return "?";
}

std::optional<InitMode> parse_init_mode(std::string_view name) {
  for (InitMode m : {InitMode::random, InitMode::hard_pretrained, InitMode::superior})
    if (init_mode_name(m) == name) return m;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Metrics

bool MetricsRecord::same_numbers(const MetricsRecord& o) const {
  return epoch == o.epoch && lr == o.lr && loss_ce == o.loss_ce && loss_kl == o.loss_kl &&
         loss_adv == o.loss_adv && loss_disc == o.loss_disc && disc_accuracy == o.disc_accuracy &&
         train_top1 == o.train_top1 && val_top1 == o.val_top1 && val_top5 == o.val_top5 &&
         percentiles == o.percentiles;
}

std::string to_json_line(const MetricsRecord& r) {
  json j;
  j["epoch"] = r.epoch;
  j["lr"] = r.lr;
  j["loss_ce"] = r.loss_ce;
  if (r.loss_kl) j["loss_kl"] = *r.loss_kl;
  if (r.loss_adv) j["loss_adv"] = *r.loss_adv;
  if (r.loss_disc) j["loss_disc"] = *r.loss_disc;
  if (r.disc_accuracy) j["disc_accuracy"] = *r.disc_accuracy;
  if (r.train_top1) j["train_top1"] = *r.train_top1;
  j["val_top1"] = r.val_top1;
  j["val_top5"] = r.val_top5;
  j["seconds"] = r.seconds;
  json p = json::object();
  for (const auto& [layer, v] : r.percentiles) p[layer] = v;
  j["percentiles"] = p;
  return j.dump();
}

MetricsRecord parse_metrics_line(const std::string& line) {
  MetricsRecord r;
  try {
    const json j = json::parse(line);
    r.epoch = j.at("epoch").get<std::size_t>();
    r.lr = j.at("lr").get<real>();
    r.loss_ce = j.at("loss_ce").get<real>();
    auto opt = [&](const char* key, std::optional<real>& dst) {
      if (j.contains(key)) dst = j.at(key).get<real>();
    };
    opt("loss_kl", r.loss_kl);
    opt("loss_adv", r.loss_adv);
    opt("loss_disc", r.loss_disc);
    opt("disc_accuracy", r.disc_accuracy);
    opt("train_top1", r.train_top1);
    r.val_top1 = j.at("val_top1").get<real>();
    r.val_top5 = j.at("val_top5").get<real>();
    r.seconds = j.at("seconds").get<real>();
    if (j.contains("percentiles"))
      for (const auto& [layer, v] : j.at("percentiles").items())
        r.percentiles[layer] = v.get<std::array<real, 5>>();
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed metrics line: ") + e.what());
  }
  return r;
}

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file " + path.string());
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(parse_metrics_line(line));
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

Tensor predict_logits(const nets::Model& model, const data::Dataset& dataset,
                      const data::Normalization& norm, std::size_t batch) {
  if (dataset.size() == 0) throw ConfigError("cannot evaluate on an empty dataset");
  const std::size_t n = dataset.size(), c = model.spec().num_classes;
  const std::size_t res = model.spec().input_resolution;
  Tensor out({n, c});
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t end = std::min(n, start + batch);
    std::vector<Tensor> samples;
    samples.reserve(end - start);
    for (std::size_t i = start; i < end; ++i)
      samples.push_back(data::transform_eval(dataset.images[i], res, norm));
    const Tensor z = model.logits(data::stack(samples));
    std::copy(z.values().begin(), z.values().end(), out.data() + start * c);
  }
  return out;
}

Accuracy top_k_accuracy(const Tensor& logits, std::span<const std::int32_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size())
    throw ShapeError("top_k_accuracy: logits/labels disagree");
  if (labels.empty()) throw ConfigError("cannot evaluate on an empty dataset");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  const std::size_t k = std::min<std::size_t>(5, c);
  std::size_t top1 = 0, top5 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = logits.row(i);
    const auto y = static_cast<std::size_t>(labels[i]);
    if (labels[i] < 0 || y >= c) throw ConfigError("label out of range in evaluation");
    // rank of the true class; ties are broken toward the lower index
    std::size_t better = 0;
    for (std::size_t j = 0; j < c; ++j)
      if (row[j] > row[y] || (row[j] == row[y] && j < y)) ++better;
    top1 += better == 0 ? 1 : 0;
    top5 += better < k ? 1 : 0;
  }
  return {100.0 * static_cast<real>(top1) / static_cast<real>(n),
          100.0 * static_cast<real>(top5) / static_cast<real>(n)};
}

Accuracy evaluate(const nets::Model& model, const data::Dataset& dataset,
                  const data::Normalization& norm, std::size_t batch) {
  return top_k_accuracy(predict_logits(model, dataset, norm, batch), dataset.labels);
}

// ---------------------------------------------------------------------------
// Shared loop machinery

namespace {

std::uint64_t hash_pixels(const Tensor& t) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
  for (std::size_t i = 0; i < t.size() * sizeof(real); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string rng_descriptor(std::uint64_t seed, std::size_t epoch) {
  return "derived seed=" + std::to_string(seed) + " epoch=" + std::to_string(epoch);
}

void check_resume(const ckpt::CheckpointBundle& b, const nets::Model& model, const Schedule& schedule,
                  const LoopOptions& opt, std::string_view kind) {
  if (b.kind != kind)
    throw ConfigError("cannot resume a " + std::string(kind) + " run from a '" + b.kind + "' checkpoint");
  if (!(b.model_spec == model.spec())) throw ConfigError("resume checkpoint holds a different model");
  if (b.config_fingerprint != opt.config_fingerprint)
    throw ConfigError("resume checkpoint was written under a different configuration");
  if (b.epoch < 0 || static_cast<std::size_t>(b.epoch) > schedule.total_epochs)
    throw ConfigError("resume checkpoint epoch outside the schedule");
  if (b.rng_state != rng_descriptor(opt.seed, static_cast<std::size_t>(b.epoch)))
    throw ConfigError("resume checkpoint RNG state does not match the configured seed");
  const std::string_view backend = kernels::backend_name(kernels::active_backend());
  if (opt.deterministic && b.kernel_backend != backend)
    throw ConfigError("deterministic resume needs the '" + b.kernel_backend +
                      "' kernels, this process uses '" + std::string(backend) + "'");
}

void require_finite_loss(real v, std::string_view what, std::size_t epoch, std::size_t step) {
  if (!std::isfinite(v))
    throw NumericalError(std::string(what) + " diverged (non-finite) at epoch " + std::to_string(epoch + 1) +
                         ", step " + std::to_string(step));
}

void fill_epoch_metrics(MetricsRecord& r, const nets::Model& model, const data::Dataset& train,
                        const data::Dataset& val, const data::Normalization& norm,
                        const LoopOptions& opt) {
  const Accuracy v = evaluate(model, val, norm, opt.eval_batch);
  r.val_top1 = v.top1;
  r.val_top5 = v.top5;
  if (opt.train_eval) r.train_top1 = evaluate(model, train, norm, opt.eval_batch).top1;
  for (const std::string& sel : opt.percentile_layers) {
    const auto snap = analysis::percentile_snapshot(model, sel);
    r.percentiles[snap.layer] = snap.values;
  }
}

void require_labels(const data::Dataset& d, const char* which) {
  if (d.size() == 0) throw ConfigError(std::string(which) + " split is empty");
  if (d.spec.label_arity != data::LabelArity::single)
    throw ConfigError(std::string(which) + " split must carry single class labels");
}

}  // namespace

// ---------------------------------------------------------------------------
// Pretraining

RunResult pretrain_hard(nets::Model model, const data::Dataset& train, const data::Dataset& val,
                        const data::Normalization& norm, const PretrainConfig& config,
                        const RunControl& control) {
  config.schedule.validate();
  require_labels(train, "train");
  require_labels(val, "val");
  train.validate();
  if (train.spec.num_classes != model.spec().num_classes)
    throw ConfigError("dataset has " + std::to_string(train.spec.num_classes) + " classes, model has " +
                      std::to_string(model.spec().num_classes));
  const LoopOptions& opt = config.loop;
  const std::size_t res = model.spec().input_resolution;
  optim::Sgd sgd(config.sgd);

  std::size_t start = 0;
  if (control.resume) {
    check_resume(*control.resume, model, config.schedule, opt, "pretrain");
    ckpt::restore_weights(model, control.resume->weights);
    sgd.set_velocity(control.resume->optimizer_velocity);
    start = static_cast<std::size_t>(control.resume->epoch);
  }

  auto bundle = [&](std::size_t epoch, std::optional<real> ref) {
    ckpt::CheckpointBundle b = ckpt::capture(model, norm, "pretrain");
    b.optimizer_velocity = sgd.velocity();
    b.epoch = static_cast<std::int64_t>(epoch);
    b.config_fingerprint = opt.config_fingerprint;
    b.rng_state = rng_descriptor(opt.seed, epoch);
    b.kernel_backend = std::string(kernels::backend_name(kernels::active_backend()));
    b.reference_top1 = ref;
    return b;
  };

  RunResult result;
  std::optional<real> reference = control.resume ? control.resume->reference_top1 : std::nullopt;
  const std::size_t stop = std::min(config.schedule.total_epochs, control.stop_after.value_or(SIZE_MAX));
  for (std::size_t epoch = start; epoch < stop; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const real lr = lr_at(config.schedule, epoch);
    const auto order = data::epoch_permutation(train.size(), derive_seed(opt.seed, "order", epoch));
    real loss_sum = 0.0;
    std::size_t seen = 0, step = 0;
    for (const auto& [b, e] : data::batch_ranges(train.size(), config.schedule.batch_size)) {
      const Tensor x = data::augment_batch(train.images, order, b, e, epoch, res, norm, opt.seed, opt.min_crop_area);
      std::vector<std::int32_t> y;
      for (std::size_t p = b; p < e; ++p) y.push_back(train.labels[order[p]]);
      model.zero_grad();
      const Tensor z = model.train_forward(x);
      const auto loss = losses::hard_label_ce(y, z);
      require_finite_loss(loss.loss.value, "hard-label loss", epoch, step);
      model.backward(loss.grad);
      sgd.step(model.parameters(), lr);
      loss_sum += loss.loss.value * static_cast<real>(e - b);
      seen += e - b;
      ++step;
    }
    MetricsRecord r;
    r.epoch = epoch + 1;
    r.lr = lr;
    r.loss_ce = loss_sum / static_cast<real>(seen);
    fill_epoch_metrics(r, model, train, val, norm, opt);
    r.seconds = std::chrono::duration<real>(std::chrono::steady_clock::now() - t0).count();
    reference = r.val_top1;
    log::info("pretrain epoch " + std::to_string(r.epoch) + " loss " + std::to_string(r.loss_ce) +
              " val top-1 " + std::to_string(r.val_top1));
    result.metrics.push_back(r);
    if (control.on_epoch) control.on_epoch(r, bundle(epoch + 1, reference));
  }
  if (!reference && start == stop) reference = evaluate(model, val, norm, opt.eval_batch).top1;
  result.checkpoint = bundle(std::max(start, stop), reference);
  return result;
}

// ---------------------------------------------------------------------------
// Distillation

namespace {

struct StepOutcome {
  real ce = 0.0, kl = 0.0, adv = 0.0, disc = 0.0, disc_acc = 0.0;
};

/// One distillation step. Ground-truth labels are only visible here when the
/// configuration explicitly adds hard-label CE.
class DistillStep {
 public:
  DistillStep(nets::Model& student, const ensemble::Ensemble& teachers, const DistillConfig& config,
              optim::Sgd& sgd, disc::Discriminator* d, optim::Sgd* dsgd)
      : student_(student), teachers_(teachers), config_(config), sgd_(sgd), d_(d), dsgd_(dsgd) {}

  StepOutcome operator()(const Tensor& images, std::span<const std::int32_t> hard_labels, real lr) {
    const std::uint64_t teacher_hash = config_.check_crop_consistency ? hash_pixels(images) : 0;
    const auto soft = teachers_.forward(images, !config_.loop.deterministic);

    if (config_.check_crop_consistency && hash_pixels(images) != teacher_hash)
      throw Error("crop consistency check failed: student input differs from teacher input");
    student_.zero_grad();
    const Tensor z = student_.train_forward(images);
    auto ce = losses::ce_loss(soft.probs, z);
    StepOutcome out;
    out.ce = ce.loss.value;
    out.kl = losses::kl_loss(soft.probs, z).loss.value;
    Tensor grad = std::move(ce.grad);
    if (config_.use_hard_labels_in_distill) {
      const auto hard = losses::hard_label_ce(hard_labels, z);
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += hard.grad[i];
      out.ce += hard.loss.value;
    }
    if (d_ != nullptr) {
      const auto adv = disc::adversarial_student_loss(*d_, z);
      out.adv = adv.loss.value;
      kernels::active().axpy(grad.size(), config_.adv_weight, adv.grad.data(), grad.data());
    }
    student_.backward(grad);
    sgd_.step(student_.parameters(), lr);
    if (d_ != nullptr) {
      // z is a detached copy of the pre-update student output. The ensemble side
      // is log p-bar, the logit vector whose softmax is exactly the soft target.
      out.disc = disc::discriminator_step(*d_, *dsgd_, lr, soft.log_probs, z).value;
      out.disc_acc = disc::discriminator_accuracy(*d_, soft.log_probs, z);
    }
    return out;
  }

 private:
  nets::Model& student_;
  const ensemble::Ensemble& teachers_;
  const DistillConfig& config_;
  optim::Sgd& sgd_;
  disc::Discriminator* d_;
  optim::Sgd* dsgd_;
};

}  // namespace

RunResult distill(nets::Model student, const ensemble::Ensemble& teachers, const data::Dataset& train,
                  const data::Dataset& val, const DistillConfig& config, const RunControl& control) {
  config.schedule.validate();
  if (!(config.adv_weight >= 0.0)) throw ConfigError("adv_weight must be non-negative");
  teachers.require_compatible(train.spec);
  teachers.require_compatible(val.spec);
  if (student.spec().num_classes != teachers.num_classes())
    throw ConfigError("student has " + std::to_string(student.spec().num_classes) +
                      " classes, teachers predict " + std::to_string(teachers.num_classes()));
  if (student.spec().input_resolution != teachers.preprocessing().input_resolution)
    throw ConfigError("student and teachers must see the same crop resolution");
  require_labels(val, "val");
  if (train.size() == 0) throw ConfigError("train split is empty");
  if (config.use_hard_labels_in_distill) require_labels(train, "train");

  const LoopOptions& opt = config.loop;
  const data::Normalization& norm = teachers.preprocessing().normalization;
  const std::size_t res = student.spec().input_resolution;
  optim::Sgd sgd({config.momentum, config.weight_decay});

  std::optional<disc::Discriminator> d;
  optim::Sgd dsgd({config.momentum, config.weight_decay});
  if (config.discriminator_enabled)
    d.emplace(disc::DiscriminatorSpec{teachers.num_classes(), config.discriminator_hidden, true},
              derive_seed(opt.seed, "discriminator"));

  std::size_t start = 0;
  if (control.resume) {
    check_resume(*control.resume, student, config.schedule, opt, "distill");
    ckpt::restore_weights(student, control.resume->weights);
    sgd.set_velocity(control.resume->optimizer_velocity);
    if (d.has_value() != control.resume->discriminator.has_value())
      throw ConfigError("resume checkpoint disagrees about the discriminator");
    if (d) ckpt::restore_discriminator(*d, dsgd, *control.resume->discriminator);
    start = static_cast<std::size_t>(control.resume->epoch);
  }

  auto bundle = [&](std::size_t epoch, std::optional<real> ref) {
    ckpt::CheckpointBundle b = ckpt::capture(student, norm, "distill");
    b.optimizer_velocity = sgd.velocity();
    if (d) b.discriminator = ckpt::capture_discriminator(*d, dsgd);
    b.epoch = static_cast<std::int64_t>(epoch);
    b.config_fingerprint = opt.config_fingerprint;
    b.rng_state = rng_descriptor(opt.seed, epoch);
    b.kernel_backend = std::string(kernels::backend_name(kernels::active_backend()));
    b.reference_top1 = ref;
    return b;
  };

  DistillStep step_fn(student, teachers, config, sgd, d ? &*d : nullptr, &dsgd);
  // Only images reach the step unless hard labels are requested.
  const std::span<const data::Image> images = train.images;
  const std::span<const std::int32_t> labels =
      config.use_hard_labels_in_distill ? std::span<const std::int32_t>(train.labels)
                                        : std::span<const std::int32_t>();

  RunResult result;
  std::optional<real> reference = control.resume ? control.resume->reference_top1 : std::nullopt;
  const std::size_t stop = std::min(config.schedule.total_epochs, control.stop_after.value_or(SIZE_MAX));
  for (std::size_t epoch = start; epoch < stop; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const real lr = lr_at(config.schedule, epoch);
    const auto order = data::epoch_permutation(images.size(), derive_seed(opt.seed, "order", epoch));
    StepOutcome sum;
    std::size_t seen = 0, step = 0;
    for (const auto& [b, e] : data::batch_ranges(images.size(), config.schedule.batch_size)) {
      const Tensor x = data::augment_batch(images, order, b, e, epoch, res, norm, opt.seed, opt.min_crop_area);
      std::vector<std::int32_t> y;
      if (!labels.empty())
        for (std::size_t p = b; p < e; ++p) y.push_back(labels[order[p]]);
      const StepOutcome s = step_fn(x, y, lr);
      require_finite_loss(s.ce, "distillation loss", epoch, step);
      const auto w = static_cast<real>(e - b);
      sum.ce += s.ce * w;
      sum.kl += s.kl * w;
      sum.adv += s.adv * w;
      sum.disc += s.disc * w;
      sum.disc_acc += s.disc_acc * w;
      seen += e - b;
      ++step;
    }
    const auto n = static_cast<real>(seen);
    MetricsRecord r;
    r.epoch = epoch + 1;
    r.lr = lr;
    r.loss_ce = sum.ce / n;
    r.loss_kl = sum.kl / n;
    if (d) {
      r.loss_adv = sum.adv / n;
      r.loss_disc = sum.disc / n;
      r.disc_accuracy = sum.disc_acc / n;
    }
    fill_epoch_metrics(r, student, train, val, norm, opt);
    r.seconds = std::chrono::duration<real>(std::chrono::steady_clock::now() - t0).count();
    reference = r.val_top1;
    log::info("distill epoch " + std::to_string(r.epoch) + " ce " + std::to_string(r.loss_ce) +
              " val top-1 " + std::to_string(r.val_top1));
    result.metrics.push_back(r);
    if (control.on_epoch) control.on_epoch(r, bundle(epoch + 1, reference));
  }
  result.checkpoint = bundle(std::max(start, stop), reference);
  return result;
}

}  // namespace meal::train
