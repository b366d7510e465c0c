#include "meal/transfer.hpp"

#include <chrono>
#include <cmath>

#include "meal/analysis.hpp"
#include "meal/error.hpp"
#include "meal/kernels/kernels.hpp"
#include "meal/log.hpp"
#include "meal/seed.hpp"

namespace meal::transfer {

std::string_view mode_name(Mode mode) { return mode == Mode::finetune ? "finetune" : "linear-probe"; }

std::optional<Mode> parse_mode(std::string_view name) {
  if (name == "finetune") return Mode::finetune;
  if (name == "linear-probe") return Mode::linear_probe;
  return std::nullopt;
}

std::string_view objective_name(Objective objective) {
  return objective == Objective::softmax_ce ? "softmax-ce" : "sigmoid-ce";
}

std::optional<Objective> parse_objective(std::string_view name) {
  if (name == "softmax-ce") return Objective::softmax_ce;
  if (name == "sigmoid-ce") return Objective::sigmoid_ce;
  return std::nullopt;
}

TransferConfig TransferConfig::defaults(Mode mode) {
  TransferConfig c;
  c.mode = mode;
  c.lr = mode == Mode::finetune ? 0.01 : 0.1;
  return c;
}

losses::LossWithGrad multilabel_sigmoid_ce(const Tensor& targets, const Tensor& logits) {
  if (targets.shape() != logits.shape() || logits.rank() != 2)
    throw ShapeError("multilabel_sigmoid_ce: targets " + shape_string(targets.shape()) + " vs logits " +
                     shape_string(logits.shape()));
  for (real t : targets.values())
    if (t != 0.0 && t != 1.0) throw ConfigError("multilabel_sigmoid_ce: targets must be 0 or 1");
  auto r = losses::bce_with_logits(targets.values(), logits.values());
  r.grad.reshape(logits.shape());
  r.loss.batch_size = logits.dim(0);
  return r;
}

real multilabel_accuracy(const Tensor& logits, const std::vector<std::vector<real>>& targets) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size() || targets.empty())
    throw ShapeError("multilabel_accuracy: logits/targets disagree");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  real total = 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool predicted = logits[i * c + j] > 0.0;
      correct += predicted == (targets[i][j] == 1.0) ? 1 : 0;
    }
    total += static_cast<real>(correct) / static_cast<real>(n);
  }
  return 100.0 * total / static_cast<real>(c);
}

namespace {

train::Accuracy score(const nets::Model& model, const data::Dataset& d, const data::Normalization& norm,
                      const TransferConfig& cfg) {
  const Tensor z = train::predict_logits(model, d, norm, cfg.loop.eval_batch);
  if (d.spec.label_arity == data::LabelArity::multi) {
    const real acc = multilabel_accuracy(z, d.targets);
    return {acc, acc};
  }
  return train::top_k_accuracy(z, d.labels);
}

Tensor target_batch(const data::Dataset& d, std::span<const std::size_t> order, std::size_t b, std::size_t e) {
  const std::size_t c = d.spec.num_classes;
  Tensor t({e - b, c});
  for (std::size_t p = b; p < e; ++p) std::copy(d.targets[order[p]].begin(), d.targets[order[p]].end(), t.row(p - b).begin());
  return t;
}

}  // namespace

TransferResult transfer_run(nets::Model model, const data::Dataset& train, const data::Dataset& val,
                            const data::Normalization& norm, const TransferConfig& cfg) {
  const std::size_t classes = train.spec.num_classes;
  if (cfg.num_classes && *cfg.num_classes != classes)
    throw ConfigError("transfer head is configured for " + std::to_string(*cfg.num_classes) +
                      " classes, dataset has " + std::to_string(classes));
  if (val.spec.num_classes != classes || val.spec.label_arity != train.spec.label_arity)
    throw ConfigError("transfer train/val splits disagree");
  const bool multi = train.spec.label_arity == data::LabelArity::multi;
  if (multi != (cfg.objective == Objective::sigmoid_ce))
    throw ConfigError(std::string("objective ") + std::string(objective_name(cfg.objective)) +
                      " does not fit a " + (multi ? "multi" : "single") + "-label dataset");
  if (train.spec.resolution != model.spec().input_resolution)
    throw ConfigError("transfer dataset resolution " + std::to_string(train.spec.resolution) +
                      " does not match the backbone's " + std::to_string(model.spec().input_resolution));
  if (train.size() < 2) throw ConfigError("transfer train split needs at least two samples");
  train.validate();
  val.validate();
  if (cfg.epochs == 0 || cfg.batch_size < 2 || !(cfg.lr > 0.0)) throw ConfigError("invalid transfer schedule");

  const train::LoopOptions& opt = cfg.loop;
  const train::Schedule schedule{cfg.epochs, cfg.lr, cfg.lr_milestones, 0.1, cfg.batch_size};
  model.reset_head(classes, derive_seed(opt.seed, "transfer-head"));
  const bool probe = cfg.mode == Mode::linear_probe;
  model.freeze_backbone(probe);
  optim::Sgd sgd({cfg.momentum, cfg.weight_decay});
  const std::size_t res = model.spec().input_resolution;

  TransferResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const real lr = train::lr_at(schedule, epoch);
    const auto order = data::epoch_permutation(train.size(), derive_seed(opt.seed, "order", epoch));
    real loss_sum = 0.0;
    std::size_t seen = 0;
    for (const auto& [b, e] : data::batch_ranges(train.size(), cfg.batch_size)) {
      const Tensor x = data::augment_batch(train.images, order, b, e, epoch, res, norm, opt.seed, opt.min_crop_area);
      model.zero_grad();
      Tensor z;
      if (probe) {
        // frozen backbone in inference mode; only the classifier is trained
        z = model.head().forward(model.embedding(x));
      } else {
        z = model.train_forward(x);
      }
      losses::LossWithGrad loss;
      if (multi) {
        loss = multilabel_sigmoid_ce(target_batch(train, order, b, e), z);
      } else {
        std::vector<std::int32_t> y;
        for (std::size_t p = b; p < e; ++p) y.push_back(train.labels[order[p]]);
        loss = losses::hard_label_ce(y, z);
      }
      if (!std::isfinite(loss.loss.value))
        throw NumericalError("transfer loss diverged at epoch " + std::to_string(epoch + 1));
      if (probe)
        (void)model.head().backward(loss.grad, false);
      else
        model.backward(loss.grad);
      sgd.step(model.parameters(), lr);
      loss_sum += loss.loss.value * static_cast<real>(e - b);
      seen += e - b;
    }
    train::MetricsRecord r;
    r.epoch = epoch + 1;
    r.lr = lr;
    r.loss_ce = loss_sum / static_cast<real>(seen);
    const train::Accuracy v = score(model, val, norm, cfg);
    r.val_top1 = v.top1;
    r.val_top5 = v.top5;
    if (opt.train_eval) r.train_top1 = score(model, train, norm, cfg).top1;
    r.seconds = std::chrono::duration<real>(std::chrono::steady_clock::now() - t0).count();
    log::info("transfer epoch " + std::to_string(r.epoch) + " loss " + std::to_string(r.loss_ce) +
              " val " + std::to_string(r.val_top1));
    result.metrics.push_back(r);
  }
  model.freeze_backbone(false);
  result.final_accuracy = result.metrics.back().val_top1;
  result.checkpoint = ckpt::capture(model, norm, "transfer");
  result.checkpoint.optimizer_velocity = sgd.velocity();
  result.checkpoint.epoch = static_cast<std::int64_t>(cfg.epochs);
  result.checkpoint.config_fingerprint = opt.config_fingerprint;
  result.checkpoint.kernel_backend = std::string(kernels::backend_name(kernels::active_backend()));
  result.checkpoint.reference_top1 = result.final_accuracy;
  return result;
}

TransferResult transfer_run(const ckpt::CheckpointBundle& pretrained, const data::Dataset& train,
                            const data::Dataset& val, const TransferConfig& config) {
  return transfer_run(ckpt::model_from(pretrained), train, val, pretrained.normalization, config);
}

}  // namespace meal::transfer
