#include "meal/ensemble.hpp"

#include <cmath>
#include <thread>

#include "meal/checkpoint.hpp"
#include "meal/error.hpp"
#include "meal/losses.hpp"

namespace meal::ensemble {

Ensemble::Ensemble(std::vector<nets::Model> teachers, Preprocessing preprocessing)
    : teachers_(std::move(teachers)), preprocessing_(preprocessing) {
  if (teachers_.empty()) throw ConfigError("ensemble needs at least one teacher");
  const auto& first = teachers_.front().spec();
  for (std::size_t t = 0; t < teachers_.size(); ++t) {
    const auto& s = teachers_[t].spec();
    if (s.num_classes != first.num_classes)
      throw ConfigError("teacher " + std::to_string(t) + " has " + std::to_string(s.num_classes) +
                        " classes, teacher 0 has " + std::to_string(first.num_classes));
    if (s.input_resolution != first.input_resolution)
      throw ConfigError("teacher " + std::to_string(t) + " expects resolution " +
                        std::to_string(s.input_resolution) + ", teacher 0 expects " +
                        std::to_string(first.input_resolution));
  }
  if (preprocessing_.input_resolution == 0) preprocessing_.input_resolution = first.input_resolution;
  if (preprocessing_.input_resolution != first.input_resolution)
    throw ConfigError("preprocessing resolution " + std::to_string(preprocessing_.input_resolution) +
                      " does not match teacher resolution " + std::to_string(first.input_resolution));
}

Ensemble Ensemble::load(const EnsembleSpec& spec) {
  if (spec.teachers.empty()) throw ConfigError("ensemble needs at least one teacher");
  std::vector<nets::Model> models;
  std::optional<Preprocessing> prep = spec.preprocessing;
  for (const auto& ref : spec.teachers) {
    if (!std::filesystem::exists(ref.checkpoint))
      throw IoError("teacher checkpoint not found: " + ref.checkpoint.string());
    const ckpt::CheckpointBundle bundle = ckpt::load(ref.checkpoint);
    if (ref.expected_spec && !(*ref.expected_spec == bundle.model_spec))
      throw ConfigError("teacher checkpoint " + ref.checkpoint.string() +
                        " holds a different model spec than configured");
    const Preprocessing mine{bundle.model_spec.input_resolution, bundle.normalization};
    if (!prep) {
      prep = mine;
    } else if (!(*prep == mine)) {
      throw ConfigError("teacher checkpoint " + ref.checkpoint.string() +
                        " was trained with a different preprocessing contract");
    }
    models.push_back(ckpt::model_from(bundle));
  }
  return Ensemble(std::move(models), *prep);
}

EnsembleOutput Ensemble::forward(const Tensor& batch, bool parallel) const {
  const std::size_t k = teachers_.size();
  std::vector<Tensor> logp(k), probs(k);
  auto run = [&](std::size_t t) {
    const Tensor z = teachers_[t].logits(batch);
    probs[t] = losses::softmax(z);
    logp[t] = losses::log_softmax(z);
  };
  if (parallel && k > 1) {
    std::vector<std::jthread> workers;
    for (std::size_t t = 1; t < k; ++t) workers.emplace_back(run, t);
    run(0);
  } else {
    for (std::size_t t = 0; t < k; ++t) run(t);
  }
  EnsembleOutput out{Tensor(probs[0].shape()), Tensor(probs[0].shape())};
  const real inv_k = 1.0 / static_cast<real>(k);
  const real log_k = std::log(static_cast<real>(k));
  for (std::size_t i = 0; i < out.probs.size(); ++i) {
    real p = 0.0, top = logp[0][i];
    for (std::size_t t = 0; t < k; ++t) {
      p += probs[t][i];
      top = std::max(top, logp[t][i]);
    }
    real s = 0.0;
    for (std::size_t t = 0; t < k; ++t) s += std::exp(logp[t][i] - top);
    out.probs[i] = p * inv_k;
    out.log_probs[i] = top + std::log(s) - log_k;
  }
  return out;
}

void Ensemble::require_compatible(const data::DatasetSpec& dataset) const {
  if (dataset.num_classes != num_classes())
    throw ConfigError("dataset '" + dataset.name + "' has " + std::to_string(dataset.num_classes) +
                      " classes, teachers predict " + std::to_string(num_classes()));
  if (dataset.resolution != preprocessing_.input_resolution)
    throw ConfigError("dataset resolution " + std::to_string(dataset.resolution) +
                      " does not match teacher resolution " +
                      std::to_string(preprocessing_.input_resolution));
  if (!(dataset.normalization == preprocessing_.normalization))
    throw ConfigError("dataset normalization differs from the teachers' preprocessing");
}

Tensor teacher_softmax(const nets::Model& teacher, const Tensor& batch) {
  return losses::softmax(teacher.logits(batch));
}

Tensor ensemble_predict(const Ensemble& ensemble, const Tensor& batch) {
  return ensemble.forward(batch).probs;
}

SupervisionTable supervision_stats(const Tensor& probs, std::span<const std::int32_t> labels) {
  if (probs.rank() != 2) throw ShapeError("supervision_stats expects [N, C] probabilities");
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  if (labels.size() != n)
    throw ShapeError("supervision_stats: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  SupervisionTable table;
  table.num_classes = c;
  table.counts.assign(c, 0);
  std::vector<std::vector<real>> sums(c, std::vector<real>(c, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw ConfigError("label " + std::to_string(y) + " out of range");
    const auto row = probs.row(i);
    for (std::size_t j = 0; j < c; ++j) sums[y][j] += row[j];
    ++table.counts[y];
  }
  table.rows.resize(c);
  table.absent.assign(c, false);
  for (std::size_t k = 0; k < c; ++k) {
    if (table.counts[k] == 0) {
      table.absent[k] = true;
      continue;
    }
    table.rows[k] = sums[k];
    for (real& v : table.rows[k]) v /= static_cast<real>(table.counts[k]);
  }
  return table;
}

SupervisionTable supervision_stats(const Ensemble& ensemble, const data::Dataset& dataset,
                                   std::size_t batch_size) {
  ensemble.require_compatible(dataset.spec);
  const std::size_t n = dataset.size();
  const std::size_t c = ensemble.num_classes();
  Tensor all({n, c});
  const auto& prep = ensemble.preprocessing();
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    std::vector<Tensor> samples;
    for (std::size_t i = start; i < end; ++i)
      samples.push_back(data::transform_eval(dataset.images[i], prep.input_resolution, prep.normalization));
    const Tensor probs = ensemble.forward(data::stack(samples)).probs;
    std::copy(probs.values().begin(), probs.values().end(), all.data() + start * c);
  }
  return supervision_stats(all, dataset.labels);
}

}  // namespace meal::ensemble
