#include "meal/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "meal/analysis.hpp"
#include "meal/checkpoint.hpp"
#include "meal/config.hpp"
#include "meal/ensemble.hpp"
#include "meal/error.hpp"
#include "meal/kernels/kernels.hpp"
#include "meal/log.hpp"
#include "meal/seed.hpp"
#include "meal/trainer.hpp"
#include "meal/transfer.hpp"

namespace meal::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kConfigFile = "config.txt";
constexpr const char* kMetricsFile = "metrics.jsonl";
constexpr const char* kLatest = "latest.ckpt";

struct RunOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  bool force = false;
  bool resume = false;
  bool deterministic = false;
  bool verbose = false;
  std::size_t stop_after = 0;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config_path, "Run config file (key = value lines)");
  cmd->add_option("--set", o.overrides, "Override a config key: --set key=value (repeatable)");
  cmd->add_flag("--force", o.force, "Replace an existing run directory");
  cmd->add_flag("--resume", o.resume, "Continue the run from checkpoints/latest.ckpt");
  cmd->add_flag("--deterministic", o.deterministic, "Bit-reproducible execution");
  cmd->add_flag("--verbose", o.verbose, "Log every epoch");
  cmd->add_option("--stop-after", o.stop_after, "Stop after this many completed epochs (0: run to the end)");
}

config::RunConfig build_config(const RunOptions& o) {
  config::RunConfig c = o.config_path.empty() ? config::RunConfig{} : config::load(o.config_path);
  for (const auto& kv : o.overrides) config::apply_override(c, kv);
  if (o.deterministic) c.deterministic = true;
  return c;
}

void apply_runtime(const config::RunConfig& c, bool verbose) {
  if (c.kernels != "auto") kernels::select(*kernels::parse_backend(c.kernels));
  log::threshold() = verbose ? log::Level::info : log::Level::warn;
}

std::string checkpoint_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04zu.ckpt", epoch);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

template <typename F>
void write_with(const fs::path& path, F&& f) {
  std::ostringstream ss;
  f(ss);
  write_text(path, ss.str());
}

/// Creates or reopens the run directory. Returns the checkpoint to resume from, if any.
std::optional<ckpt::CheckpointBundle> prepare_run_dir(const config::RunConfig& c, const RunOptions& o) {
  const fs::path dir = config::run_dir(c);
  if (o.resume) {
    const fs::path latest = dir / "checkpoints" / kLatest;
    if (!fs::exists(latest)) throw IoError("nothing to resume: " + latest.string() + " does not exist");
    const config::RunConfig saved = config::load(dir / kConfigFile);
    if (config::fingerprint(saved) != config::fingerprint(c))
      throw ConfigError("resume config differs from " + (dir / kConfigFile).string());
    ckpt::CheckpointBundle b = ckpt::load(latest);
    // keep only the metrics the checkpoint has seen
    std::vector<train::MetricsRecord> kept;
    if (fs::exists(dir / kMetricsFile))
      for (auto& r : train::read_metrics(dir / kMetricsFile))
        if (static_cast<std::int64_t>(r.epoch) <= b.epoch) kept.push_back(r);
    std::string text;
    for (const auto& r : kept) text += train::to_json_line(r) + "\n";
    write_text(dir / kMetricsFile, text);
    return b;
  }
  if (fs::exists(dir)) {
    if (!o.force) throw ConfigError("run directory " + dir.string() + " already exists (use --force to replace it)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir / "checkpoints");
  fs::create_directories(dir / "analysis");
  write_text(dir / kConfigFile, config::serialize(c));
  write_text(dir / kMetricsFile, "");
  return std::nullopt;
}

void point_latest(const fs::path& ckpt_dir, const std::string& target) {
  const fs::path link = ckpt_dir / kLatest;
  std::error_code ec;
  fs::remove(link, ec);
  fs::create_symlink(target, link, ec);
  if (ec) fs::copy_file(ckpt_dir / target, link, fs::copy_options::overwrite_existing);
}

/// Epoch hook: append metrics, write the epoch checkpoint, move `latest`, prune old ones.
train::RunControl make_control(const config::RunConfig& c, const RunOptions& o,
                               const std::optional<ckpt::CheckpointBundle>& resume) {
  train::RunControl ctl;
  if (resume) ctl.resume = &*resume;
  if (o.stop_after > 0) ctl.stop_after = o.stop_after;
  const fs::path dir = config::run_dir(c);
  const std::size_t keep = c.keep_checkpoints;
  ctl.on_epoch = [dir, keep](const train::MetricsRecord& r, const ckpt::CheckpointBundle& b) {
    {
      std::ofstream m(dir / kMetricsFile, std::ios::app);
      m << train::to_json_line(r) << '\n';
      if (!m) throw IoError("failed appending to " + (dir / kMetricsFile).string());
    }
    const fs::path ckpt_dir = dir / "checkpoints";
    const std::string name = checkpoint_name(r.epoch);
    ckpt::save(b, ckpt_dir / name);
    point_latest(ckpt_dir, name);
    if (keep > 0 && r.epoch > keep) {
      std::error_code ec;
      fs::remove(ckpt_dir / checkpoint_name(r.epoch - keep), ec);
    }
  };
  return ctl;
}

void write_percentiles(const fs::path& dir) {
  const auto records = train::read_metrics(dir / kMetricsFile);
  fs::create_directories(dir / "analysis");
  write_with(dir / "analysis" / "percentiles.csv", [&](std::ostream& out) {
    out << "layer,epoch,p10,p25,p50,p75,p90\n";
    for (const auto& r : records)
      for (const auto& [layer, v] : r.percentiles) {
        out << layer << ',' << r.epoch;
        for (real x : v) {
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.17g", x);
          out << ',' << buf;
        }
        out << '\n';
      }
  });
}

void finish_run(const fs::path& dir, const ckpt::CheckpointBundle& final_bundle, std::ostream& out) {
  // runs with zero remaining epochs still leave a loadable checkpoint
  const fs::path ckpt_dir = dir / "checkpoints";
  const std::string name = checkpoint_name(static_cast<std::size_t>(final_bundle.epoch));
  if (!fs::exists(ckpt_dir / name)) {
    ckpt::save(final_bundle, ckpt_dir / name);
    point_latest(ckpt_dir, name);
  }
  write_percentiles(dir);
  out << "run " << dir.string() << " epoch " << final_bundle.epoch;
  if (final_bundle.reference_top1) out << " val_top1 " << *final_bundle.reference_top1;
  out << '\n';
}

// ---------------------------------------------------------------------------

int cmd_pretrain(const RunOptions& o, std::ostream& out) {
  config::RunConfig c = build_config(o);
  config::validate(c);
  apply_runtime(c, o.verbose);
  const auto train_set = data::load_dataset(c.data, data::Split::train);
  const auto val_set = data::load_dataset(c.data, data::Split::val);
  const auto resume = prepare_run_dir(c, o);
  nets::Model model(config::model_spec(c), derive_seed(c.seed, "model-init"));
  const auto result = train::pretrain_hard(std::move(model), train_set, val_set, config::normalization(c),
                                           config::pretrain_config(c), make_control(c, o, resume));
  finish_run(config::run_dir(c), result.checkpoint, out);
  return 0;
}

ensemble::Ensemble load_teachers(const config::RunConfig& c) {
  if (c.teachers.empty()) throw ConfigError("ensemble.teachers is empty");
  ensemble::EnsembleSpec spec;
  for (const auto& t : c.teachers) spec.teachers.push_back({t, std::nullopt});
  spec.preprocessing = ensemble::Preprocessing{c.data.resolution, config::normalization(c)};
  return ensemble::Ensemble::load(spec);
}

nets::Model initial_student(const config::RunConfig& c) {
  const nets::ModelSpec spec = config::model_spec(c);
  if (c.init_checkpoint.empty()) {
    if (c.init_mode != train::InitMode::random)
      throw ConfigError("distill.init_mode is " + std::string(train::init_mode_name(c.init_mode)) +
                        " but distill.init_checkpoint is empty");
    return nets::Model(spec, derive_seed(c.seed, "student-init"));
  }
  if (!fs::exists(c.init_checkpoint)) throw IoError("student init checkpoint not found: " + c.init_checkpoint.string());
  const auto bundle = ckpt::load(c.init_checkpoint);
  if (!(bundle.model_spec == spec))
    throw ConfigError("student init checkpoint " + c.init_checkpoint.string() + " holds a different model spec");
  return ckpt::model_from(bundle);
}

int cmd_distill(const RunOptions& o, const std::string& disc_flag, const std::optional<double>& adv_weight,
                const std::string& init, std::ostream& out) {
  config::RunConfig c = build_config(o);
  if (!disc_flag.empty()) config::set(c, "discriminator.enabled", disc_flag);
  if (adv_weight) c.adv_weight = *adv_weight;
  if (init == "random") {
    c.init_mode = train::InitMode::random;
    c.init_checkpoint.clear();
  } else if (!init.empty()) {
    c.init_checkpoint = init;
  }
  config::validate(c);
  apply_runtime(c, o.verbose);
  const auto teachers = load_teachers(c);
  const auto train_set = data::load_dataset(c.data, data::Split::train);
  const auto val_set = data::load_dataset(c.data, data::Split::val);
  nets::Model student = initial_student(c);
  const auto resume = prepare_run_dir(c, o);
  const auto result = train::distill(std::move(student), teachers, train_set, val_set, config::distill_config(c),
                                     make_control(c, o, resume));
  finish_run(config::run_dir(c), result.checkpoint, out);
  return 0;
}

int cmd_transfer(const RunOptions& o, const std::string& mode, const std::string& init, std::ostream& out) {
  config::RunConfig c = build_config(o);
  if (!mode.empty()) config::set(c, "transfer.mode", mode);
  if (!init.empty()) c.transfer_init = init == "scratch" ? fs::path() : fs::path(init);
  config::validate(c);
  apply_runtime(c, o.verbose);
  if (o.resume) throw ConfigError("transfer runs cannot be resumed");
  const auto train_set = data::load_dataset(c.data, data::Split::train);
  const auto val_set = data::load_dataset(c.data, data::Split::val);
  nets::Model model = [&] {
    if (c.transfer_init.empty()) {
      nets::ModelSpec spec = config::model_spec(c);
      return nets::Model(spec, derive_seed(c.seed, "scratch-init"));
    }
    if (!fs::exists(c.transfer_init)) throw IoError("transfer init checkpoint not found: " + c.transfer_init.string());
    return ckpt::model_from(ckpt::load(c.transfer_init));
  }();
  (void)prepare_run_dir(c, o);
  const auto result = transfer::transfer_run(std::move(model), train_set, val_set, config::normalization(c),
                                             config::transfer_config(c));
  const fs::path dir = config::run_dir(c);
  std::string text;
  for (const auto& r : result.metrics) text += train::to_json_line(r) + "\n";
  write_text(dir / kMetricsFile, text);
  const std::string name = checkpoint_name(static_cast<std::size_t>(result.checkpoint.epoch));
  ckpt::save(result.checkpoint, dir / "checkpoints" / name);
  point_latest(dir / "checkpoints", name);
  out << "transfer " << transfer::mode_name(c.transfer_mode) << " from "
      << (c.transfer_init.empty() ? std::string("scratch") : c.transfer_init.string()) << " accuracy "
      << result.final_accuracy << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct LoadedRun {
  fs::path dir;
  config::RunConfig config;
  ckpt::CheckpointBundle checkpoint;
};

LoadedRun load_run(const std::string& dir_arg) {
  LoadedRun r;
  r.dir = dir_arg;
  const fs::path cfg = r.dir / kConfigFile;
  if (!fs::exists(cfg)) throw IoError("run config not found: " + cfg.string());
  r.config = config::load(cfg);
  const fs::path latest = r.dir / "checkpoints" / kLatest;
  if (!fs::exists(latest)) throw IoError("run checkpoint not found: " + latest.string());
  r.checkpoint = ckpt::load(latest);
  apply_runtime(r.config, false);
  return r;
}

fs::path analysis_dir(const LoadedRun& r) {
  fs::create_directories(r.dir / "analysis");
  return r.dir / "analysis";
}

int cmd_eval(const std::string& run_arg, const std::string& checkpoint, const std::string& config_path,
             std::ostream& out) {
  config::RunConfig c;
  ckpt::CheckpointBundle bundle;
  std::optional<fs::path> out_dir;
  if (!run_arg.empty()) {
    LoadedRun r = load_run(run_arg);
    c = r.config;
    bundle = std::move(r.checkpoint);
    out_dir = analysis_dir(r);
  } else {
    if (checkpoint.empty()) throw ConfigError("eval needs --run or --checkpoint");
    if (!config_path.empty()) c = config::load(config_path);
    if (!fs::exists(checkpoint)) throw IoError("checkpoint not found: " + checkpoint);
    bundle = ckpt::load(checkpoint);
  }
  const auto val_set = data::load_dataset(c.data, data::Split::val);
  const nets::Model model = ckpt::model_from(bundle);
  const train::Accuracy acc = train::evaluate(model, val_set, bundle.normalization, c.eval_batch);
  nlohmann::json j{{"top1", acc.top1}, {"top5", acc.top5}, {"samples", val_set.size()}};
  if (out_dir) write_text(*out_dir / "eval.json", j.dump() + "\n");
  out << "top1 " << acc.top1 << " top5 " << acc.top5 << '\n';
  return 0;
}

int analyze_classwise(const std::string& run_arg, std::ostream& out) {
  const LoadedRun r = load_run(run_arg);
  const auto val_set = data::load_dataset(r.config.data, data::Split::val);
  const nets::Model model = ckpt::model_from(r.checkpoint);
  const Tensor z = train::predict_logits(model, val_set, r.checkpoint.normalization, r.config.eval_batch);
  std::vector<std::int32_t> preds(z.dim(0));
  for (std::size_t i = 0; i < z.dim(0); ++i) {
    const auto row = z.row(i);
    preds[i] = static_cast<std::int32_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  const auto report = analysis::classwise_accuracy(preds, val_set.labels, val_set.spec.num_classes);
  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
  for (const auto& p : {r.config.similar_pair, r.config.dissimilar_pair})
    if (static_cast<std::size_t>(std::max(p.first, p.second)) < report.num_classes) pairs.push_back(p);
  const fs::path path = analysis_dir(r) / "classwise.csv";
  write_with(path, [&](std::ostream& s) { analysis::write_classwise_csv(s, report, pairs); });
  out << path.string() << '\n';
  return 0;
}

int analyze_supervision(const std::string& run_arg, std::ostream& out) {
  const LoadedRun r = load_run(run_arg);
  const auto teachers = load_teachers(r.config);
  const auto val_set = data::load_dataset(r.config.data, data::Split::val);
  const auto table = ensemble::supervision_stats(teachers, val_set, r.config.eval_batch);
  const fs::path path = analysis_dir(r) / "supervision.csv";
  write_with(path, [&](std::ostream& s) { analysis::write_supervision_csv(s, table); });
  out << path.string() << '\n';
  return 0;
}

int analyze_embeddings(const std::string& run_arg, const std::vector<int>& classes_arg, std::ostream& out) {
  const LoadedRun r = load_run(run_arg);
  std::vector<std::int32_t> classes(classes_arg.begin(), classes_arg.end());
  if (classes.empty())
    for (auto k : r.config.embedding_classes)
      if (static_cast<std::size_t>(k) < r.config.data.num_classes) classes.push_back(k);
  const auto val_set = data::load_dataset(r.config.data, data::Split::val);
  const auto table = analysis::collect_embeddings(ckpt::model_from(r.checkpoint), val_set,
                                                  r.checkpoint.normalization, classes);
  const fs::path path = analysis_dir(r) / "embeddings.csv";
  write_with(path, [&](std::ostream& s) { analysis::write_embeddings_csv(s, table); });
  out << path.string() << '\n';
  return 0;
}

int analyze_histogram(const std::string& run_arg, const std::vector<std::string>& layers_arg, std::size_t bins,
                      std::ostream& out) {
  const LoadedRun r = load_run(run_arg);
  const nets::Model model = ckpt::model_from(r.checkpoint);
  std::vector<analysis::WeightHistogram> hs;
  for (const auto& sel : layers_arg.empty() ? r.config.histogram_layers : layers_arg)
    for (auto& h : analysis::weight_histogram(model, sel, bins ? bins : r.config.histogram_bins))
      hs.push_back(std::move(h));
  const fs::path path = analysis_dir(r) / "histogram.csv";
  write_with(path, [&](std::ostream& s) { analysis::write_histograms_csv(s, hs); });
  out << path.string() << '\n';
  return 0;
}

int analyze_percentiles(const std::string& run_arg, std::ostream& out) {
  const fs::path dir = run_arg;
  if (!fs::exists(dir / kMetricsFile)) throw IoError("metrics not found: " + (dir / kMetricsFile).string());
  write_percentiles(dir);
  out << (dir / "analysis" / "percentiles.csv").string() << '\n';
  return 0;
}

int analyze_compare(const std::string& a, const std::string& b, const std::string& out_arg, std::ostream& out) {
  for (const auto& d : {a, b})
    if (!fs::exists(fs::path(d) / kMetricsFile)) throw IoError("metrics not found: " + (fs::path(d) / kMetricsFile).string());
  const auto cmp = analysis::compare_curves(train::read_metrics(fs::path(a) / kMetricsFile),
                                            train::read_metrics(fs::path(b) / kMetricsFile));
  const fs::path dest = out_arg.empty() ? fs::path(a) / "analysis" / "comparison.csv" : fs::path(out_arg);
  if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
  write_with(dest, [&](std::ostream& s) { analysis::write_comparison_csv(s, cmp); });
  out << dest.string() << '\n';

  // student-vs-teacher gaps when run B distilled from an ensemble
  const config::RunConfig cb = config::load(fs::path(b) / kConfigFile);
  if (!cb.teachers.empty() && fs::exists(fs::path(b) / "checkpoints" / kLatest)) {
    const LoadedRun rb = load_run(b);
    const auto val_set = data::load_dataset(cb.data, data::Split::val);
    const auto teachers = load_teachers(cb);
    analysis::GapReport gap;
    gap.student_top1 = train::evaluate(ckpt::model_from(rb.checkpoint), val_set, rb.checkpoint.normalization).top1;
    for (std::size_t t = 0; t < teachers.size(); ++t)
      gap.teachers.emplace_back(cb.teachers[t].string(),
                                train::evaluate(teachers.teachers()[t], val_set, teachers.preprocessing().normalization).top1);
    const Tensor probs = [&] {
      Tensor all({val_set.size(), teachers.num_classes()});
      for (const auto& [s, e] : data::batch_ranges(val_set.size(), cb.eval_batch)) {
        std::vector<Tensor> xs;
        for (std::size_t i = s; i < e; ++i)
          xs.push_back(data::transform_eval(val_set.images[i], cb.data.resolution, teachers.preprocessing().normalization));
        const Tensor p = teachers.forward(data::stack(xs)).probs;
        std::copy(p.values().begin(), p.values().end(), all.data() + s * teachers.num_classes());
      }
      return all;
    }();
    gap.ensemble_top1 = train::top_k_accuracy(probs, val_set.labels).top1;
    const fs::path gap_path = dest.parent_path() / "gap.csv";
    write_with(gap_path, [&](std::ostream& s) { analysis::write_gap_csv(s, gap); });
    out << gap_path.string() << '\n';
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"meal: ensemble distillation with soft labels, discriminator regularization and diagnostics", "meal"};
  app.require_subcommand(1);

  RunOptions pre_o;
  auto* pre = app.add_subcommand("pretrain", "Train a teacher or baseline on hard labels");
  add_run_options(pre, pre_o);

  RunOptions dis_o;
  std::string disc_flag, init;
  std::optional<double> adv_weight;
  auto* dis = app.add_subcommand("distill", "Distill a student from the configured teacher ensemble");
  add_run_options(dis, dis_o);
  dis->add_option("--discriminator", disc_flag, "Adversarial discriminator on|off")->check(CLI::IsMember({"on", "off"}));
  dis->add_option("--adv-weight", adv_weight, "Weight of the adversarial student loss");
  dis->add_option("--init", init, "Student initialization checkpoint, or 'random'");

  RunOptions tr_o;
  std::string tr_mode, tr_init;
  auto* tr = app.add_subcommand("transfer", "Fine-tune or linearly probe a checkpoint on a downstream set");
  add_run_options(tr, tr_o);
  tr->add_option("--mode", tr_mode, "finetune or linear-probe")->check(CLI::IsMember({"finetune", "linear-probe"}));
  tr->add_option("--init", tr_init, "Pretrained checkpoint, or 'scratch'");

  std::string ev_run, ev_ckpt, ev_cfg;
  auto* ev = app.add_subcommand("eval", "Single-crop top-1/top-5 of a checkpoint");
  ev->add_option("--run", ev_run, "Run directory (uses its latest checkpoint and config)");
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file");
  ev->add_option("--config", ev_cfg, "Config naming the evaluation dataset (with --checkpoint)");

  auto* an = app.add_subcommand("analyze", "Write diagnostic artifacts into <run>/analysis");
  an->require_subcommand(1);
  std::string an_run, cmp_a, cmp_b, cmp_out;
  std::vector<int> emb_classes;
  std::vector<std::string> hist_layers;
  std::size_t hist_bins = 0;
  auto* an_cls = an->add_subcommand("classwise", "Per-class accuracy with designated pair summaries");
  auto* an_sup = an->add_subcommand("supervision", "Per-class mean ensemble soft label");
  auto* an_emb = an->add_subcommand("embeddings", "Penultimate embeddings of selected classes");
  auto* an_his = an->add_subcommand("histogram", "Weight histograms of selected layers");
  auto* an_pct = an->add_subcommand("percentiles", "Per-epoch weight percentiles from metrics.jsonl");
  auto* an_cmp = an->add_subcommand("compare", "Align two runs' validation curves");
  for (auto* s : {an_cls, an_sup, an_emb, an_his, an_pct}) s->add_option("--run", an_run, "Run directory")->required();
  an_emb->add_option("--classes", emb_classes, "Classes to export")->delimiter(',');
  an_his->add_option("--layers", hist_layers, "Layer selectors (first, middle, last, conv, all, name, prefix*)")->delimiter(',');
  an_his->add_option("--bins", hist_bins, "Number of bins");
  an_cmp->add_option("--a", cmp_a, "Reference run directory")->required();
  an_cmp->add_option("--b", cmp_b, "Compared run directory")->required();
  an_cmp->add_option("--out", cmp_out, "Output CSV (default <a>/analysis/comparison.csv)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code;
  }

  try {
    if (pre->parsed()) return cmd_pretrain(pre_o, out);
    if (dis->parsed()) return cmd_distill(dis_o, disc_flag, adv_weight, init, out);
    if (tr->parsed()) return cmd_transfer(tr_o, tr_mode, tr_init, out);
    if (ev->parsed()) return cmd_eval(ev_run, ev_ckpt, ev_cfg, out);
    if (an_cls->parsed()) return analyze_classwise(an_run, out);
    if (an_sup->parsed()) return analyze_supervision(an_run, out);
    if (an_emb->parsed()) return analyze_embeddings(an_run, emb_classes, out);
    if (an_his->parsed()) return analyze_histogram(an_run, hist_layers, hist_bins, out);
    if (an_pct->parsed()) return analyze_percentiles(an_run, out);
    if (an_cmp->parsed()) return analyze_compare(cmp_a, cmp_b, cmp_out, out);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "meal: error: " << msg << '\n';
    return 1;
  }
  return 2;
}

}  // namespace meal::cli
