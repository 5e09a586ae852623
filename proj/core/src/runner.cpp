#include "g5/runner.hpp"

#include <cstdio>
#include <deque>
#include <filesystem>

#include "g5/apocalypse.hpp"
#include "g5/blas.hpp"
#include "g5/dataset_io.hpp"
#include "g5/rng.hpp"
#include "g5/training.hpp"

namespace g5 {

namespace {

namespace fs = std::filesystem;

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

PreprocessParams pre_params(const RunConfig& cfg, const GraphConfig& g) {
  PreprocessParams p;
  p.context_k = g.context_k;
  p.alpha = cfg.alpha;
  p.wl_iterations = cfg.wl_iterations;
  p.hop_cap = cfg.hop_cap;
  return p;
}

GraphDataset load_dataset(const RunConfig& cfg, const GraphConfig& g) {
  for (const std::string& path : {g.content, g.cites})
    if (!fs::exists(path))
      throw ConfigError("graph '" + g.id + "': dataset file not found: " +
                        path);
  GraphDataset d = load_citation_graph(g.content, g.cites, g.id, nullptr);
  SplitPolicy policy;
  policy.kind = g.split == "fixed" ? SplitPolicy::Kind::fixed_benchmark
                                   : SplitPolicy::Kind::ratio_random;
  policy.train_fraction = g.train_fraction;
  policy.val_fraction = g.val_fraction;
  make_split(d, cfg.seed, policy);
  return d;
}

SubgraphBatch load_or_build_batch(const RunConfig& cfg, const GraphDataset& d,
                                  const PreprocessParams& params) {
  fs::create_directories(cfg.cache_dir);
  const std::string path =
      cfg.cache_dir + "/" + cache_file_name(d.id, params);
  if (cache_is_fresh(path, d.id, params)) return load_subgraph_batch(path);
  SubgraphBatch b = build_subgraph_batch(d, params);
  save_subgraph_batch(b, path);
  return b;
}

TrainPlan build_plan(const RunConfig& cfg,
                     const std::vector<const GraphConfig*>& graphs,
                     const std::vector<Task>& tasks,
                     std::size_t epochs_override) {
  TrainPlan plan;
  plan.rounds = cfg.rounds;
  plan.early_stop = cfg.early_stop;
  plan.early_stop_shift = cfg.early_stop_shift;
  for (const GraphConfig* g : graphs) {
    GraphPlan gp;
    gp.graph = g->id;
    gp.learning_rate = g->learning_rate;
    gp.weight_decay = g->weight_decay;
    const std::size_t total = epochs_override ? epochs_override : g->epochs;
    for (Task t : tasks)
      gp.segments.push_back({t, ceil_div(total, cfg.rounds)});
    plan.graphs.push_back(std::move(gp));
  }
  return plan;
}

void save_round(const ModelState& m, const RunConfig& cfg,
                const std::string& tag, std::uint32_t round) {
  m.to_checkpoint(round + 1)
      .save(cfg.out_dir + "/" + tag + ".round" + std::to_string(round + 1) +
            ".g5ck");
}

std::string final_checkpoint_path(const RunConfig& cfg,
                                  const std::string& fallback) {
  return cfg.checkpoint_out.empty() ? cfg.out_dir + "/" + fallback
                                    : cfg.checkpoint_out;
}

// Pretrains the source graphs into a fresh model and returns a model for
// the target graph seeded from that state; loads a checkpoint instead when
// one is configured.
ModelState prepare_target_model(const RunConfig& cfg, const GraphConfig& tg,
                                const GraphDataset& td,
                                std::vector<MetricRecord>& metrics,
                                const std::string& run_id) {
  if (!cfg.checkpoint_in.empty())
    return transfer_init(Checkpoint::load(cfg.checkpoint_in), cfg.model,
                         tg.id, td.feature_dim, td.num_classes, tg.context_k,
                         cfg.seed);
  ModelState m;
  m.init_core(cfg.model, cfg.portal_k, cfg.seed);
  const auto sources = cfg.sources();
  if (sources.empty()) {
    m.add_graph(tg.id, td.feature_dim, td.num_classes, tg.context_k);
    return m;
  }
  Trainer pre(m, cfg.chunk_rows);
  pre.set_metrics(&metrics, run_id);
  std::deque<GraphDataset> datasets;
  for (const GraphConfig* s : sources) {
    datasets.push_back(load_dataset(cfg, *s));
    GraphDataset& d = datasets.back();
    m.add_graph(d.id, d.feature_dim, d.num_classes, s->context_k);
    pre.attach(d, load_or_build_batch(cfg, d, pre_params(cfg, *s)));
  }
  pre.set_round_hook(
      [&](std::uint32_t r) { save_round(m, cfg, "pretrain", r); });
  pre.run_plan(build_plan(cfg, sources, cfg.pretrain_tasks, 0));
  return transfer_init(m.to_checkpoint(static_cast<std::uint32_t>(cfg.rounds)),
                       cfg.model, tg.id, td.feature_dim, td.num_classes,
                       tg.context_k, cfg.seed);
}

RunResult run_isolated(const RunConfig& cfg, const std::string& run_id,
                       std::vector<MetricRecord>& metrics) {
  RunResult result;
  for (const GraphConfig& g : cfg.graphs) {
    GraphDataset d = load_dataset(cfg, g);
    SubgraphBatch batch = load_or_build_batch(cfg, d, pre_params(cfg, g));
    ModelState m;
    m.init_core(cfg.model, g.context_k, cfg.seed);
    m.add_graph(g.id, d.feature_dim, d.num_classes, g.context_k);
    Trainer trainer(m, cfg.chunk_rows);
    trainer.set_metrics(&metrics, run_id);
    trainer.attach(d, std::move(batch));
    trainer.set_round_hook(
        [&](std::uint32_t r) { save_round(m, cfg, g.id, r); });
    trainer.run_plan(build_plan(cfg, {&g}, cfg.pretrain_tasks, 0));
    const double acc = trainer.evaluate_accuracy(g.id, "test");
    metrics.push_back({run_id, g.id, "classify", -1, "test", "accuracy", acc});
    result.accuracy[g.id] = acc;
    if (!cfg.checkpoint_out.empty()) {
      const std::string path = cfg.graphs.size() == 1
                                   ? cfg.checkpoint_out
                                   : cfg.checkpoint_out + "." + g.id;
      m.to_checkpoint(static_cast<std::uint32_t>(cfg.rounds)).save(path);
      result.checkpoint_path = path;
    }
  }
  return result;
}

RunResult run_mixed(const RunConfig& cfg, const std::string& run_id,
                    std::vector<MetricRecord>& metrics) {
  RunResult result;
  ModelState m;
  m.init_core(cfg.model, cfg.portal_k, cfg.seed);
  Trainer trainer(m, cfg.chunk_rows);
  trainer.set_metrics(&metrics, run_id);
  std::deque<GraphDataset> datasets;
  std::vector<const GraphConfig*> all;
  for (const GraphConfig& g : cfg.graphs) {
    datasets.push_back(load_dataset(cfg, g));
    GraphDataset& d = datasets.back();
    m.add_graph(d.id, d.feature_dim, d.num_classes, g.context_k);
    trainer.attach(d, load_or_build_batch(cfg, d, pre_params(cfg, g)));
    all.push_back(&g);
  }
  trainer.set_round_hook(
      [&](std::uint32_t r) { save_round(m, cfg, "pretrain", r); });
  trainer.run_plan(build_plan(cfg, all, cfg.pretrain_tasks, 0));
  for (const GraphConfig& g : cfg.graphs) {
    const std::size_t total =
        cfg.finetune_epochs ? cfg.finetune_epochs : g.epochs;
    for (Task t : cfg.finetune_tasks)
      trainer.train_task(g.id, t, total, g.learning_rate, g.weight_decay);
    const double acc = trainer.evaluate_accuracy(g.id, "test");
    metrics.push_back({run_id, g.id, "classify", -1, "test", "accuracy", acc});
    result.accuracy[g.id] = acc;
  }
  if (!cfg.checkpoint_out.empty()) {
    m.to_checkpoint(static_cast<std::uint32_t>(cfg.rounds))
        .save(cfg.checkpoint_out);
    result.checkpoint_path = cfg.checkpoint_out;
  }
  return result;
}

RunResult run_transfer(const RunConfig& cfg, const std::string& run_id,
                       std::vector<MetricRecord>& metrics) {
  RunResult result;
  const GraphConfig& tg = *cfg.target();
  GraphDataset td = load_dataset(cfg, tg);
  SubgraphBatch batch = load_or_build_batch(cfg, td, pre_params(cfg, tg));
  ModelState m = prepare_target_model(cfg, tg, td, metrics, run_id);
  Trainer ft(m, cfg.chunk_rows);
  ft.set_metrics(&metrics, run_id);
  ft.attach(td, std::move(batch));
  ft.set_supervised(tg.id, sample_training_ratio(td, cfg.ratio, cfg.seed));
  ft.set_round_hook(
      [&](std::uint32_t r) { save_round(m, cfg, "finetune-" + tg.id, r); });
  ft.run_plan(build_plan(cfg, {&tg}, cfg.finetune_tasks, cfg.finetune_epochs));
  const double acc = ft.evaluate_accuracy(tg.id, "test");
  metrics.push_back({run_id, tg.id, "classify", -1, "test", "accuracy", acc});
  result.accuracy[tg.id] = acc;
  if (!cfg.checkpoint_out.empty()) {
    m.to_checkpoint(static_cast<std::uint32_t>(cfg.rounds))
        .save(cfg.checkpoint_out);
    result.checkpoint_path = cfg.checkpoint_out;
  }
  return result;
}

RunResult run_apocalypse(const RunConfig& cfg, const std::string& run_id,
                         std::vector<MetricRecord>& metrics) {
  RunResult result;
  for (Task t : cfg.finetune_tasks)
    if (task_is_supervised(t))
      throw ModeViolationError(
          "apocalypse fine-tune must stay unsupervised; drop '" +
          std::string(task_name(t)) + "' from finetune.tasks");
  const GraphConfig& tg = *cfg.target();
  GraphDataset td = load_dataset(cfg, tg);
  td.lock_labels();
  SubgraphBatch batch = load_or_build_batch(cfg, td, pre_params(cfg, tg));
  ModelState m = prepare_target_model(cfg, tg, td, metrics, run_id);
  Trainer ft(m, cfg.chunk_rows);
  ft.set_metrics(&metrics, run_id);
  ft.attach(td, std::move(batch));
  ft.set_round_hook(
      [&](std::uint32_t r) { save_round(m, cfg, "apocalypse-" + tg.id, r); });
  ft.run_plan(build_plan(cfg, {&tg}, cfg.finetune_tasks, cfg.finetune_epochs));
  const std::string path =
      final_checkpoint_path(cfg, "apocalypse_" + tg.id + ".g5ck");
  m.to_checkpoint(static_cast<std::uint32_t>(cfg.rounds)).save(path);
  result.checkpoint_path = path;
  return result;
}

RunResult run_reason(const RunConfig& cfg, const std::string& run_id,
                     std::vector<MetricRecord>& metrics) {
  RunResult result;
  const GraphConfig& tg = *cfg.target();
  Checkpoint ck = Checkpoint::load(cfg.checkpoint_in);
  ModelState m = ModelState::from_checkpoint(ck, cfg.model);
  if (!m.has_graph(tg.id))
    throw ContractError("reason: checkpoint has no component for target '" +
                        tg.id + "' (run apocalypse mode first)");
  GraphDataset td = load_dataset(cfg, tg);
  td.lock_labels();
  Trainer t(m, cfg.chunk_rows);
  t.attach(td, load_or_build_batch(cfg, td, pre_params(cfg, tg)));
  Tensor reps = t.node_representations(tg.id);

  std::vector<std::string> sources;
  for (const auto& info : ck.graphs)
    if (info.id != tg.id) sources.push_back(info.id);
  if (sources.empty())
    throw ContractError("reason: checkpoint holds no source classifiers");
  CrossClassifierBank bank = make_bank(m, sources);
  std::vector<Tensor> verdicts = bank_outputs(bank, reps, cfg.model);

  ReasonOptions opts;
  opts.epochs = cfg.reason_epochs;
  opts.learning_rate = cfg.reason_lr;
  opts.routing_iterations = cfg.routing_iterations;
  opts.seed = derive_seed(cfg.seed, "reason", fnv1a(tg.id));
  ReasonedLabels labels =
      cfg.strategy == "cdr"
          ? cdr_fit(reps, verdicts, td.num_classes, opts)
          : cccm_fit(reps, verdicts, td.num_classes, opts);
  result.random_baseline = 1.0 / static_cast<double>(td.num_classes);
  for (std::size_t e = 0; e < labels.losses.size(); ++e)
    metrics.push_back({run_id, tg.id, cfg.strategy,
                       static_cast<std::int64_t>(e), "train", "loss",
                       labels.losses[e]});

  result.labels_path = cfg.out_dir + "/reasoned_" + tg.id + ".csv";
  export_reasoned_labels(result.labels_path, labels, td.node_names);

  {
    ScopedLabelAccess access(td);
    const auto& test = td.split("test");
    std::size_t correct = 0, counted = 0;
    for (std::uint32_t v : test) {
      const int y = td.label(v);
      if (y < 0) continue;
      ++counted;
      if (labels.hard[v] == y) ++correct;
    }
    if (counted > 0) {
      result.reasoned_accuracy =
          static_cast<double>(correct) / static_cast<double>(counted);
      metrics.push_back({run_id, tg.id, cfg.strategy, -1, "test", "accuracy",
                         result.reasoned_accuracy});
    }
  }
  return result;
}

}  // namespace

std::string run_identifier(const RunConfig& cfg) {
  std::string s = std::string("mode=") + mode_name(cfg.mode);
  std::string srcs, tgt;
  for (const auto& g : cfg.graphs) {
    if (g.role == "target") {
      tgt = g.id;
    } else {
      if (!srcs.empty()) srcs += "+";
      srcs += g.id;
    }
  }
  if (!srcs.empty()) s += ":src=" + srcs;
  if (!tgt.empty()) s += ":tgt=" + tgt;
  s += ":k=" + std::to_string(cfg.portal_k);
  if (cfg.mode == RunMode::transfer) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", cfg.ratio);
    s += std::string(":ratio=") + buf;
  }
  if (cfg.mode == RunMode::reason) s += ":strategy=" + cfg.strategy;
  s += ":seed=" + std::to_string(cfg.seed);
  return s;
}

RunResult execute_run(const RunConfig& cfg) {
  blas::init_single_thread();
  fs::create_directories(cfg.out_dir);
  const std::string run_id = run_identifier(cfg);
  std::vector<MetricRecord> metrics;
  RunResult result;
  switch (cfg.mode) {
    case RunMode::isolated:
      result = run_isolated(cfg, run_id, metrics);
      break;
    case RunMode::mixed:
      result = run_mixed(cfg, run_id, metrics);
      break;
    case RunMode::transfer:
      result = run_transfer(cfg, run_id, metrics);
      break;
    case RunMode::apocalypse:
      result = run_apocalypse(cfg, run_id, metrics);
      break;
    case RunMode::reason:
      result = run_reason(cfg, run_id, metrics);
      break;
  }
  result.metrics_path = cfg.out_dir + "/metrics.csv";
  append_metrics(metrics, result.metrics_path);
  return result;
}

}  // namespace g5
