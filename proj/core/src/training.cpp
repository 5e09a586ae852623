#include "g5/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "g5/rng.hpp"

namespace g5 {

const char* task_name(Task t) {
  switch (t) {
    case Task::reconstruct: return "reconstruct";
    case Task::structure: return "structure";
    case Task::classify: return "classify";
  }
  throw ContractError("task_name: unknown task");
}

Task task_from_name(const std::string& name) {
  if (name == "reconstruct") return Task::reconstruct;
  if (name == "structure") return Task::structure;
  if (name == "classify") return Task::classify;
  throw ConfigError("unknown task '" + name +
                    "' (expected reconstruct, structure or classify)");
}

bool task_is_supervised(Task t) { return t == Task::classify; }

namespace {

std::uint64_t task_id(Task t) { return static_cast<std::uint64_t>(t); }

bool has_edge(const GraphDataset& d, std::uint32_t a, std::uint32_t b) {
  if (a > b) std::swap(a, b);
  return std::binary_search(d.edges.begin(), d.edges.end(),
                            std::make_pair(a, b));
}

}  // namespace

Trainer::Trainer(ModelState& model, std::size_t chunk_rows)
    : model_(model), chunk_rows_(chunk_rows) {
  if (chunk_rows_ == 0)
    throw ContractError("trainer: chunk row budget must be positive");
}

std::uint64_t Trainer::run_seed() const { return model_.seed; }

void Trainer::attach(const GraphDataset& d, SubgraphBatch batch) {
  if (!model_.has_graph(d.id))
    throw ContractError("trainer: model has no graph '" + d.id + "'");
  if (batch.graph_id != d.id)
    throw ContractError("trainer: batch belongs to graph '" + batch.graph_id +
                        "', dataset is '" + d.id + "'");
  if (batch.records.size() != d.num_nodes())
    throw ContractError("trainer: batch record count does not match graph '" +
                        d.id + "'");
  if (model_.input(d.id).context_k != batch.params.context_k)
    throw ContractError("trainer: batch context size " +
                        std::to_string(batch.params.context_k) +
                        " does not match component k " +
                        std::to_string(model_.input(d.id).context_k));
  GraphData g;
  g.dataset = &d;
  g.tables = build_encoding_tables(batch, model_.cfg.hidden);
  g.batch = std::move(batch);
  if (d.splits.count("train")) g.supervised = d.splits.at("train");
  data_[d.id] = std::move(g);
}

GraphData& Trainer::data(const std::string& graph) {
  auto it = data_.find(graph);
  if (it == data_.end())
    throw ContractError("trainer: graph '" + graph + "' not attached");
  return it->second;
}

bool Trainer::attached(const std::string& graph) const {
  return data_.count(graph) > 0;
}

void Trainer::set_supervised(const std::string& graph,
                             std::vector<std::uint32_t> nodes) {
  data(graph).supervised = std::move(nodes);
}

std::vector<Parameter*> Trainer::step_set(const std::string& graph,
                                          Task task) {
  std::vector<Parameter*> out;
  model_.input(graph).collect(out);
  model_.core.collect(out);
  switch (task) {
    case Task::classify:
      model_.head(graph).collect_classify(out);
      break;
    case Task::reconstruct:
      model_.head(graph).collect_reconstruct(out);
      break;
    case Task::structure:
      break;
  }
  return out;
}

void Trainer::apply_step(const std::vector<Parameter*>& params, double lr,
                         double wd) {
  for (Parameter* p : params) {
    auto it = opt_.find(p);
    if (it == opt_.end())
      it = opt_.emplace(p, AdamState::make(p->value, lr, wd)).first;
    it->second.learning_rate = lr;
    it->second.weight_decay = wd;
    adam_step(*p, it->second);
  }
}

std::vector<double> Trainer::train_task(const std::string& graph, Task task,
                                        std::size_t epochs,
                                        double learning_rate,
                                        double weight_decay) {
  GraphData& g = data(graph);
  auto& done = epochs_done_[graph][static_cast<int>(task)];
  std::vector<double> losses;
  losses.reserve(epochs);
  auto params = step_set(graph, task);
  for (std::size_t e = 0; e < epochs; ++e) {
    const std::uint64_t epoch_index = done++;
    double loss = 0.0;
    switch (task) {
      case Task::classify: loss = classify_epoch(g, epoch_index); break;
      case Task::reconstruct: loss = reconstruct_epoch(g, epoch_index); break;
      case Task::structure: loss = structure_epoch(g, epoch_index); break;
    }
    if (!std::isfinite(loss))
      throw NumericError("training aborted: non-finite " +
                         std::string(task_name(task)) + " loss on graph '" +
                         graph + "' at epoch " + std::to_string(epoch_index));
    apply_step(params, learning_rate, weight_decay);
    losses.push_back(loss);
    if (metrics_ != nullptr)
      metrics_->push_back({run_id_, graph, task_name(task),
                           static_cast<std::int64_t>(epoch_index), "train",
                           "loss", loss});
  }
  return losses;
}

double Trainer::classify_epoch(GraphData& g, std::uint64_t epoch_index) {
  const GraphDataset& d = *g.dataset;
  if (g.supervised.empty())
    throw ContractError("classify: no supervised nodes on graph '" + d.id +
                        "'");
  const double w = 1.0 / static_cast<double>(g.supervised.size());
  const auto chunks = plan_node_chunks(g.batch, g.supervised, chunk_rows_);
  InputComponent& comp = model_.input(d.id);
  HeadSet& head = model_.head(d.id);
  GradSink sink;
  ChunkContext ctx;
  double total = 0.0;
  for (std::size_t ci = 0; ci < chunks.size(); ++ci) {
    build_node_chunk_context(ctx, d, g.batch, chunks[ci], g.tables);
    std::vector<int> labels;
    labels.reserve(chunks[ci].records.size());
    for (std::uint32_t v : chunks[ci].records) {
      const int y = d.label(v);
      if (y < 0)
        throw ContractError("classify: unlabeled node in supervised set on '" +
                            d.id + "'");
      labels.push_back(y);
    }
    Tape tape(true, derive_seed(model_.seed, "dropout",
                                fnv1a(d.id) ^ task_id(Task::classify),
                                epoch_index, ci));
    Var fused = forward_fused(tape, ctx, comp, model_.core, model_.cfg,
                              portal_block());
    Var probs = classify(tape, fused, head, model_.cfg);
    Var loss = cross_entropy_indexed(probs, labels, w);
    total += tape.val(loss).data[0];
    tape.backward(loss, &sink);
  }
  sink.apply();
  return total;
}

double Trainer::reconstruct_epoch(GraphData& g, std::uint64_t epoch_index) {
  const GraphDataset& d = *g.dataset;
  std::vector<std::uint32_t> nodes(d.num_nodes());
  std::iota(nodes.begin(), nodes.end(), 0u);
  const auto chunks = plan_node_chunks(g.batch, nodes, chunk_rows_);
  InputComponent& comp = model_.input(d.id);
  HeadSet& head = model_.head(d.id);
  const double w =
      1.0 / (static_cast<double>(d.num_nodes()) *
             static_cast<double>(d.feature_dim));
  GradSink sink;
  ChunkContext ctx;
  double total = 0.0;
  for (std::size_t ci = 0; ci < chunks.size(); ++ci) {
    build_node_chunk_context(ctx, d, g.batch, chunks[ci], g.tables);
    Tensor target =
        Tensor::zeros({chunks[ci].records.size(), d.feature_dim});
    for (std::size_t r = 0; r < chunks[ci].records.size(); ++r)
      d.features.copy_row(chunks[ci].records[r],
                          target.data.data() + r * d.feature_dim);
    Tape tape(true, derive_seed(model_.seed, "dropout",
                                fnv1a(d.id) ^ task_id(Task::reconstruct),
                                epoch_index, ci));
    Var fused = forward_fused(tape, ctx, comp, model_.core, model_.cfg,
                              portal_block());
    Var est = reconstruct(tape, fused, head);
    Var loss = mse_loss_weighted(est, target, w);
    total += tape.val(loss).data[0];
    tape.backward(loss, &sink);
  }
  sink.apply();
  return total;
}

Tensor Trainer::eval_forward_all(GraphData& g, bool training_mode,
                                 std::uint64_t epoch_index) {
  const GraphDataset& d = *g.dataset;
  std::vector<std::uint32_t> nodes(d.num_nodes());
  std::iota(nodes.begin(), nodes.end(), 0u);
  const auto chunks = plan_node_chunks(g.batch, nodes, chunk_rows_);
  InputComponent& comp = model_.input(d.id);
  Tensor reps = Tensor::zeros({d.num_nodes(), model_.cfg.hidden});
  ChunkContext ctx;
  for (std::size_t ci = 0; ci < chunks.size(); ++ci) {
    build_node_chunk_context(ctx, d, g.batch, chunks[ci], g.tables);
    Tape tape(training_mode,
              derive_seed(model_.seed, "dropout",
                          fnv1a(d.id) ^ task_id(Task::structure), epoch_index,
                          ci),
              false);
    Var fused = forward_fused(tape, ctx, comp, model_.core, model_.cfg,
                              portal_block());
    const Tensor& out = tape.val(fused);
    for (std::size_t r = 0; r < chunks[ci].records.size(); ++r)
      std::copy_n(out.data.data() + r * model_.cfg.hidden, model_.cfg.hidden,
                  reps.data.data() +
                      chunks[ci].records[r] * model_.cfg.hidden);
  }
  return reps;
}

double Trainer::structure_epoch(GraphData& g, std::uint64_t epoch_index) {
  const GraphDataset& d = *g.dataset;
  if (d.edges.empty())
    throw ContractError("structure: graph '" + d.id + "' has no edges");

  // Pass 1: representation table under this epoch's dropout streams.
  Tensor reps = eval_forward_all(g, true, epoch_index);

  // Pass 2: pairwise loss over the edges plus an equal count of sampled
  // non-edges; gradient flows back only as d(loss)/d(representation).
  std::vector<std::uint32_t> us, vs;
  std::vector<double> targets;
  us.reserve(2 * d.edges.size());
  vs.reserve(2 * d.edges.size());
  targets.reserve(2 * d.edges.size());
  for (auto [u, v] : d.edges) {
    us.push_back(u);
    vs.push_back(v);
    targets.push_back(1.0);
  }
  auto rng = make_rng(
      derive_seed(model_.seed, "negative-pairs", fnv1a(d.id), epoch_index));
  std::uniform_int_distribution<std::uint32_t> pick(
      0, static_cast<std::uint32_t>(d.num_nodes() - 1));
  std::size_t negs = 0;
  while (negs < d.edges.size()) {
    const std::uint32_t a = pick(rng);
    const std::uint32_t b = pick(rng);
    if (a == b || has_edge(d, a, b)) continue;
    us.push_back(a);
    vs.push_back(b);
    targets.push_back(0.0);
    ++negs;
  }
  const double w = 1.0 / static_cast<double>(targets.size());

  Tape pair_tape(false, 0);
  Var z = pair_tape.leaf_grad(reps);
  Var zu = gather_rows(z, us);
  Var zv = gather_rows(z, vs);
  Var logits = scale(rowwise_dot(zu, zv),
                     1.0 / std::sqrt(static_cast<double>(model_.cfg.hidden)));
  Var loss = bce_with_logits(logits, targets, w);
  const double loss_value = pair_tape.val(loss).data[0];
  pair_tape.backward(loss);
  const std::vector<double>& dz = pair_tape.grad(z);

  // Pass 3: recompute each chunk under the same dropout streams and push the
  // representation gradient through the stack.
  std::vector<std::uint32_t> nodes(d.num_nodes());
  std::iota(nodes.begin(), nodes.end(), 0u);
  const auto chunks = plan_node_chunks(g.batch, nodes, chunk_rows_);
  InputComponent& comp = model_.input(d.id);
  const std::size_t hidden = model_.cfg.hidden;
  GradSink sink;
  ChunkContext ctx;
  for (std::size_t ci = 0; ci < chunks.size(); ++ci) {
    build_node_chunk_context(ctx, d, g.batch, chunks[ci], g.tables);
    Tape tape(true, derive_seed(model_.seed, "dropout",
                                fnv1a(d.id) ^ task_id(Task::structure),
                                epoch_index, ci));
    Var fused = forward_fused(tape, ctx, comp, model_.core, model_.cfg,
                              portal_block());
    std::vector<double> upstream(chunks[ci].records.size() * hidden);
    for (std::size_t r = 0; r < chunks[ci].records.size(); ++r)
      std::copy_n(dz.data() + chunks[ci].records[r] * hidden, hidden,
                  upstream.data() + r * hidden);
    tape.backward_from(fused, upstream, &sink);
  }
  sink.apply();
  return loss_value;
}

void Trainer::run_plan(const TrainPlan& plan) {
  if (plan.graphs.empty())
    throw ContractError("train plan: no graphs scheduled");
  if (plan.rounds == 0)
    throw ContractError("train plan: rounds must be positive");
  std::map<std::pair<std::string, int>, double> prev_close;
  for (std::uint32_t round = 0; round < plan.rounds; ++round) {
    std::map<std::pair<std::string, int>, double> close;
    for (const auto& gp : plan.graphs) {
      for (const auto& seg : gp.segments) {
        if (seg.epochs == 0) continue;
        auto losses = train_task(gp.graph, seg.task, seg.epochs,
                                 gp.learning_rate, gp.weight_decay);
        close[{gp.graph, static_cast<int>(seg.task)}] = losses.back();
      }
    }
    if (round_hook_) round_hook_(round);
    if (plan.early_stop && round > 0 && !close.empty()) {
      bool settled = true;
      for (const auto& [key, value] : close) {
        auto it = prev_close.find(key);
        if (it == prev_close.end()) {
          settled = false;
          break;
        }
        const double base = std::max(std::abs(it->second), 1e-12);
        if (std::abs(value - it->second) / base >= plan.early_stop_shift) {
          settled = false;
          break;
        }
      }
      if (settled) return;
    }
    prev_close = std::move(close);
  }
}

double Trainer::evaluate_accuracy(const std::string& graph,
                                  const std::string& split) {
  GraphData& g = data(graph);
  const GraphDataset& d = *g.dataset;
  const auto& nodes = d.split(split);
  if (nodes.empty())
    throw ContractError("evaluate: empty split '" + split + "' on graph '" +
                        graph + "'");
  Tensor probs = predict_probabilities(graph, nodes);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const int y = d.label(nodes[i]);
    if (y < 0)
      throw ContractError("evaluate: unlabeled node in split '" + split +
                          "'");
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.shape[1]; ++c)
      if (probs.at(i, c) > probs.at(i, best)) best = c;
    if (static_cast<int>(best) == y) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(nodes.size());
}

Tensor Trainer::predict_probabilities(const std::string& graph,
                                      const std::vector<std::uint32_t>& nodes) {
  GraphData& g = data(graph);
  const GraphDataset& d = *g.dataset;
  InputComponent& comp = model_.input(graph);
  HeadSet& head = model_.head(graph);
  const auto chunks = plan_node_chunks(g.batch, nodes, chunk_rows_);
  Tensor out = Tensor::zeros({nodes.size(), head.num_classes});
  std::map<std::uint32_t, std::vector<std::size_t>> positions;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    positions[nodes[i]].push_back(i);
  ChunkContext ctx;
  for (const auto& chunk : chunks) {
    build_node_chunk_context(ctx, d, g.batch, chunk, g.tables);
    Tape tape(false, 0, false);
    Var fused = forward_fused(tape, ctx, comp, model_.core, model_.cfg,
                              portal_block());
    Var probs = classify(tape, fused, head, model_.cfg);
    const Tensor& p = tape.val(probs);
    for (std::size_t r = 0; r < chunk.records.size(); ++r) {
      for (std::size_t i : positions.at(chunk.records[r]))
        std::copy_n(p.data.data() + r * head.num_classes, head.num_classes,
                    out.data.data() + i * head.num_classes);
    }
  }
  return out;
}

Tensor Trainer::node_representations(const std::string& graph) {
  return eval_forward_all(data(graph), false, 0);
}

void Trainer::set_metrics(std::vector<MetricRecord>* sink,
                          std::string run_id) {
  metrics_ = sink;
  run_id_ = std::move(run_id);
}

void Trainer::set_round_hook(std::function<void(std::uint32_t)> hook) {
  round_hook_ = std::move(hook);
}

ModelState transfer_init(const Checkpoint& ck, const ModelConfig& cfg,
                         const std::string& target_id,
                         std::size_t target_feature_dim,
                         std::size_t target_classes, std::size_t target_k,
                         std::uint64_t seed) {
  ModelState m = ModelState::from_checkpoint(ck, cfg);
  if (m.has_graph(target_id))
    throw ContractError("transfer: target graph '" + target_id +
                        "' already lives in the checkpoint");
  m.seed = seed;
  m.add_graph(target_id, target_feature_dim, target_classes, target_k);
  return m;
}

}  // namespace g5
