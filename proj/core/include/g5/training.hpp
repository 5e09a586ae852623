#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "g5/adam.hpp"
#include "g5/dataset.hpp"
#include "g5/metrics.hpp"
#include "g5/model.hpp"
#include "g5/preprocess.hpp"

namespace g5 {

enum class Task { reconstruct, structure, classify };

const char* task_name(Task t);
Task task_from_name(const std::string& name);
bool task_is_supervised(Task t);

struct TaskSegment {
  Task task = Task::classify;
  std::size_t epochs = 0;  // per round
};

struct GraphPlan {
  std::string graph;
  std::vector<TaskSegment> segments;
  double learning_rate = 1e-3;
  double weight_decay = 5e-4;
};

// Alternating schedule: each round visits the graphs in order and runs each
// graph's task segments.  Optional early stop ends the schedule when no
// task's closing loss moved by more than the shift threshold since the
// previous round.
struct TrainPlan {
  std::vector<GraphPlan> graphs;
  std::size_t rounds = 3;
  bool early_stop = false;
  double early_stop_shift = 0.01;
};

// Runtime bundle for one attached graph.
struct GraphData {
  const GraphDataset* dataset = nullptr;
  SubgraphBatch batch;
  EncodingTables tables;
  std::vector<std::uint32_t> supervised;  // nodes classify may train on
};

class Trainer {
 public:
  explicit Trainer(ModelState& model, std::size_t chunk_rows = 8192);

  // Registers a graph's data; the model must already know this graph.
  // The supervised set defaults to the train split when one exists.
  void attach(const GraphDataset& d, SubgraphBatch batch);

  GraphData& data(const std::string& graph);
  bool attached(const std::string& graph) const;

  // Restricts supervised segments to this node set (label-ratio runs).
  void set_supervised(const std::string& graph,
                      std::vector<std::uint32_t> nodes);

  // One task segment: `epochs` full passes over the graph.  Returns the
  // per-epoch losses.  Aborts with NumericError on a non-finite loss.
  std::vector<double> train_task(const std::string& graph, Task task,
                                 std::size_t epochs, double learning_rate,
                                 double weight_decay);

  void run_plan(const TrainPlan& plan);

  double evaluate_accuracy(const std::string& graph, const std::string& split);

  // Inference-mode fused representations, one row per node.
  Tensor node_representations(const std::string& graph);

  // Inference-mode class probabilities for the given nodes.
  Tensor predict_probabilities(const std::string& graph,
                               const std::vector<std::uint32_t>& nodes);

  void set_metrics(std::vector<MetricRecord>* sink, std::string run_id);
  void set_round_hook(std::function<void(std::uint32_t round)> hook);

  std::uint64_t run_seed() const;

 private:
  ModelState& model_;
  std::size_t chunk_rows_;
  std::map<std::string, GraphData> data_;
  std::map<const Parameter*, AdamState> opt_;
  std::map<std::string, std::map<int, std::uint64_t>> epochs_done_;
  std::vector<MetricRecord>* metrics_ = nullptr;
  std::string run_id_;
  std::function<void(std::uint32_t)> round_hook_;

  std::size_t portal_block() const { return model_.portal_k + 1; }
  std::vector<Parameter*> step_set(const std::string& graph, Task task);
  void apply_step(const std::vector<Parameter*>& params, double lr, double wd);
  double classify_epoch(GraphData& g, std::uint64_t epoch_index);
  double reconstruct_epoch(GraphData& g, std::uint64_t epoch_index);
  double structure_epoch(GraphData& g, std::uint64_t epoch_index);
  Tensor eval_forward_all(GraphData& g, bool training_mode,
                          std::uint64_t epoch_index);
};

// Model for a transfer run: universal core (and any source components)
// restored from the checkpoint, a freshly seeded input component and head
// set for the target graph.
ModelState transfer_init(const Checkpoint& ck, const ModelConfig& cfg,
                         const std::string& target_id,
                         std::size_t target_feature_dim,
                         std::size_t target_classes, std::size_t target_k,
                         std::uint64_t seed);

}  // namespace g5
