#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "g5/model.hpp"

namespace g5 {

// Frozen classifiers from previously trained graphs, used as reference
// predictors for a graph that has no labels of its own.
struct CrossClassifierBank {
  struct Entry {
    std::string graph;
    HeadSet* head = nullptr;
  };
  std::vector<Entry> entries;
};

CrossClassifierBank make_bank(ModelState& m,
                              const std::vector<std::string>& sources);

// Class distributions each bank classifier assigns to the given fused
// representations; one matrix per entry, rows on the probability simplex.
// The bank parameters are read, never written.
std::vector<Tensor> bank_outputs(const CrossClassifierBank& bank,
                                 const Tensor& reps, const ModelConfig& cfg);

struct ReasonOptions {
  std::size_t epochs = 200;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
  std::size_t routing_iterations = 3;
};

struct ReasonedLabels {
  Tensor distributions;         // nodes x target classes
  std::vector<int> hard;        // argmax per node, lowest index on ties
  std::vector<double> entropy;  // nats
  std::vector<double> losses;   // per-epoch training losses
};

// Rowwise v = s * |s| / (1 + |s|^2); shrinks every row below unit norm.
void squash_in_place(double* s, std::size_t dim);

struct RoutingResult {
  Tensor couplings;  // nodes x units, rows on the simplex
  Tensor combined;   // nodes x dim, squashed weighted sums
};

// Agreement routing over per-node unit vectors.  units[l] holds unit l's
// vector for every node (nodes x dim).  Couplings start uniform and shift
// toward units that agree with the running combination.
RoutingResult cdr_route(const std::vector<Tensor>& units,
                        std::size_t iterations);

// Chained-mapping strategy: fits a fresh target classifier plus one mapping
// layer per bank entry so the mapped copies of the target distribution match
// every bank classifier's verdict.
ReasonedLabels cccm_fit(const Tensor& reps,
                        const std::vector<Tensor>& bank_out,
                        std::size_t target_classes,
                        const ReasonOptions& opts);

// Routing strategy: maps bank verdicts into target label space, routes them
// into one consensus vector per node, and fits both the maps and a fresh
// target classifier so the classifier agrees with the consensus.
ReasonedLabels cdr_fit(const Tensor& reps,
                       const std::vector<Tensor>& bank_out,
                       std::size_t target_classes, const ReasonOptions& opts);

// Fills hard labels and entropies from the distributions.
void assign_labels(ReasonedLabels& out);

// CSV export: node_id,predicted_class,max_prob,entropy.
void export_reasoned_labels(const std::string& path,
                            const ReasonedLabels& labels,
                            const std::vector<std::string>& node_names = {});

}  // namespace g5
