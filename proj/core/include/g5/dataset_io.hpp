#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "g5/dataset.hpp"

namespace g5 {

struct LoadReport {
  std::size_t dropped_edges = 0;  // cite lines with unknown endpoints
};

// Reads a citation graph from the raw two-file format:
//   <content>: one line per node:  <node_id> <value>... <label>
//   <cites>:   one line per link:  <citing_id> <cited_id>
// Node ids become dense indices in content-file order.  Feature values are
// arbitrary nonnegative reals; the label token "unlabeled" marks nodes
// without a class.  Links are symmetrized; self loops and duplicates are
// dropped; links naming unknown ids are dropped and counted in the report.
GraphDataset load_citation_graph(const std::string& content_path,
                                 const std::string& cites_path,
                                 const std::string& graph_id,
                                 LoadReport* report = nullptr);

struct SplitPolicy {
  enum class Kind { fixed_benchmark, ratio_random };
  Kind kind = Kind::fixed_benchmark;
  // ratio_random fractions over labeled nodes (test takes the remainder).
  double train_fraction = 0.1;
  double val_fraction = 0.2;
};

// Fills dataset.splits with train / validation / test.
//   fixed_benchmark: train = first 20 * num_classes node ids, validation =
//     the following 500, test = the last 1000 (the layout the converter
//     script guarantees).  Independent of seed.
//   ratio_random: seeded shuffle of the labeled nodes, split by fractions.
void make_split(GraphDataset& d, std::uint64_t seed, const SplitPolicy& policy);

// Deterministic prefix of a seed-fixed permutation of the train split:
// floor(ratio * |train|) nodes; a smaller ratio always yields a subset of a
// larger one under the same seed.
std::vector<std::uint32_t> sample_training_ratio(const GraphDataset& d,
                                                 double ratio,
                                                 std::uint64_t seed);

}  // namespace g5
