#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "g5/dataset.hpp"
#include "g5/tensor.hpp"

namespace g5 {

// Column-stochastic transition matrix of the graph: each column v holds
// 1/deg(v) at its neighbors; isolated nodes self-transition.  Dense, for
// desk-scale graphs and verification; the streaming path below works from
// adjacency lists directly.
Tensor normalize_adjacency(const GraphDataset& d);

// Personalised-random-walk closeness S = alpha (I - (1-alpha) A_norm)^{-1},
// computed by dense LU solve.  alpha must lie in (0, 1).
Tensor compute_intimacy(const GraphDataset& d, double alpha);

// Row v of the closeness matrix without materialising it: power iteration
// on the transposed system to within tol (L1).
std::vector<double> intimacy_row(const GraphDataset& d, std::uint32_t v,
                                 double alpha, double tol = 1e-10);

// Indices of the k largest entries of scores, the position `self` excluded;
// ties broken toward the lower index.  Returns fewer than k when the graph
// is small.
std::vector<std::uint32_t> top_k_context(const std::vector<double>& scores,
                                         std::uint32_t self, std::size_t k);

// Structural role codes: colors start as degrees and are refined by
// neighborhood signatures for `iterations` rounds; codes are compressed to
// dense integers in signature order, so isomorphic graphs produce identical
// code multisets regardless of node numbering.
std::vector<std::uint32_t> wl_refine(const GraphDataset& d,
                                     std::size_t iterations);

// Shortest-path distances from each target to its context nodes, capped;
// unreachable pairs get the cap.
std::vector<std::vector<std::uint32_t>> hop_distances(
    const GraphDataset& d, const std::vector<std::uint32_t>& targets,
    const std::vector<std::vector<std::uint32_t>>& contexts,
    std::uint32_t cap);

struct PreprocessParams {
  std::size_t context_k = 7;
  double alpha = 0.15;
  std::size_t wl_iterations = 2;
  std::uint32_t hop_cap = 20;
};

// One node's sampled subgraph: itself first, then its context nodes in
// descending closeness.
struct SubgraphRecord {
  std::vector<std::uint32_t> nodes;      // [target, context...]
  std::vector<double> closeness;         // aligned with nodes
  std::vector<std::uint32_t> hops;       // aligned; 0 for the target
};

struct SubgraphBatch {
  std::string graph_id;
  PreprocessParams params;
  std::vector<std::uint32_t> wl_codes;   // per node of the graph
  std::vector<SubgraphRecord> records;   // one per node, by node id
};

SubgraphBatch build_subgraph_batch(const GraphDataset& d,
                                   const PreprocessParams& params);

// Cache persistence keyed by (graph, k, alpha, wl iterations, hop cap).
std::string cache_file_name(const std::string& graph_id,
                            const PreprocessParams& params);
void save_subgraph_batch(const SubgraphBatch& b, const std::string& path);
SubgraphBatch load_subgraph_batch(const std::string& path);
// True when `path` already holds a batch for this graph and parameter key.
bool cache_is_fresh(const std::string& path, const std::string& graph_id,
                    const PreprocessParams& params);

}  // namespace g5
