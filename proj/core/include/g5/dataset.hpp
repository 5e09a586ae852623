#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "g5/sparse.hpp"

namespace g5 {

// One attributed graph: sparse node features, class labels, undirected
// edges, named node splits.  Label reads pass through a guard so zero-label
// regimes can prove nothing leaked: while locked, only a scoped evaluation
// pass may look at labels.
class GraphDataset {
 public:
  std::string id;
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;
  CsrMatrix features;                              // num_nodes x feature_dim
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;  // u < v, unique
  std::vector<std::vector<std::uint32_t>> adjacency;           // sorted
  std::map<std::string, std::vector<std::uint32_t>> splits;
  std::vector<std::string> label_names;            // class id -> name
  std::vector<std::string> node_names;             // node id -> external id

  std::size_t num_nodes() const { return adjacency.size(); }
  std::size_t degree(std::uint32_t v) const { return adjacency[v].size(); }

  // Label of node v (-1 when unlabeled).  Throws ModeViolationError while
  // labels are locked, unless called under a ScopedLabelAccess.
  int label(std::uint32_t v) const;
  bool has_label(std::uint32_t v) const { return raw_labels_[v] >= 0; }

  void set_labels(std::vector<int> labels) { raw_labels_ = std::move(labels); }
  const std::vector<int>& raw_labels_unguarded() const { return raw_labels_; }

  void lock_labels() { label_locked_ = true; }
  void unlock_labels() { label_locked_ = false; }
  bool labels_locked() const { return label_locked_ && bypass_depth_ == 0; }

  const std::vector<std::uint32_t>& split(const std::string& name) const;

  friend class ScopedLabelAccess;

 private:
  std::vector<int> raw_labels_;
  bool label_locked_ = false;
  mutable int bypass_depth_ = 0;
};

// Grants label access inside a locked dataset for one well-audited scope
// (the final accuracy evaluation of a zero-label run).
class ScopedLabelAccess {
 public:
  explicit ScopedLabelAccess(const GraphDataset& d) : d_(d) {
    ++d_.bypass_depth_;
  }
  ~ScopedLabelAccess() { --d_.bypass_depth_; }
  ScopedLabelAccess(const ScopedLabelAccess&) = delete;
  ScopedLabelAccess& operator=(const ScopedLabelAccess&) = delete;

 private:
  const GraphDataset& d_;
};

// Builds adjacency lists from the edge list; drops self loops and duplicate
// edges, symmetrizes.
void finalize_edges(
    GraphDataset& d,
    std::vector<std::pair<std::uint32_t, std::uint32_t>> raw_edges);

}  // namespace g5
