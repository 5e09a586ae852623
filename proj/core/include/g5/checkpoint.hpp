#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "g5/tensor.hpp"

namespace g5 {

struct CheckpointGraphInfo {
  std::string id;
  std::uint32_t context_k = 0;
  std::uint64_t feature_dim = 0;
  std::uint64_t num_classes = 0;
};

// Named parameter tensors plus the metadata needed to resume or transfer:
// run seed, completed schedule rounds, per-graph context sizes, the shared
// portal size.  Round-trips bit-exactly.
struct Checkpoint {
  std::uint64_t seed = 0;
  std::uint32_t rounds_completed = 0;
  std::uint32_t portal_k = 0;
  std::vector<CheckpointGraphInfo> graphs;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
  const CheckpointGraphInfo* graph(const std::string& id) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace g5
