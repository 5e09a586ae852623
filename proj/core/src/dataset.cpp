#include "g5/dataset.hpp"

#include <algorithm>

#include "g5/errors.hpp"

namespace g5 {

int GraphDataset::label(std::uint32_t v) const {
  if (labels_locked())
    throw ModeViolationError("dataset '" + id +
                             "': label access while labels are locked");
  return raw_labels_[v];
}

const std::vector<std::uint32_t>& GraphDataset::split(
    const std::string& name) const {
  auto it = splits.find(name);
  if (it == splits.end())
    throw ContractError("dataset '" + id + "': no split named '" + name +
                        "'");
  return it->second;
}

void finalize_edges(
    GraphDataset& d,
    std::vector<std::pair<std::uint32_t, std::uint32_t>> raw_edges) {
  if (d.adjacency.empty()) d.adjacency.assign(d.features.rows, {});
  const std::size_t n = d.adjacency.size();
  std::vector<std::pair<std::uint32_t, std::uint32_t>> cleaned;
  cleaned.reserve(raw_edges.size());
  for (auto [u, v] : raw_edges) {
    if (u == v) continue;
    if (u >= n || v >= n)
      throw ContractError("dataset '" + d.id + "': edge endpoint out of range");
    if (u > v) std::swap(u, v);
    cleaned.emplace_back(u, v);
  }
  std::sort(cleaned.begin(), cleaned.end());
  cleaned.erase(std::unique(cleaned.begin(), cleaned.end()), cleaned.end());
  d.edges = std::move(cleaned);
  for (auto& nb : d.adjacency) nb.clear();
  for (auto [u, v] : d.edges) {
    d.adjacency[u].push_back(v);
    d.adjacency[v].push_back(u);
  }
  for (auto& nb : d.adjacency) std::sort(nb.begin(), nb.end());
}

}  // namespace g5
