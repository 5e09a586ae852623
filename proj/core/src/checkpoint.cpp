#include "g5/checkpoint.hpp"

#include "g5/serialize.hpp"

namespace g5 {

namespace {
constexpr char kMagic[4] = {'G', '5', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

const CheckpointGraphInfo* Checkpoint::graph(const std::string& id) const {
  for (const auto& g : graphs)
    if (g.id == id) return &g;
  return nullptr;
}

void Checkpoint::save(const std::string& path) const {
  BinaryWriter w;
  w.u64(seed);
  w.u32(rounds_completed);
  w.u32(portal_k);
  w.u32(static_cast<std::uint32_t>(graphs.size()));
  for (const auto& g : graphs) {
    w.str(g.id);
    w.u32(g.context_k);
    w.u64(g.feature_dim);
    w.u64(g.num_classes);
  }
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.str(name);
    w.tensor(t);
  }
  write_envelope(path, kMagic, kVersion, w.bytes());
}

Checkpoint Checkpoint::load(const std::string& path) {
  const auto payload = read_envelope(path, kMagic, kVersion);
  BinaryReader r(payload.data(), payload.size());
  Checkpoint c;
  c.seed = r.u64();
  c.rounds_completed = r.u32();
  c.portal_k = r.u32();
  const std::uint32_t n_graphs = r.u32();
  c.graphs.resize(n_graphs);
  for (auto& g : c.graphs) {
    g.id = r.str();
    g.context_k = r.u32();
    g.feature_dim = r.u64();
    g.num_classes = r.u64();
  }
  const std::uint32_t n_tensors = r.u32();
  c.tensors.reserve(n_tensors);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    c.tensors.emplace_back(std::move(name), r.tensor());
  }
  if (!r.exhausted())
    throw IntegrityError(path + ": trailing bytes after payload");
  return c;
}

}  // namespace g5
