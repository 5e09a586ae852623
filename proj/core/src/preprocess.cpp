#include "g5/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <map>
#include <numeric>

#include "g5/errors.hpp"
#include "g5/serialize.hpp"

namespace g5 {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ContractError("intimacy: alpha must lie in (0, 1)");
}

}  // namespace

Tensor normalize_adjacency(const GraphDataset& d) {
  const std::size_t n = d.num_nodes();
  if (n == 0) throw ContractError("normalize_adjacency: empty graph");
  Tensor a = Tensor::zeros({n, n});
  for (std::uint32_t v = 0; v < n; ++v) {
    const auto& nb = d.adjacency[v];
    if (nb.empty()) {
      a.at(v, v) = 1.0;
      continue;
    }
    const double w = 1.0 / static_cast<double>(nb.size());
    for (std::uint32_t u : nb) a.at(u, v) = w;
  }
  return a;
}

Tensor compute_intimacy(const GraphDataset& d, double alpha) {
  check_alpha(alpha);
  const std::size_t n = d.num_nodes();
  Tensor norm = normalize_adjacency(d);
  // Gauss-Jordan inversion of M = I - (1-alpha) * norm, partial pivoting.
  Tensor m = Tensor::zeros({n, n});
  Tensor inv = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    inv.at(i, i) = 1.0;
    for (std::size_t j = 0; j < n; ++j)
      m.at(i, j) = (i == j ? 1.0 : 0.0) - (1.0 - alpha) * norm.at(i, j);
  }
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(m.at(r, col)) > std::abs(m.at(pivot, col))) pivot = r;
    if (std::abs(m.at(pivot, col)) < 1e-300)
      throw NumericError("compute_intimacy: singular system");
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(m.at(pivot, j), m.at(col, j));
        std::swap(inv.at(pivot, j), inv.at(col, j));
      }
    }
    const double p = m.at(col, col);
    for (std::size_t j = 0; j < n; ++j) {
      m.at(col, j) /= p;
      inv.at(col, j) /= p;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = m.at(r, col);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        m.at(r, j) -= f * m.at(col, j);
        inv.at(r, j) -= f * inv.at(col, j);
      }
    }
  }
  for (double& x : inv.data) x *= alpha;
  return inv;
}

std::vector<double> intimacy_row(const GraphDataset& d, std::uint32_t v,
                                 double alpha, double tol) {
  check_alpha(alpha);
  if (!(tol > 0.0)) throw ContractError("intimacy: tolerance must be positive");
  const std::size_t n = d.num_nodes();
  if (v >= n) throw ContractError("intimacy_row: node out of range");
  // S[v,:] = alpha * sum_t ((1-alpha) A_norm^T)^t e_v.  A_norm^T averages a
  // node's value over its neighbors, so the iterate's max entry shrinks by
  // (1-alpha) per step and ceil(log(tol)/log(1-alpha)) steps suffice.
  const auto steps = static_cast<std::size_t>(
      std::ceil(std::log(tol) / std::log(1.0 - alpha)));
  std::vector<double> acc(n, 0.0), x(n, 0.0), next(n, 0.0);
  x[v] = 1.0;
  for (std::size_t t = 0; t <= steps; ++t) {
    double mass = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
      acc[u] += alpha * x[u];
      mass += std::abs(x[u]);
    }
    if (mass == 0.0) break;
    for (std::size_t u = 0; u < n; ++u) {
      const auto& nb = d.adjacency[u];
      if (nb.empty()) {
        next[u] = (1.0 - alpha) * x[u];
        continue;
      }
      double s = 0.0;
      for (std::uint32_t w : nb) s += x[w];
      next[u] = (1.0 - alpha) * s / static_cast<double>(nb.size());
    }
    x.swap(next);
  }
  return acc;
}

std::vector<std::uint32_t> top_k_context(const std::vector<double>& scores,
                                         std::uint32_t self, std::size_t k) {
  if (self >= scores.size())
    throw ContractError("top_k_context: self index out of range");
  std::vector<std::uint32_t> ids;
  ids.reserve(scores.size() - 1);
  for (std::uint32_t i = 0; i < scores.size(); ++i)
    if (i != self) ids.push_back(i);
  const std::size_t take = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + take, ids.end(),
                    [&scores](std::uint32_t a, std::uint32_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  ids.resize(take);
  return ids;
}

std::vector<std::uint32_t> wl_refine(const GraphDataset& d,
                                     std::size_t iterations) {
  const std::size_t n = d.num_nodes();
  std::vector<std::uint64_t> colors(n);
  for (std::size_t v = 0; v < n; ++v) colors[v] = d.adjacency[v].size();
  std::vector<std::uint64_t> next_colors(n);
  for (std::size_t it = 0; it < iterations; ++it) {
    // Signature: own color plus the sorted colors of the neighborhood.
    // Dense codes are assigned in sorted signature order, so the result is
    // invariant under node renumbering.
    std::vector<std::pair<std::uint64_t, std::vector<std::uint64_t>>> sigs(n);
    for (std::size_t v = 0; v < n; ++v) {
      std::vector<std::uint64_t> nb;
      nb.reserve(d.adjacency[v].size());
      for (std::uint32_t u : d.adjacency[v]) nb.push_back(colors[u]);
      std::sort(nb.begin(), nb.end());
      sigs[v] = {colors[v], std::move(nb)};
    }
    std::map<std::pair<std::uint64_t, std::vector<std::uint64_t>>,
             std::uint64_t>
        dense;
    for (const auto& s : sigs) dense.emplace(s, 0);
    std::uint64_t code = 0;
    for (auto& [sig, id] : dense) id = code++;
    for (std::size_t v = 0; v < n; ++v) next_colors[v] = dense.at(sigs[v]);
    colors.swap(next_colors);
  }
  std::vector<std::uint32_t> out(n);
  for (std::size_t v = 0; v < n; ++v)
    out[v] = static_cast<std::uint32_t>(colors[v]);
  return out;
}

std::vector<std::vector<std::uint32_t>> hop_distances(
    const GraphDataset& d, const std::vector<std::uint32_t>& targets,
    const std::vector<std::vector<std::uint32_t>>& contexts,
    std::uint32_t cap) {
  if (targets.size() != contexts.size())
    throw ContractError("hop_distances: targets/contexts size mismatch");
  const std::size_t n = d.num_nodes();
  std::vector<std::uint32_t> dist(n, 0);
  std::vector<std::uint32_t> stamp(n, 0);
  std::uint32_t round = 0;
  std::vector<std::uint32_t> frontier, next;
  std::vector<std::vector<std::uint32_t>> out(targets.size());

  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    const std::uint32_t src = targets[ti];
    if (src >= n) throw ContractError("hop_distances: target out of range");
    ++round;
    std::size_t wanted = 0;
    for (std::uint32_t c : contexts[ti]) {
      if (c >= n) throw ContractError("hop_distances: context out of range");
      if (c != src) ++wanted;
    }
    stamp[src] = round;
    dist[src] = 0;
    frontier.assign(1, src);
    std::size_t found = 0;
    std::uint32_t depth = 0;
    while (!frontier.empty() && found < wanted && depth < cap) {
      ++depth;
      next.clear();
      for (std::uint32_t u : frontier) {
        for (std::uint32_t w : d.adjacency[u]) {
          if (stamp[w] == round) continue;
          stamp[w] = round;
          dist[w] = depth;
          next.push_back(w);
        }
      }
      if (!next.empty())
        for (std::uint32_t c : contexts[ti])
          if (c != src && stamp[c] == round && dist[c] == depth) ++found;
      frontier.swap(next);
    }
    auto& row = out[ti];
    row.reserve(contexts[ti].size());
    for (std::uint32_t c : contexts[ti]) {
      if (c == src) {
        row.push_back(0);
      } else if (stamp[c] == round) {
        row.push_back(std::min(dist[c], cap));
      } else {
        row.push_back(cap);
      }
    }
  }
  return out;
}

SubgraphBatch build_subgraph_batch(const GraphDataset& d,
                                   const PreprocessParams& params) {
  if (params.context_k == 0)
    throw ContractError("build_subgraph_batch: context size must be positive");
  check_alpha(params.alpha);
  const std::size_t n = d.num_nodes();
  if (n == 0) throw ContractError("build_subgraph_batch: empty graph");

  SubgraphBatch batch;
  batch.graph_id = d.id;
  batch.params = params;
  batch.wl_codes = wl_refine(d, params.wl_iterations);
  batch.records.resize(n);

  std::vector<std::uint32_t> targets(n);
  std::iota(targets.begin(), targets.end(), 0u);
  std::vector<std::vector<std::uint32_t>> contexts(n);

  for (std::uint32_t v = 0; v < n; ++v) {
    const auto row = intimacy_row(d, v, params.alpha);
    auto ctx = top_k_context(row, v, params.context_k);
    auto& rec = batch.records[v];
    rec.nodes.reserve(ctx.size() + 1);
    rec.closeness.reserve(ctx.size() + 1);
    rec.nodes.push_back(v);
    rec.closeness.push_back(row[v]);
    for (std::uint32_t c : ctx) {
      rec.nodes.push_back(c);
      rec.closeness.push_back(row[c]);
    }
    contexts[v] = std::move(ctx);
  }

  const auto hops = hop_distances(d, targets, contexts, params.hop_cap);
  for (std::uint32_t v = 0; v < n; ++v) {
    auto& rec = batch.records[v];
    rec.hops.reserve(rec.nodes.size());
    rec.hops.push_back(0);
    for (std::uint32_t h : hops[v]) rec.hops.push_back(h);
  }
  return batch;
}

// ---- cache ------------------------------------------------------------------

namespace {
constexpr char kCacheMagic[4] = {'G', '5', 'P', 'C'};
constexpr std::uint32_t kCacheVersion = 1;

void encode_params(BinaryWriter& w, const PreprocessParams& p) {
  w.u64(p.context_k);
  w.f64(p.alpha);
  w.u64(p.wl_iterations);
  w.u32(p.hop_cap);
}

PreprocessParams decode_params(BinaryReader& r) {
  PreprocessParams p;
  p.context_k = static_cast<std::size_t>(r.u64());
  p.alpha = r.f64();
  p.wl_iterations = static_cast<std::size_t>(r.u64());
  p.hop_cap = r.u32();
  return p;
}
}  // namespace

std::string cache_file_name(const std::string& graph_id,
                            const PreprocessParams& params) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s_k%zu_a%.6g_wl%zu_hc%u.g5pc",
                graph_id.c_str(), params.context_k, params.alpha,
                params.wl_iterations, params.hop_cap);
  return buf;
}

void save_subgraph_batch(const SubgraphBatch& b, const std::string& path) {
  BinaryWriter w;
  w.str(b.graph_id);
  encode_params(w, b.params);
  w.u64(b.wl_codes.size());
  w.u32s(b.wl_codes);
  w.u64(b.records.size());
  for (const auto& rec : b.records) {
    w.u32(static_cast<std::uint32_t>(rec.nodes.size()));
    w.u32s(rec.nodes);
    w.doubles(rec.closeness);
    w.u32s(rec.hops);
  }
  write_envelope(path, kCacheMagic, kCacheVersion, w.bytes());
}

SubgraphBatch load_subgraph_batch(const std::string& path) {
  const auto payload = read_envelope(path, kCacheMagic, kCacheVersion);
  BinaryReader r(payload.data(), payload.size());
  SubgraphBatch b;
  b.graph_id = r.str();
  b.params = decode_params(r);
  const auto n_codes = static_cast<std::size_t>(r.u64());
  r.u32s(b.wl_codes, n_codes);
  const auto n_records = static_cast<std::size_t>(r.u64());
  b.records.resize(n_records);
  for (auto& rec : b.records) {
    const std::uint32_t len = r.u32();
    r.u32s(rec.nodes, len);
    r.doubles(rec.closeness, len);
    r.u32s(rec.hops, len);
  }
  if (!r.exhausted())
    throw IntegrityError(path + ": trailing bytes after payload");
  return b;
}

bool cache_is_fresh(const std::string& path, const std::string& graph_id,
                    const PreprocessParams& params) {
  try {
    const auto payload = read_envelope(path, kCacheMagic, kCacheVersion);
    BinaryReader r(payload.data(), payload.size());
    if (r.str() != graph_id) return false;
    const auto p = decode_params(r);
    return p.context_k == params.context_k && p.alpha == params.alpha &&
           p.wl_iterations == params.wl_iterations &&
           p.hop_cap == params.hop_cap;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace g5
