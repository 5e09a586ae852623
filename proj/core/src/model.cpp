#include "g5/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "g5/posenc.hpp"
#include "g5/rng.hpp"

namespace g5 {

namespace {

Tensor xavier(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  Tensor t = Tensor::zeros({fan_in, fan_out});
  const double limit =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> unif(-limit, limit);
  for (double& x : t.data) x = unif(rng);
  return t;
}

Parameter weight(const std::string& name, std::size_t fan_in,
                 std::size_t fan_out, std::mt19937_64& rng) {
  return Parameter::make(name, xavier(fan_in, fan_out, rng));
}

Parameter bias(const std::string& name, std::size_t dim) {
  return Parameter::make(name, Tensor::zeros({dim}));
}

Parameter ones(const std::string& name, std::size_t dim) {
  return Parameter::make(name, Tensor::full({dim}, 1.0));
}

}  // namespace

void ModelConfig::validate() const {
  if (hidden == 0 || heads == 0 || intermediate == 0 || classify_depth == 0)
    throw ConfigError("model: hidden, heads, intermediate and classify depth "
                      "must be positive");
  if (hidden % 2 != 0)
    throw ConfigError("model: hidden width must be even for the index "
                      "encodings");
  if (hidden % heads != 0)
    throw ConfigError("model: hidden width " + std::to_string(hidden) +
                      " not divisible by " + std::to_string(heads) +
                      " heads");
  if (hidden_dropout < 0.0 || hidden_dropout >= 1.0 ||
      attention_dropout < 0.0 || attention_dropout >= 1.0)
    throw ConfigError("model: dropout rates must lie in [0, 1)");
}

// ---- parameter groups -------------------------------------------------------

void LayerParams::init(const std::string& prefix, std::size_t hidden,
                       std::size_t intermediate, std::mt19937_64& rng) {
  wq = weight(prefix + ".wq", hidden, hidden, rng);
  bq = bias(prefix + ".bq", hidden);
  wk = weight(prefix + ".wk", hidden, hidden, rng);
  bk = bias(prefix + ".bk", hidden);
  wv = weight(prefix + ".wv", hidden, hidden, rng);
  bv = bias(prefix + ".bv", hidden);
  wo = weight(prefix + ".wo", hidden, hidden, rng);
  bo = bias(prefix + ".bo", hidden);
  wres = weight(prefix + ".wres", hidden, hidden, rng);
  ln1_g = ones(prefix + ".ln1_g", hidden);
  ln1_b = bias(prefix + ".ln1_b", hidden);
  ff1_w = weight(prefix + ".ff1_w", hidden, intermediate, rng);
  ff1_b = bias(prefix + ".ff1_b", intermediate);
  ff2_w = weight(prefix + ".ff2_w", intermediate, hidden, rng);
  ff2_b = bias(prefix + ".ff2_b", hidden);
  ln2_g = ones(prefix + ".ln2_g", hidden);
  ln2_b = bias(prefix + ".ln2_b", hidden);
}

void LayerParams::collect(std::vector<Parameter*>& out) {
  for (Parameter* p : {&wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo, &wres, &ln1_g,
                       &ln1_b, &ff1_w, &ff1_b, &ff2_w, &ff2_b, &ln2_g,
                       &ln2_b})
    out.push_back(p);
}

void InputComponent::init(const std::string& id, std::size_t fdim,
                          std::size_t k, const ModelConfig& cfg,
                          std::uint64_t seed) {
  graph_id = id;
  feature_dim = fdim;
  context_k = k;
  auto rng = make_rng(seed);
  feat_w = weight("input." + id + ".feat_w", fdim, cfg.hidden, rng);
  feat_b = bias("input." + id + ".feat_b", cfg.hidden);
  layers.resize(cfg.input_depth);
  for (std::size_t l = 0; l < layers.size(); ++l)
    layers[l].init("input." + id + ".layer" + std::to_string(l), cfg.hidden,
                   cfg.intermediate, rng);
}

void InputComponent::collect(std::vector<Parameter*>& out) {
  out.push_back(&feat_w);
  out.push_back(&feat_b);
  for (auto& l : layers) l.collect(out);
}

void HeadSet::init(const std::string& id, std::size_t hidden,
                   std::size_t fdim, std::size_t classes, std::size_t depth,
                   std::uint64_t seed) {
  graph_id = id;
  num_classes = classes;
  feature_dim = fdim;
  auto rng = make_rng(seed);
  cls_w.clear();
  cls_b.clear();
  for (std::size_t l = 0; l < depth; ++l) {
    const std::size_t in = hidden;
    const std::size_t out = (l + 1 == depth) ? classes : hidden;
    const std::string base = "head." + id + ".cls" + std::to_string(l);
    cls_w.push_back(weight(base + "_w", in, out, rng));
    cls_b.push_back(bias(base + "_b", out));
  }
  recon_w = weight("head." + id + ".recon_w", hidden, fdim, rng);
  recon_b = bias("head." + id + ".recon_b", fdim);
}

void HeadSet::collect(std::vector<Parameter*>& out) {
  collect_classify(out);
  collect_reconstruct(out);
}

void HeadSet::collect_classify(std::vector<Parameter*>& out) {
  for (std::size_t l = 0; l < cls_w.size(); ++l) {
    out.push_back(&cls_w[l]);
    out.push_back(&cls_b[l]);
  }
}

void HeadSet::collect_reconstruct(std::vector<Parameter*>& out) {
  out.push_back(&recon_w);
  out.push_back(&recon_b);
}

void UniversalCore::init(const ModelConfig& cfg, std::uint64_t seed) {
  auto rng = make_rng(seed);
  layers.resize(cfg.universal_depth);
  for (std::size_t l = 0; l < layers.size(); ++l)
    layers[l].init("core.layer" + std::to_string(l), cfg.hidden,
                   cfg.intermediate, rng);
}

void UniversalCore::collect(std::vector<Parameter*>& out) {
  for (auto& l : layers) l.collect(out);
}

// ---- model state ------------------------------------------------------------

void ModelState::init_core(const ModelConfig& config, std::size_t portal,
                           std::uint64_t run_seed) {
  config.validate();
  if (portal == 0) throw ConfigError("model: portal size must be positive");
  cfg = config;
  portal_k = portal;
  seed = run_seed;
  core.init(cfg, derive_seed(run_seed, "init-core"));
  inputs.clear();
  heads.clear();
}

void ModelState::add_graph(const std::string& id, std::size_t feature_dim,
                           std::size_t num_classes, std::size_t context_k) {
  if (inputs.count(id))
    throw ContractError("model: graph '" + id + "' already attached");
  if (feature_dim == 0 || num_classes == 0 || context_k == 0)
    throw ContractError("model: graph '" + id + "' has degenerate sizes");
  InputComponent comp;
  comp.init(id, feature_dim, context_k, cfg,
            derive_seed(seed, "init-input", fnv1a(id)));
  inputs.emplace(id, std::move(comp));
  HeadSet head;
  head.init(id, cfg.hidden, feature_dim, num_classes, cfg.classify_depth,
            derive_seed(seed, "init-head", fnv1a(id)));
  heads.emplace(id, std::move(head));
}

InputComponent& ModelState::input(const std::string& id) {
  auto it = inputs.find(id);
  if (it == inputs.end())
    throw ContractError("model: no input component for graph '" + id + "'");
  return it->second;
}

HeadSet& ModelState::head(const std::string& id) {
  auto it = heads.find(id);
  if (it == heads.end())
    throw ContractError("model: no heads for graph '" + id + "'");
  return it->second;
}

std::vector<Parameter*> ModelState::parameters() {
  std::vector<Parameter*> out;
  core.collect(out);
  for (auto& [id, comp] : inputs) comp.collect(out);
  for (auto& [id, head] : heads) head.collect(out);
  return out;
}

std::vector<Parameter*> ModelState::core_parameters() {
  std::vector<Parameter*> out;
  core.collect(out);
  return out;
}

std::vector<Parameter*> ModelState::graph_parameters(const std::string& id) {
  std::vector<Parameter*> out;
  input(id).collect(out);
  head(id).collect(out);
  return out;
}

Checkpoint ModelState::to_checkpoint(std::uint32_t rounds_completed) const {
  Checkpoint c;
  c.seed = seed;
  c.rounds_completed = rounds_completed;
  c.portal_k = static_cast<std::uint32_t>(portal_k);
  for (const auto& [id, comp] : inputs) {
    CheckpointGraphInfo info;
    info.id = id;
    info.context_k = static_cast<std::uint32_t>(comp.context_k);
    info.feature_dim = comp.feature_dim;
    info.num_classes = heads.at(id).num_classes;
    c.graphs.push_back(std::move(info));
  }
  auto& self = const_cast<ModelState&>(*this);
  for (Parameter* p : self.parameters())
    c.tensors.emplace_back(p->name, p->value);
  for (auto& [name, t] : c.tensors) t.grad.clear();
  return c;
}

ModelState ModelState::from_checkpoint(const Checkpoint& c,
                                       const ModelConfig& cfg) {
  ModelState m;
  m.init_core(cfg, c.portal_k, c.seed);
  for (const auto& g : c.graphs)
    m.add_graph(g.id, g.feature_dim, g.num_classes, g.context_k);
  for (Parameter* p : m.parameters()) {
    const Tensor* t = c.find(p->name);
    if (t == nullptr)
      throw ContractError("checkpoint: missing tensor '" + p->name +
                          "' (configured depths or sizes do not match)");
    if (t->shape != p->value.shape)
      throw ContractError("checkpoint: tensor '" + p->name + "' has shape " +
                          Tensor(*t).shape_str() + ", expected " +
                          p->value.shape_str());
    p->value.data = t->data;
    p->zero_grad();
  }
  return m;
}

// ---- chunk planning ----------------------------------------------------------

std::vector<ChunkSlice> plan_chunks(const SubgraphBatch& batch,
                                    std::size_t row_budget) {
  if (row_budget == 0)
    throw ContractError("plan_chunks: row budget must be positive");
  std::vector<ChunkSlice> out;
  const auto& records = batch.records;
  std::uint32_t i = 0;
  while (i < records.size()) {
    const auto len = static_cast<std::uint32_t>(records[i].nodes.size());
    ChunkSlice slice{i, 0, len};
    std::size_t rows = 0;
    while (i < records.size() &&
           records[i].nodes.size() == len &&
           (slice.count == 0 || rows + len <= row_budget)) {
      rows += len;
      ++slice.count;
      ++i;
    }
    out.push_back(slice);
  }
  return out;
}

EncodingTables build_encoding_tables(const SubgraphBatch& batch,
                                     std::size_t hidden) {
  std::uint32_t max_code = 0;
  for (std::uint32_t c : batch.wl_codes) max_code = std::max(max_code, c);
  std::size_t max_len = 1;
  std::uint32_t max_hop = 0;
  for (const auto& rec : batch.records) {
    max_len = std::max(max_len, rec.nodes.size());
    for (std::uint32_t h : rec.hops) max_hop = std::max(max_hop, h);
  }
  EncodingTables t;
  t.role = position_embedding_table(max_code, hidden);
  t.rank = position_embedding_table(max_len - 1, hidden);
  t.hop = position_embedding_table(max_hop, hidden);
  return t;
}

std::vector<NodeChunk> plan_node_chunks(const SubgraphBatch& batch,
                                        std::vector<std::uint32_t> nodes,
                                        std::size_t row_budget) {
  if (row_budget == 0)
    throw ContractError("plan_node_chunks: row budget must be positive");
  std::sort(nodes.begin(), nodes.end(),
            [&batch](std::uint32_t a, std::uint32_t b) {
              const auto la = batch.records[a].nodes.size();
              const auto lb = batch.records[b].nodes.size();
              if (la != lb) return la < lb;
              return a < b;
            });
  std::vector<NodeChunk> out;
  std::size_t i = 0;
  while (i < nodes.size()) {
    const auto len =
        static_cast<std::uint32_t>(batch.records[nodes[i]].nodes.size());
    NodeChunk chunk;
    chunk.block_len = len;
    std::size_t rows = 0;
    while (i < nodes.size() && batch.records[nodes[i]].nodes.size() == len &&
           (chunk.records.empty() || rows + len <= row_budget)) {
      chunk.records.push_back(nodes[i]);
      rows += len;
      ++i;
    }
    out.push_back(std::move(chunk));
  }
  return out;
}

void build_node_chunk_context(ChunkContext& ctx, const GraphDataset& d,
                              const SubgraphBatch& batch,
                              const NodeChunk& chunk,
                              const EncodingTables& tables) {
  const std::size_t hidden = tables.role.shape[1];
  const std::size_t rows = chunk.records.size() * chunk.block_len;
  ctx.count = static_cast<std::uint32_t>(chunk.records.size());
  ctx.block_len = chunk.block_len;
  ctx.flat_nodes.clear();
  ctx.flat_nodes.reserve(rows);
  ctx.encodings = Tensor::zeros({rows, hidden});
  for (std::size_t r = 0; r < chunk.records.size(); ++r) {
    const auto& rec = batch.records[chunk.records[r]];
    if (rec.nodes.size() != chunk.block_len)
      throw ContractError("chunk: record length mismatch inside chunk");
    for (std::size_t p = 0; p < rec.nodes.size(); ++p) {
      const std::uint32_t node = rec.nodes[p];
      ctx.flat_nodes.push_back(node);
      double* enc =
          ctx.encodings.data.data() + (r * chunk.block_len + p) * hidden;
      const double* role =
          tables.role.data.data() + batch.wl_codes[node] * hidden;
      const double* rank = tables.rank.data.data() + p * hidden;
      const double* hop = tables.hop.data.data() + rec.hops[p] * hidden;
      for (std::size_t j = 0; j < hidden; ++j)
        enc[j] = role[j] + rank[j] + hop[j];
    }
  }
  ctx.feats = d.features.take_rows(ctx.flat_nodes);
}

void build_chunk_context(ChunkContext& ctx, const GraphDataset& d,
                         const SubgraphBatch& batch, const ChunkSlice& slice,
                         const EncodingTables& tables) {
  NodeChunk chunk;
  chunk.block_len = slice.block_len;
  chunk.records.resize(slice.count);
  std::iota(chunk.records.begin(), chunk.records.end(), slice.first_record);
  build_node_chunk_context(ctx, d, batch, chunk, tables);
}

// ---- forward ----------------------------------------------------------------

Var embed_chunk(Tape& tape, const ChunkContext& ctx, InputComponent& comp) {
  Var w = tape.param(comp.feat_w);
  Var b = tape.param(comp.feat_b);
  Var feats = add_rowvec(sparse_matmul(tape, &ctx.feats, w), b);
  return add(feats, tape.leaf(ctx.encodings));
}

Var g_transformer_layer(Tape& tape, Var h, Var x_raw, LayerParams& layer,
                        const ModelConfig& cfg, std::size_t block_rows,
                        const std::vector<std::uint32_t>* valid_rows) {
  Var q = add_rowvec(matmul(h, tape.param(layer.wq)), tape.param(layer.bq));
  Var k = add_rowvec(matmul(h, tape.param(layer.wk)), tape.param(layer.bk));
  Var v = add_rowvec(matmul(h, tape.param(layer.wv)), tape.param(layer.bv));
  AttentionSpec spec;
  spec.block_rows = block_rows;
  spec.heads = cfg.heads;
  spec.dropout_p = cfg.attention_dropout;
  spec.valid_rows = valid_rows;
  Var attn = block_attention(q, k, v, spec);
  attn = add_rowvec(matmul(attn, tape.param(layer.wo)), tape.param(layer.bo));
  attn = dropout(attn, cfg.hidden_dropout);
  Var gres = matmul(x_raw, tape.param(layer.wres));
  Var h1 = layer_norm(add(add(h, attn), gres), tape.param(layer.ln1_g),
                      tape.param(layer.ln1_b));
  Var ffn = add_rowvec(matmul(h1, tape.param(layer.ff1_w)),
                       tape.param(layer.ff1_b));
  ffn = gelu(ffn);
  ffn = add_rowvec(matmul(ffn, tape.param(layer.ff2_w)),
                   tape.param(layer.ff2_b));
  ffn = dropout(ffn, cfg.hidden_dropout);
  return layer_norm(add(h1, ffn), tape.param(layer.ln2_g),
                    tape.param(layer.ln2_b));
}

Var input_forward(Tape& tape, Var h0, InputComponent& comp,
                  const ModelConfig& cfg, std::size_t block_rows) {
  Var h = h0;
  for (auto& layer : comp.layers)
    h = g_transformer_layer(tape, h, h0, layer, cfg, block_rows, nullptr);
  return h;
}

Var unify(Var h, std::size_t block_in, std::size_t block_out) {
  if (block_in == block_out) return h;
  return unify_blocks(h, block_in, block_out);
}

Var universal_forward(Tape& tape, Var z0, UniversalCore& core,
                      const ModelConfig& cfg, std::size_t block_rows,
                      const std::vector<std::uint32_t>* valid_rows) {
  Var z = z0;
  for (auto& layer : core.layers)
    z = g_transformer_layer(tape, z, z0, layer, cfg, block_rows, valid_rows);
  return z;
}

Var fuse(Var z, std::size_t block_rows) {
  return mean_pool_blocks(z, block_rows);
}

Var forward_fused(Tape& tape, const ChunkContext& ctx, InputComponent& comp,
                  UniversalCore& core, const ModelConfig& cfg,
                  std::size_t portal_block) {
  Var h0 = embed_chunk(tape, ctx, comp);
  Var h = input_forward(tape, h0, comp, cfg, ctx.block_len);
  Var z0 = unify(h, ctx.block_len, portal_block);
  std::vector<std::uint32_t> valid;
  const std::vector<std::uint32_t>* valid_ptr = nullptr;
  if (cfg.mask_padding && ctx.block_len < portal_block) {
    valid.assign(ctx.count, ctx.block_len);
    valid_ptr = &valid;
  }
  Var z = universal_forward(tape, z0, core, cfg, portal_block, valid_ptr);
  return fuse(z, portal_block);
}

Var classify(Tape& tape, Var fused, HeadSet& head, const ModelConfig& cfg) {
  (void)cfg;
  Var x = fused;
  for (std::size_t l = 0; l < head.cls_w.size(); ++l) {
    x = add_rowvec(matmul(x, tape.param(head.cls_w[l])),
                   tape.param(head.cls_b[l]));
    if (l + 1 < head.cls_w.size()) x = gelu(x);
  }
  return softmax_rows(x);
}

Var reconstruct(Tape& tape, Var fused, HeadSet& head) {
  return add_rowvec(matmul(fused, tape.param(head.recon_w)),
                    tape.param(head.recon_b));
}

double score_links(const double* zu, const double* zv, std::size_t dim) {
  double dot = 0.0;
  for (std::size_t j = 0; j < dim; ++j) dot += zu[j] * zv[j];
  const double x = dot / std::sqrt(static_cast<double>(dim));
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace g5
