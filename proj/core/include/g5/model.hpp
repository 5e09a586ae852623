#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "g5/checkpoint.hpp"
#include "g5/dataset.hpp"
#include "g5/preprocess.hpp"
#include "g5/tape.hpp"

namespace g5 {

struct ModelConfig {
  std::size_t hidden = 32;
  std::size_t heads = 2;
  std::size_t input_depth = 2;
  std::size_t universal_depth = 2;
  std::size_t intermediate = 32;
  std::size_t classify_depth = 1;
  double hidden_dropout = 0.5;
  double attention_dropout = 0.3;
  bool mask_padding = false;

  void validate() const;
};

// One transformer layer: multi-head self-attention within each subgraph
// block, a learned projection of the stack's raw input added alongside the
// skip connection, then layer norm, feed-forward, layer norm.
struct LayerParams {
  Parameter wq, bq, wk, bk, wv, bv, wo, bo;
  Parameter wres;
  Parameter ln1_g, ln1_b;
  Parameter ff1_w, ff1_b, ff2_w, ff2_b;
  Parameter ln2_g, ln2_b;

  void init(const std::string& prefix, std::size_t hidden,
            std::size_t intermediate, std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& out);
};

// Per-graph entry stack: feature embedding plus its own transformer layers
// sized to the graph's context.
struct InputComponent {
  std::string graph_id;
  std::size_t context_k = 0;
  std::size_t feature_dim = 0;
  Parameter feat_w, feat_b;
  std::vector<LayerParams> layers;

  void init(const std::string& graph_id, std::size_t feature_dim,
            std::size_t context_k, const ModelConfig& cfg,
            std::uint64_t seed);
  void collect(std::vector<Parameter*>& out);
};

// Per-graph output heads: a classification stack and a feature
// reconstruction projection.  Link scoring is parameter-free.
struct HeadSet {
  std::string graph_id;
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  std::vector<Parameter> cls_w, cls_b;
  Parameter recon_w, recon_b;

  void init(const std::string& graph_id, std::size_t hidden,
            std::size_t feature_dim, std::size_t num_classes,
            std::size_t classify_depth, std::uint64_t seed);
  void collect(std::vector<Parameter*>& out);
  void collect_classify(std::vector<Parameter*>& out);
  void collect_reconstruct(std::vector<Parameter*>& out);
};

// The shared stack every graph passes through after size unification.
struct UniversalCore {
  std::vector<LayerParams> layers;

  void init(const ModelConfig& cfg, std::uint64_t seed);
  void collect(std::vector<Parameter*>& out);
};

// Whole multi-graph model: one universal core, one input component and one
// head set per attached graph.
class ModelState {
 public:
  ModelConfig cfg;
  std::size_t portal_k = 15;
  std::uint64_t seed = 0;
  UniversalCore core;
  std::map<std::string, InputComponent> inputs;
  std::map<std::string, HeadSet> heads;

  void init_core(const ModelConfig& cfg, std::size_t portal_k,
                 std::uint64_t seed);
  void add_graph(const std::string& id, std::size_t feature_dim,
                 std::size_t num_classes, std::size_t context_k);

  InputComponent& input(const std::string& id);
  HeadSet& head(const std::string& id);
  bool has_graph(const std::string& id) const { return inputs.count(id) > 0; }

  std::vector<Parameter*> parameters();
  std::vector<Parameter*> core_parameters();
  std::vector<Parameter*> graph_parameters(const std::string& id);

  Checkpoint to_checkpoint(std::uint32_t rounds_completed) const;
  static ModelState from_checkpoint(const Checkpoint& c,
                                    const ModelConfig& cfg);
};

// ---- batched forward --------------------------------------------------------

// Contiguous run of equally sized subgraph records, bounded by a flat row
// budget so full-batch epochs stream in constant memory.
struct ChunkSlice {
  std::uint32_t first_record = 0;
  std::uint32_t count = 0;
  std::uint32_t block_len = 0;  // rows per record, target included
};

std::vector<ChunkSlice> plan_chunks(const SubgraphBatch& batch,
                                    std::size_t row_budget);

// Chunking over an arbitrary set of record ids (e.g. just the supervised
// nodes): ids are grouped by record length, then split by the row budget.
struct NodeChunk {
  std::vector<std::uint32_t> records;
  std::uint32_t block_len = 0;
};

std::vector<NodeChunk> plan_node_chunks(const SubgraphBatch& batch,
                                        std::vector<std::uint32_t> nodes,
                                        std::size_t row_budget);

// Fixed per-slot encodings (role code + rank + hop) and the sparse feature
// rows of one chunk.  Owned by the caller so it outlives the tape that
// references it.
struct ChunkContext {
  std::uint32_t count = 0;      // records in the chunk
  std::uint32_t block_len = 0;  // rows per record
  std::vector<std::uint32_t> flat_nodes;  // count * block_len node ids
  CsrMatrix feats;                        // count * block_len x feature_dim
  Tensor encodings;                       // count * block_len x hidden
};

// Per-graph encoding tables, built once per batch.
struct EncodingTables {
  Tensor role;  // wl code -> hidden
  Tensor rank;  // context position -> hidden
  Tensor hop;   // hop distance -> hidden
};

EncodingTables build_encoding_tables(const SubgraphBatch& batch,
                                     std::size_t hidden);

void build_chunk_context(ChunkContext& ctx, const GraphDataset& d,
                         const SubgraphBatch& batch, const ChunkSlice& slice,
                         const EncodingTables& tables);

void build_node_chunk_context(ChunkContext& ctx, const GraphDataset& d,
                              const SubgraphBatch& batch,
                              const NodeChunk& chunk,
                              const EncodingTables& tables);

// Raw slot embeddings: feature embedding + role + rank + hop encodings.
Var embed_chunk(Tape& tape, const ChunkContext& ctx, InputComponent& comp);

Var g_transformer_layer(Tape& tape, Var h, Var x_raw, LayerParams& layer,
                        const ModelConfig& cfg, std::size_t block_rows,
                        const std::vector<std::uint32_t>* valid_rows);

// Input component stack over h0 (block_rows = the chunk's record length).
Var input_forward(Tape& tape, Var h0, InputComponent& comp,
                  const ModelConfig& cfg, std::size_t block_rows);

// Size unification into the portal width: per record keep the first
// min(in, out) rows (the target always survives), zero-pad the rest.
Var unify(Var h, std::size_t block_in, std::size_t block_out);

Var universal_forward(Tape& tape, Var z0, UniversalCore& core,
                      const ModelConfig& cfg, std::size_t block_rows,
                      const std::vector<std::uint32_t>* valid_rows);

// Mean over each record's rows -> one vector per target node.
Var fuse(Var z, std::size_t block_rows);

// Fused chunk pipeline: embeddings -> input stack -> unify -> universal
// stack -> fusion.  Returns one row per record in the chunk.
Var forward_fused(Tape& tape, const ChunkContext& ctx, InputComponent& comp,
                  UniversalCore& core, const ModelConfig& cfg,
                  std::size_t portal_block);

// Heads.
Var classify(Tape& tape, Var fused, HeadSet& head, const ModelConfig& cfg);
Var reconstruct(Tape& tape, Var fused, HeadSet& head);
double score_links(const double* zu, const double* zv, std::size_t dim);

}  // namespace g5
