#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "g5/sparse.hpp"
#include "g5/tensor.hpp"

namespace g5 {

// Named trainable tensor.  Gradients accumulate additively into value.grad
// across backward passes until explicitly zeroed (or consumed by the
// optimizer step).
struct Parameter {
  std::string name;
  Tensor value;

  static Parameter make(std::string name, Tensor t) {
    Parameter p;
    p.name = std::move(name);
    p.value = std::move(t);
    p.value.ensure_grad();
    return p;
  }

  void zero_grad() { value.zero_grad(); }
};

class Tape;

// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;
};

// Alternative gradient destination for backward passes.  Chunked training
// collects one sink per chunk and applies them in chunk order, so the sum
// is independent of how work is scheduled.
class GradSink {
 public:
  std::vector<double>& buffer_for(Parameter& p);

  // Adds every buffer into its parameter's grad, in first-touch order.
  void apply();
  void clear();

 private:
  std::vector<std::pair<Parameter*, std::vector<double>>> entries_;
  std::unordered_map<const Parameter*, std::size_t> index_;
};

// Per-block self-attention settings.
struct AttentionSpec {
  std::size_t block_rows = 0;
  std::size_t heads = 1;
  double dropout_p = 0.0;  // applied to attention probabilities in training
  // Optional per-block count of attendable rows; keys at or beyond the
  // count receive zero probability.  Null means every row attends.
  const std::vector<std::uint32_t>* valid_rows = nullptr;
};

// Reverse-mode tape.  Nodes are appended in execution order; backward walks
// them in reverse, so the graph is always topologically sorted.  A tape is
// single-shot: one forward build, one backward call.
class Tape {
 public:
  explicit Tape(bool training = false, std::uint64_t dropout_seed = 0,
                bool grad_enabled = true);

  Var leaf(Tensor value);       // constant
  Var leaf_grad(Tensor value);  // differentiable input, grad readable after
  Var param(Parameter& p);      // differentiable, grad lands on the parameter

  const Tensor& val(Var v) const;
  // Gradient buffer of a node (empty if backward never reached it).
  const std::vector<double>& grad(Var v) const;

  bool training() const { return training_; }
  std::mt19937_64& rng() { return rng_; }
  bool grad_enabled() const { return grad_enabled_; }

  // Seeds d(loss)/d(loss) = 1 and propagates.  loss must be scalar.
  void backward(Var loss, GradSink* sink = nullptr);
  // Seeds an arbitrary node with an externally supplied gradient.
  void backward_from(Var v, const std::vector<double>& upstream,
                     GradSink* sink = nullptr);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    std::vector<double> grad;
    std::function<void(Tape&)> back;
    Parameter* bound = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::uint32_t> param_nodes_;
  bool training_;
  bool grad_enabled_;
  bool used_ = false;
  std::mt19937_64 rng_;

  std::uint32_t push(Tensor val, const std::vector<std::uint32_t>& parents,
                     std::function<void(Tape&)> back);
  std::vector<double>& grad_buf(std::uint32_t id);
  void run_backward(std::uint32_t from, GradSink* sink);

  friend struct TapeOps;
};

// ---- operations ------------------------------------------------------------

Var matmul(Var a, Var b);
// y = x * w where x is a constant sparse matrix owned by the caller (must
// outlive the tape).
Var sparse_matmul(Tape& tape, const CsrMatrix* x, Var w);
Var add(Var a, Var b);
Var sub(Var a, Var b);
// (R x C) + row vector (C) broadcast over rows.
Var add_rowvec(Var a, Var bias);
Var scale(Var a, double c);
// Row i multiplied by weights[i] (constant weights).
Var scale_rows(Var a, std::vector<double> weights);
Var hadamard(Var a, Var b);
Var gelu(Var a);
Var sigmoid(Var a);
Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-12);
Var softmax_rows(Var a);
Var dropout(Var a, double p);
// y[r] = table[idx[r]] (row gather; duplicate indices allowed).
Var gather_rows(Var table, std::vector<std::uint32_t> idx);
// Means over consecutive row blocks: (B*block x C) -> (B x C).
Var mean_pool_blocks(Var a, std::size_t block_rows);
// Per block: keep the first min(in,out) rows, zero-pad up to out rows.
Var unify_blocks(Var a, std::size_t block_in, std::size_t block_out);
Var block_attention(Var q, Var k, Var v, const AttentionSpec& spec);
// (R x C, R x C) -> (R x 1) row dot products.
Var rowwise_dot(Var a, Var b);
// Row-wise v = s * |s| / (1 + |s|^2); rows below 1e-12 norm map to zero.
Var squash_rows(Var a);
Var sum_all(Var a);

// ---- losses (scalar results) ----------------------------------------------

// Mean over rows of -sum_j target[r][j] * log(max(pred[r][j], 1e-12)).
Var cross_entropy(Var pred, const Tensor& target_onehot);
// Indexed variant: row_weight * sum_r -log(max(pred[r][cls[r]], 1e-12)).
Var cross_entropy_indexed(Var pred, const std::vector<int>& classes,
                          double row_weight);
// Mean of squared differences over all entries.
Var mse_loss(Var pred, const Tensor& target);
// weight * sum of squared differences.
Var mse_loss_weighted(Var pred, const Tensor& target, double weight);
// weight * sum_r [max(x,0) - x*y + log(1+exp(-|x|))] for logits x (R or Rx1).
Var bce_with_logits(Var logits, const std::vector<double>& targets,
                    double weight);
// weight * sum of row euclidean norms.
Var l2norm_rows_sum(Var a, double weight = 1.0);

// ---- numeric helpers shared with tests -------------------------------------

// Attention probabilities for every (block, head): output has one c x c
// probability matrix per (block, head), stacked block-major then head, i.e.
// shape ((blocks*heads*c) x c).
Tensor attention_probabilities(const Tensor& q, const Tensor& k,
                               std::size_t block_rows, std::size_t heads,
                               const std::vector<std::uint32_t>* valid_rows);

}  // namespace g5
