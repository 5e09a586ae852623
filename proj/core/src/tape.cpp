#include "g5/tape.hpp"

#include <algorithm>
#include <cmath>

#include "g5/blas.hpp"

namespace g5 {

namespace {

constexpr double kProbFloor = 1e-12;
constexpr double kNormFloor = 1e-12;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void check_same_tape(Var a, Var b, const char* op) {
  if (a.tape == nullptr || b.tape == nullptr || a.tape != b.tape)
    throw ContractError(std::string(op) + ": operands on different tapes");
}

}  // namespace

// ---- GradSink ---------------------------------------------------------------

std::vector<double>& GradSink::buffer_for(Parameter& p) {
  auto it = index_.find(&p);
  if (it != index_.end()) return entries_[it->second].second;
  index_.emplace(&p, entries_.size());
  entries_.emplace_back(&p, std::vector<double>(p.value.data.size(), 0.0));
  return entries_.back().second;
}

void GradSink::apply() {
  for (auto& [param, buf] : entries_) {
    param->value.ensure_grad();
    for (std::size_t i = 0; i < buf.size(); ++i)
      param->value.grad[i] += buf[i];
  }
}

void GradSink::clear() {
  entries_.clear();
  index_.clear();
}

// ---- Tape -------------------------------------------------------------------

Tape::Tape(bool training, std::uint64_t dropout_seed, bool grad_enabled)
    : training_(training), grad_enabled_(grad_enabled), rng_(dropout_seed) {}

std::uint32_t Tape::push(Tensor val,
                         const std::vector<std::uint32_t>& parents,
                         std::function<void(Tape&)> back) {
  Node node;
  node.val = std::move(val);
  node.requires_grad = false;
  if (grad_enabled_) {
    for (std::uint32_t p : parents) {
      if (nodes_[p].requires_grad) {
        node.requires_grad = true;
        break;
      }
    }
  }
  if (node.requires_grad) node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return static_cast<std::uint32_t>(nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
  Node node;
  node.val = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::leaf_grad(Tensor value) {
  Node node;
  node.val = std::move(value);
  node.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var{this, it->second};
  Node node;
  node.val = p.value;
  node.val.grad.clear();
  node.requires_grad = grad_enabled_;
  node.bound = &p;
  nodes_.push_back(std::move(node));
  auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return Var{this, id};
}

const Tensor& Tape::val(Var v) const { return nodes_.at(v.id).val; }

const std::vector<double>& Tape::grad(Var v) const {
  return nodes_.at(v.id).grad;
}

std::vector<double>& Tape::grad_buf(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.val.data.size())
    n.grad.assign(n.val.data.size(), 0.0);
  return n.grad;
}

void Tape::run_backward(std::uint32_t from, GradSink* sink) {
  if (used_) throw ContractError("tape: backward called twice");
  used_ = true;
  for (std::uint32_t i = from + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && !n.grad.empty() && n.back) n.back(*this);
  }
  for (std::size_t i = 0; i <= from; ++i) {
    Node& n = nodes_[i];
    if (n.bound == nullptr || n.grad.empty()) continue;
    if (sink != nullptr) {
      auto& buf = sink->buffer_for(*n.bound);
      for (std::size_t j = 0; j < buf.size(); ++j) buf[j] += n.grad[j];
    } else {
      n.bound->value.ensure_grad();
      for (std::size_t j = 0; j < n.grad.size(); ++j)
        n.bound->value.grad[j] += n.grad[j];
    }
  }
}

void Tape::backward(Var loss, GradSink* sink) {
  if (loss.tape != this) throw ContractError("backward: foreign var");
  Node& n = nodes_.at(loss.id);
  if (n.val.numel() != 1)
    throw ContractError("backward: loss must be scalar, got shape " +
                        n.val.shape_str());
  if (!n.requires_grad) {
    used_ = true;
    return;
  }
  grad_buf(loss.id)[0] = 1.0;
  run_backward(loss.id, sink);
}

void Tape::backward_from(Var v, const std::vector<double>& upstream,
                         GradSink* sink) {
  if (v.tape != this) throw ContractError("backward_from: foreign var");
  Node& n = nodes_.at(v.id);
  if (upstream.size() != n.val.data.size())
    throw ShapeError("backward_from: upstream size mismatch");
  if (!n.requires_grad) {
    used_ = true;
    return;
  }
  auto& g = grad_buf(v.id);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += upstream[i];
  run_backward(v.id, sink);
}

// ---- op plumbing ------------------------------------------------------------

struct TapeOps {
  static std::uint32_t next_id(const Tape& t) {
    return static_cast<std::uint32_t>(t.nodes_.size());
  }
  static std::uint32_t push(Tape& t, Tensor val,
                            const std::vector<std::uint32_t>& parents,
                            std::function<void(Tape&)> back) {
    return t.push(std::move(val), parents, std::move(back));
  }
  static const Tensor& val(Tape& t, std::uint32_t id) {
    return t.nodes_[id].val;
  }
  static const std::vector<double>& grad_ro(Tape& t, std::uint32_t id) {
    return t.nodes_[id].grad;
  }
  static std::vector<double>& grad(Tape& t, std::uint32_t id) {
    return t.grad_buf(id);
  }
  static bool wants_grad(Tape& t, std::uint32_t id) {
    return t.nodes_[id].requires_grad;
  }
};

namespace {

const Tensor& V(Tape& t, std::uint32_t id) { return TapeOps::val(t, id); }
std::vector<double>& G(Tape& t, std::uint32_t id) {
  return TapeOps::grad(t, id);
}
const std::vector<double>& GUP(Tape& t, std::uint32_t id) {
  return TapeOps::grad_ro(t, id);
}
bool wants(Tape& t, std::uint32_t id) { return TapeOps::wants_grad(t, id); }

void require_2d(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw ShapeError(std::string(op) + ": operand must be rank 2, got " +
                     t.shape_str());
}

}  // namespace

// ---- ops --------------------------------------------------------------------

Var matmul(Var a, Var b) {
  check_same_tape(a, b, "matmul");
  Tape& t = *a.tape;
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  require_2d(av, "matmul");
  require_2d(bv, "matmul");
  if (av.shape[1] != bv.shape[0])
    throw ShapeError("matmul: dimension mismatch " + av.shape_str() + " x " +
                     bv.shape_str());
  const std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
  Tensor out = Tensor::zeros({m, n});
  blas::gemm(false, false, m, n, k, 1.0, av.data.data(), k, bv.data.data(), n,
             0.0, out.data.data(), n);
  const std::uint32_t ai = a.id, bi = b.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, std::move(out), {ai, bi},
                          [ai, bi, self, m, k, n](Tape& t) {
    const auto& dy = GUP(t, self);
    if (wants(t, ai)) {
      // dA += dY * B^T
      blas::gemm(false, true, m, k, n, 1.0, dy.data(), n,
                 V(t, bi).data.data(), n, 1.0, G(t, ai).data(), k);
    }
    if (wants(t, bi)) {
      // dB += A^T * dY
      blas::gemm(true, false, k, n, m, 1.0, V(t, ai).data.data(), k,
                 dy.data(), n, 1.0, G(t, bi).data(), n);
    }
  });
  return Var{&t, id};
}

Var sparse_matmul(Tape& t, const CsrMatrix* x, Var w) {
  if (w.tape != &t) throw ContractError("sparse_matmul: foreign var");
  const Tensor& wv = t.val(w);
  require_2d(wv, "sparse_matmul");
  if (x->cols != wv.shape[0])
    throw ShapeError("sparse_matmul: dimension mismatch sparse [" +
                     std::to_string(x->rows) + "x" + std::to_string(x->cols) +
                     "] x " + wv.shape_str());
  const std::size_t n = wv.shape[1];
  Tensor out = Tensor::zeros({x->rows, n});
  for (std::size_t r = 0; r < x->rows; ++r) {
    double* orow = out.data.data() + r * n;
    for (std::size_t p = x->indptr[r]; p < x->indptr[r + 1]; ++p) {
      const double xv = x->values[p];
      const double* wrow = wv.data.data() + x->indices[p] * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += xv * wrow[j];
    }
  }
  const std::uint32_t wi = w.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, std::move(out), {wi}, [wi, self, x, n](Tape& t) {
    if (!wants(t, wi)) return;
    const auto& dy = GUP(t, self);
    auto& dw = G(t, wi);
    for (std::size_t r = 0; r < x->rows; ++r) {
      const double* dyrow = dy.data() + r * n;
      for (std::size_t p = x->indptr[r]; p < x->indptr[r + 1]; ++p) {
        const double xv = x->values[p];
        double* dwrow = dw.data() + x->indices[p] * n;
        for (std::size_t j = 0; j < n; ++j) dwrow[j] += xv * dyrow[j];
      }
    }
  });
  return Var{&t, id};
}

Var add(Var a, Var b) {
  check_same_tape(a, b, "add");
  Tape& t = *a.tape;
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  if (!av.same_shape(bv))
    throw ShapeError("add: shape mismatch " + av.shape_str() + " vs " +
                     bv.shape_str());
  Tensor out = av;
  out.grad.clear();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
  const std::uint32_t ai = a.id, bi = b.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, std::move(out), {ai, bi}, [ai, bi, self](Tape& t) {
    const auto& dy = GUP(t, self);
    if (wants(t, ai)) {
      auto& da = G(t, ai);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
    }
    if (wants(t, bi)) {
      auto& db = G(t, bi);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
    }
  });
  return Var{&t, id};
}

Var sub(Var a, Var b) {
  check_same_tape(a, b, "sub");
  Tape& t = *a.tape;
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  if (!av.same_shape(bv))
    throw ShapeError("sub: shape mismatch " + av.shape_str() + " vs " +
                     bv.shape_str());
  Tensor out = av;
  out.grad.clear();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
  const std::uint32_t ai = a.id, bi = b.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, std::move(out), {ai, bi}, [ai, bi, self](Tape& t) {
    const auto& dy = GUP(t, self);
    if (wants(t, ai)) {
      auto& da = G(t, ai);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
    }
    if (wants(t, bi)) {
      auto& db = G(t, bi);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] -= dy[i];
    }
  });
  return Var{&t, id};
}

Var add_rowvec(Var a, Var bias) {
  check_same_tape(a, bias, "add_rowvec");
  Tape& t = *a.tape;
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(bias);
  require_2d(av, "add_rowvec");
  const std::size_t rows = av.shape[0], cols = av.shape[1];
  if (bv.numel() != cols)
    throw ShapeError("add_rowvec: bias " + bv.shape_str() +
                     " does not match row width " + std::to_string(cols));
  Tensor out = av;
  out.grad.clear();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) out.data[r * cols + j] += bv.data[j];
  const std::uint32_t ai = a.id, bi = bias.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, std::move(out), {ai, bi},
                          [ai, bi, self, rows, cols](Tape& t) {
    const auto& dy = GUP(t, self);
    if (wants(t, ai)) {
      auto& da = G(t, ai);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
    }
    if (wants(t, bi)) {
      auto& db = G(t, bi);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cols; ++j) db[j] += dy[r * cols + j];
    }
  });
  return Var{&t, id};
}

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  Tensor out = t.val(a);
  out.grad.clear();
  for (double& x : out.data) x *= c;
  const std::uint32_t ai = a.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, std::move(out), {ai}, [ai, self, c](Tape& t) {
    if (!wants(t, ai)) return;
    const auto& dy = GUP(t, self);
    auto& da = G(t, ai);
    for (std::size_t i = 0; i < dy.size(); ++i) da[i] += c * dy[i];
  });
  return Var{&t, id};
}

Var scale_rows(Var a, std::vector<double> weights) {
  Tape& t = *a.tape;
  const Tensor& av = t.val(a);
  require_2d(av, "scale_rows");
  const std::size_t rows = av.shape[0], cols = av.shape[1];
  if (weights.size() != rows)
    throw ShapeError("scale_rows: weight count " +
                     std::to_string(weights.size()) + " vs rows " +
                     std::to_string(rows));
  Tensor out = av;
  out.grad.clear();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) out.data[r * cols + j] *= weights[r];
  const std::uint32_t ai = a.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, std::move(out), {ai},
                          [ai, self, rows, cols, w = std::move(weights)](
                              Tape& t) {
    if (!wants(t, ai)) return;
    const auto& dy = GUP(t, self);
    auto& da = G(t, ai);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < cols; ++j)
        da[r * cols + j] += w[r] * dy[r * cols + j];
  });
  return Var{&t, id};
}

Var hadamard(Var a, Var b) {
  check_same_tape(a, b, "hadamard");
  Tape& t = *a.tape;
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  if (!av.same_shape(bv))
    throw ShapeError("hadamard: shape mismatch " + av.shape_str() + " vs " +
                     bv.shape_str());
  Tensor out = av;
  out.grad.clear();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
  const std::uint32_t ai = a.id, bi = b.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, std::move(out), {ai, bi}, [ai, bi, self](Tape& t) {
    const auto& dy = GUP(t, self);
    if (wants(t, ai)) {
      auto& da = G(t, ai);
      const auto& bd = V(t, bi).data;
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += bd[i] * dy[i];
    }
    if (wants(t, bi)) {
      auto& db = G(t, bi);
      const auto& ad = V(t, ai).data;
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += ad[i] * dy[i];
    }
  });
  return Var{&t, id};
}

Var gelu(Var a) {
  Tape& t = *a.tape;
  Tensor out = t.val(a);
  out.grad.clear();
  for (double& x : out.data) x = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  const std::uint32_t ai = a.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, std::move(out), {ai}, [ai, self](Tape& t) {
    if (!wants(t, ai)) return;
    const auto& dy = GUP(t, self);
    const auto& x = V(t, ai).data;
    auto& da = G(t, ai);
    for (std::size_t i = 0; i < dy.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
      da[i] += (cdf + x[i] * pdf) * dy[i];
    }
  });
  return Var{&t, id};
}

Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Tensor out = t.val(a);
  out.grad.clear();
  for (double& x : out.data) {
    x = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                 : std::exp(x) / (1.0 + std::exp(x));
  }
  const std::uint32_t ai = a.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, std::move(out), {ai}, [ai, self](Tape& t) {
    if (!wants(t, ai)) return;
    const auto& dy = GUP(t, self);
    const auto& y = V(t, self).data;
    auto& da = G(t, ai);
    for (std::size_t i = 0; i < dy.size(); ++i)
      da[i] += y[i] * (1.0 - y[i]) * dy[i];
  });
  return Var{&t, id};
}

Var layer_norm(Var a, Var gamma, Var beta, double eps) {
  check_same_tape(a, gamma, "layer_norm");
  check_same_tape(a, beta, "layer_norm");
  Tape& t = *a.tape;
  const Tensor& av = t.val(a);
  require_2d(av, "layer_norm");
  const std::size_t rows = av.shape[0], cols = av.shape[1];
  if (t.val(gamma).numel() != cols || t.val(beta).numel() != cols)
    throw ShapeError("layer_norm: gamma/beta width mismatch");
  Tensor out = Tensor::zeros({rows, cols});
  std::vector<double> xhat(rows * cols);
  std::vector<double> ivar(rows);
  const auto& gv = t.val(gamma).data;
  const auto& bv = t.val(beta).data;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data.data() + r * cols;
    double mean = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += x[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double d = x[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double iv = 1.0 / std::sqrt(var + eps);
    ivar[r] = iv;
    for (std::size_t j = 0; j < cols; ++j) {
      const double xh = (x[j] - mean) * iv;
      xhat[r * cols + j] = xh;
      out.data[r * cols + j] = xh * gv[j] + bv[j];
    }
  }
  const std::uint32_t ai = a.id, gi = gamma.id, bi = beta.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(
      t, std::move(out), {ai, gi, bi},
      [ai, gi, bi, self, rows, cols, xhat = std::move(xhat),
       ivar = std::move(ivar)](Tape& t) {
    const auto& dy = GUP(t, self);
    const auto& gv = V(t, gi).data;
    const bool need_a = wants(t, ai);
    const bool need_g = wants(t, gi);
    const bool need_b = wants(t, bi);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* dyr = dy.data() + r * cols;
      const double* xhr = xhat.data() + r * cols;
      if (need_g) {
        auto& dg = G(t, gi);
        for (std::size_t j = 0; j < cols; ++j) dg[j] += dyr[j] * xhr[j];
      }
      if (need_b) {
        auto& db = G(t, bi);
        for (std::size_t j = 0; j < cols; ++j) db[j] += dyr[j];
      }
      if (need_a) {
        auto& da = G(t, ai);
        double sum1 = 0.0, sum2 = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          const double dxh = dyr[j] * gv[j];
          sum1 += dxh;
          sum2 += dxh * xhr[j];
        }
        const double invc = 1.0 / static_cast<double>(cols);
        for (std::size_t j = 0; j < cols; ++j) {
          const double dxh = dyr[j] * gv[j];
          da[r * cols + j] +=
              ivar[r] * (dxh - sum1 * invc - xhr[j] * sum2 * invc);
        }
      }
    }
  });
  return Var{&t, id};
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.val(a);
  require_2d(av, "softmax_rows");
  check_finite(av, "softmax_rows");
  const std::size_t rows = av.shape[0], cols = av.shape[1];
  Tensor out = Tensor::zeros({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data.data() + r * cols;
    double* y = out.data.data() + r * cols;
    double mx = x[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    for (std::size_t j = 0; j < cols; ++j) y[j] /= sum;
  }
  const std::uint32_t ai = a.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, std::move(out), {ai},
                          [ai, self, rows, cols](Tape& t) {
    if (!wants(t, ai)) return;
    const auto& dy = GUP(t, self);
    const auto& y = V(t, self).data;
    auto& da = G(t, ai);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* dyr = dy.data() + r * cols;
      const double* yr = y.data() + r * cols;
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += dyr[j] * yr[j];
      for (std::size_t j = 0; j < cols; ++j)
        da[r * cols + j] += yr[j] * (dyr[j] - dot);
    }
  });
  return Var{&t, id};
}

Var dropout(Var a, double p) {
  Tape& t = *a.tape;
  if (p < 0.0 || p >= 1.0)
    throw ContractError("dropout: rate must be in [0,1)");
  if (!t.training() || p == 0.0) return a;
  const Tensor& av = t.val(a);
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(av.data.size());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (double& m : mask) m = unif(t.rng()) < p ? 0.0 : keep_scale;
  Tensor out = av;
  out.grad.clear();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask[i];
  const std::uint32_t ai = a.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, std::move(out), {ai},
                          [ai, self, mask = std::move(mask)](Tape& t) {
    if (!wants(t, ai)) return;
    const auto& dy = GUP(t, self);
    auto& da = G(t, ai);
    for (std::size_t i = 0; i < dy.size(); ++i) da[i] += mask[i] * dy[i];
  });
  return Var{&t, id};
}

Var gather_rows(Var table, std::vector<std::uint32_t> idx) {
  Tape& t = *table.tape;
  const Tensor& tv = t.val(table);
  require_2d(tv, "gather_rows");
  const std::size_t cols = tv.shape[1];
  for (std::uint32_t r : idx)
    if (r >= tv.shape[0]) throw ShapeError("gather_rows: index out of range");
  Tensor out = Tensor::zeros({idx.size(), cols});
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(tv.data.data() + idx[i] * cols, cols,
                out.data.data() + i * cols);
  const std::uint32_t ti = table.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, std::move(out), {ti},
                          [ti, self, cols, idx = std::move(idx)](Tape& t) {
    if (!wants(t, ti)) return;
    const auto& dy = GUP(t, self);
    auto& dt = G(t, ti);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      double* drow = dt.data() + idx[i] * cols;
      const double* dyrow = dy.data() + i * cols;
      for (std::size_t j = 0; j < cols; ++j) drow[j] += dyrow[j];
    }
  });
  return Var{&t, id};
}

Var mean_pool_blocks(Var a, std::size_t block_rows) {
  Tape& t = *a.tape;
  const Tensor& av = t.val(a);
  require_2d(av, "mean_pool_blocks");
  if (block_rows == 0 || av.shape[0] % block_rows != 0)
    throw ShapeError("mean_pool_blocks: rows " + std::to_string(av.shape[0]) +
                     " not a multiple of block " + std::to_string(block_rows));
  const std::size_t blocks = av.shape[0] / block_rows, cols = av.shape[1];
  Tensor out = Tensor::zeros({blocks, cols});
  const double inv = 1.0 / static_cast<double>(block_rows);
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t r = 0; r < block_rows; ++r) {
      const double* x = av.data.data() + (b * block_rows + r) * cols;
      double* y = out.data.data() + b * cols;
      for (std::size_t j = 0; j < cols; ++j) y[j] += x[j] * inv;
    }
  const std::uint32_t ai = a.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, std::move(out), {ai},
                          [ai, self, blocks, block_rows, cols, inv](Tape& t) {
    if (!wants(t, ai)) return;
    const auto& dy = GUP(t, self);
    auto& da = G(t, ai);
    for (std::size_t b = 0; b < blocks; ++b)
      for (std::size_t r = 0; r < block_rows; ++r) {
        double* drow = da.data() + (b * block_rows + r) * cols;
        const double* dyrow = dy.data() + b * cols;
        for (std::size_t j = 0; j < cols; ++j) drow[j] += dyrow[j] * inv;
      }
  });
  return Var{&t, id};
}

Var unify_blocks(Var a, std::size_t block_in, std::size_t block_out) {
  Tape& t = *a.tape;
  const Tensor& av = t.val(a);
  require_2d(av, "unify_blocks");
  if (block_in == 0 || block_out == 0)
    throw ContractError("unify_blocks: block sizes must be positive");
  if (av.shape[0] % block_in != 0)
    throw ShapeError("unify_blocks: rows " + std::to_string(av.shape[0]) +
                     " not a multiple of block " + std::to_string(block_in));
  const std::size_t blocks = av.shape[0] / block_in, cols = av.shape[1];
  const std::size_t keep = std::min(block_in, block_out);
  Tensor out = Tensor::zeros({blocks * block_out, cols});
  for (std::size_t b = 0; b < blocks; ++b)
    std::copy_n(av.data.data() + b * block_in * cols, keep * cols,
                out.data.data() + b * block_out * cols);
  const std::uint32_t ai = a.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(
      t, std::move(out), {ai},
      [ai, self, blocks, block_in, block_out, keep, cols](Tape& t) {
    if (!wants(t, ai)) return;
    const auto& dy = GUP(t, self);
    auto& da = G(t, ai);
    for (std::size_t b = 0; b < blocks; ++b) {
      const double* dyb = dy.data() + b * block_out * cols;
      double* dab = da.data() + b * block_in * cols;
      for (std::size_t i = 0; i < keep * cols; ++i) dab[i] += dyb[i];
    }
  });
  return Var{&t, id};
}

Tensor attention_probabilities(const Tensor& q, const Tensor& k,
                               std::size_t block_rows, std::size_t heads,
                               const std::vector<std::uint32_t>* valid_rows) {
  require_2d(q, "attention_probabilities");
  require_2d(k, "attention_probabilities");
  if (!q.same_shape(k))
    throw ShapeError("attention: q/k shape mismatch " + q.shape_str() +
                     " vs " + k.shape_str());
  if (block_rows == 0 || q.shape[0] % block_rows != 0)
    throw ShapeError("attention: rows not a multiple of block size");
  if (heads == 0 || q.shape[1] % heads != 0)
    throw ConfigError("attention: width " + std::to_string(q.shape[1]) +
                      " not divisible by heads " + std::to_string(heads));
  const std::size_t blocks = q.shape[0] / block_rows;
  const std::size_t c = block_rows;
  const std::size_t dh = q.shape[1] / heads;
  const std::size_t width = q.shape[1];
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (valid_rows != nullptr && valid_rows->size() != blocks)
    throw ShapeError("attention: valid_rows count mismatch");
  Tensor probs = Tensor::zeros({blocks * heads * c, c});
  std::vector<double> srow(c);
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t attend =
        valid_rows == nullptr ? c
                              : std::min<std::size_t>((*valid_rows)[b], c);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < c; ++i) {
        const double* qi = q.data.data() + (b * c + i) * width + h * dh;
        double mx = -1e300;
        for (std::size_t j = 0; j < attend; ++j) {
          const double* kj = k.data.data() + (b * c + j) * width + h * dh;
          double s = 0.0;
          for (std::size_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
          s *= scale;
          if (!std::isfinite(s))
            throw NumericError("attention: non-finite score");
          srow[j] = s;
          mx = std::max(mx, s);
        }
        double sum = 0.0;
        double* prow = probs.data.data() + ((b * heads + h) * c + i) * c;
        for (std::size_t j = 0; j < attend; ++j) {
          prow[j] = std::exp(srow[j] - mx);
          sum += prow[j];
        }
        for (std::size_t j = 0; j < attend; ++j) prow[j] /= sum;
      }
    }
  }
  return probs;
}

Var block_attention(Var q, Var k, Var v, const AttentionSpec& spec) {
  check_same_tape(q, k, "block_attention");
  check_same_tape(q, v, "block_attention");
  Tape& t = *q.tape;
  const Tensor& qv = t.val(q);
  const Tensor& kv = t.val(k);
  const Tensor& vv = t.val(v);
  if (!qv.same_shape(vv))
    throw ShapeError("attention: q/v shape mismatch " + qv.shape_str() +
                     " vs " + vv.shape_str());
  Tensor probs = attention_probabilities(qv, kv, spec.block_rows, spec.heads,
                                         spec.valid_rows);
  const std::size_t c = spec.block_rows;
  const std::size_t blocks = qv.shape[0] / c;
  const std::size_t heads = spec.heads;
  const std::size_t width = qv.shape[1];
  const std::size_t dh = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<double> mask;
  if (t.training() && spec.dropout_p > 0.0) {
    const double keep_scale = 1.0 / (1.0 - spec.dropout_p);
    mask.resize(probs.data.size());
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (double& m : mask)
      m = unif(t.rng()) < spec.dropout_p ? 0.0 : keep_scale;
  }

  // out[b*c+i, h*dh+d] = sum_j P~[b,h,i,j] * v[b*c+j, h*dh+d]
  Tensor out = Tensor::zeros({blocks * c, width});
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < c; ++i) {
        const std::size_t prow_off = ((b * heads + h) * c + i) * c;
        double* orow = out.data.data() + (b * c + i) * width + h * dh;
        for (std::size_t j = 0; j < c; ++j) {
          double p = probs.data[prow_off + j];
          if (!mask.empty()) p *= mask[prow_off + j];
          if (p == 0.0) continue;
          const double* vrow = vv.data.data() + (b * c + j) * width + h * dh;
          for (std::size_t d = 0; d < dh; ++d) orow[d] += p * vrow[d];
        }
      }

  const std::uint32_t qi = q.id, ki = k.id, vi = v.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(
      t, std::move(out), {qi, ki, vi},
      [qi, ki, vi, self, blocks, heads, c, dh, width, scale,
       probs = std::move(probs.data), mask = std::move(mask)](Tape& t) {
    const auto& dy = GUP(t, self);
    const auto& qd = V(t, qi).data;
    const auto& kd = V(t, ki).data;
    const auto& vd = V(t, vi).data;
    const bool need_q = wants(t, qi);
    const bool need_k = wants(t, ki);
    const bool need_v = wants(t, vi);
    auto& dq = need_q ? G(t, qi) : G(t, self);
    auto& dk = need_k ? G(t, ki) : G(t, self);
    auto& dv = need_v ? G(t, vi) : G(t, self);
    std::vector<double> dp(c), ds(c);
    for (std::size_t b = 0; b < blocks; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t i = 0; i < c; ++i) {
          const std::size_t prow_off = ((b * heads + h) * c + i) * c;
          const double* dyrow = dy.data() + (b * c + i) * width + h * dh;
          // dP~[j] = dy . v_j ; dV_j += P~ * dy
          for (std::size_t j = 0; j < c; ++j) {
            double ptilde = probs[prow_off + j];
            if (!mask.empty()) ptilde *= mask[prow_off + j];
            const double* vrow = vd.data() + (b * c + j) * width + h * dh;
            double acc = 0.0;
            for (std::size_t d = 0; d < dh; ++d) acc += dyrow[d] * vrow[d];
            dp[j] = acc;
            if (need_v && ptilde != 0.0) {
              double* dvrow = dv.data() + (b * c + j) * width + h * dh;
              for (std::size_t d = 0; d < dh; ++d)
                dvrow[d] += ptilde * dyrow[d];
            }
          }
          if (!mask.empty())
            for (std::size_t j = 0; j < c; ++j) dp[j] *= mask[prow_off + j];
          // softmax backward within the row
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j)
            dot += dp[j] * probs[prow_off + j];
          for (std::size_t j = 0; j < c; ++j)
            ds[j] = probs[prow_off + j] * (dp[j] - dot);
          // dQ_i += sum_j ds_j * K_j * scale ; dK_j += ds_j * Q_i * scale
          const double* qrow = qd.data() + (b * c + i) * width + h * dh;
          double* dqrow = need_q ? dq.data() + (b * c + i) * width + h * dh
                                 : nullptr;
          for (std::size_t j = 0; j < c; ++j) {
            if (ds[j] == 0.0) continue;
            const double sj = ds[j] * scale;
            const double* krow = kd.data() + (b * c + j) * width + h * dh;
            if (need_q)
              for (std::size_t d = 0; d < dh; ++d) dqrow[d] += sj * krow[d];
            if (need_k) {
              double* dkrow = dk.data() + (b * c + j) * width + h * dh;
              for (std::size_t d = 0; d < dh; ++d) dkrow[d] += sj * qrow[d];
            }
          }
        }
  });
  return Var{&t, id};
}

Var rowwise_dot(Var a, Var b) {
  check_same_tape(a, b, "rowwise_dot");
  Tape& t = *a.tape;
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  require_2d(av, "rowwise_dot");
  if (!av.same_shape(bv))
    throw ShapeError("rowwise_dot: shape mismatch " + av.shape_str() +
                     " vs " + bv.shape_str());
  const std::size_t rows = av.shape[0], cols = av.shape[1];
  Tensor out = Tensor::zeros({rows, 1});
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j)
      acc += av.data[r * cols + j] * bv.data[r * cols + j];
    out.data[r] = acc;
  }
  const std::uint32_t ai = a.id, bi = b.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, std::move(out), {ai, bi},
                          [ai, bi, self, rows, cols](Tape& t) {
    const auto& dy = GUP(t, self);
    if (wants(t, ai)) {
      auto& da = G(t, ai);
      const auto& bd = V(t, bi).data;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cols; ++j)
          da[r * cols + j] += dy[r] * bd[r * cols + j];
    }
    if (wants(t, bi)) {
      auto& db = G(t, bi);
      const auto& ad = V(t, ai).data;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cols; ++j)
          db[r * cols + j] += dy[r] * ad[r * cols + j];
    }
  });
  return Var{&t, id};
}

Var squash_rows(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.val(a);
  require_2d(av, "squash_rows");
  const std::size_t rows = av.shape[0], cols = av.shape[1];
  Tensor out = Tensor::zeros({rows, cols});
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double n2 = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double x = av.data[r * cols + j];
      n2 += x * x;
    }
    const double n = std::sqrt(n2);
    norms[r] = n;
    if (n < kNormFloor) continue;
    const double f = n / (1.0 + n2);
    for (std::size_t j = 0; j < cols; ++j)
      out.data[r * cols + j] = av.data[r * cols + j] * f;
  }
  const std::uint32_t ai = a.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, std::move(out), {ai},
                          [ai, self, rows, cols, norms = std::move(norms)](
                              Tape& t) {
    if (!wants(t, ai)) return;
    const auto& dy = GUP(t, self);
    const auto& x = V(t, ai).data;
    auto& da = G(t, ai);
    for (std::size_t r = 0; r < rows; ++r) {
      const double n = norms[r];
      if (n < kNormFloor) continue;
      const double n2 = n * n;
      const double f = n / (1.0 + n2);
      const double dfdn = (1.0 - n2) / ((1.0 + n2) * (1.0 + n2));
      double sdot = 0.0;
      for (std::size_t j = 0; j < cols; ++j)
        sdot += x[r * cols + j] * dy[r * cols + j];
      const double coef = dfdn * sdot / n;
      for (std::size_t j = 0; j < cols; ++j)
        da[r * cols + j] += f * dy[r * cols + j] + coef * x[r * cols + j];
    }
  });
  return Var{&t, id};
}

Var sum_all(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.val(a);
  double acc = 0.0;
  for (double x : av.data) acc += x;
  const std::uint32_t ai = a.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, Tensor::scalar(acc), {ai}, [ai, self](Tape& t) {
    if (!wants(t, ai)) return;
    const double dy = GUP(t, self)[0];
    auto& da = G(t, ai);
    for (double& g : da) g += dy;
  });
  return Var{&t, id};
}

// ---- losses -----------------------------------------------------------------

Var cross_entropy(Var pred, const Tensor& target_onehot) {
  Tape& t = *pred.tape;
  const Tensor& pv = t.val(pred);
  require_2d(pv, "cross_entropy");
  if (!pv.same_shape(target_onehot))
    throw ShapeError("cross_entropy: prediction " + pv.shape_str() +
                     " vs target " + target_onehot.shape_str());
  const std::size_t rows = pv.shape[0], cols = pv.shape[1];
  const double w = 1.0 / static_cast<double>(rows);
  double loss = 0.0;
  for (std::size_t i = 0; i < pv.data.size(); ++i) {
    if (target_onehot.data[i] == 0.0) continue;
    loss -= target_onehot.data[i] *
            std::log(std::max(pv.data[i], kProbFloor));
  }
  loss *= w;
  const std::uint32_t pi = pred.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, Tensor::scalar(loss), {pi},
                          [pi, self, w, rows, cols,
                           target = target_onehot.data](Tape& t) {
    if (!wants(t, pi)) return;
    const double dy = GUP(t, self)[0];
    const auto& p = V(t, pi).data;
    auto& dp = G(t, pi);
    for (std::size_t i = 0; i < rows * cols; ++i) {
      if (target[i] == 0.0 || p[i] < kProbFloor) continue;
      dp[i] -= dy * w * target[i] / p[i];
    }
  });
  return Var{&t, id};
}

Var cross_entropy_indexed(Var pred, const std::vector<int>& classes,
                          double row_weight) {
  Tape& t = *pred.tape;
  const Tensor& pv = t.val(pred);
  require_2d(pv, "cross_entropy");
  const std::size_t rows = pv.shape[0], cols = pv.shape[1];
  if (classes.size() != rows)
    throw ShapeError("cross_entropy: class count " +
                     std::to_string(classes.size()) + " vs rows " +
                     std::to_string(rows));
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int c = classes[r];
    if (c < 0 || static_cast<std::size_t>(c) >= cols)
      throw ContractError("cross_entropy: class index out of range");
    loss -= std::log(std::max(pv.data[r * cols + c], kProbFloor));
  }
  loss *= row_weight;
  const std::uint32_t pi = pred.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, Tensor::scalar(loss), {pi},
                          [pi, self, row_weight, cols, cls = classes](Tape& t) {
    if (!wants(t, pi)) return;
    const double dy = GUP(t, self)[0];
    const auto& p = V(t, pi).data;
    auto& dp = G(t, pi);
    for (std::size_t r = 0; r < cls.size(); ++r) {
      const std::size_t i = r * cols + static_cast<std::size_t>(cls[r]);
      if (p[i] < kProbFloor) continue;
      dp[i] -= dy * row_weight / p[i];
    }
  });
  return Var{&t, id};
}

Var mse_loss(Var pred, const Tensor& target) {
  Tape& t = *pred.tape;
  const std::size_t n = t.val(pred).numel();
  return mse_loss_weighted(pred, target, 1.0 / static_cast<double>(n));
}

Var mse_loss_weighted(Var pred, const Tensor& target, double weight) {
  Tape& t = *pred.tape;
  const Tensor& pv = t.val(pred);
  if (!pv.same_shape(target))
    throw ShapeError("mse: prediction " + pv.shape_str() + " vs target " +
                     target.shape_str());
  double loss = 0.0;
  for (std::size_t i = 0; i < pv.data.size(); ++i) {
    const double d = pv.data[i] - target.data[i];
    loss += d * d;
  }
  loss *= weight;
  const std::uint32_t pi = pred.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, Tensor::scalar(loss), {pi},
                          [pi, self, weight, tgt = target.data](Tape& t) {
    if (!wants(t, pi)) return;
    const double dy = GUP(t, self)[0];
    const auto& p = V(t, pi).data;
    auto& dp = G(t, pi);
    for (std::size_t i = 0; i < p.size(); ++i)
      dp[i] += dy * weight * 2.0 * (p[i] - tgt[i]);
  });
  return Var{&t, id};
}

Var bce_with_logits(Var logits, const std::vector<double>& targets,
                    double weight) {
  Tape& t = *logits.tape;
  const Tensor& lv = t.val(logits);
  if (lv.numel() != targets.size())
    throw ShapeError("bce: logit count " + std::to_string(lv.numel()) +
                     " vs target count " + std::to_string(targets.size()));
  double loss = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double x = lv.data[i];
    loss += std::max(x, 0.0) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
  }
  loss *= weight;
  const std::uint32_t li = logits.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, Tensor::scalar(loss), {li},
                          [li, self, weight, tgt = targets](Tape& t) {
    if (!wants(t, li)) return;
    const double dy = GUP(t, self)[0];
    const auto& x = V(t, li).data;
    auto& dx = G(t, li);
    for (std::size_t i = 0; i < tgt.size(); ++i) {
      const double s = x[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-x[i]))
                                   : std::exp(x[i]) / (1.0 + std::exp(x[i]));
      dx[i] += dy * weight * (s - tgt[i]);
    }
  });
  return Var{&t, id};
}

Var l2norm_rows_sum(Var a, double weight) {
  Tape& t = *a.tape;
  const Tensor& av = t.val(a);
  require_2d(av, "l2norm_rows_sum");
  const std::size_t rows = av.shape[0], cols = av.shape[1];
  double loss = 0.0;
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double n2 = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double x = av.data[r * cols + j];
      n2 += x * x;
    }
    norms[r] = std::sqrt(n2);
    loss += norms[r];
  }
  loss *= weight;
  const std::uint32_t ai = a.id;
  const std::uint32_t self = TapeOps::next_id(t);
  auto id = TapeOps::push(t, Tensor::scalar(loss), {ai},
                          [ai, self, weight, rows, cols,
                           norms = std::move(norms)](Tape& t) {
    if (!wants(t, ai)) return;
    const double dy = GUP(t, self)[0];
    const auto& x = V(t, ai).data;
    auto& da = G(t, ai);
    for (std::size_t r = 0; r < rows; ++r) {
      const double n = std::max(norms[r], kNormFloor);
      for (std::size_t j = 0; j < cols; ++j)
        da[r * cols + j] += dy * weight * x[r * cols + j] / n;
    }
  });
  return Var{&t, id};
}

}  // namespace g5
