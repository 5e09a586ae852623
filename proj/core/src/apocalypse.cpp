#include "g5/apocalypse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>

#include "g5/adam.hpp"
#include "g5/rng.hpp"

namespace g5 {

namespace {

Tensor xavier(std::size_t fan_in, std::size_t fan_out,
              std::mt19937_64& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> unif(-limit, limit);
  Tensor t = Tensor::zeros({fan_in, fan_out});
  for (double& x : t.data) x = unif(rng);
  return t;
}

void check_inputs(const Tensor& reps, const std::vector<Tensor>& bank_out,
                  std::size_t target_classes) {
  if (reps.rank() != 2 || reps.shape[0] == 0)
    throw ContractError("reasoning: representations must be a node matrix");
  if (target_classes == 0)
    throw ContractError("reasoning: target class count must be positive");
  if (bank_out.empty())
    throw ContractError("reasoning: need at least one reference classifier");
  for (const Tensor& y : bank_out) {
    if (y.rank() != 2 || y.shape[0] != reps.shape[0] || y.shape[1] == 0)
      throw ContractError(
          "reasoning: reference outputs must cover every node");
  }
}

struct FitState {
  std::deque<Parameter> params;  // stable references across add()
  std::vector<AdamState> opt;

  Parameter& add(std::string name, Tensor value, double lr) {
    params.push_back(Parameter::make(std::move(name), std::move(value)));
    opt.push_back(AdamState::make(params.back().value, lr, 0.0));
    return params.back();
  }

  void step() {
    for (std::size_t i = 0; i < params.size(); ++i)
      adam_step(params[i], opt[i]);
  }
};

Tensor head_distributions(const Parameter& w, const Parameter& b,
                          const Tensor& reps) {
  Tape tape(false, 0, false);
  Var probs = softmax_rows(add_rowvec(
      matmul(tape.leaf(reps), tape.leaf(w.value)), tape.leaf(b.value)));
  return tape.val(probs);
}

void record_loss(ReasonedLabels& out, double loss, const char* strategy) {
  if (!std::isfinite(loss))
    throw NumericError(std::string(strategy) +
                       ": non-finite loss at epoch " +
                       std::to_string(out.losses.size()));
  out.losses.push_back(loss);
}

}  // namespace

CrossClassifierBank make_bank(ModelState& m,
                              const std::vector<std::string>& sources) {
  if (sources.empty())
    throw ContractError("classifier bank: no source graphs given");
  CrossClassifierBank bank;
  for (const std::string& id : sources)
    bank.entries.push_back({id, &m.head(id)});
  return bank;
}

std::vector<Tensor> bank_outputs(const CrossClassifierBank& bank,
                                 const Tensor& reps,
                                 const ModelConfig& cfg) {
  std::vector<Tensor> out;
  out.reserve(bank.entries.size());
  for (const auto& entry : bank.entries) {
    Tape tape(false, 0, false);
    Var probs = classify(tape, tape.leaf(reps), *entry.head, cfg);
    out.push_back(tape.val(probs));
  }
  return out;
}

void squash_in_place(double* s, std::size_t dim) {
  double sq = 0.0;
  for (std::size_t k = 0; k < dim; ++k) sq += s[k] * s[k];
  const double norm = std::sqrt(sq);
  const double f = norm < 1e-12 ? 0.0 : norm / (1.0 + sq);
  for (std::size_t k = 0; k < dim; ++k) s[k] *= f;
}

RoutingResult cdr_route(const std::vector<Tensor>& units,
                        std::size_t iterations) {
  if (units.empty()) throw ContractError("routing: no units given");
  if (iterations == 0)
    throw ContractError("routing: need at least one iteration");
  const std::size_t count = units.size();
  const std::size_t nodes = units[0].shape[0];
  const std::size_t dim = units[0].shape[1];
  for (const Tensor& u : units)
    if (u.rank() != 2 || u.shape[0] != nodes || u.shape[1] != dim)
      throw ContractError("routing: unit shapes disagree");

  RoutingResult result;
  result.couplings = Tensor::zeros({nodes, count});
  result.combined = Tensor::zeros({nodes, dim});
  std::vector<double> b(count), c(count), s(dim);
  for (std::size_t i = 0; i < nodes; ++i) {
    std::fill(b.begin(), b.end(), 0.0);
    for (std::size_t it = 0; it < iterations; ++it) {
      const double mx = *std::max_element(b.begin(), b.end());
      double z = 0.0;
      for (std::size_t l = 0; l < count; ++l) {
        c[l] = std::exp(b[l] - mx);
        z += c[l];
      }
      for (std::size_t l = 0; l < count; ++l) c[l] /= z;
      std::fill(s.begin(), s.end(), 0.0);
      for (std::size_t l = 0; l < count; ++l) {
        const double* u = units[l].data.data() + i * dim;
        for (std::size_t k = 0; k < dim; ++k) s[k] += c[l] * u[k];
      }
      squash_in_place(s.data(), dim);
      if (it + 1 < iterations) {
        for (std::size_t l = 0; l < count; ++l) {
          const double* u = units[l].data.data() + i * dim;
          double agree = 0.0;
          for (std::size_t k = 0; k < dim; ++k) agree += s[k] * u[k];
          b[l] += agree;
        }
      }
    }
    std::copy(c.begin(), c.end(), result.couplings.data.data() + i * count);
    std::copy(s.begin(), s.end(), result.combined.data.data() + i * dim);
  }
  return result;
}

ReasonedLabels cccm_fit(const Tensor& reps,
                        const std::vector<Tensor>& bank_out,
                        std::size_t target_classes,
                        const ReasonOptions& opts) {
  check_inputs(reps, bank_out, target_classes);
  const std::size_t dim = reps.shape[1];
  auto rng = make_rng(derive_seed(opts.seed, "cccm-init"));

  FitState st;
  Parameter& fc_w = st.add("reason.cls_w", xavier(dim, target_classes, rng),
                           opts.learning_rate);
  Parameter& fc_b = st.add("reason.cls_b", Tensor::zeros({target_classes}),
                           opts.learning_rate);
  std::vector<Parameter*> map_w, map_b;
  for (std::size_t l = 0; l < bank_out.size(); ++l) {
    const std::size_t dl = bank_out[l].shape[1];
    map_w.push_back(&st.add("reason.map" + std::to_string(l) + "_w",
                            xavier(target_classes, dl, rng),
                            opts.learning_rate));
    map_b.push_back(&st.add("reason.map" + std::to_string(l) + "_b",
                            Tensor::zeros({dl}), opts.learning_rate));
  }

  ReasonedLabels out;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    Tape tape(false, 0);
    Var ym = softmax_rows(add_rowvec(
        matmul(tape.leaf(reps), tape.param(fc_w)), tape.param(fc_b)));
    Var loss{};
    for (std::size_t l = 0; l < bank_out.size(); ++l) {
      Var mapped = softmax_rows(add_rowvec(matmul(ym, tape.param(*map_w[l])),
                                           tape.param(*map_b[l])));
      Var term = l2norm_rows_sum(sub(tape.leaf(bank_out[l]), mapped));
      loss = l == 0 ? term : add(loss, term);
    }
    record_loss(out, tape.val(loss).data[0], "cccm");
    tape.backward(loss);
    st.step();
  }

  out.distributions = head_distributions(fc_w, fc_b, reps);
  assign_labels(out);
  return out;
}

ReasonedLabels cdr_fit(const Tensor& reps,
                       const std::vector<Tensor>& bank_out,
                       std::size_t target_classes,
                       const ReasonOptions& opts) {
  check_inputs(reps, bank_out, target_classes);
  if (opts.routing_iterations == 0)
    throw ContractError("cdr: need at least one routing iteration");
  const std::size_t dim = reps.shape[1];
  const std::size_t nodes = reps.shape[0];
  auto rng = make_rng(derive_seed(opts.seed, "cdr-init"));

  FitState st;
  Parameter& fc_w = st.add("reason.cls_w", xavier(dim, target_classes, rng),
                           opts.learning_rate);
  Parameter& fc_b = st.add("reason.cls_b", Tensor::zeros({target_classes}),
                           opts.learning_rate);
  std::vector<Parameter*> route_w;
  for (std::size_t l = 0; l < bank_out.size(); ++l)
    route_w.push_back(&st.add(
        "reason.route" + std::to_string(l) + "_w",
        xavier(bank_out[l].shape[1], target_classes, rng),
        opts.learning_rate));

  ReasonedLabels out;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    Tape tape(false, 0);
    Var ym = softmax_rows(add_rowvec(
        matmul(tape.leaf(reps), tape.param(fc_w)), tape.param(fc_b)));
    std::vector<Var> units;
    std::vector<Tensor> unit_values;
    for (std::size_t l = 0; l < bank_out.size(); ++l) {
      units.push_back(
          matmul(tape.leaf(bank_out[l]), tape.param(*route_w[l])));
      unit_values.push_back(tape.val(units.back()));
    }
    RoutingResult route = cdr_route(unit_values, opts.routing_iterations);
    Var s{};
    for (std::size_t l = 0; l < units.size(); ++l) {
      std::vector<double> weights(nodes);
      for (std::size_t i = 0; i < nodes; ++i)
        weights[i] = route.couplings.at(i, l);
      Var term = scale_rows(units[l], std::move(weights));
      s = l == 0 ? term : add(s, term);
    }
    Var v = squash_rows(s);
    Var loss = l2norm_rows_sum(sub(ym, v));
    record_loss(out, tape.val(loss).data[0], "cdr");
    tape.backward(loss);
    st.step();
  }

  out.distributions = head_distributions(fc_w, fc_b, reps);
  assign_labels(out);
  return out;
}

void assign_labels(ReasonedLabels& out) {
  if (out.distributions.rank() != 2)
    throw ContractError("assign_labels: distributions must be a matrix");
  const std::size_t nodes = out.distributions.shape[0];
  const std::size_t classes = out.distributions.shape[1];
  out.hard.assign(nodes, 0);
  out.entropy.assign(nodes, 0.0);
  for (std::size_t i = 0; i < nodes; ++i) {
    std::size_t best = 0;
    double h = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = out.distributions.at(i, c);
      if (p > out.distributions.at(i, best)) best = c;
      if (p > 0.0) h -= p * std::log(p);
    }
    out.hard[i] = static_cast<int>(best);
    out.entropy[i] = h;
  }
}

void export_reasoned_labels(const std::string& path,
                            const ReasonedLabels& labels,
                            const std::vector<std::string>& node_names) {
  if (labels.hard.size() != labels.distributions.shape[0] ||
      labels.entropy.size() != labels.hard.size())
    throw ContractError("export: labels not assigned yet");
  if (!node_names.empty() && node_names.size() != labels.hard.size())
    throw ContractError("export: node name count does not match");
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << "node_id,predicted_class,max_prob,entropy\n";
  const std::size_t classes = labels.distributions.shape[1];
  char buf[64];
  for (std::size_t i = 0; i < labels.hard.size(); ++i) {
    if (node_names.empty()) {
      f << i;
    } else {
      if (node_names[i].find_first_of(",\n") != std::string::npos)
        throw ContractError("export: node name contains a delimiter");
      f << node_names[i];
    }
    f << ',' << labels.hard[i];
    const double p =
        labels.distributions.data[i * classes +
                                  static_cast<std::size_t>(labels.hard[i])];
    std::snprintf(buf, sizeof(buf), "%.17g", p);
    f << ',' << buf;
    std::snprintf(buf, sizeof(buf), "%.17g", labels.entropy[i]);
    f << ',' << buf << '\n';
  }
  if (!f) throw IoError("failed writing '" + path + "'");
}

}  // namespace g5
