#include "g5/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "g5/errors.hpp"
#include "g5/rng.hpp"

namespace g5 {

namespace {

constexpr const char* kUnlabeledToken = "unlabeled";

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

double parse_value(const std::string& tok, const std::string& path,
                   std::size_t line_no) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    throw ParseError(path + ":" + std::to_string(line_no) +
                     ": feature value '" + tok + "' is not numeric");
  }
  if (pos != tok.size())
    throw ParseError(path + ":" + std::to_string(line_no) +
                     ": feature value '" + tok + "' is not numeric");
  return v;
}

}  // namespace

GraphDataset load_citation_graph(const std::string& content_path,
                                 const std::string& cites_path,
                                 const std::string& graph_id,
                                 LoadReport* report) {
  std::ifstream content(content_path);
  if (!content) throw IoError("cannot open content file: " + content_path);

  GraphDataset d;
  d.id = graph_id;
  std::unordered_map<std::string, std::uint32_t> node_index;
  std::vector<std::string> label_tokens;
  std::vector<std::vector<std::pair<std::uint32_t, double>>> feat_rows;

  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(content, line)) {
    ++line_no;
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() < 3)
      throw ParseError(content_path + ":" + std::to_string(line_no) +
                       ": expected <id> <values...> <label>");
    if (width == 0) {
      width = toks.size();
    } else if (toks.size() != width) {
      throw ParseError(content_path + ":" + std::to_string(line_no) +
                       ": expected " + std::to_string(width) +
                       " columns, got " + std::to_string(toks.size()));
    }
    const std::string& name = toks.front();
    if (node_index.count(name))
      throw ParseError(content_path + ":" + std::to_string(line_no) +
                       ": duplicate node id '" + name + "'");
    const auto idx = static_cast<std::uint32_t>(d.node_names.size());
    node_index.emplace(name, idx);
    d.node_names.push_back(name);
    std::vector<std::pair<std::uint32_t, double>> row;
    for (std::size_t j = 1; j + 1 < toks.size(); ++j) {
      const double v = parse_value(toks[j], content_path, line_no);
      if (v != 0.0) row.emplace_back(static_cast<std::uint32_t>(j - 1), v);
    }
    feat_rows.push_back(std::move(row));
    label_tokens.push_back(toks.back());
  }
  if (d.node_names.empty())
    throw ParseError(content_path + ": empty dataset");

  d.feature_dim = width - 2;

  // Class ids follow the sorted order of distinct label names.
  std::map<std::string, int> class_ids;
  for (const auto& tok : label_tokens)
    if (tok != kUnlabeledToken) class_ids.emplace(tok, 0);
  int next = 0;
  for (auto& [name, cid] : class_ids) {
    cid = next++;
    d.label_names.push_back(name);
  }
  d.num_classes = class_ids.size();
  if (d.num_classes == 0)
    throw ParseError(content_path + ": no labeled nodes");

  std::vector<int> labels(d.node_names.size(), -1);
  for (std::size_t i = 0; i < label_tokens.size(); ++i)
    if (label_tokens[i] != kUnlabeledToken)
      labels[i] = class_ids.at(label_tokens[i]);
  d.set_labels(std::move(labels));

  CsrBuilder fb(d.feature_dim);
  for (auto& row : feat_rows) {
    for (auto [col, val] : row) fb.add_entry(col, val);
    fb.finish_row();
  }
  d.features = fb.build();
  d.adjacency.assign(d.node_names.size(), {});

  std::ifstream cites(cites_path);
  if (!cites) throw IoError("cannot open cites file: " + cites_path);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> raw_edges;
  std::size_t dropped = 0;
  line_no = 0;
  while (std::getline(cites, line)) {
    ++line_no;
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() != 2)
      throw ParseError(cites_path + ":" + std::to_string(line_no) +
                       ": expected <citing_id> <cited_id>");
    auto a = node_index.find(toks[0]);
    auto b = node_index.find(toks[1]);
    if (a == node_index.end() || b == node_index.end()) {
      ++dropped;
      continue;
    }
    raw_edges.emplace_back(a->second, b->second);
  }
  finalize_edges(d, std::move(raw_edges));
  if (report != nullptr) report->dropped_edges = dropped;
  return d;
}

void make_split(GraphDataset& d, std::uint64_t seed,
                const SplitPolicy& policy) {
  d.splits.clear();
  if (policy.kind == SplitPolicy::Kind::fixed_benchmark) {
    const std::size_t n_train = 20 * d.num_classes;
    const std::size_t n_val = 500;
    const std::size_t n_test = 1000;
    if (n_train + n_val + n_test > d.num_nodes())
      throw ContractError("dataset '" + d.id + "': " +
                          std::to_string(d.num_nodes()) +
                          " nodes cannot host the fixed benchmark split");
    std::vector<std::uint32_t> train(n_train), val(n_val), test(n_test);
    std::iota(train.begin(), train.end(), 0u);
    std::iota(val.begin(), val.end(), static_cast<std::uint32_t>(n_train));
    std::iota(test.begin(), test.end(),
              static_cast<std::uint32_t>(d.num_nodes() - n_test));
    for (std::uint32_t v : train)
      if (!d.has_label(v))
        throw ContractError("dataset '" + d.id +
                            "': unlabeled node in the fixed train block");
    d.splits["train"] = std::move(train);
    d.splits["validation"] = std::move(val);
    d.splits["test"] = std::move(test);
    return;
  }

  if (policy.train_fraction <= 0.0 || policy.val_fraction < 0.0 ||
      policy.train_fraction + policy.val_fraction >= 1.0)
    throw ContractError("make_split: fractions must satisfy 0 < train, "
                        "0 <= val, train + val < 1");
  std::vector<std::uint32_t> labeled;
  for (std::uint32_t v = 0; v < d.num_nodes(); ++v)
    if (d.has_label(v)) labeled.push_back(v);
  if (labeled.empty())
    throw ContractError("dataset '" + d.id + "': no labeled nodes to split");
  auto rng = make_rng(derive_seed(seed, "split", fnv1a(d.id)));
  std::shuffle(labeled.begin(), labeled.end(), rng);
  const auto n = labeled.size();
  const auto n_train = static_cast<std::size_t>(
      std::floor(policy.train_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(
      std::floor(policy.val_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train + n_val >= n)
    throw ContractError("make_split: fractions leave an empty split");
  d.splits["train"] = {labeled.begin(), labeled.begin() + n_train};
  d.splits["validation"] = {labeled.begin() + n_train,
                            labeled.begin() + n_train + n_val};
  d.splits["test"] = {labeled.begin() + n_train + n_val, labeled.end()};
}

std::vector<std::uint32_t> sample_training_ratio(const GraphDataset& d,
                                                 double ratio,
                                                 std::uint64_t seed) {
  if (ratio <= 0.0 || ratio > 1.0)
    throw ContractError("sample_training_ratio: ratio must be in (0, 1]");
  const auto& train = d.split("train");
  if (train.empty())
    throw ContractError("sample_training_ratio: empty train split");
  std::vector<std::uint32_t> perm = train;
  auto rng = make_rng(derive_seed(seed, "label-ratio", fnv1a(d.id)));
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto keep = static_cast<std::size_t>(
      std::floor(ratio * static_cast<double>(perm.size())));
  perm.resize(keep);
  return perm;
}

}  // namespace g5
