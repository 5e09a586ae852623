#include "g5/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace g5 {

const char* mode_name(RunMode m) {
  switch (m) {
    case RunMode::isolated: return "isolated";
    case RunMode::mixed: return "mixed";
    case RunMode::transfer: return "transfer";
    case RunMode::apocalypse: return "apocalypse";
    case RunMode::reason: return "reason";
  }
  throw ContractError("mode_name: unknown mode");
}

RunMode mode_from_name(const std::string& name) {
  if (name == "isolated") return RunMode::isolated;
  if (name == "mixed") return RunMode::mixed;
  if (name == "transfer") return RunMode::transfer;
  if (name == "apocalypse") return RunMode::apocalypse;
  if (name == "reason") return RunMode::reason;
  throw ConfigError("unknown mode '" + name +
                    "' (expected isolated, mixed, transfer, apocalypse or "
                    "reason)");
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': '" + v + "' is not a number");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const std::uint64_t x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': '" + v +
                      "' is not a non-negative integer");
  }
}

std::size_t to_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(to_u64(key, v));
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("key '" + key + "': '" + v +
                    "' is not a boolean (true/false)");
}

std::vector<Task> to_tasks(const std::string& key, const std::string& v) {
  std::vector<Task> out;
  for (const std::string& name : split_list(v)) out.push_back(task_from_name(name));
  if (out.empty()) throw ConfigError("key '" + key + "': empty task list");
  return out;
}

}  // namespace

ConfigFile parse_config_text(const std::string& text,
                             const std::string& origin) {
  ConfigFile file;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": empty key");
    if (file.values.count(key))
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": duplicate key '" + key + "'");
    file.values[key] = value;
  }
  return file;
}

ConfigFile parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str(), path);
}

void apply_named_defaults(GraphConfig& g) {
  if (g.id == "cora") {
    g.context_k = 7;
    g.learning_rate = 0.01;
    g.epochs = 150;
  } else if (g.id == "citeseer") {
    g.context_k = 5;
    g.learning_rate = 0.001;
    g.epochs = 2000;
  } else if (g.id == "pubmed") {
    g.context_k = 30;
    g.learning_rate = 0.001;
    g.epochs = 500;
  }
}

std::vector<Task> default_pretrain_tasks(RunMode mode) {
  if (mode == RunMode::isolated) return {Task::classify};
  return {Task::reconstruct, Task::structure, Task::classify};
}

std::vector<Task> default_finetune_tasks(RunMode mode) {
  if (mode == RunMode::apocalypse)
    return {Task::reconstruct, Task::structure};
  return {Task::classify};
}

const GraphConfig* RunConfig::target() const {
  for (const auto& g : graphs)
    if (g.role == "target") return &g;
  return nullptr;
}

std::vector<const GraphConfig*> RunConfig::sources() const {
  std::vector<const GraphConfig*> out;
  for (const auto& g : graphs)
    if (g.role != "target") out.push_back(&g);
  return out;
}

const GraphConfig& RunConfig::graph(const std::string& id) const {
  for (const auto& g : graphs)
    if (g.id == id) return g;
  throw ContractError("config: graph '" + id + "' not declared");
}

RunConfig resolve_config(const ConfigFile& file,
                         const std::map<std::string, std::string>& overrides) {
  std::map<std::string, std::string> merged = file.values;
  for (const auto& [k, v] : overrides) merged[k] = v;

  RunConfig cfg;
  if (!merged.count("cache.dir")) {
    if (const char* env = std::getenv("G5_CACHE_DIR"); env && *env)
      cfg.cache_dir = env;
  }

  bool tasks_set = false, finetune_set = false;
  std::map<std::string, std::function<void(const std::string&,
                                           const std::string&)>>
      scalar = {
          {"mode", [&](auto& k, auto& v) { (void)k; cfg.mode = mode_from_name(v); }},
          {"strategy",
           [&](auto& k, auto& v) {
             if (v != "cccm" && v != "cdr")
               throw ConfigError("key '" + k + "': expected cccm or cdr");
             cfg.strategy = v;
           }},
          {"seed", [&](auto& k, auto& v) { cfg.seed = to_u64(k, v); }},
          {"ratio", [&](auto& k, auto& v) { cfg.ratio = to_double(k, v); }},
          {"out", [&](auto&, auto& v) { cfg.out_dir = v; }},
          {"data.dir", [&](auto&, auto& v) { cfg.data_dir = v; }},
          {"cache.dir", [&](auto&, auto& v) { cfg.cache_dir = v; }},
          {"checkpoint.in", [&](auto&, auto& v) { cfg.checkpoint_in = v; }},
          {"checkpoint.out", [&](auto&, auto& v) { cfg.checkpoint_out = v; }},
          {"universal.k",
           [&](auto& k, auto& v) { cfg.portal_k = to_size(k, v); }},
          {"model.hidden",
           [&](auto& k, auto& v) { cfg.model.hidden = to_size(k, v); }},
          {"model.heads",
           [&](auto& k, auto& v) { cfg.model.heads = to_size(k, v); }},
          {"model.input_depth",
           [&](auto& k, auto& v) { cfg.model.input_depth = to_size(k, v); }},
          {"model.universal_depth",
           [&](auto& k, auto& v) {
             cfg.model.universal_depth = to_size(k, v);
           }},
          {"model.intermediate",
           [&](auto& k, auto& v) { cfg.model.intermediate = to_size(k, v); }},
          {"model.classify_depth",
           [&](auto& k, auto& v) {
             cfg.model.classify_depth = to_size(k, v);
           }},
          {"model.hidden_dropout",
           [&](auto& k, auto& v) {
             cfg.model.hidden_dropout = to_double(k, v);
           }},
          {"model.attention_dropout",
           [&](auto& k, auto& v) {
             cfg.model.attention_dropout = to_double(k, v);
           }},
          {"model.residual",
           [&](auto& k, auto& v) {
             if (v != "graph-raw")
               throw ConfigError("key '" + k +
                                 "': only graph-raw is supported");
           }},
          {"model.mask_padding",
           [&](auto& k, auto& v) { cfg.model.mask_padding = to_bool(k, v); }},
          {"preprocess.alpha",
           [&](auto& k, auto& v) { cfg.alpha = to_double(k, v); }},
          {"preprocess.wl_iterations",
           [&](auto& k, auto& v) { cfg.wl_iterations = to_size(k, v); }},
          {"preprocess.hop_cap",
           [&](auto& k, auto& v) {
             cfg.hop_cap = static_cast<std::uint32_t>(to_u64(k, v));
           }},
          {"train.tasks",
           [&](auto& k, auto& v) {
             cfg.pretrain_tasks = to_tasks(k, v);
             tasks_set = true;
           }},
          {"train.chunk_rows",
           [&](auto& k, auto& v) { cfg.chunk_rows = to_size(k, v); }},
          {"train.rounds",
           [&](auto& k, auto& v) { cfg.rounds = to_size(k, v); }},
          {"train.early_stop",
           [&](auto& k, auto& v) { cfg.early_stop = to_bool(k, v); }},
          {"train.early_stop_shift",
           [&](auto& k, auto& v) {
             cfg.early_stop_shift = to_double(k, v);
           }},
          {"finetune.tasks",
           [&](auto& k, auto& v) {
             cfg.finetune_tasks = to_tasks(k, v);
             finetune_set = true;
           }},
          {"finetune.epochs",
           [&](auto& k, auto& v) { cfg.finetune_epochs = to_size(k, v); }},
          {"reason.epochs",
           [&](auto& k, auto& v) { cfg.reason_epochs = to_size(k, v); }},
          {"reason.lr",
           [&](auto& k, auto& v) { cfg.reason_lr = to_double(k, v); }},
          {"reason.routing_iterations",
           [&](auto& k, auto& v) {
             cfg.routing_iterations = to_size(k, v);
           }},
      };

  std::vector<std::string> graph_ids;
  if (auto it = merged.find("graphs"); it != merged.end()) {
    graph_ids = split_list(it->second);
    if (graph_ids.empty())
      throw ConfigError("key 'graphs': empty graph list");
    std::set<std::string> seen;
    for (const auto& id : graph_ids)
      if (!seen.insert(id).second)
        throw ConfigError("key 'graphs': duplicate graph '" + id + "'");
  }

  std::vector<std::pair<std::string, std::string>> graph_keys;
  for (const auto& [key, value] : merged) {
    if (key == "graphs") continue;
    if (auto it = scalar.find(key); it != scalar.end()) {
      it->second(key, value);
      continue;
    }
    if (key.rfind("graph.", 0) == 0) {
      graph_keys.emplace_back(key, value);
      continue;
    }
    throw ConfigError("unknown key '" + key + "'");
  }

  if (graph_ids.empty())
    throw ConfigError("config declares no graphs (set 'graphs = id, ...')");
  for (const auto& id : graph_ids) {
    GraphConfig g;
    g.id = id;
    apply_named_defaults(g);
    g.content = cfg.data_dir + "/" + id + ".content";
    g.cites = cfg.data_dir + "/" + id + ".cites";
    cfg.graphs.push_back(std::move(g));
  }

  bool any_role = false;
  for (const auto& [key, value] : graph_keys) {
    const std::string rest = key.substr(6);
    const auto dot = rest.rfind('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == rest.size())
      throw ConfigError("unknown key '" + key + "'");
    const std::string id = rest.substr(0, dot);
    const std::string field = rest.substr(dot + 1);
    auto git = std::find_if(cfg.graphs.begin(), cfg.graphs.end(),
                            [&](const GraphConfig& g) { return g.id == id; });
    if (git == cfg.graphs.end())
      throw ConfigError("key '" + key + "': graph '" + id +
                        "' is not declared in 'graphs'");
    GraphConfig& g = *git;
    if (field == "content") {
      g.content = value;
    } else if (field == "cites") {
      g.cites = value;
    } else if (field == "k") {
      g.context_k = to_size(key, value);
    } else if (field == "lr") {
      g.learning_rate = to_double(key, value);
    } else if (field == "weight_decay") {
      g.weight_decay = to_double(key, value);
    } else if (field == "epochs") {
      g.epochs = to_size(key, value);
    } else if (field == "split") {
      if (value != "fixed" && value != "ratio")
        throw ConfigError("key '" + key + "': expected fixed or ratio");
      g.split = value;
    } else if (field == "train_fraction") {
      g.train_fraction = to_double(key, value);
    } else if (field == "val_fraction") {
      g.val_fraction = to_double(key, value);
    } else if (field == "role") {
      if (value != "source" && value != "target")
        throw ConfigError("key '" + key + "': expected source or target");
      g.role = value;
      any_role = true;
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }

  if (!tasks_set) cfg.pretrain_tasks = default_pretrain_tasks(cfg.mode);
  if (!finetune_set) cfg.finetune_tasks = default_finetune_tasks(cfg.mode);

  const bool targeted = cfg.mode == RunMode::transfer ||
                        cfg.mode == RunMode::apocalypse ||
                        cfg.mode == RunMode::reason;
  if (!targeted && any_role)
    throw ConfigError(
        "graph roles are only meaningful in transfer, apocalypse or reason "
        "mode");
  if (targeted) {
    if (!any_role) cfg.graphs.back().role = "target";
    std::size_t targets = 0;
    for (const auto& g : cfg.graphs)
      if (g.role == "target") ++targets;
    if (targets != 1)
      throw ConfigError(std::string(mode_name(cfg.mode)) +
                        " mode needs exactly one graph with role = target");
    if (cfg.mode == RunMode::apocalypse && cfg.checkpoint_in.empty() &&
        cfg.sources().empty())
      throw ConfigError(
          "apocalypse mode needs source graphs or checkpoint.in");
  }
  if (cfg.mode == RunMode::reason && cfg.checkpoint_in.empty())
    throw ConfigError("reason mode needs checkpoint.in");

  cfg.model.validate();
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
    throw ConfigError("preprocess.alpha must lie in (0, 1)");
  if (!(cfg.ratio > 0.0 && cfg.ratio <= 1.0))
    throw ConfigError("ratio must lie in (0, 1]");
  if (cfg.rounds == 0) throw ConfigError("train.rounds must be positive");
  if (cfg.chunk_rows == 0)
    throw ConfigError("train.chunk_rows must be positive");
  if (cfg.early_stop_shift <= 0.0)
    throw ConfigError("train.early_stop_shift must be positive");
  if (cfg.portal_k == 0) throw ConfigError("universal.k must be positive");
  if (cfg.routing_iterations == 0)
    throw ConfigError("reason.routing_iterations must be positive");
  if (cfg.reason_epochs == 0)
    throw ConfigError("reason.epochs must be positive");
  for (const auto& g : cfg.graphs) {
    if (g.context_k == 0)
      throw ConfigError("graph." + g.id + ".k must be positive");
    if (g.epochs == 0)
      throw ConfigError("graph." + g.id + ".epochs must be positive");
    if (g.split == "ratio") {
      if (!(g.train_fraction > 0.0 && g.val_fraction >= 0.0 &&
            g.train_fraction + g.val_fraction < 1.0))
        throw ConfigError("graph." + g.id +
                          ": split fractions must be positive and leave room "
                          "for a test split");
    }
  }
  return cfg;
}

std::string describe_run(const RunConfig& cfg) {
  std::stringstream out;
  out << "mode: " << mode_name(cfg.mode) << "\n";
  out << "seed: " << cfg.seed << "\n";
  if (cfg.mode == RunMode::reason) out << "strategy: " << cfg.strategy << "\n";
  out << "universal context size: " << cfg.portal_k << "\n";
  out << "rounds: " << cfg.rounds << "\n";
  auto tasks_line = [&](const char* label, const std::vector<Task>& tasks) {
    out << label << ":";
    for (Task t : tasks) out << " " << task_name(t);
    out << "\n";
  };
  tasks_line("pretrain tasks", cfg.pretrain_tasks);
  if (cfg.mode != RunMode::isolated && cfg.mode != RunMode::mixed)
    tasks_line("fine-tune tasks", cfg.finetune_tasks);
  if (cfg.mode == RunMode::transfer) out << "label ratio: " << cfg.ratio << "\n";
  if (!cfg.checkpoint_in.empty())
    out << "checkpoint in: " << cfg.checkpoint_in << "\n";
  if (!cfg.checkpoint_out.empty())
    out << "checkpoint out: " << cfg.checkpoint_out << "\n";
  for (const auto& g : cfg.graphs) {
    out << "graph " << g.id << ": k=" << g.context_k
        << " lr=" << g.learning_rate << " wd=" << g.weight_decay
        << " epochs=" << g.epochs << " split=" << g.split;
    if (!g.role.empty()) out << " role=" << g.role;
    out << "\n";
  }
  return out.str();
}

}  // namespace g5
