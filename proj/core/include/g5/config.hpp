#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "g5/apocalypse.hpp"
#include "g5/model.hpp"
#include "g5/preprocess.hpp"
#include "g5/training.hpp"

namespace g5 {

enum class RunMode { isolated, mixed, transfer, apocalypse, reason };

const char* mode_name(RunMode m);
RunMode mode_from_name(const std::string& name);

// One graph's slot in a run: where its files live and how its supervised
// segments are tuned.  Named benchmark graphs pick up tuned defaults.
struct GraphConfig {
  std::string id;
  std::string content;  // node feature/label file; default <data.dir>/<id>.content
  std::string cites;    // edge file; default <data.dir>/<id>.cites
  std::size_t context_k = 7;
  double learning_rate = 1e-3;
  double weight_decay = 5e-4;
  std::size_t epochs = 200;
  std::string split = "fixed";  // fixed | ratio
  double train_fraction = 0.1;
  double val_fraction = 0.2;
  std::string role;  // "", "source" or "target"
};

struct RunConfig {
  RunMode mode = RunMode::isolated;
  std::string strategy = "cccm";  // cccm | cdr
  std::uint64_t seed = 42;
  double ratio = 1.0;  // fraction of the target train split kept supervised
  std::string out_dir = "out";
  std::string data_dir = "data";
  std::string cache_dir = "cache";
  std::string checkpoint_in;
  std::string checkpoint_out;
  std::size_t portal_k = 15;
  ModelConfig model;
  double alpha = 0.15;
  std::size_t wl_iterations = 2;
  std::uint32_t hop_cap = 20;
  std::size_t chunk_rows = 8192;
  std::size_t rounds = 3;
  bool early_stop = false;
  double early_stop_shift = 0.01;
  std::vector<Task> pretrain_tasks;  // mode-dependent default
  std::vector<Task> finetune_tasks;  // mode-dependent default
  std::size_t finetune_epochs = 0;   // 0: use the target graph's epochs
  std::size_t reason_epochs = 200;
  double reason_lr = 0.01;
  std::size_t routing_iterations = 3;
  std::vector<GraphConfig> graphs;

  const GraphConfig* target() const;
  std::vector<const GraphConfig*> sources() const;
  const GraphConfig& graph(const std::string& id) const;
};

// Raw `key = value` pairs from a config file.  `#` starts a comment,
// duplicate or unknown keys are rejected when resolved.
struct ConfigFile {
  std::map<std::string, std::string> values;
};

ConfigFile parse_config_text(const std::string& text,
                             const std::string& origin);
ConfigFile parse_config_file(const std::string& path);

// Applies file values over the defaults, fills per-graph named-benchmark
// defaults, and validates the result.  `overrides` wins over the file
// (command-line flags use this).
RunConfig resolve_config(const ConfigFile& file,
                         const std::map<std::string, std::string>& overrides =
                             {});

// Tuned defaults for the named benchmark graphs (context size, learning
// rate, supervised epochs); leaves other ids untouched.
void apply_named_defaults(GraphConfig& g);

std::vector<Task> default_pretrain_tasks(RunMode mode);
std::vector<Task> default_finetune_tasks(RunMode mode);

// Human-readable schedule dump for dry runs.
std::string describe_run(const RunConfig& cfg);

}  // namespace g5
