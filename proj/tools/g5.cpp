#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>

#include "g5/blas.hpp"
#include "g5/dataset_io.hpp"
#include "g5/runner.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::map<std::string, std::string> overrides;
  std::vector<std::string> sets;
  bool dry_run = false;
};

void add_common(CLI::App* cmd, CliOptions& opt) {
  cmd->add_option("-c,--config", opt.config_path, "run config file")
      ->required();
  auto keyed = [&opt](const char* key) {
    return [&opt, key](const std::string& v) { opt.overrides[key] = v; };
  };
  cmd->add_option_function<std::string>("--mode", keyed("mode"),
                                        "run mode override");
  cmd->add_option_function<std::string>("--strategy", keyed("strategy"),
                                        "reasoning strategy override");
  cmd->add_option_function<std::string>("--seed", keyed("seed"),
                                        "seed override");
  cmd->add_option_function<std::string>("--ratio", keyed("ratio"),
                                        "training label ratio override");
  cmd->add_option_function<std::string>("--out", keyed("out"),
                                        "output directory override");
  cmd->add_option_function<std::string>("--data", keyed("data.dir"),
                                        "dataset directory override");
  cmd->add_option_function<std::string>("--cache", keyed("cache.dir"),
                                        "preprocess cache directory override");
  cmd->add_option_function<std::string>("--checkpoint-in",
                                        keyed("checkpoint.in"),
                                        "checkpoint to start from");
  cmd->add_option_function<std::string>("--checkpoint-out",
                                        keyed("checkpoint.out"),
                                        "checkpoint to write");
  cmd->add_option("--set", opt.sets,
                  "raw config override, key=value (repeatable)");
}

g5::RunConfig resolve(const CliOptions& opt) {
  g5::ConfigFile file = g5::parse_config_file(opt.config_path);
  std::map<std::string, std::string> overrides = opt.overrides;
  for (const std::string& s : opt.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      throw g5::ConfigError("--set expects key=value, got '" + s + "'");
    overrides[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return g5::resolve_config(file, overrides);
}

int cmd_preprocess(const CliOptions& opt) {
  g5::RunConfig cfg = resolve(opt);
  for (const auto& g : cfg.graphs) {
    for (const std::string& path : {g.content, g.cites})
      if (!std::filesystem::exists(path))
        throw g5::ConfigError("graph '" + g.id +
                              "': dataset file not found: " + path);
    g5::LoadReport report;
    g5::GraphDataset d =
        g5::load_citation_graph(g.content, g.cites, g.id, &report);
    g5::PreprocessParams params;
    params.context_k = g.context_k;
    params.alpha = cfg.alpha;
    params.wl_iterations = cfg.wl_iterations;
    params.hop_cap = cfg.hop_cap;
    const std::string path =
        cfg.cache_dir + "/" + g5::cache_file_name(g.id, params);
    const bool fresh = g5::cache_is_fresh(path, g.id, params);
    if (!fresh) {
      std::filesystem::create_directories(cfg.cache_dir);
      g5::save_subgraph_batch(g5::build_subgraph_batch(d, params), path);
    }
    std::printf("%s: %zu nodes, %zu edges, %zu classes -> %s%s\n", g.id.c_str(),
                d.num_nodes(), d.edges.size(), d.num_classes, path.c_str(),
                fresh ? " (cache fresh, skipped)" : "");
    if (report.dropped_edges > 0)
      std::printf("%s: dropped %zu edge lines with unknown endpoints\n",
                  g.id.c_str(), report.dropped_edges);
  }
  return 0;
}

int cmd_train(const CliOptions& opt) {
  g5::RunConfig cfg = resolve(opt);
  if (opt.dry_run) {
    std::printf("run: %s\n%s", g5::run_identifier(cfg).c_str(),
                g5::describe_run(cfg).c_str());
    return 0;
  }
  g5::RunResult result = g5::execute_run(cfg);
  for (const auto& [graph, acc] : result.accuracy)
    std::printf("%s test accuracy: %.4f\n", graph.c_str(), acc);
  if (result.reasoned_accuracy >= 0.0)
    std::printf("reasoned accuracy: %.4f (random baseline %.3f)\n",
                result.reasoned_accuracy, result.random_baseline);
  if (!result.labels_path.empty())
    std::printf("labels: %s\n", result.labels_path.c_str());
  if (!result.checkpoint_path.empty())
    std::printf("checkpoint: %s\n", result.checkpoint_path.c_str());
  std::printf("metrics: %s\n", result.metrics_path.c_str());
  return 0;
}

int cmd_reason(CliOptions opt) {
  opt.overrides["mode"] = "reason";
  return cmd_train(opt);
}

std::map<std::string, std::string> parse_run_fields(const std::string& run) {
  std::map<std::string, std::string> fields;
  std::size_t pos = 0;
  while (pos <= run.size()) {
    std::size_t end = run.find(':', pos);
    if (end == std::string::npos) end = run.size();
    const std::string part = run.substr(pos, end - pos);
    const auto eq = part.find('=');
    if (eq != std::string::npos && eq > 0)
      fields[part.substr(0, eq)] = part.substr(eq + 1);
    pos = end + 1;
  }
  return fields;
}

void print_aligned(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c)
      width[c] = std::max(width[c], row[c].size());
  }
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      std::string cell = row[c];
      if (c + 1 < row.size()) cell.resize(width[c], ' ');
      line += cell;
      if (c + 1 < row.size()) line += "  ";
    }
    std::printf("%s\n", line.c_str());
  }
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

int cmd_report(const std::string& metrics_path, const std::string& filter) {
  const auto records = g5::read_metrics(metrics_path);
  struct Cell {
    double sum = 0.0;
    std::size_t n = 0;
    std::string mean() const {
      return fmt4(sum / static_cast<double>(n));
    }
  };
  auto field = [](const std::map<std::string, std::string>& f, const char* k) {
    const auto it = f.find(k);
    return it == f.end() || it->second.empty() ? std::string("-") : it->second;
  };
  using SummaryKey = std::tuple<std::string, std::string, std::string,
                                long long, std::string, std::string>;
  using PivotKey = std::tuple<std::string, std::string, long long>;
  std::map<SummaryKey, Cell> summary;
  std::map<PivotKey, std::map<double, Cell>> pivot;
  std::set<double> ratios;
  std::size_t losses = 0;
  for (const auto& r : records) {
    if (!filter.empty() && r.run.find(filter) == std::string::npos) continue;
    if (r.metric != "accuracy") {
      ++losses;
      continue;
    }
    const auto f = parse_run_fields(r.run);
    long long k = -1;
    if (const auto it = f.find("k"); it != f.end())
      k = std::atoll(it->second.c_str());
    if (field(f, "mode") == "transfer" && f.count("ratio")) {
      const double ratio = std::stod(f.at("ratio"));
      ratios.insert(ratio);
      Cell& c = pivot[{field(f, "src"), field(f, "tgt"), k}][ratio];
      c.sum += r.value;
      ++c.n;
    } else {
      Cell& c = summary[{field(f, "mode"), field(f, "src"), field(f, "tgt"), k,
                         field(f, "strategy"), r.graph}];
      c.sum += r.value;
      ++c.n;
    }
  }
  if (!summary.empty()) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back(
        {"mode", "src", "tgt", "k", "strategy", "graph", "runs", "accuracy"});
    for (const auto& [key, cell] : summary)
      rows.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key),
                      std::to_string(std::get<3>(key)), std::get<4>(key),
                      std::get<5>(key), std::to_string(cell.n), cell.mean()});
    print_aligned(rows);
  }
  if (!pivot.empty()) {
    if (!summary.empty()) std::printf("\n");
    std::printf("transfer accuracy by training ratio (mean over runs)\n");
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> head = {"src", "tgt", "k"};
    for (double ratio : ratios) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "ratio=%g", ratio);
      head.push_back(buf);
    }
    rows.push_back(std::move(head));
    for (const auto& [key, cells] : pivot) {
      std::vector<std::string> row = {std::get<0>(key), std::get<1>(key),
                                      std::to_string(std::get<2>(key))};
      for (double ratio : ratios) {
        const auto it = cells.find(ratio);
        row.push_back(it == cells.end() ? "-" : it->second.mean());
      }
      rows.push_back(std::move(row));
    }
    print_aligned(rows);
  }
  std::printf("(%zu training-loss rows)\n", losses);
  return 0;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"multi-graph representation learning toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "g5 1.0.0");

  CliOptions pre_opt, train_opt, reason_opt;
  std::string metrics_path, report_filter;

  CLI::App* pre = app.add_subcommand(
      "preprocess", "build and cache subgraph batches for the configured graphs");
  add_common(pre, pre_opt);

  CLI::App* train =
      app.add_subcommand("train", "execute the configured run end to end");
  add_common(train, train_opt);
  train->add_flag("--dry-run", train_opt.dry_run,
                  "print the resolved schedule and exit");

  CLI::App* reason = app.add_subcommand(
      "reason", "label a zero-label graph from a prepared checkpoint");
  add_common(reason, reason_opt);

  CLI::App* report =
      app.add_subcommand("report", "summarize a metrics CSV file");
  report->add_option("-m,--metrics", metrics_path, "metrics CSV path")
      ->required();
  report->add_option("-r,--run", report_filter,
                     "only rows whose run id contains this substring");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (pre->parsed()) return cmd_preprocess(pre_opt);
  if (train->parsed()) return cmd_train(train_opt);
  if (reason->parsed()) return cmd_reason(reason_opt);
  if (report->parsed()) return cmd_report(metrics_path, report_filter);
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  g5::blas::init_single_thread();
  try {
    return run_cli(argc, argv);
  } catch (const g5::NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const g5::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const g5::IntegrityError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const g5::VersionError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const g5::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
