#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include "g5/config.hpp"
#include "test_support.hpp"

namespace {

g5::RunConfig resolve_text(const std::string& text,
                           std::map<std::string, std::string> overrides = {}) {
  return g5::resolve_config(g5::parse_config_text(text, "inline"), overrides);
}

#ifdef G5_BIN_PATH
struct CliResult {
  int exit_code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(G5_BIN_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CliResult r;
  char buf[512];
  while (fgets(buf, sizeof buf, pipe) != nullptr) r.output += buf;
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}
#endif

}  // namespace

TEST_SUITE("config") {

TEST_CASE("mode names map both ways") {
  CHECK(g5::mode_name(g5::RunMode::apocalypse) == std::string("apocalypse"));
  CHECK(g5::mode_from_name("mixed") == g5::RunMode::mixed);
  CHECK_THROWS_AS(g5::mode_from_name("sideways"), g5::ConfigError);
}

TEST_CASE("parser strips comments and whitespace and keeps positions") {
  g5::ConfigFile f = g5::parse_config_text(
      "# leading comment\n"
      "mode = isolated   # trailing comment\n"
      "\n"
      "  seed=7\n"
      "graphs = alpha\n",
      "test.cfg");
  CHECK(f.values.at("mode") == "isolated");
  CHECK(f.values.at("seed") == "7");
  CHECK(f.values.at("graphs") == "alpha");

  CHECK_THROWS_WITH_AS(
      g5::parse_config_text("mode = isolated\nmode = mixed\n", "dup.cfg"),
      doctest::Contains("dup.cfg:2"), g5::ConfigError);
  CHECK_THROWS_WITH_AS(g5::parse_config_text("just-a-token\n", "bad.cfg"),
                       doctest::Contains("bad.cfg:1"), g5::ConfigError);
  CHECK_THROWS_AS(g5::parse_config_file("/no/such/file.cfg"), g5::IoError);
}

TEST_CASE("named graphs pick up tuned defaults") {
  g5::RunConfig cfg = resolve_text(
      "mode = isolated\n"
      "graphs = cora, citeseer, pubmed\n");
  REQUIRE(cfg.graphs.size() == 3);
  CHECK(cfg.graph("cora").context_k == 7);
  CHECK(cfg.graph("cora").learning_rate == 0.01);
  CHECK(cfg.graph("cora").epochs == 150);
  CHECK(cfg.graph("citeseer").context_k == 5);
  CHECK(cfg.graph("citeseer").learning_rate == 0.001);
  CHECK(cfg.graph("citeseer").epochs == 2000);
  CHECK(cfg.graph("pubmed").context_k == 30);
  CHECK(cfg.graph("pubmed").epochs == 500);
  CHECK(cfg.graph("cora").content == "data/cora.content");
  CHECK(cfg.graph("cora").cites == "data/cora.cites");
  CHECK(cfg.graph("cora").weight_decay == 5e-4);
}

TEST_CASE("per-graph keys override the defaults") {
  g5::RunConfig cfg = resolve_text(
      "mode = isolated\n"
      "data.dir = /srv/graphs\n"
      "graphs = cora, webnet\n"
      "graph.cora.k = 9\n"
      "graph.cora.epochs = 42\n"
      "graph.webnet.content = /elsewhere/web.content\n"
      "graph.webnet.lr = 0.005\n"
      "graph.webnet.split = ratio\n"
      "graph.webnet.train_fraction = 0.3\n");
  CHECK(cfg.graph("cora").context_k == 9);
  CHECK(cfg.graph("cora").epochs == 42);
  CHECK(cfg.graph("cora").content == "/srv/graphs/cora.content");
  CHECK(cfg.graph("webnet").content == "/elsewhere/web.content");
  CHECK(cfg.graph("webnet").cites == "/srv/graphs/webnet.cites");
  CHECK(cfg.graph("webnet").learning_rate == 0.005);
  CHECK(cfg.graph("webnet").split == "ratio");
  CHECK(cfg.graph("webnet").train_fraction == 0.3);
}

TEST_CASE("unknown or malformed keys are rejected") {
  CHECK_THROWS_WITH_AS(resolve_text("mode = isolated\n"
                                    "graphs = cora\n"
                                    "no.such.key = 1\n"),
                       doctest::Contains("no.such.key"), g5::ConfigError);
  CHECK_THROWS_AS(resolve_text("mode = isolated\n"
                               "graphs = cora\n"
                               "graph.cora.volume = 11\n"),
                  g5::ConfigError);
  CHECK_THROWS_AS(resolve_text("mode = isolated\n"
                               "graphs = cora\n"
                               "seed = not-a-number\n"),
                  g5::ConfigError);
  CHECK_THROWS_AS(resolve_text("mode = isolated\n"), g5::ConfigError);
  CHECK_THROWS_AS(resolve_text("mode = isolated\n"
                               "graphs = cora, cora\n"),
                  g5::ConfigError);
  CHECK_THROWS_AS(resolve_text("mode = isolated\n"
                               "graphs = cora\n"
                               "strategy = osmosis\n"),
                  g5::ConfigError);
  CHECK_THROWS_AS(resolve_text("mode = isolated\n"
                               "graphs = cora\n"
                               "preprocess.alpha = 1.5\n"),
                  g5::ConfigError);
  CHECK_THROWS_AS(resolve_text("mode = isolated\n"
                               "graphs = cora\n"
                               "ratio = 0\n"),
                  g5::ConfigError);
  CHECK_THROWS_AS(resolve_text("mode = isolated\n"
                               "graphs = cora\n"
                               "model.residual = vanilla\n"),
                  g5::ConfigError);
}

TEST_CASE("overrides beat file values") {
  g5::RunConfig cfg = resolve_text(
      "mode = isolated\n"
      "seed = 1\n"
      "graphs = cora\n",
      {{"seed", "99"}, {"out", "elsewhere"}});
  CHECK(cfg.seed == 99);
  CHECK(cfg.out_dir == "elsewhere");
}

TEST_CASE("cache dir falls back to the environment") {
  unsetenv("G5_CACHE_DIR");
  CHECK(resolve_text("mode = isolated\ngraphs = cora\n").cache_dir ==
        "cache");

  setenv("G5_CACHE_DIR", "/tmp/g5env", 1);
  CHECK(resolve_text("mode = isolated\ngraphs = cora\n").cache_dir ==
        "/tmp/g5env");
  // An explicit key still wins.
  CHECK(resolve_text("mode = isolated\ngraphs = cora\ncache.dir = here\n")
            .cache_dir == "here");
  unsetenv("G5_CACHE_DIR");
}

TEST_CASE("task schedules default by mode") {
  g5::RunConfig iso = resolve_text("mode = isolated\ngraphs = cora\n");
  CHECK(iso.pretrain_tasks == std::vector<g5::Task>{g5::Task::classify});

  g5::RunConfig mixed =
      resolve_text("mode = mixed\ngraphs = cora, citeseer\n");
  CHECK(mixed.pretrain_tasks ==
        std::vector<g5::Task>{g5::Task::reconstruct, g5::Task::structure,
                              g5::Task::classify});
  CHECK(mixed.finetune_tasks == std::vector<g5::Task>{g5::Task::classify});

  g5::RunConfig apoc =
      resolve_text("mode = apocalypse\ngraphs = cora, citeseer\n");
  CHECK(apoc.finetune_tasks ==
        std::vector<g5::Task>{g5::Task::reconstruct, g5::Task::structure});

  g5::RunConfig custom = resolve_text(
      "mode = mixed\n"
      "graphs = cora, citeseer\n"
      "train.tasks = structure, classify\n"
      "finetune.tasks = classify\n");
  CHECK(custom.pretrain_tasks ==
        std::vector<g5::Task>{g5::Task::structure, g5::Task::classify});
}

TEST_CASE("roles follow the mode rules") {
  CHECK_THROWS_WITH_AS(resolve_text("mode = isolated\n"
                                    "graphs = cora\n"
                                    "graph.cora.role = target\n"),
                       doctest::Contains("role"), g5::ConfigError);

  g5::RunConfig tr =
      resolve_text("mode = transfer\ngraphs = pubmed, cora\n");
  REQUIRE(tr.target() != nullptr);
  CHECK(tr.target()->id == "cora");  // last graph becomes the target
  REQUIRE(tr.sources().size() == 1);
  CHECK(tr.sources()[0]->id == "pubmed");

  g5::RunConfig explicit_target = resolve_text(
      "mode = transfer\n"
      "graphs = pubmed, cora\n"
      "graph.pubmed.role = target\n"
      "graph.cora.role = source\n");
  CHECK(explicit_target.target()->id == "pubmed");

  CHECK_THROWS_AS(resolve_text("mode = transfer\n"
                               "graphs = pubmed, cora\n"
                               "graph.pubmed.role = target\n"
                               "graph.cora.role = target\n"),
                  g5::ConfigError);

  // A lone target without sources is the no-pretraining baseline.
  g5::RunConfig bare = resolve_text("mode = transfer\ngraphs = cora\n");
  CHECK(bare.target()->id == "cora");
  CHECK(bare.sources().empty());

  // Apocalypse runs need something to reason against later.
  CHECK_THROWS_AS(resolve_text("mode = apocalypse\ngraphs = cora\n"),
                  g5::ConfigError);
  CHECK_NOTHROW(resolve_text(
      "mode = apocalypse\ngraphs = cora\ncheckpoint.in = prior.g5ck\n"));

  CHECK_THROWS_WITH_AS(resolve_text("mode = reason\ngraphs = cora\n"),
                       doctest::Contains("checkpoint.in"), g5::ConfigError);
  g5::RunConfig rs = resolve_text(
      "mode = reason\n"
      "graphs = cora\n"
      "checkpoint.in = bank.g5ck\n"
      "strategy = cdr\n");
  CHECK(rs.target()->id == "cora");
  CHECK(rs.strategy == "cdr");
}

TEST_CASE("model and schedule knobs resolve") {
  g5::RunConfig cfg = resolve_text(
      "mode = mixed\n"
      "graphs = cora, citeseer\n"
      "universal.k = 11\n"
      "model.hidden = 64\n"
      "model.heads = 4\n"
      "model.hidden_dropout = 0.25\n"
      "train.rounds = 5\n"
      "train.early_stop = true\n"
      "train.early_stop_shift = 0.02\n"
      "train.chunk_rows = 1024\n"
      "finetune.epochs = 77\n"
      "reason.epochs = 321\n"
      "reason.lr = 0.5\n"
      "reason.routing_iterations = 4\n");
  CHECK(cfg.portal_k == 11);
  CHECK(cfg.model.hidden == 64);
  CHECK(cfg.model.heads == 4);
  CHECK(cfg.model.hidden_dropout == 0.25);
  CHECK(cfg.rounds == 5);
  CHECK(cfg.early_stop);
  CHECK(cfg.early_stop_shift == 0.02);
  CHECK(cfg.chunk_rows == 1024);
  CHECK(cfg.finetune_epochs == 77);
  CHECK(cfg.reason_epochs == 321);
  CHECK(cfg.reason_lr == 0.5);
  CHECK(cfg.routing_iterations == 4);
}

TEST_CASE("the dry-run description names the schedule") {
  g5::RunConfig cfg =
      resolve_text("mode = transfer\ngraphs = pubmed, cora\nratio = 0.5\n");
  const std::string text = g5::describe_run(cfg);
  CHECK(text.find("transfer") != std::string::npos);
  CHECK(text.find("pubmed") != std::string::npos);
  CHECK(text.find("cora") != std::string::npos);
  CHECK(text.find("role=target") != std::string::npos);
}

}  // TEST_SUITE

#ifdef G5_BIN_PATH

TEST_SUITE("cli") {

TEST_CASE("help and version exit cleanly") {
  CliResult help = run_cli("--help");
  CHECK(help.exit_code == 0);
  CHECK(help.output.find("train") != std::string::npos);

  CliResult version = run_cli("--version");
  CHECK(version.exit_code == 0);
}

TEST_CASE("dry runs describe without touching data") {
  const std::string dir = testsupport::scratch_dir("cli");
  const std::string cfg_path = dir + "/run.cfg";
  {
    std::ofstream f(cfg_path);
    f << "mode = isolated\n"
      << "graphs = cora\n"
      << "data.dir = " << dir << "\n";
  }
  CliResult dry = run_cli("train -c " + cfg_path + " --dry-run");
  CHECK(dry.exit_code == 0);
  CHECK(dry.output.find("mode: isolated") != std::string::npos);

  // Same config without data files fails with the I/O exit code.
  CliResult wet = run_cli("train -c " + cfg_path);
  CHECK(wet.exit_code == 4);
  CHECK(wet.output.find("error:") != std::string::npos);
}

TEST_CASE("config mistakes exit with the usage code") {
  const std::string dir = testsupport::scratch_dir("clibad");
  const std::string cfg_path = dir + "/bad.cfg";
  {
    std::ofstream f(cfg_path);
    f << "mode = isolated\ngraphs = cora\nnot.a.key = 1\n";
  }
  CliResult bad = run_cli("train -c " + cfg_path);
  CHECK(bad.exit_code == 2);
  CHECK(bad.output.find("not.a.key") != std::string::npos);

  CliResult missing = run_cli("train -c /no/such/file.cfg");
  CHECK(missing.exit_code == 4);

  CliResult unknown_flag = run_cli("train --frobnicate");
  CHECK(unknown_flag.exit_code == 2);

  CliResult no_sub = run_cli("");
  CHECK(no_sub.exit_code == 2);
}

TEST_CASE("report reads metrics files") {
  const std::string dir = testsupport::scratch_dir("clireport");
  const std::string csv = dir + "/metrics.csv";
  {
    std::ofstream f(csv);
    f << "run,graph,task,epoch,split,metric,value\n"
      << "demo,cora,classify,-1,test,accuracy,0.8125\n"
      << "demo,cora,classify,0,train,loss,1.9\n";
  }
  CliResult rep = run_cli("report -m " + csv);
  CHECK(rep.exit_code == 0);
  CHECK(rep.output.find("0.8125") != std::string::npos);

  CliResult gone = run_cli("report -m " + dir + "/absent.csv");
  CHECK(gone.exit_code == 4);
}

}  // TEST_SUITE

#endif  // G5_BIN_PATH
