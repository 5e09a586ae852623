#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include "g5/dataset_io.hpp"
#include "test_support.hpp"

namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  REQUIRE(out.good());
  out << text;
}

struct RawPair {
  std::string content;
  std::string cites;
};

RawPair raw_paths(const std::string& tag) {
  const std::string dir = testsupport::scratch_dir(tag);
  return {dir + "/g.content", dir + "/g.cites"};
}

g5::GraphDataset plain_dataset(std::size_t n, int classes) {
  g5::GraphDataset d;
  d.id = "plain";
  d.feature_dim = 1;
  d.num_classes = classes;
  g5::CsrBuilder fb(1);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    fb.add_entry(0, 1.0);
    fb.finish_row();
    labels[i] = static_cast<int>(i) % classes;
    d.node_names.push_back("n" + std::to_string(i));
  }
  d.features = fb.build();
  d.adjacency.assign(n, {});
  d.set_labels(std::move(labels));
  return d;
}

}  // namespace

TEST_SUITE("dataset_io") {

TEST_CASE("loads and normalizes a small citation graph") {
  auto [content, cites] = raw_paths("load");
  write_file(content,
             "nodeA 1 0 2.5 physics\n"
             "nodeB 0 0 1 biology\n"
             "nodeC 3 1 0 physics\n"
             "nodeD 0 0 0 unlabeled\n");
  write_file(cites,
             "nodeA nodeB\n"
             "nodeB nodeA\n"   // reverse duplicate
             "nodeA nodeB\n"   // plain duplicate
             "nodeC nodeC\n"   // self loop
             "nodeC nodeD\n"
             "nodeA ghost\n"); // unknown endpoint

  g5::LoadReport report;
  g5::GraphDataset d = g5::load_citation_graph(content, cites, "toy", &report);

  CHECK(d.id == "toy");
  CHECK(d.num_nodes() == 4);
  CHECK(d.feature_dim == 3);
  CHECK(d.num_classes == 2);
  CHECK(report.dropped_edges == 1);

  // Class ids follow sorted label names: biology = 0, physics = 1.
  REQUIRE(d.label_names.size() == 2);
  CHECK(d.label_names[0] == "biology");
  CHECK(d.label_names[1] == "physics");
  CHECK(d.label(0) == 1);
  CHECK(d.label(1) == 0);
  CHECK(d.label(2) == 1);
  CHECK_FALSE(d.has_label(3));

  // Symmetrized unique edges with u < v.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> expect = {{0, 1},
                                                                 {2, 3}};
  CHECK(d.edges == expect);
  REQUIRE(d.adjacency.size() == 4);
  CHECK(d.adjacency[0] == std::vector<std::uint32_t>{1});
  CHECK(d.adjacency[1] == std::vector<std::uint32_t>{0});
  CHECK(d.adjacency[2] == std::vector<std::uint32_t>{3});
  CHECK(d.degree(0) == 1);

  // Sparse features keep only nonzero entries.
  std::vector<double> row0(d.feature_dim);
  d.features.copy_row(0, row0.data());
  CHECK(row0[0] == 1.0);
  CHECK(row0[1] == 0.0);
  CHECK(row0[2] == 2.5);
  CHECK(d.features.nnz() == 5);
  CHECK(d.node_names[2] == "nodeC");
}

TEST_CASE("content parse failures carry file and line") {
  auto [content, cites] = raw_paths("parse");
  write_file(cites, "");

  write_file(content, "a 1\n");
  CHECK_THROWS_WITH_AS(g5::load_citation_graph(content, cites, "g"),
                       doctest::Contains(":1:"), g5::ParseError);

  write_file(content, "a 1 0 physics\nb 1 physics\n");
  CHECK_THROWS_WITH_AS(g5::load_citation_graph(content, cites, "g"),
                       doctest::Contains(":2:"), g5::ParseError);

  write_file(content, "a 1 0 physics\na 0 1 biology\n");
  CHECK_THROWS_AS(g5::load_citation_graph(content, cites, "g"),
                  g5::ParseError);

  write_file(content, "a 1 x physics\n");
  CHECK_THROWS_WITH_AS(g5::load_citation_graph(content, cites, "g"),
                       doctest::Contains("'x'"), g5::ParseError);

  write_file(content, "\n\n");
  CHECK_THROWS_WITH_AS(g5::load_citation_graph(content, cites, "g"),
                       doctest::Contains("empty"), g5::ParseError);

  write_file(content, "a 1 0 unlabeled\n");
  CHECK_THROWS_WITH_AS(g5::load_citation_graph(content, cites, "g"),
                       doctest::Contains("no labeled"), g5::ParseError);
}

TEST_CASE("cites parse failures and missing files") {
  auto [content, cites] = raw_paths("cites");
  write_file(content, "a 1 0 physics\nb 0 1 biology\n");

  write_file(cites, "a b extra\n");
  CHECK_THROWS_AS(g5::load_citation_graph(content, cites, "g"),
                  g5::ParseError);

  CHECK_THROWS_AS(
      g5::load_citation_graph(content + ".missing", cites, "g"),
      g5::IoError);
  CHECK_THROWS_AS(
      g5::load_citation_graph(content, cites + ".missing", "g"),
      g5::IoError);
}

TEST_CASE("raw round trip through the test writer") {
  g5::GraphDataset src = testsupport::community_graph("round", 3, 12, 16, 5);
  const std::string dir = testsupport::scratch_dir("roundtrip");
  auto [content_path, cites_path] = testsupport::write_raw_files(src, dir);
  g5::GraphDataset d =
      g5::load_citation_graph(content_path, cites_path, "round");

  REQUIRE(d.num_nodes() == src.num_nodes());
  CHECK(d.num_classes == src.num_classes);
  CHECK(d.feature_dim == src.feature_dim);
  CHECK(d.edges == src.edges);
  std::vector<double> a(d.feature_dim), b(src.feature_dim);
  for (std::uint32_t v = 0; v < d.num_nodes(); ++v) {
    CHECK(d.label(v) == src.label(v));
    d.features.copy_row(v, a.data());
    src.features.copy_row(v, b.data());
    for (std::size_t j = 0; j < a.size(); ++j)
      CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-12));
  }
}

TEST_CASE("fixed benchmark split uses positional blocks") {
  g5::GraphDataset d = plain_dataset(1600, 2);
  g5::SplitPolicy policy;  // fixed_benchmark
  g5::make_split(d, 123, policy);

  std::vector<std::uint32_t> train(40), val(500), test(1000);
  std::iota(train.begin(), train.end(), 0u);
  std::iota(val.begin(), val.end(), 40u);
  std::iota(test.begin(), test.end(), 600u);
  CHECK(d.split("train") == train);
  CHECK(d.split("validation") == val);
  CHECK(d.split("test") == test);

  // Seed-independent.
  g5::GraphDataset d2 = plain_dataset(1600, 2);
  g5::make_split(d2, 999, policy);
  CHECK(d2.split("train") == d.split("train"));
}

TEST_CASE("fixed benchmark split rejects unfit datasets") {
  g5::SplitPolicy policy;
  g5::GraphDataset small = plain_dataset(100, 2);
  CHECK_THROWS_AS(g5::make_split(small, 1, policy), g5::ContractError);

  g5::GraphDataset holey = plain_dataset(1600, 2);
  auto labels = holey.raw_labels_unguarded();
  labels[5] = -1;
  holey.set_labels(std::move(labels));
  CHECK_THROWS_AS(g5::make_split(holey, 1, policy), g5::ContractError);
}

TEST_CASE("ratio split is deterministic, disjoint and labeled-only") {
  g5::GraphDataset d = plain_dataset(200, 4);
  auto labels = d.raw_labels_unguarded();
  for (std::size_t i = 0; i < labels.size(); i += 10) labels[i] = -1;
  d.set_labels(std::move(labels));

  g5::SplitPolicy policy;
  policy.kind = g5::SplitPolicy::Kind::ratio_random;
  policy.train_fraction = 0.2;
  policy.val_fraction = 0.3;
  g5::make_split(d, 77, policy);

  const std::size_t labeled = 200 - 20;
  CHECK(d.split("train").size() == labeled / 5);
  CHECK(d.split("validation").size() == labeled * 3 / 10);
  CHECK(d.split("train").size() + d.split("validation").size() +
            d.split("test").size() ==
        labeled);

  std::set<std::uint32_t> seen;
  for (const char* name : {"train", "validation", "test"})
    for (std::uint32_t v : d.split(name)) {
      CHECK(d.has_label(v));
      CHECK(seen.insert(v).second);  // no overlap
    }

  g5::GraphDataset d2 = plain_dataset(200, 4);
  auto labels2 = d2.raw_labels_unguarded();
  for (std::size_t i = 0; i < labels2.size(); i += 10) labels2[i] = -1;
  d2.set_labels(std::move(labels2));
  g5::make_split(d2, 77, policy);
  CHECK(d2.split("train") == d.split("train"));
  CHECK(d2.split("test") == d.split("test"));

  g5::make_split(d2, 78, policy);
  CHECK(d2.split("train") != d.split("train"));
}

TEST_CASE("ratio split validates its fractions") {
  g5::GraphDataset d = plain_dataset(50, 2);
  g5::SplitPolicy policy;
  policy.kind = g5::SplitPolicy::Kind::ratio_random;

  policy.train_fraction = 0.0;
  CHECK_THROWS_AS(g5::make_split(d, 1, policy), g5::ContractError);

  policy.train_fraction = 0.6;
  policy.val_fraction = 0.5;
  CHECK_THROWS_AS(g5::make_split(d, 1, policy), g5::ContractError);

  policy.train_fraction = 0.01;  // floor -> zero train nodes
  policy.val_fraction = 0.2;
  CHECK_THROWS_AS(g5::make_split(d, 1, policy), g5::ContractError);
}

TEST_CASE("training ratio samples nest by prefix") {
  g5::GraphDataset d = plain_dataset(200, 4);
  g5::SplitPolicy policy;
  policy.kind = g5::SplitPolicy::Kind::ratio_random;
  policy.train_fraction = 0.35;
  policy.val_fraction = 0.2;
  g5::make_split(d, 5, policy);
  const auto& train = d.split("train");

  auto full = g5::sample_training_ratio(d, 1.0, 9);
  CHECK(full.size() == train.size());
  CHECK(std::set<std::uint32_t>(full.begin(), full.end()) ==
        std::set<std::uint32_t>(train.begin(), train.end()));

  auto half = g5::sample_training_ratio(d, 0.5, 9);
  auto quarter = g5::sample_training_ratio(d, 0.25, 9);
  CHECK(half.size() == train.size() / 2);
  CHECK(quarter.size() == train.size() / 4);
  CHECK(std::equal(quarter.begin(), quarter.end(), half.begin()));
  CHECK(std::equal(half.begin(), half.end(), full.begin()));

  auto half_again = g5::sample_training_ratio(d, 0.5, 9);
  CHECK(half_again == half);
  auto other_seed = g5::sample_training_ratio(d, 0.5, 10);
  CHECK(other_seed != half);

  CHECK_THROWS_AS(g5::sample_training_ratio(d, 0.0, 9), g5::ContractError);
  CHECK_THROWS_AS(g5::sample_training_ratio(d, 1.5, 9), g5::ContractError);
}

TEST_CASE("missing split name is reported") {
  g5::GraphDataset d = plain_dataset(10, 2);
  CHECK_THROWS_AS(d.split("train"), g5::ContractError);
}

}  // TEST_SUITE
