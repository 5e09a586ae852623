#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "g5/preprocess.hpp"
#include "g5/posenc.hpp"
#include "g5/rng.hpp"
#include "test_support.hpp"

namespace {

g5::GraphDataset tiny_graph(
    std::size_t n, std::vector<std::pair<std::uint32_t, std::uint32_t>> edges) {
  g5::GraphDataset d;
  d.id = "tiny";
  d.feature_dim = 1;
  d.num_classes = 2;
  g5::CsrBuilder fb(1);
  std::vector<int> labels(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    fb.add_entry(0, 1.0);
    fb.finish_row();
    d.node_names.push_back("n" + std::to_string(i));
  }
  d.features = fb.build();
  d.adjacency.assign(n, {});
  d.set_labels(std::move(labels));
  g5::finalize_edges(d, std::move(edges));
  return d;
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("closeness of a connected pair matches the closed form") {
  g5::GraphDataset d = tiny_graph(2, {{0, 1}});
  g5::Tensor s = g5::compute_intimacy(d, 0.15);
  // S = 0.15 (I - 0.85 A)^{-1} with A = [[0,1],[1,0]].
  const double diag = 0.15 / 0.2775;
  const double off = diag * 0.85;
  CHECK(s.at(0, 0) == doctest::Approx(diag).epsilon(1e-9));
  CHECK(s.at(0, 1) == doctest::Approx(off).epsilon(1e-9));
  CHECK(s.at(1, 0) == doctest::Approx(off).epsilon(1e-9));
  CHECK(s.at(1, 1) == doctest::Approx(diag).epsilon(1e-9));
  CHECK(s.at(0, 0) == doctest::Approx(0.5405405405).epsilon(1e-8));
}

TEST_CASE("transition matrix is column stochastic with self loops on isolates") {
  g5::GraphDataset d = tiny_graph(4, {{0, 1}, {0, 2}});
  g5::Tensor a = g5::normalize_adjacency(d);
  REQUIRE(a.shape == std::vector<std::size_t>{4, 4});
  CHECK(a.at(1, 0) == doctest::Approx(0.5));
  CHECK(a.at(2, 0) == doctest::Approx(0.5));
  CHECK(a.at(0, 1) == doctest::Approx(1.0));
  CHECK(a.at(3, 3) == doctest::Approx(1.0));  // isolated node
  for (std::size_t col = 0; col < 4; ++col) {
    double sum = 0.0;
    for (std::size_t row = 0; row < 4; ++row) sum += a.at(row, col);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("closeness columns sum to one") {
  g5::GraphDataset d = testsupport::community_graph("mass", 2, 10, 8, 3);
  g5::Tensor s = g5::compute_intimacy(d, 0.15);
  const std::size_t n = d.num_nodes();
  for (std::size_t col = 0; col < n; ++col) {
    double sum = 0.0;
    for (std::size_t row = 0; row < n; ++row) sum += s.at(row, col);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("streaming closeness rows agree with the dense solve") {
  g5::GraphDataset d = testsupport::community_graph("rows", 2, 10, 8, 7);
  g5::Tensor s = g5::compute_intimacy(d, 0.15);
  for (std::uint32_t v = 0; v < d.num_nodes(); ++v) {
    std::vector<double> row = g5::intimacy_row(d, v, 0.15);
    REQUIRE(row.size() == d.num_nodes());
    for (std::size_t j = 0; j < row.size(); ++j)
      CHECK(std::abs(row[j] - s.at(v, j)) < 1e-8);
  }
}

TEST_CASE("closeness rejects alpha outside (0, 1)") {
  g5::GraphDataset d = tiny_graph(2, {{0, 1}});
  CHECK_THROWS_AS(g5::compute_intimacy(d, 0.0), g5::ContractError);
  CHECK_THROWS_AS(g5::compute_intimacy(d, 1.0), g5::ContractError);
  CHECK_THROWS_AS(g5::intimacy_row(d, 0, -0.5), g5::ContractError);
}

TEST_CASE("structural codes are permutation equivariant") {
  g5::GraphDataset d = testsupport::community_graph("wl", 3, 8, 6, 11);
  const std::size_t n = d.num_nodes();
  std::vector<std::uint32_t> codes = g5::wl_refine(d, 2);
  REQUIRE(codes.size() == n);

  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  auto rng = g5::make_rng(99);
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  for (auto [u, v] : d.edges) edges.emplace_back(perm[u], perm[v]);
  g5::GraphDataset p = tiny_graph(n, std::move(edges));
  std::vector<std::uint32_t> pcodes = g5::wl_refine(p, 2);

  for (std::uint32_t v = 0; v < n; ++v) CHECK(pcodes[perm[v]] == codes[v]);

  // More rounds refine at least as finely.
  std::vector<std::uint32_t> finer = g5::wl_refine(d, 4);
  const auto distinct = [](std::vector<std::uint32_t> c) {
    std::sort(c.begin(), c.end());
    return std::unique(c.begin(), c.end()) - c.begin();
  };
  CHECK(distinct(finer) >= distinct(codes));
}

TEST_CASE("degree-regular rings collapse to one structural code") {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  const std::uint32_t n = 12;
  for (std::uint32_t v = 0; v < n; ++v) edges.emplace_back(v, (v + 1) % n);
  g5::GraphDataset ring = tiny_graph(n, std::move(edges));
  std::vector<std::uint32_t> codes = g5::wl_refine(ring, 3);
  for (std::uint32_t v = 0; v < n; ++v) CHECK(codes[v] == codes[0]);
}

TEST_CASE("hop distances agree with the dense all-pairs oracle") {
  g5::GraphDataset d = testsupport::community_graph("hops", 2, 9, 6, 13);
  const std::uint32_t n = d.num_nodes();
  const std::uint32_t cap = 20;
  auto fw = testsupport::floyd_warshall(d, cap);

  std::vector<std::uint32_t> targets(n);
  std::iota(targets.begin(), targets.end(), 0u);
  std::vector<std::vector<std::uint32_t>> contexts(n);
  for (std::uint32_t v = 0; v < n; ++v)
    for (std::uint32_t u = 0; u < n; ++u)
      if (u != v) contexts[v].push_back(u);

  auto hops = g5::hop_distances(d, targets, contexts, cap);
  REQUIRE(hops.size() == n);
  for (std::uint32_t v = 0; v < n; ++v)
    for (std::size_t j = 0; j < contexts[v].size(); ++j)
      CHECK(hops[v][j] == std::min(fw[v][contexts[v][j]], cap));
}

TEST_CASE("hop distances respect the cap and disconnection") {
  g5::GraphDataset chain =
      tiny_graph(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});  // node 5 isolated
  auto hops = g5::hop_distances(chain, {0}, {{4, 5, 1}}, 2);
  REQUIRE(hops.size() == 1);
  CHECK(hops[0][0] == 2);  // true distance 4, capped
  CHECK(hops[0][1] == 2);  // unreachable, capped
  CHECK(hops[0][2] == 1);
}

TEST_CASE("context selection orders by score then index") {
  std::vector<double> scores = {0.5, 0.9, 0.9, 0.1, 0.0};
  CHECK(g5::top_k_context(scores, 0, 3) ==
        std::vector<std::uint32_t>{1, 2, 3});
  CHECK(g5::top_k_context(scores, 0, 99) ==
        std::vector<std::uint32_t>{1, 2, 3, 4});
  // The highest scorer is skipped when it is the node itself.
  CHECK(g5::top_k_context(scores, 1, 2) == std::vector<std::uint32_t>{2, 0});
  CHECK(g5::top_k_context(scores, 4, 1) == std::vector<std::uint32_t>{1});
}

TEST_CASE("subgraph batches put the target first with closeness descending") {
  g5::GraphDataset d = testsupport::community_graph("batch", 3, 10, 12, 17);
  g5::PreprocessParams params;
  params.context_k = 7;
  g5::SubgraphBatch b = g5::build_subgraph_batch(d, params);

  CHECK(b.graph_id == d.id);
  CHECK(b.wl_codes.size() == d.num_nodes());
  REQUIRE(b.records.size() == d.num_nodes());
  for (std::uint32_t v = 0; v < d.num_nodes(); ++v) {
    const auto& rec = b.records[v];
    REQUIRE(!rec.nodes.empty());
    CHECK(rec.nodes[0] == v);
    CHECK(rec.nodes.size() <= params.context_k + 1);
    CHECK(rec.nodes.size() == rec.closeness.size());
    CHECK(rec.nodes.size() == rec.hops.size());
    CHECK(rec.hops[0] == 0);
    for (std::size_t j = 2; j < rec.closeness.size(); ++j)
      CHECK(rec.closeness[j] <= rec.closeness[j - 1] + 1e-15);
    std::vector<std::uint32_t> ctx(rec.nodes.begin() + 1, rec.nodes.end());
    std::sort(ctx.begin(), ctx.end());
    CHECK(std::adjacent_find(ctx.begin(), ctx.end()) == ctx.end());
    CHECK(!std::binary_search(ctx.begin(), ctx.end(), v));
  }
}

TEST_CASE("batch cache round trips and keys on its parameters") {
  g5::GraphDataset d = testsupport::community_graph("cache", 2, 8, 6, 19);
  g5::PreprocessParams params;
  params.context_k = 4;
  g5::SubgraphBatch b = g5::build_subgraph_batch(d, params);

  const std::string dir = testsupport::scratch_dir("cache");
  const std::string path = dir + "/" + g5::cache_file_name(d.id, params);
  g5::save_subgraph_batch(b, path);

  CHECK(g5::cache_is_fresh(path, d.id, params));
  g5::PreprocessParams other = params;
  other.context_k = 5;
  CHECK_FALSE(g5::cache_is_fresh(path, d.id, other));
  CHECK_FALSE(g5::cache_is_fresh(path, "different", params));
  CHECK_FALSE(g5::cache_is_fresh(dir + "/absent.g5pc", d.id, params));
  CHECK(g5::cache_file_name(d.id, params) !=
        g5::cache_file_name(d.id, other));

  g5::SubgraphBatch back = g5::load_subgraph_batch(path);
  CHECK(back.graph_id == b.graph_id);
  CHECK(back.params.context_k == b.params.context_k);
  CHECK(back.params.alpha == b.params.alpha);
  CHECK(back.wl_codes == b.wl_codes);
  REQUIRE(back.records.size() == b.records.size());
  for (std::size_t v = 0; v < b.records.size(); ++v) {
    CHECK(back.records[v].nodes == b.records[v].nodes);
    CHECK(back.records[v].hops == b.records[v].hops);
    CHECK(back.records[v].closeness == b.records[v].closeness);
  }
}

TEST_CASE("index encodings alternate sine and cosine") {
  g5::Tensor e0 = g5::position_embedding(0, 8);
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(e0.data[2 * t] == doctest::Approx(0.0));
    CHECK(e0.data[2 * t + 1] == doctest::Approx(1.0));
  }
  g5::Tensor e3 = g5::position_embedding(3, 4);
  CHECK(e3.data[0] == doctest::Approx(std::sin(3.0)));
  CHECK(e3.data[1] == doctest::Approx(std::cos(3.0)));
  CHECK(e3.data[2] == doctest::Approx(std::sin(3.0 / 100.0)));
  CHECK(e3.data[3] == doctest::Approx(std::cos(3.0 / 100.0)));

  g5::Tensor table = g5::position_embedding_table(5, 6);
  REQUIRE(table.shape == std::vector<std::size_t>{6, 6});
  g5::Tensor row4 = g5::position_embedding(4, 6);
  for (std::size_t j = 0; j < 6; ++j)
    CHECK(table.at(4, j) == row4.data[j]);

  CHECK_THROWS_AS(g5::position_embedding(1, 7), g5::ContractError);
}

}  // TEST_SUITE
