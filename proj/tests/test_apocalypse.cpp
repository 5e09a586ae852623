#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "g5/apocalypse.hpp"
#include "test_support.hpp"

using testsupport::random_tensor;

namespace {

double row_norm(const g5::Tensor& t, std::size_t r) {
  double sq = 0.0;
  for (std::size_t j = 0; j < t.shape[1]; ++j) sq += t.at(r, j) * t.at(r, j);
  return std::sqrt(sq);
}

// Simplex rows with a fixed seed.
g5::Tensor random_distributions(std::size_t rows, std::size_t cols,
                                std::uint64_t seed) {
  g5::Tensor t = random_tensor({rows, cols}, seed, 0.05, 1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sum += t.at(r, c);
    for (std::size_t c = 0; c < cols; ++c) t.at(r, c) /= sum;
  }
  return t;
}

struct BankFixture {
  g5::ModelState model;
  g5::Tensor reps;

  BankFixture() {
    g5::ModelConfig cfg;
    cfg.hidden = 8;
    cfg.heads = 2;
    cfg.input_depth = 1;
    cfg.universal_depth = 1;
    cfg.intermediate = 8;
    model.init_core(cfg, 5, 77);
    model.add_graph("src_a", 10, 3, 5);
    model.add_graph("src_b", 12, 4, 5);
    model.add_graph("tgt", 6, 3, 5);
    reps = random_tensor({30, 8}, 5);
  }
};

}  // namespace

TEST_SUITE("apocalypse") {

TEST_CASE("squash keeps every row strictly inside the unit ball") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    g5::Tensor t = random_tensor({6, 5}, seed, -10.0, 10.0);
    for (std::size_t r = 0; r < t.shape[0]; ++r) {
      g5::squash_in_place(t.data.data() + r * t.shape[1], t.shape[1]);
      CHECK(row_norm(t, r) < 1.0);
    }
  }

  // Large rows approach norm one from below: |v| = |s|^2 / (1 + |s|^2).
  g5::Tensor big = g5::Tensor::full({1, 4}, 50.0);
  g5::squash_in_place(big.data.data(), 4);
  CHECK(row_norm(big, 0) < 1.0);
  CHECK(row_norm(big, 0) > 0.999);

  // Zero rows stay zero.
  g5::Tensor zero = g5::Tensor::zeros({1, 4});
  g5::squash_in_place(zero.data.data(), 4);
  for (double v : zero.data) CHECK(v == 0.0);

  // A unit vector halves: |s|/(1+|s|^2) = 1/2.
  g5::Tensor unit = g5::Tensor::zeros({1, 3});
  unit.at(0, 1) = 1.0;
  g5::squash_in_place(unit.data.data(), 3);
  CHECK(unit.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(unit.at(0, 0) == 0.0);
}

TEST_CASE("routing couplings live on the simplex") {
  std::vector<g5::Tensor> units = {random_tensor({7, 4}, 11),
                                   random_tensor({7, 4}, 12),
                                   random_tensor({7, 4}, 13)};
  g5::RoutingResult r = g5::cdr_route(units, 3);
  REQUIRE(r.couplings.shape == std::vector<std::size_t>{7, 3});
  REQUIRE(r.combined.shape == std::vector<std::size_t>{7, 4});
  for (std::size_t i = 0; i < 7; ++i) {
    double sum = 0.0;
    for (std::size_t l = 0; l < 3; ++l) {
      CHECK(r.couplings.at(i, l) > 0.0);
      sum += r.couplings.at(i, l);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(row_norm(r.combined, i) < 1.0);
  }
}

TEST_CASE("one routing iteration keeps the couplings uniform") {
  std::vector<g5::Tensor> units = {random_tensor({5, 4}, 21),
                                   random_tensor({5, 4}, 22)};
  g5::RoutingResult r = g5::cdr_route(units, 1);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t l = 0; l < 2; ++l)
      CHECK(r.couplings.at(i, l) == doctest::Approx(0.5).epsilon(1e-12));

  // And the combination is then just the squashed mean.
  for (std::size_t i = 0; i < 5; ++i) {
    std::vector<double> s(4);
    for (std::size_t j = 0; j < 4; ++j)
      s[j] = 0.5 * (units[0].at(i, j) + units[1].at(i, j));
    g5::squash_in_place(s.data(), 4);
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(r.combined.at(i, j) == doctest::Approx(s[j]).epsilon(1e-12));
  }
}

TEST_CASE("a single unit routes to itself") {
  std::vector<g5::Tensor> units = {random_tensor({4, 3}, 31)};
  g5::RoutingResult r = g5::cdr_route(units, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(r.couplings.at(i, 0) == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<double> s(3);
    for (std::size_t j = 0; j < 3; ++j) s[j] = units[0].at(i, j);
    g5::squash_in_place(s.data(), 3);
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(r.combined.at(i, j) == doctest::Approx(s[j]).epsilon(1e-12));
  }
}

TEST_CASE("routing is equivariant under unit permutation") {
  std::vector<g5::Tensor> units = {random_tensor({6, 4}, 41),
                                   random_tensor({6, 4}, 42),
                                   random_tensor({6, 4}, 43)};
  g5::RoutingResult a = g5::cdr_route(units, 3);
  std::vector<g5::Tensor> swapped = {units[2], units[0], units[1]};
  g5::RoutingResult b = g5::cdr_route(swapped, 3);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(b.couplings.at(i, 1) ==
          doctest::Approx(a.couplings.at(i, 0)).epsilon(1e-12));
    CHECK(b.couplings.at(i, 2) ==
          doctest::Approx(a.couplings.at(i, 1)).epsilon(1e-12));
    CHECK(b.couplings.at(i, 0) ==
          doctest::Approx(a.couplings.at(i, 2)).epsilon(1e-12));
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(b.combined.at(i, j) ==
            doctest::Approx(a.combined.at(i, j)).epsilon(1e-12));
  }
}

TEST_CASE("routing rejects malformed unit stacks") {
  CHECK_THROWS_AS(g5::cdr_route({}, 3), g5::ContractError);
  std::vector<g5::Tensor> units = {random_tensor({4, 3}, 51),
                                   random_tensor({5, 3}, 52)};
  CHECK_THROWS_AS(g5::cdr_route(units, 3), g5::ContractError);
  std::vector<g5::Tensor> ok = {random_tensor({4, 3}, 53)};
  CHECK_THROWS_AS(g5::cdr_route(ok, 0), g5::ContractError);
}

TEST_CASE("the bank reads heads without writing them") {
  BankFixture fx;
  CHECK_THROWS_AS(g5::make_bank(fx.model, {}), g5::ContractError);
  CHECK_THROWS_AS(g5::make_bank(fx.model, {"missing"}), g5::ContractError);

  g5::CrossClassifierBank bank =
      g5::make_bank(fx.model, {"src_a", "src_b"});
  REQUIRE(bank.entries.size() == 2);

  std::vector<g5::Parameter*> head_params;
  fx.model.head("src_a").collect(head_params);
  fx.model.head("src_b").collect(head_params);
  std::vector<double> before;
  for (const g5::Parameter* p : head_params)
    before.insert(before.end(), p->value.data.begin(), p->value.data.end());

  std::vector<g5::Tensor> out = g5::bank_outputs(bank, fx.reps, fx.model.cfg);
  REQUIRE(out.size() == 2);
  CHECK(out[0].shape == std::vector<std::size_t>{30, 3});
  CHECK(out[1].shape == std::vector<std::size_t>{30, 4});
  for (const g5::Tensor& t : out)
    for (std::size_t r = 0; r < t.shape[0]; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < t.shape[1]; ++c) sum += t.at(r, c);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }

  g5::ReasonOptions opts;
  opts.epochs = 5;
  g5::cccm_fit(fx.reps, out, 3, opts);
  g5::cdr_fit(fx.reps, out, 3, opts);

  std::vector<double> after;
  for (const g5::Parameter* p : head_params)
    after.insert(after.end(), p->value.data.begin(), p->value.data.end());
  CHECK(std::memcmp(before.data(), after.data(),
                    before.size() * sizeof(double)) == 0);
}

TEST_CASE("both strategies descend, stay on the simplex and reproduce") {
  const std::size_t nodes = 40, classes = 3;
  const g5::Tensor reps = random_tensor({nodes, 16}, 61);
  const std::vector<g5::Tensor> bank_out = {
      random_distributions(nodes, 4, 62),
      random_distributions(nodes, 5, 63)};

  g5::ReasonOptions opts;
  opts.epochs = 60;
  opts.learning_rate = 0.03;
  opts.seed = 17;

  for (const bool routed : {false, true}) {
    CAPTURE(routed);
    auto fit = [&](const g5::ReasonOptions& o) {
      return routed ? g5::cdr_fit(reps, bank_out, classes, o)
                    : g5::cccm_fit(reps, bank_out, classes, o);
    };
    g5::ReasonedLabels r = fit(opts);

    REQUIRE(r.losses.size() == opts.epochs);
    CHECK(r.losses.back() < r.losses.front());
    REQUIRE(r.distributions.shape ==
            std::vector<std::size_t>{nodes, classes});
    REQUIRE(r.hard.size() == nodes);
    REQUIRE(r.entropy.size() == nodes);

    for (std::size_t i = 0; i < nodes; ++i) {
      double sum = 0.0, best = -1.0;
      int best_c = -1;
      double ent = 0.0;
      for (std::size_t c = 0; c < classes; ++c) {
        const double p = r.distributions.at(i, c);
        CHECK(p > 0.0);
        sum += p;
        if (p > best) {
          best = p;
          best_c = static_cast<int>(c);
        }
        ent -= p * std::log(p);
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(r.hard[i] == best_c);
      CHECK(r.entropy[i] == doctest::Approx(ent).epsilon(1e-9));
      CHECK(r.entropy[i] <= std::log(static_cast<double>(classes)) + 1e-9);
    }

    g5::ReasonedLabels again = fit(opts);
    CHECK(again.losses == r.losses);
    CHECK(std::memcmp(again.distributions.data.data(),
                      r.distributions.data.data(),
                      r.distributions.data.size() * sizeof(double)) == 0);

    g5::ReasonOptions other = opts;
    other.seed = 18;
    g5::ReasonedLabels moved = fit(other);
    CHECK(moved.losses != r.losses);
  }
}

TEST_CASE("argmax ties resolve to the lowest class") {
  g5::ReasonedLabels r;
  r.distributions = g5::Tensor::zeros({2, 3});
  r.distributions.at(0, 0) = 0.4;
  r.distributions.at(0, 1) = 0.4;
  r.distributions.at(0, 2) = 0.2;
  r.distributions.at(1, 0) = 0.1;
  r.distributions.at(1, 1) = 0.2;
  r.distributions.at(1, 2) = 0.7;
  g5::assign_labels(r);
  CHECK(r.hard == std::vector<int>{0, 2});
}

TEST_CASE("fit inputs are validated") {
  const g5::Tensor reps = random_tensor({5, 8}, 71);
  g5::ReasonOptions opts;
  opts.epochs = 1;
  CHECK_THROWS_AS(g5::cccm_fit(reps, {}, 3, opts), g5::ContractError);
  CHECK_THROWS_AS(g5::cdr_fit(reps, {}, 3, opts), g5::ContractError);
  const std::vector<g5::Tensor> misaligned = {random_distributions(4, 3, 72)};
  CHECK_THROWS_AS(g5::cccm_fit(reps, misaligned, 3, opts),
                  g5::ContractError);
  CHECK_THROWS_AS(g5::cdr_fit(reps, misaligned, 3, opts), g5::ContractError);
  const std::vector<g5::Tensor> ok = {random_distributions(5, 3, 73)};
  CHECK_THROWS_AS(g5::cccm_fit(reps, ok, 0, opts), g5::ContractError);
}

TEST_CASE("label export writes one row per node") {
  g5::ReasonedLabels r;
  r.distributions = random_distributions(3, 4, 81);
  g5::assign_labels(r);

  const std::string dir = testsupport::scratch_dir("reasoned");
  const std::string path = dir + "/labels.csv";
  g5::export_reasoned_labels(path, r, {"alpha", "beta", "gamma"});

  std::ifstream f(path);
  REQUIRE(f.good());
  std::string line;
  REQUIRE(std::getline(f, line));
  CHECK(line == "node_id,predicted_class,max_prob,entropy");
  std::size_t rows = 0;
  while (std::getline(f, line)) {
    CHECK(line.rfind(rows == 0 ? "alpha," : (rows == 1 ? "beta," : "gamma,"),
                     0) == 0);
    CHECK(std::count(line.begin(), line.end(), ',') == 3);
    ++rows;
  }
  CHECK(rows == 3);

  // Without names the node index is used.
  const std::string path2 = dir + "/anon.csv";
  g5::export_reasoned_labels(path2, r);
  std::ifstream f2(path2);
  std::getline(f2, line);
  std::getline(f2, line);
  CHECK(line.rfind("0,", 0) == 0);

  CHECK_THROWS_AS(
      g5::export_reasoned_labels(dir + "/no/such/dir/x.csv", r),
      g5::IoError);
}

}  // TEST_SUITE
