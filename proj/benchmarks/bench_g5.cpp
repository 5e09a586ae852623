#include <benchmark/benchmark.h>

#include <random>

#include "g5/blas.hpp"
#include "g5/model.hpp"
#include "g5/preprocess.hpp"
#include "g5/rng.hpp"
#include "g5/tape.hpp"
#include "g5/training.hpp"

namespace {

g5::Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
  auto rng = g5::make_rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  g5::Tensor t = g5::Tensor::zeros(std::move(shape));
  for (double& x : t.data) x = unif(rng);
  return t;
}

// Ring of n nodes plus a few chords, dense enough for preprocessing work.
g5::GraphDataset ring_graph(std::size_t n, std::size_t feature_dim) {
  g5::GraphDataset d;
  d.id = "bench-ring";
  d.feature_dim = feature_dim;
  d.num_classes = 3;
  auto rng = g5::make_rng(7);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  g5::CsrBuilder fb(feature_dim);
  std::vector<int> labels(n);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t j = 0; j < feature_dim; ++j)
      if (unif(rng) < 0.1) fb.add_entry(j, 1.0);
    fb.finish_row();
    labels[v] = static_cast<int>(v % 3);
  }
  d.features = fb.build();
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  for (std::uint32_t v = 0; v + 1 < n; ++v) edges.push_back({v, v + 1});
  edges.push_back({0, static_cast<std::uint32_t>(n - 1)});
  for (std::uint32_t v = 0; v < n; v += 7)
    edges.push_back({v, static_cast<std::uint32_t>((v + n / 2) % n)});
  g5::finalize_edges(d, std::move(edges));
  d.set_labels(std::move(labels));
  std::vector<std::uint32_t> train;
  for (std::uint32_t v = 0; v < n; v += 2) train.push_back(v);
  d.splits["train"] = std::move(train);
  return d;
}

void BM_matmul(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  g5::Tensor a = random_tensor({n, n}, 1);
  g5::Tensor b = random_tensor({n, n}, 2);
  g5::Tensor c = g5::Tensor::zeros({n, n});
  for (auto _ : state) {
    g5::blas::gemm(false, false, n, n, n, 1.0, a.data.data(), n,
                   b.data.data(), n, 0.0, c.data.data(), n);
    benchmark::DoNotOptimize(c.data.data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_block_attention(benchmark::State& state) {
  const std::size_t blocks = static_cast<std::size_t>(state.range(0));
  const std::size_t block_rows = 8, hidden = 32;
  g5::Tensor q = random_tensor({blocks * block_rows, hidden}, 3);
  g5::Tensor k = random_tensor({blocks * block_rows, hidden}, 4);
  g5::Tensor v = random_tensor({blocks * block_rows, hidden}, 5);
  g5::AttentionSpec spec;
  spec.block_rows = block_rows;
  spec.heads = 2;
  for (auto _ : state) {
    g5::Tape tape(false, 0, false);
    g5::Var out = g5::block_attention(tape.leaf(q), tape.leaf(k),
                                      tape.leaf(v), spec);
    benchmark::DoNotOptimize(tape.val(out).data.data());
  }
}
BENCHMARK(BM_block_attention)->Arg(16)->Arg(128);

void BM_intimacy_row(benchmark::State& state) {
  g5::GraphDataset d = ring_graph(static_cast<std::size_t>(state.range(0)), 8);
  for (auto _ : state) {
    auto row = g5::intimacy_row(d, 0, 0.15);
    benchmark::DoNotOptimize(row.data());
  }
}
BENCHMARK(BM_intimacy_row)->Arg(500)->Arg(2000);

void BM_wl_refine(benchmark::State& state) {
  g5::GraphDataset d = ring_graph(static_cast<std::size_t>(state.range(0)), 8);
  for (auto _ : state) {
    auto codes = g5::wl_refine(d, 2);
    benchmark::DoNotOptimize(codes.data());
  }
}
BENCHMARK(BM_wl_refine)->Arg(500)->Arg(2000);

void BM_subgraph_batch(benchmark::State& state) {
  g5::GraphDataset d = ring_graph(300, 16);
  g5::PreprocessParams params;
  params.context_k = 7;
  for (auto _ : state) {
    auto batch = g5::build_subgraph_batch(d, params);
    benchmark::DoNotOptimize(batch.records.data());
  }
}
BENCHMARK(BM_subgraph_batch);

void BM_classify_epoch(benchmark::State& state) {
  g5::GraphDataset d = ring_graph(60, 16);
  g5::PreprocessParams params;
  params.context_k = 5;
  g5::SubgraphBatch batch = g5::build_subgraph_batch(d, params);
  g5::ModelConfig cfg;
  cfg.hidden = 32;
  g5::ModelState m;
  m.init_core(cfg, params.context_k, 11);
  m.add_graph(d.id, d.feature_dim, d.num_classes, params.context_k);
  g5::Trainer trainer(m);
  trainer.attach(d, batch);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        trainer.train_task(d.id, g5::Task::classify, 1, 0.01, 5e-4));
}
BENCHMARK(BM_classify_epoch);

}  // namespace

BENCHMARK_MAIN();
