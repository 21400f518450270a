#include <benchmark/benchmark.h>

#include <random>

#include "bot/attention.hpp"
#include "bot/encoder.hpp"

namespace {

constexpr double kZeroFraction = 0.908;
constexpr int kDk = 64;

bot::AttentionInput make_input(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  auto fill = [&] { return bot::Matrix(bot::Matrix::NullaryExpr(n, kDk, [&] { return dist(rng); })); };
  return {fill(), fill(), fill()};
}

int nodes_for(const benchmark::State& state) { return static_cast<int>(state.range(0)); }

void BM_DenseMasked(benchmark::State& state) {
  const int n = nodes_for(state);
  const auto in = make_input(n, 1);
  const auto mask = bot::random_mask(n, kZeroFraction, 1);
  for (auto _ : state) benchmark::DoNotOptimize(bot::dense_masked_attention(in, mask));
  state.SetComplexityN(n);
}

void BM_SparseMasked(benchmark::State& state) {
  const int n = nodes_for(state);
  const auto in = make_input(n, 1);
  const bot::CompressedMask mask(bot::random_mask(n, kZeroFraction, 1));
  for (auto _ : state) benchmark::DoNotOptimize(bot::sparse_masked_attention(in, mask));
  state.SetComplexityN(n);
}

void BM_CompressMask(benchmark::State& state) {
  const auto mask = bot::random_mask(nodes_for(state), kZeroFraction, 1);
  for (auto _ : state) benchmark::DoNotOptimize(bot::CompressedMask(mask));
}

// Sparse kernel across mask sparsity at fixed n = 64; range(1) is ζ in percent.
void BM_SparseBySparsity(benchmark::State& state) {
  const int n = nodes_for(state);
  const auto in = make_input(n, 2);
  const bot::CompressedMask mask(bot::random_mask(n, static_cast<double>(state.range(1)) / 100.0, 2));
  for (auto _ : state) benchmark::DoNotOptimize(bot::sparse_masked_attention(in, mask));
}

void BM_EncoderForward(benchmark::State& state) {
  std::vector<bot::NodeSpec> nodes;
  std::vector<bot::Edge> edges;
  const int n = nodes_for(state);
  for (int i = 0; i < n; ++i) {
    nodes.push_back({i, "n" + std::to_string(i), 2, 1, i == 0});
    if (i > 0) edges.emplace_back((i - 1) / 2, i);
  }
  const bot::EmbodimentGraph g(nodes, edges);
  bot::EncoderConfig cfg;
  cfg.variant = state.range(1) == 0 ? bot::Variant::vanilla : bot::Variant::hard;
  cfg.num_layers = 3;
  cfg.d_model = 64;
  cfg.d_ff = 128;
  const bot::EncoderPlan plan(g, cfg);
  const auto params = bot::init_params(g, cfg, 0);
  const bot::Matrix tokens = make_input(n, 3).q;
  for (auto _ : state) benchmark::DoNotOptimize(bot::encoder_forward(tokens, plan, params));
}

}  // namespace

BENCHMARK(BM_DenseMasked)->RangeMultiplier(2)->Range(16, 128)->Complexity();
BENCHMARK(BM_SparseMasked)->RangeMultiplier(2)->Range(16, 128)->Complexity();
BENCHMARK(BM_CompressMask)->RangeMultiplier(2)->Range(16, 128);
BENCHMARK(BM_SparseBySparsity)->ArgsProduct({{64}, {0, 25, 50, 75, 90}});
BENCHMARK(BM_EncoderForward)->ArgsProduct({{16, 64}, {0, 1}});
BENCHMARK_MAIN();
