#include "bot/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <tuple>
#include <random>
#include <sstream>

namespace bot {

std::string_view to_string(BenchKernel k) { return k == BenchKernel::dense ? "dense" : "sparse"; }

void BenchPlan::validate() const {
  if (trials < 1) throw Error("bench: trials must be >= 1");
  if (d_k < 1) throw Error("bench: d_k must be >= 1");
  if (nodes.empty() || zero_fractions.empty()) throw Error("bench: empty plan");
  for (int n : nodes) {
    if (n < 1) throw Error("bench: node counts must be positive");
    for (double z : zero_fractions) {
      if (z < 0 || z > 1.0 - 1.0 / n + 1e-12) {
        throw Error("bench: zero fraction " + format_double(z) + " invalid for n=" + std::to_string(n));
      }
    }
  }
}

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

AttentionInput random_input(int n, int d_k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  auto fill = [&] {
    Matrix m(n, d_k);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
  };
  AttentionInput in;
  in.q = fill();
  in.k = fill();
  in.v = fill();
  return in;
}

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_ns(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start).count();
}

// Keeps kernel results observable so calls cannot be elided.
volatile double g_sink = 0.0;

struct Cell {
  int n;
  double zf;
};

struct CellRunner {
  int d_k;
  std::uint64_t seed;
  bool timing;
  double c1;
  double c2;

  void warm(const Cell& cell, int warmup) const {
    const AttentionInput in = random_input(cell.n, d_k, mix(seed ^ mix(static_cast<std::uint64_t>(cell.n))));
    const AttentionMask mask = random_mask(cell.n, cell.zf, seed);
    const CompressedMask compressed(mask);
    for (int w = 0; w < warmup; ++w) {
      g_sink = g_sink + dense_masked_attention(in, mask)(0, 0);
      g_sink = g_sink + sparse_masked_attention(in, compressed)(0, 0);
    }
  }

  void trial(const Cell& cell, int t, std::vector<BenchRecord>& out) const {
    const int n = cell.n;
    const auto trial_seed = seed ^ static_cast<std::uint64_t>(t);
    const AttentionMask mask = random_mask(n, cell.zf, trial_seed);
    const AttentionInput in = random_input(n, d_k, mix(trial_seed ^ mix(static_cast<std::uint64_t>(n) << 32)));
    const double achieved = zero_fraction(mask);

    BenchRecord dense{BenchKernel::dense, n, d_k, achieved, t, 0, 0, 0, vanilla_flops({n, d_k, 1.0, c1, c2}).total};
    BenchRecord sparse{BenchKernel::sparse, n, d_k, achieved, t, 0, 0, 0,
                       masked_flops(FlopsModel::for_mask(mask, d_k, c1, c2)).total};

    if (timing) {
      auto time_dense = [&] {
        const auto start = Clock::now();
        g_sink = g_sink + dense_masked_attention(in, mask)(0, 0);
        dense.runtime_ns = std::max<std::int64_t>(1, elapsed_ns(start));
      };
      auto time_sparse = [&] {
        auto start = Clock::now();
        const CompressedMask compressed(mask);
        sparse.preprocess_ns = std::max<std::int64_t>(1, elapsed_ns(start));
        start = Clock::now();
        g_sink = g_sink + sparse_masked_attention(in, compressed)(0, 0);
        sparse.runtime_ns = std::max<std::int64_t>(1, elapsed_ns(start));
      };
      // Alternate which kernel goes first so neither always meets a warm cache.
      if (t % 2 == 0) {
        time_dense();
        time_sparse();
      } else {
        time_sparse();
        time_dense();
      }
    }
    dense.counted_flops = counted_flops(KernelKind::vanilla, in, mask, c1, c2).total;
    sparse.counted_flops = counted_flops(KernelKind::masked, in, mask, c1, c2).total;
    out.push_back(dense);
    out.push_back(sparse);
  }

  // Trials are interleaved across cells so that slow drifts of the host
  // (frequency, neighbours) fall on every cell alike. Output is grouped by
  // cell, in the order given.
  std::vector<BenchRecord> run(const std::vector<Cell>& cells, int trials, int warmup) const {
    if (timing) {
      for (const auto& cell : cells) warm(cell, warmup);
    }
    std::vector<std::vector<BenchRecord>> per_cell(cells.size());
    for (int t = 0; t < trials; ++t) {
      for (size_t c = 0; c < cells.size(); ++c) trial(cells[c], t, per_cell[c]);
    }
    std::vector<BenchRecord> records;
    for (auto& r : per_cell) records.insert(records.end(), r.begin(), r.end());
    return records;
  }
};

}  // namespace

std::vector<BenchRecord> run_scaling_bench(const BenchPlan& plan) {
  plan.validate();
  std::vector<Cell> cells;
  for (double zf : plan.zero_fractions) {
    for (int n : plan.nodes) cells.push_back({n, zf});
  }
  return CellRunner{plan.d_k, plan.seed, plan.timing, plan.c1, plan.c2}.run(cells, plan.trials, plan.warmup);
}

std::vector<double> SweepPlan::grid(int n) const {
  if (!(zf_step > 0)) throw Error("sweep: step must be positive");
  std::vector<double> values;
  const double cap = 1.0 - 1.0 / n;
  for (int k = 0;; ++k) {
    // Computed from k to avoid accumulating step error.
    const double z = zf_min + k * zf_step;
    if (z > zf_max + 1e-9 || z > cap + 1e-12) break;
    values.push_back(z);
  }
  return values;
}

std::vector<BenchRecord> run_sparsity_sweep(const SweepPlan& plan) {
  if (plan.trials < 1) throw Error("sweep: trials must be >= 1");
  if (plan.zf_min < 0) throw Error("sweep: zero fraction must be >= 0");
  std::vector<Cell> cells;
  for (int n : plan.nodes) {
    if (n < 1) throw Error("sweep: node counts must be positive");
    for (double zf : plan.grid(n)) cells.push_back({n, zf});
  }
  return CellRunner{plan.d_k, plan.seed, plan.timing, 1.0, 1.0}.run(cells, plan.trials, 10);
}

std::vector<CellSummary> summarize(const std::vector<BenchRecord>& records) {
  struct Acc {
    CellSummary s;
    double sum = 0, sum_sq = 0, pre = 0, flops = 0, zf = 0;
  };
  std::map<std::tuple<int, int, double>, Acc> cells;
  std::vector<std::tuple<int, int, double>> order;
  for (const auto& r : records) {
    const auto key = std::make_tuple(static_cast<int>(r.kernel), r.n, r.zero_fraction);
    auto [it, inserted] = cells.try_emplace(key);
    if (inserted) order.push_back(key);
    auto& acc = it->second;
    acc.s.kernel = r.kernel;
    acc.s.n = r.n;
    acc.s.trials += 1;
    const auto rt = static_cast<double>(r.runtime_ns);
    acc.sum += rt;
    acc.sum_sq += rt * rt;
    acc.pre += static_cast<double>(r.preprocess_ns);
    acc.flops += r.counted_flops;
    acc.zf += r.zero_fraction;
  }
  std::vector<CellSummary> out;
  for (const auto& key : order) {
    auto acc = cells[key];
    const double k = acc.s.trials;
    acc.s.mean_ns = acc.sum / k;
    const double var = k > 1 ? std::max(0.0, (acc.sum_sq - k * acc.s.mean_ns * acc.s.mean_ns) / (k - 1)) : 0.0;
    acc.s.stderr_ns = std::sqrt(var / k);
    acc.s.mean_preprocess_ns = acc.pre / k;
    acc.s.mean_counted_flops = acc.flops / k;
    acc.s.zero_fraction = acc.zf / k;
    out.push_back(acc.s);
  }
  return out;
}

std::vector<Speedup> speedups(const std::vector<BenchRecord>& records) {
  std::vector<Speedup> out;
  const auto cells = summarize(records);
  for (const auto& dense : cells) {
    if (dense.kernel != BenchKernel::dense) continue;
    for (const auto& sparse : cells) {
      if (sparse.kernel == BenchKernel::sparse && sparse.n == dense.n && sparse.zero_fraction == dense.zero_fraction) {
        out.push_back({dense.n, dense.zero_fraction, dense.mean_ns, sparse.mean_ns,
                       sparse.mean_ns > 0 ? dense.mean_ns / sparse.mean_ns : 0.0});
      }
    }
  }
  return out;
}

std::optional<double> crossover(const std::vector<Speedup>& cells, int n) {
  std::vector<Speedup> row;
  for (const auto& c : cells)
    if (c.n == n) row.push_back(c);
  std::sort(row.begin(), row.end(), [](const Speedup& a, const Speedup& b) { return a.zero_fraction < b.zero_fraction; });
  for (const auto& c : row)
    if (c.sparse_mean_ns < c.dense_mean_ns) return c.zero_fraction;
  return std::nullopt;
}

std::string report_flops(std::int64_t n, std::int64_t d_k, double zero_fraction, double c1, double c2) {
  if (n < 1 || d_k < 1) throw Error("flops: n and d_k must be positive");
  if (!(zero_fraction >= 0.0) || zero_fraction > 1.0 - 1.0 / static_cast<double>(n) + 1e-12) {
    throw Error("flops: zero fraction must lie in [0, 1 - 1/n]");
  }
  const double density = 1.0 - zero_fraction;
  const FlopsModel model{n, d_k, density, c1, c2};
  const auto vanilla = vanilla_flops(model);
  const auto masked = masked_flops(model);

  std::ostringstream out;
  out << "n=" << n << " d_k=" << d_k << " c1=" << format_double(c1) << " c2=" << format_double(c2) << '\n';
  out << "sparsity ζ (zero fraction) = " << format_double(zero_fraction) << '\n';
  out << "density η (nonzero fraction) = " << format_double(density) << '\n';
  out << std::left << std::setw(10) << "stage" << std::right << std::setw(20) << "vanilla" << std::setw(20) << "masked"
      << '\n';
  auto row = [&](const char* name, double a, double b) {
    out << std::left << std::setw(10) << name << std::right << std::setw(20) << format_double(a) << std::setw(20)
        << format_double(b) << '\n';
  };
  row("qk", vanilla.qk, masked.qk);
  row("softmax", vanilla.softmax, masked.softmax);
  row("av", vanilla.av, masked.av);
  row("total", vanilla.total, masked.total);
  out << "ratio vanilla/masked at n: " << format_double(vanilla.total / masked.total) << '\n';
  out << "asymptotic ratio (n -> inf): " << format_double(flops_ratio_limit(d_k, density, c2)) << '\n';
  return out.str();
}

}  // namespace bot
