#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bot/flops.hpp"

namespace bot {

enum class BenchKernel { dense, sparse };

std::string_view to_string(BenchKernel k);

struct BenchRecord {
  BenchKernel kernel = BenchKernel::dense;
  int n = 0;
  int d_k = 0;
  double zero_fraction = 0;  // achieved ζ of the sampled mask
  int trial = 0;
  std::int64_t runtime_ns = 0;
  std::int64_t preprocess_ns = 0;  // mask compression; 0 for dense
  double counted_flops = 0;
  double modeled_flops = 0;

  bool operator==(const BenchRecord&) const = default;
};

struct BenchPlan {
  std::vector<int> nodes{16, 32, 64, 128};
  std::vector<double> zero_fractions{0.908};
  int trials = 10000;
  std::uint64_t seed = 0;
  int d_k = 64;
  int warmup = 10;         // untimed calls per kernel before each cell
  bool timing = true;      // false: counts only, runtime fields 0
  double c1 = 1.0;
  double c2 = 1.0;

  void validate() const;
};

// One record per (n, ζ, trial, kernel); dense and sparse see identical
// inputs. The mask of trial t is random_mask(n, ζ, seed ^ t).
std::vector<BenchRecord> run_scaling_bench(const BenchPlan& plan);

struct SweepPlan {
  std::vector<int> nodes{16, 32, 64};
  double zf_min = 0.0;
  double zf_max = 0.95;
  double zf_step = 0.05;
  int trials = 1000;
  std::uint64_t seed = 0;
  int d_k = 64;
  bool timing = true;

  // Grid values that are valid for n (ζ ≤ 1 − 1/n).
  std::vector<double> grid(int n) const;
};

std::vector<BenchRecord> run_sparsity_sweep(const SweepPlan& plan);

struct CellSummary {
  BenchKernel kernel = BenchKernel::dense;
  int n = 0;
  double zero_fraction = 0;  // mean achieved ζ over trials
  int trials = 0;
  double mean_ns = 0;
  double stderr_ns = 0;
  double mean_preprocess_ns = 0;
  double mean_counted_flops = 0;
};

// Groups records by (kernel, n, requested cell). Records are expected in
// the order the runners emit them.
std::vector<CellSummary> summarize(const std::vector<BenchRecord>& records);

struct Speedup {
  int n = 0;
  double zero_fraction = 0;
  double dense_mean_ns = 0;
  double sparse_mean_ns = 0;
  double ratio = 0;  // dense / sparse
};

std::vector<Speedup> speedups(const std::vector<BenchRecord>& records);

// Smallest grid ζ at which the sparse mean drops below the dense mean.
std::optional<double> crossover(const std::vector<Speedup>& cells, int n);

// Human-readable stage tables for both kernels, the ratio at n and the
// asymptotic limit, labelled with both sparsity conventions.
std::string report_flops(std::int64_t n, std::int64_t d_k, double zero_fraction, double c1 = 1.0, double c2 = 1.0);

inline constexpr std::string_view kCsvHeader =
    "kernel,n,d_k,zero_fraction,trial,runtime_ns,preprocess_ns,counted_flops,modeled_flops";

// Writes the header when the file is new or empty, then appends rows.
void emit_csv(const std::vector<BenchRecord>& records, const std::filesystem::path& path, bool append = false);
std::string to_csv(const std::vector<BenchRecord>& records);
std::vector<BenchRecord> parse_csv(std::string_view text);
std::vector<BenchRecord> load_csv(const std::filesystem::path& path);

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace bot
