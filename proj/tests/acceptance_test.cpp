// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances below are fixed requirements.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "bot/bench.hpp"
#include "bot/encoder.hpp"
#include "bot/experiment.hpp"
#include "bot/flops.hpp"
#include "bot/training.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;

namespace {

using bot::Matrix;
using bot::Variant;
using Clock = std::chrono::steady_clock;

constexpr double kKernelRelTol = 1e-6;
constexpr double kKernelSuiteSeconds = 120;
constexpr double kMinSpeedupAt128 = 1.2;
constexpr double kLimitRelTol = 0.01;
constexpr double kFormulaSeconds = 1;
constexpr double kFieldSuiteSeconds = 60;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradSuiteSeconds = 120;
constexpr double kDegeneracyTol = 1e-10;
constexpr double kSigma = 0.01;
constexpr double kValThreshold = 2 * kSigma * kSigma;
constexpr int kEpochs = 200;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  bool pass = true;
  std::string summary;
};

void detail(const std::string& s) { std::cout << "    " << s << '\n'; }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

fs::path out_dir() {
  fs::path dir = fs::path(BOT_ACCEPTANCE_OUT) / "acceptance";
  fs::create_directories(dir);
  return dir;
}

// 1 ----------------------------------------------------------------------
Outcome kernel_equivalence() {
  Outcome o;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> n_dist(4, 128), d_dist(4, 64);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto start = Clock::now();
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = n_dist(rng), d = d_dist(rng);
    const bot::AttentionInput in{oracle::random_matrix(n, d, rng), oracle::random_matrix(n, d, rng),
                                 oracle::random_matrix(n, d, rng)};
    const auto mask = bot::random_mask(n, u(rng) * (1.0 - 1.0 / n), rng());
    worst = std::max(worst, oracle::rel_error(bot::sparse_masked_attention(in, mask), bot::dense_masked_attention(in, mask)));
  }
  const double elapsed = seconds_since(start);
  detail("1000 instances: max relative deviation " + fmt(worst) + " (limit 1e-6), " + fmt(elapsed) + " s");
  o.pass = worst <= kKernelRelTol && elapsed <= kKernelSuiteSeconds;

  bot::BenchPlan plan;  // n ∈ {16,32,64,128}, ζ = 0.908, d_k = 64, 10000 trials
  const auto records = bot::run_scaling_bench(plan);
  bot::emit_csv(records, out_dir() / "bench_scaling.csv");
  const auto speed = bot::speedups(records);
  bool monotone = true;
  std::string ratios;
  for (size_t i = 0; i < speed.size(); ++i) {
    ratios += " n=" + std::to_string(speed[i].n) + ":" + fmt(speed[i].ratio);
    if (i > 0 && speed[i].ratio < speed[i - 1].ratio) monotone = false;
  }
  const double at128 = speed.empty() ? 0.0 : speed.back().ratio;
  detail("dense/sparse mean runtime ratio (10000 trials per n):" + ratios);
  o.pass = o.pass && at128 >= kMinSpeedupAt128 && monotone && speed.size() == 4;
  o.summary = "kernel equivalence max rel " + fmt(worst) + "; speedup at n=128 " + fmt(at128) +
              (monotone ? ", non-decreasing in n" : ", NOT monotone in n");
  return o;
}

// 2 ----------------------------------------------------------------------
Outcome flop_exactness() {
  Outcome o;
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> n_dist(1, 128), d_dist(1, 64);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int mismatches = 0;
  for (int cell = 0; cell < 200; ++cell) {
    const int n = n_dist(rng), d = d_dist(rng);
    const double c1 = 1 + cell % 3, c2 = 1 + cell % 5;
    const bot::AttentionInput in{oracle::random_matrix(n, d, rng), oracle::random_matrix(n, d, rng),
                                 oracle::random_matrix(n, d, rng)};
    const auto mask = bot::random_mask(n, u(rng) * (1.0 - 1.0 / n), rng());
    const double beta = static_cast<double>(mask.nonzeros()) / (static_cast<double>(n) * n);
    const double vanilla = bot::counted_flops(bot::KernelKind::vanilla, in, mask, c1, c2).total;
    const double masked = bot::counted_flops(bot::KernelKind::masked, in, mask, c1, c2).total;
    // Integer equality with the quoted totals; βn² is an integer count.
    const double nnz = static_cast<double>(mask.nonzeros());
    const double quoted_masked = 2 * nnz * d + 2.0 * n * n * d + (2 + c2) * nnz - 1.0 * n * d - n + c1;
    if (vanilla != oracle::quoted_vanilla_total(n, d, c1, c2) || masked != quoted_masked) ++mismatches;
    if (std::abs(quoted_masked - oracle::quoted_masked_total(n, d, beta, c1, c2)) > 1e-6 * quoted_masked) ++mismatches;
    if (vanilla != bot::vanilla_flops({n, d, 1.0, c1, c2}).total ||
        masked != bot::masked_flops(bot::FlopsModel::for_mask(mask, d, c1, c2)).total) {
      ++mismatches;
    }
  }
  detail("200 random cells, counted vs quoted totals: " + std::to_string(mismatches) + " mismatches");

  const auto start = Clock::now();
  double worst_gap = 0.0;
  for (int d : {8, 64, 256})
    for (double eta : {0.092, 0.3, 0.7})
      for (double c2 : {1.0, 10.0}) {
        const double limit = bot::flops_ratio_limit(d, eta, c2);
        const double at4096 =
            bot::vanilla_flops({4096, d, 1.0, 1, c2}).total / bot::masked_flops({4096, d, eta, 1, c2}).total;
        worst_gap = std::max(worst_gap, std::abs(at4096 - limit) / limit);
      }
  const double elapsed = seconds_since(start);
  detail("ratio at n=4096 vs limit: worst relative gap " + fmt(worst_gap) + " in " + fmt(elapsed) + " s");
  o.pass = mismatches == 0 && worst_gap <= kLimitRelTol && elapsed < kFormulaSeconds;
  o.summary = "FLOP model exact on 200 cells, limit gap " + fmt(worst_gap) + " at n=4096";
  return o;
}

// 3 ----------------------------------------------------------------------
Outcome receptive_field() {
  Outcome o;
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> n_dist(2, 12);
  const auto start = Clock::now();
  int checks = 0, failures = 0, full_checks = 0;
  for (int kind = 0; kind < 2; ++kind) {
    for (int k = 0; k < 50; ++k) {
      const int n = n_dist(rng);
      const auto g = oracle::random_graph(n, kind == 0, rng);
      const auto dist = oracle::all_pairs_distances(n, g.edges());
      const int diam = bot::diameter(g);
      for (int layers = 1; layers <= 3; ++layers) {
        bot::EncoderConfig cfg;
        cfg.variant = Variant::hard;
        cfg.num_layers = layers;
        cfg.d_model = 8;
        cfg.d_ff = 16;
        const bot::EncoderPlan plan(g, cfg);
        const auto params = bot::init_params(g, cfg, static_cast<std::uint64_t>(k));
        const Matrix tokens = oracle::random_matrix(n, 8, rng);
        for (int node = 0; node < n; ++node) {
          const auto measured = bot::measured_receptive_field(plan, params, tokens, node);
          ++checks;
          if (measured != oracle::ball(dist, node, layers) || measured != bot::receptive_field(g, cfg, node)) ++failures;
          if (layers >= diam) {
            ++full_checks;
            if (static_cast<int>(measured.size()) != n) ++failures;
          }
        }
      }
    }
  }
  const double elapsed = seconds_since(start);
  detail(std::to_string(checks) + " node/depth checks (" + std::to_string(full_checks) + " with L >= diameter), " +
         std::to_string(failures) + " failures, " + fmt(elapsed) + " s");
  o.pass = failures == 0 && elapsed <= kFieldSuiteSeconds;
  o.summary = "measured dependencies equal radius-L balls on 50 trees + 50 graphs";
  return o;
}

// 4 ----------------------------------------------------------------------
Outcome gradients() {
  Outcome o;
  const auto start = Clock::now();
  const bot::EmbodimentGraph g({{0, "root", 3, 1, true}, {1, "a", 2, 1, false}, {2, "b", 1, 2, false}, {3, "c", 2, 1, false}},
                               {{0, 1}, {1, 2}, {2, 3}});
  const auto alloc = bot::contiguous_allocation(g);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto draw = [&] {
    std::vector<bot::Sample> batch;
    for (int s = 0; s < 3; ++s) {
      bot::Sample sample{bot::Vector::NullaryExpr(alloc.observation_width(), [&] { return nd(rng); }),
                         bot::Vector::NullaryExpr(alloc.action_width(), [&] { return nd(rng); }), std::nullopt};
      if (s == 1) sample.value = -0.4;
      batch.push_back(sample);
    }
    return batch;
  };
  double worst = 0.0;
  std::string worst_name;
  auto note = [&](const std::string& model, const std::vector<oracle::GroupError>& errors) {
    for (const auto& e : errors)
      if (e.relative > worst) {
        worst = e.relative;
        worst_name = model + "/" + e.name;
      }
  };
  for (Variant v : {Variant::vanilla, Variant::hard, Variant::mix, Variant::soft, Variant::hard_random}) {
    bot::EncoderConfig cfg;
    cfg.variant = v;
    cfg.num_layers = 2;
    cfg.d_model = 8;
    cfg.d_ff = 16;
    cfg.use_positional_encoding = true;
    cfg.random_mask_seed = 1;
    const bot::EncoderPlan plan(g, cfg);
    auto params = bot::init_params(g, cfg, 11);
    std::normal_distribution<double> jitter(0.0, 0.1);
    params.for_each([&](const std::string&, Matrix& m) {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += jitter(rng);
    });
    const bot::TransformerModel model{&g, &alloc, &plan};
    note(std::string(bot::to_string(v)), oracle::gradient_check(model, params, oracle::smooth_batch(model, params, draw)));
  }
  bot::MlpConfig mlp;
  mlp.d_model = 8;
  mlp.hidden = {8, 8};
  const bot::MlpModel mlp_model{&g, &alloc};
  const auto mlp_params = bot::init_mlp(g, mlp, 3);
  note("mlp", oracle::gradient_check(mlp_model, mlp_params, oracle::smooth_batch(mlp_model, mlp_params, draw)));
  const double elapsed = seconds_since(start);
  detail("worst group relative error " + fmt(worst) + " (" + worst_name + "), " + fmt(elapsed) + " s");
  o.pass = worst <= kGradRelTol && elapsed <= kGradSuiteSeconds;
  o.summary = "analytic vs finite-difference gradients, 5 variants + MLP, worst " + fmt(worst);
  return o;
}

// 5 ----------------------------------------------------------------------
Outcome degeneracies() {
  Outcome o;
  std::mt19937_64 rng(31);
  double hard = 0, soft = 0, mix = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 3 + trial % 6;
    const auto complete = oracle::complete(n);
    const auto tree = oracle::random_graph(n, true, rng);
    bot::EncoderConfig cfg;
    cfg.num_layers = 3;
    cfg.d_model = 8;
    cfg.d_ff = 16;
    const Matrix tokens = oracle::random_matrix(n, 8, rng);

    cfg.variant = Variant::vanilla;
    auto p = bot::init_params(complete, cfg, trial);
    std::normal_distribution<double> jitter(0.0, 0.1);
    p.for_each([&](const std::string&, Matrix& m) {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += jitter(rng);
    });
    const Matrix vanilla = bot::encoder_forward(tokens, complete, cfg, p);
    cfg.variant = Variant::hard;
    hard = std::max(hard, oracle::max_abs(bot::encoder_forward(tokens, complete, cfg, p) - vanilla));
    cfg.variant = Variant::mix;
    mix = std::max(mix, oracle::max_abs(bot::encoder_forward(tokens, complete, cfg, p) - vanilla));

    cfg.variant = Variant::soft;
    auto sp = bot::init_params(tree, cfg, trial);
    const Matrix soft_out = bot::encoder_forward(tokens, tree, cfg, sp);
    cfg.variant = Variant::vanilla;
    soft = std::max(soft, oracle::max_abs(soft_out - bot::encoder_forward(tokens, tree, cfg, sp)));
  }
  detail("max |difference| from Vanilla: hard/complete " + fmt(hard) + ", soft/zero-bias " + fmt(soft) +
         ", mix/complete " + fmt(mix));
  o.pass = hard <= kDegeneracyTol && soft <= kDegeneracyTol && mix <= kDegeneracyTol;
  o.summary = "Hard, Soft(B=0) and Mix reduce to Vanilla within 1e-10";
  return o;
}

// 6 ----------------------------------------------------------------------
Outcome synthetic_bc() {
  Outcome o;
  auto cfg = bot::load_experiment(std::string(BOT_DATA_DIR) + "/hard_vs_random.json");
  cfg.noise = kSigma;
  cfg.radius = 1;
  cfg.num_layers = 3;
  cfg.train.epochs = kEpochs;
  const auto graph = bot::load_graph(cfg.graph_path);
  const auto task = bot::generate_task(graph, cfg.radius, cfg.noise, cfg.sizes, cfg.task_seed);
  const auto runs = bot::run_experiment(cfg, task);
  {
    std::ofstream csv(out_dir() / "bc_curves.csv");
    csv << bot::curves_csv(runs);
  }
  const auto summary = bot::summarize_runs(runs);
  std::istringstream table(bot::summary_table(summary));
  for (std::string line; std::getline(table, line);) detail(line);
  int hard_runs = 0;
  bool all_below = true;
  for (const auto& r : runs) {
    if (r.variant != "hard") continue;
    ++hard_runs;
    detail("hard seed " + std::to_string(r.seed) + ": final val MSE " + fmt(r.final.val_mse));
    if (!(r.final.val_mse <= kValThreshold)) all_below = false;
  }
  const bool has_random = std::any_of(summary.begin(), summary.end(), [](const auto& s) { return s.variant == "hard-random"; });
  o.pass = hard_runs == 5 && all_below && has_random;
  o.summary = "BoT-Hard L=3 on chain-8: all 5 seeds reach val MSE <= 2e-4 in 200 epochs; table written";
  return o;
}

// 7 ----------------------------------------------------------------------
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Blanks runtime_ns and preprocess_ns in benchmark CSV text.
std::string without_runtime(const std::string& csv) {
  std::istringstream in(csv);
  std::ostringstream out;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() == 9 && f[0] != "kernel") f[5] = f[6] = "-";
    for (size_t i = 0; i < f.size(); ++i) out << (i ? "," : "") << f[i];
    out << '\n';
  }
  return out.str();
}

Outcome determinism() {
  Outcome o;
  const fs::path dir = out_dir() / "determinism";
  fs::create_directories(dir);
  const std::string cli = BOT_CLI_PATH;
  const std::string data = BOT_DATA_DIR;
  struct Command {
    std::string name;
    std::string args;  // {out} is replaced by the run's output file
    bool bench_csv;
  };
  const std::vector<Command> commands{
      {"mask-build", "mask build --graph " + data + "/a1.json --out {out}", false},
      {"mask-random", "mask random --nodes 32 --zero-fraction 0.908 --seed 3 --out {out}", false},
      {"bench-scaling", "bench scaling --nodes 16,32 --zero-fraction 0.908 --dk 16 --trials 20 --seed 0 --out {out}", true},
      {"bench-sparsity", "bench sparsity --nodes 8,16 --zf-min 0 --zf-max 0.8 --zf-step 0.2 --trials 5 --seed 1 --out {out}",
       true},
      {"flops", "flops --nodes 128 --dk 64 --zero-fraction 0.908 --c1 2 --c2 3", false},
      {"train", "train --graph " + data + "/chain8.json --variant hard-random --layers 2 --radius 1 --seed 4 --epochs 2 " +
                    "--train-samples 64 --val-samples 16 --out {out}", false},
      {"train-mlp", "train --graph " + data + "/chain8.json --variant mlp --layers 2 --radius 1 --seed 4 --epochs 2 " +
                        "--train-samples 64 --val-samples 16 --out {out}", false},
      {"eval", "eval receptive-field --graph " + data + "/a1.json --variant hard --layers 2 --node 3 --measure", false},
  };
  int failures = 0;
  for (const auto& c : commands) {
    std::string outputs[2];
    for (int run = 0; run < 2; ++run) {
      const fs::path file = dir / (c.name + "_" + std::to_string(run) + ".out");
      const fs::path log = dir / (c.name + "_" + std::to_string(run) + ".stdout");
      fs::remove(file);
      std::string args = c.args;
      if (const auto pos = args.find("{out}"); pos != std::string::npos) args.replace(pos, 5, file.string());
      const int status = std::system((cli + " " + args + " > " + log.string() + " 2>&1").c_str());
      if (status != 0) {
        detail(c.name + ": exit status " + std::to_string(status));
        ++failures;
      }
      std::string content = fs::exists(file) ? slurp(file) : std::string();
      // Benchmark stdout carries timings; everything else is compared verbatim.
      if (!c.bench_csv) content += "\n--stdout--\n" + slurp(log);
      outputs[run] = c.bench_csv ? without_runtime(content) : content;
    }
    if (outputs[0] != outputs[1] || outputs[0].empty()) {
      detail(c.name + ": outputs differ between runs");
      ++failures;
    }
  }
  // Bad input must fail with a one-line diagnostic.
  const fs::path err = dir / "error.stderr";
  const int status =
      std::system((cli + " mask random --nodes 4 --zero-fraction 0.9 --out " + (dir / "x").string() + " 2> " + err.string()).c_str());
  const std::string diag = slurp(err);
  const bool one_line = !diag.empty() && std::count(diag.begin(), diag.end(), '\n') == 1;
  if (status == 0 || !one_line) {
    detail("invalid zero fraction: expected nonzero exit and one-line diagnostic");
    ++failures;
  }
  detail(std::to_string(commands.size()) + " commands run twice, " + std::to_string(failures) + " failures");
  o.pass = failures == 0;
  o.summary = "CLI outputs byte-identical across runs (runtime columns exempt)";
  return o;
}

// 8 ----------------------------------------------------------------------
Outcome csv_schema() {
  Outcome o;
  bot::BenchPlan plan;
  plan.nodes = {4, 16, 64};
  plan.zero_fractions = {0.0, 0.5, 0.7};
  plan.trials = 30;
  plan.d_k = 8;
  plan.warmup = 1;
  const auto records = bot::run_scaling_bench(plan);
  const fs::path path = out_dir() / "roundtrip.csv";
  bot::emit_csv(records, path);
  const auto loaded = bot::load_csv(path);
  const bool same = loaded == records;
  const fs::path again = out_dir() / "roundtrip_again.csv";
  bot::emit_csv(loaded, again);
  const bool bytes = slurp(path) == slurp(again);

  const fs::path cli_csv = out_dir() / "determinism" / "bench-sweep-schema.csv";
  const int status = std::system((std::string(BOT_CLI_PATH) + " bench sparsity --nodes 8 --trials 3 --zf-step 0.25 --out " +
                                  cli_csv.string() + " > /dev/null")
                                     .c_str());
  bool cli_ok = status == 0;
  if (cli_ok) {
    const auto cli_records = bot::load_csv(cli_csv);
    cli_ok = !cli_records.empty() && bot::to_csv(cli_records) == slurp(cli_csv);
  }
  detail(std::to_string(records.size()) + " records: parse(emit) equal " + (same ? "yes" : "no") +
         ", re-emit byte-identical " + (bytes ? "yes" : "no") + ", CLI file round-trips " + (cli_ok ? "yes" : "no"));
  o.pass = same && bytes && cli_ok;
  o.summary = "benchmark CSV round-trips with zero loss";
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{{1, kernel_equivalence}, {2, flop_exactness}, {3, receptive_field},
                                        {4, gradients},          {5, degeneracies},   {6, synthetic_bc},
                                        {7, determinism},        {8, csv_schema}};
  int failed = 0;
  for (const auto& c : criteria) {
    std::cout << "criterion " << c.id << '\n';
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << ": " << o.summary << std::endl;
    if (!o.pass) ++failed;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << '\n';
  return failed == 0 ? 0 : 1;
}
