// bot: command-line front end for masks, kernel benchmarks, FLOP reports,
// synthetic imitation training and receptive-field queries.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "bot/bench.hpp"
#include "bot/checkpoint.hpp"
#include "bot/encoder.hpp"
#include "bot/experiment.hpp"
#include "bot/flops.hpp"
#include "bot/graph.hpp"
#include "bot/training.hpp"

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw bot::Error("cannot write " + path);
  out << text;
  if (!out) throw bot::Error("write failed for " + path);
}

void print_cells(const std::vector<bot::BenchRecord>& records) {
  std::cout << std::left << std::setw(8) << "kernel" << std::right << std::setw(6) << "n" << std::setw(10) << "zeta"
            << std::setw(8) << "trials" << std::setw(14) << "mean_ns" << std::setw(12) << "stderr_ns" << std::setw(14)
            << "prep_ns" << std::setw(16) << "flops" << '\n';
  for (const auto& c : bot::summarize(records)) {
    std::cout << std::left << std::setw(8) << bot::to_string(c.kernel) << std::right << std::setw(6) << c.n
              << std::setw(10) << std::fixed << std::setprecision(4) << c.zero_fraction << std::setw(8) << c.trials
              << std::setw(14) << std::setprecision(1) << c.mean_ns << std::setw(12) << c.stderr_ns << std::setw(14)
              << c.mean_preprocess_ns << std::setw(16) << std::setprecision(0) << c.mean_counted_flops << '\n';
  }
  std::cout.unsetf(std::ios::floatfield);
}

struct TrainArgs {
  std::string graph;
  std::string config;
  std::string variant = "hard";
  int layers = 3;
  int heads = 2;
  int d_model = 16;
  int d_ff = 32;
  int radius = 1;
  double sigma = 0.01;
  int train_samples = 2048;
  int val_samples = 256;
  std::uint64_t task_seed = 0;
  std::uint64_t seed = 0;
  int seeds = 1;
  int epochs = 200;
  double lr = 1e-3;
  int batch = 32;
  std::string optimizer = "adam";
  bool positional = false;
  bool shared_tokenizer = false;
  std::string out = "results.csv";
  std::string checkpoint;
};

int run_train(const TrainArgs& a) {
  bot::ExperimentConfig cfg;
  if (!a.config.empty()) {
    cfg = bot::load_experiment(a.config);
  } else {
    if (a.graph.empty()) throw bot::Error("train: --graph or --config is required");
    cfg.graph_path = a.graph;
    cfg.radius = a.radius;
    cfg.noise = a.sigma;
    cfg.sizes = {a.train_samples, a.val_samples};
    cfg.task_seed = a.task_seed;
    cfg.variants = {a.variant};
    cfg.num_layers = a.layers;
    cfg.num_heads = a.heads;
    cfg.d_model = a.d_model;
    cfg.d_ff = a.d_ff;
    cfg.positional_encoding = a.positional;
    cfg.shared_tokenizer = a.shared_tokenizer;
    cfg.train.learning_rate = a.lr;
    cfg.train.batch_size = a.batch;
    cfg.train.epochs = a.epochs;
    if (a.optimizer == "sgd") {
      cfg.train.optimizer = bot::OptimizerKind::sgd;
    } else if (a.optimizer != "adam") {
      throw bot::Error("train: unknown optimizer '" + a.optimizer + "'");
    }
    cfg.seeds.clear();
    for (int k = 0; k < a.seeds; ++k) cfg.seeds.push_back(a.seed + static_cast<std::uint64_t>(k));
  }
  const auto graph = bot::load_graph(cfg.graph_path);
  const auto task = bot::generate_task(graph, cfg.radius, cfg.noise, cfg.sizes, cfg.task_seed);
  const auto runs = bot::run_experiment(cfg, task);
  write_text(a.out, bot::curves_csv(runs));
  std::cout << bot::summary_table(bot::summarize_runs(runs));

  if (!a.checkpoint.empty()) {
    const auto model = bot::model_for(cfg, graph, cfg.variants.front(), cfg.seeds.front());
    const auto* enc = std::get_if<bot::EncoderConfig>(&model);
    if (!enc) throw bot::Error("train: checkpoints are written for encoder variants only");
    bot::TrainConfig tc = cfg.train;
    tc.seed = cfg.seeds.front();
    const auto result = bot::train(task, model, tc);
    bot::save_checkpoint(a.checkpoint, graph, *enc, std::get<bot::ParameterStore>(result.policy.params));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Body Transformer toolkit: embodiment masks, masked attention benchmarks, FLOP model, training"};
  app.require_subcommand(1);

  // mask
  auto* mask = app.add_subcommand("mask", "Build or sample attention masks");
  mask->require_subcommand(1);
  std::string graph_path, out_path;
  auto* mask_build = mask->add_subcommand("build", "Mask I + A of an embodiment graph");
  mask_build->add_option("--graph", graph_path, "Graph spec file (JSON)")->required();
  mask_build->add_option("--out", out_path, "Output mask file")->required();

  int mask_nodes = 0;
  double mask_zf = 0;
  std::uint64_t mask_seed = 0;
  auto* mask_random = mask->add_subcommand("random", "Random symmetric mask with unit diagonal");
  mask_random->add_option("--nodes", mask_nodes, "Mask size n")->required();
  mask_random->add_option("--zero-fraction", mask_zf, "Fraction of zero entries")->required();
  mask_random->add_option("--seed", mask_seed, "Random seed");
  mask_random->add_option("--out", out_path, "Output mask file")->required();

  // bench
  auto* bench = app.add_subcommand("bench", "Time dense vs sparse masked attention");
  bench->require_subcommand(1);
  bot::BenchPlan plan;
  std::string bench_out = "bench.csv";
  bool no_timing = false;
  double scaling_zf = 0.908;
  auto* scaling = bench->add_subcommand("scaling", "Runtime over node counts at fixed sparsity");
  scaling->add_option("--nodes", plan.nodes, "Node counts")->delimiter(',');
  scaling->add_option("--zero-fraction", scaling_zf, "Mask zero fraction");
  scaling->add_option("--dk", plan.d_k, "Head dimension");
  scaling->add_option("--trials", plan.trials, "Trials per node count");
  scaling->add_option("--seed", plan.seed, "Random seed");
  scaling->add_option("--warmup", plan.warmup, "Untimed warm-up calls per cell");
  scaling->add_flag("--no-timing", no_timing, "Count FLOPs only; runtime columns are 0");
  scaling->add_option("--out", bench_out, "CSV output");

  bot::SweepPlan sweep;
  std::string sweep_out = "sweep.csv";
  auto* sparsity = bench->add_subcommand("sparsity", "Runtime over a zero-fraction grid");
  sparsity->add_option("--nodes", sweep.nodes, "Node counts")->delimiter(',');
  sparsity->add_option("--zf-min", sweep.zf_min, "Smallest zero fraction");
  sparsity->add_option("--zf-max", sweep.zf_max, "Largest zero fraction");
  sparsity->add_option("--zf-step", sweep.zf_step, "Grid step");
  sparsity->add_option("--dk", sweep.d_k, "Head dimension");
  sparsity->add_option("--trials", sweep.trials, "Trials per cell");
  sparsity->add_option("--seed", sweep.seed, "Random seed");
  sparsity->add_flag("--no-timing", no_timing, "Count FLOPs only; runtime columns are 0");
  sparsity->add_option("--out", sweep_out, "CSV output");

  // flops
  std::int64_t flops_n = 0, flops_dk = 0;
  double flops_zf = 0, c1 = 1, c2 = 1;
  auto* flops = app.add_subcommand("flops", "Analytical FLOP breakdown, vanilla vs masked");
  flops->add_option("--nodes", flops_n, "Sequence length n")->required();
  flops->add_option("--dk", flops_dk, "Head dimension d_k")->required();
  flops->add_option("--zero-fraction", flops_zf, "Mask zero fraction")->required();
  flops->add_option("--c1", c1, "FLOPs per square root");
  flops->add_option("--c2", c2, "FLOPs per exponential");

  // train
  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Behavioral cloning on a synthetic graph-local task");
  train->add_option("--graph", ta.graph, "Graph spec file");
  train->add_option("--config", ta.config, "Experiment config (JSON); overrides the flags below");
  train->add_option("--variant", ta.variant, "hard|mix|soft|vanilla|hard-random|mlp");
  train->add_option("--layers", ta.layers, "Encoder layers");
  train->add_option("--heads", ta.heads, "Attention heads");
  train->add_option("--d-model", ta.d_model, "Embedding width");
  train->add_option("--d-ff", ta.d_ff, "Feedforward width");
  train->add_option("--radius", ta.radius, "Teacher locality radius");
  train->add_option("--sigma", ta.sigma, "Target noise standard deviation");
  train->add_option("--train-samples", ta.train_samples, "Training set size");
  train->add_option("--val-samples", ta.val_samples, "Validation set size");
  train->add_option("--task-seed", ta.task_seed, "Seed of the synthetic task");
  train->add_option("--seed", ta.seed, "Training seed (first of --seeds)");
  train->add_option("--seeds", ta.seeds, "Number of consecutive seeds");
  train->add_option("--epochs", ta.epochs, "Epochs");
  train->add_option("--lr", ta.lr, "Learning rate");
  train->add_option("--batch", ta.batch, "Batch size");
  train->add_option("--optimizer", ta.optimizer, "adam|sgd");
  train->add_flag("--positional", ta.positional, "Learned positional embeddings");
  train->add_flag("--shared-tokenizer", ta.shared_tokenizer, "One tokenizer shared by all nodes");
  train->add_option("--out", ta.out, "Loss-curve CSV");
  train->add_option("--checkpoint", ta.checkpoint, "Write trained parameters of the first run");

  // eval
  auto* eval = app.add_subcommand("eval", "Inspect model structure");
  eval->require_subcommand(1);
  std::string rf_variant = "hard";
  int rf_layers = 1, rf_node = 0;
  bool rf_measure = false;
  auto* rf = eval->add_subcommand("receptive-field", "Input nodes an output node can depend on");
  rf->add_option("--graph", graph_path, "Graph spec file")->required();
  rf->add_option("--variant", rf_variant, "Encoder variant");
  rf->add_option("--layers", rf_layers, "Encoder layers");
  rf->add_option("--node", rf_node, "Output node index")->required();
  rf->add_flag("--measure", rf_measure, "Also measure dependencies by perturbation");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*mask_build) {
      std::ostringstream text;
      bot::write_mask(text, bot::build_mask(bot::load_graph(graph_path)));
      write_text(out_path, text.str());
    } else if (*mask_random) {
      std::ostringstream text;
      bot::write_mask(text, bot::random_mask(mask_nodes, mask_zf, mask_seed));
      write_text(out_path, text.str());
    } else if (*scaling) {
      plan.zero_fractions = {scaling_zf};
      plan.timing = !no_timing;
      const auto records = bot::run_scaling_bench(plan);
      bot::emit_csv(records, bench_out);
      print_cells(records);
      for (const auto& s : bot::speedups(records)) {
        std::cout << "speedup n=" << s.n << " dense/sparse=" << std::fixed << std::setprecision(3) << s.ratio << '\n';
      }
    } else if (*sparsity) {
      sweep.timing = !no_timing;
      const auto records = bot::run_sparsity_sweep(sweep);
      bot::emit_csv(records, sweep_out);
      print_cells(records);
      const auto cells = bot::speedups(records);
      for (int n : sweep.nodes) {
        const auto z = bot::crossover(cells, n);
        std::cout << "crossover n=" << n << " zeta*=" << (z ? bot::format_double(*z) : std::string("none")) << '\n';
      }
    } else if (*flops) {
      std::cout << bot::report_flops(flops_n, flops_dk, flops_zf, c1, c2);
    } else if (*train) {
      return run_train(ta);
    } else if (*rf) {
      const auto graph = bot::load_graph(graph_path);
      bot::EncoderConfig cfg;
      cfg.variant = bot::parse_variant(rf_variant);
      cfg.num_layers = rf_layers;
      const auto field = bot::receptive_field(graph, cfg, rf_node);
      std::cout << "predicted:";
      for (int v : field) std::cout << ' ' << v;
      std::cout << '\n';
      if (rf_measure) {
        const auto params = bot::init_params(graph, cfg, 0);
        const bot::EncoderPlan enc_plan(graph, cfg);
        std::mt19937_64 rng(0);
        std::normal_distribution<double> dist(0.0, 1.0);
        const bot::Matrix tokens = bot::Matrix::NullaryExpr(graph.size(), cfg.d_model, [&] { return dist(rng); });
        std::cout << "measured:";
        for (int v : bot::measured_receptive_field(enc_plan, params, tokens, rf_node)) std::cout << ' ' << v;
        std::cout << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
