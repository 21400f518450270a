#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "bot/training.hpp"

namespace bot {

// A batch of training runs: one synthetic task, several model variants,
// several seeds. Loaded from a JSON document (see README).
struct ExperimentConfig {
  std::filesystem::path graph_path;
  int radius = 1;
  double noise = 0.01;
  TaskSizes sizes{2048, 256};
  std::uint64_t task_seed = 0;

  std::vector<std::string> variants{"hard"};  // encoder variants or "mlp"
  int num_layers = 3;
  int num_heads = 2;
  int d_model = 16;
  int d_ff = 32;
  bool positional_encoding = false;
  bool shared_tokenizer = false;
  int mlp_depth = 2;  // hidden width is matched to the BoT-Hard parameter count

  TrainConfig train{OptimizerKind::adam, 0.9, 0.999, 1e-8, 1e-3, 32, 200, 0};
  std::vector<std::uint64_t> seeds{0};
};

ExperimentConfig parse_experiment(std::string_view document, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment(const std::filesystem::path& path);

// Model configuration for `variant` under `cfg`; the training seed also
// drives the random mask of hard-random.
ModelConfig model_for(const ExperimentConfig& cfg, const EmbodimentGraph& g, std::string_view variant,
                      std::uint64_t seed);

struct RunResult {
  std::string variant;
  std::uint64_t seed = 0;
  std::vector<EpochLoss> curve;
  Evaluation final;
  std::int64_t parameters = 0;
};

std::vector<RunResult> run_experiment(const ExperimentConfig& cfg, const SyntheticTask& task);

// "variant,seed,epoch,train_mse,val_mse" rows.
std::string curves_csv(const std::vector<RunResult>& runs);

struct VariantSummary {
  std::string variant;
  int runs = 0;
  double mean_val_mse = 0;
  double std_val_mse = 0;
  double mean_train_mse = 0;
  std::int64_t parameters = 0;
};

std::vector<VariantSummary> summarize_runs(const std::vector<RunResult>& runs);
std::string summary_table(const std::vector<VariantSummary>& rows);

}  // namespace bot
