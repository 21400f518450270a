#include "bot/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bot/bench.hpp"

namespace bot {

ExperimentConfig parse_experiment(std::string_view document, const std::filesystem::path& base_dir) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(document);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("experiment: malformed document: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    std::filesystem::path graph = doc.at("graph").get<std::string>();
    cfg.graph_path = graph.is_relative() && !base_dir.empty() ? base_dir / graph : graph;
    if (doc.contains("task")) {
      const auto& t = doc["task"];
      cfg.radius = t.value("radius", cfg.radius);
      cfg.noise = t.value("noise", cfg.noise);
      cfg.sizes.train = t.value("train", cfg.sizes.train);
      cfg.sizes.validation = t.value("validation", cfg.sizes.validation);
      cfg.task_seed = t.value("seed", cfg.task_seed);
    }
    if (doc.contains("variants")) cfg.variants = doc["variants"].get<std::vector<std::string>>();
    if (doc.contains("model")) {
      const auto& m = doc["model"];
      cfg.num_layers = m.value("layers", cfg.num_layers);
      cfg.num_heads = m.value("heads", cfg.num_heads);
      cfg.d_model = m.value("d_model", cfg.d_model);
      cfg.d_ff = m.value("d_ff", cfg.d_ff);
      cfg.positional_encoding = m.value("positional_encoding", cfg.positional_encoding);
      cfg.shared_tokenizer = m.value("shared_tokenizer", cfg.shared_tokenizer);
      cfg.mlp_depth = m.value("mlp_depth", cfg.mlp_depth);
    }
    if (doc.contains("train")) {
      const auto& t = doc["train"];
      const auto opt = t.value("optimizer", std::string("adam"));
      if (opt == "adam") {
        cfg.train.optimizer = OptimizerKind::adam;
      } else if (opt == "sgd") {
        cfg.train.optimizer = OptimizerKind::sgd;
      } else {
        throw Error("experiment: unknown optimizer '" + opt + "'");
      }
      cfg.train.learning_rate = t.value("lr", cfg.train.learning_rate);
      cfg.train.batch_size = t.value("batch", cfg.train.batch_size);
      cfg.train.epochs = t.value("epochs", cfg.train.epochs);
      cfg.train.beta1 = t.value("beta1", cfg.train.beta1);
      cfg.train.beta2 = t.value("beta2", cfg.train.beta2);
      cfg.train.epsilon = t.value("epsilon", cfg.train.epsilon);
    }
    if (doc.contains("seeds")) cfg.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("experiment: malformed document: ") + e.what());
  }
  if (cfg.seeds.empty() || cfg.variants.empty()) throw Error("experiment: need at least one variant and seed");
  return cfg;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("experiment: cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment(buffer.str(), path.parent_path());
}

ModelConfig model_for(const ExperimentConfig& cfg, const EmbodimentGraph& g, std::string_view variant,
                      std::uint64_t seed) {
  EncoderConfig enc;
  enc.num_layers = cfg.num_layers;
  enc.num_heads = cfg.num_heads;
  enc.d_model = cfg.d_model;
  enc.d_ff = cfg.d_ff;
  enc.use_positional_encoding = cfg.positional_encoding;
  enc.shared_tokenizer = cfg.shared_tokenizer;
  if (variant == "mlp") {
    enc.variant = Variant::hard;
    const auto budget = expected_parameter_count(g, enc);
    MlpConfig mlp = mlp_config_for_budget(g, cfg.d_model, cfg.mlp_depth, budget);
    mlp.shared_tokenizer = cfg.shared_tokenizer;
    return mlp;
  }
  enc.variant = parse_variant(variant);
  enc.random_mask_seed = seed;
  return enc;
}

std::vector<RunResult> run_experiment(const ExperimentConfig& cfg, const SyntheticTask& task) {
  std::vector<RunResult> runs;
  for (const auto& variant : cfg.variants) {
    for (auto seed : cfg.seeds) {
      const ModelConfig model = model_for(cfg, task.graph, variant, seed);
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      auto result = train(task, model, tc);
      RunResult run;
      run.variant = variant;
      run.seed = seed;
      run.final = evaluate(task, result.policy);
      run.curve = std::move(result.curve);
      std::visit([&](const auto& p) { run.parameters = p.parameter_count(); }, result.policy.params);
      runs.push_back(std::move(run));
    }
  }
  return runs;
}

std::string curves_csv(const std::vector<RunResult>& runs) {
  std::ostringstream out;
  out << "variant,seed,epoch,train_mse,val_mse\n";
  for (const auto& run : runs) {
    for (const auto& e : run.curve) {
      out << run.variant << ',' << run.seed << ',' << e.epoch << ',' << format_double(e.train_mse) << ','
          << format_double(e.val_mse) << '\n';
    }
  }
  return out.str();
}

std::vector<VariantSummary> summarize_runs(const std::vector<RunResult>& runs) {
  std::vector<VariantSummary> rows;
  for (const auto& run : runs) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const VariantSummary& s) { return s.variant == run.variant; });
    if (it == rows.end()) {
      rows.push_back({run.variant, 0, 0, 0, 0, run.parameters});
      it = rows.end() - 1;
    }
    it->runs += 1;
    it->mean_val_mse += run.final.val_mse;
    it->mean_train_mse += run.final.train_mse;
  }
  for (auto& row : rows) {
    row.mean_val_mse /= row.runs;
    row.mean_train_mse /= row.runs;
    double ss = 0;
    for (const auto& run : runs)
      if (run.variant == row.variant) ss += std::pow(run.final.val_mse - row.mean_val_mse, 2);
    row.std_val_mse = row.runs > 1 ? std::sqrt(ss / (row.runs - 1)) : 0.0;
  }
  return rows;
}

std::string summary_table(const std::vector<VariantSummary>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(14) << "variant" << std::right << std::setw(6) << "runs" << std::setw(12) << "params"
      << std::setw(16) << "train_mse" << std::setw(16) << "val_mse" << std::setw(16) << "val_std" << '\n';
  out << std::scientific << std::setprecision(4);
  for (const auto& r : rows) {
    out << std::left << std::setw(14) << r.variant << std::right << std::setw(6) << r.runs << std::setw(12)
        << r.parameters << std::setw(16) << r.mean_train_mse << std::setw(16) << r.mean_val_mse << std::setw(16)
        << r.std_val_mse << '\n';
  }
  return out.str();
}

}  // namespace bot
