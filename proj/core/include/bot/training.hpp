#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "bot/encoder.hpp"
#include "bot/graph.hpp"

namespace bot {

struct Sample {
  Vector obs;
  Vector action;
  std::optional<double> value;  // critic target, rarely used
};

// Fixed random teacher: every action component of node i is a small tanh
// network over the observations of nodes within `radius` hops of i.
struct Teacher {
  struct NodeMap {
    std::vector<int> inputs;  // node ids feeding this node, ascending
    Matrix hidden_weight;     // hidden × input width
    Vector hidden_bias;
    Matrix output_weight;  // action_dim × hidden
  };
  std::vector<NodeMap> nodes;
};

struct SyntheticTask {
  EmbodimentGraph graph;
  Allocation alloc;
  int radius = 1;
  double noise = 0.0;
  Teacher teacher;
  std::vector<Sample> train;
  std::vector<Sample> validation;
};

struct TaskSizes {
  int train = 1024;
  int validation = 256;
};

SyntheticTask generate_task(const EmbodimentGraph& g, int radius, double noise, TaskSizes sizes, std::uint64_t seed);

// Noise-free teacher output for one observation.
Vector teacher_action(const SyntheticTask& task, const Vector& obs);

double loss_mse(const Vector& pred, const Vector& target);

// MLP over the stacked token matrix (n·d_model inputs), ReLU hidden layers.
struct MlpConfig {
  int d_model = 16;
  std::vector<int> hidden{64, 64};
  bool shared_tokenizer = false;
};

struct MlpParameters {
  TokenizerParameters tokenizer;
  std::vector<Matrix> weight;  // fan_in × fan_out
  std::vector<Matrix> bias;    // 1 × fan_out

  template <class F>
  void for_each(F&& f) {
    visit_all(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit_all(*this, f);
  }
  std::int64_t parameter_count() const;
  MlpParameters zeros_like() const;

 private:
  template <class Self, class F>
  static void visit_all(Self& self, F& f) {
    TokenizerParameters::visit(self.tokenizer, f);
    for (size_t l = 0; l < self.weight.size(); ++l) {
      f("mlp." + std::to_string(l) + ".weight", self.weight[l]);
      f("mlp." + std::to_string(l) + ".bias", self.bias[l]);
    }
  }
};

MlpParameters init_mlp(const EmbodimentGraph& g, const MlpConfig& cfg, std::uint64_t seed);
Vector mlp_forward(const Vector& obs, const EmbodimentGraph& g, const Allocation& alloc, const MlpParameters& params);

// Widest equal-width hidden stack of `depth` layers whose parameter count
// does not exceed `budget`.
MlpConfig mlp_config_for_budget(const EmbodimentGraph& g, int d_model, int depth, std::int64_t budget);

// Mean loss over the batch and its exact gradient. The per-sample loss is
// the action MSE plus (value − target)² for samples that carry a value.
struct TransformerModel {
  const EmbodimentGraph* graph;
  const Allocation* alloc;
  const EncoderPlan* plan;
};
double loss_and_gradient(const TransformerModel& model, const ParameterStore& params, const std::vector<Sample>& batch,
                         ParameterStore& grad);

struct MlpModel {
  const EmbodimentGraph* graph;
  const Allocation* alloc;
};
double loss_and_gradient(const MlpModel& model, const MlpParameters& params, const std::vector<Sample>& batch,
                         MlpParameters& grad);

double batch_loss(const TransformerModel& model, const ParameterStore& params, const std::vector<Sample>& batch);
double batch_loss(const MlpModel& model, const MlpParameters& params, const std::vector<Sample>& batch);

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-4;
  int batch_size = 256;
  int epochs = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

using ModelConfig = std::variant<EncoderConfig, MlpConfig>;

struct EpochLoss {
  int epoch = 0;  // 0 is the untrained model
  double train_mse = 0;
  double val_mse = 0;
};

struct TrainedPolicy {
  ModelConfig config;
  std::variant<ParameterStore, MlpParameters> params;

  Vector act(const SyntheticTask& task, const Vector& obs) const;
};

struct TrainResult {
  TrainedPolicy policy;
  std::vector<EpochLoss> curve;
};

// Raised when a loss, a parameter or an activation turns non-finite.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

TrainResult train(const SyntheticTask& task, const ModelConfig& model, const TrainConfig& cfg);

struct Evaluation {
  double train_mse = 0;
  double val_mse = 0;
};

Evaluation evaluate(const SyntheticTask& task, const TrainedPolicy& policy);

std::string_view model_name(const ModelConfig& model);

}  // namespace bot
