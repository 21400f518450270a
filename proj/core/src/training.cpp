#include "bot/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tokenizer_grad.hpp"

namespace bot {

// ---------------------------------------------------------------------------
// Synthetic task

namespace {

constexpr int kTeacherHidden = 8;

Matrix gaussian(int rows, int cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Vector teacher_inputs(const SyntheticTask& task, const Teacher::NodeMap& map, const Vector& obs) {
  int width = 0;
  for (int j : map.inputs) width += task.graph.node(j).obs_dim;
  Vector x(width);
  int k = 0;
  for (int j : map.inputs) {
    const Vector local = task.alloc.gather_observation(obs, j);
    x.segment(k, local.size()) = local;
    k += static_cast<int>(local.size());
  }
  return x;
}

}  // namespace

Vector teacher_action(const SyntheticTask& task, const Vector& obs) {
  Vector action = Vector::Zero(task.alloc.action_width());
  for (int i = 0; i < task.graph.size(); ++i) {
    const auto& map = task.teacher.nodes[static_cast<size_t>(i)];
    if (map.output_weight.rows() == 0) continue;
    const Vector x = teacher_inputs(task, map, obs);
    const Vector hidden = (map.hidden_weight * x + map.hidden_bias).array().tanh().matrix();
    task.alloc.scatter_action(map.output_weight * hidden, i, action);
  }
  return action;
}

SyntheticTask generate_task(const EmbodimentGraph& g, int radius, double noise, TaskSizes sizes, std::uint64_t seed) {
  if (radius < 0) throw Error("generate_task: radius must be >= 0");
  if (noise < 0) throw Error("generate_task: noise must be >= 0");
  SyntheticTask task{g, contiguous_allocation(g), radius, noise, {}, {}, {}};

  std::mt19937_64 rng(seed);
  const IntMatrix dist = shortest_path_matrix(g);
  for (int i = 0; i < g.size(); ++i) {
    Teacher::NodeMap map;
    int width = 0;
    for (int j = 0; j < g.size(); ++j) {
      if (dist(i, j) <= radius) {
        map.inputs.push_back(j);
        width += g.node(j).obs_dim;
      }
    }
    map.hidden_weight = gaussian(kTeacherHidden, width, width > 0 ? 1.0 / std::sqrt(width) : 0.0, rng);
    map.hidden_bias = gaussian(kTeacherHidden, 1, 0.1, rng);
    map.output_weight = gaussian(g.node(i).action_dim, kTeacherHidden, 0.5 / std::sqrt(kTeacherHidden), rng);
    task.teacher.nodes.push_back(std::move(map));
  }

  std::uniform_real_distribution<double> obs_dist(-1.0, 1.0);
  std::normal_distribution<double> noise_dist(0.0, 1.0);
  auto draw = [&](int count, std::vector<Sample>& out) {
    out.reserve(static_cast<size_t>(count));
    for (int s = 0; s < count; ++s) {
      Sample sample;
      sample.obs.resize(task.alloc.observation_width());
      for (auto& x : sample.obs) x = obs_dist(rng);
      sample.action = teacher_action(task, sample.obs);
      for (auto& a : sample.action) a += noise * noise_dist(rng);
      out.push_back(std::move(sample));
    }
  };
  draw(sizes.train, task.train);
  draw(sizes.validation, task.validation);
  return task;
}

double loss_mse(const Vector& pred, const Vector& target) {
  if (pred.size() != target.size()) throw Error("loss_mse: width mismatch");
  if (pred.size() == 0) return 0.0;
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------
// Reverse mode through tokenizer → encoder → detokenizer

namespace detail {

void tokenizer_backward(const Vector& obs, const EmbodimentGraph& g, const Allocation& alloc,
                        const TokenizerParameters& params, const Matrix& d_tokens, TokenizerParameters& grad) {
  for (int i = 0; i < g.size(); ++i) {
    const Vector local = alloc.gather_observation(obs, i);
    const Vector dt = d_tokens.row(i).transpose();
    if (params.shared) {
      Vector padded = Vector::Zero(params.weight[0].cols());
      padded.head(local.size()) = local;
      grad.weight[0].noalias() += dt * padded.transpose();
      grad.bias[0] += dt;
    } else {
      grad.weight[static_cast<size_t>(i)].noalias() += dt * local.transpose();
      grad.bias[static_cast<size_t>(i)] += dt;
    }
  }
  if (params.positional.size() > 0) grad.positional += d_tokens;
}

}  // namespace detail

namespace {

Matrix column_sums(const Matrix& m) { return m.colwise().sum(); }

// Gradient of y = layer_norm(x) given dy; accumulates gain/bias grads.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& hat, const Vector& inv_std, const Matrix& gain,
                           Matrix& d_gain, Matrix& d_bias) {
  d_gain += (dy.array() * hat.array()).colwise().sum().matrix();
  d_bias += column_sums(dy);
  const Matrix d_hat = dy.array().rowwise() * gain.row(0).array();
  const auto cols = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double sum = d_hat.row(i).sum();
    const double dot = d_hat.row(i).dot(hat.row(i));
    dx.row(i) = (inv_std(i) / cols) * (cols * d_hat.row(i).array() - sum - hat.row(i).array() * dot);
  }
  return dx;
}

Matrix layer_backward(const Matrix& d_out, const LayerTrace& t, const LayerParameters& p, LayerKind kind,
                      const EncoderPlan& plan, LayerParameters& g, Matrix* d_soft) {
  const auto& cfg = plan.config();
  const int heads = cfg.num_heads;
  const int d_k = cfg.d_model / heads;
  const double root = std::sqrt(static_cast<double>(d_k));

  // out = LN2(hidden + ff)
  const Matrix d_res2 = layer_norm_backward(d_out, t.norm2_hat, t.norm2_inv_std, p.norm2_gain, g.norm2_gain,
                                            g.norm2_bias);
  Matrix d_hidden = d_res2;
  const Matrix relu = t.ff_pre.cwiseMax(0.0);
  g.ff2_weight.noalias() += relu.transpose() * d_res2;
  g.ff2_bias += column_sums(d_res2);
  Matrix d_pre = d_res2 * p.ff2_weight.transpose();
  d_pre = d_pre.array() * (t.ff_pre.array() > 0.0).cast<double>();
  g.ff1_weight.noalias() += t.hidden.transpose() * d_pre;
  g.ff1_bias += column_sums(d_pre);
  d_hidden.noalias() += d_pre * p.ff1_weight.transpose();

  // hidden = LN1(input + concat·wo + bo)
  const Matrix d_res1 = layer_norm_backward(d_hidden, t.norm1_hat, t.norm1_inv_std, p.norm1_gain, g.norm1_gain,
                                            g.norm1_bias);
  Matrix d_input = d_res1;
  g.wo.noalias() += t.concat.transpose() * d_res1;
  g.bo += column_sums(d_res1);
  const Matrix d_concat = d_res1 * p.wo.transpose();

  Matrix dq(t.q.rows(), t.q.cols());
  Matrix dk(t.k.rows(), t.k.cols());
  Matrix dv(t.v.rows(), t.v.cols());
  for (int h = 0; h < heads; ++h) {
    const Matrix& w = t.weights[static_cast<size_t>(h)];
    const auto d_o = d_concat.middleCols(h * d_k, d_k);
    dv.middleCols(h * d_k, d_k).noalias() = w.transpose() * d_o;
    const Matrix d_w = d_o * t.v.middleCols(h * d_k, d_k).transpose();
    // Softmax Jacobian; zero weights (masked pairs) yield zero score gradient.
    const Vector row_dot = (d_w.array() * w.array()).rowwise().sum();
    const Matrix d_s = w.array() * (d_w.colwise() - row_dot).array();
    dq.middleCols(h * d_k, d_k).noalias() = (d_s * t.k.middleCols(h * d_k, d_k)) / root;
    dk.middleCols(h * d_k, d_k).noalias() = (d_s.transpose() * t.q.middleCols(h * d_k, d_k)) / root;
    if (kind == LayerKind::soft && d_soft) {
      const IntMatrix& dist = plan.distances();
      for (Eigen::Index i = 0; i < d_s.rows(); ++i)
        for (Eigen::Index j = 0; j < d_s.cols(); ++j) (*d_soft)(h, dist(i, j)) += d_s(i, j);
    }
  }
  g.wq.noalias() += t.input.transpose() * dq;
  g.wk.noalias() += t.input.transpose() * dk;
  g.wv.noalias() += t.input.transpose() * dv;
  g.bq += column_sums(dq);
  g.bk += column_sums(dk);
  g.bv += column_sums(dv);
  d_input.noalias() += dq * p.wq.transpose();
  d_input.noalias() += dk * p.wk.transpose();
  d_input.noalias() += dv * p.wv.transpose();
  return d_input;
}

void check_finite(double value, const char* what) {
  if (!std::isfinite(value)) throw TrainingDiverged(std::string("training: non-finite ") + what);
}

}  // namespace

double loss_and_gradient(const TransformerModel& model, const ParameterStore& params, const std::vector<Sample>& batch,
                         ParameterStore& grad) {
  if (batch.empty()) throw Error("loss_and_gradient: empty batch");
  const auto& g = *model.graph;
  const auto& alloc = *model.alloc;
  const auto& plan = *model.plan;
  const double scale = 1.0 / static_cast<double>(batch.size());
  const int n = g.size();
  double total = 0.0;

  for (const auto& sample : batch) {
    const Matrix tokens = tokenize(sample.obs, g, alloc, params);
    EncoderTrace trace;
    const Matrix features = encoder_forward(tokens, plan, params, &trace);
    const Vector pred = detokenize_actions(features, g, alloc, params);
    if (!pred.allFinite()) throw TrainingDiverged("training: non-finite forward values");

    double loss = loss_mse(pred, sample.action);
    const double width = static_cast<double>(std::max<Eigen::Index>(pred.size(), 1));
    const Vector d_pred = (2.0 * scale / width) * (pred - sample.action);

    Matrix d_features = Matrix::Zero(features.rows(), features.cols());
    for (int i = 0; i < n; ++i) {
      const auto& w = params.detokenizer_weight[static_cast<size_t>(i)];
      if (w.rows() == 0) continue;
      const Vector d_local = alloc.gather_action(d_pred, i);
      grad.detokenizer_weight[static_cast<size_t>(i)].noalias() += d_local * features.row(i);
      grad.detokenizer_bias[static_cast<size_t>(i)] += d_local;
      d_features.row(i).noalias() += (w.transpose() * d_local).transpose();
    }
    if (sample.value) {
      const double value = detokenize_value(features, params);
      const double diff = value - *sample.value;
      loss += diff * diff;
      const double d_node = 2.0 * diff * scale / n;
      for (int i = 0; i < n; ++i) {
        grad.value_weight[static_cast<size_t>(i)] += d_node * features.row(i);
        grad.value_bias[static_cast<size_t>(i)](0, 0) += d_node;
        d_features.row(i) += d_node * params.value_weight[static_cast<size_t>(i)].row(0);
      }
    }
    check_finite(loss, "loss");
    total += loss;

    Matrix d_x = d_features;
    for (int l = plan.config().num_layers - 1; l >= 0; --l) {
      const auto idx = static_cast<size_t>(l);
      d_x = layer_backward(d_x, trace.layers[idx], params.layers[idx], plan.layer_kind(l), plan, grad.layers[idx],
                           grad.soft_bias.size() > 0 ? &grad.soft_bias : nullptr);
    }
    detail::tokenizer_backward(sample.obs, g, alloc, params.tokenizer, d_x, grad.tokenizer);
  }
  return total * scale;
}

double batch_loss(const TransformerModel& model, const ParameterStore& params, const std::vector<Sample>& batch) {
  double total = 0.0;
  for (const auto& sample : batch) {
    const Matrix features = encoder_forward(tokenize(sample.obs, *model.graph, *model.alloc, params), *model.plan, params);
    double loss = loss_mse(detokenize_actions(features, *model.graph, *model.alloc, params), sample.action);
    if (sample.value) {
      const double diff = detokenize_value(features, params) - *sample.value;
      loss += diff * diff;
    }
    total += loss;
  }
  return batch.empty() ? 0.0 : total / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Optimizers

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw Error("train: learning rate must be nonnegative");
  if (batch_size < 1 || epochs < 1) throw Error("train: batch size and epochs must be positive");
}

namespace {

template <class Store>
std::vector<Matrix*> tensors_of(Store& s) {
  std::vector<Matrix*> out;
  s.for_each([&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

template <class Store>
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const Store& like) : cfg_(cfg), m_(like.zeros_like()), v_(like.zeros_like()) {}

  void step(Store& params, Store& grad) {
    ++t_;
    auto p = tensors_of(params);
    auto g = tensors_of(grad);
    if (cfg_.optimizer == OptimizerKind::sgd) {
      for (size_t i = 0; i < p.size(); ++i) *p[i] -= cfg_.learning_rate * *g[i];
      return;
    }
    auto m = tensors_of(m_);
    auto v = tensors_of(v_);
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (size_t i = 0; i < p.size(); ++i) {
      *m[i] = cfg_.beta1 * *m[i] + (1.0 - cfg_.beta1) * *g[i];
      *v[i] = cfg_.beta2 * *v[i] + (1.0 - cfg_.beta2) * g[i]->cwiseAbs2();
      p[i]->array() -= cfg_.learning_rate * (m[i]->array() / c1) / ((v[i]->array() / c2).sqrt() + cfg_.epsilon);
    }
  }

 private:
  TrainConfig cfg_;
  Store m_;
  Store v_;
  int t_ = 0;
};

template <class Model, class Store>
TrainResult run_training(const SyntheticTask& task, const ModelConfig& config, const Model& model, Store params,
                         const TrainConfig& cfg) {
  Optimizer<Store> opt(cfg, params);
  std::vector<size_t> order(task.train.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(cfg.seed ^ 0x5851f42d4c957f2dULL);

  std::vector<EpochLoss> curve;
  auto record = [&](int epoch) {
    EpochLoss e{epoch, 0.0, 0.0};
    try {
      e.train_mse = batch_loss(model, params, task.train);
      e.val_mse = batch_loss(model, params, task.validation);
    } catch (const NonFiniteValue& err) {
      throw TrainingDiverged(std::string("training: ") + err.what());
    }
    check_finite(e.train_mse, "training loss");
    check_finite(e.val_mse, "validation loss");
    curve.push_back(e);
  };
  record(0);

  std::vector<Sample> batch;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      batch.clear();
      for (size_t k = start; k < stop; ++k) batch.push_back(task.train[order[k]]);
      Store grad = params.zeros_like();
      try {
        loss_and_gradient(model, params, batch, grad);
      } catch (const NonFiniteValue& e) {
        throw TrainingDiverged(std::string("training: ") + e.what());
      }
      opt.step(params, grad);
      params.for_each([](const std::string&, const Matrix& m) {
        if (!m.allFinite()) throw TrainingDiverged("training: non-finite parameters");
      });
    }
    record(epoch);
  }
  return TrainResult{TrainedPolicy{config, std::move(params)}, std::move(curve)};
}

}  // namespace

TrainResult train(const SyntheticTask& task, const ModelConfig& model, const TrainConfig& cfg) {
  cfg.validate();
  if (task.train.empty()) throw Error("train: empty training set");
  if (const auto* enc = std::get_if<EncoderConfig>(&model)) {
    const EncoderPlan plan(task.graph, *enc);
    const TransformerModel m{&task.graph, &task.alloc, &plan};
    return run_training(task, model, m, init_params(task.graph, *enc, cfg.seed), cfg);
  }
  const auto& mlp = std::get<MlpConfig>(model);
  const MlpModel m{&task.graph, &task.alloc};
  return run_training(task, model, m, init_mlp(task.graph, mlp, cfg.seed), cfg);
}

Vector TrainedPolicy::act(const SyntheticTask& task, const Vector& obs) const {
  if (const auto* enc = std::get_if<EncoderConfig>(&config)) {
    return policy_forward(obs, task.graph, task.alloc, *enc, std::get<ParameterStore>(params));
  }
  return mlp_forward(obs, task.graph, task.alloc, std::get<MlpParameters>(params));
}

Evaluation evaluate(const SyntheticTask& task, const TrainedPolicy& policy) {
  if (const auto* enc = std::get_if<EncoderConfig>(&policy.config)) {
    const EncoderPlan plan(task.graph, *enc);
    const TransformerModel m{&task.graph, &task.alloc, &plan};
    const auto& p = std::get<ParameterStore>(policy.params);
    return {batch_loss(m, p, task.train), batch_loss(m, p, task.validation)};
  }
  const MlpModel m{&task.graph, &task.alloc};
  const auto& p = std::get<MlpParameters>(policy.params);
  return {batch_loss(m, p, task.train), batch_loss(m, p, task.validation)};
}

std::string_view model_name(const ModelConfig& model) {
  if (const auto* enc = std::get_if<EncoderConfig>(&model)) return to_string(enc->variant);
  return "mlp";
}

}  // namespace bot
