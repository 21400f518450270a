#include <cmath>
#include <random>

#include "bot/training.hpp"
#include "tokenizer_grad.hpp"

namespace bot {

std::int64_t MlpParameters::parameter_count() const {
  std::int64_t count = 0;
  for_each([&](const std::string&, const Matrix& m) { count += m.size(); });
  return count;
}

MlpParameters MlpParameters::zeros_like() const {
  MlpParameters z = *this;
  z.for_each([](const std::string&, Matrix& m) { m.setZero(); });
  return z;
}

MlpParameters init_mlp(const EmbodimentGraph& g, const MlpConfig& cfg, std::uint64_t seed) {
  if (cfg.d_model < 1) throw Error("mlp: d_model must be positive");
  MlpParameters p;
  p.tokenizer = init_tokenizer(g, cfg.d_model, cfg.shared_tokenizer, false, seed);
  std::mt19937_64 rng(seed ^ 0xda942042e4dd58b5ULL);
  int fan_in = g.size() * cfg.d_model;
  std::vector<int> widths = cfg.hidden;
  widths.push_back(g.total_action_dim());
  for (int width : widths) {
    if (width < 0) throw Error("mlp: negative layer width");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(fan_in, width);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    p.weight.push_back(std::move(w));
    p.bias.push_back(Matrix::Zero(1, width));
    fan_in = width;
  }
  return p;
}

namespace {

Matrix stacked_tokens(const Vector& obs, const EmbodimentGraph& g, const Allocation& alloc,
                      const MlpParameters& params) {
  const Matrix tokens = tokenize(obs, g, alloc, params.tokenizer);
  // Row-major storage: the reshaped row is token 0, then token 1, ...
  return Eigen::Map<const Matrix>(tokens.data(), 1, tokens.size());
}

}  // namespace

Vector mlp_forward(const Vector& obs, const EmbodimentGraph& g, const Allocation& alloc, const MlpParameters& params) {
  Matrix x = stacked_tokens(obs, g, alloc, params);
  const size_t layers = params.weight.size();
  for (size_t l = 0; l < layers; ++l) {
    x = x * params.weight[l] + params.bias[l];
    if (l + 1 < layers) x = x.cwiseMax(0.0);
  }
  return x.row(0).transpose();
}

MlpConfig mlp_config_for_budget(const EmbodimentGraph& g, int d_model, int depth, std::int64_t budget) {
  MlpConfig cfg;
  cfg.d_model = d_model;
  auto count_for = [&](int width) {
    cfg.hidden.assign(static_cast<size_t>(depth), width);
    return init_mlp(g, cfg, 0).parameter_count();
  };
  int width = 1;
  while (count_for(width + 1) <= budget) ++width;
  cfg.hidden.assign(static_cast<size_t>(depth), width);
  return cfg;
}

double loss_and_gradient(const MlpModel& model, const MlpParameters& params, const std::vector<Sample>& batch,
                         MlpParameters& grad) {
  if (batch.empty()) throw Error("loss_and_gradient: empty batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  const size_t layers = params.weight.size();
  double total = 0.0;
  for (const auto& sample : batch) {
    std::vector<Matrix> acts{stacked_tokens(sample.obs, *model.graph, *model.alloc, params)};
    std::vector<Matrix> pre;
    for (size_t l = 0; l < layers; ++l) {
      pre.push_back(acts.back() * params.weight[l] + params.bias[l]);
      acts.push_back(l + 1 < layers ? Matrix(pre.back().cwiseMax(0.0)) : pre.back());
    }
    const Vector pred = acts.back().row(0).transpose();
    if (!pred.allFinite()) throw TrainingDiverged("training: non-finite forward values");
    const double loss = loss_mse(pred, sample.action);
    if (!std::isfinite(loss)) throw TrainingDiverged("training: non-finite loss");
    total += loss;

    const double width = static_cast<double>(std::max<Eigen::Index>(pred.size(), 1));
    Matrix d = ((2.0 * scale / width) * (pred - sample.action)).transpose();
    for (size_t l = layers; l-- > 0;) {
      if (l + 1 < layers) d = d.array() * (pre[l].array() > 0.0).cast<double>();
      grad.weight[l].noalias() += acts[l].transpose() * d;
      grad.bias[l] += d;
      d = d * params.weight[l].transpose();
    }
    const auto d_model = params.tokenizer.bias.front().rows();
    const Matrix d_tokens = Eigen::Map<const Matrix>(d.data(), model.graph->size(), d_model);
    detail::tokenizer_backward(sample.obs, *model.graph, *model.alloc, params.tokenizer, d_tokens, grad.tokenizer);
  }
  return total * scale;
}

double batch_loss(const MlpModel& model, const MlpParameters& params, const std::vector<Sample>& batch) {
  double total = 0.0;
  for (const auto& sample : batch) {
    total += loss_mse(mlp_forward(sample.obs, *model.graph, *model.alloc, params), sample.action);
  }
  return batch.empty() ? 0.0 : total / static_cast<double>(batch.size());
}

}  // namespace bot
