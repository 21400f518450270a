#include "bot/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace bot {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::vanilla:
      return "vanilla";
    case Variant::hard:
      return "hard";
    case Variant::mix:
      return "mix";
    case Variant::soft:
      return "soft";
    case Variant::hard_random:
      return "hard-random";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  if (name == "vanilla") return Variant::vanilla;
  if (name == "hard") return Variant::hard;
  if (name == "mix") return Variant::mix;
  if (name == "soft") return Variant::soft;
  if (name == "hard-random" || name == "hard_random") return Variant::hard_random;
  throw Error("unknown encoder variant '" + std::string(name) + "'");
}

void EncoderConfig::validate() const {
  if (num_layers < 1) throw Error("encoder: num_layers must be >= 1");
  if (num_heads < 1 || d_model < 1 || d_ff < 1) throw Error("encoder: widths and head count must be positive");
  if (d_model % num_heads != 0) {
    throw Error("encoder: d_model " + std::to_string(d_model) + " not divisible by " + std::to_string(num_heads) +
                " heads");
  }
}

// ---------------------------------------------------------------------------
// Parameters

std::int64_t ParameterStore::parameter_count() const {
  std::int64_t count = 0;
  for_each([&](const std::string&, const Matrix& m) { count += m.size(); });
  return count;
}

ParameterStore ParameterStore::zeros_like() const {
  ParameterStore z = *this;
  z.for_each([](const std::string&, Matrix& m) { m.setZero(); });
  return z;
}

std::int64_t expected_parameter_count(const EmbodimentGraph& g, const EncoderConfig& cfg) {
  const std::int64_t d = cfg.d_model;
  const std::int64_t n = g.size();
  std::int64_t tok = 0;
  if (cfg.shared_tokenizer) {
    tok = d * g.max_obs_dim() + d;
  } else {
    for (const auto& s : g.nodes()) tok += d * s.obs_dim + d;
  }
  if (cfg.use_positional_encoding) tok += n * d;
  const std::int64_t per_layer = 4 * d * d + 4 * d + 2 * d * cfg.d_ff + cfg.d_ff + d + 4 * d;
  std::int64_t heads = 0;
  for (const auto& s : g.nodes()) heads += s.action_dim * d + s.action_dim + d + 1;
  std::int64_t soft = 0;
  if (cfg.variant == Variant::soft) soft = cfg.num_heads * (diameter(g) + 1);
  return tok + cfg.num_layers * per_layer + heads + soft;
}

namespace {

Matrix uniform(int rows, int cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

double fan_in_bound(int fan_in) { return fan_in > 0 ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 0.0; }

}  // namespace

TokenizerParameters init_tokenizer(const EmbodimentGraph& g, int d_model, bool shared, bool positional,
                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TokenizerParameters t;
  t.shared = shared;
  if (shared) {
    const int width = g.max_obs_dim();
    t.weight.push_back(uniform(d_model, width, fan_in_bound(width), rng));
    t.bias.push_back(Matrix::Zero(d_model, 1));
  } else {
    for (const auto& s : g.nodes()) {
      t.weight.push_back(uniform(d_model, s.obs_dim, fan_in_bound(s.obs_dim), rng));
      t.bias.push_back(Matrix::Zero(d_model, 1));
    }
  }
  if (positional) t.positional = uniform(g.size(), d_model, 0.1, rng);
  return t;
}

ParameterStore init_params(const EmbodimentGraph& g, const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParameterStore p;
  p.tokenizer = init_tokenizer(g, cfg.d_model, cfg.shared_tokenizer, cfg.use_positional_encoding, seed);

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const int d = cfg.d_model;
  const double bound = fan_in_bound(d);
  for (int l = 0; l < cfg.num_layers; ++l) {
    LayerParameters layer;
    layer.wq = uniform(d, d, bound, rng);
    layer.wk = uniform(d, d, bound, rng);
    layer.wv = uniform(d, d, bound, rng);
    layer.wo = uniform(d, d, bound, rng);
    layer.bq = layer.bk = layer.bv = layer.bo = Matrix::Zero(1, d);
    layer.norm1_gain = layer.norm2_gain = Matrix::Ones(1, d);
    layer.norm1_bias = layer.norm2_bias = Matrix::Zero(1, d);
    layer.ff1_weight = uniform(d, cfg.d_ff, bound, rng);
    layer.ff1_bias = Matrix::Zero(1, cfg.d_ff);
    layer.ff2_weight = uniform(cfg.d_ff, d, fan_in_bound(cfg.d_ff), rng);
    layer.ff2_bias = Matrix::Zero(1, d);
    p.layers.push_back(std::move(layer));
  }
  for (const auto& s : g.nodes()) {
    p.detokenizer_weight.push_back(uniform(s.action_dim, d, bound, rng));
    p.detokenizer_bias.push_back(Matrix::Zero(s.action_dim, 1));
    p.value_weight.push_back(uniform(1, d, bound, rng));
    p.value_bias.push_back(Matrix::Zero(1, 1));
  }
  if (cfg.variant == Variant::soft) p.soft_bias = Matrix::Zero(cfg.num_heads, diameter(g) + 1);
  return p;
}

// ---------------------------------------------------------------------------
// Plan

EncoderPlan::EncoderPlan(const EmbodimentGraph& g, const EncoderConfig& cfg)
    : cfg_(cfg), n_(g.size()), distances_(shortest_path_matrix(g)) {
  cfg_.validate();
  diameter_ = distances_.maxCoeff();
  switch (cfg_.variant) {
    case Variant::hard_random: {
      const AttentionMask body = build_mask(g);
      mask_ = random_mask(n_, zero_fraction(body), cfg_.random_mask_seed);
      break;
    }
    case Variant::vanilla:
      mask_ = AttentionMask::all_ones(n_);
      break;
    default:
      mask_ = build_mask(g);
  }
  compressed_ = CompressedMask(mask_);
  for (int l = 0; l < cfg_.num_layers; ++l) {
    LayerKind kind = LayerKind::masked;
    switch (cfg_.variant) {
      case Variant::vanilla:
        kind = LayerKind::full;
        break;
      case Variant::mix:
        kind = l % 2 == 0 ? LayerKind::masked : LayerKind::full;
        break;
      case Variant::soft:
        kind = LayerKind::soft;
        break;
      case Variant::hard:
      case Variant::hard_random:
        kind = LayerKind::masked;
        break;
    }
    kinds_.push_back(kind);
  }
}

// ---------------------------------------------------------------------------
// Forward

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, Matrix* hat, Vector* inv_std) {
  const auto rows = x.rows();
  const auto cols = x.cols();
  Matrix centred(rows, cols);
  Vector inv(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double mean = x.row(i).mean();
    centred.row(i) = x.row(i).array() - mean;
    const double var = centred.row(i).squaredNorm() / static_cast<double>(cols);
    inv(i) = 1.0 / std::sqrt(var + kLayerNormEps);
    centred.row(i) *= inv(i);
  }
  Matrix out = (centred.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
  if (hat) *hat = std::move(centred);
  if (inv_std) *inv_std = std::move(inv);
  return out;
}

Matrix tokenize(const Vector& obs, const EmbodimentGraph& g, const Allocation& alloc,
                const TokenizerParameters& params) {
  if (obs.size() != alloc.observation_width()) {
    throw Error("tokenize: observation width " + std::to_string(obs.size()) + " != " +
                std::to_string(alloc.observation_width()));
  }
  const int n = g.size();
  const auto d_model = params.bias.front().rows();
  Matrix tokens(n, d_model);
  for (int i = 0; i < n; ++i) {
    const Vector local = alloc.gather_observation(obs, i);
    if (params.shared) {
      Vector padded = Vector::Zero(params.weight[0].cols());
      padded.head(local.size()) = local;
      tokens.row(i) = (params.weight[0] * padded + params.bias[0]).transpose();
    } else {
      const auto& w = params.weight[static_cast<size_t>(i)];
      tokens.row(i) = (w * local + params.bias[static_cast<size_t>(i)]).transpose();
    }
  }
  if (params.positional.size() > 0) tokens += params.positional;
  return tokens;
}

Matrix tokenize(const Vector& obs, const EmbodimentGraph& g, const Allocation& alloc, const ParameterStore& params) {
  return tokenize(obs, g, alloc, params.tokenizer);
}

namespace {

Matrix soft_bias_matrix(const EncoderPlan& plan, const Matrix& table, int head) {
  const int n = plan.size();
  Matrix b(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) b(i, j) = table(head, plan.distances()(i, j));
  return b;
}

Matrix run_layer(const Matrix& x, const EncoderPlan& plan, const LayerParameters& p, LayerKind kind,
                 const Matrix& soft_table, LayerTrace* trace) {
  const auto& cfg = plan.config();
  const int heads = cfg.num_heads;
  const int d_k = cfg.d_model / heads;
  const auto n = x.rows();

  Matrix q = (x * p.wq).rowwise() + p.bq.row(0);
  Matrix k = (x * p.wk).rowwise() + p.bk.row(0);
  Matrix v = (x * p.wv).rowwise() + p.bv.row(0);
  Matrix concat(n, cfg.d_model);
  std::vector<Matrix> weights;

  for (int h = 0; h < heads; ++h) {
    AttentionInput in{q.middleCols(h * d_k, d_k), k.middleCols(h * d_k, d_k), v.middleCols(h * d_k, d_k)};
    AttentionResult r;
    switch (kind) {
      case LayerKind::full:
        r = attend_dense(in, nullptr);
        break;
      case LayerKind::soft: {
        const Matrix bias = soft_bias_matrix(plan, soft_table, h);
        r = attend_dense(in, &bias);
        break;
      }
      case LayerKind::masked:
        if (cfg.kernel == MaskedKernel::sparse) {
          r = attend_sparse(in, plan.compressed_mask());
        } else {
          r = attend_dense_masked(in, plan.mask());
        }
        break;
    }
    concat.middleCols(h * d_k, d_k) = r.output;
    if (trace) weights.push_back(std::move(r.weights));
  }

  const Matrix attended = (concat * p.wo).rowwise() + p.bo.row(0);
  Matrix hat1;
  Vector inv1;
  const Matrix hidden = layer_norm(x + attended, p.norm1_gain, p.norm1_bias, &hat1, &inv1);
  Matrix ff_pre = (hidden * p.ff1_weight).rowwise() + p.ff1_bias.row(0);
  const Matrix ff = (ff_pre.cwiseMax(0.0) * p.ff2_weight).rowwise() + p.ff2_bias.row(0);
  Matrix hat2;
  Vector inv2;
  Matrix out = layer_norm(hidden + ff, p.norm2_gain, p.norm2_bias, &hat2, &inv2);

  if (trace) {
    trace->input = x;
    trace->q = std::move(q);
    trace->k = std::move(k);
    trace->v = std::move(v);
    trace->weights = std::move(weights);
    trace->concat = std::move(concat);
    trace->norm1_hat = std::move(hat1);
    trace->norm1_inv_std = std::move(inv1);
    trace->hidden = hidden;
    trace->ff_pre = std::move(ff_pre);
    trace->norm2_hat = std::move(hat2);
    trace->norm2_inv_std = std::move(inv2);
  }
  return out;
}

}  // namespace

Matrix encoder_forward(const Matrix& tokens, const EncoderPlan& plan, const ParameterStore& params,
                       EncoderTrace* trace) {
  const auto& cfg = plan.config();
  if (tokens.rows() != plan.size() || tokens.cols() != cfg.d_model) {
    throw Error("encoder: tokens must be " + std::to_string(plan.size()) + " x " + std::to_string(cfg.d_model));
  }
  if (static_cast<int>(params.layers.size()) != cfg.num_layers) throw Error("encoder: layer count mismatch");
  if (trace) trace->layers.assign(static_cast<size_t>(cfg.num_layers), {});
  Matrix x = tokens;
  for (int l = 0; l < cfg.num_layers; ++l) {
    x = run_layer(x, plan, params.layers[static_cast<size_t>(l)], plan.layer_kind(l), params.soft_bias,
                  trace ? &trace->layers[static_cast<size_t>(l)] : nullptr);
  }
  return x;
}

Matrix encoder_forward(const Matrix& tokens, const EmbodimentGraph& g, const EncoderConfig& cfg,
                       const ParameterStore& params) {
  return encoder_forward(tokens, EncoderPlan(g, cfg), params);
}

Vector detokenize_actions(const Matrix& features, const EmbodimentGraph& g, const Allocation& alloc,
                          const ParameterStore& params) {
  const int n = g.size();
  if (features.rows() != n || static_cast<int>(params.detokenizer_weight.size()) != n) {
    throw Error("detokenize: feature rows must match node count");
  }
  Vector actions = Vector::Zero(alloc.action_width());
  for (int i = 0; i < n; ++i) {
    const auto& w = params.detokenizer_weight[static_cast<size_t>(i)];
    if (w.rows() == 0) continue;
    if (w.cols() != features.cols()) throw Error("detokenize: feature width mismatch");
    const Vector local = w * features.row(i).transpose() + params.detokenizer_bias[static_cast<size_t>(i)];
    alloc.scatter_action(local, i, actions);
  }
  return actions;
}

Vector node_values(const Matrix& features, const ParameterStore& params) {
  const auto n = features.rows();
  if (n != static_cast<Eigen::Index>(params.value_weight.size())) {
    throw Error("detokenize: feature rows must match node count");
  }
  Vector values(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& w = params.value_weight[static_cast<size_t>(i)];
    if (w.cols() != features.cols()) throw Error("detokenize: feature width mismatch");
    values(i) = w.row(0).dot(features.row(i)) + params.value_bias[static_cast<size_t>(i)](0, 0);
  }
  return values;
}

double detokenize_value(const Matrix& features, const ParameterStore& params) {
  return node_values(features, params).mean();
}

Vector policy_forward(const Vector& obs, const EncoderPlan& plan, const EmbodimentGraph& g, const Allocation& alloc,
                      const ParameterStore& params) {
  const Matrix tokens = tokenize(obs, g, alloc, params);
  const Matrix features = encoder_forward(tokens, plan, params);
  return detokenize_actions(features, g, alloc, params);
}

Vector policy_forward(const Vector& obs, const EmbodimentGraph& g, const Allocation& alloc, const EncoderConfig& cfg,
                      const ParameterStore& params) {
  return policy_forward(obs, EncoderPlan(g, cfg), g, alloc, params);
}

std::vector<int> receptive_field(const EmbodimentGraph& g, const EncoderConfig& cfg, int node) {
  const EncoderPlan plan(g, cfg);
  if (node < 0 || node >= g.size()) throw Error("receptive_field: node out of range");
  bool global = false;
  int masked_layers = 0;
  for (int l = 0; l < cfg.num_layers; ++l) {
    if (plan.layer_kind(l) == LayerKind::masked) {
      ++masked_layers;
    } else {
      global = true;
    }
  }
  if (global) {
    std::vector<int> all(static_cast<size_t>(g.size()));
    for (int i = 0; i < g.size(); ++i) all[static_cast<size_t>(i)] = i;
    return all;
  }
  return mask_ball(plan.mask(), node, masked_layers);
}

std::vector<int> measured_receptive_field(const EncoderPlan& plan, const ParameterStore& params, const Matrix& tokens,
                                          int node) {
  if (node < 0 || node >= plan.size()) throw Error("receptive_field: node out of range");
  const Matrix base = encoder_forward(tokens, plan, params);
  std::vector<int> out;
  for (int j = 0; j < plan.size(); ++j) {
    Matrix perturbed = tokens;
    perturbed.row(j).array() += 0.5;
    const Matrix y = encoder_forward(perturbed, plan, params);
    if ((y.row(node) - base.row(node)).cwiseAbs().maxCoeff() > 0.0) out.push_back(j);
  }
  return out;
}

}  // namespace bot
