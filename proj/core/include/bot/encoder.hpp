#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bot/attention.hpp"
#include "bot/graph.hpp"
#include "bot/types.hpp"

namespace bot {

enum class Variant { vanilla, hard, mix, soft, hard_random };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

// Which kernel evaluates masked layers. Both give the same answer to
// rounding; dense exists as a cross-check.
enum class MaskedKernel { sparse, dense };

struct EncoderConfig {
  Variant variant = Variant::hard;
  std::uint64_t random_mask_seed = 0;  // hard_random only
  int num_layers = 2;
  int num_heads = 2;
  int d_model = 32;
  int d_ff = 64;
  bool use_positional_encoding = false;
  bool shared_tokenizer = false;
  MaskedKernel kernel = MaskedKernel::sparse;

  void validate() const;
};

struct LayerParameters {
  Matrix wq, wk, wv, wo;  // d_model × d_model
  Matrix bq, bk, bv, bo;  // 1 × d_model
  Matrix norm1_gain, norm1_bias;
  Matrix ff1_weight;  // d_model × d_ff
  Matrix ff1_bias;
  Matrix ff2_weight;  // d_ff × d_model
  Matrix ff2_bias;
  Matrix norm2_gain, norm2_bias;

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "wq", self.wq);
    f(prefix + "wk", self.wk);
    f(prefix + "wv", self.wv);
    f(prefix + "wo", self.wo);
    f(prefix + "bq", self.bq);
    f(prefix + "bk", self.bk);
    f(prefix + "bv", self.bv);
    f(prefix + "bo", self.bo);
    f(prefix + "norm1.gain", self.norm1_gain);
    f(prefix + "norm1.bias", self.norm1_bias);
    f(prefix + "ff1.weight", self.ff1_weight);
    f(prefix + "ff1.bias", self.ff1_bias);
    f(prefix + "ff2.weight", self.ff2_weight);
    f(prefix + "ff2.bias", self.ff2_bias);
    f(prefix + "norm2.gain", self.norm2_gain);
    f(prefix + "norm2.bias", self.norm2_bias);
  }
};

// Per-node linear maps from local observations to d_model embeddings.
// Holds n weight/bias pairs, or a single shared pair in the ablation mode.
struct TokenizerParameters {
  std::vector<Matrix> weight;  // d_model × obs_dim_i (shared: d_model × max obs_dim)
  std::vector<Matrix> bias;    // d_model × 1
  Matrix positional;           // n × d_model, empty when disabled

  bool shared = false;

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    for (size_t i = 0; i < self.weight.size(); ++i) {
      f("tokenizer." + std::to_string(i) + ".weight", self.weight[i]);
      f("tokenizer." + std::to_string(i) + ".bias", self.bias[i]);
    }
    if (self.positional.size() > 0) f(std::string("positional"), self.positional);
  }
};

struct ParameterStore {
  TokenizerParameters tokenizer;
  std::vector<LayerParameters> layers;
  std::vector<Matrix> detokenizer_weight;  // action_dim_i × d_model
  std::vector<Matrix> detokenizer_bias;    // action_dim_i × 1
  std::vector<Matrix> value_weight;        // 1 × d_model
  std::vector<Matrix> value_bias;          // 1 × 1
  Matrix soft_bias;                        // heads × (diameter + 1), Soft only

  template <class F>
  void for_each(F&& f) {
    visit_all(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit_all(*this, f);
  }

  std::int64_t parameter_count() const;
  // Same layout, every entry zero.
  ParameterStore zeros_like() const;

 private:
  template <class Self, class F>
  static void visit_all(Self& self, F& f) {
    TokenizerParameters::visit(self.tokenizer, f);
    for (size_t l = 0; l < self.layers.size(); ++l) {
      LayerParameters::visit(self.layers[l], "layers." + std::to_string(l) + ".", f);
    }
    for (size_t i = 0; i < self.detokenizer_weight.size(); ++i) {
      f("detokenizer." + std::to_string(i) + ".weight", self.detokenizer_weight[i]);
      f("detokenizer." + std::to_string(i) + ".bias", self.detokenizer_bias[i]);
      f("value." + std::to_string(i) + ".weight", self.value_weight[i]);
      f("value." + std::to_string(i) + ".bias", self.value_bias[i]);
    }
    if (self.soft_bias.size() > 0) f(std::string("soft_bias"), self.soft_bias);
  }
};

// Closed-form parameter count for (graph, config).
std::int64_t expected_parameter_count(const EmbodimentGraph& g, const EncoderConfig& cfg);

enum class LayerKind { full, masked, soft };

// Attention pattern of every layer, resolved once from graph and config.
class EncoderPlan {
 public:
  EncoderPlan(const EmbodimentGraph& g, const EncoderConfig& cfg);

  const EncoderConfig& config() const { return cfg_; }
  int size() const { return n_; }
  LayerKind layer_kind(int layer) const { return kinds_.at(static_cast<size_t>(layer)); }
  // Mask used by masked layers (body mask, or the random one for hard_random).
  const AttentionMask& mask() const { return mask_; }
  const CompressedMask& compressed_mask() const { return compressed_; }
  const IntMatrix& distances() const { return distances_; }
  int graph_diameter() const { return diameter_; }

 private:
  EncoderConfig cfg_;
  int n_ = 0;
  std::vector<LayerKind> kinds_;
  AttentionMask mask_;
  CompressedMask compressed_;
  IntMatrix distances_;
  int diameter_ = 0;
};

ParameterStore init_params(const EmbodimentGraph& g, const EncoderConfig& cfg, std::uint64_t seed);

// Tokenizer parameters alone; shared with the MLP baseline.
TokenizerParameters init_tokenizer(const EmbodimentGraph& g, int d_model, bool shared, bool positional,
                                   std::uint64_t seed);

Matrix tokenize(const Vector& obs, const EmbodimentGraph& g, const Allocation& alloc,
                const TokenizerParameters& params);
Matrix tokenize(const Vector& obs, const EmbodimentGraph& g, const Allocation& alloc, const ParameterStore& params);

// Intermediates of one layer, kept for reverse-mode differentiation.
struct LayerTrace {
  Matrix input;
  Matrix q, k, v;
  std::vector<Matrix> weights;  // per head, n × n
  Matrix concat;
  Matrix norm1_hat;
  Vector norm1_inv_std;
  Matrix hidden;  // output of first normalization
  Matrix ff_pre;  // before ReLU
  Matrix norm2_hat;
  Vector norm2_inv_std;
};

struct EncoderTrace {
  std::vector<LayerTrace> layers;
};

Matrix encoder_forward(const Matrix& tokens, const EmbodimentGraph& g, const EncoderConfig& cfg,
                       const ParameterStore& params);
Matrix encoder_forward(const Matrix& tokens, const EncoderPlan& plan, const ParameterStore& params,
                       EncoderTrace* trace = nullptr);

Vector detokenize_actions(const Matrix& features, const EmbodimentGraph& g, const Allocation& alloc,
                          const ParameterStore& params);
// Per-node scalar heads averaged over all nodes.
double detokenize_value(const Matrix& features, const ParameterStore& params);
Vector node_values(const Matrix& features, const ParameterStore& params);

Vector policy_forward(const Vector& obs, const EmbodimentGraph& g, const Allocation& alloc, const EncoderConfig& cfg,
                      const ParameterStore& params);
Vector policy_forward(const Vector& obs, const EncoderPlan& plan, const EmbodimentGraph& g, const Allocation& alloc,
                      const ParameterStore& params);

// Predicted set of input nodes the output at `node` can depend on.
std::vector<int> receptive_field(const EmbodimentGraph& g, const EncoderConfig& cfg, int node);

// Input nodes whose token, when perturbed, changes the output row of `node`.
std::vector<int> measured_receptive_field(const EncoderPlan& plan, const ParameterStore& params, const Matrix& tokens,
                                          int node);

// Layer normalization over each row (ε = 1e-5). Returns normalized rows and
// fills the centred/scaled values and inverse deviations when asked.
Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, Matrix* hat = nullptr,
                  Vector* inv_std = nullptr);

inline constexpr double kLayerNormEps = 1e-5;

}  // namespace bot
