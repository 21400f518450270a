#pragma once

#include <cstdint>

#include "bot/attention.hpp"
#include "bot/graph.hpp"

namespace bot {

// Cost model of a single-head, single-sample attention forward pass.
// `density` is the NONZERO fraction η of the mask (η·n² ≥ n); reports that
// speak of sparsity use ζ = 1 − η.
struct FlopsModel {
  std::int64_t n = 1;
  std::int64_t d_k = 1;
  double density = 1.0;
  double c1 = 1.0;  // FLOPs per square root
  double c2 = 1.0;  // FLOPs per exponential

  static FlopsModel for_mask(const AttentionMask& m, std::int64_t d_k, double c1 = 1.0, double c2 = 1.0);
};

struct FlopsBreakdown {
  double qk = 0;
  double softmax = 0;
  double av = 0;
  double total = 0;

  bool operator==(const FlopsBreakdown&) const = default;
};

enum class KernelKind { vanilla, masked };

FlopsBreakdown vanilla_flops(const FlopsModel& model);
FlopsBreakdown masked_flops(const FlopsModel& model);

// Limit of vanilla/masked totals as n → ∞; never below 1.
double flops_ratio_limit(std::int64_t d_k, double density, double c2);

// Converts an instrumented tally into FLOPs using the model's weights.
FlopsBreakdown tally_to_flops(const OpTally& tally, double c1, double c2);

// Runs the instrumented kernel once: `vanilla` is the dense masked kernel,
// `masked` the sparse one.
FlopsBreakdown counted_flops(KernelKind kernel, const AttentionInput& input, const AttentionMask& mask,
                             double c1 = 1.0, double c2 = 1.0);

}  // namespace bot
