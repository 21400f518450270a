#include "bot/flops.hpp"

#include <cmath>

namespace bot {

namespace {

// η·n² as an exact pair count whenever η came from a real mask.
double unmasked_pairs(const FlopsModel& m) {
  const double pairs = m.density * static_cast<double>(m.n) * static_cast<double>(m.n);
  const double rounded = std::round(pairs);
  return std::abs(pairs - rounded) < 1e-6 ? rounded : pairs;
}

FlopsBreakdown finish(FlopsBreakdown b) {
  b.total = b.qk + b.softmax + b.av;
  return b;
}

void check_dims(const FlopsModel& m) {
  if (m.n < 1 || m.d_k < 1) throw Error("flops: n and d_k must be positive");
}

}  // namespace

FlopsModel FlopsModel::for_mask(const AttentionMask& m, std::int64_t d_k, double c1, double c2) {
  const double n = m.size();
  return FlopsModel{m.size(), d_k, static_cast<double>(m.nonzeros()) / (n * n), c1, c2};
}

FlopsBreakdown vanilla_flops(const FlopsModel& model) {
  check_dims(model);
  const double n = static_cast<double>(model.n);
  const double d = static_cast<double>(model.d_k);
  FlopsBreakdown b;
  b.qk = 2 * n * n * d + model.c1;
  b.softmax = (2 + model.c2) * n * n - n;
  b.av = 2 * n * n * d - n * d;
  return finish(b);
}

FlopsBreakdown masked_flops(const FlopsModel& model) {
  check_dims(model);
  const double n = static_cast<double>(model.n);
  const double d = static_cast<double>(model.d_k);
  const double pairs = unmasked_pairs(model);
  if (!(model.density <= 1.0) || pairs < n - 1e-9) {
    throw Error("flops: density must lie in [1/n, 1]");
  }
  FlopsBreakdown b;
  b.qk = 2 * pairs * d + model.c1;
  b.softmax = (2 + model.c2) * pairs - n;
  b.av = 2 * n * n * d - n * d;
  return finish(b);
}

double flops_ratio_limit(std::int64_t d_k, double density, double c2) {
  if (!(density > 0.0 && density <= 1.0)) throw Error("flops: density must lie in (0, 1]");
  const double d = static_cast<double>(d_k);
  return (4 * d + 2 + c2) / ((2 * density + 2) * d + 2 * density + density * c2);
}

FlopsBreakdown tally_to_flops(const OpTally& tally, double c1, double c2) {
  auto stage = [&](const OpTally::Stage& s) {
    return static_cast<double>(s.mul + s.add + s.div) + c2 * static_cast<double>(s.exp) +
           c1 * static_cast<double>(s.sqrt);
  };
  FlopsBreakdown b;
  b.qk = stage(tally.qk);
  b.softmax = stage(tally.softmax);
  b.av = stage(tally.av);
  return finish(b);
}

FlopsBreakdown counted_flops(KernelKind kernel, const AttentionInput& input, const AttentionMask& mask, double c1,
                             double c2) {
  OpTally tally;
  if (kernel == KernelKind::vanilla) {
    dense_masked_attention(input, mask, tally);
  } else {
    sparse_masked_attention(input, CompressedMask(mask), tally);
  }
  return tally_to_flops(tally, c1, c2);
}

}  // namespace bot
