#include "bot/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace bot {

namespace {

// Counting policies. The kernels call these once per executed operation;
// NoCount compiles away entirely.
struct NoCount {
  void qk() {}
  void softmax() {}
  void av() {}
  void mul(std::int64_t = 1) {}
  void add(std::int64_t = 1) {}
  void div(std::int64_t = 1) {}
  void exp(std::int64_t = 1) {}
  void sqrt(std::int64_t = 1) {}
};

struct Count {
  OpTally& tally;
  OpTally::Stage* stage = &tally.qk;
  void qk() { stage = &tally.qk; }
  void softmax() { stage = &tally.softmax; }
  void av() { stage = &tally.av; }
  void mul(std::int64_t k = 1) { stage->mul += k; }
  void add(std::int64_t k = 1) { stage->add += k; }
  void div(std::int64_t k = 1) { stage->div += k; }
  void exp(std::int64_t k = 1) { stage->exp += k; }
  void sqrt(std::int64_t k = 1) { stage->sqrt += k; }
};

constexpr double kMaskedLogit = std::numeric_limits<double>::lowest();

template <class Counter>
double dot(const double* a, const double* b, int d, Counter& c) {
  double acc = a[0] * b[0];
  c.mul();
  for (int t = 1; t < d; ++t) {
    acc += a[t] * b[t];
    c.mul();
    c.add();
  }
  return acc;
}

// out = P·V over every row of V. Tiled so that a block of V rows and a block
// of output rows stay in L1 together; for each output entry the sum still
// runs over j in ascending order, so results match the untiled loop bit for bit.
template <class Counter>
void weighted_sum(const Matrix& p, const Matrix& v, Matrix& out, Counter& c) {
  constexpr int kTile = 32;
  const int n = static_cast<int>(v.rows());
  const int d = static_cast<int>(v.cols());
  for (int i0 = 0; i0 < n; i0 += kTile) {
    const int i1 = std::min(n, i0 + kTile);
    for (int j0 = 0; j0 < n; j0 += kTile) {
      const int j1 = std::min(n, j0 + kTile);
      for (int i = i0; i < i1; ++i) {
        double* o = out.row(i).data();
        const double* pi = p.row(i).data();
        int j = j0;
        if (j == 0) {
          const double* v0 = v.row(0).data();
          for (int t = 0; t < d; ++t) {
            o[t] = pi[0] * v0[t];
            c.mul();
          }
          ++j;
        }
        for (; j < j1; ++j) {
          const double w = pi[j];
          const double* vj = v.row(j).data();
          for (int t = 0; t < d; ++t) {
            o[t] += w * vj[t];
            c.mul();
            c.add();
          }
        }
      }
    }
  }
}

// Normalizes logits[0..count) in place into probabilities. Max subtraction
// is stabilization only and is not tallied.
template <class Counter>
void softmax_in_place(double* logits, int count, Counter& c) {
  double peak = logits[0];
  for (int j = 1; j < count; ++j) peak = std::max(peak, logits[j]);
  double sum = 0.0;
  for (int j = 0; j < count; ++j) {
    logits[j] = std::exp(logits[j] - peak);
    c.exp();
    if (j == 0) {
      sum = logits[j];
    } else {
      sum += logits[j];
      c.add();
    }
  }
  for (int j = 0; j < count; ++j) {
    logits[j] /= sum;
    c.div();
  }
}

// Scores all n² pairs. `mask` and `bias` are optional; masked or -inf
// logits become kMaskedLogit so their exponential underflows to exactly 0.
template <class Counter>
Matrix dense_kernel(const AttentionInput& in, const AttentionMask* mask, const Matrix* bias, Counter& c,
                    Matrix* weights_out) {
  const int n = in.n();
  const int d = in.d_k();
  Matrix out(n, d);
  Matrix p(n, n);

  c.qk();
  const double root = std::sqrt(static_cast<double>(d));
  c.sqrt();

  for (int i = 0; i < n; ++i) {
    c.qk();
    const double* qi = in.q.row(i).data();
    double* row = p.row(i).data();
    for (int j = 0; j < n; ++j) {
      double s = dot(qi, in.k.row(j).data(), d, c) / root;
      c.div();
      if (mask && !(*mask)(i, j)) {
        s = kMaskedLogit;
      } else if (bias) {
        const double b = (*bias)(i, j);
        s = std::isinf(b) && b < 0 ? kMaskedLogit : s + b;
      }
      row[j] = s;
    }
    c.softmax();
    softmax_in_place(row, n, c);
  }
  c.av();
  weighted_sum(p, in.v, out, c);
  if (weights_out) *weights_out = std::move(p);
  return out;
}

template <class Counter>
Matrix sparse_kernel(const AttentionInput& in, const CompressedMask& mask, Counter& c, Matrix* weights_out) {
  const int n = in.n();
  const int d = in.d_k();
  Matrix out(n, d);
  Matrix p = Matrix::Zero(n, n);
  std::vector<double> logits(static_cast<size_t>(n));

  c.qk();
  const double root = std::sqrt(static_cast<double>(d));
  c.sqrt();

  for (int i = 0; i < n; ++i) {
    const int* cols = mask.row_begin(i);
    const int count = mask.row_nonzeros(i);
    c.qk();
    const double* qi = in.q.row(i).data();
    for (int t = 0; t < count; ++t) {
      logits[static_cast<size_t>(t)] = dot(qi, in.k.row(cols[t]).data(), d, c) / root;
      c.div();
    }
    c.softmax();
    softmax_in_place(logits.data(), count, c);
    for (int t = 0; t < count; ++t) p(i, cols[t]) = logits[static_cast<size_t>(t)];
  }
  // Masked-out weights are exact zeros; the product with V stays dense.
  c.av();
  weighted_sum(p, in.v, out, c);
  if (weights_out) *weights_out = std::move(p);
  return out;
}

void check_mask_size(const AttentionInput& in, int mask_n) {
  if (mask_n != in.n()) {
    throw Error("attention: mask is " + std::to_string(mask_n) + "x" + std::to_string(mask_n) + " but input has n=" +
                std::to_string(in.n()));
  }
}

void check_bias(const AttentionInput& in, const Matrix& bias) {
  if (bias.rows() != in.n() || bias.cols() != in.n()) throw Error("attention: bias must be n x n");
  for (int i = 0; i < bias.rows(); ++i) {
    bool live = false;
    for (int j = 0; j < bias.cols(); ++j) {
      const double b = bias(i, j);
      if (std::isnan(b) || (std::isinf(b) && b > 0)) throw Error("attention: bias entries must be finite or -inf");
      live = live || !std::isinf(b);
    }
    if (!live) throw Error("attention: bias row " + std::to_string(i) + " is entirely -inf");
  }
}

}  // namespace

void AttentionInput::validate() const {
  if (q.rows() < 1 || q.cols() < 1) throw Error("attention: empty input");
  if (k.rows() != q.rows() || v.rows() != q.rows() || k.cols() != q.cols() || v.cols() != q.cols()) {
    throw Error("attention: Q, K and V must share shape n x d_k");
  }
  if (!q.allFinite() || !k.allFinite() || !v.allFinite()) throw NonFiniteValue("attention: non-finite input entry");
}

CompressedMask::CompressedMask(const AttentionMask& m) : n_(m.size()) {
  offsets_.reserve(static_cast<size_t>(n_) + 1);
  offsets_.push_back(0);
  columns_.reserve(static_cast<size_t>(m.nonzeros()));
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j)
      if (m(i, j)) columns_.push_back(j);
    offsets_.push_back(static_cast<int>(columns_.size()));
  }
}

Matrix attention(const AttentionInput& input) {
  input.validate();
  NoCount c;
  return dense_kernel(input, nullptr, nullptr, c, nullptr);
}

Matrix attention(const AttentionInput& input, OpTally& tally) {
  input.validate();
  Count c{tally};
  return dense_kernel(input, nullptr, nullptr, c, nullptr);
}

Matrix biased_attention(const AttentionInput& input, const Matrix& bias) {
  input.validate();
  check_bias(input, bias);
  NoCount c;
  return dense_kernel(input, nullptr, &bias, c, nullptr);
}

Matrix dense_masked_attention(const AttentionInput& input, const AttentionMask& mask) {
  input.validate();
  check_mask_size(input, mask.size());
  NoCount c;
  return dense_kernel(input, &mask, nullptr, c, nullptr);
}

Matrix dense_masked_attention(const AttentionInput& input, const AttentionMask& mask, OpTally& tally) {
  input.validate();
  check_mask_size(input, mask.size());
  Count c{tally};
  return dense_kernel(input, &mask, nullptr, c, nullptr);
}

namespace {
void check_rows(const CompressedMask& mask) {
  for (int i = 0; i < mask.size(); ++i)
    if (mask.row_nonzeros(i) == 0) throw Error("attention: mask row " + std::to_string(i) + " has no unmasked entry");
}
}  // namespace

Matrix sparse_masked_attention(const AttentionInput& input, const CompressedMask& mask) {
  input.validate();
  check_mask_size(input, mask.size());
  check_rows(mask);
  NoCount c;
  return sparse_kernel(input, mask, c, nullptr);
}

Matrix sparse_masked_attention(const AttentionInput& input, const CompressedMask& mask, OpTally& tally) {
  input.validate();
  check_mask_size(input, mask.size());
  check_rows(mask);
  Count c{tally};
  return sparse_kernel(input, mask, c, nullptr);
}

Matrix sparse_masked_attention(const AttentionInput& input, const AttentionMask& mask) {
  return sparse_masked_attention(input, CompressedMask(mask));
}

AttentionResult attend_dense(const AttentionInput& input, const Matrix* bias) {
  input.validate();
  if (bias) check_bias(input, *bias);
  NoCount c;
  AttentionResult r;
  r.output = dense_kernel(input, nullptr, bias, c, &r.weights);
  return r;
}

AttentionResult attend_dense_masked(const AttentionInput& input, const AttentionMask& mask) {
  input.validate();
  check_mask_size(input, mask.size());
  NoCount c;
  AttentionResult r;
  r.output = dense_kernel(input, &mask, nullptr, c, &r.weights);
  return r;
}

AttentionResult attend_sparse(const AttentionInput& input, const CompressedMask& mask) {
  input.validate();
  check_mask_size(input, mask.size());
  check_rows(mask);
  NoCount c;
  AttentionResult r;
  r.output = sparse_kernel(input, mask, c, &r.weights);
  return r;
}

Matrix multi_head_masked_attention(const Matrix& x, const AttentionMask& mask, const MultiHeadWeights& weights,
                                   int heads) {
  const auto d_model = static_cast<int>(x.cols());
  if (heads < 1 || d_model % heads != 0) {
    throw Error("attention: d_model " + std::to_string(d_model) + " not divisible by " + std::to_string(heads) +
                " heads");
  }
  for (const Matrix* w : {&weights.wq, &weights.wk, &weights.wv, &weights.wo}) {
    if (w->rows() != d_model || w->cols() != d_model) throw Error("attention: projections must be d_model x d_model");
  }
  const int d_k = d_model / heads;
  const CompressedMask compressed(mask);
  const Matrix q = x * weights.wq;
  const Matrix k = x * weights.wk;
  const Matrix v = x * weights.wv;
  Matrix concat(x.rows(), d_model);
  for (int h = 0; h < heads; ++h) {
    AttentionInput in{q.middleCols(h * d_k, d_k), k.middleCols(h * d_k, d_k), v.middleCols(h * d_k, d_k)};
    concat.middleCols(h * d_k, d_k) = sparse_masked_attention(in, compressed);
  }
  return concat * weights.wo;
}

}  // namespace bot
