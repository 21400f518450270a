#pragma once

#include <cstdint>
#include <vector>

#include "bot/graph.hpp"
#include "bot/types.hpp"

namespace bot {

// Q, K, V share shape n×d_k (d_v = d_k).
struct AttentionInput {
  Matrix q;
  Matrix k;
  Matrix v;

  int n() const { return static_cast<int>(q.rows()); }
  int d_k() const { return static_cast<int>(q.cols()); }
  // Throws on shape disagreement or non-finite entries.
  void validate() const;
};

// Per-row list of unmasked columns. Built once per mask and reused.
class CompressedMask {
 public:
  CompressedMask() = default;
  explicit CompressedMask(const AttentionMask& m);

  int size() const { return n_; }
  std::int64_t nonzeros() const { return static_cast<std::int64_t>(columns_.size()); }
  const int* row_begin(int i) const { return columns_.data() + offsets_[static_cast<size_t>(i)]; }
  const int* row_end(int i) const { return columns_.data() + offsets_[static_cast<size_t>(i) + 1]; }
  int row_nonzeros(int i) const { return offsets_[static_cast<size_t>(i) + 1] - offsets_[static_cast<size_t>(i)]; }

 private:
  int n_ = 0;
  std::vector<int> offsets_;
  std::vector<int> columns_;
};

// Executed floating-point operations of one attention call, split by stage.
// Square roots and exponentials are tallied separately so the caller can
// weight them (c1, c2) when converting to FLOPs.
struct OpTally {
  struct Stage {
    std::int64_t mul = 0;
    std::int64_t add = 0;
    std::int64_t div = 0;
    std::int64_t exp = 0;
    std::int64_t sqrt = 0;
  };
  Stage qk;
  Stage softmax;
  Stage av;
};

// Output together with the n×n row-stochastic weight matrix (zeros where masked).
struct AttentionResult {
  Matrix output;
  Matrix weights;
};

Matrix attention(const AttentionInput& input);

// softmax(QKᵀ/√d_k + B)V. Entries of B may be -infinity; a row that is
// entirely -infinity is rejected.
Matrix biased_attention(const AttentionInput& input, const Matrix& bias);

// Reference masked kernel: scores every pair, forces masked logits to the
// lowest finite double, then normalizes.
Matrix dense_masked_attention(const AttentionInput& input, const AttentionMask& mask);
Matrix dense_masked_attention(const AttentionInput& input, const AttentionMask& mask, OpTally& tally);

// Scores only unmasked pairs and normalizes over them; the weighted sum
// over V stays dense.
Matrix sparse_masked_attention(const AttentionInput& input, const CompressedMask& mask);
Matrix sparse_masked_attention(const AttentionInput& input, const CompressedMask& mask, OpTally& tally);
Matrix sparse_masked_attention(const AttentionInput& input, const AttentionMask& mask);

// Unmasked kernel with instrumentation.
Matrix attention(const AttentionInput& input, OpTally& tally);

// Variants that also hand back the weights (used by training).
AttentionResult attend_dense(const AttentionInput& input, const Matrix* bias);
AttentionResult attend_dense_masked(const AttentionInput& input, const AttentionMask& mask);
AttentionResult attend_sparse(const AttentionInput& input, const CompressedMask& mask);

// Projections for h heads. Head `i` uses columns [i·d_k, (i+1)·d_k) of
// wq/wk/wv, each d_model×d_model; wo maps the concatenated heads back.
struct MultiHeadWeights {
  Matrix wq;
  Matrix wk;
  Matrix wv;
  Matrix wo;
};

// Every head attends with the same mask.
Matrix multi_head_masked_attention(const Matrix& x, const AttentionMask& mask, const MultiHeadWeights& weights,
                                   int heads);

}  // namespace bot
