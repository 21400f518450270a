#pragma once

#include "bot/encoder.hpp"

namespace bot::detail {

// Accumulates the tokenizer gradient given dL/d(tokens).
void tokenizer_backward(const Vector& obs, const EmbodimentGraph& g, const Allocation& alloc,
                        const TokenizerParameters& params, const Matrix& d_tokens, TokenizerParameters& grad);

}  // namespace bot::detail
