#pragma once

#include <string>
#include <vector>

#include "mmcap/encoder.hpp"
#include "mmcap/tensor.hpp"

namespace mmcap {

// Score parameters for one modality's temporal attention:
// e_t = w_A . tanh(W_A s_prev + V_A h_t + b_A)
struct TemporalAttentionParams {
  Param* w_mat = nullptr;   // W_A [a x s-dim]
  Param* v_mat = nullptr;   // V_A [a x h-dim]
  Param* w_vec = nullptr;   // w_A [a]
  Param* b_vec = nullptr;   // b_A [a]
};

struct TemporalAttentionStorage {
  Param w_mat, v_mat, w_vec, b_vec;
  TemporalAttentionStorage(const std::string& scope, int inner, int state_dim, int hidden_dim);
  TemporalAttentionParams view();
};

// one scalar score per encoder frame
Value attention_scores(Graph& g, Value s_prev, const EncoderOutput& states,
                       const TemporalAttentionParams& p);

// softmax over time
Value attention_weights(Graph& g, Value scores);

// convex combination of encoder states
Value content_vector(Graph& g, Value alpha, const EncoderOutput& states);

}  // namespace mmcap
