#include "mmcap/attention.hpp"

namespace mmcap {

TemporalAttentionStorage::TemporalAttentionStorage(const std::string& scope, int inner,
                                                   int state_dim, int hidden_dim)
    : w_mat(scope + ".W_A", Tensor::zeros({inner, state_dim})),
      v_mat(scope + ".V_A", Tensor::zeros({inner, hidden_dim})),
      w_vec(scope + ".w_A", Tensor::zeros({inner})),
      b_vec(scope + ".b_A", Tensor::zeros({inner})) {}

TemporalAttentionParams TemporalAttentionStorage::view() {
  return TemporalAttentionParams{&w_mat, &v_mat, &w_vec, &b_vec};
}

Value attention_scores(Graph& g, Value s_prev, const EncoderOutput& states,
                       const TemporalAttentionParams& p) {
  if (states.states.empty())
    throw EmptyInputError("attention_scores over an empty encoder output");
  Value w_a = g.param(*p.w_mat);
  Value v_a = g.param(*p.v_mat);
  Value wvec = g.param(*p.w_vec);
  Value bvec = g.param(*p.b_vec);
  std::vector<Value> scores;
  scores.reserve(states.states.size());
  for (const Value& h : states.states)
    scores.push_back(g.dot(wvec, g.tanh(g.dual_affine(s_prev, w_a, h, v_a, bvec))));
  return g.stack(scores);
}

Value attention_weights(Graph& g, Value scores) {
  if (g.value(scores).numel() < 1) throw EmptyInputError("attention_weights on empty scores");
  return g.softmax(scores);
}

Value content_vector(Graph& g, Value alpha, const EncoderOutput& states) {
  if (g.value(alpha).numel() != states.length())
    throw DimensionError("attention weights length " +
                         std::to_string(g.value(alpha).numel()) + " vs " +
                         std::to_string(states.length()) + " encoder states");
  return g.weighted_sum(alpha, states.states);
}

}  // namespace mmcap
