#pragma once

#include <string>
#include <vector>

#include "mmcap/tensor.hpp"

namespace mmcap {

enum class FusionMode { Simple, Attention };

FusionMode fusion_mode_from_string(const std::string& s);
std::string to_string(FusionMode mode);

// Per-modality parameters involved in combining content vectors. In simple
// mode only w_c exists (the printed simple-fusion equation has no per-modality
// bias); attention mode adds b_c and the modality-attention blocks.
struct ModalityFusionParams {
  Param* w_c = nullptr;   // W_ck [g-dim x c_k-dim]
  Param* b_c = nullptr;   // b_ck [g-dim], attention mode only
  Param* v_b = nullptr;   // V_Bk [b-dim x c_k-dim], attention mode only
  Param* b_b = nullptr;   // b_Bk [b-dim], attention mode only
};

struct FusionParams {
  FusionMode mode = FusionMode::Simple;
  Param* w_s = nullptr;   // [g-dim x s-dim]
  Param* b_s = nullptr;   // [g-dim]
  Param* w_b = nullptr;   // W_B [b-dim x s-dim], attention mode only
  Param* w_b_vec = nullptr;  // w_B [b-dim], attention mode only
  std::vector<ModalityFusionParams> modalities;

  int modality_count() const { return static_cast<int>(modalities.size()); }
};

// d_{k,i} = W_ck c_{k,i} + b_ck (b_ck fixed at zero in simple mode)
Value modality_projection(Graph& g, Value content, int modality, const FusionParams& p);

// beta over modalities: softmax_k of w_B . tanh(W_B s_prev + V_Bk c_k + b_Bk)
Value modality_attention(Graph& g, Value s_prev, const std::vector<Value>& contents,
                         const FusionParams& p);

struct FusedResult {
  Value g_pre;        // g_i
  Value content_mix;  // sum_k W_ck c_k (simple) or sum_k beta_k d_k (attention)
  Value beta;         // invalid in simple mode
};

// simple:    g_i = tanh(W_s s_prev + sum_k W_ck c_k + b_s)
// attention: g_i = tanh(W_s s_prev + sum_k beta_k d_k + b_s)
FusedResult fused_preactivation(Graph& g, Value s_prev, const std::vector<Value>& contents,
                                const FusionParams& p);

}  // namespace mmcap
