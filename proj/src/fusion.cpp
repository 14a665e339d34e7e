#include "mmcap/fusion.hpp"

namespace mmcap {

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "simple") return FusionMode::Simple;
  if (s == "attention") return FusionMode::Attention;
  throw ConfigError("unknown fusion mode '" + s + "' (allowed: simple, attention)");
}

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::Simple: return "simple";
    case FusionMode::Attention: return "attention";
  }
  throw ConfigError("invalid fusion mode value");
}

namespace {

const ModalityFusionParams& modality_params(const FusionParams& p, int k) {
  if (k < 0 || k >= p.modality_count())
    throw ConfigError("modality index " + std::to_string(k) + " out of range, model has " +
                      std::to_string(p.modality_count()) + " modalities");
  return p.modalities[static_cast<size_t>(k)];
}

void check_mode_params(const FusionParams& p) {
  if (p.modalities.empty()) throw EmptyInputError("fusion over zero modalities");
  if (p.w_s == nullptr || p.b_s == nullptr)
    throw ConfigError("fusion parameters missing shared pre-output block");
  for (const auto& m : p.modalities) {
    if (m.w_c == nullptr) throw ConfigError("fusion parameters missing a W_ck block");
    if (p.mode == FusionMode::Simple && m.b_c != nullptr)
      throw ConfigError("simple fusion must not carry per-modality biases");
    if (p.mode == FusionMode::Attention &&
        (m.b_c == nullptr || m.v_b == nullptr || m.b_b == nullptr))
      throw ConfigError("attention fusion missing per-modality attention parameters");
  }
  if (p.mode == FusionMode::Attention && (p.w_b == nullptr || p.w_b_vec == nullptr))
    throw ConfigError("attention fusion missing W_B/w_B");
}

}  // namespace

Value modality_projection(Graph& g, Value content, int modality, const FusionParams& p) {
  const ModalityFusionParams& m = modality_params(p, modality);
  if (p.mode == FusionMode::Attention)
    return g.affine(content, g.param(*m.w_c), g.param(*m.b_c));
  return g.matvec(g.param(*m.w_c), content);
}

Value modality_attention(Graph& g, Value s_prev, const std::vector<Value>& contents,
                         const FusionParams& p) {
  if (contents.empty()) throw EmptyInputError("modality_attention over zero modalities");
  if (static_cast<int>(contents.size()) != p.modality_count())
    throw ConfigError("modality_attention got " + std::to_string(contents.size()) +
                      " content vectors for " + std::to_string(p.modality_count()) +
                      " modalities");
  check_mode_params(p);
  if (p.mode != FusionMode::Attention)
    throw ConfigError("modality_attention requires attention fusion mode");

  Value w_b_mat = g.param(*p.w_b);
  Value w_b_vec = g.param(*p.w_b_vec);
  std::vector<Value> scores;
  scores.reserve(contents.size());
  for (size_t k = 0; k < contents.size(); ++k) {
    const ModalityFusionParams& m = p.modalities[k];
    Value z = g.tanh(g.dual_affine(s_prev, w_b_mat, contents[k], g.param(*m.v_b),
                                   g.param(*m.b_b)));
    scores.push_back(g.dot(w_b_vec, z));
  }
  return g.softmax(g.stack(scores));
}

FusedResult fused_preactivation(Graph& g, Value s_prev, const std::vector<Value>& contents,
                                const FusionParams& p) {
  check_mode_params(p);
  if (static_cast<int>(contents.size()) != p.modality_count())
    throw ConfigError("fused_preactivation got " + std::to_string(contents.size()) +
                      " content vectors for " + std::to_string(p.modality_count()) +
                      " modalities");

  FusedResult out;
  if (p.mode == FusionMode::Simple) {
    Value mix = modality_projection(g, contents[0], 0, p);
    for (size_t k = 1; k < contents.size(); ++k)
      mix = g.add(mix, modality_projection(g, contents[k], static_cast<int>(k), p));
    out.content_mix = mix;
  } else {
    std::vector<Value> projected;
    projected.reserve(contents.size());
    for (size_t k = 0; k < contents.size(); ++k)
      projected.push_back(modality_projection(g, contents[k], static_cast<int>(k), p));
    out.beta = modality_attention(g, s_prev, contents, p);
    out.content_mix = g.weighted_sum(out.beta, projected);
  }
  Value acc = g.add(g.matvec(g.param(*p.w_s), s_prev), out.content_mix);
  out.g_pre = g.tanh(g.add(acc, g.param(*p.b_s)));
  return out;
}

}  // namespace mmcap
