#include "mmcap/model.hpp"

#include <cmath>

namespace mmcap {

InitStatePolicy init_policy_from_string(const std::string& s) {
  if (s == "zero") return InitStatePolicy::Zero;
  if (s == "encoder-final") return InitStatePolicy::EncoderFinal;
  throw ConfigError("unknown init-state policy '" + s + "' (allowed: zero, encoder-final)");
}

std::string to_string(InitStatePolicy p) {
  return p == InitStatePolicy::Zero ? "zero" : "encoder-final";
}

FusionMode ModelConfig::fusion_mode() const {
  if (fusion == "unimodal" || fusion == "simple") return FusionMode::Simple;
  if (fusion == "attention") return FusionMode::Attention;
  throw ConfigError("unknown fusion mode '" + fusion +
                    "' (allowed: unimodal, simple, attention)");
}

void ModelConfig::validate() const {
  if (modalities.empty()) throw ConfigError("model needs at least one modality");
  if (fusion == "unimodal" && modalities.size() != 1)
    throw ConfigError("unimodal fusion requires exactly one modality, config has " +
                      std::to_string(modalities.size()));
  (void)fusion_mode();
  if (decoder_cells < 1 || embed_dim < 1) throw ConfigError("decoder dims must be positive");
  for (const auto& m : modalities) {
    if (m.name.empty()) throw ConfigError("modality with empty name");
    if (m.feature_dim < 1)
      throw ConfigError("modality '" + m.name + "' needs a positive feature dim");
    if (m.encoder != EncoderMode::Passthrough && m.units < 1)
      throw ConfigError("modality '" + m.name + "' encoder needs positive units");
  }
  for (size_t i = 0; i < modalities.size(); ++i)
    for (size_t j = i + 1; j < modalities.size(); ++j)
      if (modalities[i].name == modalities[j].name)
        throw ConfigError("duplicate modality name '" + modalities[i].name + "'");
}

Param* CaptionModel::add_param(const std::string& name, const Shape& shape) {
  storage_.push_back(std::make_unique<Param>(name, Tensor::zeros(shape)));
  return storage_.back().get();
}

LstmParams CaptionModel::add_lstm(const std::string& scope, int cells, int input_dim) {
  LstmParams p;
  p.w_x = add_param(scope + ".W_x", {4 * cells, input_dim});
  p.w_h = add_param(scope + ".W_h", {4 * cells, cells});
  p.b = add_param(scope + ".b", {4 * cells});
  p.cells = cells;
  p.input_dim = input_dim;
  return p;
}

CaptionModel::CaptionModel(ModelConfig cfg, Vocabulary vocab)
    : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
  cfg_.validate();
  if (vocab_.size() <= Vocabulary::kUnk)
    throw ConfigError("vocabulary is missing reserved tokens");

  int sdim = cfg_.decoder_cells;
  int adim = cfg_.resolved_attention_dim();
  int bdim = cfg_.resolved_modality_attention_dim();
  int gdim = cfg_.resolved_fusion_dim();
  FusionMode fmode = cfg_.fusion_mode();

  for (const ModalitySpec& spec : cfg_.modalities) {
    ModalityBlocks blocks;
    blocks.enc.spec.mode = spec.encoder;
    blocks.enc.spec.units = spec.units;
    blocks.enc.spec.input_dim = spec.feature_dim;
    std::string scope = "encoder." + spec.name;
    switch (spec.encoder) {
      case EncoderMode::Blstm:
        blocks.enc.fwd = add_lstm(scope + ".fwd", spec.units, spec.feature_dim);
        blocks.enc.bwd = add_lstm(scope + ".bwd", spec.units, spec.feature_dim);
        break;
      case EncoderMode::Projection:
        blocks.enc.w_p = add_param(scope + ".W_p", {spec.units, spec.feature_dim});
        blocks.enc.b_p = add_param(scope + ".b_p", {spec.units});
        break;
      case EncoderMode::Passthrough:
        break;
    }
    int hdim = blocks.enc.spec.output_dim();
    std::string attn_scope = "attn." + spec.name;
    blocks.attn.w_mat = add_param(attn_scope + ".W_A", {adim, sdim});
    blocks.attn.v_mat = add_param(attn_scope + ".V_A", {adim, hdim});
    blocks.attn.w_vec = add_param(attn_scope + ".w_A", {adim});
    blocks.attn.b_vec = add_param(attn_scope + ".b_A", {adim});
    mods_.push_back(blocks);
  }

  embedding_ = add_param("decoder.E", {vocab_.size(), cfg_.embed_dim});
  int dec_input = cfg_.embed_dim + (cfg_.feed_content ? gdim : 0);
  dec_ = add_lstm("decoder", sdim, dec_input);

  fusion_.mode = fmode;
  fusion_.w_s = add_param("fusion.W_s", {gdim, sdim});
  fusion_.b_s = add_param("fusion.b_s", {gdim});
  for (size_t k = 0; k < mods_.size(); ++k) {
    std::string tag = std::to_string(k + 1);
    int cdim = mods_[k].enc.spec.output_dim();
    ModalityFusionParams m;
    m.w_c = add_param("fusion.W_c" + tag, {gdim, cdim});
    if (fmode == FusionMode::Attention) m.b_c = add_param("fusion.b_c" + tag, {gdim});
    fusion_.modalities.push_back(m);
  }
  if (fmode == FusionMode::Attention) {
    fusion_.w_b = add_param("fusion.W_B", {bdim, sdim});
    fusion_.w_b_vec = add_param("fusion.w_B", {bdim});
    for (size_t k = 0; k < mods_.size(); ++k) {
      std::string tag = std::to_string(k + 1);
      int cdim = mods_[k].enc.spec.output_dim();
      fusion_.modalities[k].v_b = add_param("fusion.V_B" + tag, {bdim, cdim});
      fusion_.modalities[k].b_b = add_param("fusion.b_B" + tag, {bdim});
    }
  }

  w_g_ = add_param("decoder.W_g", {vocab_.size(), gdim});
  b_g_ = add_param("decoder.b_g", {vocab_.size()});

  if (cfg_.init_state == InitStatePolicy::EncoderFinal) {
    for (size_t k = 0; k < mods_.size(); ++k)
      init_w_.push_back(add_param("init." + cfg_.modalities[k].name + ".W_s0",
                                  {sdim, mods_[k].enc.spec.output_dim()}));
    init_b_ = add_param("init.b_s0", {sdim});
  }
}

void CaptionModel::init_params(RngStream& rng) {
  for (auto& p : storage_) {
    const Shape& s = p->value.shape;
    if (s.size() == 2) {
      double r = std::sqrt(6.0 / (s[0] + s[1]));
      for (int i = 0; i < p->value.numel(); ++i) p->value.at(i) = rng.uniform(-r, r);
    } else {
      // biases and score vectors start at zero except w_A/w_B, which would
      // freeze the attention scores at exactly zero
      if (p->name.ends_with(".w_A") || p->name.ends_with(".w_B")) {
        double r = std::sqrt(3.0 / s[0]);
        for (int i = 0; i < p->value.numel(); ++i) p->value.at(i) = rng.uniform(-r, r);
      } else {
        for (int i = 0; i < p->value.numel(); ++i) p->value.at(i) = 0.0;
      }
    }
  }
}

std::vector<Param*> CaptionModel::params() {
  std::vector<Param*> out;
  out.reserve(storage_.size());
  for (auto& p : storage_) out.push_back(p.get());
  return out;
}

Param* CaptionModel::find_param(const std::string& name) {
  for (auto& p : storage_)
    if (p->name == name) return p.get();
  return nullptr;
}

void CaptionModel::zero_grads() {
  for (auto& p : storage_) p->zero_grad();
}

CaptionModel::Encoded CaptionModel::encode(Graph& g,
                                           const std::vector<FeatureSequence>& features) const {
  Encoded enc;
  for (size_t k = 0; k < cfg_.modalities.size(); ++k) {
    const std::string& want = cfg_.modalities[k].name;
    const FeatureSequence* found = nullptr;
    for (const FeatureSequence& f : features)
      if (f.modality == want) {
        found = &f;
        break;
      }
    if (!found) throw ConfigError("missing modality '" + want + "' in the provided features");
    enc.streams.push_back(encode_modality(g, *found, mods_[k].enc));
  }
  return enc;
}

CaptionModel::State CaptionModel::initial_state(Graph& g, const Encoded& enc) const {
  State s;
  s.c = g.input(Tensor::zeros({cfg_.decoder_cells}));
  s.word_index = 0;
  if (cfg_.init_state == InitStatePolicy::Zero) {
    s.h = g.input(Tensor::zeros({cfg_.decoder_cells}));
    return s;
  }
  // mean over modalities of an affine of each modality's final state, squashed
  Value acc;
  for (size_t k = 0; k < enc.streams.size(); ++k) {
    Value last = enc.streams[k].states.back();
    Value term = g.matvec(g.param(*init_w_[k]), last);
    acc = k == 0 ? term : g.add(acc, term);
  }
  acc = g.scale(acc, 1.0 / static_cast<double>(enc.streams.size()));
  s.h = g.tanh(g.add(acc, g.param(*init_b_)));
  return s;
}

Value CaptionModel::embed(Graph& g, int token) const {
  if (token < 0 || token >= vocab_.size())
    throw VocabularyError("token id " + std::to_string(token) +
                          " out of range for vocabulary of size " +
                          std::to_string(vocab_.size()));
  return g.pick_row(g.param(*embedding_), token);
}

CaptionModel::State CaptionModel::advance(Graph& g, const State& s, int token,
                                          Value content) const {
  Value x = embed(g, token);
  if (cfg_.feed_content) {
    if (!content.valid()) content = g.input(Tensor::zeros({cfg_.resolved_fusion_dim()}));
    x = g.concat(x, content);
  }
  auto [h, c] = lstm_step(g, x, s.h, s.c, dec_);
  return State{h, c, s.word_index + 1};
}

CaptionModel::StepOut CaptionModel::predict(Graph& g, const State& s, const Encoded& enc) const {
  StepOut out;
  std::vector<Value> contents;
  contents.reserve(enc.streams.size());
  for (size_t k = 0; k < enc.streams.size(); ++k) {
    Value scores = attention_scores(g, s.h, enc.streams[k], mods_[k].attn);
    Value alpha = attention_weights(g, scores);
    out.alphas.push_back(alpha);
    contents.push_back(content_vector(g, alpha, enc.streams[k]));
  }
  FusedResult fused = fused_preactivation(g, s.h, contents, fusion_);
  out.g_pre = fused.g_pre;
  out.content_mix = fused.content_mix;
  out.beta = fused.beta;
  out.logits = g.affine(fused.g_pre, g.param(*w_g_), g.param(*b_g_));
  return out;
}

Value CaptionModel::output_distribution(Graph& g, Value g_pre) const {
  return g.softmax(g.affine(g_pre, g.param(*w_g_), g.param(*b_g_)));
}

}  // namespace mmcap
