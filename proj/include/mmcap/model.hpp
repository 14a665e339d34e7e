#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mmcap/attention.hpp"
#include "mmcap/encoder.hpp"
#include "mmcap/fusion.hpp"
#include "mmcap/rng.hpp"
#include "mmcap/tensor.hpp"
#include "mmcap/vocab.hpp"

namespace mmcap {

enum class InitStatePolicy { Zero, EncoderFinal };

InitStatePolicy init_policy_from_string(const std::string& s);
std::string to_string(InitStatePolicy p);

struct ModalitySpec {
  std::string name;
  EncoderMode encoder = EncoderMode::Passthrough;
  int units = 0;        // blstm cells per direction, or projection width
  int feature_dim = 0;
};

struct ModelConfig {
  std::vector<ModalitySpec> modalities;
  std::string fusion = "attention";  // unimodal | simple | attention
  int decoder_cells = 512;
  int embed_dim = 256;
  int attention_dim = 0;           // 0 -> decoder_cells
  int modality_attention_dim = 0;  // 0 -> decoder_cells
  int fusion_dim = 0;              // width of g_i, 0 -> decoder_cells
  InitStatePolicy init_state = InitStatePolicy::Zero;
  bool feed_content = false;       // ablation: feed the content mix into the decoder LSTM

  FusionMode fusion_mode() const;
  void validate() const;
  int resolved_attention_dim() const { return attention_dim > 0 ? attention_dim : decoder_cells; }
  int resolved_modality_attention_dim() const {
    return modality_attention_dim > 0 ? modality_attention_dim : decoder_cells;
  }
  int resolved_fusion_dim() const { return fusion_dim > 0 ? fusion_dim : decoder_cells; }
};

// Full encoder-attention-fusion-decoder parameter set plus the graph-building
// steps shared by training and decoding.
class CaptionModel {
 public:
  CaptionModel(ModelConfig cfg, Vocabulary vocab);

  void init_params(RngStream& rng);

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  std::vector<Param*> params();
  Param* find_param(const std::string& name);
  void zero_grads();

  struct Encoded {
    std::vector<EncoderOutput> streams;  // model modality order
  };

  struct State {
    Value h;
    Value c;
    int word_index = 0;
  };

  struct StepOut {
    Value logits;       // [|V|]
    Value g_pre;
    Value content_mix;  // used for the content-fed decoder variant
    std::vector<Value> alphas;  // per modality, [L_k]
    Value beta;                 // invalid in simple/unimodal mode
  };

  // features must cover every model modality by name; extra sequences ignored
  Encoded encode(Graph& g, const std::vector<FeatureSequence>& features) const;

  // pre-<sos> state per the init policy; callers advance with <sos> to form s_0
  State initial_state(Graph& g, const Encoded& enc) const;

  Value embed(Graph& g, int token) const;

  // one decoder LSTM update with the embedding of `token` as input
  State advance(Graph& g, const State& s, int token, Value content = Value{}) const;

  // attention + fusion + output logits from the current state
  StepOut predict(Graph& g, const State& s, const Encoded& enc) const;

  Value output_distribution(Graph& g, Value g_pre) const;

  const FusionParams& fusion_params() const { return fusion_; }
  const LstmParams& decoder_lstm() const { return dec_; }

 private:
  ModelConfig cfg_;
  Vocabulary vocab_;
  std::vector<std::unique_ptr<Param>> storage_;

  struct ModalityBlocks {
    EncoderParams enc;
    TemporalAttentionParams attn;
  };
  std::vector<ModalityBlocks> mods_;
  LstmParams dec_;
  Param* embedding_ = nullptr;
  FusionParams fusion_;
  Param* w_g_ = nullptr;
  Param* b_g_ = nullptr;
  std::vector<Param*> init_w_;  // encoder-final policy, one per modality
  Param* init_b_ = nullptr;

  Param* add_param(const std::string& name, const Shape& shape);
  LstmParams add_lstm(const std::string& scope, int cells, int input_dim);
};

}  // namespace mmcap
