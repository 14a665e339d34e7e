#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mmcap/tensor.hpp"

namespace mmcap {

// One modality's time-ordered feature matrix (frames x dim). Feature files
// store float32; values are widened to double when they enter a graph.
struct FeatureSequence {
  std::string modality;
  int frames = 0;
  int dim = 0;
  std::vector<float> data;  // row-major

  Tensor frame(int t) const;
};

enum class EncoderMode { Blstm, Projection, Passthrough };

EncoderMode encoder_mode_from_string(const std::string& s);
std::string to_string(EncoderMode mode);

// LSTM weights in fused-gate storage, gate row order (i, f, o, c).
// The checkpoint format still names the per-gate blocks (W_xi, W_hi, b_i, ...)
// by slicing these rows.
struct LstmParams {
  Param* w_x = nullptr;  // [4*cells x input_dim]
  Param* w_h = nullptr;  // [4*cells x cells]
  Param* b = nullptr;    // [4*cells]
  int cells = 0;
  int input_dim = 0;
};

// Owning variant for tests and standalone use.
struct LstmParamStorage {
  Param w_x, w_h, b;
  LstmParamStorage(const std::string& scope, int cells, int input_dim);
  LstmParams view();
  int cells, input_dim;
};

// i,f,o = sigmoid gates; c_t = f*c_prev + i*tanh(...); h_t = o*tanh(c_t).
// Gate pre-activations are one fused dual_affine, then split; this is
// bit-identical to computing the four gates from row slices.
std::pair<Value, Value> lstm_step(Graph& g, Value x, Value h_prev, Value c_prev,
                                  const LstmParams& p);

struct EncoderSpec {
  EncoderMode mode = EncoderMode::Passthrough;
  int units = 0;  // cells per direction (blstm) or projection width
  int input_dim = 0;

  int output_dim() const;
};

struct EncoderParams {
  EncoderSpec spec;
  LstmParams fwd, bwd;     // blstm mode
  Param* w_p = nullptr;    // projection mode
  Param* b_p = nullptr;
};

struct EncoderOutput {
  std::string modality;
  std::vector<Value> states;  // L hidden vectors, all of dimension `width`
  int width = 0;

  int length() const { return static_cast<int>(states.size()); }
};

// h_t = [forward state at t; backward state at t], zero initial states both ways.
EncoderOutput blstm_encode(Graph& g, const std::vector<Value>& inputs, const LstmParams& fwd,
                           const LstmParams& bwd);

EncoderOutput encode_modality(Graph& g, const FeatureSequence& f, const EncoderParams& p);

}  // namespace mmcap
