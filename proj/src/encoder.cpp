#include "mmcap/encoder.hpp"

namespace mmcap {

Tensor FeatureSequence::frame(int t) const {
  if (t < 0 || t >= frames)
    throw DimensionError("frame " + std::to_string(t) + " out of range, sequence has " +
                         std::to_string(frames));
  Tensor out = Tensor::zeros({dim});
  for (int i = 0; i < dim; ++i)
    out.at(i) = static_cast<double>(data[static_cast<size_t>(t) * dim + i]);
  return out;
}

EncoderMode encoder_mode_from_string(const std::string& s) {
  if (s == "blstm") return EncoderMode::Blstm;
  if (s == "projection") return EncoderMode::Projection;
  if (s == "passthrough") return EncoderMode::Passthrough;
  throw ConfigError("unknown encoder mode '" + s +
                    "' (allowed: blstm, projection, passthrough)");
}

std::string to_string(EncoderMode mode) {
  switch (mode) {
    case EncoderMode::Blstm: return "blstm";
    case EncoderMode::Projection: return "projection";
    case EncoderMode::Passthrough: return "passthrough";
  }
  throw ConfigError("invalid encoder mode value");
}

LstmParamStorage::LstmParamStorage(const std::string& scope, int c, int in)
    : w_x(scope + ".W_x", Tensor::zeros({4 * c, in})),
      w_h(scope + ".W_h", Tensor::zeros({4 * c, c})),
      b(scope + ".b", Tensor::zeros({4 * c})),
      cells(c),
      input_dim(in) {}

LstmParams LstmParamStorage::view() {
  LstmParams p;
  p.w_x = &w_x;
  p.w_h = &w_h;
  p.b = &b;
  p.cells = cells;
  p.input_dim = input_dim;
  return p;
}

std::pair<Value, Value> lstm_step(Graph& g, Value x, Value h_prev, Value c_prev,
                                  const LstmParams& p) {
  int c = p.cells;
  Value pre = g.dual_affine(x, g.param(*p.w_x), h_prev, g.param(*p.w_h), g.param(*p.b));
  Value gate_i = g.sigmoid(g.slice(pre, 0, c));
  Value gate_f = g.sigmoid(g.slice(pre, c, c));
  Value gate_o = g.sigmoid(g.slice(pre, 2 * c, c));
  Value cand = g.tanh(g.slice(pre, 3 * c, c));
  Value c_t = g.add(g.mul(gate_f, c_prev), g.mul(gate_i, cand));
  Value h_t = g.mul(gate_o, g.tanh(c_t));
  return {h_t, c_t};
}

int EncoderSpec::output_dim() const {
  switch (mode) {
    case EncoderMode::Blstm: return 2 * units;
    case EncoderMode::Projection: return units;
    case EncoderMode::Passthrough: return input_dim;
  }
  throw ConfigError("invalid encoder mode value");
}

EncoderOutput blstm_encode(Graph& g, const std::vector<Value>& inputs, const LstmParams& fwd,
                           const LstmParams& bwd) {
  if (inputs.empty()) throw EmptyInputError("blstm_encode on an empty sequence");
  int len = static_cast<int>(inputs.size());

  std::vector<Value> forward(static_cast<size_t>(len));
  Value h = g.input(Tensor::zeros({fwd.cells}));
  Value c = g.input(Tensor::zeros({fwd.cells}));
  for (int t = 0; t < len; ++t) {
    auto [ht, ct] = lstm_step(g, inputs[static_cast<size_t>(t)], h, c, fwd);
    forward[static_cast<size_t>(t)] = ht;
    h = ht;
    c = ct;
  }

  std::vector<Value> backward(static_cast<size_t>(len));
  h = g.input(Tensor::zeros({bwd.cells}));
  c = g.input(Tensor::zeros({bwd.cells}));
  for (int t = len - 1; t >= 0; --t) {
    auto [ht, ct] = lstm_step(g, inputs[static_cast<size_t>(t)], h, c, bwd);
    backward[static_cast<size_t>(t)] = ht;
    h = ht;
    c = ct;
  }

  EncoderOutput out;
  out.width = fwd.cells + bwd.cells;
  out.states.reserve(static_cast<size_t>(len));
  for (int t = 0; t < len; ++t)
    out.states.push_back(
        g.concat(forward[static_cast<size_t>(t)], backward[static_cast<size_t>(t)]));
  return out;
}

EncoderOutput encode_modality(Graph& g, const FeatureSequence& f, const EncoderParams& p) {
  if (f.frames < 1) throw EmptyInputError("modality '" + f.modality + "' has no frames");
  if (f.dim != p.spec.input_dim)
    throw DimensionError("modality '" + f.modality + "' feature dim " + std::to_string(f.dim) +
                         " does not match encoder input dim " +
                         std::to_string(p.spec.input_dim));

  std::vector<Value> inputs;
  inputs.reserve(static_cast<size_t>(f.frames));
  for (int t = 0; t < f.frames; ++t) inputs.push_back(g.input(f.frame(t)));

  EncoderOutput out;
  switch (p.spec.mode) {
    case EncoderMode::Blstm:
      out = blstm_encode(g, inputs, p.fwd, p.bwd);
      break;
    case EncoderMode::Passthrough:
      out.states = inputs;
      out.width = f.dim;
      break;
    case EncoderMode::Projection: {
      out.width = p.spec.units;
      out.states.reserve(inputs.size());
      for (Value x : inputs)
        out.states.push_back(g.tanh(g.affine(x, g.param(*p.w_p), g.param(*p.b_p))));
      break;
    }
  }
  out.modality = f.modality;
  return out;
}

}  // namespace mmcap
