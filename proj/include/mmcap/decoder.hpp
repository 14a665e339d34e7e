#pragma once

#include <vector>

#include "mmcap/model.hpp"

namespace mmcap {

// Per generated word: temporal weights per modality and modality weights.
// The final row covers the step that produced <eos>.
struct AttentionTrace {
  std::vector<std::vector<std::vector<double>>> alphas;  // [word][modality][frame]
  std::vector<std::vector<double>> betas;                // [word][modality]; empty in simple mode
};

struct Hypothesis {
  std::vector<int> tokens;  // includes the trailing <eos> once finished
  double log_prob = 0.0;
  bool finished = false;
};

struct DecodeResult {
  std::vector<int> tokens;  // sentence tokens, <eos> excluded
  double log_prob = 0.0;    // includes the <eos> term
  AttentionTrace trace;
};

// Argmax decoding from <sos>; ties broken by lowest token id. A sentence that
// reaches max_len tokens is closed by a forced <eos> step so every result is
// a complete hypothesis.
DecodeResult greedy_decode(const CaptionModel& model,
                           const std::vector<FeatureSequence>& features, int max_len);

// Breadth-limited search keeping `width` best partial hypotheses per step;
// hypotheses that emit <eos> leave the beam. Returns up to `width` finished
// hypotheses, best first; ties broken by lexicographically smaller token ids.
std::vector<Hypothesis> beam_search(const CaptionModel& model,
                                    const std::vector<FeatureSequence>& features, int width,
                                    int max_len);

// Deterministic replay of a fixed sentence, recording attention and score.
// Used to trace the winning beam hypothesis; `tokens` excludes <eos>.
DecodeResult trace_tokens(const CaptionModel& model,
                          const std::vector<FeatureSequence>& features,
                          const std::vector<int>& tokens);

}  // namespace mmcap
