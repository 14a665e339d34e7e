#include "mmcap/decoder.hpp"

#include <algorithm>
#include <cmath>

namespace mmcap {

namespace {

// log softmax of raw logit values
std::vector<double> log_probs(const Tensor& logits) {
  int n = logits.numel();
  double m = logits.at(0);
  for (int i = 1; i < n; ++i) m = std::max(m, logits.at(i));
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += std::exp(logits.at(i) - m);
  double lse = m + std::log(acc);
  std::vector<double> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = logits.at(i) - lse;
  return out;
}

bool emittable(int token) { return token != Vocabulary::kPad && token != Vocabulary::kSos; }

void record_step(AttentionTrace& trace, Graph& g, const CaptionModel::StepOut& out) {
  std::vector<std::vector<double>> alpha_row;
  for (const Value& a : out.alphas) alpha_row.push_back(g.value(a).data);
  trace.alphas.push_back(std::move(alpha_row));
  if (out.beta.valid()) trace.betas.push_back(g.value(out.beta).data);
}

}  // namespace

DecodeResult greedy_decode(const CaptionModel& model,
                           const std::vector<FeatureSequence>& features, int max_len) {
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  Graph g;
  auto enc = model.encode(g, features);
  auto state = model.advance(g, model.initial_state(g, enc), Vocabulary::kSos);

  DecodeResult result;
  for (int step = 1; step <= max_len + 1; ++step) {
    auto out = model.predict(g, state, enc);
    record_step(result.trace, g, out);
    auto lp = log_probs(g.value(out.logits));
    int token;
    if (step == max_len + 1) {
      token = Vocabulary::kEos;  // forced closure at the length limit
    } else {
      token = -1;
      for (int id = 0; id < static_cast<int>(lp.size()); ++id) {
        if (!emittable(id)) continue;
        if (token < 0 || lp[static_cast<size_t>(id)] > lp[static_cast<size_t>(token)])
          token = id;
      }
    }
    result.log_prob += lp[static_cast<size_t>(token)];
    if (token == Vocabulary::kEos) break;
    result.tokens.push_back(token);
    state = model.advance(g, state, token, out.content_mix);
  }
  return result;
}

namespace {

struct BeamEntry {
  std::vector<int> tokens;
  double log_prob = 0.0;
  CaptionModel::State state;
};

bool better(double score_a, const std::vector<int>& tokens_a, double score_b,
            const std::vector<int>& tokens_b) {
  if (score_a != score_b) return score_a > score_b;
  return std::lexicographical_compare(tokens_a.begin(), tokens_a.end(), tokens_b.begin(),
                                      tokens_b.end());
}

}  // namespace

std::vector<Hypothesis> beam_search(const CaptionModel& model,
                                    const std::vector<FeatureSequence>& features, int width,
                                    int max_len) {
  if (width < 1) throw ConfigError("beam width must be >= 1, got " + std::to_string(width));
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  Graph g;
  auto enc = model.encode(g, features);

  std::vector<BeamEntry> active;
  active.push_back(
      BeamEntry{{}, 0.0, model.advance(g, model.initial_state(g, enc), Vocabulary::kSos)});
  std::vector<Hypothesis> finished;

  for (int step = 1; step <= max_len + 1 && !active.empty(); ++step) {
    struct Candidate {
      size_t parent;
      int token;
      double score;
      std::vector<int> tokens;
    };
    std::vector<Candidate> candidates;
    std::vector<CaptionModel::StepOut> pending_outs;
    pending_outs.reserve(active.size());
    for (size_t i = 0; i < active.size(); ++i) {
      auto out = model.predict(g, active[i].state, enc);
      auto lp = log_probs(g.value(out.logits));
      pending_outs.push_back(out);
      for (int id = 0; id < static_cast<int>(lp.size()); ++id) {
        if (step == max_len + 1 && id != Vocabulary::kEos) continue;
        if (!emittable(id)) continue;
        Candidate c;
        c.parent = i;
        c.token = id;
        c.score = active[i].log_prob + lp[static_cast<size_t>(id)];
        c.tokens = active[i].tokens;
        c.tokens.push_back(id);
        candidates.push_back(std::move(c));
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      return better(a.score, a.tokens, b.score, b.tokens);
    });
    if (static_cast<int>(candidates.size()) > width)
      candidates.resize(static_cast<size_t>(width));

    std::vector<BeamEntry> next;
    for (Candidate& c : candidates) {
      if (c.token == Vocabulary::kEos) {
        finished.push_back(Hypothesis{std::move(c.tokens), c.score, true});
      } else {
        BeamEntry e;
        e.log_prob = c.score;
        e.state = model.advance(g, active[c.parent].state, c.token,
                                pending_outs[c.parent].content_mix);
        e.tokens = std::move(c.tokens);
        next.push_back(std::move(e));
      }
    }
    active = std::move(next);
  }

  std::sort(finished.begin(), finished.end(), [](const Hypothesis& a, const Hypothesis& b) {
    return better(a.log_prob, a.tokens, b.log_prob, b.tokens);
  });
  if (static_cast<int>(finished.size()) > width) finished.resize(static_cast<size_t>(width));
  return finished;
}

DecodeResult trace_tokens(const CaptionModel& model,
                          const std::vector<FeatureSequence>& features,
                          const std::vector<int>& tokens) {
  Graph g;
  auto enc = model.encode(g, features);
  auto state = model.advance(g, model.initial_state(g, enc), Vocabulary::kSos);
  DecodeResult result;
  result.tokens = tokens;
  for (size_t i = 0; i <= tokens.size(); ++i) {
    auto out = model.predict(g, state, enc);
    record_step(result.trace, g, out);
    auto lp = log_probs(g.value(out.logits));
    int token = i < tokens.size() ? tokens[i] : Vocabulary::kEos;
    result.log_prob += lp[static_cast<size_t>(token)];
    if (i < tokens.size()) state = model.advance(g, state, token, out.content_mix);
  }
  return result;
}

}  // namespace mmcap
