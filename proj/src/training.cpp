#include "mmcap/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace mmcap {

SequenceLossResult sequence_loss(Graph& g, const CaptionModel& model,
                                 const std::vector<FeatureSequence>& features,
                                 const std::vector<int>& reference) {
  if (reference.empty()) throw ContractError("sequence_loss requires a non-empty reference");
  for (int id : reference)
    if (id < 0 || id >= model.vocab().size())
      throw VocabularyError("reference token id " + std::to_string(id) +
                            " outside the vocabulary");

  auto enc = model.encode(g, features);
  auto state = model.advance(g, model.initial_state(g, enc), Vocabulary::kSos);

  Value total;
  for (size_t i = 0; i <= reference.size(); ++i) {
    auto out = model.predict(g, state, enc);
    int target = i < reference.size() ? reference[i] : Vocabulary::kEos;
    Value ce = g.cross_entropy_logits(out.logits, target);
    total = i == 0 ? ce : g.add(total, ce);
    if (i < reference.size()) state = model.advance(g, state, target, out.content_mix);
  }

  SequenceLossResult r;
  r.token_count = static_cast<int>(reference.size()) + 1;
  r.total = total;
  r.per_token = g.scale(total, 1.0 / r.token_count);
  return r;
}

namespace {

std::vector<Tensor> zero_like(std::span<Param* const> params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (Param* p : params) out.push_back(Tensor::zeros(p->value.shape));
  return out;
}

void check_shapes(std::span<Param* const> params, const OptimizerState& state) {
  if (params.size() != state.acc1.size())
    throw DimensionError("optimizer state tracks " + std::to_string(state.acc1.size()) +
                         " parameters, got " + std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i)
    if (!params[i]->value.same_shape(state.acc1[i]))
      throw DimensionError("optimizer accumulator shape " + shape_str(state.acc1[i].shape) +
                           " does not match parameter " + params[i]->name + " " +
                           shape_str(params[i]->value.shape));
}

}  // namespace

OptimizerState OptimizerState::rmsprop(std::span<Param* const> params, double lr, double rho,
                                       double epsilon, double l2) {
  OptimizerState s;
  s.kind = "rmsprop";
  s.lr = lr;
  s.rho = rho;
  s.epsilon = epsilon;
  s.l2 = l2;
  s.acc1 = zero_like(params);
  return s;
}

OptimizerState OptimizerState::adadelta(std::span<Param* const> params, double rho,
                                        double epsilon, double l2) {
  OptimizerState s;
  s.kind = "adadelta";
  s.rho = rho;
  s.epsilon = epsilon;
  s.l2 = l2;
  s.acc1 = zero_like(params);
  s.acc2 = zero_like(params);
  return s;
}

void rmsprop_update(std::span<Param* const> params, OptimizerState& state) {
  check_shapes(params, state);
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    Tensor& ms = state.acc1[pi];
    for (int i = 0; i < p.value.numel(); ++i) {
      double g = p.grad.at(i) + state.l2 * p.value.at(i);
      ms.at(i) = state.rho * ms.at(i) + (1.0 - state.rho) * g * g;
      p.value.at(i) -= state.lr * g / std::sqrt(ms.at(i) + state.epsilon);
    }
  }
}

void adadelta_update(std::span<Param* const> params, OptimizerState& state) {
  check_shapes(params, state);
  if (state.acc2.size() != state.acc1.size())
    throw DimensionError("adadelta state missing the squared-update accumulator");
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    Tensor& eg = state.acc1[pi];
    Tensor& ed = state.acc2[pi];
    for (int i = 0; i < p.value.numel(); ++i) {
      double g = p.grad.at(i) + state.l2 * p.value.at(i);
      eg.at(i) = state.rho * eg.at(i) + (1.0 - state.rho) * g * g;
      double delta = -std::sqrt(ed.at(i) + state.epsilon) / std::sqrt(eg.at(i) + state.epsilon) * g;
      ed.at(i) = state.rho * ed.at(i) + (1.0 - state.rho) * delta * delta;
      p.value.at(i) += delta;
    }
  }
}

void optimizer_update(std::span<Param* const> params, OptimizerState& state) {
  if (state.kind == "rmsprop")
    rmsprop_update(params, state);
  else if (state.kind == "adadelta")
    adadelta_update(params, state);
  else
    throw ConfigError("unknown optimizer '" + state.kind + "' (allowed: rmsprop, adadelta)");
}

double clip_gradients(std::span<Param* const> params, double max_norm) {
  double sq = 0.0;
  for (Param* p : params)
    for (int i = 0; i < p->grad.numel(); ++i) sq += p->grad.at(i) * p->grad.at(i);
  double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    double factor = max_norm / norm;
    for (Param* p : params)
      for (int i = 0; i < p->grad.numel(); ++i) p->grad.at(i) *= factor;
  }
  return norm;
}

OptimizerState make_optimizer(std::span<Param* const> params, const TrainConfig& cfg) {
  if (cfg.optimizer == "rmsprop")
    return OptimizerState::rmsprop(params, cfg.lr.value_or(1e-3), cfg.rho.value_or(0.9),
                                   cfg.epsilon.value_or(1e-8), cfg.l2);
  if (cfg.optimizer == "adadelta")
    return OptimizerState::adadelta(params, cfg.rho.value_or(0.95), cfg.epsilon.value_or(1e-6),
                                    cfg.l2);
  throw ConfigError("unknown optimizer '" + cfg.optimizer + "' (allowed: rmsprop, adadelta)");
}

double evaluate_loss(const CaptionModel& model, const std::vector<TrainSample>& samples) {
  double total = 0.0;
  long tokens = 0;
  for (const TrainSample& s : samples) {
    Graph g;
    auto r = sequence_loss(g, model, *s.features, s.reference);
    total += g.value(r.total).at(0);
    tokens += r.token_count;
  }
  if (tokens == 0) throw DataError("evaluate_loss on an empty sample set");
  return total / static_cast<double>(tokens);
}

TrainResult train(CaptionModel& model, const std::vector<TrainSample>& train_set,
                  const std::vector<TrainSample>& val_set, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&, bool is_best)>& on_epoch) {
  if (train_set.empty()) throw DataError("training split is empty");
  if (val_set.empty()) throw DataError("validation split is empty");
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("batch size must be >= 1");

  RngStream rng(cfg.seed);
  model.init_params(rng);
  auto params = model.params();
  OptimizerState opt = make_optimizer(params, cfg);

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();

  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    // Fisher-Yates with the run's stream
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    long epoch_tokens = 0;
    size_t step = 0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
      model.zero_grads();
      double batch_loss = 0.0;
      long batch_tokens = 0;
      for (size_t i = begin; i < end; ++i) {
        const TrainSample& s = train_set[order[i]];
        Graph g;
        auto r = sequence_loss(g, model, *s.features, s.reference);
        double loss = g.value(r.total).at(0);
        if (!std::isfinite(loss))
          throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) +
                                ", step " + std::to_string(step) + ", clip '" + s.clip_id + "'");
        g.backward(r.total);
        batch_loss += loss;
        batch_tokens += r.token_count;
      }
      double inv = 1.0 / static_cast<double>(batch_tokens);
      for (Param* p : params)
        for (int i = 0; i < p->grad.numel(); ++i) p->grad.at(i) *= inv;
      clip_gradients(params, cfg.clip_norm);
      optimizer_update(params, opt);
      epoch_loss += batch_loss;
      epoch_tokens += batch_tokens;
      ++step;
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / static_cast<double>(epoch_tokens);
    log.val_loss = evaluate_loss(model, val_set);
    log.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    bool is_best = log.val_loss < result.best_val_loss;
    if (is_best) {
      result.best_val_loss = log.val_loss;
      result.best_epoch = epoch;
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log, is_best);
  }
  return result;
}

}  // namespace mmcap
