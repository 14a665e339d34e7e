#include <doctest.h>

#include <cmath>

#include "mmcap/decoder.hpp"
#include "mmcap/rng.hpp"
#include "test_util.hpp"

using namespace mmcap;

namespace {

Vocabulary small_vocab(const std::vector<std::string>& words) {
  Vocabulary v;
  for (const auto& w : words) v.add(w);
  return v;
}

ModelConfig tiny_config(int n_modalities, const std::string& fusion, int feature_dim = 3) {
  ModelConfig cfg;
  for (int k = 0; k < n_modalities; ++k) {
    ModalitySpec m;
    m.name = "m" + std::to_string(k);
    m.encoder = EncoderMode::Passthrough;
    m.feature_dim = feature_dim;
    cfg.modalities.push_back(m);
  }
  cfg.fusion = fusion;
  cfg.decoder_cells = 5;
  cfg.embed_dim = 4;
  return cfg;
}

std::vector<FeatureSequence> random_features(const ModelConfig& cfg, int frames,
                                             RngStream& rng) {
  std::vector<FeatureSequence> out;
  for (const auto& m : cfg.modalities) {
    FeatureSequence f;
    f.modality = m.name;
    f.frames = frames;
    f.dim = m.feature_dim;
    f.data.resize(static_cast<size_t>(frames) * m.feature_dim);
    for (auto& v : f.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    out.push_back(std::move(f));
  }
  return out;
}

void randomize_params(CaptionModel& model, RngStream& rng, double scale = 0.6) {
  for (Param* p : model.params())
    for (int i = 0; i < p->value.numel(); ++i) p->value.at(i) = rng.uniform(-scale, scale);
}

}  // namespace

TEST_CASE("embedding lookup is a bit-exact row copy with row-local gradients") {
  auto vocab = small_vocab({"a", "b"});
  auto cfg = tiny_config(1, "attention");
  CaptionModel model(cfg, vocab);
  Param* e = model.find_param("decoder.E");
  REQUIRE(e != nullptr);
  RngStream rng(3);
  for (int i = 0; i < e->value.numel(); ++i) e->value.at(i) = rng.uniform(-1, 1);

  Graph g;
  int id = vocab.id("b");
  Value emb = model.embed(g, id);
  for (int i = 0; i < cfg.embed_dim; ++i) CHECK(g.value(emb).at(i) == e->value.at(id, i));

  Value emb2 = model.embed(g, id);
  for (int i = 0; i < cfg.embed_dim; ++i) CHECK(g.value(emb).at(i) == g.value(emb2).at(i));

  model.zero_grads();
  g.backward(g.sum(emb));
  for (int r = 0; r < e->value.rows(); ++r)
    for (int c = 0; c < e->value.cols(); ++c)
      CHECK(e->grad.at(r, c) == (r == id ? 1.0 : 0.0));

  CHECK_THROWS_AS(model.embed(g, vocab.size()), VocabularyError);
  CHECK_THROWS_AS(model.embed(g, -1), VocabularyError);
}

TEST_CASE("decoder advance equals a plain lstm_step on the same tensors") {
  auto vocab = small_vocab({"a"});
  auto cfg = tiny_config(1, "simple");
  CaptionModel model(cfg, vocab);
  RngStream rng(5);
  randomize_params(model, rng);

  Graph g;
  auto features = random_features(cfg, 2, rng);
  auto enc = model.encode(g, features);
  auto s0 = model.initial_state(g, enc);
  auto s1 = model.advance(g, s0, Vocabulary::kSos);

  Value x = model.embed(g, Vocabulary::kSos);
  auto [h, c] = lstm_step(g, x, g.input(Tensor::zeros({cfg.decoder_cells})),
                          g.input(Tensor::zeros({cfg.decoder_cells})), model.decoder_lstm());
  for (int i = 0; i < cfg.decoder_cells; ++i) {
    CHECK(g.value(s1.h).at(i) == g.value(h).at(i));
    CHECK(g.value(s1.c).at(i) == g.value(c).at(i));
  }
  CHECK(s1.word_index == 1);
}

TEST_CASE("output distribution") {
  auto vocab = small_vocab({"a", "b", "c"});
  auto cfg = tiny_config(1, "simple");
  CaptionModel model(cfg, vocab);

  SUBCASE("zero output layer gives the uniform distribution") {
    Graph g;
    Value dist = model.output_distribution(g, g.input(Tensor::zeros({cfg.decoder_cells})));
    for (int i = 0; i < vocab.size(); ++i)
      CHECK(g.value(dist).at(i) == doctest::Approx(1.0 / vocab.size()).epsilon(1e-14));
  }

  SUBCASE("distributions sum to one for random inputs") {
    RngStream rng(7);
    randomize_params(model, rng);
    for (int trial = 0; trial < 50; ++trial) {
      Graph g;
      Tensor gp = testutil::random_tensor({cfg.decoder_cells}, rng, 2.0);
      Value dist = model.output_distribution(g, g.input(gp));
      double total = 0.0;
      for (int i = 0; i < vocab.size(); ++i) total += g.value(dist).at(i);
      CHECK(std::fabs(total - 1.0) <= 1e-12);
    }
  }

  SUBCASE("large bias at one id concentrates the mass") {
    Param* bg = model.find_param("decoder.b_g");
    bg->value.at(5) = 40.0;
    Graph g;
    Value dist = model.output_distribution(g, g.input(Tensor::zeros({cfg.decoder_cells})));
    CHECK(g.value(dist).at(5) > 0.999999);
  }
}

TEST_CASE("greedy decode on an eos-rigged model returns the empty sentence") {
  auto vocab = small_vocab({"a", "b"});
  auto cfg = tiny_config(1, "attention");
  CaptionModel model(cfg, vocab);
  model.find_param("decoder.b_g")->value.at(Vocabulary::kEos) = 30.0;
  RngStream rng(9);
  auto features = random_features(cfg, 3, rng);
  auto result = greedy_decode(model, features, 10);
  CHECK(result.tokens.empty());
  CHECK(result.trace.alphas.size() == 1);  // only the <eos> step
  CHECK(result.log_prob < 0.0);
  CHECK(result.log_prob > std::log(0.999));
}

TEST_CASE("greedy decode is deterministic") {
  auto vocab = small_vocab({"a", "b", "c", "d"});
  auto cfg = tiny_config(2, "attention");
  CaptionModel model(cfg, vocab);
  RngStream rng(11);
  randomize_params(model, rng, 1.2);
  auto features = random_features(cfg, 4, rng);
  auto r1 = greedy_decode(model, features, 6);
  auto r2 = greedy_decode(model, features, 6);
  CHECK(r1.tokens == r2.tokens);
  CHECK(r1.log_prob == r2.log_prob);  // bitwise
}

TEST_CASE("beam width one equals greedy on 50 random models") {
  RngStream rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    int n_mod = rng.uniform_int(1, 2);
    auto cfg = tiny_config(n_mod, trial % 2 == 0 ? "attention" : "simple");
    int extra_words = rng.uniform_int(2, 5);
    Vocabulary vocab;
    for (int w = 0; w < extra_words; ++w) vocab.add("w" + std::to_string(w));
    CaptionModel model(cfg, vocab);
    randomize_params(model, rng, 1.5);
    auto features = random_features(cfg, rng.uniform_int(1, 5), rng);
    int max_len = rng.uniform_int(1, 5);

    auto greedy = greedy_decode(model, features, max_len);
    auto beam = beam_search(model, features, 1, max_len);
    REQUIRE(beam.size() == 1);
    std::vector<int> beam_sentence = beam[0].tokens;
    REQUIRE(!beam_sentence.empty());
    CHECK(beam_sentence.back() == Vocabulary::kEos);
    beam_sentence.pop_back();
    CHECK(beam_sentence == greedy.tokens);
    CHECK(beam[0].log_prob == greedy.log_prob);  // bitwise
    CHECK(beam[0].finished);
  }
}

TEST_CASE("wide beam equals exhaustive enumeration argmax") {
  RngStream rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto cfg = tiny_config(1, "attention", 2);
    Vocabulary vocab = small_vocab({"w"});  // |V| = 5 including specials
    REQUIRE(vocab.size() == 5);
    CaptionModel model(cfg, vocab);
    randomize_params(model, rng, 1.5);
    auto features = random_features(cfg, 3, rng);
    int max_len = 3;

    // enumerate every sequence over emittable non-eos tokens up to max_len
    std::vector<int> alphabet{Vocabulary::kUnk, vocab.id("w")};
    std::vector<std::vector<int>> sequences{{}};
    for (int len = 1; len <= max_len; ++len) {
      std::vector<std::vector<int>> layer;
      for (const auto& seq : sequences)
        if (static_cast<int>(seq.size()) == len - 1)
          for (int tok : alphabet) {
            auto next = seq;
            next.push_back(tok);
            layer.push_back(next);
          }
      for (auto& s : layer) sequences.push_back(std::move(s));
    }
    double best_score = -1e300;
    std::vector<int> best_seq;
    for (const auto& seq : sequences) {
      double score = trace_tokens(model, features, seq).log_prob;
      if (score > best_score) {
        best_score = score;
        best_seq = seq;
      }
    }

    auto beam = beam_search(model, features, 125, max_len);
    REQUIRE(!beam.empty());
    std::vector<int> top = beam[0].tokens;
    top.pop_back();  // drop <eos>
    CHECK(top == best_seq);
    CHECK(beam[0].log_prob == doctest::Approx(best_score).epsilon(1e-12));
    // the wide beam enumerated everything: 1 + 2 + 4 + 8 sequences
    CHECK(beam.size() == 15);
  }
}

TEST_CASE("hand-built two-step table where greedy is suboptimal") {
  // vocabulary: specials + a + b
  Vocabulary vocab = small_vocab({"a", "b"});
  int id_a = vocab.id("a"), id_b = vocab.id("b");
  ModelConfig cfg;
  ModalitySpec m;
  m.name = "m0";
  m.encoder = EncoderMode::Passthrough;
  m.feature_dim = 2;
  cfg.modalities.push_back(m);
  cfg.fusion = "unimodal";
  cfg.decoder_cells = 2;
  cfg.embed_dim = 2;
  CaptionModel model(cfg, vocab);

  // embeddings distinguish a and b; cell candidate passes them into the state
  Param* e = model.find_param("decoder.E");
  e->value.at(id_a, 0) = 10.0;
  e->value.at(id_b, 1) = 10.0;
  Param* wx = model.find_param("decoder.W_x");
  wx->value.at(3 * 2 + 0, 0) = 10.0;  // candidate block, diagonal
  wx->value.at(3 * 2 + 1, 1) = 10.0;
  Param* b = model.find_param("decoder.b");
  b->value.at(2) = -50.0;  // forget gate shut
  b->value.at(3) = -50.0;
  Param* ws = model.find_param("fusion.W_s");
  ws->value.at(0, 0) = 100.0;
  ws->value.at(1, 1) = 100.0;

  // first step: logits equal b_g since the state is all zero
  Param* bg = model.find_param("decoder.b_g");
  bg->value.at(Vocabulary::kEos) = -20.0;
  bg->value.at(Vocabulary::kUnk) = -20.0;
  bg->value.at(id_a) = std::log(0.55);
  bg->value.at(id_b) = std::log(0.45);
  // after 'a' the end token is hopeless; after 'b' it is certain
  Param* wg = model.find_param("decoder.W_g");
  wg->value.at(Vocabulary::kEos, 0) = -50.0;
  wg->value.at(Vocabulary::kEos, 1) = 50.0;
  wg->value.at(Vocabulary::kUnk, 0) = -50.0;
  wg->value.at(Vocabulary::kUnk, 1) = -50.0;

  FeatureSequence f;
  f.modality = "m0";
  f.frames = 1;
  f.dim = 2;
  f.data = {0.0f, 0.0f};
  std::vector<FeatureSequence> features{f};

  auto greedy = greedy_decode(model, features, 1);
  REQUIRE(greedy.tokens.size() == 1);
  CHECK(greedy.tokens[0] == id_a);  // locally best first token

  auto beam = beam_search(model, features, 2, 1);
  REQUIRE(!beam.empty());
  REQUIRE(beam[0].tokens.size() == 2);
  CHECK(beam[0].tokens[0] == id_b);  // globally better sentence
  CHECK(beam[0].log_prob > greedy.log_prob);

  // enumeration over all candidate sentences confirms the beam result
  double best = -1e300;
  std::vector<int> best_seq;
  for (const auto& seq : std::vector<std::vector<int>>{
           {}, {id_a}, {id_b}, {Vocabulary::kUnk}}) {
    double score = trace_tokens(model, features, seq).log_prob;
    if (score > best) {
      best = score;
      best_seq = seq;
    }
  }
  CHECK(best_seq == std::vector<int>{id_b});
}

TEST_CASE("hypothesis scores recompute from scratch within 1e-10") {
  RngStream rng(19);
  auto cfg = tiny_config(2, "attention");
  Vocabulary vocab = small_vocab({"x", "y", "z"});
  CaptionModel model(cfg, vocab);
  randomize_params(model, rng);
  auto features = random_features(cfg, 3, rng);
  auto beam = beam_search(model, features, 4, 4);
  REQUIRE(!beam.empty());
  for (const auto& hyp : beam) {
    REQUIRE(hyp.finished);
    std::vector<int> sentence = hyp.tokens;
    sentence.pop_back();
    double replayed = trace_tokens(model, features, sentence).log_prob;
    CHECK(std::fabs(replayed - hyp.log_prob) <= 1e-10);
    // log probability is non-increasing as tokens are appended
    CHECK(hyp.log_prob <= 0.0);
  }
}

TEST_CASE("attention trace rows are well formed distributions") {
  RngStream rng(23);
  auto cfg = tiny_config(2, "attention");
  Vocabulary vocab = small_vocab({"p", "q"});
  CaptionModel model(cfg, vocab);
  randomize_params(model, rng);
  auto features = random_features(cfg, 4, rng);
  auto result = greedy_decode(model, features, 5);
  REQUIRE(!result.trace.alphas.empty());
  CHECK(result.trace.alphas.size() == result.trace.betas.size());
  for (size_t step = 0; step < result.trace.alphas.size(); ++step) {
    for (const auto& alpha : result.trace.alphas[step]) {
      double total = 0.0;
      for (double a : alpha) total += a;
      CHECK(std::fabs(total - 1.0) <= 1e-12);
      CHECK(alpha.size() == 4);
    }
    double btotal = 0.0;
    for (double bk : result.trace.betas[step]) btotal += bk;
    CHECK(std::fabs(btotal - 1.0) <= 1e-12);
    CHECK(result.trace.betas[step].size() == 2);
  }
}

TEST_CASE("beam rejects invalid width and missing modalities error out") {
  auto cfg = tiny_config(1, "attention");
  Vocabulary vocab = small_vocab({"a"});
  CaptionModel model(cfg, vocab);
  RngStream rng(29);
  auto features = random_features(cfg, 2, rng);
  CHECK_THROWS_AS(beam_search(model, features, 0, 3), ConfigError);
  std::vector<FeatureSequence> wrong;
  CHECK_THROWS_AS(greedy_decode(model, wrong, 3), ConfigError);
}
