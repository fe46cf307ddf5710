// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ttr/encoders.hpp"

#include <cmath>
#include <filesystem>

#include <doctest.h>

#include "ttr/corpus.hpp"
#include "ttr/errors.hpp"
#include "ttr/rng.hpp"

using namespace ttr;

namespace {

constexpr double kRate = 8000.0;

EncoderConfig default_config() {
  EncoderConfig cfg;
  cfg.d_audio = 24;
  cfg.d_text = 32;
  cfg.frame_rate = 50.0;
  cfg.frame_length = 0.032;
  cfg.seed = 424242;
  return cfg;
}

Lexicon test_lexicon() { return make_lexicon(24, 40, kRate, 606); }

Waveform tone(double hz, double seconds, double amp = 0.2) {
  Waveform w;
  w.sample_rate = kRate;
  const std::size_t n = static_cast<std::size_t>(seconds * kRate);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = amp * std::sin(2.0 * M_PI * hz * static_cast<double>(i) / kRate);
  return w;
}

}  // namespace

TEST_CASE("audio embedding shape follows floor(duration * R)") {
  const Lexicon lex = test_lexicon();
  const Encoders enc(default_config(), lex.signature_frequencies(), kRate);
  const EmbeddingMatrix m = enc.audio_encode(tone(500.0, 1.0));
  CHECK(m.dim() == 24);
  CHECK(m.count() == 50);
  REQUIRE(m.frame_rate.has_value());
  CHECK(*m.frame_rate == 50.0);

  CHECK(enc.audio_encode(tone(500.0, 0.73)).count() == 36);  // floor(36.5)
}

TEST_CASE("zero waveform maps to identical (zero) columns") {
  const Lexicon lex = test_lexicon();
  const Encoders enc(default_config(), lex.signature_frequencies(), kRate);
  Waveform w;
  w.sample_rate = kRate;
  w.samples.assign(4000, 0.0);
  const EmbeddingMatrix m = enc.audio_encode(w);
  for (int c = 0; c < m.count(); ++c) CHECK(m.values.col(c).norm() == 0.0);
}

TEST_CASE("a pure signature tone dominates its own filterbank channel") {
  const Lexicon lex = test_lexicon();
  const Encoders enc(default_config(), lex.signature_frequencies(), kRate);
  const auto freqs = lex.signature_frequencies();
  for (int u : {0, 7, 23}) {
    const Waveform w = tone(freqs[static_cast<std::size_t>(u)], 0.5);
    const ad::Matrix fb = enc.audio_filterbank(w);
    const int frame_samples = static_cast<int>(std::llround(0.032 * kRate));
    const int hop = static_cast<int>(std::llround(kRate / 50.0));
    for (int t = 0; t < fb.cols(); ++t) {
      if (t * hop + frame_samples > static_cast<int>(w.samples.size())) break;  // partial frame
      Eigen::Index argmax;
      fb.col(t).maxCoeff(&argmax);
      CHECK(argmax == u);
    }
  }
}

TEST_CASE("audio encoding is frozen and bit-identical across calls") {
  const Lexicon lex = test_lexicon();
  const Encoders enc1(default_config(), lex.signature_frequencies(), kRate);
  const Encoders enc2(default_config(), lex.signature_frequencies(), kRate);
  const Waveform w = tone(700.0, 0.4);
  CHECK(enc1.audio_encode(w).values == enc2.audio_encode(w).values);
}

TEST_CASE("audio encoder rejects too-short input") {
  const Lexicon lex = test_lexicon();
  const Encoders enc(default_config(), lex.signature_frequencies(), kRate);
  CHECK_THROWS_AS(enc.audio_encode(tone(500.0, 0.01)), std::invalid_argument);
}

TEST_CASE("audio encoder gradient matches finite differences") {
  const Lexicon lex = test_lexicon();
  const Encoders enc(default_config(), lex.signature_frequencies(), kRate);
  Waveform w = tone(900.0, 0.1);
  Rng rng(5);
  for (auto& s : w.samples) s += rng.uniform(-0.05, 0.05);

  // Scalar probe: weighted sum of the embedding.
  const auto value = [&]() {
    ad::Tape t;
    ad::Var wave = t.constant(to_column(w));
    ad::Var out = enc.audio_encode_t(t, wave);
    Rng wr(99);
    ad::Matrix weights(t.val(out).rows(), t.val(out).cols());
    for (Eigen::Index r = 0; r < weights.rows(); ++r)
      for (Eigen::Index c = 0; c < weights.cols(); ++c) weights(r, c) = wr.uniform(-1.0, 1.0);
    return t.val(t.sum_all(t.mul(out, t.constant(weights))))(0, 0);
  };

  ad::Tape t;
  ad::Var wave = t.leaf(to_column(w));
  ad::Var out = enc.audio_encode_t(t, wave);
  Rng wr(99);
  ad::Matrix weights(t.val(out).rows(), t.val(out).cols());
  for (Eigen::Index r = 0; r < weights.rows(); ++r)
    for (Eigen::Index c = 0; c < weights.cols(); ++c) weights(r, c) = wr.uniform(-1.0, 1.0);
  ad::Var root = t.sum_all(t.mul(out, t.constant(weights)));
  t.backward(root);

  Rng pick(7);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t i = static_cast<std::size_t>(pick.below(w.samples.size()));
    const double theta = w.samples[i];
    const double h = 1e-6;
    w.samples[i] = theta + h;
    const double up = value();
    w.samples[i] = theta - h;
    const double down = value();
    w.samples[i] = theta;
    const double fd = (up - down) / (2.0 * h);
    const double an = t.grad(wave)(static_cast<Eigen::Index>(i), 0);
    CHECK(std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-4}) <= 1e-4);
  }
}

TEST_CASE("text embedding columns are unit norm") {
  const Lexicon lex = test_lexicon();
  const Encoders enc(default_config(), lex.signature_frequencies(), kRate);
  SubwordSequence seq;
  seq.tokens = {0, 5, 5, 11};
  seq.word_index = {0, 0, 1, 1};
  seq.per_word_counts = {2, 2};
  const EmbeddingMatrix m = enc.text_encode(seq);
  CHECK(m.dim() == 32);
  CHECK(m.count() == 4);
  CHECK(!m.frame_rate.has_value());
  for (int c = 0; c < m.count(); ++c)
    CHECK(m.values.col(c).norm() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("token context changes the embedding column") {
  const Lexicon lex = test_lexicon();
  const Encoders enc(default_config(), lex.signature_frequencies(), kRate);
  SubwordSequence a;
  a.tokens = {3, 8};
  a.word_index = {0, 0};
  a.per_word_counts = {2};
  SubwordSequence b;
  b.tokens = {3, 15};
  b.word_index = {0, 0};
  b.per_word_counts = {2};
  // Token 3 leads both sequences but sees a different right neighbor.
  const ad::Matrix ma = enc.text_encode(a).values;
  const ad::Matrix mb = enc.text_encode(b).values;
  CHECK((ma.col(0) - mb.col(0)).norm() > 1e-6);
}

TEST_CASE("single token equals its self-reflected unit-norm table row") {
  const Lexicon lex = test_lexicon();
  const Encoders enc(default_config(), lex.signature_frequencies(), kRate);
  SubwordSequence one;
  one.tokens = {4};
  one.word_index = {0};
  one.per_word_counts = {1};
  SubwordSequence twice_a;
  twice_a.tokens = {4, 4};
  twice_a.word_index = {0, 0};
  twice_a.per_word_counts = {2};
  // With both neighbors reflecting onto itself, the mix is the row itself;
  // in the two-token case each column is also an average of equal rows.
  const ad::Matrix m1 = enc.text_encode(one).values;
  const ad::Matrix m2 = enc.text_encode(twice_a).values;
  CHECK((m1.col(0) - m2.col(0)).norm() <= 1e-12);
}

TEST_CASE("text encoder rejects bad tokens") {
  const Lexicon lex = test_lexicon();
  const Encoders enc(default_config(), lex.signature_frequencies(), kRate);
  SubwordSequence bad;
  bad.tokens = {99};
  bad.word_index = {0};
  bad.per_word_counts = {1};
  CHECK_THROWS_AS(enc.text_encode(bad), std::invalid_argument);
  CHECK_THROWS_AS(enc.text_encode(SubwordSequence{}), std::invalid_argument);
}

TEST_CASE("token count stays below frame count on corpus utterances") {
  const Lexicon lex = test_lexicon();
  const Encoders enc(default_config(), lex.signature_frequencies(), kRate);
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> words;
    const int n = 1 + static_cast<int>(rng.below(5));
    for (int i = 0; i < n; ++i)
      words.push_back(static_cast<int>(rng.below(lex.words.size())));
    const UtteranceRender r = synth_utterance(words, lex, kRate, 1000 + trial);
    const SubwordSequence tokens = tokenize_transcript(r.transcript, lex);
    const int frames = enc.audio_frame_count(r.wave.samples.size());
    CHECK(static_cast<int>(tokens.tokens.size()) < frames);
  }
}

TEST_CASE("embedding cache round-trips bit-exactly") {
  const Lexicon lex = test_lexicon();
  const Encoders enc(default_config(), lex.signature_frequencies(), kRate);
  const EmbeddingMatrix m = enc.audio_encode(tone(1500.0, 0.3));
  const auto dir = std::filesystem::temp_directory_path() / "ttrss_enc_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "emb.bin").string();
  save_embedding(path, m);
  const EmbeddingMatrix back = load_embedding(path);
  CHECK(back.values == m.values);
  CHECK(back.frame_rate == m.frame_rate);
}

TEST_CASE("encoder config validation") {
  EncoderConfig cfg = default_config();
  cfg.frame_length = 0.001;  // under one hop
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = default_config();
  cfg.d_audio = 0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
}
