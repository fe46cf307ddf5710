// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ttr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>

#include "ttr/rng.hpp"

namespace ttr {
namespace {

constexpr double kSampleRate = 8000.0;

double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4});
}

double central_difference(double& slot, const std::function<double()>& f) {
  const double theta = slot;
  const double h = 1e-5 * std::max(1.0, std::abs(theta));
  slot = theta + h;
  const double up = f();
  slot = theta - h;
  const double down = f();
  slot = theta;
  return (up - down) / (2.0 * h);
}

struct Coordinate {
  std::size_t entry;
  Eigen::Index row;
  Eigen::Index col;
};

std::vector<Coordinate> sample_coordinates(const ParamStore& store, Rng& rng, int n) {
  std::vector<Coordinate> coords;
  coords.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const std::size_t e = static_cast<std::size_t>(rng.below(store.size()));
    const auto& m = store.entries()[e].value;
    coords.push_back({e, static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m.rows()))),
                      static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m.cols())))});
  }
  return coords;
}

double check_params(ParamStore& store, const std::function<double()>& forward,
                    const std::function<const ad::Matrix&(std::size_t)>& analytic,
                    const std::vector<Coordinate>& coords) {
  double worst = 0.0;
  for (const auto& c : coords) {
    const double fd =
        central_difference(store.entries()[c.entry].value(c.row, c.col), forward);
    const double an = analytic(c.entry)(c.row, c.col);
    worst = std::max(worst, rel_error(an, fd));
  }
  return worst;
}

// Small deterministic two-source instance with TTR context.
struct TinySetup {
  Lexicon lexicon;
  std::unique_ptr<Encoders> encoders;
  SeparatorItem item;
};

TinySetup tiny_instance(const EncoderConfig& enc_cfg, std::uint64_t seed) {
  TinySetup setup;
  setup.lexicon = make_lexicon(12, 10, kSampleRate, derive_seed(seed, "gc-lexicon"));
  UtteranceRender r1 =
      synth_utterance({0, 1}, setup.lexicon, kSampleRate, derive_seed(seed, "gc-u1"));
  UtteranceRender r2 =
      synth_utterance({2, 3}, setup.lexicon, kSampleRate, derive_seed(seed, "gc-u2"));

  const std::size_t min_len = std::min(r1.wave.samples.size(), r2.wave.samples.size());
  for (UtteranceRender* r : {&r1, &r2}) {
    r->wave.samples.resize(min_len);
    TimedTranscript kept;
    for (const auto& w : r->transcript.words)
      if (static_cast<std::size_t>(std::llround(w.end * kSampleRate)) <= min_len)
        kept.words.push_back(w);
    r->transcript = std::move(kept);
  }

  MixtureInstance mixed = mix({r1.wave, r2.wave}, std::nullopt, std::nullopt);
  LoadedInstance inst;
  inst.id = "gradcheck";
  inst.mixture = mixed.mixture;
  inst.sources = {r1.wave, r2.wave};
  inst.transcripts = {r1.transcript, r2.transcript};

  setup.encoders =
      std::make_unique<Encoders>(enc_cfg, setup.lexicon.signature_frequencies(), kSampleRate);
  setup.item = make_finetune_item(inst, *setup.encoders, setup.lexicon);
  return setup;
}

}  // namespace

GradCheckResult grad_check_transformer(const SummarizerHyperparams& hp, int d_audio, int d_text,
                                       std::uint64_t seed, int n_coords) {
  ParamStore store;
  init_summarizer_params(store, hp, d_audio, d_text, derive_seed(seed, "gc-params"));

  Rng data_rng(derive_seed(seed, "gc-input"));
  ad::Matrix input(d_audio, 7);
  for (Eigen::Index r = 0; r < input.rows(); ++r)
    for (Eigen::Index c = 0; c < input.cols(); ++c) input(r, c) = data_rng.uniform(-1.0, 1.0);

  const auto forward = [&]() {
    ad::Tape t;
    BoundParams p(t, store);
    return t.val(t.sum_all(transformer_forward(t, p, "sum", hp, t.constant(input))))(0, 0);
  };

  ad::Tape t;
  BoundParams p(t, store);
  ad::Var root = t.sum_all(transformer_forward(t, p, "sum", hp, t.constant(input)));
  t.backward(root);
  store.zero_grads();
  p.flush_grads();

  Rng rng(derive_seed(seed, "gc-coords"));
  const auto coords = sample_coordinates(store, rng, n_coords);
  GradCheckResult result;
  result.coordinates = n_coords;
  result.max_rel_error = check_params(
      store, forward, [&](std::size_t e) -> const ad::Matrix& { return store.entries()[e].grad; },
      coords);
  return result;
}

GradCheckResult grad_check_ttr(const SummarizerHyperparams& hp, const EncoderConfig& enc_cfg,
                               std::uint64_t seed, int n_coords) {
  const TinySetup setup = tiny_instance(enc_cfg, seed);
  const Encoders* encoders = setup.encoders.get();
  const SeparatorItem& item = setup.item;

  ParamStore store;
  init_summarizer_params(store, hp, enc_cfg.d_audio, enc_cfg.d_text,
                         derive_seed(seed, "gc-params"));

  // Mutable waveform; FD perturbs individual samples through the encoder.
  ad::Matrix wave = to_column(item.references[0]);
  const AlignmentMap& map = item.aligns[0];
  const ad::Matrix& text = item.texts[0];

  const auto forward = [&]() {
    ad::Tape t;
    BoundParams p(t, store);
    ad::Var audio = encoders->audio_encode_t(t, t.constant(wave));
    return t.val(ttr_loss_t(t, summarizer_apply(t, p, hp, audio, map), t.constant(text)))(0, 0);
  };

  ad::Tape t;
  BoundParams p(t, store);
  ad::Var wave_leaf = t.leaf(wave);
  ad::Var audio = encoders->audio_encode_t(t, wave_leaf);
  ad::Var root = ttr_loss_t(t, summarizer_apply(t, p, hp, audio, map), t.constant(text));
  t.backward(root);
  store.zero_grads();
  p.flush_grads();
  const ad::Matrix wave_grad = t.grad(wave_leaf);

  GradCheckResult result;
  result.coordinates = n_coords;
  Rng rng(derive_seed(seed, "gc-coords"));

  // Half the budget on waveform samples inside the first aligned word, where
  // the encoder actually looks.
  const int wave_coords = n_coords / 2;
  const auto first_word = item.transcripts[0].words.front();
  const Eigen::Index lo = static_cast<Eigen::Index>(first_word.start * kSampleRate);
  const Eigen::Index hi = std::min<Eigen::Index>(
      wave.rows(), static_cast<Eigen::Index>(first_word.end * kSampleRate));
  for (int i = 0; i < wave_coords; ++i) {
    const Eigen::Index idx =
        lo + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(hi - lo)));
    const double fd = central_difference(wave(idx, 0), forward);
    result.max_rel_error = std::max(result.max_rel_error, rel_error(wave_grad(idx, 0), fd));
  }

  const auto coords = sample_coordinates(store, rng, n_coords - wave_coords);
  result.max_rel_error = std::max(
      result.max_rel_error,
      check_params(
          store, forward,
          [&](std::size_t e) -> const ad::Matrix& { return store.entries()[e].grad; }, coords));
  return result;
}

GradCheckResult grad_check_total(const SummarizerHyperparams& hp, const EncoderConfig& enc_cfg,
                                 const SeparatorHyperparams& sep_hp, std::uint64_t seed,
                                 int n_coords) {
  const TinySetup setup = tiny_instance(enc_cfg, seed);
  const Encoders* encoders = setup.encoders.get();
  const SeparatorItem& item = setup.item;

  SeparatorHyperparams hp2 = sep_hp;
  hp2.num_sources = 2;

  ParamStore sep;
  init_separator_params(sep, hp2, derive_seed(seed, "gc-sep"));
  ParamStore sum;
  init_summarizer_params(sum, hp, enc_cfg.d_audio, enc_cfg.d_text, derive_seed(seed, "gc-sum"));

  constexpr double kLambda = 0.5;
  const auto forward = [&]() {
    ad::Tape t;
    BoundParams sp(t, sep);
    BoundParams mp(t, sum);
    const auto est = separate_t(t, sp, hp2, t.constant(item.mixture_col));
    return total_loss_t(t, est, item, mp, hp, *encoders, kLambda).value.total;
  };

  ad::Tape t;
  BoundParams sp(t, sep);
  BoundParams mp(t, sum);
  const auto est = separate_t(t, sp, hp2, t.constant(item.mixture_col));
  TotalLossVar loss = total_loss_t(t, est, item, mp, hp, *encoders, kLambda);
  t.backward(loss.total);
  sep.zero_grads();
  sp.flush_grads();

  Rng rng(derive_seed(seed, "gc-coords"));
  const auto coords = sample_coordinates(sep, rng, n_coords);
  GradCheckResult result;
  result.coordinates = n_coords;
  result.max_rel_error = check_params(
      sep, forward, [&](std::size_t e) -> const ad::Matrix& { return sep.entries()[e].grad; },
      coords);
  return result;
}

}  // namespace ttr
