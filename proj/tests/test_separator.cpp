// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ttr/separator.hpp"

#include <cmath>
#include <memory>

#include <doctest.h>

#include "ttr/errors.hpp"
#include "ttr/gradcheck.hpp"
#include "ttr/rng.hpp"

using namespace ttr;
using ad::Matrix;

namespace {

constexpr double kRate = 8000.0;

SeparatorHyperparams small_hp() {
  SeparatorHyperparams hp;
  hp.num_filters = 16;
  hp.kernel = 16;
  hp.stride = 8;
  hp.blocks = 2;
  hp.channels = 16;
  hp.num_sources = 2;
  return hp;
}

SummarizerHyperparams sum_hp() { return SummarizerHyperparams{32, 4, 64, 2, 2}; }

EncoderConfig enc_cfg() {
  EncoderConfig cfg;
  cfg.seed = 3;
  return cfg;
}

struct Fixture {
  Lexicon lexicon;
  std::unique_ptr<Encoders> encoders;
  std::vector<SeparatorItem> items;
};

Fixture make_fixture(int n_instances, std::uint64_t seed) {
  Fixture f;
  f.lexicon = make_lexicon(24, 40, kRate, derive_seed(seed, "lex"));
  f.encoders = std::make_unique<Encoders>(enc_cfg(), f.lexicon.signature_frequencies(), kRate);
  Rng rng(derive_seed(seed, "words"));
  for (int i = 0; i < n_instances; ++i) {
    std::vector<UtteranceRender> renders;
    for (int k = 0; k < 2; ++k) {
      std::vector<int> words = {static_cast<int>(rng.below(40)),
                                static_cast<int>(rng.below(40))};
      renders.push_back(
          synth_utterance(words, f.lexicon, kRate, derive_seed(seed, std::to_string(i * 2 + k))));
    }
    const std::size_t min_len =
        std::min(renders[0].wave.samples.size(), renders[1].wave.samples.size());
    for (auto& r : renders) {
      r.wave.samples.resize(min_len);
      TimedTranscript kept;
      for (const auto& w : r.transcript.words)
        if (static_cast<std::size_t>(std::llround(w.end * kRate)) <= min_len)
          kept.words.push_back(w);
      r.transcript = std::move(kept);
    }
    if (renders[0].transcript.words.empty() || renders[1].transcript.words.empty()) continue;
    LoadedInstance inst;
    inst.id = "fx-" + std::to_string(i);
    inst.mixture = mix({renders[0].wave, renders[1].wave}, std::nullopt, std::nullopt).mixture;
    inst.sources = {renders[0].wave, renders[1].wave};
    inst.transcripts = {renders[0].transcript, renders[1].transcript};
    f.items.push_back(make_finetune_item(inst, *f.encoders, f.lexicon));
  }
  return f;
}

}  // namespace

TEST_CASE("separate returns K estimates of the input length") {
  ParamStore sep;
  init_separator_params(sep, small_hp(), 99);
  Waveform x;
  x.sample_rate = kRate;
  Rng rng(4);
  x.samples.resize(1000);
  for (auto& s : x.samples) s = rng.uniform(-0.3, 0.3);

  const auto outs = separate(sep, small_hp(), x);
  REQUIRE(outs.size() == 2);
  for (const auto& o : outs) {
    CHECK(o.samples.size() == x.samples.size());
    CHECK(o.sample_rate == kRate);
  }
}

TEST_CASE("separate maps silence to silence") {
  ParamStore sep;
  init_separator_params(sep, small_hp(), 99);
  Waveform x;
  x.sample_rate = kRate;
  x.samples.assign(800, 0.0);
  for (const auto& o : separate(sep, small_hp(), x))
    for (double s : o.samples) CHECK(s == 0.0);
}

TEST_CASE("separate rejects too-short input") {
  ParamStore sep;
  init_separator_params(sep, small_hp(), 99);
  Waveform x;
  x.sample_rate = kRate;
  x.samples.assign(8, 0.1);
  CHECK_THROWS_AS(separate(sep, small_hp(), x), std::invalid_argument);
}

TEST_CASE("training-mode PIT agrees with the metric permutation") {
  Fixture f = make_fixture(4, 11);
  ParamStore sep;
  init_separator_params(sep, small_hp(), 42);
  for (const auto& item : f.items) {
    const auto ests = separate(sep, small_hp(), item.mixture);
    const PitResult metric = pit_loss(item.references, ests);

    ad::Tape t;
    std::vector<ad::Var> ref_vars, est_vars;
    for (const auto& r : item.reference_cols) ref_vars.push_back(t.constant(r));
    for (const auto& e : ests) est_vars.push_back(t.constant(to_column(e)));
    const PitVarResult trained = pit_loss_t(t, ref_vars, est_vars);
    CHECK(trained.permutation == metric.permutation);
    // The stabilizer only nudges the value.
    CHECK(t.val(trained.loss)(0, 0) == doctest::Approx(metric.loss).epsilon(1e-6));
  }
}

TEST_CASE("total loss with lambda zero equals the PIT term exactly") {
  Fixture f = make_fixture(3, 21);
  ParamStore sum_store;
  init_summarizer_params(sum_store, sum_hp(), enc_cfg().d_audio, enc_cfg().d_text, 7);
  ParamStore sep;
  init_separator_params(sep, small_hp(), 8);

  for (const auto& item : f.items) {
    const auto ests = separate(sep, small_hp(), item.mixture);
    const TotalLossValue v = total_loss(ests, item, sum_store, sum_hp(), *f.encoders, 0.0);
    CHECK(v.total == v.pit_term);
    CHECK(v.ttr_sum == 0.0);
  }
}

TEST_CASE("total loss decomposes as pit + lambda * ttr") {
  Fixture f = make_fixture(5, 33);
  ParamStore sum_store;
  init_summarizer_params(sum_store, sum_hp(), enc_cfg().d_audio, enc_cfg().d_text, 7);
  ParamStore sep;
  init_separator_params(sep, small_hp(), 8);

  for (const auto& item : f.items) {
    const auto ests = separate(sep, small_hp(), item.mixture);
    const TotalLossValue at0 = total_loss(ests, item, sum_store, sum_hp(), *f.encoders, 0.0);
    for (double lambda : {0.1, 0.5, 1.0}) {
      const TotalLossValue at = total_loss(ests, item, sum_store, sum_hp(), *f.encoders, lambda);
      CHECK(std::abs((at.total - at0.total) - lambda * at.ttr_sum) <= 1e-9);
      CHECK(at.permutation == at0.permutation);
      // Independent recomposition: per-source TTR values via the summarizer.
      double ttr_recomputed = 0.0;
      for (std::size_t k = 0; k < item.references.size(); ++k) {
        const Waveform& est = ests[static_cast<std::size_t>(at.permutation[k])];
        const EmbeddingMatrix audio = f.encoders->audio_encode(est);
        const Matrix s_bar = summarizer_eval(sum_store, sum_hp(), audio.values, item.aligns[k]);
        ttr_recomputed += ttr_loss(s_bar, item.texts[k]);
      }
      CHECK(at.ttr_sum == doctest::Approx(ttr_recomputed).epsilon(1e-12));
      CHECK(at.total == doctest::Approx(at.pit_term + lambda * ttr_recomputed).epsilon(1e-12));
    }
  }
}

TEST_CASE("separator gradients match finite differences") {
  SeparatorHyperparams hp = small_hp();
  CHECK(grad_check_total(sum_hp(), enc_cfg(), hp, 2026, 50).max_rel_error <= kGradCheckTolerance);
}

TEST_CASE("TTR gradient contribution differs from the PIT-only gradient") {
  Fixture f = make_fixture(1, 44);
  REQUIRE(!f.items.empty());
  ParamStore sum_store;
  init_summarizer_params(sum_store, sum_hp(), enc_cfg().d_audio, enc_cfg().d_text, 7);

  const auto grads_for = [&](double lambda) {
    ParamStore sep;
    init_separator_params(sep, small_hp(), 8);
    ad::Tape t;
    BoundParams sp(t, sep);
    BoundParams mp(t, sum_store);
    const auto ests = separate_t(t, sp, small_hp(), t.constant(f.items[0].mixture_col));
    TotalLossVar loss = total_loss_t(t, ests, f.items[0], mp, sum_hp(), *f.encoders, lambda);
    t.backward(loss.total);
    sp.flush_grads();
    std::vector<Matrix> grads;
    for (const auto& e : sep.entries()) grads.push_back(e.grad);
    return grads;
  };

  const auto g0 = grads_for(0.0);
  const auto g5 = grads_for(0.5);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < g0.size(); ++i)
    max_diff = std::max(max_diff, (g0[i] - g5[i]).lpNorm<Eigen::Infinity>());
  CHECK(max_diff > 1e-9);  // gradient flows through encoder + summarizer
}

TEST_CASE("scheduler halves exactly on five stalled epochs") {
  PlateauScheduler sched(5);
  CHECK(!sched.observe(1.00));  // best
  CHECK(!sched.observe(1.10));  // stall 1
  CHECK(!sched.observe(1.20));  // stall 2
  CHECK(!sched.observe(1.05));  // stall 3
  CHECK(!sched.observe(1.30));  // stall 4
  CHECK(sched.observe(1.15));   // stall 5 -> halve
  CHECK(!sched.observe(1.01));  // counter reset; stall 1
  CHECK(!sched.observe(0.90));  // new best
  CHECK(!sched.observe(0.95));
  CHECK(!sched.observe(0.95));
  CHECK(!sched.observe(0.95));
  CHECK(!sched.observe(0.95));
  CHECK(sched.observe(0.95));  // five again
}

TEST_CASE("early stopping fires after the patience runs out") {
  EarlyStopping stop(3);
  CHECK(!stop.observe(1.0));
  CHECK(stop.improved_last());
  CHECK(!stop.observe(0.9));
  CHECK(!stop.observe(0.95));
  CHECK(!stop.observe(0.92));
  CHECK(stop.observe(0.91));  // third epoch without beating 0.9
  CHECK(stop.best_epoch() == 1);
  CHECK(stop.best_loss() == 0.9);
}

TEST_CASE("mini PIT pretraining reduces the loss deterministically") {
  Fixture f = make_fixture(8, 55);
  REQUIRE(f.items.size() >= 6);
  std::vector<SeparatorItem> train(f.items.begin(), f.items.begin() + 4);
  std::vector<SeparatorItem> validation(f.items.begin() + 4, f.items.end());

  OptimizerConfig opt;
  opt.learning_rate = 1e-3;
  opt.max_epochs = 5;
  opt.early_stop_patience = 30;
  opt.scheduler_patience = 5;
  opt.grad_accumulation = 2;

  ParamStore sep1;
  init_separator_params(sep1, small_hp(), 77);
  const TrainHistory h1 = pretrain_separator(sep1, small_hp(), train, validation, opt, 31, nullptr);
  REQUIRE(h1.train_loss.size() == 5);
  for (std::size_t e = 1; e < 5; ++e) CHECK(h1.train_loss[e] < h1.train_loss[e - 1]);

  ParamStore sep2;
  init_separator_params(sep2, small_hp(), 77);
  const TrainHistory h2 = pretrain_separator(sep2, small_hp(), train, validation, opt, 31, nullptr);
  CHECK(h1.train_loss == h2.train_loss);
  for (std::size_t i = 0; i < sep1.entries().size(); ++i)
    CHECK(sep1.entries()[i].value == sep2.entries()[i].value);
}

TEST_CASE("finetuning with the freeze flag keeps summarizer tensors bit-identical") {
  Fixture f = make_fixture(6, 66);
  REQUIRE(f.items.size() >= 4);
  std::vector<SeparatorItem> train(f.items.begin(), f.items.begin() + 3);
  std::vector<SeparatorItem> validation(f.items.begin() + 3, f.items.end());

  ParamStore sep;
  init_separator_params(sep, small_hp(), 12);
  ParamStore sum_store;
  init_summarizer_params(sum_store, sum_hp(), enc_cfg().d_audio, enc_cfg().d_text, 13);
  const std::vector<Matrix> before = [&] {
    std::vector<Matrix> v;
    for (const auto& e : sum_store.entries()) v.push_back(e.value);
    return v;
  }();
  const std::vector<Matrix> sep_before = [&] {
    std::vector<Matrix> v;
    for (const auto& e : sep.entries()) v.push_back(e.value);
    return v;
  }();

  OptimizerConfig opt;
  opt.learning_rate = 1e-4;
  opt.max_epochs = 2;
  opt.early_stop_patience = 30;
  opt.scheduler_patience = 5;
  opt.grad_accumulation = 2;

  finetune_ttr(sep, small_hp(), sum_store, sum_hp(), *f.encoders, train, validation, 0.5,
               /*freeze_summarizer=*/true, opt, 91, nullptr);

  bool sep_moved = false;
  for (std::size_t i = 0; i < sep.entries().size(); ++i)
    sep_moved = sep_moved || sep.entries()[i].value != sep_before[i];
  CHECK(sep_moved);
  for (std::size_t i = 0; i < sum_store.entries().size(); ++i)
    CHECK(sum_store.entries()[i].value == before[i]);

  // With the flag off, the summarizer moves too.
  ParamStore sep2;
  init_separator_params(sep2, small_hp(), 12);
  ParamStore sum2;
  init_summarizer_params(sum2, sum_hp(), enc_cfg().d_audio, enc_cfg().d_text, 13);
  finetune_ttr(sep2, small_hp(), sum2, sum_hp(), *f.encoders, train, validation, 0.5,
               /*freeze_summarizer=*/false, opt, 91, nullptr);
  bool sum_moved = false;
  for (std::size_t i = 0; i < sum2.entries().size(); ++i)
    sum_moved = sum_moved || sum2.entries()[i].value != before[i];
  CHECK(sum_moved);
}

TEST_CASE("hyperparameter validation") {
  SeparatorHyperparams hp = small_hp();
  hp.num_sources = 5;
  CHECK_THROWS_AS(validate(hp), ConfigError);
  hp = small_hp();
  hp.kernel = 0;
  CHECK_THROWS_AS(validate(hp), ConfigError);
}
