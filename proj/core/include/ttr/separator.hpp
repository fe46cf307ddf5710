// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ttr/autodiff.hpp"
#include "ttr/corpus.hpp"
#include "ttr/encoders.hpp"
#include "ttr/params.hpp"
#include "ttr/signal.hpp"
#include "ttr/summarizer.hpp"
#include "ttr/training.hpp"

namespace ttr {

/// Mask-based encoder-separator-decoder. Analysis and synthesis banks are
/// bias-free so silence maps to silence; the dilated mask network keeps
/// biases. Dilations run 1, 2, 4, ... across the blocks.
struct SeparatorHyperparams {
  int num_filters = 64;  // F
  int kernel = 16;       // analysis kernel, samples
  int stride = 8;        // analysis hop, samples
  int blocks = 4;        // dilated residual blocks
  int channels = 64;     // C
  int num_sources = 2;   // K mask heads
};

void validate(const SeparatorHyperparams& hp);

void init_separator_params(ParamStore& store, const SeparatorHyperparams& hp, std::uint64_t seed);

/// Forward pass on the tape; x is Nx1 with N >= kernel. Returns K estimates,
/// each Nx1, differentiable w.r.t. params and x.
std::vector<ad::Var> separate_t(ad::Tape& t, const BoundParams& p, const SeparatorHyperparams& hp,
                                ad::Var x);

/// Plain inference.
std::vector<Waveform> separate(ParamStore& store, const SeparatorHyperparams& hp,
                               const Waveform& x);

/// Training-mode -SI-SDR: stabilizer 1e-8 inside the log denominator, capped
/// like the metric when the residual all but vanishes.
ad::Var neg_si_sdr_t(ad::Tape& t, ad::Var reference, ad::Var estimate);

struct PitVarResult {
  ad::Var loss;                  // scalar Var, sum of the chosen -SI-SDR terms
  std::vector<int> permutation;  // estimate index per reference
};

/// Exhaustive PIT on the tape; gradient flows through the chosen pairing only.
PitVarResult pit_loss_t(ad::Tape& t, const std::vector<ad::Var>& references,
                        const std::vector<ad::Var>& estimates);

/// One training/evaluation instance. TTR context (alignments from reference
/// transcripts, text embeddings) is present on finetuning items only.
struct SeparatorItem {
  std::string id;
  Waveform mixture;
  std::vector<Waveform> references;
  ad::Matrix mixture_col;
  std::vector<ad::Matrix> reference_cols;
  std::vector<TimedTranscript> transcripts;
  std::vector<AlignmentMap> aligns;
  std::vector<ad::Matrix> texts;

  bool has_ttr_context() const { return !texts.empty(); }
};

SeparatorItem make_separator_item(const LoadedInstance& inst);
/// Adds alignments (reference word timings, frame count from the mixture
/// length) and frozen text embeddings for the TTR term.
SeparatorItem make_finetune_item(const LoadedInstance& inst, const Encoders& encoders,
                                 const Lexicon& lexicon);

struct TotalLossValue {
  double total = 0.0;
  double pit_term = 0.0;
  double ttr_sum = 0.0;              // sum over sources of L_TTR
  std::vector<int> permutation;
  std::vector<double> per_source_ttr;
};

/// Joint objective on the tape: L_PIT + lambda * sum_k L_TTR. Estimates are
/// paired with transcripts through the PIT-optimal permutation; the TTR branch
/// runs audio_encode -> SLA segments -> summarize -> aggregate per source.
struct TotalLossVar {
  ad::Var total;
  TotalLossValue value;
};

TotalLossVar total_loss_t(ad::Tape& t, const std::vector<ad::Var>& estimates,
                          const SeparatorItem& item, const BoundParams& summarizer_params,
                          const SummarizerHyperparams& sum_hp, const Encoders& encoders,
                          double lambda);

/// Plain evaluation of the joint objective on given estimate waveforms.
TotalLossValue total_loss(const std::vector<Waveform>& estimates, const SeparatorItem& item,
                          ParamStore& summarizer_store, const SummarizerHyperparams& sum_hp,
                          const Encoders& encoders, double lambda);

/// PIT pretraining. Logs per-epoch validation SI-SDRi under split name
/// "validation_si_sdri".
TrainHistory pretrain_separator(ParamStore& sep, const SeparatorHyperparams& hp,
                                const std::vector<SeparatorItem>& train,
                                const std::vector<SeparatorItem>& validation,
                                const OptimizerConfig& opt, std::uint64_t shuffle_seed,
                                LossLog* log,
                                std::function<void(int, double, double, double)> on_epoch = {});

/// TTR-regularized finetuning. Only unfrozen parameters move; with
/// freeze_summarizer the summarizer tensors stay bit-identical.
TrainHistory finetune_ttr(ParamStore& sep, const SeparatorHyperparams& sep_hp,
                          ParamStore& summarizer_store, const SummarizerHyperparams& sum_hp,
                          const Encoders& encoders, const std::vector<SeparatorItem>& train,
                          const std::vector<SeparatorItem>& validation, double lambda,
                          bool freeze_summarizer, const OptimizerConfig& opt,
                          std::uint64_t shuffle_seed, LossLog* log,
                          std::function<void(int, double, double, double)> on_epoch = {});

/// Mean validation SI-SDRi of the current separator (metric mode, PIT-paired).
double mean_si_sdr_improvement(ParamStore& sep, const SeparatorHyperparams& hp,
                               const std::vector<SeparatorItem>& items);

/// Mean over items of mean-per-source L_TTR on the separator's outputs,
/// PIT-paired against reference transcripts.
double mean_ttr_on_estimates(ParamStore& sep, const SeparatorHyperparams& hp,
                             ParamStore& summarizer_store, const SummarizerHyperparams& sum_hp,
                             const Encoders& encoders, const std::vector<SeparatorItem>& items);

}  // namespace ttr
