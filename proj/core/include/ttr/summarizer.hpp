// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ttr/alignment.hpp"
#include "ttr/autodiff.hpp"
#include "ttr/encoders.hpp"
#include "ttr/params.hpp"
#include "ttr/training.hpp"

namespace ttr {

/// Pre-norm Transformer encoder blocks, no positional encodings anywhere.
/// The subword summarizer stack carries an input projection (d_audio ->
/// d_model); both stacks project d_model -> d_text at the output.
struct SummarizerHyperparams {
  int d_model = 32;
  int n_heads = 4;
  int d_ff = 64;
  int layers_sum = 2;
  int layers_agg = 2;
};

void validate(const SummarizerHyperparams& hp, int d_text);

/// Leaf Vars for every store entry, created once per tape. After backward,
/// flush() adds the tape gradients back into the store's gradient slots in
/// store order.
class BoundParams {
 public:
  BoundParams(ad::Tape& tape, ParamStore& store);
  ad::Var operator[](const std::string& name) const;
  void flush_grads();

 private:
  ad::Tape* tape_;
  ParamStore* store_;
  std::vector<ad::Var> vars_;  // parallel to store entries
  std::map<std::string, std::size_t> index_;
};

/// Registers the "sum.*" and "agg.*" tensors. Weights and biases draw from
/// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) under per-name derived seeds;
/// layer norms start at gain 1, shift 0.
void init_summarizer_params(ParamStore& store, const SummarizerHyperparams& hp, int d_audio,
                            int d_text, std::uint64_t seed);

/// One encoder stack: optional input projection, `layers` pre-norm blocks
/// (x += SelfAttn(LN(x)); x += FFN(LN(x))), then the output projection.
/// Column count is preserved.
ad::Var transformer_forward(ad::Tape& t, const BoundParams& p, const std::string& prefix,
                            const SummarizerHyperparams& hp, ad::Var input);

/// P_Sum: runs the "sum" stack on each aligned segment of S independently and
/// mean-pools each result into one column; output is d_text x M.
ad::Var summarize(ad::Tape& t, const BoundParams& p, const SummarizerHyperparams& hp, ad::Var s,
                  const AlignmentMap& align);

/// P_Agg: context mixing over the M summary columns, dimension and length
/// preserved.
ad::Var aggregate(ad::Tape& t, const BoundParams& p, const SummarizerHyperparams& hp,
                  ad::Var s_prime);

/// Eq-style mean cosine distance between matched columns, in [0, 2].
ad::Var ttr_loss_t(ad::Tape& t, ad::Var s_bar, ad::Var w);
double ttr_loss(const ad::Matrix& s_bar, const ad::Matrix& w);

/// summarize + aggregate.
ad::Var summarizer_apply(ad::Tape& t, const BoundParams& p, const SummarizerHyperparams& hp,
                         ad::Var audio, const AlignmentMap& align);

/// Plain (no-gradient) evaluation of P(SLA-grouped audio embedding).
ad::Matrix summarizer_eval(ParamStore& store, const SummarizerHyperparams& hp,
                           const ad::Matrix& audio, const AlignmentMap& align);

/// Precomputed per-utterance training item: frozen audio embedding, alignment
/// from the transcript, frozen text embedding.
struct SummarizerItem {
  ad::Matrix audio;  // d_audio x T
  AlignmentMap align;
  ad::Matrix text;   // d_text x M
};

SummarizerItem make_summarizer_item(const Waveform& wave, const TimedTranscript& transcript,
                                    const Encoders& encoders, const Lexicon& lexicon);

/// Minimizes mean TTR loss over the clean-utterance items with Adam;
/// parameters end at the best validation epoch.
TrainHistory pretrain_summarizer(ParamStore& params, const SummarizerHyperparams& hp,
                                 const std::vector<SummarizerItem>& train,
                                 const std::vector<SummarizerItem>& validation,
                                 const OptimizerConfig& opt, std::uint64_t shuffle_seed,
                                 LossLog* log,
                                 std::function<void(int, double, double, double)> on_epoch = {});

}  // namespace ttr
