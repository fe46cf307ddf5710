// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ttr/corpus.hpp"
#include "ttr/encoders.hpp"
#include "ttr/separator.hpp"
#include "ttr/summarizer.hpp"

namespace ttr {

enum class EmbedKind { kCleanSource, kMixture };

/// Produces the summarized audio representation for a waveform under a given
/// alignment. The matched text embedding rides along so tests can drive the
/// report with a constructed summarizer; the production path ignores it.
using SummarizeFn = std::function<ad::Matrix(const Waveform& wave, const AlignmentMap& align,
                                             const ad::Matrix& text, EmbedKind kind)>;

SummarizeFn make_summarize_fn(ParamStore& summarizer_store, const SummarizerHyperparams& hp,
                              const Encoders& encoders);

struct DiscriminationPair {
  std::string id;
  double d_clean = 0.0;  // L_TTR(S_bar of source 1, W)
  double d_mix = 0.0;    // L_TTR(X_bar of the mixture, W), same alignment
};

struct DiscriminationReport {
  std::vector<DiscriminationPair> pairs;  // ascending by d_clean
  double fraction_ge = 0.0;               // fraction with d_mix >= d_clean
  double mean_diff = 0.0;                 // mean(d_mix - d_clean)
};

/// Compares per-utterance TTR distances of the first clean source against the
/// mixture, both aligned with source 1's transcript. Pairs come back sorted
/// ascending by the clean distance so curves plot in the protocol order.
DiscriminationReport discrimination_eval(const std::vector<LoadedInstance>& instances,
                                         const Lexicon& lexicon, const Encoders& encoders,
                                         const SummarizeFn& summarize);

/// curve.tsv {rank, d_clean, d_mix}, per_instance.jsonl {id, metric, value},
/// summary.json with the statistics and config hash.
void write_discrimination_report(const std::string& out_dir, const DiscriminationReport& report,
                                 const std::string& config_hash);

DiscriminationReport read_discrimination_per_instance(const std::string& per_instance_path);

using SeparateFn = std::function<std::vector<Waveform>(const Waveform& mixture)>;

struct InstanceScore {
  std::string id;
  double sdri = 0.0;
  double si_sdri = 0.0;
};

struct ScoreboardRow {
  std::string label;
  std::optional<double> lambda;
  double mean_sdri = 0.0;
  double mean_si_sdri = 0.0;
  std::vector<InstanceScore> per_instance;
};

/// Per-instance SDRi (plain scale-dependent SDR deltas, no filter allowance)
/// and SI-SDRi under the PIT-optimal assignment, averaged over sources.
ScoreboardRow evaluate_separation(const std::vector<LoadedInstance>& instances,
                                  const SeparateFn& separate, const std::string& label,
                                  std::optional<double> lambda, int threads = 1);

/// scoreboard.json plus one per-instance jsonl per row.
void write_scoreboard(const std::string& out_dir, const std::vector<ScoreboardRow>& rows,
                      const std::string& config_hash);

}  // namespace ttr
