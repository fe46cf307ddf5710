// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>

#include "ttr/encoders.hpp"
#include "ttr/separator.hpp"
#include "ttr/summarizer.hpp"

namespace ttr {

struct GradCheckResult {
  double max_rel_error = 0.0;
  int coordinates = 0;
};

inline constexpr double kGradCheckTolerance = 1e-4;

/// Sum of transformer_forward outputs vs central finite differences over
/// sampled parameter coordinates.
GradCheckResult grad_check_transformer(const SummarizerHyperparams& hp, int d_audio, int d_text,
                                       std::uint64_t seed, int n_coords);

/// TTR loss end to end: waveform -> frozen audio encoder -> SLA segments ->
/// summarizer -> cosine distance. Coordinates split between waveform samples
/// and summarizer parameters.
GradCheckResult grad_check_ttr(const SummarizerHyperparams& hp, const EncoderConfig& enc_cfg,
                               std::uint64_t seed, int n_coords);

/// total_loss at lambda = 0.5 with respect to separator parameters on a small
/// two-source instance.
GradCheckResult grad_check_total(const SummarizerHyperparams& hp, const EncoderConfig& enc_cfg,
                                 const SeparatorHyperparams& sep_hp, std::uint64_t seed,
                                 int n_coords);

}  // namespace ttr
