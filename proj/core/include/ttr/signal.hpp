// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ttr/corpus_types.hpp"

namespace ttr {

/// Mono time-domain signal. Samples are dimensionless amplitudes with a
/// nominal range of [-1, 1].
struct Waveform {
  std::vector<double> samples;
  double sample_rate = 0.0;

  std::size_t size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Throws std::invalid_argument / ttr::NumericError when the Waveform
/// invariants (positive rate, finite samples) are broken.
void validate(const Waveform& w, const std::string& what);

double energy(const Waveform& w);

struct MixtureInstance {
  Waveform mixture;
  std::vector<Waveform> sources;
  std::optional<Waveform> noise;
  std::vector<TimedTranscript> transcripts;
};

struct PitResult {
  double loss = 0.0;                    // negative dB sum under the best pairing
  std::vector<int> permutation;         // permutation[k] = estimate index paired with reference k
  std::vector<double> per_pair_si_sdr;  // dB, per reference k
};

/// Value returned instead of +inf when the scaled residual vanishes
/// (relative residual energy < kSiSdrResidualFloor).
inline constexpr double kSiSdrCapDb = 60.0;
inline constexpr double kSiSdrResidualFloor = 1e-12;

/// Scale-invariant SDR in dB: project the estimate onto the reference,
/// alpha = <estimate, reference> / ||reference||^2, then
/// 10*log10(||alpha*ref||^2 / ||alpha*ref - estimate||^2).
/// Metric-mode evaluation: applies the cap rule, no stabilizer.
double si_sdr(const Waveform& reference, const Waveform& estimate);

/// Plain scale-dependent SDR in dB: 10*log10(||ref||^2 / ||ref - est||^2),
/// with the same cap rule. No projection filter allowance.
double sdr(const Waveform& reference, const Waveform& estimate);

/// si_sdr(reference, estimate) - si_sdr(reference, mixture).
double si_sdr_improvement(const Waveform& mixture, const Waveform& reference,
                          const Waveform& estimate);

/// sdr(reference, estimate) - sdr(reference, mixture).
double sdr_improvement(const Waveform& mixture, const Waveform& reference,
                       const Waveform& estimate);

/// Exhaustive permutation-invariant pairing (K <= 4). Minimizes the sum of
/// -si_sdr over all K! pairings; ties break toward the lexicographically
/// smallest permutation.
PitResult pit_loss(const std::vector<Waveform>& references,
                   const std::vector<Waveform>& estimates);

/// Elementwise sum of sources plus optional noise. When snr_db is given the
/// noise is rescaled first so that 10*log10(sum_k ||s_k||^2 / ||n||^2) = snr_db.
MixtureInstance mix(const std::vector<Waveform>& sources, std::optional<Waveform> noise,
                    std::optional<double> snr_db);

}  // namespace ttr
