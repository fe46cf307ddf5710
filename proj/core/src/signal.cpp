// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ttr/signal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ttr/errors.hpp"

namespace ttr {
namespace {

void require_same_length(const Waveform& a, const Waveform& b, const char* what) {
  if (a.samples.size() != b.samples.size())
    throw std::invalid_argument(std::string(what) + ": length mismatch (" +
                                std::to_string(a.samples.size()) + " vs " +
                                std::to_string(b.samples.size()) + ")");
  if (a.sample_rate != b.sample_rate)
    throw std::invalid_argument(std::string(what) + ": sample rate mismatch");
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double ratio_db_capped(double signal_energy, double residual_energy) {
  if (residual_energy < kSiSdrResidualFloor * signal_energy) return kSiSdrCapDb;
  return 10.0 * std::log10(signal_energy / residual_energy);
}

}  // namespace

void validate(const Waveform& w, const std::string& what) {
  if (!(w.sample_rate > 0.0)) throw std::invalid_argument(what + ": sample_rate must be > 0");
  for (double s : w.samples)
    if (!std::isfinite(s)) throw NumericError(what + ": non-finite sample");
}

double energy(const Waveform& w) { return dot(w.samples, w.samples); }

double si_sdr(const Waveform& reference, const Waveform& estimate) {
  require_same_length(reference, estimate, "si_sdr");
  const double ref_energy = energy(reference);
  if (ref_energy == 0.0) throw std::domain_error("si_sdr: reference is identically zero");

  const double alpha = dot(estimate.samples, reference.samples) / ref_energy;
  const double signal_energy = alpha * alpha * ref_energy;
  double residual_energy = 0.0;
  for (std::size_t i = 0; i < reference.samples.size(); ++i) {
    const double d = alpha * reference.samples[i] - estimate.samples[i];
    residual_energy += d * d;
  }
  return ratio_db_capped(signal_energy, residual_energy);
}

double sdr(const Waveform& reference, const Waveform& estimate) {
  require_same_length(reference, estimate, "sdr");
  const double ref_energy = energy(reference);
  if (ref_energy == 0.0) throw std::domain_error("sdr: reference is identically zero");
  double residual_energy = 0.0;
  for (std::size_t i = 0; i < reference.samples.size(); ++i) {
    const double d = reference.samples[i] - estimate.samples[i];
    residual_energy += d * d;
  }
  return ratio_db_capped(ref_energy, residual_energy);
}

double si_sdr_improvement(const Waveform& mixture, const Waveform& reference,
                          const Waveform& estimate) {
  return si_sdr(reference, estimate) - si_sdr(reference, mixture);
}

double sdr_improvement(const Waveform& mixture, const Waveform& reference,
                       const Waveform& estimate) {
  return sdr(reference, estimate) - sdr(reference, mixture);
}

PitResult pit_loss(const std::vector<Waveform>& references,
                   const std::vector<Waveform>& estimates) {
  const std::size_t k = references.size();
  if (k == 0) throw std::invalid_argument("pit_loss: need at least one source");
  if (estimates.size() != k) throw std::invalid_argument("pit_loss: K mismatch");
  if (k > 4) throw std::invalid_argument("pit_loss: K > 4 unsupported (factorial search bound)");

  // Pairwise table first; K^2 evaluations instead of K!*K.
  std::vector<std::vector<double>> pair_db(k, std::vector<double>(k));
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t e = 0; e < k; ++e) pair_db[r][e] = si_sdr(references[r], estimates[e]);

  std::vector<int> perm(k);
  for (std::size_t i = 0; i < k; ++i) perm[i] = static_cast<int>(i);

  std::vector<int> best_perm;
  double best_loss = std::numeric_limits<double>::infinity();
  // Permutations visited in lexicographic order; strict improvement keeps the
  // lexicographically smallest permutation on ties.
  do {
    double loss = 0.0;
    for (std::size_t r = 0; r < k; ++r) loss -= pair_db[r][static_cast<std::size_t>(perm[r])];
    if (loss < best_loss) {
      best_loss = loss;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  PitResult out;
  out.loss = best_loss;
  out.permutation = best_perm;
  out.per_pair_si_sdr.resize(k);
  for (std::size_t r = 0; r < k; ++r)
    out.per_pair_si_sdr[r] = pair_db[r][static_cast<std::size_t>(best_perm[r])];
  return out;
}

MixtureInstance mix(const std::vector<Waveform>& sources, std::optional<Waveform> noise,
                    std::optional<double> snr_db) {
  if (sources.empty()) throw std::invalid_argument("mix: no sources");
  for (std::size_t i = 1; i < sources.size(); ++i)
    require_same_length(sources[0], sources[i], "mix");
  if (noise) require_same_length(sources[0], *noise, "mix");

  MixtureInstance out;
  out.sources = sources;

  if (noise && snr_db) {
    double source_energy = 0.0;
    for (const auto& s : sources) source_energy += energy(s);
    const double noise_energy = energy(*noise);
    if (noise_energy == 0.0) throw std::domain_error("mix: zero-energy noise with snr_db");
    // sum ||s||^2 / ||n'||^2 = 10^(snr/10)  =>  ||n'||^2 = sum ||s||^2 * 10^(-snr/10)
    const double target = source_energy * std::pow(10.0, -*snr_db / 10.0);
    const double gain = std::sqrt(target / noise_energy);
    for (double& v : noise->samples) v *= gain;
  }
  if (noise) out.noise = std::move(noise);

  Waveform m;
  m.sample_rate = sources[0].sample_rate;
  m.samples.assign(sources[0].samples.size(), 0.0);
  for (const auto& s : sources)
    for (std::size_t i = 0; i < m.samples.size(); ++i) m.samples[i] += s.samples[i];
  if (out.noise)
    for (std::size_t i = 0; i < m.samples.size(); ++i) m.samples[i] += out.noise->samples[i];
  out.mixture = std::move(m);
  return out;
}

}  // namespace ttr
