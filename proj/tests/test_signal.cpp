// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ttr/signal.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <doctest.h>

#include "ttr/rng.hpp"

using namespace ttr;

namespace {

Waveform make_wave(std::vector<double> samples, double rate = 8000.0) {
  return Waveform{std::move(samples), rate};
}

Waveform random_wave(Rng& rng, std::size_t n, double amp = 0.5) {
  Waveform w;
  w.sample_rate = 8000.0;
  w.samples.resize(n);
  for (auto& s : w.samples) s = rng.uniform(-amp, amp);
  return w;
}

// Independent full enumeration over all K! pairings.
PitResult brute_force_pit(const std::vector<Waveform>& refs, const std::vector<Waveform>& ests) {
  std::vector<int> perm(refs.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  PitResult best;
  best.loss = std::numeric_limits<double>::infinity();
  do {
    double loss = 0.0;
    std::vector<double> pair_db(refs.size());
    for (std::size_t r = 0; r < refs.size(); ++r) {
      pair_db[r] = si_sdr(refs[r], ests[static_cast<std::size_t>(perm[r])]);
      loss -= pair_db[r];
    }
    if (loss < best.loss) {
      best.loss = loss;
      best.permutation = perm;
      best.per_pair_si_sdr = pair_db;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("si_sdr hand-evaluated case") {
  // alpha = 1, signal energy 1, residual energy 1 -> 0 dB.
  CHECK(si_sdr(make_wave({1.0, 0.0}), make_wave({1.0, 1.0})) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("si_sdr caps on exact copies") {
  Rng rng(11);
  const Waveform r = random_wave(rng, 256);
  CHECK(si_sdr(r, r) == kSiSdrCapDb);
  Waveform scaled = r;
  for (auto& s : scaled.samples) s *= 3.0;
  CHECK(si_sdr(r, scaled) == kSiSdrCapDb);
}

TEST_CASE("si_sdr scale invariance in the estimate") {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const Waveform r = random_wave(rng, 128);
    const Waveform e = random_wave(rng, 128);
    const double c = std::exp(rng.uniform(-3.0, 3.0));
    Waveform ce = e;
    for (auto& s : ce.samples) s *= c;
    CHECK(std::abs(si_sdr(r, e) - si_sdr(r, ce)) <= 1e-9);
  }
}

TEST_CASE("si_sdr contract errors") {
  CHECK_THROWS_AS(si_sdr(make_wave({1.0, 2.0}), make_wave({1.0})), std::invalid_argument);
  CHECK_THROWS_AS(si_sdr(make_wave({0.0, 0.0}), make_wave({1.0, 1.0})), std::domain_error);
}

TEST_CASE("si_sdr_improvement basics") {
  Rng rng(7);
  const Waveform s1 = random_wave(rng, 512);
  const Waveform s2 = random_wave(rng, 512);
  const MixtureInstance mixref = mix({s1, s2}, std::nullopt, std::nullopt);
  const Waveform& x = mixref.mixture;

  CHECK(si_sdr_improvement(x, s1, x) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(si_sdr_improvement(x, s1, s1) ==
        doctest::Approx(kSiSdrCapDb - si_sdr(s1, x)).epsilon(1e-12));

  Waveform almost = s1;
  for (auto& v : almost.samples) v += rng.uniform(-1e-3, 1e-3);
  CHECK(si_sdr_improvement(x, s1, almost) > 0.0);
}

TEST_CASE("pit identity and swap cases") {
  Rng rng(3);
  const std::vector<Waveform> refs = {random_wave(rng, 200), random_wave(rng, 200)};

  const PitResult identity = pit_loss(refs, refs);
  CHECK(identity.permutation == std::vector<int>{0, 1});
  CHECK(identity.loss == doctest::Approx(-2.0 * kSiSdrCapDb));

  const PitResult swapped = pit_loss(refs, {refs[1], refs[0]});
  CHECK(swapped.permutation == std::vector<int>{1, 0});
}

TEST_CASE("pit matches the brute-force enumeration oracle") {
  Rng rng(99);
  for (int k : {2, 3}) {
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<Waveform> refs, ests;
      for (int i = 0; i < k; ++i) {
        refs.push_back(random_wave(rng, 64));
        ests.push_back(random_wave(rng, 64));
      }
      const PitResult got = pit_loss(refs, ests);
      const PitResult want = brute_force_pit(refs, ests);
      CHECK(got.permutation == want.permutation);
      CHECK(got.loss == doctest::Approx(want.loss).epsilon(1e-9));
    }
  }
}

TEST_CASE("pit invariance under estimate shuffling") {
  Rng rng(5);
  std::vector<Waveform> refs, ests;
  for (int i = 0; i < 3; ++i) {
    refs.push_back(random_wave(rng, 100));
    ests.push_back(random_wave(rng, 100));
  }
  const PitResult base = pit_loss(refs, ests);
  const std::vector<Waveform> shuffled = {ests[2], ests[0], ests[1]};
  const PitResult moved = pit_loss(refs, shuffled);
  CHECK(moved.loss == doctest::Approx(base.loss).epsilon(1e-9));
  // Shuffling only relabels estimate indices; the matched signals agree.
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const Waveform& a = ests[static_cast<std::size_t>(base.permutation[r])];
    const Waveform& b = shuffled[static_cast<std::size_t>(moved.permutation[r])];
    CHECK(a.samples == b.samples);
  }

  // Never worse than the identity pairing.
  double identity_loss = 0.0;
  for (std::size_t r = 0; r < refs.size(); ++r) identity_loss -= si_sdr(refs[r], ests[r]);
  CHECK(base.loss <= identity_loss + 1e-12);
}

TEST_CASE("pit rejects unsupported K") {
  Rng rng(1);
  std::vector<Waveform> many;
  for (int i = 0; i < 5; ++i) many.push_back(random_wave(rng, 16));
  CHECK_THROWS_AS(pit_loss(many, many), std::invalid_argument);
  CHECK_THROWS_AS(pit_loss({}, {}), std::invalid_argument);
}

TEST_CASE("mix adds sources exactly") {
  Rng rng(17);
  const Waveform s1 = random_wave(rng, 300);
  const Waveform s2 = random_wave(rng, 300);
  const MixtureInstance m = mix({s1, s2}, std::nullopt, std::nullopt);
  for (std::size_t i = 0; i < m.mixture.samples.size(); ++i)
    CHECK(m.mixture.samples[i] == s1.samples[i] + s2.samples[i]);
}

TEST_CASE("mix hits the requested SNR") {
  Rng rng(23);
  for (double snr : {0.0, 5.0, -3.0}) {
    std::vector<Waveform> sources = {random_wave(rng, 400), random_wave(rng, 400),
                                     random_wave(rng, 400)};
    Waveform noise = random_wave(rng, 400, 0.2);
    const MixtureInstance m = mix(sources, noise, snr);
    REQUIRE(m.noise.has_value());
    double src_energy = 0.0;
    for (const auto& s : m.sources) src_energy += energy(s);
    const double achieved = 10.0 * std::log10(src_energy / energy(*m.noise));
    CHECK(achieved == doctest::Approx(snr).epsilon(1e-6));

    // Reconstruction: subtracting everything leaves ~nothing.
    for (std::size_t i = 0; i < m.mixture.samples.size(); ++i) {
      double resid = m.mixture.samples[i] - m.noise->samples[i];
      for (const auto& s : m.sources) resid -= s.samples[i];
      CHECK(std::abs(resid) <= 1e-9);
    }
  }
}

TEST_CASE("mix validates shapes") {
  CHECK_THROWS_AS(mix({make_wave({1.0, 2.0}), make_wave({1.0})}, std::nullopt, std::nullopt),
                  std::invalid_argument);
}
