// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ttr/autodiff.hpp"
#include "ttr/corpus.hpp"
#include "ttr/signal.hpp"

namespace ttr {

/// Column-embedding matrix. frame_rate is set for audio embeddings and absent
/// for text embeddings.
struct EmbeddingMatrix {
  ad::Matrix values;  // dim x count
  std::optional<double> frame_rate;

  int dim() const { return static_cast<int>(values.rows()); }
  int count() const { return static_cast<int>(values.cols()); }
};

struct EncoderConfig {
  int d_audio = 24;          // D_S
  int d_text = 32;           // D_W
  double frame_rate = 50.0;  // R, frames per second
  double frame_length = 0.032;  // seconds
  std::uint64_t seed = 0;
};

void validate(const EncoderConfig& cfg);

/// Frozen deterministic encoders. All tables are derived from (config, lexicon
/// frequencies) once; repeated calls are bit-identical and carry no trainable
/// parameters.
class Encoders {
 public:
  Encoders(const EncoderConfig& cfg, const std::vector<double>& signature_frequencies,
           double sample_rate);

  const EncoderConfig& config() const { return cfg_; }
  double sample_rate() const { return sample_rate_; }
  int num_channels() const { return static_cast<int>(cos_basis_.rows()); }

  /// Frame the waveform at 1/frame_rate hops, take squared correlation
  /// magnitudes against each signature frequency (log1p-compressed), then
  /// project with a fixed seeded matrix. Column count = floor(duration * R).
  EmbeddingMatrix audio_encode(const Waveform& w) const;

  /// Tape variant: differentiable with respect to the waveform samples.
  /// `wave` must be Nx1.
  ad::Var audio_encode_t(ad::Tape& t, ad::Var wave) const;

  int audio_frame_count(std::size_t num_samples) const;

  /// Per-token rows of a fixed seeded table, one fixed neighbor-averaging
  /// pass (0.5/0.25/0.25, reflecting at the ends), then unit column norms.
  EmbeddingMatrix text_encode(const SubwordSequence& tokens) const;

  /// Raw per-channel filterbank (U x T), before projection. Used by tests.
  ad::Matrix audio_filterbank(const Waveform& w) const;

 private:
  EncoderConfig cfg_;
  double sample_rate_;
  int frame_samples_;
  int hop_samples_;
  ad::Matrix cos_basis_;   // U x frame_samples, scaled by 2/W
  ad::Matrix sin_basis_;
  ad::Matrix audio_proj_;  // d_audio x U
  ad::Matrix text_table_;  // d_text x U
};

/// Waveform samples as an Nx1 matrix.
ad::Matrix to_column(const Waveform& w);

/// Flat binary cache: header {dim, count, frame_rate(0 when absent)} then
/// row-major 64-bit little-endian values.
void save_embedding(const std::string& path, const EmbeddingMatrix& m);
EmbeddingMatrix load_embedding(const std::string& path);

}  // namespace ttr
