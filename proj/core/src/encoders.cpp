// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ttr/encoders.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "ttr/errors.hpp"
#include "ttr/rng.hpp"

namespace ttr {
namespace {

ad::Matrix seeded_uniform(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double lo,
                          double hi) {
  Rng rng(seed);
  ad::Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(lo, hi);
  return m;
}

void wr_u64(std::ofstream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t rd_u64(std::ifstream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw IoError("embedding cache truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double bits_to_double(std::uint64_t bits) {
  double d;
  static_assert(sizeof(d) == 8);
  std::memcpy(&d, &bits, 8);
  return d;
}

std::uint64_t double_to_bits(double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  return bits;
}

}  // namespace

void validate(const EncoderConfig& cfg) {
  if (cfg.d_audio < 1 || cfg.d_text < 1) throw ConfigError("encoder: dims must be >= 1");
  if (!(cfg.frame_rate > 0)) throw ConfigError("encoder: frame_rate must be > 0");
  if (!(cfg.frame_length >= 1.0 / cfg.frame_rate))
    throw ConfigError("encoder: frame_length must cover at least one hop (>= 1/frame_rate)");
}

Encoders::Encoders(const EncoderConfig& cfg, const std::vector<double>& signature_frequencies,
                   double sample_rate)
    : cfg_(cfg), sample_rate_(sample_rate) {
  validate(cfg);
  if (signature_frequencies.empty()) throw ConfigError("encoder: empty signature frequency list");
  if (!(sample_rate > 0)) throw ConfigError("encoder: sample_rate must be > 0");

  frame_samples_ = static_cast<int>(std::llround(cfg.frame_length * sample_rate));
  hop_samples_ = static_cast<int>(std::llround(sample_rate / cfg.frame_rate));
  if (frame_samples_ < 1 || hop_samples_ < 1)
    throw ConfigError("encoder: degenerate frame/hop sizes");

  const int u = static_cast<int>(signature_frequencies.size());
  cos_basis_.resize(u, frame_samples_);
  sin_basis_.resize(u, frame_samples_);
  const double norm = 2.0 / static_cast<double>(frame_samples_);
  for (int ch = 0; ch < u; ++ch) {
    const double w = 2.0 * M_PI * signature_frequencies[static_cast<std::size_t>(ch)] / sample_rate;
    for (int n = 0; n < frame_samples_; ++n) {
      cos_basis_(ch, n) = norm * std::cos(w * n);
      sin_basis_(ch, n) = norm * std::sin(w * n);
    }
  }
  audio_proj_ = seeded_uniform(cfg.d_audio, u, derive_seed(cfg.seed, "audio-proj"), -1.0, 1.0);
  text_table_ = seeded_uniform(cfg.d_text, u, derive_seed(cfg.seed, "text-table"), -1.0, 1.0);
}

int Encoders::audio_frame_count(std::size_t num_samples) const {
  const double duration = static_cast<double>(num_samples) / sample_rate_;
  return static_cast<int>(std::floor(duration * cfg_.frame_rate));
}

ad::Var Encoders::audio_encode_t(ad::Tape& t, ad::Var wave) const {
  const int count = audio_frame_count(static_cast<std::size_t>(t.val(wave).rows()));
  if (count < 1) throw std::invalid_argument("audio_encode: input shorter than one frame");
  ad::Var frames = t.frame_signal(wave, frame_samples_, hop_samples_, count);
  ad::Var c = t.matmul(t.constant(cos_basis_), frames);
  ad::Var s = t.matmul(t.constant(sin_basis_), frames);
  ad::Var power = t.add(t.mul(c, c), t.mul(s, s));
  return t.matmul(t.constant(audio_proj_), t.log1p_(power));
}

EmbeddingMatrix Encoders::audio_encode(const Waveform& w) const {
  validate(w, "audio_encode");
  ad::Tape t;
  ad::Var wave = t.constant(
      Eigen::Map<const Eigen::VectorXd>(w.samples.data(), static_cast<Eigen::Index>(w.samples.size())));
  ad::Var out = audio_encode_t(t, wave);
  EmbeddingMatrix m;
  m.values = t.val(out);
  m.frame_rate = cfg_.frame_rate;
  return m;
}

ad::Matrix Encoders::audio_filterbank(const Waveform& w) const {
  validate(w, "audio_filterbank");
  ad::Tape t;
  ad::Var wave = t.constant(
      Eigen::Map<const Eigen::VectorXd>(w.samples.data(), static_cast<Eigen::Index>(w.samples.size())));
  const int count = audio_frame_count(w.samples.size());
  if (count < 1) throw std::invalid_argument("audio_filterbank: input shorter than one frame");
  ad::Var frames = t.frame_signal(wave, frame_samples_, hop_samples_, count);
  ad::Var c = t.matmul(t.constant(cos_basis_), frames);
  ad::Var s = t.matmul(t.constant(sin_basis_), frames);
  ad::Var power = t.add(t.mul(c, c), t.mul(s, s));
  return t.val(power);
}

EmbeddingMatrix Encoders::text_encode(const SubwordSequence& tokens) const {
  const int m = static_cast<int>(tokens.tokens.size());
  if (m < 1) throw std::invalid_argument("text_encode: empty token list");
  const int u = static_cast<int>(text_table_.cols());
  ad::Matrix raw(cfg_.d_text, m);
  for (int j = 0; j < m; ++j) {
    const int id = tokens.tokens[static_cast<std::size_t>(j)];
    if (id < 0 || id >= u)
      throw std::invalid_argument("text_encode: unknown token id " + std::to_string(id));
    raw.col(j) = text_table_.col(id);
  }
  // One fixed contextualization pass; ends reflect (clamped for M == 1).
  ad::Matrix mixed(cfg_.d_text, m);
  for (int j = 0; j < m; ++j) {
    const int left = j == 0 ? std::min(1, m - 1) : j - 1;
    const int right = j == m - 1 ? std::max(m - 2, 0) : j + 1;
    mixed.col(j) = 0.5 * raw.col(j) + 0.25 * raw.col(left) + 0.25 * raw.col(right);
  }
  for (int j = 0; j < m; ++j) mixed.col(j) /= mixed.col(j).norm();
  EmbeddingMatrix out;
  out.values = std::move(mixed);
  return out;
}

ad::Matrix to_column(const Waveform& w) {
  return Eigen::Map<const Eigen::VectorXd>(w.samples.data(),
                                           static_cast<Eigen::Index>(w.samples.size()));
}

void save_embedding(const std::string& path, const EmbeddingMatrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write embedding cache: " + path);
  wr_u64(os, static_cast<std::uint64_t>(m.values.rows()));
  wr_u64(os, static_cast<std::uint64_t>(m.values.cols()));
  wr_u64(os, double_to_bits(m.frame_rate.value_or(0.0)));
  for (Eigen::Index r = 0; r < m.values.rows(); ++r)
    for (Eigen::Index c = 0; c < m.values.cols(); ++c) wr_u64(os, double_to_bits(m.values(r, c)));
  if (!os) throw IoError("write failed: " + path);
}

EmbeddingMatrix load_embedding(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open embedding cache: " + path);
  EmbeddingMatrix m;
  const auto rows = static_cast<Eigen::Index>(rd_u64(is));
  const auto cols = static_cast<Eigen::Index>(rd_u64(is));
  const double fr = bits_to_double(rd_u64(is));
  if (fr != 0.0) m.frame_rate = fr;
  m.values.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m.values(r, c) = bits_to_double(rd_u64(is));
  return m;
}

}  // namespace ttr
