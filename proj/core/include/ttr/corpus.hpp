// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ttr/corpus_types.hpp"
#include "ttr/signal.hpp"

namespace ttr {

/// One subword piece. Pieces after the first position of a word carry the
/// "##" continuation marker, BERT wordpiece style. Each piece owns a narrowband
/// signature frequency so the toy audio encoder can recover subword identity.
struct Subword {
  std::string piece;        // marker included for continuation pieces, e.g. "##ka"
  bool continuation = false;
  double signature_hz = 0.0;
  int envelope_id = 0;      // 0 flat, 1 rising, 2 falling
};

struct Lexicon {
  std::vector<Subword> subwords;            // U entries
  std::vector<std::vector<int>> words;      // V entries of 1..3 subword ids
  std::vector<std::string> word_texts;      // concatenated pieces, markers stripped
  std::uint64_t seed = 0;

  int num_subwords() const { return static_cast<int>(subwords.size()); }
  std::vector<double> signature_frequencies() const;
};

Lexicon make_lexicon(int num_subwords, int num_words, double sample_rate, std::uint64_t seed);
void save_lexicon(const std::string& path, const Lexicon& lex);
Lexicon load_lexicon(const std::string& path);

/// Greedy longest-match against the piece vocabulary; continuation-marked
/// pieces after the first match. Throws std::invalid_argument naming the word
/// when it cannot be covered.
std::vector<int> tokenize(const std::string& word, const Lexicon& lex);

/// Tokenizes every word of a transcript into one SubwordSequence.
SubwordSequence tokenize_transcript(const TimedTranscript& transcript, const Lexicon& lex);

/// Rendered subword span, in samples. Spans are what the synthesizer actually
/// placed; SLA later re-derives approximate spans by even subdivision.
struct SubwordSpan {
  int subword_id = 0;
  std::size_t start_sample = 0;
  std::size_t end_sample = 0;
};

struct UtteranceRender {
  Waveform wave;
  TimedTranscript transcript;
  std::vector<int> token_ids;       // subword ids in rendered order
  std::vector<SubwordSpan> spans;
};

/// Renders word_ids as concatenated signature tones. Per-subword duration is
/// drawn uniformly from [0.08, 0.20] s, inter-word silence from [0.02, 0.08] s,
/// with 10 ms cosine ramps at each subword edge. Transcript times are exact at
/// sample resolution. Deterministic under (word_ids, lexicon, sample_rate, seed).
UtteranceRender synth_utterance(const std::vector<int>& word_ids, const Lexicon& lex,
                                double sample_rate, std::uint64_t seed);

struct DatasetConfig {
  double sample_rate = 0.0;
  int num_sources = 0;  // K
  bool noisy = false;
  double snr_db_min = 0.0;
  double snr_db_max = 0.0;
  int train_count = 0;
  int validation_count = 0;
  int test_count = 0;
  int num_subwords = 0;
  int num_words = 0;
  int words_per_utterance_min = 0;
  int words_per_utterance_max = 0;
  std::uint64_t seed = 0;
};

void validate(const DatasetConfig& cfg);

/// Fully assembled instance, before quantization to disk.
struct BuiltInstance {
  MixtureInstance inst;
  std::optional<double> snr_db;
};

/// Builds one split in memory. Word-id sequences are drawn from a single
/// deduplicated pool shared by all splits, so sequences never repeat across
/// splits under one seed. Exposed separately from gen_dataset so tests can
/// check pre-quantization properties (exact SNR, mixture identity).
std::vector<BuiltInstance> build_split(const DatasetConfig& cfg, const Lexicon& lex,
                                       const std::string& split);

struct ManifestEntry {
  std::string id;
  std::string mixture_path;                  // relative to the dataset root
  std::vector<std::string> source_paths;
  std::vector<std::string> transcript_paths;
  std::optional<double> snr_db;
};

/// Writes lexicon.json, dataset_meta.json and the train/validation/test splits
/// (mixture WAV, per-source WAVs, per-source transcripts, manifest.jsonl).
void gen_dataset(const DatasetConfig& cfg, const std::string& out_dir,
                 const std::string& config_hash);

std::vector<ManifestEntry> read_manifest(const std::string& path);
TimedTranscript read_transcript(const std::string& path);
void write_transcript(const std::string& path, const TimedTranscript& t);

struct LoadedInstance {
  std::string id;
  Waveform mixture;
  std::vector<Waveform> sources;
  std::vector<TimedTranscript> transcripts;
  std::optional<double> snr_db;
};

std::vector<LoadedInstance> load_split(const std::string& dataset_root, const std::string& split);

}  // namespace ttr
