// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ttr/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "ttr/errors.hpp"
#include "ttr/rng.hpp"
#include "ttr/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ttr {
namespace {

constexpr double kToneAmplitude = 0.15;
constexpr double kRampSeconds = 0.010;
constexpr double kSubwordMinSec = 0.08;
constexpr double kSubwordMaxSec = 0.20;
constexpr double kGapMinSec = 0.02;
constexpr double kGapMaxSec = 0.08;
constexpr double kPeakLimit = 0.999;

const char* kConsonants[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
const char* kVowels[] = {"a", "e", "i", "o", "u"};

std::string syllable(int index) {
  const int nc = static_cast<int>(std::size(kConsonants));
  return std::string(kConsonants[index % nc]) + kVowels[(index / nc) % std::size(kVowels)];
}

double envelope_gain(int envelope_id, double frac) {
  switch (envelope_id) {
    case 1: return 0.6 + 0.4 * frac;   // rising
    case 2: return 1.0 - 0.4 * frac;   // falling
    default: return 1.0;               // flat
  }
}

std::string format_time(double seconds) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", seconds);
  return buf;
}

}  // namespace

std::vector<double> Lexicon::signature_frequencies() const {
  std::vector<double> f;
  f.reserve(subwords.size());
  for (const auto& s : subwords) f.push_back(s.signature_hz);
  return f;
}

Lexicon make_lexicon(int num_subwords, int num_words, double sample_rate, std::uint64_t seed) {
  if (num_subwords < 2) throw ConfigError("lexicon: num_subwords must be >= 2");
  if (num_words < 1) throw ConfigError("lexicon: num_words must be >= 1");
  const int n_plain = (num_subwords + 1) / 2;
  const int n_cont = num_subwords - n_plain;
  const int max_syllables =
      static_cast<int>(std::size(kConsonants) * std::size(kVowels));
  if (n_plain > max_syllables)
    throw ConfigError("lexicon: num_subwords exceeds the syllable inventory");

  const double f_lo = 400.0;
  const double f_hi = std::min(3600.0, 0.45 * sample_rate);
  if (!(f_hi > f_lo))
    throw ConfigError("lexicon: sample_rate too low for distinct signature frequencies");

  Lexicon lex;
  lex.seed = seed;
  lex.subwords.reserve(num_subwords);
  for (int u = 0; u < num_subwords; ++u) {
    Subword sw;
    if (u < n_plain) {
      sw.piece = syllable(u);
      sw.continuation = false;
    } else {
      sw.piece = "##" + syllable(u - n_plain);
      sw.continuation = true;
    }
    sw.signature_hz = f_lo + (f_hi - f_lo) * static_cast<double>(u) /
                                 static_cast<double>(num_subwords - 1);
    sw.envelope_id = u % 3;
    lex.subwords.push_back(std::move(sw));
  }

  // Words: 1..3 pieces, first plain, remainder continuation-marked. Texts must
  // be distinct so that tokenize is a bijection back onto word ids.
  Rng rng(derive_seed(seed, "lexicon-words"));
  std::set<std::string> seen;
  int guard = 0;
  while (static_cast<int>(lex.words.size()) < num_words) {
    if (++guard > 100000)
      throw ConfigError("lexicon: cannot draw enough distinct words; enlarge num_subwords");
    const int len = n_cont == 0 ? 1 : 1 + static_cast<int>(rng.below(3));
    std::vector<int> ids;
    ids.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(n_plain))));
    for (int j = 1; j < len; ++j)
      ids.push_back(n_plain + static_cast<int>(rng.below(static_cast<std::uint64_t>(n_cont))));
    std::string text;
    for (int id : ids) {
      const std::string& p = lex.subwords[static_cast<std::size_t>(id)].piece;
      text += lex.subwords[static_cast<std::size_t>(id)].continuation ? p.substr(2) : p;
    }
    if (!seen.insert(text).second) continue;
    lex.words.push_back(std::move(ids));
    lex.word_texts.push_back(std::move(text));
  }
  return lex;
}

void save_lexicon(const std::string& path, const Lexicon& lex) {
  json j;
  j["seed"] = lex.seed;
  j["subwords"] = json::array();
  for (const auto& s : lex.subwords)
    j["subwords"].push_back({{"piece", s.piece},
                             {"continuation", s.continuation},
                             {"signature_hz", s.signature_hz},
                             {"envelope_id", s.envelope_id}});
  j["words"] = lex.words;
  j["word_texts"] = lex.word_texts;
  std::ofstream os(path);
  if (!os) throw IoError("cannot write lexicon: " + path);
  os << j.dump(2) << "\n";
}

Lexicon load_lexicon(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open lexicon: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw IoError("malformed lexicon " + path + ": " + e.what());
  }
  Lexicon lex;
  lex.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& s : j.at("subwords")) {
    Subword sw;
    sw.piece = s.at("piece").get<std::string>();
    sw.continuation = s.at("continuation").get<bool>();
    sw.signature_hz = s.at("signature_hz").get<double>();
    sw.envelope_id = s.at("envelope_id").get<int>();
    lex.subwords.push_back(std::move(sw));
  }
  lex.words = j.at("words").get<std::vector<std::vector<int>>>();
  lex.word_texts = j.at("word_texts").get<std::vector<std::string>>();
  return lex;
}

std::vector<int> tokenize(const std::string& word, const Lexicon& lex) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos < word.size()) {
    int best = -1;
    std::size_t best_len = 0;
    for (int u = 0; u < lex.num_subwords(); ++u) {
      const Subword& sw = lex.subwords[static_cast<std::size_t>(u)];
      if (sw.continuation != (pos > 0)) continue;
      const std::string piece = sw.continuation ? sw.piece.substr(2) : sw.piece;
      if (piece.size() > best_len && word.compare(pos, piece.size(), piece) == 0) {
        best = u;
        best_len = piece.size();
      }
    }
    if (best < 0)
      throw std::invalid_argument("tokenize: cannot cover word '" + word + "' at offset " +
                                  std::to_string(pos));
    out.push_back(best);
    pos += best_len;
  }
  if (out.empty()) throw std::invalid_argument("tokenize: empty word");
  return out;
}

SubwordSequence tokenize_transcript(const TimedTranscript& transcript, const Lexicon& lex) {
  SubwordSequence seq;
  for (std::size_t l = 0; l < transcript.words.size(); ++l) {
    const auto ids = tokenize(transcript.words[l].text, lex);
    seq.per_word_counts.push_back(static_cast<int>(ids.size()));
    for (int id : ids) {
      seq.tokens.push_back(id);
      seq.word_index.push_back(static_cast<int>(l));
    }
  }
  return seq;
}

UtteranceRender synth_utterance(const std::vector<int>& word_ids, const Lexicon& lex,
                                double sample_rate, std::uint64_t seed) {
  if (word_ids.empty()) throw std::invalid_argument("synth_utterance: empty word list");
  for (int w : word_ids)
    if (w < 0 || w >= static_cast<int>(lex.words.size()))
      throw std::invalid_argument("synth_utterance: word id out of range");

  Rng rng(seed);
  UtteranceRender out;
  out.wave.sample_rate = sample_rate;
  auto& samples = out.wave.samples;
  const auto silence = [&](double lo, double hi) {
    const std::size_t n = static_cast<std::size_t>(std::llround(rng.uniform(lo, hi) * sample_rate));
    samples.insert(samples.end(), n, 0.0);
  };

  silence(kGapMinSec, kGapMaxSec);  // leading silence
  const std::size_t ramp_n = static_cast<std::size_t>(std::llround(kRampSeconds * sample_rate));
  for (std::size_t l = 0; l < word_ids.size(); ++l) {
    if (l > 0) silence(kGapMinSec, kGapMaxSec);
    const std::size_t word_start = samples.size();
    for (int sub_id : lex.words[static_cast<std::size_t>(word_ids[l])]) {
      const Subword& sw = lex.subwords[static_cast<std::size_t>(sub_id)];
      const double dur = rng.uniform(kSubwordMinSec, kSubwordMaxSec);
      const std::size_t n = static_cast<std::size_t>(std::llround(dur * sample_rate));
      const std::size_t sub_start = samples.size();
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        double a = kToneAmplitude *
                   envelope_gain(sw.envelope_id, static_cast<double>(i) / static_cast<double>(n));
        if (i < ramp_n)
          a *= 0.5 * (1.0 - std::cos(M_PI * static_cast<double>(i) / static_cast<double>(ramp_n)));
        if (n - 1 - i < ramp_n)
          a *= 0.5 *
               (1.0 - std::cos(M_PI * static_cast<double>(n - 1 - i) / static_cast<double>(ramp_n)));
        samples.push_back(a * std::sin(2.0 * M_PI * sw.signature_hz * t));
      }
      out.token_ids.push_back(sub_id);
      out.spans.push_back({sub_id, sub_start, samples.size()});
    }
    TimedWord tw;
    tw.text = lex.word_texts[static_cast<std::size_t>(word_ids[l])];
    tw.start = static_cast<double>(word_start) / sample_rate;
    tw.end = static_cast<double>(samples.size()) / sample_rate;
    out.transcript.words.push_back(std::move(tw));
  }
  silence(kGapMinSec, kGapMaxSec);  // trailing silence
  return out;
}

void validate(const DatasetConfig& cfg) {
  if (!(cfg.sample_rate > 0)) throw ConfigError("dataset: sample_rate must be > 0");
  if (cfg.num_sources < 2 || cfg.num_sources > 3)
    throw ConfigError("dataset: num_sources must be 2 or 3");
  if (cfg.train_count < 1 || cfg.validation_count < 1 || cfg.test_count < 1)
    throw ConfigError("dataset: split counts must be >= 1");
  if (cfg.num_subwords < 2 || cfg.num_words < 1)
    throw ConfigError("dataset: lexicon sizes must be positive");
  if (cfg.words_per_utterance_min < 1 ||
      cfg.words_per_utterance_max < cfg.words_per_utterance_min)
    throw ConfigError("dataset: bad words_per_utterance range");
  if (cfg.noisy && cfg.snr_db_max < cfg.snr_db_min)
    throw ConfigError("dataset: snr_db_max < snr_db_min");
}

namespace {

// One pool of distinct word-id sequences shared by all splits; slicing the
// pool keeps the splits disjoint under the seed.
std::vector<std::vector<int>> sequence_pool(const DatasetConfig& cfg) {
  const std::size_t total = static_cast<std::size_t>(cfg.train_count + cfg.validation_count +
                                                     cfg.test_count) *
                            static_cast<std::size_t>(cfg.num_sources);
  Rng rng(derive_seed(cfg.seed, "sequences"));
  std::set<std::vector<int>> seen;
  std::vector<std::vector<int>> pool;
  pool.reserve(total);
  std::size_t guard = 0;
  while (pool.size() < total) {
    if (++guard > 200 * total + 100000)
      throw ConfigError("dataset: cannot draw enough distinct word sequences; "
                        "enlarge num_words or shrink the split counts");
    const int len = cfg.words_per_utterance_min +
                    static_cast<int>(rng.below(static_cast<std::uint64_t>(
                        cfg.words_per_utterance_max - cfg.words_per_utterance_min + 1)));
    std::vector<int> seq(static_cast<std::size_t>(len));
    for (auto& v : seq) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.num_words)));
    if (seen.insert(seq).second) pool.push_back(std::move(seq));
  }
  return pool;
}

std::size_t split_offset(const DatasetConfig& cfg, const std::string& split) {
  const std::size_t k = static_cast<std::size_t>(cfg.num_sources);
  if (split == "train") return 0;
  if (split == "validation") return static_cast<std::size_t>(cfg.train_count) * k;
  if (split == "test")
    return static_cast<std::size_t>(cfg.train_count + cfg.validation_count) * k;
  throw ConfigError("dataset: unknown split '" + split + "'");
}

std::size_t split_count(const DatasetConfig& cfg, const std::string& split) {
  if (split == "train") return static_cast<std::size_t>(cfg.train_count);
  if (split == "validation") return static_cast<std::size_t>(cfg.validation_count);
  return static_cast<std::size_t>(cfg.test_count);
}

// Truncates all renders to the shortest one and drops transcript words that
// no longer fit entirely inside the truncated span.
bool truncate_to_shortest(std::vector<UtteranceRender>& renders, double sample_rate) {
  std::size_t min_len = renders[0].wave.samples.size();
  for (const auto& r : renders) min_len = std::min(min_len, r.wave.samples.size());
  for (auto& r : renders) {
    r.wave.samples.resize(min_len);
    TimedTranscript kept;
    for (const auto& w : r.transcript.words) {
      if (static_cast<std::size_t>(std::llround(w.end * sample_rate)) <= min_len)
        kept.words.push_back(w);
    }
    if (kept.words.empty()) return false;
    r.transcript = std::move(kept);
  }
  return true;
}

BuiltInstance build_instance(const DatasetConfig& cfg, const Lexicon& lex,
                             const std::vector<std::vector<int>>& sequences,
                             const std::string& split, std::size_t index) {
  const std::size_t k = static_cast<std::size_t>(cfg.num_sources);
  for (int attempt = 0; attempt < 32; ++attempt) {
    const std::string tag = split + ":" + std::to_string(index) + ":a" + std::to_string(attempt);
    std::vector<UtteranceRender> renders;
    renders.reserve(k);
    for (std::size_t s = 0; s < k; ++s)
      renders.push_back(synth_utterance(sequences[s], lex, cfg.sample_rate,
                                        derive_seed(cfg.seed, tag + ":s" + std::to_string(s))));
    if (!truncate_to_shortest(renders, cfg.sample_rate)) continue;

    std::vector<Waveform> sources;
    std::vector<TimedTranscript> transcripts;
    for (auto& r : renders) {
      sources.push_back(std::move(r.wave));
      transcripts.push_back(std::move(r.transcript));
    }

    std::optional<Waveform> noise;
    std::optional<double> snr;
    if (cfg.noisy) {
      Rng nrng(derive_seed(cfg.seed, tag + ":noise"));
      Waveform n;
      n.sample_rate = cfg.sample_rate;
      n.samples.resize(sources[0].samples.size());
      for (auto& v : n.samples) v = nrng.uniform(-0.1, 0.1);
      snr = nrng.uniform(cfg.snr_db_min, cfg.snr_db_max);
      noise = std::move(n);
    }

    BuiltInstance built;
    built.inst = mix(sources, std::move(noise), snr);
    built.inst.transcripts = std::move(transcripts);
    built.snr_db = snr;

    // Joint rescale keeps the additive identity and the SNR while preventing
    // 16-bit clipping on disk.
    double peak = 0.0;
    for (double v : built.inst.mixture.samples) peak = std::max(peak, std::abs(v));
    for (const auto& s : built.inst.sources)
      for (double v : s.samples) peak = std::max(peak, std::abs(v));
    if (peak > kPeakLimit) {
      const double g = kPeakLimit / peak;
      for (auto& v : built.inst.mixture.samples) v *= g;
      for (auto& s : built.inst.sources)
        for (auto& v : s.samples) v *= g;
      if (built.inst.noise)
        for (auto& v : built.inst.noise->samples) v *= g;
    }
    return built;
  }
  throw ConfigError("dataset: could not build instance " + split + "/" + std::to_string(index) +
                    " (sources truncate to zero words)");
}

}  // namespace

std::vector<BuiltInstance> build_split(const DatasetConfig& cfg, const Lexicon& lex,
                                       const std::string& split) {
  validate(cfg);
  const auto pool = sequence_pool(cfg);
  const std::size_t offset = split_offset(cfg, split);
  const std::size_t count = split_count(cfg, split);
  const std::size_t k = static_cast<std::size_t>(cfg.num_sources);

  std::vector<BuiltInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<std::vector<int>> seqs(pool.begin() + static_cast<std::ptrdiff_t>(offset + i * k),
                                       pool.begin() +
                                           static_cast<std::ptrdiff_t>(offset + (i + 1) * k));
    out.push_back(build_instance(cfg, lex, seqs, split, i));
  }
  return out;
}

void write_transcript(const std::string& path, const TimedTranscript& t) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write transcript: " + path);
  for (const auto& w : t.words)
    os << w.text << "\t" << format_time(w.start) << "\t" << format_time(w.end) << "\n";
}

TimedTranscript read_transcript(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open transcript: " + path);
  TimedTranscript t;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos)
      throw IoError("malformed transcript line in " + path + ": " + line);
    TimedWord w;
    w.text = line.substr(0, tab1);
    w.start = std::stod(line.substr(tab1 + 1, tab2 - tab1 - 1));
    w.end = std::stod(line.substr(tab2 + 1));
    t.words.push_back(std::move(w));
  }
  return t;
}

namespace {

std::string instance_id(const std::string& split, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s-%05zu", split.c_str(), index);
  return buf;
}

}  // namespace

void gen_dataset(const DatasetConfig& cfg, const std::string& out_dir,
                 const std::string& config_hash) {
  validate(cfg);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + out_dir);

  const Lexicon lex =
      make_lexicon(cfg.num_subwords, cfg.num_words, cfg.sample_rate, derive_seed(cfg.seed, "lexicon"));
  save_lexicon(out_dir + "/lexicon.json", lex);

  json meta;
  meta["format_version"] = 1;
  meta["config_hash"] = config_hash;
  meta["seed"] = cfg.seed;
  meta["sample_rate"] = cfg.sample_rate;
  meta["num_sources"] = cfg.num_sources;
  meta["noisy"] = cfg.noisy;
  meta["splits"] = {{"train", cfg.train_count},
                    {"validation", cfg.validation_count},
                    {"test", cfg.test_count}};
  {
    std::ofstream os(out_dir + "/dataset_meta.json");
    if (!os) throw IoError("cannot write dataset_meta.json under " + out_dir);
    os << meta.dump(2) << "\n";
  }

  for (const std::string split : {"train", "validation", "test"}) {
    const fs::path root = fs::path(out_dir) / split;
    fs::create_directories(root / "mix");
    for (int s = 0; s < cfg.num_sources; ++s)
      fs::create_directories(root / ("s" + std::to_string(s + 1)));
    fs::create_directories(root / "tr");

    std::ofstream manifest(root / "manifest.jsonl");
    if (!manifest) throw IoError("cannot write manifest under " + (root).string());

    const auto instances = build_split(cfg, lex, split);
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const auto& b = instances[i];
      const std::string id = instance_id(split, i);
      ManifestEntry entry;
      entry.id = id;
      entry.mixture_path = split + "/mix/" + id + ".wav";
      write_wav(out_dir + "/" + entry.mixture_path, b.inst.mixture);
      for (int s = 0; s < cfg.num_sources; ++s) {
        const std::string sp = split + "/s" + std::to_string(s + 1) + "/" + id + ".wav";
        const std::string tp = split + "/tr/" + id + "_s" + std::to_string(s + 1) + ".txt";
        write_wav(out_dir + "/" + sp, b.inst.sources[static_cast<std::size_t>(s)]);
        write_transcript(out_dir + "/" + tp, b.inst.transcripts[static_cast<std::size_t>(s)]);
        entry.source_paths.push_back(sp);
        entry.transcript_paths.push_back(tp);
      }
      json line;
      line["id"] = entry.id;
      line["mixture_path"] = entry.mixture_path;
      line["source_paths"] = entry.source_paths;
      line["transcript_paths"] = entry.transcript_paths;
      if (b.snr_db)
        line["snr_db"] = *b.snr_db;
      else
        line["snr_db"] = nullptr;
      manifest << line.dump() << "\n";
    }
  }
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest: " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError("malformed manifest line in " + path + ": " + e.what());
    }
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    e.mixture_path = j.at("mixture_path").get<std::string>();
    e.source_paths = j.at("source_paths").get<std::vector<std::string>>();
    e.transcript_paths = j.at("transcript_paths").get<std::vector<std::string>>();
    if (!j.at("snr_db").is_null()) e.snr_db = j.at("snr_db").get<double>();
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<LoadedInstance> load_split(const std::string& dataset_root, const std::string& split) {
  const auto entries = read_manifest(dataset_root + "/" + split + "/manifest.jsonl");
  std::vector<LoadedInstance> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    LoadedInstance li;
    li.id = e.id;
    li.mixture = read_wav(dataset_root + "/" + e.mixture_path);
    for (const auto& sp : e.source_paths) li.sources.push_back(read_wav(dataset_root + "/" + sp));
    for (const auto& tp : e.transcript_paths)
      li.transcripts.push_back(read_transcript(dataset_root + "/" + tp));
    li.snr_db = e.snr_db;
    out.push_back(std::move(li));
  }
  return out;
}

}  // namespace ttr
