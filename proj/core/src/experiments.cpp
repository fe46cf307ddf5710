// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ttr/experiments.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "ttr/errors.hpp"

using nlohmann::json;

namespace ttr {

SummarizeFn make_summarize_fn(ParamStore& summarizer_store, const SummarizerHyperparams& hp,
                              const Encoders& encoders) {
  return [&summarizer_store, hp, &encoders](const Waveform& wave, const AlignmentMap& align,
                                            const ad::Matrix&, EmbedKind) {
    const EmbeddingMatrix s = encoders.audio_encode(wave);
    return summarizer_eval(summarizer_store, hp, s.values, align);
  };
}

DiscriminationReport discrimination_eval(const std::vector<LoadedInstance>& instances,
                                         const Lexicon& lexicon, const Encoders& encoders,
                                         const SummarizeFn& summarize) {
  if (instances.empty()) throw std::invalid_argument("discrimination_eval: empty set");

  DiscriminationReport report;
  report.pairs.reserve(instances.size());
  for (const auto& inst : instances) {
    if (inst.sources.empty() || inst.transcripts.empty())
      throw std::invalid_argument("discrimination_eval: instance lacks sources/transcripts");
    // Both paths compare against source 1's text and timings.
    const TimedTranscript& transcript = inst.transcripts[0];
    const SubwordSequence tokens = tokenize_transcript(transcript, lexicon);
    const ad::Matrix w = encoders.text_encode(tokens).values;
    const int frames = encoders.audio_frame_count(inst.mixture.samples.size());
    const AlignmentMap map =
        align(transcript, tokens.per_word_counts, frames, encoders.config().frame_rate);

    DiscriminationPair pair;
    pair.id = inst.id;
    pair.d_clean = ttr_loss(summarize(inst.sources[0], map, w, EmbedKind::kCleanSource), w);
    pair.d_mix = ttr_loss(summarize(inst.mixture, map, w, EmbedKind::kMixture), w);
    report.pairs.push_back(std::move(pair));
  }

  std::stable_sort(report.pairs.begin(), report.pairs.end(),
                   [](const DiscriminationPair& a, const DiscriminationPair& b) {
                     return a.d_clean < b.d_clean;
                   });
  std::size_t ge = 0;
  double diff_sum = 0.0;
  for (const auto& p : report.pairs) {
    if (p.d_mix >= p.d_clean) ++ge;
    diff_sum += p.d_mix - p.d_clean;
  }
  report.fraction_ge = static_cast<double>(ge) / static_cast<double>(report.pairs.size());
  report.mean_diff = diff_sum / static_cast<double>(report.pairs.size());
  return report;
}

void write_discrimination_report(const std::string& out_dir, const DiscriminationReport& report,
                                 const std::string& config_hash) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream os(out_dir + "/curve.tsv");
    if (!os) throw IoError("cannot write curve file under " + out_dir);
    os << "rank\td_clean\td_mix\n";
    char buf[128];
    for (std::size_t i = 0; i < report.pairs.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%zu\t%.9g\t%.9g\n", i, report.pairs[i].d_clean,
                    report.pairs[i].d_mix);
      os << buf;
    }
  }
  {
    std::ofstream os(out_dir + "/per_instance.jsonl");
    if (!os) throw IoError("cannot write per-instance file under " + out_dir);
    for (const auto& p : report.pairs) {
      os << json{{"id", p.id}, {"metric", "ttr_clean"}, {"value", p.d_clean}}.dump() << "\n";
      os << json{{"id", p.id}, {"metric", "ttr_mix"}, {"value", p.d_mix}}.dump() << "\n";
    }
  }
  {
    json j;
    j["config_hash"] = config_hash;
    j["count"] = report.pairs.size();
    j["fraction_ge"] = report.fraction_ge;
    j["mean_diff"] = report.mean_diff;
    std::ofstream os(out_dir + "/summary.json");
    if (!os) throw IoError("cannot write summary under " + out_dir);
    os << j.dump(2) << "\n";
  }
}

DiscriminationReport read_discrimination_per_instance(const std::string& per_instance_path) {
  std::ifstream is(per_instance_path);
  if (!is) throw IoError("cannot open " + per_instance_path);
  std::map<std::string, DiscriminationPair> by_id;
  std::vector<std::string> order;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const std::string id = j.at("id").get<std::string>();
    if (!by_id.count(id)) order.push_back(id);
    auto& p = by_id[id];
    p.id = id;
    const std::string metric = j.at("metric").get<std::string>();
    if (metric == "ttr_clean")
      p.d_clean = j.at("value").get<double>();
    else if (metric == "ttr_mix")
      p.d_mix = j.at("value").get<double>();
    else
      throw IoError("unknown metric '" + metric + "' in " + per_instance_path);
  }
  DiscriminationReport report;
  for (const auto& id : order) report.pairs.push_back(by_id.at(id));
  std::size_t ge = 0;
  double diff = 0.0;
  for (const auto& p : report.pairs) {
    if (p.d_mix >= p.d_clean) ++ge;
    diff += p.d_mix - p.d_clean;
  }
  report.fraction_ge = static_cast<double>(ge) / static_cast<double>(report.pairs.size());
  report.mean_diff = diff / static_cast<double>(report.pairs.size());
  return report;
}

ScoreboardRow evaluate_separation(const std::vector<LoadedInstance>& instances,
                                  const SeparateFn& separate, const std::string& label,
                                  std::optional<double> lambda, int threads) {
  if (instances.empty()) throw std::invalid_argument("evaluate_separation: empty test set");

  ScoreboardRow row;
  row.label = label;
  row.lambda = lambda;
  row.per_instance.resize(instances.size());

  const auto score_one = [&](std::size_t i) {
    const auto& inst = instances[i];
    const auto estimates = separate(inst.mixture);
    const PitResult pit = pit_loss(inst.sources, estimates);
    double sdri = 0.0, si_sdri = 0.0;
    for (std::size_t k = 0; k < inst.sources.size(); ++k) {
      const Waveform& est = estimates[static_cast<std::size_t>(pit.permutation[k])];
      si_sdri += pit.per_pair_si_sdr[k] - si_sdr(inst.sources[k], inst.mixture);
      sdri += sdr(inst.sources[k], est) - sdr(inst.sources[k], inst.mixture);
    }
    const double inv_k = 1.0 / static_cast<double>(inst.sources.size());
    row.per_instance[i] = {inst.id, sdri * inv_k, si_sdri * inv_k};
  };

  if (threads <= 1) {
    for (std::size_t i = 0; i < instances.size(); ++i) score_one(i);
  } else {
    // Per-instance scoring is pure; results land in index order regardless of
    // completion order.
    std::vector<std::future<void>> futures;
    std::size_t next = 0;
    while (next < instances.size()) {
      futures.clear();
      const std::size_t batch =
          std::min<std::size_t>(static_cast<std::size_t>(threads), instances.size() - next);
      for (std::size_t b = 0; b < batch; ++b)
        futures.push_back(std::async(std::launch::async, score_one, next + b));
      for (auto& f : futures) f.get();
      next += batch;
    }
  }

  double sdri_sum = 0.0, si_sum = 0.0;
  for (const auto& s : row.per_instance) {
    sdri_sum += s.sdri;
    si_sum += s.si_sdri;
  }
  row.mean_sdri = sdri_sum / static_cast<double>(row.per_instance.size());
  row.mean_si_sdri = si_sum / static_cast<double>(row.per_instance.size());
  return row;
}

void write_scoreboard(const std::string& out_dir, const std::vector<ScoreboardRow>& rows,
                      const std::string& config_hash) {
  std::filesystem::create_directories(out_dir);
  json j;
  j["config_hash"] = config_hash;
  // SDRi here is the plain scale-dependent SDR delta; no 512-tap projection.
  j["metric_note"] =
      "SDRi is the scale-dependent SDR improvement (no projection filter); "
      "SI-SDRi follows the scale-invariant definition.";
  j["rows"] = json::array();
  for (const auto& row : rows) {
    json r;
    r["label"] = row.label;
    if (row.lambda)
      r["lambda"] = *row.lambda;
    else
      r["lambda"] = nullptr;
    r["mean_sdri"] = row.mean_sdri;
    r["mean_si_sdri"] = row.mean_si_sdri;
    r["count"] = row.per_instance.size();
    j["rows"].push_back(std::move(r));

    std::ofstream os(out_dir + "/per_instance_" + row.label + ".jsonl");
    if (!os) throw IoError("cannot write per-instance scores under " + out_dir);
    for (const auto& s : row.per_instance) {
      os << json{{"id", s.id}, {"metric", "sdri"}, {"value", s.sdri}}.dump() << "\n";
      os << json{{"id", s.id}, {"metric", "si_sdri"}, {"value", s.si_sdri}}.dump() << "\n";
    }
  }
  std::ofstream os(out_dir + "/scoreboard.json");
  if (!os) throw IoError("cannot write scoreboard under " + out_dir);
  os << j.dump(2) << "\n";
}

}  // namespace ttr
