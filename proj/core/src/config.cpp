// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ttr/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ttr/errors.hpp"
#include "ttr/rng.hpp"

using nlohmann::json;

namespace ttr {
namespace {

/// Pulls required keys out of one JSON object and rejects leftovers.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  T get(const std::string& key) {
    mark(key);
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  std::optional<int> get_nullable_int(const std::string& key) {
    mark(key);
    const auto& v = j_.at(key);
    if (v.is_null()) return std::nullopt;
    if (!v.is_number_integer()) throw ConfigError(path_ + "." + key + ": expected int or null");
    return v.get<int>();
  }

  const json& child(const std::string& key) {
    mark(key);
    return j_.at(key);
  }

  void finish() {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(path_ + ": unknown key '" + it.key() + "'");
  }

 private:
  void mark(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError(path_ + ": missing required key '" + key + "'");
    seen_.insert(key);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

OptimizerConfig parse_stage(const json& j, const std::string& path) {
  StrictObject o(j, path);
  OptimizerConfig cfg;
  cfg.learning_rate = o.get<double>("learning_rate");
  cfg.beta1 = o.get<double>("beta1");
  cfg.beta2 = o.get<double>("beta2");
  cfg.epsilon = o.get<double>("epsilon");
  cfg.max_epochs = o.get<int>("max_epochs");
  cfg.early_stop_patience = o.get<int>("early_stop_patience");
  cfg.scheduler_patience = o.get_nullable_int("scheduler_patience");
  cfg.grad_accumulation = o.get<int>("grad_accumulation");
  o.finish();
  if (!(cfg.learning_rate > 0)) throw ConfigError(path + ": learning_rate must be > 0");
  if (cfg.max_epochs < 1) throw ConfigError(path + ": max_epochs must be >= 1");
  if (cfg.early_stop_patience < 1) throw ConfigError(path + ": early_stop_patience must be >= 1");
  if (cfg.grad_accumulation < 1) throw ConfigError(path + ": grad_accumulation must be >= 1");
  if (cfg.scheduler_patience && *cfg.scheduler_patience < 1)
    throw ConfigError(path + ": scheduler_patience must be >= 1 or null");
  return cfg;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }

  RunConfig cfg;
  StrictObject root(j, "config");
  cfg.seed = root.get<std::uint64_t>("seed");

  {
    StrictObject d(root.child("dataset"), "config.dataset");
    cfg.dataset.sample_rate = d.get<double>("sample_rate");
    cfg.dataset.num_sources = d.get<int>("num_sources");
    cfg.dataset.noisy = d.get<bool>("noisy");
    cfg.dataset.snr_db_min = d.get<double>("snr_db_min");
    cfg.dataset.snr_db_max = d.get<double>("snr_db_max");
    cfg.dataset.train_count = d.get<int>("train_count");
    cfg.dataset.validation_count = d.get<int>("validation_count");
    cfg.dataset.test_count = d.get<int>("test_count");
    cfg.dataset.num_subwords = d.get<int>("num_subwords");
    cfg.dataset.num_words = d.get<int>("num_words");
    cfg.dataset.words_per_utterance_min = d.get<int>("words_per_utterance_min");
    cfg.dataset.words_per_utterance_max = d.get<int>("words_per_utterance_max");
    d.finish();
    cfg.dataset.seed = derive_seed(cfg.seed, "dataset");
    validate(cfg.dataset);
  }
  {
    StrictObject e(root.child("encoder"), "config.encoder");
    cfg.encoder.d_audio = e.get<int>("d_audio");
    cfg.encoder.d_text = e.get<int>("d_text");
    cfg.encoder.frame_rate = e.get<double>("frame_rate");
    cfg.encoder.frame_length = e.get<double>("frame_length");
    e.finish();
    cfg.encoder.seed = derive_seed(cfg.seed, "encoder");
    validate(cfg.encoder);
  }
  {
    StrictObject s(root.child("summarizer"), "config.summarizer");
    cfg.summarizer.d_model = s.get<int>("d_model");
    cfg.summarizer.n_heads = s.get<int>("n_heads");
    cfg.summarizer.d_ff = s.get<int>("d_ff");
    cfg.summarizer.layers_sum = s.get<int>("layers_sum");
    cfg.summarizer.layers_agg = s.get<int>("layers_agg");
    s.finish();
    validate(cfg.summarizer, cfg.encoder.d_text);
  }
  {
    StrictObject s(root.child("separator"), "config.separator");
    cfg.separator.num_filters = s.get<int>("num_filters");
    cfg.separator.kernel = s.get<int>("kernel");
    cfg.separator.stride = s.get<int>("stride");
    cfg.separator.blocks = s.get<int>("blocks");
    cfg.separator.channels = s.get<int>("channels");
    s.finish();
    cfg.separator.num_sources = cfg.dataset.num_sources;
    validate(cfg.separator);
  }
  {
    StrictObject t(root.child("training"), "config.training");
    cfg.summarizer_stage = parse_stage(t.child("summarizer"), "config.training.summarizer");
    cfg.separator_stage = parse_stage(t.child("separator"), "config.training.separator");
    cfg.finetune_stage = parse_stage(t.child("finetune"), "config.training.finetune");
    t.finish();
  }
  cfg.lambdas = root.get<std::vector<double>>("lambdas");
  for (double l : cfg.lambdas)
    if (l < 0.0) throw ConfigError("config.lambdas: values must be >= 0");
  cfg.freeze_summarizer = root.get<bool>("freeze_summarizer");
  cfg.threads = root.get<int>("threads");
  if (cfg.threads < 1) throw ConfigError("config.threads: must be >= 1");
  root.finish();

  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(j.dump())));
  cfg.config_hash = buf;
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace ttr
