// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ttr/corpus.hpp"
#include "ttr/encoders.hpp"
#include "ttr/separator.hpp"
#include "ttr/summarizer.hpp"
#include "ttr/training.hpp"

namespace ttr {

/// Aggregated run configuration. Every field must appear in the JSON file and
/// unknown keys are rejected; the CLI flags only select files, stages, and
/// lambda values. Sub-seeds for the dataset and encoders derive from the one
/// master seed.
struct RunConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  EncoderConfig encoder;
  SummarizerHyperparams summarizer;
  SeparatorHyperparams separator;  // num_sources mirrors dataset.num_sources
  OptimizerConfig summarizer_stage;
  OptimizerConfig separator_stage;
  OptimizerConfig finetune_stage;
  std::vector<double> lambdas;
  bool freeze_summarizer = true;
  int threads = 1;
  std::string config_hash;  // FNV-1a of the canonical JSON, hex
};

RunConfig load_run_config(const std::string& path);

/// Parses from a JSON string (used by tests).
RunConfig parse_run_config(const std::string& text);

}  // namespace ttr
