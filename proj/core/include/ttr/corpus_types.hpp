// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

namespace ttr {

struct TimedWord {
  std::string text;
  double start = 0.0;  // seconds
  double end = 0.0;    // seconds
};

/// Ordered, non-overlapping words with absolute start/end times.
struct TimedTranscript {
  std::vector<TimedWord> words;
};

/// Tokenized transcript: subword ids plus the word each token came from.
struct SubwordSequence {
  std::vector<int> tokens;          // M subword ids
  std::vector<int> word_index;      // parent word per token, non-decreasing
  std::vector<int> per_word_counts; // m_l for l = 0..L-1
};

}  // namespace ttr
