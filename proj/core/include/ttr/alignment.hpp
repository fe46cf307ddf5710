// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

#include "ttr/corpus_types.hpp"

namespace ttr {

/// One subword interval produced by the even subdivision of its parent word.
/// Times are absolute seconds; gaps between words survive into these intervals.
struct SubwordInterval {
  double start = 0.0;
  double length = 0.0;
  int word_index = 0;
  double end() const { return start + length; }
  double mid() const { return start + 0.5 * length; }
};

/// Frame ranges per subword. frame_end is exclusive. Extra frames picked up by
/// the nearest-frame fallback are stored as their own [f, f+1) range.
struct AlignmentSegment {
  int subword_index = 0;
  int frame_start = 0;
  int frame_end = 0;
  int size() const { return frame_end - frame_start; }
};

struct AlignmentMap {
  std::vector<AlignmentSegment> segments;  // exactly M, ordered by subword
  double frame_rate = 0.0;
  int total_frames = 0;
};

/// Evenly subdivides each word interval into per_word_counts[l] subword
/// intervals of equal length.
std::vector<SubwordInterval> subword_lengths(const TimedTranscript& transcript,
                                             const std::vector<int>& per_word_counts);

/// Boundary vector: beta[0] is the first subword's absolute start, beta[m] the
/// end of subword m. Strictly increasing; inter-word gaps shift later entries.
std::vector<double> subword_boundaries(const std::vector<SubwordInterval>& intervals);

/// Assigns frame t (center time (t+0.5)/R) to subword m iff the center lies in
/// [beta[m-1], beta[m]) and inside the parent word's interval. Frames in
/// silence stay unassigned. A subword that captures no frame receives its
/// nearest frame by center distance (ties toward the earlier frame), taking it
/// from a neighboring segment only if that segment keeps at least one frame.
AlignmentMap assign_frames(const std::vector<double>& beta,
                           const std::vector<SubwordInterval>& intervals, int total_frames,
                           double frame_rate);

/// SLA = subword_lengths + subword_boundaries + assign_frames.
AlignmentMap align(const TimedTranscript& transcript, const std::vector<int>& per_word_counts,
                   int total_frames, double frame_rate);

/// Text serialization for the CLI inspect command: one line per segment,
/// "m token_id frame_start frame_end".
std::string to_text(const AlignmentMap& map, const SubwordSequence& tokens);

}  // namespace ttr
