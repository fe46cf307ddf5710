// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ttr/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace ttr {
namespace {

double frame_center(int t, double rate) { return (static_cast<double>(t) + 0.5) / rate; }

// Smallest t with center >= x (closed left end of the assignment rule).
int first_frame_at_or_after(double x, double rate) {
  return static_cast<int>(std::ceil(x * rate - 0.5));
}

}  // namespace

std::vector<SubwordInterval> subword_lengths(const TimedTranscript& transcript,
                                             const std::vector<int>& per_word_counts) {
  if (transcript.words.size() != per_word_counts.size())
    throw std::invalid_argument("subword_lengths: count/word mismatch");
  std::vector<SubwordInterval> out;
  double prev_end = -std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < transcript.words.size(); ++l) {
    const TimedWord& w = transcript.words[l];
    if (!(w.start >= 0.0) || !(w.end > w.start))
      throw std::invalid_argument("subword_lengths: invalid word interval for '" + w.text + "'");
    if (w.start < prev_end)
      throw std::invalid_argument("subword_lengths: overlapping words at '" + w.text + "'");
    prev_end = w.end;
    const int m = per_word_counts[l];
    if (m < 1) throw std::invalid_argument("subword_lengths: per-word count must be >= 1");
    const double piece = (w.end - w.start) / static_cast<double>(m);
    for (int j = 0; j < m; ++j)
      out.push_back({w.start + piece * static_cast<double>(j), piece, static_cast<int>(l)});
  }
  return out;
}

std::vector<double> subword_boundaries(const std::vector<SubwordInterval>& intervals) {
  if (intervals.empty()) throw std::invalid_argument("subword_boundaries: empty input");
  std::vector<double> beta;
  beta.reserve(intervals.size() + 1);
  beta.push_back(intervals[0].start);
  double prev = intervals[0].start;
  for (const auto& iv : intervals) {
    if (iv.start + 1e-12 < prev)
      throw std::invalid_argument("subword_boundaries: non-monotonic input");
    if (!(iv.end() > beta.back()))
      throw std::invalid_argument("subword_boundaries: non-increasing boundary");
    beta.push_back(iv.end());
    prev = iv.end();
  }
  return beta;
}

AlignmentMap assign_frames(const std::vector<double>& beta,
                           const std::vector<SubwordInterval>& intervals, int total_frames,
                           double frame_rate) {
  if (beta.size() < 2) throw std::invalid_argument("assign_frames: empty boundary vector");
  if (beta.size() != intervals.size() + 1)
    throw std::invalid_argument("assign_frames: boundary/interval size mismatch");
  if (!(frame_rate > 0)) throw std::invalid_argument("assign_frames: frame_rate must be > 0");
  if (total_frames < 1) throw std::invalid_argument("assign_frames: need at least one frame");

  const int m_total = static_cast<int>(intervals.size());

  // Natural pass: frame centers in [interval.start, interval.end). The word
  // interval intersection is implicit; intervals already live in absolute time.
  std::vector<int> lo(static_cast<std::size_t>(m_total)), hi(static_cast<std::size_t>(m_total));
  for (int m = 0; m < m_total; ++m) {
    const auto& iv = intervals[static_cast<std::size_t>(m)];
    lo[static_cast<std::size_t>(m)] =
        std::clamp(first_frame_at_or_after(iv.start, frame_rate), 0, total_frames);
    hi[static_cast<std::size_t>(m)] =
        std::clamp(first_frame_at_or_after(iv.end(), frame_rate), 0, total_frames);
    if (hi[static_cast<std::size_t>(m)] < lo[static_cast<std::size_t>(m)])
      hi[static_cast<std::size_t>(m)] = lo[static_cast<std::size_t>(m)];
  }

  // Fallback pass: every empty subword takes its nearest frame by center
  // distance. Candidates are limited to the gap between the neighboring
  // segments plus each neighbor's edge frame (only if that neighbor keeps at
  // least one frame), which preserves disjointness and ordering.
  for (int m = 0; m < m_total; ++m) {
    const std::size_t mi = static_cast<std::size_t>(m);
    if (hi[mi] > lo[mi]) continue;

    const double mid = intervals[mi].mid();
    const int prev_hi = m > 0 ? hi[mi - 1] : 0;
    const int prev_size = m > 0 ? hi[mi - 1] - lo[mi - 1] : 0;
    int next_idx = -1;
    for (int j = m + 1; j < m_total; ++j) {
      if (hi[static_cast<std::size_t>(j)] > lo[static_cast<std::size_t>(j)]) {
        next_idx = j;
        break;
      }
    }
    const int next_lo = next_idx >= 0 ? lo[static_cast<std::size_t>(next_idx)] : total_frames;
    const int next_size =
        next_idx >= 0 ? hi[static_cast<std::size_t>(next_idx)] - next_lo : 0;

    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    auto consider = [&](int f) {
      if (f < 0 || f >= total_frames) return;
      const double d = std::abs(frame_center(f, frame_rate) - mid);
      if (d < best_dist - 1e-15 || (std::abs(d - best_dist) <= 1e-15 && f < best)) {
        best = f;
        best_dist = d;
      }
    };
    for (int f = prev_hi; f < next_lo; ++f) consider(f);  // unassigned gap frames
    if (prev_size >= 2) consider(prev_hi - 1);
    if (next_size >= 2) consider(next_lo);

    if (best < 0)
      throw std::invalid_argument(
          "assign_frames: no assignable frame for subword " + std::to_string(m) +
          " (too few frames for the transcript)");
    if (m > 0 && best == prev_hi - 1 && best >= lo[mi - 1]) hi[mi - 1] = best;  // steal prev tail
    if (next_idx >= 0 && best == next_lo) lo[static_cast<std::size_t>(next_idx)] = best + 1;
    lo[mi] = best;
    hi[mi] = best + 1;
  }

  AlignmentMap map;
  map.frame_rate = frame_rate;
  map.total_frames = total_frames;
  map.segments.reserve(static_cast<std::size_t>(m_total));
  for (int m = 0; m < m_total; ++m)
    map.segments.push_back({m, lo[static_cast<std::size_t>(m)], hi[static_cast<std::size_t>(m)]});
  return map;
}

AlignmentMap align(const TimedTranscript& transcript, const std::vector<int>& per_word_counts,
                   int total_frames, double frame_rate) {
  const auto intervals = subword_lengths(transcript, per_word_counts);
  const auto beta = subword_boundaries(intervals);
  return assign_frames(beta, intervals, total_frames, frame_rate);
}

std::string to_text(const AlignmentMap& map, const SubwordSequence& tokens) {
  if (tokens.tokens.size() != map.segments.size())
    throw std::invalid_argument("alignment to_text: token/segment count mismatch");
  std::ostringstream os;
  for (const auto& seg : map.segments)
    os << seg.subword_index << "\t" << tokens.tokens[static_cast<std::size_t>(seg.subword_index)]
       << "\t" << seg.frame_start << "\t" << seg.frame_end << "\n";
  return os.str();
}

}  // namespace ttr
