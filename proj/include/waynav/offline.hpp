// Copyright 2026 The waynav Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Offline segment scoring: a test lap is streamed through the query ring and
// compared against memory built from another lap of the same course.

#pragma once

#include <thread>
#include <vector>

#include "waynav/navigator.hpp"

namespace waynav {

struct OfflineSpec {
  int buffer_before = 5;
  int buffer_after = 5;
  int n_q = 10;
};

/// Ground truth of one test lap in route-index space.
struct LapTruth {
  std::vector<int> upcoming;                 // per frame
  std::vector<std::pair<int, int>> windows;  // per waypoint, buffered positive window [lo, hi]
};

inline LapTruth lap_truth(const Lap& lap, const CourseSpec& course, const OfflineSpec& spec) {
  const auto segs = lap_segments(lap);
  const int n = int(lap.frames.size());
  LapTruth t;
  for (const auto& wp : course.route) {
    const WaypointSegments* ws = nullptr;
    for (const auto& s : segs)
      if (s.waypoint == wp.id) ws = &s;
    if (!ws || ws->positive.length() <= 0)
      throw Error("eval", "test lap " + std::to_string(lap.lap_id) + " has no positive segment for waypoint " + std::to_string(wp.id));
    t.windows.emplace_back(std::max(0, ws->positive.begin - spec.buffer_before),
                           std::min(n - 1, ws->positive.end - 1 + spec.buffer_after));
  }
  // upcoming(f): first waypoint whose buffered window has not ended yet;
  // frames after the last window approach the first waypoint again.
  t.upcoming.assign(std::size_t(n), 0);
  std::size_t k = 0;
  for (int f = 0; f < n; ++f) {
    while (k < t.windows.size() && f > t.windows[k].second) ++k;
    t.upcoming[std::size_t(f)] = k < t.windows.size() ? int(k) : 0;
  }
  return t;
}

/// Per-frame probability against the upcoming waypoint; 0 while the ring
/// is not yet full.
inline std::vector<double> frame_probabilities(const DetectorParams& p, const MemoryBank& bank,
                                               std::span<const FrameEmbedding> emb, const LapTruth& truth, int n_q) {
  std::vector<double> probs(emb.size(), 0.0);
  for (std::size_t f = std::size_t(std::max(1, n_q)) - 1; f < emb.size(); ++f) {
    const FrameEmbedding q = combine_frames(emb.subspan(f + 1 - std::size_t(n_q), std::size_t(n_q)));
    probs[f] = max_slot_probability(p, q, bank.slots[std::size_t(truth.upcoming[f])]);
  }
  return probs;
}

struct SegmentScore {
  int segments = 0;
  int correct = 0;
  int false_positives = 0;  // negative segments containing a firing
  int false_negatives = 0;  // buffered windows without a firing

  double accuracy() const { return segments ? double(correct) / segments : 0.0; }
  SegmentScore& operator+=(const SegmentScore& o) {
    segments += o.segments, correct += o.correct;
    false_positives += o.false_positives, false_negatives += o.false_negatives;
    return *this;
  }
  bool operator==(const SegmentScore&) const = default;
};

/// One positive and one negative segment per waypoint; a segment is wrong
/// if it contains any error.
inline SegmentScore score_lap(std::span<const double> probs, const LapTruth& truth, double threshold) {
  SegmentScore s;
  const std::size_t nw = truth.windows.size();
  std::vector<char> pos_hit(nw, 0), neg_fire(nw, 0), neg_present(nw, 0);
  for (std::size_t f = 0; f < probs.size(); ++f) {
    const int u = truth.upcoming[f];
    const auto [lo, hi] = truth.windows[std::size_t(u)];
    const bool fire = probs[f] > threshold;
    if (int(f) >= lo && int(f) <= hi) {
      if (fire) pos_hit[std::size_t(u)] = 1;
    } else {
      neg_present[std::size_t(u)] = 1;
      if (fire) neg_fire[std::size_t(u)] = 1;
    }
  }
  for (std::size_t k = 0; k < nw; ++k) {
    ++s.segments;
    if (pos_hit[k]) ++s.correct;
    else ++s.false_negatives;
    if (neg_present[k]) {
      ++s.segments;
      if (neg_fire[k]) ++s.false_positives;
      else ++s.correct;
    }
  }
  return s;
}

/// Inputs for one evaluation course. `memory` holds the clean embeddings used
/// to build memory; `test` the (possibly corrupted) embeddings streamed as
/// queries. Both are indexed like `laps`.
struct EvalCourse {
  const CourseSpec* course = nullptr;
  std::vector<const Lap*> laps;
  std::vector<std::vector<FrameEmbedding>> memory;
  std::vector<std::vector<FrameEmbedding>> test;
};

struct ConfigScore {
  int course_id = 0;
  int memory_lap = 0;
  int test_lap = 0;
  std::vector<SegmentScore> by_threshold;
};

struct OfflineSweep {
  std::vector<double> thresholds;
  std::vector<ConfigScore> configs;

  SegmentScore pooled(std::size_t ti, int course_id = -1) const {
    SegmentScore s;
    for (const auto& c : configs)
      if (course_id < 0 || c.course_id == course_id) s += c.by_threshold[ti];
    return s;
  }
  /// Best pooled accuracy; ties go to the lower threshold.
  std::size_t best_index() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < thresholds.size(); ++i)
      if (pooled(i).correct > pooled(best).correct) best = i;
    return best;
  }
  std::size_t index_of(double thr) const {
    for (std::size_t i = 0; i < thresholds.size(); ++i)
      if (std::fabs(thresholds[i] - thr) < 1e-12) return i;
    throw Error("eval", "threshold " + fmt_double(thr, 6) + " not in the sweep");
  }
};

/// Runs every (memory lap, test lap) pair with memory != test on every course
/// and scores it at each threshold. Pairs run on up to `jobs` threads; the
/// result order is fixed.
inline OfflineSweep offline_sweep(const DetectorParams& p, const std::vector<EvalCourse>& courses,
                                  const std::vector<double>& thresholds, const OfflineSpec& spec, int jobs = 1) {
  if (thresholds.empty()) throw Error("eval", "empty threshold grid");
  struct Job {
    std::size_t course, mem, test;
  };
  std::vector<Job> work;
  for (std::size_t c = 0; c < courses.size(); ++c) {
    if (courses[c].laps.size() < 2)
      throw Error("eval", "course " + std::to_string(courses[c].course->id) + " needs at least 2 laps");
    for (std::size_t m = 0; m < courses[c].laps.size(); ++m)
      for (std::size_t t = 0; t < courses[c].laps.size(); ++t)
        if (m != t) work.push_back({c, m, t});
  }
  OfflineSweep out;
  out.thresholds = thresholds;
  out.configs.resize(work.size());
  // Memory banks and truths are shared by pairs of the same course.
  std::vector<std::vector<MemoryBank>> banks(courses.size());
  std::vector<std::vector<LapTruth>> truths(courses.size());
  for (std::size_t c = 0; c < courses.size(); ++c) {
    const auto& ec = courses[c];
    for (std::size_t l = 0; l < ec.laps.size(); ++l) {
      banks[c].push_back(build_memory(*ec.laps[l], ec.memory[l], *ec.course, spec.n_q).first);
      truths[c].push_back(lap_truth(*ec.laps[l], *ec.course, spec));
    }
  }
  auto run = [&](std::size_t j) {
    const Job& jb = work[j];
    const auto& ec = courses[jb.course];
    const auto probs = frame_probabilities(p, banks[jb.course][jb.mem], ec.test[jb.test], truths[jb.course][jb.test], spec.n_q);
    ConfigScore cs;
    cs.course_id = ec.course->id;
    cs.memory_lap = ec.laps[jb.mem]->lap_id;
    cs.test_lap = ec.laps[jb.test]->lap_id;
    for (double thr : thresholds) cs.by_threshold.push_back(score_lap(probs, truths[jb.course][jb.test], thr));
    out.configs[j] = std::move(cs);
  };
  const int nthreads = std::max(1, std::min<int>(jobs, int(work.size())));
  if (nthreads == 1) {
    for (std::size_t j = 0; j < work.size(); ++j) run(j);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nthreads));
    for (int t = 0; t < nthreads; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::size_t j = std::size_t(t); j < work.size(); j += std::size_t(nthreads)) run(j);
        } catch (...) {
          errors[std::size_t(t)] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return out;
}

inline std::vector<double> default_threshold_grid() {
  std::vector<double> g;
  for (int k = 30; k <= 90; k += 5) g.push_back(k / 100.0);
  return g;
}

}  // namespace waynav
