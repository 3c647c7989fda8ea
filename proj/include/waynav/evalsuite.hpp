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

// Offline, robustness, ablation and closed-loop evaluation plus report files.

#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "waynav/controller.hpp"
#include "waynav/datastore.hpp"
#include "waynav/navigator.hpp"
#include "waynav/offline.hpp"
#include "waynav/trainer.hpp"

namespace waynav {

namespace detail {

/// Runs fn(0..n-1) on up to `jobs` threads, rethrowing the first error.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const int nthreads = std::max(1, std::min<int>(jobs, int(n)));
  if (nthreads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nthreads));
  for (int t = 0; t < nthreads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = std::size_t(t); i < n; i += std::size_t(nthreads)) fn(i);
      } catch (...) {
        errors[std::size_t(t)] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// A course and its recorded laps.
struct CourseLaps {
  const CourseSpec* course = nullptr;
  std::vector<const Lap*> laps;
};

inline std::vector<CourseLaps> course_laps(const World& w, const Dataset& ds) {
  std::vector<CourseLaps> out;
  for (const auto& cd : ds.courses) {
    CourseLaps cl{&w.course(cd.course_id), {}};
    for (const auto& lap : cd.laps) cl.laps.push_back(&lap);
    out.push_back(std::move(cl));
  }
  return out;
}

inline std::vector<const CourseSpec*> course_specs(const World& w, const Dataset& ds) {
  std::vector<const CourseSpec*> out;
  for (const auto& cd : ds.courses) out.push_back(&w.course(cd.course_id));
  return out;
}

/// Embeds one lap with the corruption applied to every raster.
inline std::vector<FrameEmbedding> embed_corrupted(const DetectorParams& p, const Lap& lap, const CorruptionKind& kind,
                                                   std::uint64_t seed) {
  if (kind.severity == Severity::None) return embed_lap(p, lap);
  Lap copy = lap;
  const std::uint64_t cseed = derive_seed(seed, std::string(to_string(kind.corruption)),
                                          std::uint64_t(kind.severity));
  for (std::size_t t = 0; t < copy.frames.size(); ++t) {
    auto& f = copy.frames[t];
    const std::uint64_t key = ((std::uint64_t(lap.course_id) * 64 + std::uint64_t(lap.lap_id)) * 100000 + t) * 2;
    Rng rl = make_rng(cseed, "corrupt", key);
    f.raster_left = apply_corruption(f.raster_left, kind, rl);
    Rng rr = make_rng(cseed, "corrupt", key + 1);
    f.raster_right = apply_corruption(f.raster_right, kind, rr);
  }
  return embed_lap(p, copy);
}

/// Clean memory embeddings and (possibly corrupted) query embeddings.
inline std::vector<EvalCourse> prepare_eval(const DetectorParams& p, const std::vector<CourseLaps>& courses,
                                            const CorruptionKind& kind = {}, std::uint64_t seed = 0, int jobs = 1) {
  std::vector<EvalCourse> out(courses.size());
  std::vector<std::pair<std::size_t, std::size_t>> work;
  for (std::size_t c = 0; c < courses.size(); ++c) {
    out[c].course = courses[c].course;
    out[c].laps = courses[c].laps;
    out[c].memory.resize(courses[c].laps.size());
    out[c].test.resize(courses[c].laps.size());
    for (std::size_t l = 0; l < courses[c].laps.size(); ++l) work.emplace_back(c, l);
  }
  detail::parallel_for(work.size(), jobs, [&](std::size_t i) {
    const auto [c, l] = work[i];
    out[c].memory[l] = embed_lap(p, *courses[c].laps[l]);
    out[c].test[l] = kind.severity == Severity::None ? out[c].memory[l] : embed_corrupted(p, *courses[c].laps[l], kind, seed);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Offline

struct OfflineResult {
  double threshold = 0;
  SegmentScore total;
  std::vector<std::pair<int, SegmentScore>> per_course;
  std::vector<ConfigScore> configs;  // by_threshold holds the single threshold

  double accuracy() const { return total.accuracy(); }
};

inline OfflineResult offline_result(const OfflineSweep& s, std::size_t ti) {
  OfflineResult r;
  r.threshold = s.thresholds[ti];
  r.total = s.pooled(ti);
  for (const auto& c : s.configs) {
    ConfigScore cs = c;
    cs.by_threshold = {c.by_threshold[ti]};
    r.configs.push_back(std::move(cs));
    if (r.per_course.empty() || r.per_course.back().first != c.course_id) r.per_course.emplace_back(c.course_id, SegmentScore{});
    r.per_course.back().second += c.by_threshold[ti];
  }
  return r;
}

/// All memory/test lap configurations of every course at one threshold.
inline OfflineResult eval_offline(const DetectorParams& p, const std::vector<EvalCourse>& courses, double threshold,
                                  const OfflineSpec& spec = {}, int jobs = 1) {
  return offline_result(offline_sweep(p, courses, {threshold}, spec, jobs), 0);
}

/// One course, one memory lap against the listed test laps (indices into
/// course.laps).
inline OfflineResult eval_offline(const DetectorParams& p, const EvalCourse& course, std::size_t memory_lap,
                                  const std::vector<std::size_t>& test_laps, double threshold, const OfflineSpec& spec = {}) {
  if (course.laps.size() < 2) throw Error("eval", "course " + std::to_string(course.course->id) + " needs at least 2 laps");
  if (memory_lap >= course.laps.size()) throw Error("eval", "memory lap index out of range");
  const MemoryBank bank = build_memory(*course.laps[memory_lap], course.memory[memory_lap], *course.course, spec.n_q).first;
  OfflineResult r;
  r.threshold = threshold;
  for (std::size_t t : test_laps) {
    if (t == memory_lap) throw Error("eval", "memory lap is also a test lap");
    if (t >= course.laps.size()) throw Error("eval", "test lap index out of range");
    const LapTruth truth = lap_truth(*course.laps[t], *course.course, spec);
    const auto probs = frame_probabilities(p, bank, course.test[t], truth, spec.n_q);
    const SegmentScore s = score_lap(probs, truth, threshold);
    r.total += s;
    r.configs.push_back({course.course->id, course.laps[memory_lap]->lap_id, course.laps[t]->lap_id, {s}});
  }
  r.per_course.emplace_back(course.course->id, r.total);
  return r;
}

// ---------------------------------------------------------------------------
// Corruptions

struct CorruptionTable {
  double threshold = 0;
  double clean = 0;
  std::array<std::array<double, 3>, 4> accuracy{};  // [corruption][severity - 1]

  double at(Corruption c, Severity s) const {
    if (s == Severity::None) return clean;
    return accuracy[std::size_t(c)][std::size_t(s) - 1];
  }
};

inline CorruptionTable eval_corruptions(const DetectorParams& p, const std::vector<CourseLaps>& test, double threshold,
                                        std::uint64_t seed, const OfflineSpec& spec = {}, int jobs = 1) {
  CorruptionTable t;
  t.threshold = threshold;
  t.clean = eval_offline(p, prepare_eval(p, test, {}, seed, jobs), threshold, spec, jobs).accuracy();
  for (Corruption c : kAllCorruptions)
    for (Severity s : kAllSeverities)
      t.accuracy[std::size_t(c)][std::size_t(s) - 1] =
          eval_offline(p, prepare_eval(p, test, {c, s}, seed, jobs), threshold, spec, jobs).accuracy();
  return t;
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationCell {
  MetricKind kind;
  bool two_phase = false;
  double val_accuracy = 0;
  double threshold = 0;
  double test_accuracy = 0;
};

struct AblationInputs {
  const Dataset* train = nullptr;
  const Dataset* val = nullptr;
  std::vector<const CourseSpec*> val_courses;
  std::vector<CourseLaps> test;
};

using CellLogger = std::function<void(const AblationCell&)>;

/// Trains one detector per metric × form with shared seeds; the two-phase
/// cell continues from the phase-1-only cell.
inline std::vector<AblationCell> ablation_grid(const AblationInputs& in, const DetectorConfig& base, const TrainHyper& h1,
                                               const TrainHyper& h2, std::uint64_t init_seed, std::uint64_t train_seed,
                                               const OfflineSpec& spec = {}, int jobs = 1, const CellLogger& log = {}) {
  std::vector<AblationCell> cells;
  for (Metric m : kAllMetrics)
    for (InputForm f : kAllForms) {
      DetectorConfig cfg = base;
      cfg.kind.metric = m;
      cfg.kind.form = f;
      const DetectorParams init = init_detector(cfg, init_seed);
      const ValidationSet vs(init, *in.val, in.val_courses, spec);
      const TrainResult r1 = train_phase(*in.train, vs, init, h1, train_seed, {}, jobs);
      const TrainResult r2 = train_phase(*in.train, vs, r1.params, h2, train_seed, {}, jobs);
      for (const TrainResult* r : {&r1, &r2}) {
        AblationCell c;
        c.kind = cfg.kind;
        c.two_phase = r == &r2;
        c.val_accuracy = r->best_accuracy;
        c.threshold = r->best_threshold;
        c.test_accuracy = eval_offline(r->params, prepare_eval(r->params, in.test, {}, 0, jobs), c.threshold, spec, jobs).accuracy();
        if (log) log(c);
        cells.push_back(c);
      }
    }
  return cells;
}

/// Index of the cell with the highest test accuracy; ties go to the first.
inline std::size_t best_cell(const std::vector<AblationCell>& cells) {
  if (cells.empty()) throw Error("eval", "empty ablation grid");
  std::size_t b = 0;
  for (std::size_t i = 1; i < cells.size(); ++i)
    if (cells[i].test_accuracy > cells[b].test_accuracy) b = i;
  return b;
}

// ---------------------------------------------------------------------------
// Online

enum class WaypointOutcome : std::uint8_t { Success, EarlyDetection, Missed, WrongBranch, NoExit, Collision, OffRoute, Timeout };

inline std::string_view to_string(WaypointOutcome o) {
  switch (o) {
    case WaypointOutcome::Success: return "success";
    case WaypointOutcome::EarlyDetection: return "early-detection";
    case WaypointOutcome::Missed: return "missed";
    case WaypointOutcome::WrongBranch: return "wrong-branch";
    case WaypointOutcome::NoExit: return "no-exit";
    case WaypointOutcome::Collision: return "collision";
    case WaypointOutcome::OffRoute: return "off-route";
    case WaypointOutcome::Timeout: return "timeout";
  }
  return "?";
}

struct OnlineSpec {
  int memory_laps = 2;
  int repeats = 2;
  int buffer_frames = 5;           // window extension on each side, in frames of travel
  double exit_travel_widths = 3;   // travel allowed inside an intersection, in corridor widths
  double off_route_widths = 1.0;   // distance from the route polyline, in corridor widths
  NavConfig nav;
};

/// Buffered detection windows in arc length along the course, from a
/// noise-free expert lap.
struct ReferenceWindows {
  std::vector<std::pair<double, double>> windows;
};

inline ReferenceWindows reference_windows(const World& w, const CourseSpec& course, int positive_len, int buffer_frames) {
  std::vector<double> arcs;
  LapOptions opts;
  opts.perturb = false;
  opts.arcs = &arcs;
  SegmentOptions so;
  so.positive_len = positive_len;
  const Lap lap = segment_lap(record_lap(w, course, derive_seed(w.seed, "reference", std::uint64_t(course.id)), 0, opts), course, so);
  const double step = w.spec.vehicle.speed * w.spec.vehicle.dt;
  const auto segs = lap_segments(lap);
  ReferenceWindows rw;
  for (const auto& wp : course.route) {
    const WaypointSegments* ws = nullptr;
    for (const auto& s : segs)
      if (s.waypoint == wp.id) ws = &s;
    if (!ws || ws->positive.length() <= 0) throw Error("eval", "reference lap misses waypoint " + std::to_string(wp.id));
    rw.windows.emplace_back(arcs[std::size_t(ws->positive.begin)] - buffer_frames * step,
                            arcs[std::size_t(ws->positive.end - 1)] + buffer_frames * step);
  }
  return rw;
}

struct OnlineRun {
  int course_id = 0;
  int memory_lap = 0;
  int repeat = 0;
  double threshold = 0;
  std::vector<WaypointOutcome> outcomes;
  std::vector<double> detection_offset;  // arc of the detection minus window start; NaN if none
  std::vector<Pose> detection_pose;
  int frames = 0;

  int successes() const { return int(std::count(outcomes.begin(), outcomes.end(), WaypointOutcome::Success)); }
  bool course_success() const { return successes() == int(outcomes.size()); }
};

struct OnlineResult {
  std::vector<OnlineRun> runs;

  int course_attempts(int course_id = -1) const {
    int n = 0;
    for (const auto& r : runs) n += course_id < 0 || r.course_id == course_id;
    return n;
  }
  int course_successes(int course_id = -1) const {
    int n = 0;
    for (const auto& r : runs) n += (course_id < 0 || r.course_id == course_id) && r.course_success();
    return n;
  }
  int waypoint_attempts(int course_id = -1) const {
    int n = 0;
    for (const auto& r : runs)
      if (course_id < 0 || r.course_id == course_id) n += int(r.outcomes.size());
    return n;
  }
  int waypoint_successes(int course_id = -1) const {
    int n = 0;
    for (const auto& r : runs)
      if (course_id < 0 || r.course_id == course_id) n += r.successes();
    return n;
  }
  double waypoint_rate() const {
    const int a = waypoint_attempts();
    return a ? double(waypoint_successes()) / a : 0.0;
  }
  std::vector<int> course_ids() const {
    std::vector<int> ids;
    for (const auto& r : runs)
      if (std::find(ids.begin(), ids.end(), r.course_id) == ids.end()) ids.push_back(r.course_id);
    return ids;
  }
};

/// One closed-loop traversal. Every waypoint is resolved exactly once; a
/// failed waypoint respawns the vehicle just past it with the navigator
/// advanced to the next waypoint.
inline OnlineRun run_online(const World& w, const CourseSpec& course, const MemoryBank& bank, const ActionLUT& lut,
                            const DetectorParams& det, const ControllerParams& ctl, const ReferenceWindows& ref,
                            double threshold, std::uint64_t run_seed, const OnlineSpec& spec) {
  const std::size_t n = course.route.size();
  if (bank.size() != n || ref.windows.size() != n) throw Error("eval", "memory does not match the course route");
  const Region& reg = w.regions[std::size_t(course.region)];
  const double cw = w.spec.corridor_width;
  const double step = w.spec.vehicle.speed * w.spec.vehicle.dt;

  // Exit direction at every waypoint.
  std::vector<int> exit_dir(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto it = std::find(course.loop.begin(), course.loop.end(), course.route[k].node);
    if (it == course.loop.end()) throw Error("eval", "waypoint node is not on the loop");
    const std::size_t i = std::size_t(it - course.loop.begin());
    exit_dir[k] = dir_between(course.loop[i], course.loop[(i + 1) % course.loop.size()]);
  }

  NavConfig nc = spec.nav;
  nc.threshold = threshold;
  Navigator nav(bank, lut, det, nc);
  LoopProgress lp(w, course);
  Pose pose = course.start;
  OnlineRun run;
  run.threshold = threshold;
  run.course_id = course.id;
  run.outcomes.assign(n, WaypointOutcome::Timeout);
  run.detection_offset.assign(n, std::numeric_limits<double>::quiet_NaN());
  run.detection_pose.assign(n, Pose{});
  std::vector<double> det_arc(n, std::numeric_limits<double>::quiet_NaN());
  std::size_t k = 0;
  bool entered = false;
  double inside_travel = 0;
  const int max_frames = int(3.0 * lp.total() / step) + 200;

  auto resolve = [&](WaypointOutcome o) {
    run.outcomes[k] = o;
    run.detection_offset[k] = det_arc[k] - ref.windows[k].first;
    entered = false;
    inside_travel = 0;
    if (o != WaypointOutcome::Success) {
      const Vec2 c = w.node_center(reg, course.route[k].node);
      const NodeIdx d = dir_step(exit_dir[k]);
      pose = {c.x + d.i * cw, c.y + d.j * cw, wrap_angle(exit_dir[k] * kPi / 2.0)};
      nav.skip_to(std::max(nav.upcoming(), int(k) + 1));
      nav.clear_ring();
      nav.reset_action();
      lp.relocate(pose.pos());
    }
    ++k;
  };

  int t = 0;
  for (; t < max_frames && k < n; ++t) {
    const double arc = lp.update(pose.pos());
    const Observation obs = render_observation(w, pose, derive_seed(run_seed, "frame", std::uint64_t(t)));
    nav.push_frame(embed_frame(det, obs.left, obs.right));
    if (const auto d = nav.detect()) {
      det_arc[std::size_t(d->route_index)] = arc;
      run.detection_pose[std::size_t(d->route_index)] = pose;
    }

    const auto [lo, hi] = ref.windows[k];
    if (!std::isnan(det_arc[k]) && det_arc[k] < lo) {
      resolve(WaypointOutcome::EarlyDetection);
      continue;
    }
    if (std::isnan(det_arc[k]) && arc > hi) {
      resolve(WaypointOutcome::Missed);
      continue;
    }
    if (lp.distance() > spec.off_route_widths * cw) {
      resolve(WaypointOutcome::OffRoute);
      continue;
    }
    if (!std::isnan(det_arc[k])) {
      const Vec2 rel = pose.pos() - w.node_center(reg, course.route[k].node);
      const bool inside = std::fabs(rel.x) < cw / 2 && std::fabs(rel.y) < cw / 2;
      if (inside) {
        entered = true;
        inside_travel += step;
        if (inside_travel > spec.exit_travel_widths * cw) {
          resolve(WaypointOutcome::NoExit);
          continue;
        }
      } else if (entered) {
        const int arm = std::fabs(rel.x) >= std::fabs(rel.y) ? (rel.x > 0 ? 0 : 2) : (rel.y > 0 ? 1 : 3);
        resolve(arm == exit_dir[k] ? WaypointOutcome::Success : WaypointOutcome::WrongBranch);
        if (run.outcomes[k - 1] != WaypointOutcome::Success) continue;
      }
    }

    const double s = controller_forward(ctl, obs.left, obs.right, nav.current_action());
    nav.observe_steering(s);
    const StepResult st = step_vehicle(w, pose, s, w.spec.vehicle.dt);
    if (st.collision) {
      if (k < n) resolve(WaypointOutcome::Collision);
      continue;
    }
    pose = st.pose;
  }
  run.frames = t;
  return run;
}

/// Closed-loop runs over the given courses: every memory lap × repeat.
/// Run seeds do not depend on the threshold, so runs at different
/// thresholds see identical render noise.
inline OnlineResult eval_online(const World& w, const std::vector<CourseLaps>& courses, const DetectorParams& det,
                                const ControllerParams& ctl, double threshold, std::uint64_t seed,
                                const OnlineSpec& spec = {}, int positive_len = 15, int jobs = 1) {
  struct Job {
    std::size_t course;
    std::size_t mem;
    int repeat;
  };
  std::vector<Job> work;
  std::vector<ReferenceWindows> refs(courses.size());
  std::vector<std::vector<std::pair<MemoryBank, ActionLUT>>> mem(courses.size());
  for (std::size_t c = 0; c < courses.size(); ++c) {
    const auto& cl = courses[c];
    if (int(cl.laps.size()) < spec.memory_laps)
      throw Error("eval", "course " + std::to_string(cl.course->id) + " has fewer laps than memory_laps");
    refs[c] = reference_windows(w, *cl.course, positive_len, spec.buffer_frames);
    for (int m = 0; m < spec.memory_laps; ++m) {
      mem[c].push_back(build_memory(*cl.laps[std::size_t(m)], det, *cl.course, spec.nav.n_q));
      for (int r = 0; r < spec.repeats; ++r) work.push_back({c, std::size_t(m), r});
    }
  }
  OnlineResult res;
  res.runs.resize(work.size());
  detail::parallel_for(work.size(), jobs, [&](std::size_t i) {
    const Job& j = work[i];
    const auto& cl = courses[j.course];
    const std::uint64_t rs = derive_seed(seed, "online", (std::uint64_t(cl.course->id) * 16 + j.mem) * 16 + std::uint64_t(j.repeat));
    OnlineRun r = run_online(w, *cl.course, mem[j.course][j.mem].first, mem[j.course][j.mem].second, det, ctl,
                             refs[j.course], threshold, rs, spec);
    r.memory_lap = cl.laps[j.mem]->lap_id;
    r.repeat = j.repeat;
    res.runs[i] = std::move(r);
  });
  return res;
}

// ---------------------------------------------------------------------------
// Reports

struct ReportCell {
  std::string table, row, col;
  double value = 0;
  std::uint64_t seed = 0;
  double threshold = 0;
  bool operator==(const ReportCell&) const = default;
};

struct Report {
  std::vector<std::pair<std::string, std::string>> header;  // echoed config and seeds
  std::vector<ReportCell> cells;
};

inline std::string fmt_value(double v) { return fmt_fixed(v, 6); }

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string o = "\"";
  for (char c : s) o += c == '"' ? std::string("\"\"") : std::string(1, c);
  return o + "\"";
}

inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') out.back() += '"', ++i;
      else if (c == '"') quoted = false;
      else out.back() += c;
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  if (quoted) throw Error("format", "unterminated quote in CSV line");
  return out;
}

}  // namespace detail

inline std::string report_csv(const Report& r) {
  std::string s;
  for (const auto& [k, v] : r.header) s += "# " + k + " = " + v + "\n";
  s += "table,row,col,value,seed,threshold\n";
  for (const auto& c : r.cells)
    s += detail::csv_field(c.table) + "," + detail::csv_field(c.row) + "," + detail::csv_field(c.col) + "," +
         fmt_value(c.value) + "," + std::to_string(c.seed) + "," + fmt_fixed(c.threshold, 2) + "\n";
  return s;
}

inline Report parse_report_csv(const std::string& text) {
  Report r;
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const auto eq = line.find(" = ");
      if (eq == std::string::npos) throw Error("format", "bad report header line: " + line);
      r.header.emplace_back(line.substr(2, eq - 2), line.substr(eq + 3));
      continue;
    }
    if (!header_seen) {
      if (line != "table,row,col,value,seed,threshold") throw Error("format", "unexpected CSV header: " + line);
      header_seen = true;
      continue;
    }
    const auto f = detail::csv_split(line);
    if (f.size() != 6) throw Error("format", "expected 6 CSV fields: " + line);
    r.cells.push_back({f[0], f[1], f[2], std::stod(f[3]), std::stoull(f[4]), std::stod(f[5])});
  }
  if (!header_seen) throw Error("format", "missing CSV header");
  return r;
}

/// Aligned text rendering: one block per table, rows × columns.
inline std::string report_text(const Report& r) {
  std::string s;
  for (const auto& [k, v] : r.header) s += k + " = " + v + "\n";
  std::vector<std::string> tables;
  for (const auto& c : r.cells)
    if (std::find(tables.begin(), tables.end(), c.table) == tables.end()) tables.push_back(c.table);
  for (const auto& t : tables) {
    std::vector<std::string> rows, cols;
    std::map<std::pair<std::string, std::string>, std::string> val;
    for (const auto& c : r.cells) {
      if (c.table != t) continue;
      if (std::find(rows.begin(), rows.end(), c.row) == rows.end()) rows.push_back(c.row);
      if (std::find(cols.begin(), cols.end(), c.col) == cols.end()) cols.push_back(c.col);
      val[{c.row, c.col}] = fmt_fixed(c.value, 4);
    }
    std::size_t w0 = 0;
    for (const auto& rw : rows) w0 = std::max(w0, rw.size());
    std::vector<std::size_t> wc;
    for (const auto& c : cols) {
      std::size_t wd = c.size();
      for (const auto& rw : rows) wd = std::max(wd, val.count({rw, c}) ? val[{rw, c}].size() : 1);
      wc.push_back(wd);
    }
    auto pad = [](const std::string& x, std::size_t n, bool right) {
      const std::string sp(n > x.size() ? n - x.size() : 0, ' ');
      return right ? sp + x : x + sp;
    };
    s += "\n[" + t + "]\n" + pad("", w0, false);
    for (std::size_t j = 0; j < cols.size(); ++j) s += "  " + pad(cols[j], wc[j], true);
    s += "\n";
    for (const auto& rw : rows) {
      s += pad(rw, w0, false);
      for (std::size_t j = 0; j < cols.size(); ++j) {
        const auto it = val.find({rw, cols[j]});
        s += "  " + pad(it == val.end() ? "-" : it->second, wc[j], true);
      }
      s += "\n";
    }
  }
  return s;
}

/// Writes <dir>/<name>.csv and <dir>/<name>.txt.
inline void emit_report(const Report& r, const std::filesystem::path& dir, const std::string& name) {
  if (r.cells.empty()) throw Error("report", "no results to report for '" + name + "'");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  for (const auto& [ext, body] : {std::pair{".csv", report_csv(r)}, std::pair{".txt", report_text(r)}}) {
    const auto path = dir / (name + ext);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io", "cannot write " + path.string());
    out << body;
    if (!out) throw Error("io", "write failed for " + path.string());
  }
}

// Table builders.

inline void add_offline_cells(Report& r, const std::string& table, const OfflineResult& res, std::uint64_t seed) {
  for (const auto& [cid, s] : res.per_course) {
    const std::string row = "course " + std::to_string(cid);
    r.cells.push_back({table, row, "accuracy", s.accuracy(), seed, res.threshold});
    r.cells.push_back({table, row, "false_positives", double(s.false_positives), seed, res.threshold});
    r.cells.push_back({table, row, "false_negatives", double(s.false_negatives), seed, res.threshold});
    r.cells.push_back({table, row, "segments", double(s.segments), seed, res.threshold});
  }
  r.cells.push_back({table, "all", "accuracy", res.accuracy(), seed, res.threshold});
  r.cells.push_back({table, "all", "false_positives", double(res.total.false_positives), seed, res.threshold});
  r.cells.push_back({table, "all", "false_negatives", double(res.total.false_negatives), seed, res.threshold});
  r.cells.push_back({table, "all", "segments", double(res.total.segments), seed, res.threshold});
}

inline void add_corruption_cells(Report& r, const std::string& table, const CorruptionTable& t, std::uint64_t seed) {
  for (Corruption c : kAllCorruptions) {
    r.cells.push_back({table, std::string(to_string(c)), "None", t.clean, seed, t.threshold});
    for (Severity s : kAllSeverities)
      r.cells.push_back({table, std::string(to_string(c)), std::string(to_string(s)), t.at(c, s), seed, t.threshold});
  }
}

inline void add_ablation_cells(Report& r, const std::string& table, const std::vector<AblationCell>& cells,
                               std::uint64_t seed) {
  const std::size_t best = best_cell(cells);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    const std::string col = std::string(display_name(c.kind.form)) + " / " + (c.two_phase ? "two-phase" : "phase-1-only");
    const std::string row = std::string(display_name(c.kind.metric)) + (i == best ? " *" : "");
    r.cells.push_back({table, row, col, c.test_accuracy, seed, c.threshold});
  }
}

inline void add_online_cells(Report& r, const std::string& table, const OnlineResult& res, std::uint64_t seed,
                             double threshold) {
  for (int cid : res.course_ids()) {
    const std::string row = "course " + std::to_string(cid);
    r.cells.push_back({table, row, "course_success", double(res.course_successes(cid)), seed, threshold});
    r.cells.push_back({table, row, "course_attempts", double(res.course_attempts(cid)), seed, threshold});
    r.cells.push_back({table, row, "waypoint_success", double(res.waypoint_successes(cid)), seed, threshold});
    r.cells.push_back({table, row, "waypoint_attempts", double(res.waypoint_attempts(cid)), seed, threshold});
  }
  r.cells.push_back({table, "all", "course_success", double(res.course_successes()), seed, threshold});
  r.cells.push_back({table, "all", "course_attempts", double(res.course_attempts()), seed, threshold});
  r.cells.push_back({table, "all", "waypoint_success", double(res.waypoint_successes()), seed, threshold});
  r.cells.push_back({table, "all", "waypoint_attempts", double(res.waypoint_attempts()), seed, threshold});
}

}  // namespace waynav
