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

// Pipeline stages behind the command line. Each stage owns one directory
// under the output root, writes its resolved config there, and reads the
// outputs of earlier stages only after checking they were produced with a
// matching configuration.
//
//   <out>/world/       world.txt
//   <out>/dataset/     train|val|test|long/course_<id>/lap_<n>.*
//   <out>/detector/    phase1.ckpt detector.ckpt selection.txt history_*.csv
//   <out>/controller/  controller.ckpt loss.csv
//   <out>/reports/     offline corruption ablation online summary (.csv .txt .resolved.cfg)
//   <out>/events.log   one event per line

#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>

#include "waynav/config.hpp"

namespace waynav {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Structured events

class EventLog {
 public:
  EventLog() = default;
  EventLog(const fs::path& file, bool echo) : echo_(echo) {
    if (!file.empty()) {
      std::error_code ec;
      fs::create_directories(file.parent_path(), ec);
      out_.open(file, std::ios::app);
      if (!out_) throw Error("io", "cannot open event log " + file.string());
    }
  }

  /// One line: `<utc timestamp> stage=<stage> event=<event> k=v ...`.
  void event(const std::string& stage, const std::string& name,
             const std::vector<std::pair<std::string, std::string>>& fields = {}) {
    std::string line = timestamp() + " stage=" + stage + " event=" + name;
    for (const auto& [k, v] : fields) line += " " + k + "=" + v;
    std::lock_guard lock(mu_);
    if (out_.is_open()) out_ << line << '\n' << std::flush;
    if (echo_) std::cerr << line << '\n';
  }

 private:
  static std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                  tm.tm_hour, tm.tm_min, tm.tm_sec, int(ms));
    return buf;
  }

  std::ofstream out_;
  bool echo_ = false;
  std::mutex mu_;
};

inline std::string fmt_metric(double v) { return fmt_fixed(v, 4); }

// ---------------------------------------------------------------------------
// Layout and dependency checks

struct RunContext {
  PipelineConfig config;
  fs::path out;
  int jobs = 1;
  EventLog* log = nullptr;

  fs::path world_dir() const { return out / "world"; }
  fs::path dataset_dir(const std::string& split) const { return out / "dataset" / split; }
  fs::path detector_dir() const { return out / "detector"; }
  fs::path controller_dir() const { return out / "controller"; }
  fs::path reports_dir() const { return out / "reports"; }

  void event(const std::string& stage, const std::string& name,
             const std::vector<std::pair<std::string, std::string>>& fields = {}) const {
    if (log) log->event(stage, name, fields);
  }
};

inline void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write " + path.string());
  out << text;
  if (!out) throw Error("io", "write failed for " + path.string());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Config lines an output depends on: whole sections or single keys.
inline std::string fingerprint(const PipelineConfig& cfg, const std::vector<std::string>& scope) {
  std::string s;
  for (const auto& [k, v] : config_pairs(cfg))
    for (const auto& p : scope)
      if (k == p || k.rfind(p + ".", 0) == 0) {
        s += k + " = " + v + "\n";
        break;
      }
  return s;
}

inline const std::vector<std::string> kWorldScope = {"world"};
inline const std::vector<std::string> kDatasetScope = {"world", "dataset"};
inline const std::vector<std::string> kDetectorScope = {"world", "dataset", "detector", "trainer", "navigator.n_q",
                                                         "eval.buffer_before", "eval.buffer_after"};
inline const std::vector<std::string> kControllerScope = {"world", "controller"};

/// Writes the stage's resolved config and dependency fingerprint.
inline void write_stage_meta(const RunContext& ctx, const fs::path& dir, const std::vector<std::string>& scope) {
  write_text(dir / "resolved.cfg", resolved_config(ctx.config));
  write_text(dir / "fingerprint.txt", fingerprint(ctx.config, scope));
}

/// Throws an actionable dependency error unless `dir` was produced by
/// `producer` with the same configuration in `scope`.
inline void require_stage(const RunContext& ctx, const fs::path& dir, const std::vector<std::string>& scope,
                          const std::string& producer, const std::string& what) {
  const fs::path fp = dir / "fingerprint.txt";
  if (!fs::exists(fp))
    throw Error("dependency", what + " not found in " + dir.string() + "; run `waynav " + producer + "` with the same --out first");
  if (read_text(fp) != fingerprint(ctx.config, scope))
    throw Error("dependency", what + " in " + dir.string() + " was produced with a different configuration; rerun `waynav " +
                                  producer + "` with this config");
}

inline World build_world(const PipelineConfig& cfg) { return generate_world(cfg.seeds.world, cfg.world); }

// ---------------------------------------------------------------------------
// Stages

inline World stage_gen_world(const RunContext& ctx) {
  ctx.event("gen-world", "start", {{"seed", std::to_string(ctx.config.seeds.world)}});
  World w = build_world(ctx.config);
  write_text(ctx.world_dir() / "world.txt", serialize_world(w));
  write_stage_meta(ctx, ctx.world_dir(), kWorldScope);
  ctx.event("gen-world", "done", {{"width", std::to_string(w.width)}, {"height", std::to_string(w.height)},
                                  {"courses", std::to_string(w.courses.size())}});
  return w;
}

/// Regenerates the world and checks it against the gen-world output.
inline World load_world(const RunContext& ctx) {
  require_stage(ctx, ctx.world_dir(), kWorldScope, "gen-world", "world");
  World w = build_world(ctx.config);
  if (read_text(ctx.world_dir() / "world.txt") != serialize_world(w))
    throw Error("dependency", "world.txt in " + ctx.world_dir().string() + " does not match this build; rerun `waynav gen-world`");
  return w;
}

inline const std::vector<std::string>& kSplits() {
  static const std::vector<std::string> s = {"train", "val", "test", "long"};
  return s;
}

inline int laps_for_split(const PipelineConfig& cfg, const std::string& split) {
  if (split == "train") return cfg.dataset.train_laps;
  if (split == "val") return cfg.dataset.val_laps;
  if (split == "test") return cfg.dataset.test_laps;
  return cfg.dataset.long_laps;
}

/// Records and labels every lap of one split. Lap noise seeds depend only
/// on (course, lap), so the split does not depend on `jobs`.
inline Dataset record_split(const World& w, const PipelineConfig& cfg, const std::string& split, int jobs = 1) {
  Dataset ds;
  std::vector<std::pair<std::size_t, int>> work;
  const int laps = laps_for_split(cfg, split);
  for (const auto& c : w.courses)
    if (c.split == split) {
      ds.courses.push_back({c.id, std::vector<Lap>(std::size_t(laps))});
      for (int l = 0; l < laps; ++l) work.emplace_back(ds.courses.size() - 1, l);
    }
  detail::parallel_for(work.size(), jobs, [&](std::size_t i) {
    const auto [ci, l] = work[i];
    const CourseSpec& course = w.course(ds.courses[ci].course_id);
    const std::uint64_t s = derive_seed(cfg.seeds.dataset, "lap", std::uint64_t(course.id) * 100 + std::uint64_t(l));
    ds.courses[ci].laps[std::size_t(l)] = segment_lap(record_lap(w, course, s, l), course, cfg.dataset.segments);
  });
  return ds;
}

inline void stage_collect(const RunContext& ctx) {
  const World w = load_world(ctx);
  const fs::path root = ctx.out / "dataset";
  std::error_code ec;
  fs::remove_all(root, ec);
  for (const auto& split : kSplits()) {
    const Dataset ds = record_split(w, ctx.config, split, ctx.jobs);
    if (ds.courses.empty()) continue;
    save_dataset(ds, ctx.dataset_dir(split));
    ctx.event("collect", "split", {{"split", split}, {"courses", std::to_string(ds.courses.size())},
                                   {"frames", std::to_string(ds.frame_count())}});
  }
  write_stage_meta(ctx, root, kDatasetScope);
}

inline Dataset load_split(const RunContext& ctx, const std::string& split) {
  require_stage(ctx, ctx.out / "dataset", kDatasetScope, "collect", "dataset");
  if (!fs::is_directory(ctx.dataset_dir(split)))
    throw Error("dependency", "dataset split '" + split + "' is missing; rerun `waynav collect`");
  return load_dataset(ctx.dataset_dir(split));
}

struct TrainedDetector {
  DetectorParams params;
  double threshold = 0.5;  // validation-chosen
  double val_accuracy = 0;
};

struct DetectorTraining {
  TrainResult phase1, phase2;
};

inline TrainLogger train_logger(const RunContext& ctx, int phase) {
  return [&ctx, phase](const HistoryRow& r) {
    if (!r.val_accuracy) return;
    ctx.event("train-detector", "validate",
              {{"phase", std::to_string(phase)}, {"iteration", std::to_string(r.iteration)},
               {"loss", fmt_metric(r.loss)}, {"val_accuracy", fmt_metric(*r.val_accuracy)},
               {"threshold", fmt_fixed(*r.val_threshold, 2)}});
  };
}

inline DetectorTraining stage_train_detector(const RunContext& ctx) {
  const PipelineConfig& cfg = ctx.config;
  const World w = load_world(ctx);
  const Dataset train = load_split(ctx, "train"), val = load_split(ctx, "val");
  ctx.event("train-detector", "start", {{"metric", std::string(to_string(cfg.detector.kind.metric))},
                                        {"form", std::string(to_string(cfg.detector.kind.form))},
                                        {"train_frames", std::to_string(train.frame_count())}});
  const DetectorParams init = init_detector(cfg.detector, cfg.seeds.detector);
  const ValidationSet vs(init, val, course_specs(w, val), cfg.offline_spec());
  DetectorTraining out;
  out.phase1 = train_phase(train, vs, init, cfg.phase1, cfg.seeds.trainer, train_logger(ctx, 1), ctx.jobs);
  out.phase2 = train_phase(train, vs, out.phase1.params, cfg.phase2, cfg.seeds.trainer, train_logger(ctx, 2), ctx.jobs);
  const fs::path dir = ctx.detector_dir();
  std::error_code ec;
  fs::create_directories(dir, ec);
  save_detector(out.phase1.params, (dir / "phase1.ckpt").string());
  save_detector(out.phase2.params, (dir / "detector.ckpt").string());
  write_text(dir / "history_phase1.csv", history_csv(out.phase1.history));
  write_text(dir / "history_phase2.csv", history_csv(out.phase2.history));
  write_text(dir / "selection.txt", "threshold " + fmt_fixed(out.phase2.best_threshold, 2) + "\nval_accuracy " +
                                        fmt_double(out.phase2.best_accuracy) + "\niteration " +
                                        std::to_string(out.phase2.best_iteration) + "\n");
  write_stage_meta(ctx, dir, kDetectorScope);
  ctx.event("train-detector", "done", {{"phase1_val", fmt_metric(out.phase1.best_accuracy)},
                                       {"phase2_val", fmt_metric(out.phase2.best_accuracy)},
                                       {"threshold", fmt_fixed(out.phase2.best_threshold, 2)}});
  return out;
}

inline TrainedDetector load_trained_detector(const RunContext& ctx) {
  require_stage(ctx, ctx.detector_dir(), kDetectorScope, "train-detector", "trained detector");
  TrainedDetector d;
  d.params = load_detector((ctx.detector_dir() / "detector.ckpt").string());
  std::istringstream in(read_text(ctx.detector_dir() / "selection.txt"));
  std::string key;
  bool have = false;
  while (in >> key) {
    if (key == "threshold") in >> d.threshold, have = true;
    else if (key == "val_accuracy") in >> d.val_accuracy;
    else in >> key;
  }
  if (!have) throw Error("dependency", "selection.txt has no threshold; rerun `waynav train-detector`");
  return d;
}

/// Threshold for evaluation: the config value when set, else validation-chosen.
inline double eval_threshold(const RunContext& ctx, const TrainedDetector& d) {
  return ctx.config.threshold ? *ctx.config.threshold : d.threshold;
}

/// Regions hosting the test and long courses.
inline std::vector<int> controller_regions(const World& w) {
  std::set<int> regs;
  for (const auto& c : w.courses)
    if (c.split == "test" || c.split == "long") regs.insert(c.region);
  return {regs.begin(), regs.end()};
}

inline ControllerTrainResult stage_train_controller(const RunContext& ctx) {
  const PipelineConfig& cfg = ctx.config;
  const World w = load_world(ctx);
  std::vector<ControlSample> data;
  for (int r : controller_regions(w)) {
    auto d = collect_control_samples(w, w.regions[std::size_t(r)], cfg.seeds.controller, cfg.controller_collect);
    ctx.event("train-controller", "collect", {{"region", std::to_string(r)}, {"samples", std::to_string(d.size())}});
    data.insert(data.end(), std::make_move_iterator(d.begin()), std::make_move_iterator(d.end()));
  }
  const ControllerParams init = init_controller(cfg.controller, cfg.seeds.controller);
  const int every = std::max(1, cfg.controller_train.epochs / 10);
  auto res = train_controller(data, init, cfg.controller_train, cfg.seeds.controller, [&](int epoch, double loss) {
    if (epoch % every == 0 || epoch == cfg.controller_train.epochs)
      ctx.event("train-controller", "epoch", {{"epoch", std::to_string(epoch)}, {"loss", fmt_double(loss, 6)}});
  });
  const fs::path dir = ctx.controller_dir();
  std::error_code ec;
  fs::create_directories(dir, ec);
  save_controller(res.params, (dir / "controller.ckpt").string());
  std::string csv = "epoch,loss\n";
  for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) csv += std::to_string(e + 1) + "," + fmt_double(res.epoch_loss[e], 10) + "\n";
  write_text(dir / "loss.csv", csv);
  write_stage_meta(ctx, dir, kControllerScope);
  ctx.event("train-controller", "done", {{"samples", std::to_string(data.size())},
                                         {"final_loss", fmt_double(res.epoch_loss.back(), 6)}});
  return res;
}

inline ControllerParams load_trained_controller(const RunContext& ctx) {
  require_stage(ctx, ctx.controller_dir(), kControllerScope, "train-controller", "trained controller");
  return load_controller((ctx.controller_dir() / "controller.ckpt").string());
}

// ---------------------------------------------------------------------------
// Evaluation stages

inline Report new_report(const RunContext& ctx, const std::string& stage) {
  Report r;
  r.header.emplace_back("stage", stage);
  for (auto& kv : config_pairs(ctx.config)) r.header.push_back(std::move(kv));
  return r;
}

/// Writes the report tables with the resolved config next to them.
inline void emit_stage_report(const RunContext& ctx, const Report& r, const std::string& name) {
  emit_report(r, ctx.reports_dir(), name);
  write_text(ctx.reports_dir() / (name + ".resolved.cfg"), resolved_config(ctx.config));
}

/// Outcome of an acceptance gate from the [eval] section.
struct Gate {
  std::string name;
  double value = 0, bound = 0;
  bool enabled() const { return bound > 0; }
  bool passed() const { return !enabled() || value >= bound; }
};

struct OfflineStage {
  OfflineResult trained, untrained;
  Gate gate;
};

inline OfflineStage stage_eval_offline(const RunContext& ctx) {
  const auto& cfg = ctx.config;
  const World w = load_world(ctx);
  const TrainedDetector det = load_trained_detector(ctx);
  const Dataset test = load_split(ctx, "test");
  const auto tcl = course_laps(w, test);
  const double thr = eval_threshold(ctx, det);
  OfflineStage s;
  s.trained = eval_offline(det.params, prepare_eval(det.params, tcl, {}, cfg.seeds.eval, ctx.jobs), thr, cfg.offline_spec(), ctx.jobs);
  const DetectorParams untrained = init_detector(cfg.detector, cfg.seeds.detector);
  s.untrained = eval_offline(untrained, prepare_eval(untrained, tcl, {}, cfg.seeds.eval, ctx.jobs), thr, cfg.offline_spec(), ctx.jobs);
  s.gate = {"offline_accuracy", s.trained.accuracy(), cfg.eval.gate_offline_accuracy};
  Report r = new_report(ctx, "eval-offline");
  add_offline_cells(r, "offline", s.trained, cfg.seeds.eval);
  add_offline_cells(r, "offline_untrained", s.untrained, cfg.seeds.eval);
  emit_stage_report(ctx, r, "offline");
  ctx.event("eval-offline", "done", {{"threshold", fmt_fixed(thr, 2)}, {"accuracy", fmt_metric(s.trained.accuracy())},
                                     {"untrained_accuracy", fmt_metric(s.untrained.accuracy())},
                                     {"false_positives", std::to_string(s.trained.total.false_positives)},
                                     {"false_negatives", std::to_string(s.trained.total.false_negatives)}});
  return s;
}

inline CorruptionTable stage_corrupt_eval(const RunContext& ctx) {
  const auto& cfg = ctx.config;
  const World w = load_world(ctx);
  const TrainedDetector det = load_trained_detector(ctx);
  const Dataset test = load_split(ctx, "test");
  const CorruptionTable t = eval_corruptions(det.params, course_laps(w, test), eval_threshold(ctx, det), cfg.seeds.eval,
                                             cfg.offline_spec(), ctx.jobs);
  Report r = new_report(ctx, "corrupt-eval");
  add_corruption_cells(r, "corruption", t, cfg.seeds.eval);
  emit_stage_report(ctx, r, "corruption");
  std::vector<std::pair<std::string, std::string>> f{{"clean", fmt_metric(t.clean)}};
  for (Corruption c : kAllCorruptions)
    f.emplace_back(std::string(to_string(c)) + "_severe", fmt_metric(t.at(c, Severity::Severe)));
  ctx.event("corrupt-eval", "done", f);
  return t;
}

inline std::vector<AblationCell> stage_ablate(const RunContext& ctx) {
  const auto& cfg = ctx.config;
  const World w = load_world(ctx);
  const Dataset train = load_split(ctx, "train"), val = load_split(ctx, "val"), test = load_split(ctx, "test");
  AblationInputs in{&train, &val, course_specs(w, val), course_laps(w, test)};
  auto cells = ablation_grid(in, cfg.detector, cfg.phase1, cfg.phase2, cfg.seeds.detector, cfg.seeds.trainer,
                             cfg.offline_spec(), ctx.jobs, [&](const AblationCell& c) {
                               ctx.event("ablate", "cell", {{"metric", std::string(to_string(c.kind.metric))},
                                                            {"form", std::string(to_string(c.kind.form))},
                                                            {"regimen", c.two_phase ? "two-phase" : "phase-1-only"},
                                                            {"val_accuracy", fmt_metric(c.val_accuracy)},
                                                            {"threshold", fmt_fixed(c.threshold, 2)},
                                                            {"test_accuracy", fmt_metric(c.test_accuracy)}});
                             });
  Report r = new_report(ctx, "ablate");
  add_ablation_cells(r, "ablation", cells, cfg.seeds.trainer);
  emit_stage_report(ctx, r, "ablation");
  return cells;
}

struct OnlineStage {
  double threshold = 0;
  OnlineResult main;
  std::vector<std::pair<double, OnlineResult>> compare;
  Gate gate;
};

inline std::string online_table_name(double thr) { return "online@" + fmt_fixed(thr, 2); }

inline OnlineStage stage_eval_online(const RunContext& ctx) {
  const auto& cfg = ctx.config;
  const World w = load_world(ctx);
  const TrainedDetector det = load_trained_detector(ctx);
  const ControllerParams ctl = load_trained_controller(ctx);
  const Dataset test = load_split(ctx, "test");
  std::vector<CourseLaps> courses = course_laps(w, test);
  Dataset lng;
  if (cfg.world.long_course) {
    lng = load_split(ctx, "long");
    for (auto& c : course_laps(w, lng)) courses.push_back(std::move(c));
  }
  OnlineStage s;
  s.threshold = eval_threshold(ctx, det);
  const OnlineSpec spec = cfg.online_spec();
  const int plen = cfg.dataset.segments.positive_len;
  s.main = eval_online(w, courses, det.params, ctl, s.threshold, cfg.seeds.eval, spec, plen, ctx.jobs);
  Report r = new_report(ctx, "eval-online");
  add_online_cells(r, "online", s.main, cfg.seeds.eval, s.threshold);
  ctx.event("eval-online", "run", {{"threshold", fmt_fixed(s.threshold, 2)},
                                   {"waypoints", std::to_string(s.main.waypoint_successes()) + "/" +
                                                     std::to_string(s.main.waypoint_attempts())},
                                   {"courses", std::to_string(s.main.course_successes()) + "/" +
                                                   std::to_string(s.main.course_attempts())}});
  OnlineSpec cspec = spec;
  cspec.memory_laps = cfg.eval.compare_memory_laps;
  cspec.repeats = cfg.eval.compare_repeats;
  for (double thr : cfg.eval.compare_thresholds) {
    OnlineResult res = eval_online(w, courses, det.params, ctl, thr, cfg.seeds.eval, cspec, plen, ctx.jobs);
    add_online_cells(r, online_table_name(thr), res, cfg.seeds.eval, thr);
    ctx.event("eval-online", "compare", {{"threshold", fmt_fixed(thr, 2)},
                                         {"waypoints", std::to_string(res.waypoint_successes()) + "/" +
                                                           std::to_string(res.waypoint_attempts())}});
    s.compare.emplace_back(thr, std::move(res));
  }
  emit_stage_report(ctx, r, "online");
  const double rate = s.main.waypoint_attempts() ? double(s.main.waypoint_successes()) / s.main.waypoint_attempts() : 0.0;
  s.gate = {"online_waypoint_rate", rate, cfg.eval.gate_online_waypoint_rate};
  return s;
}

// ---------------------------------------------------------------------------
// Full chain

struct ReproduceResult {
  DetectorTraining detector;
  OfflineStage offline;
  CorruptionTable corruption;
  std::vector<AblationCell> ablation;
  OnlineStage online;
  std::vector<Gate> gates;

  bool gates_passed() const {
    for (const auto& g : gates)
      if (!g.passed()) return false;
    return true;
  }
};

inline Report gate_report(const RunContext& ctx, const std::vector<Gate>& gates) {
  Report r = new_report(ctx, "summary");
  for (const auto& g : gates) {
    r.cells.push_back({"gates", g.name, "value", g.value, ctx.config.seeds.eval, 0});
    r.cells.push_back({"gates", g.name, "bound", g.bound, ctx.config.seeds.eval, 0});
    r.cells.push_back({"gates", g.name, "passed", g.passed() ? 1.0 : 0.0, ctx.config.seeds.eval, 0});
  }
  return r;
}

inline void log_gates(const RunContext& ctx, const std::string& stage, const std::vector<Gate>& gates) {
  for (const auto& g : gates)
    if (g.enabled())
      ctx.event(stage, "gate", {{"name", g.name}, {"value", fmt_metric(g.value)}, {"bound", fmt_metric(g.bound)},
                                {"passed", g.passed() ? "true" : "false"}});
}

inline ReproduceResult stage_reproduce_all(const RunContext& ctx) {
  ReproduceResult r;
  stage_gen_world(ctx);
  stage_collect(ctx);
  r.detector = stage_train_detector(ctx);
  stage_train_controller(ctx);
  r.offline = stage_eval_offline(ctx);
  r.corruption = stage_corrupt_eval(ctx);
  r.ablation = stage_ablate(ctx);
  r.online = stage_eval_online(ctx);
  r.gates = {r.offline.gate, r.online.gate};
  emit_stage_report(ctx, gate_report(ctx, r.gates), "summary");
  log_gates(ctx, "reproduce-all", r.gates);
  return r;
}

}  // namespace waynav
