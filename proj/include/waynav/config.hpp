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

// Pipeline configuration: `key = value` lines grouped under [section]
// headers. Every key is declared in a schema bound to PipelineConfig, so
// unknown keys are rejected and the resolved file lists every default.

#pragma once

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "waynav/controller.hpp"
#include "waynav/evalsuite.hpp"
#include "waynav/trainer.hpp"

namespace waynav {

struct DatasetSpec {
  int train_laps = 4;
  int val_laps = 3;
  int test_laps = 3;
  int long_laps = 3;
  SegmentOptions segments;
};

struct EvalConfig {
  OfflineSpec offline;
  OnlineSpec online;
  std::vector<double> compare_thresholds = {0.5, 0.65};
  int compare_memory_laps = 2;
  int compare_repeats = 2;
  double gate_offline_accuracy = 0.90;      // 0 disables
  double gate_online_waypoint_rate = 0.95;  // 0 disables
};

struct Seeds {
  std::uint64_t world = 0, dataset = 0, detector = 0, trainer = 0, controller = 0, eval = 0;
};

struct PipelineConfig {
  WorldSpec world;
  DatasetSpec dataset;
  DetectorConfig detector;
  TrainHyper phase1 = TrainHyper::phase1();
  TrainHyper phase2 = TrainHyper::phase2();
  ControllerConfig controller;
  ControllerHyper controller_train;
  ControlCollectSpec controller_collect = [] {
    ControlCollectSpec s;
    s.drives_per_region = 12;
    return s;
  }();
  NavConfig navigator;
  std::optional<double> threshold;  // nullopt: validation-chosen
  EvalConfig eval;
  Seeds seeds;

  /// Online evaluation options with the navigator section applied.
  OnlineSpec online_spec() const {
    OnlineSpec s = eval.online;
    s.nav = navigator;
    s.buffer_frames = eval.offline.buffer_before;
    return s;
  }
  OfflineSpec offline_spec() const {
    OfflineSpec s = eval.offline;
    s.n_q = navigator.n_q;
    return s;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& v, const std::string& what) {
  T out{};
  const char* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (v.empty() || r.ec != std::errc() || r.ptr != end)
    throw Error("config", what + ": expected " + (std::is_floating_point_v<T> ? "a number" : "an integer") + ", got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& v, const std::string& what) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error("config", what + ": expected true or false, got '" + v + "'");
}

/// Comma list, or lo:step:hi with inclusive end.
inline std::vector<double> parse_double_list(const std::string& v, const std::string& what) {
  std::vector<double> out;
  if (v.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(v);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(trim(p));
    if (parts.size() != 3) throw Error("config", what + ": range must be lo:step:hi");
    const double lo = parse_number<double>(parts[0], what), step = parse_number<double>(parts[1], what),
                 hi = parse_number<double>(parts[2], what);
    if (!(step > 0) || hi < lo) throw Error("config", what + ": empty range");
    const int n = int(std::floor((hi - lo) / step + 1e-9));
    for (int k = 0; k <= n; ++k) out.push_back(std::round((lo + k * step) * 1e9) / 1e9);
    return out;
  }
  std::stringstream ss(v);
  for (std::string p; std::getline(ss, p, ',');) out.push_back(parse_number<double>(trim(p), what));
  if (out.empty()) throw Error("config", what + ": empty list");
  return out;
}

inline std::string format_double_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt_double(v[i], 12);
  return s;
}

}  // namespace detail

/// One declared key: how to parse into and print from the bound config.
struct ConfigKey {
  std::string section, key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
  bool required = false;
};

class ConfigSchema {
 public:
  static inline const std::vector<std::string> kSections = {"world", "dataset", "detector", "trainer",
                                                            "controller", "navigator", "eval"};

  explicit ConfigSchema(PipelineConfig& c) { bind(c); }

  const std::vector<ConfigKey>& keys() const { return keys_; }

  ConfigKey& find(const std::string& section, const std::string& key) {
    for (auto& k : keys_)
      if (k.section == section && k.key == key) return k;
    throw Error("config", "unknown key '" + key + "' in section [" + section + "]");
  }

 private:
  std::vector<ConfigKey> keys_;
  std::string sec_;

  std::string name(const std::string& k) const { return sec_ + "." + k; }

  void add_int(const std::string& k, int& v) {
    keys_.push_back({sec_, k, [&v, n = name(k)](const std::string& s) { v = detail::parse_number<int>(s, n); },
                     [&v] { return std::to_string(v); }});
  }
  void add_double(const std::string& k, double& v) {
    keys_.push_back({sec_, k, [&v, n = name(k)](const std::string& s) { v = detail::parse_number<double>(s, n); },
                     [&v] { return fmt_double(v, 12); }});
  }
  void add_bool(const std::string& k, bool& v) {
    keys_.push_back({sec_, k, [&v, n = name(k)](const std::string& s) { v = detail::parse_bool(s, n); },
                     [&v] { return std::string(v ? "true" : "false"); }});
  }
  void add_seed(std::uint64_t& v) {
    keys_.push_back({sec_, "seed", [&v, n = name("seed")](const std::string& s) { v = detail::parse_number<std::uint64_t>(s, n); },
                     [&v] { return std::to_string(v); }, true});
  }
  void add_list(const std::string& k, std::vector<double>& v) {
    keys_.push_back({sec_, k, [&v, n = name(k)](const std::string& s) { v = detail::parse_double_list(s, n); },
                     [&v] { return detail::format_double_list(v); }});
  }
  template <class E, class Parse, class Print>
  void add_enum(const std::string& k, E& v, Parse parse, Print print) {
    keys_.push_back({sec_, k,
                     [&v, parse, n = name(k)](const std::string& s) {
                       try {
                         v = parse(s);
                       } catch (const Error& e) {
                         throw Error("config", n + ": " + e.what());
                       }
                     },
                     [&v, print] { return std::string(print(v)); }});
  }

  void add_phase(const std::string& p, TrainHyper& h) {
    add_int(p + "_iterations", h.iterations);
    add_int(p + "_batch_episodes", h.batch_episodes);
    add_double(p + "_lr", h.lr);
    add_int(p + "_lr_halve_every", h.lr_halve_every);
    add_int(p + "_lr_max_halvings", h.lr_max_halvings);
    add_int(p + "_validate_every", h.validate_every);
  }

  void bind(PipelineConfig& c) {
    sec_ = "world";
    auto& w = c.world;
    add_seed(c.seeds.world);
    add_int("corridor_width", w.corridor_width);
    add_int("block_size", w.block_size);
    add_int("region_nodes", w.region_nodes);
    add_int("long_region_nodes", w.long_region_nodes);
    add_int("train_courses", w.train_courses);
    add_int("val_courses", w.val_courses);
    add_int("test_courses", w.test_courses);
    add_bool("long_course", w.long_course);
    add_int("course_waypoints", w.course_waypoints);
    add_int("long_waypoints", w.long_waypoints);
    add_int("landmark_reach", w.landmark_reach);
    add_int("camera_height", w.camera.height);
    add_int("camera_width", w.camera.width);
    add_double("camera_yaw_deg", w.camera.yaw_deg);
    add_double("camera_fov_deg", w.camera.fov_deg);
    add_double("wall_height", w.camera.wall_height);
    add_double("render_noise", w.camera.noise_sigma);
    add_double("speed", w.vehicle.speed);
    add_double("dt", w.vehicle.dt);
    add_double("wheelbase", w.vehicle.wheelbase);
    add_double("max_steer_deg", w.vehicle.max_steer_deg);
    add_double("vehicle_radius", w.vehicle.radius);
    add_double("expert_lookahead", w.expert.lookahead_cells);
    add_double("driver_noise", w.expert.driver_noise);
    add_double("start_lateral", w.expert.start_lateral);
    add_double("start_heading_deg", w.expert.start_heading_deg);
    add_double("start_along", w.expert.start_along);

    sec_ = "dataset";
    add_seed(c.seeds.dataset);
    add_int("train_laps", c.dataset.train_laps);
    add_int("val_laps", c.dataset.val_laps);
    add_int("test_laps", c.dataset.test_laps);
    add_int("long_laps", c.dataset.long_laps);
    add_int("positive_len", c.dataset.segments.positive_len);
    add_double("turn_threshold", c.dataset.segments.turn_threshold);
    add_int("onset_frames", c.dataset.segments.onset_frames);

    sec_ = "detector";
    auto& d = c.detector;
    add_seed(c.seeds.detector);
    add_int("feature_dim", d.feature_dim);
    add_int("embed_dim", d.embed_dim);
    add_int("cov_hidden", d.cov_hidden);
    add_int("classifier_hidden_1", d.classifier_hidden[0]);
    add_int("classifier_hidden_2", d.classifier_hidden[1]);
    add_int("classifier_hidden_3", d.classifier_hidden[2]);
    add_double("var_floor", d.var_floor);
    add_double("projection_scale", d.projection_scale);
    add_double("projection_bias", d.projection_bias);
    add_enum("metric", d.kind.metric, parse_metric, [](Metric m) { return to_string(m); });
    add_enum("form", d.kind.form, parse_form, [](InputForm f) { return to_string(f); });
    add_enum("kl_direction", d.kind.kl, parse_kl_direction, [](KlDirection k) { return to_string(k); });

    sec_ = "trainer";
    add_seed(c.seeds.trainer);
    add_int("shots", c.phase1.episode.shots);
    add_int("positive_queries", c.phase1.episode.positive_queries);
    add_int("negative_queries", c.phase1.episode.negative_queries);
    add_int("augment_variants", c.phase1.augment_variants);
    add_double("rotation_deg", c.phase1.transforms.rotation_deg);
    add_double("brightness", c.phase1.transforms.brightness);
    add_double("contrast", c.phase1.transforms.contrast);
    add_int("dropout_max_holes", c.phase1.transforms.dropout_max_holes);
    add_int("dropout_max_size", c.phase1.transforms.dropout_max_size);
    add_list("thresholds", c.phase1.thresholds);
    add_phase("phase1", c.phase1);
    add_phase("phase2", c.phase2);

    sec_ = "controller";
    auto& k = c.controller;
    add_seed(c.seeds.controller);
    keys_.push_back({sec_, "steering_convention",
                     [](const std::string& s) {
                       if (s != "left-high") throw Error("config", "controller.steering_convention: only left-high is supported");
                     },
                     [] { return std::string("left-high"); }});
    add_int("projection_dim", k.projection_dim);
    add_int("feature_dim", k.feature_dim);
    add_int("hidden", k.hidden);
    add_double("projection_scale", k.projection_scale);
    add_double("projection_bias", k.projection_bias);
    add_double("output_init_gain", k.output_init_gain);
    add_int("epochs", c.controller_train.epochs);
    add_int("batch", c.controller_train.batch);
    add_double("lr", c.controller_train.lr);
    add_int("augment_variants", c.controller_train.augment_variants);
    add_double("augment_brightness", c.controller_train.augment.brightness);
    add_double("augment_contrast", c.controller_train.augment.contrast);
    add_double("augment_blur_max_sigma", c.controller_train.augment.blur_max_sigma);
    add_double("augment_blur_probability", c.controller_train.augment.blur_probability);
    add_int("drives_per_region", c.controller_collect.drives_per_region);
    add_int("drive_frames", c.controller_collect.drive_frames);
    add_double("activation_min", c.controller_collect.activation_min);
    add_double("activation_max", c.controller_collect.activation_max);
    add_double("exec_noise", c.controller_collect.exec_noise);
    add_double("revert_threshold", c.controller_collect.revert_threshold);
    add_int("revert_frames", c.controller_collect.revert_frames);

    sec_ = "navigator";
    auto& n = c.navigator;
    add_int("n_q", n.n_q);
    keys_.push_back({sec_, "threshold",
                     [&c](const std::string& s) {
                       if (s == "auto") c.threshold.reset();
                       else c.threshold = detail::parse_number<double>(s, "navigator.threshold");
                     },
                     [&c] { return c.threshold ? fmt_double(*c.threshold, 12) : std::string("auto"); }});
    add_int("refractory", n.refractory);
    add_bool("auto_revert", n.auto_revert);
    add_double("revert_threshold", n.revert_threshold);
    add_int("revert_frames", n.revert_frames);
    add_bool("hold_during_turn", n.hold_during_turn);

    sec_ = "eval";
    auto& e = c.eval;
    add_seed(c.seeds.eval);
    add_int("buffer_before", e.offline.buffer_before);
    add_int("buffer_after", e.offline.buffer_after);
    add_int("memory_laps", e.online.memory_laps);
    add_int("repeats", e.online.repeats);
    add_double("exit_travel_widths", e.online.exit_travel_widths);
    add_double("off_route_widths", e.online.off_route_widths);
    add_list("compare_thresholds", e.compare_thresholds);
    add_int("compare_memory_laps", e.compare_memory_laps);
    add_int("compare_repeats", e.compare_repeats);
    add_double("gate_offline_accuracy", e.gate_offline_accuracy);
    add_double("gate_online_waypoint_rate", e.gate_online_waypoint_rate);
  }
};

/// Phase-2 options shared with phase 1 (episode layout, augmentation,
/// threshold grid) are declared once under [trainer].
inline void sync_shared_trainer_keys(PipelineConfig& c) {
  c.phase1.phase = 1;
  c.phase2.phase = 2;
  c.phase2.episode = c.phase1.episode;
  c.phase2.augment_variants = c.phase1.augment_variants;
  c.phase2.transforms = c.phase1.transforms;
  c.phase2.thresholds = c.phase1.thresholds;
}

inline void validate_config(PipelineConfig& c) {
  sync_shared_trainer_keys(c);
  c.phase1.check();
  c.phase2.check();
  const auto& d = c.dataset;
  if (d.train_laps < 2 || d.val_laps < 2 || d.test_laps < 2)
    throw Error("config", "dataset: train, val and test splits need at least 2 laps per course");
  if (c.world.long_course && d.long_laps < 2) throw Error("config", "dataset.long_laps must be >= 2");
  if (c.eval.online.memory_laps < 1 || c.eval.online.memory_laps > d.test_laps)
    throw Error("config", "eval.memory_laps must be between 1 and dataset.test_laps");
  if (c.world.long_course && c.eval.online.memory_laps > d.long_laps)
    throw Error("config", "eval.memory_laps exceeds dataset.long_laps");
  if (c.eval.compare_memory_laps < 1 || c.eval.compare_memory_laps > c.eval.online.memory_laps)
    throw Error("config", "eval.compare_memory_laps must be between 1 and eval.memory_laps");
  if (c.eval.online.repeats < 1 || c.eval.compare_repeats < 1) throw Error("config", "eval repeats must be >= 1");
  if (c.navigator.n_q < 1 || c.navigator.n_q > d.segments.positive_len)
    throw Error("config", "navigator.n_q must be between 1 and dataset.positive_len");
  if (c.eval.offline.buffer_before < 0 || c.eval.offline.buffer_after < 0)
    throw Error("config", "eval buffers must be >= 0");
  if (c.eval.offline.buffer_before != c.eval.offline.buffer_after)
    throw Error("config", "eval.buffer_before and eval.buffer_after must match (online windows are symmetric)");
  if (c.threshold && !(*c.threshold > 0 && *c.threshold < 1)) throw Error("config", "navigator.threshold must be in (0,1) or auto");
  if (c.controller_collect.drives_per_region < 1) throw Error("config", "controller.drives_per_region must be >= 1");
}

struct ParsedConfig {
  PipelineConfig config;
  std::set<std::string> seen;  // "section.key" present in the input
};

/// Applies one `key = value` assignment; `where` prefixes error messages.
inline void apply_assignment(ConfigSchema& schema, std::set<std::string>& seen, const std::string& section,
                             const std::string& key, const std::string& value, const std::string& where) {
  try {
    schema.find(section, key).set(value);
  } catch (const Error& e) {
    throw Error("config", where + e.what());
  }
  seen.insert(section + "." + key);
}

/// Parses config text. Seeds must be present unless `seed_override` is set.
inline PipelineConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {},
                                   std::optional<std::uint64_t> seed_override = {}, const std::string& origin = "config") {
  PipelineConfig c;
  ConfigSchema schema(c);
  std::set<std::string> seen;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    const auto hash = line.find_first_of("#;");
    const std::string t = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw Error("config", where + "malformed section header '" + t + "'");
      section = detail::trim(t.substr(1, t.size() - 2));
      if (std::find(ConfigSchema::kSections.begin(), ConfigSchema::kSections.end(), section) == ConfigSchema::kSections.end())
        throw Error("config", where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw Error("config", where + "expected 'key = value', got '" + t + "'");
    if (section.empty()) throw Error("config", where + "key outside any section");
    const std::string key = detail::trim(t.substr(0, eq)), value = detail::trim(t.substr(eq + 1));
    if (seen.count(section + "." + key)) throw Error("config", where + "duplicate key " + section + "." + key);
    apply_assignment(schema, seen, section, key, value, where);
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('='), dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw Error("config", "override '" + o + "' must look like section.key=value");
    apply_assignment(schema, seen, detail::trim(o.substr(0, dot)), detail::trim(o.substr(dot + 1, eq - dot - 1)),
                     detail::trim(o.substr(eq + 1)), "override '" + o + "': ");
  }
  if (seed_override) {
    auto& s = c.seeds;
    s.world = s.dataset = s.detector = s.trainer = s.controller = s.eval = *seed_override;
  } else {
    for (const auto& k : schema.keys())
      if (k.required && !seen.count(k.section + "." + k.key))
        throw Error("config", origin + ": missing required key " + k.section + "." + k.key + " (or pass --seed)");
  }
  validate_config(c);
  return c;
}

inline PipelineConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {},
                                  std::optional<std::uint64_t> seed_override = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("config", "cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides, seed_override, path);
}

/// Every key with its effective value, in schema order.
inline std::string resolved_config(const PipelineConfig& cfg) {
  PipelineConfig c = cfg;
  ConfigSchema schema(c);
  std::string out = "# resolved waynav configuration\n";
  std::string section;
  for (const auto& k : schema.keys()) {
    if (k.section != section) {
      section = k.section;
      out += "\n[" + section + "]\n";
    }
    out += k.key + " = " + k.get() + "\n";
  }
  return out;
}

/// (section.key, value) pairs for report headers.
inline std::vector<std::pair<std::string, std::string>> config_pairs(const PipelineConfig& cfg) {
  PipelineConfig c = cfg;
  ConfigSchema schema(c);
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : schema.keys()) out.emplace_back(k.section + "." + k.key, k.get());
  return out;
}

}  // namespace waynav
