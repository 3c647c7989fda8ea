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

#pragma once

#include <deque>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "waynav/datastore.hpp"
#include "waynav/distmetrics.hpp"
#include "waynav/embednet.hpp"
#include "waynav/worldsim.hpp"

namespace waynav {

/// Per-camera combination of consecutive frame embeddings.
inline FrameEmbedding combine_frames(std::span<const FrameEmbedding> frames) {
  if (frames.empty()) throw Error("metric", "combine_frames: no frames");
  std::vector<GaussianDiag> l, r;
  l.reserve(frames.size());
  r.reserve(frames.size());
  for (const auto& f : frames) {
    l.push_back(f.left);
    r.push_back(f.right);
  }
  return {combine(l), combine(r)};
}

inline std::vector<FrameEmbedding> embed_lap(const DetectorParams& p, const Lap& lap) {
  const int n = int(lap.frames.size());
  if (n == 0) return {};
  const int dim = p.config.input_dim();
  std::vector<FrameEmbedding> out;
  out.reserve(std::size_t(n));
  const int chunk = 256;
  for (int s = 0; s < n; s += chunk) {
    const int e = std::min(n, s + chunk);
    Mat X(dim, 2 * (e - s));
    for (int t = s; t < e; ++t) {
      const auto& f = lap.frames[std::size_t(t)];
      if (int(f.raster_left.size()) != dim || int(f.raster_right.size()) != dim)
        throw Error("dimension", "lap raster size does not match the detector");
      for (int i = 0; i < dim; ++i) {
        X(i, 2 * (t - s)) = f.raster_left.px[std::size_t(i)];
        X(i, 2 * (t - s) + 1) = f.raster_right.px[std::size_t(i)];
      }
    }
    auto emb = embed_fixed_batch(p, fixed_features(p, X));
    for (auto& e2 : emb) out.push_back(std::move(e2));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Memory

struct MemoryBank {
  std::vector<int> waypoint_ids;                     // route order
  std::vector<std::vector<FrameEmbedding>> slots;    // aligned with waypoint_ids

  std::size_t size() const { return waypoint_ids.size(); }
  const std::vector<FrameEmbedding>& slots_for(int waypoint_id) const {
    for (std::size_t k = 0; k < waypoint_ids.size(); ++k)
      if (waypoint_ids[k] == waypoint_id) return slots[k];
    throw Error("navigator", "memory has no waypoint " + std::to_string(waypoint_id));
  }
};

struct ActionLUT {
  std::vector<std::pair<int, Action>> entries;

  Action at(int waypoint_id) const {
    for (const auto& [id, a] : entries)
      if (id == waypoint_id) return a;
    throw Error("navigator", "action table has no waypoint " + std::to_string(waypoint_id));
  }
};

/// Slots are all n_q-frame windows sliding over each waypoint's positive
/// segment of the teaching lap.
inline std::pair<MemoryBank, ActionLUT> build_memory(const Lap& lap, std::span<const FrameEmbedding> emb,
                                                     const CourseSpec& course, int n_q = 10) {
  if (emb.size() != lap.frames.size()) throw Error("navigator", "embedding count does not match the lap");
  if (n_q < 1) throw Error("navigator", "n_q must be >= 1");
  const auto segs = lap_segments(lap);
  MemoryBank bank;
  ActionLUT lut;
  for (const auto& wp : course.route) {
    const WaypointSegments* ws = nullptr;
    for (const auto& s : segs)
      if (s.waypoint == wp.id) ws = &s;
    if (!ws || ws->positive.length() <= 0)
      throw Error("navigator", "teaching lap has no positive segment for waypoint " + std::to_string(wp.id));
    if (ws->positive.length() < n_q)
      throw Error("navigator", "positive window of waypoint " + std::to_string(wp.id) + " has " +
                                   std::to_string(ws->positive.length()) + " frames, fewer than n_q=" + std::to_string(n_q));
    std::vector<FrameEmbedding> slots;
    for (int s = ws->positive.begin; s + n_q <= ws->positive.end; ++s)
      slots.push_back(combine_frames(emb.subspan(std::size_t(s), std::size_t(n_q))));
    bank.waypoint_ids.push_back(wp.id);
    bank.slots.push_back(std::move(slots));
    lut.entries.emplace_back(wp.id, wp.action);
  }
  return {std::move(bank), std::move(lut)};
}

inline std::pair<MemoryBank, ActionLUT> build_memory(const Lap& lap, const DetectorParams& p, const CourseSpec& course,
                                                     int n_q = 10) {
  const auto emb = embed_lap(p, lap);
  return build_memory(lap, emb, course, n_q);
}

/// Maximum match probability of a query over a waypoint's slots.
inline double max_slot_probability(const DetectorParams& p, const FrameEmbedding& query,
                                   const std::vector<FrameEmbedding>& slots) {
  if (slots.empty()) return 0.0;
  const MetricKind& kind = p.kind();
  const Eigen::Index half = dissim_size(kind.form, p.config.embed_dim);
  Mat X(2 * half, Eigen::Index(slots.size()));
  for (std::size_t k = 0; k < slots.size(); ++k)
    X.col(Eigen::Index(k)) = classifier_input({query.left, slots[k].left}, {query.right, slots[k].right}, kind);
  ClassifierCache c;
  classifier_forward(p, X, c);
  return c.A[4].maxCoeff();
}

// Memory file: text index at `path`, float payload at `path`.bin.
//   waynav-memory 1
//   embed_dim <D>
//   waypoints <N>
//   <id> <action> <slots>      (N lines)
// Payload per slot: left mean, left var, right mean, right var.
inline void save_memory(const MemoryBank& bank, const ActionLUT& lut, const std::string& path) {
  std::ofstream idx(path);
  if (!idx) throw Error("format", "cannot write " + path);
  const Eigen::Index d = bank.slots.empty() || bank.slots[0].empty() ? 0 : bank.slots[0][0].left.dim();
  idx << "waynav-memory 1\nembed_dim " << d << "\nwaypoints " << bank.size() << "\n";
  std::ofstream bin(path + ".bin", std::ios::binary);
  std::vector<float> buf(static_cast<std::size_t>(d));
  auto put = [&](const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < d; ++i) buf[std::size_t(i)] = float(v[i]);
    write_f32_le(bin, buf.data(), buf.size());
  };
  for (std::size_t k = 0; k < bank.size(); ++k) {
    idx << bank.waypoint_ids[k] << ' ' << to_string(lut.at(bank.waypoint_ids[k])) << ' ' << bank.slots[k].size() << "\n";
    for (const auto& s : bank.slots[k]) put(s.left.mean), put(s.left.var), put(s.right.mean), put(s.right.var);
  }
  if (!idx || !bin) throw Error("format", "write failed for " + path);
}

inline std::pair<MemoryBank, ActionLUT> load_memory(const std::string& path) {
  std::ifstream idx(path);
  if (!idx) throw Error("dependency", "memory file " + path + " not found");
  std::string magic, key;
  int version = 0;
  long d = 0, n = 0;
  if (!(idx >> magic >> version) || magic != "waynav-memory" || version != 1) throw Error("format", path + ": not a memory file");
  if (!(idx >> key >> d) || key != "embed_dim" || !(idx >> key >> n) || key != "waypoints" || d < 0 || n < 0)
    throw Error("format", path + ": malformed header");
  std::ifstream bin(path + ".bin", std::ios::binary);
  std::vector<float> buf(static_cast<std::size_t>(d));
  auto get = [&]() {
    if (!read_f32_le(bin, buf.data(), buf.size())) throw Error("format", path + ".bin: truncated");
    Eigen::VectorXd v(d);
    for (long i = 0; i < d; ++i) v[i] = buf[std::size_t(i)];
    return v;
  };
  MemoryBank bank;
  ActionLUT lut;
  for (long k = 0; k < n; ++k) {
    int id = 0;
    std::string act;
    long slots = 0;
    if (!(idx >> id >> act >> slots) || slots < 0) throw Error("format", path + ": malformed waypoint line");
    bank.waypoint_ids.push_back(id);
    lut.entries.emplace_back(id, parse_action(act));
    std::vector<FrameEmbedding> ss;
    for (long s = 0; s < slots; ++s) {
      FrameEmbedding e;
      e.left.mean = get(), e.left.var = get(), e.right.mean = get(), e.right.var = get();
      ss.push_back(std::move(e));
    }
    bank.slots.push_back(std::move(ss));
  }
  return {std::move(bank), std::move(lut)};
}

// ---------------------------------------------------------------------------
// Navigation state machine

struct NavConfig {
  int n_q = 10;
  double threshold = 0.65;
  int refractory = 10;        // frames after a detection during which no detection fires
  bool auto_revert = true;    // return to Straight once a turn has been completed
  double revert_threshold = 0.15;
  int revert_frames = 3;
  bool hold_during_turn = true;  // no comparisons while a latched turn is executing
};

struct Detection {
  int waypoint_id = 0;
  int route_index = 0;
  Action action = Action::Straight;
  double probability = 0;
};

class Navigator {
 public:
  Navigator(const MemoryBank& bank, const ActionLUT& lut, const DetectorParams& params, NavConfig cfg = {})
      : bank_(&bank), lut_(&lut), params_(&params), cfg_(cfg) {
    if (cfg_.n_q < 1) throw Error("navigator", "n_q must be >= 1");
  }

  void push_frame(FrameEmbedding e) {
    ring_.push_back(std::move(e));
    while (int(ring_.size()) > cfg_.n_q) ring_.pop_front();
    if (refractory_ > 0) --refractory_;
  }

  /// Match probability against the upcoming waypoint, or nullopt when the
  /// ring is not yet full or the course is complete.
  std::optional<double> upcoming_probability() const {
    if (int(ring_.size()) < cfg_.n_q || upcoming_ >= int(bank_->size())) return std::nullopt;
    const std::vector<FrameEmbedding> frames(ring_.begin(), ring_.end());
    const FrameEmbedding q = combine_frames(frames);
    ++comparisons_;
    last_compared_ = upcoming_;
    return max_slot_probability(*params_, q, bank_->slots[std::size_t(upcoming_)]);
  }

  std::optional<Detection> detect() {
    if (refractory_ > 0) return std::nullopt;
    if (cfg_.hold_during_turn && cfg_.auto_revert && latched_ != Action::Straight) return std::nullopt;
    const auto p = upcoming_probability();
    if (!p || !(*p > cfg_.threshold)) return std::nullopt;
    Detection d;
    d.route_index = upcoming_;
    d.waypoint_id = bank_->waypoint_ids[std::size_t(upcoming_)];
    d.action = lut_->at(d.waypoint_id);
    d.probability = *p;
    latched_ = d.action;
    ++upcoming_;
    refractory_ = cfg_.refractory;
    turn_seen_ = 0;
    centered_ = 0;
    turning_ = false;
    return d;
  }

  /// Feeds the executed steering back so a completed turn reverts the
  /// latched action to Straight.
  void observe_steering(double steering) {
    if (!cfg_.auto_revert || latched_ == Action::Straight) return;
    const bool off = std::fabs(steering - 0.5) > cfg_.revert_threshold;
    if (!turning_) {
      turn_seen_ = off ? turn_seen_ + 1 : 0;
      if (turn_seen_ >= cfg_.revert_frames) turning_ = true;
    } else {
      centered_ = off ? 0 : centered_ + 1;
      if (centered_ >= cfg_.revert_frames) {
        latched_ = Action::Straight;
        turning_ = false;
        turn_seen_ = centered_ = 0;
        if (cfg_.hold_during_turn) refractory_ = cfg_.n_q;
      }
    }
  }

  Action current_action() const { return latched_; }
  int upcoming() const { return upcoming_; }
  std::size_t ring_size() const { return ring_.size(); }
  const std::deque<FrameEmbedding>& ring() const { return ring_; }
  bool complete() const { return upcoming_ >= int(bank_->size()); }
  int last_compared() const { return last_compared_; }
  long long comparisons() const { return comparisons_; }
  const NavConfig& config() const { return cfg_; }

  /// Manual recovery after a missed waypoint.
  void skip_to(int route_index) {
    if (route_index < upcoming_) throw Error("navigator", "upcoming waypoint cannot move backwards");
    upcoming_ = route_index;
  }
  void reset_action() {
    latched_ = Action::Straight;
    turning_ = false;
    turn_seen_ = centered_ = 0;
  }
  void clear_ring() {
    ring_.clear();
    refractory_ = 0;
  }

 private:
  const MemoryBank* bank_;
  const ActionLUT* lut_;
  const DetectorParams* params_;
  NavConfig cfg_;
  std::deque<FrameEmbedding> ring_;
  int upcoming_ = 0;
  int refractory_ = 0;
  Action latched_ = Action::Straight;
  bool turning_ = false;
  int turn_seen_ = 0, centered_ = 0;
  mutable long long comparisons_ = 0;
  mutable int last_compared_ = -1;
};

}  // namespace waynav
