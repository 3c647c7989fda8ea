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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "waynav/core.hpp"
#include "waynav/worldsim.hpp"

namespace waynav {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Lap files: <root>/course_<id>/lap_<id>.manifest + .rasters
//
// The manifest is line based:
//   waynav-lap 1
//   course_id <int>
//   lap_id <int>
//   height <int>
//   width <int>
//   frames <int>
//   <index> <steering> <P|N|U> <waypoint>      (one line per frame)
// The raster file holds little-endian float32 values, frame-major; each frame
// is the left raster followed by the right raster, row-major.

inline fs::path lap_manifest_path(const fs::path& root, int course_id, int lap_id) {
  return root / ("course_" + std::to_string(course_id)) / ("lap_" + std::to_string(lap_id) + ".manifest");
}

inline fs::path save_lap(const Lap& lap, const fs::path& root) {
  const fs::path manifest = lap_manifest_path(root, lap.course_id, lap.lap_id);
  std::error_code ec;
  fs::create_directories(manifest.parent_path(), ec);
  int h = 0, w = 0;
  if (!lap.frames.empty()) {
    h = lap.frames.front().raster_left.height;
    w = lap.frames.front().raster_left.width;
  }
  std::ofstream m(manifest, std::ios::binary);
  if (!m) throw Error("format", "cannot write " + manifest.string());
  m << "waynav-lap 1\n"
    << "course_id " << lap.course_id << "\n"
    << "lap_id " << lap.lap_id << "\n"
    << "height " << h << "\n"
    << "width " << w << "\n"
    << "frames " << lap.frames.size() << "\n";
  for (const auto& f : lap.frames) {
    const char k = f.label.kind == Label::Kind::Positive ? 'P' : f.label.kind == Label::Kind::Negative ? 'N' : 'U';
    m << f.frame_index << ' ' << fmt_double(f.steering) << ' ' << k << ' ' << f.label.waypoint << "\n";
  }
  fs::path rpath = manifest;
  rpath.replace_extension(".rasters");
  std::ofstream r(rpath, std::ios::binary);
  if (!r) throw Error("format", "cannot write " + rpath.string());
  for (const auto& f : lap.frames) {
    if (f.raster_left.height != h || f.raster_left.width != w || f.raster_right.height != h ||
        f.raster_right.width != w)
      throw Error("format", "lap has rasters of inconsistent size");
    write_f32_le(r, f.raster_left.px.data(), f.raster_left.size());
    write_f32_le(r, f.raster_right.px.data(), f.raster_right.size());
  }
  if (!m || !r) throw Error("format", "write failed for " + manifest.string());
  return manifest;
}

inline Lap load_lap(const fs::path& manifest) {
  std::ifstream m(manifest);
  if (!m) throw Error("format", "cannot open " + manifest.string());
  auto expect = [&](const char* key) {
    std::string k;
    long long v;
    if (!(m >> k >> v) || k != key) throw Error("format", manifest.string() + ": malformed manifest, expected '" + key + "'");
    return v;
  };
  std::string magic;
  int version = 0;
  if (!(m >> magic >> version) || magic != "waynav-lap" || version != 1)
    throw Error("format", manifest.string() + ": not a waynav lap manifest");
  Lap lap;
  lap.course_id = int(expect("course_id"));
  lap.lap_id = int(expect("lap_id"));
  const int h = int(expect("height"));
  const int w = int(expect("width"));
  const long long n = expect("frames");
  if (h < 0 || w < 0 || n < 0) throw Error("format", manifest.string() + ": negative size");
  lap.frames.resize(std::size_t(n));
  for (long long t = 0; t < n; ++t) {
    auto& f = lap.frames[std::size_t(t)];
    std::string steer, kind;
    if (!(m >> f.frame_index >> steer >> kind >> f.label.waypoint))
      throw Error("format", manifest.string() + ": malformed frame line " + std::to_string(t));
    f.steering = std::stod(steer);
    if (kind == "P") f.label.kind = Label::Kind::Positive;
    else if (kind == "N") f.label.kind = Label::Kind::Negative;
    else if (kind == "U") f.label.kind = Label::Kind::Unlabeled;
    else throw Error("format", manifest.string() + ": bad label '" + kind + "'");
    if (f.frame_index != t) throw Error("format", manifest.string() + ": frame indices must increase from 0");
  }
  fs::path rpath = manifest;
  rpath.replace_extension(".rasters");
  std::error_code ec;
  const auto bytes = fs::file_size(rpath, ec);
  const std::uintmax_t want = std::uintmax_t(n) * 2 * std::uintmax_t(h) * std::uintmax_t(w) * 4;
  if (ec) throw Error("format", "missing raster file " + rpath.string());
  if (bytes != want)
    throw Error("format", rpath.string() + ": size mismatch (" + std::to_string(bytes) + " bytes, manifest implies " + std::to_string(want) + ")");
  std::ifstream r(rpath, std::ios::binary);
  for (auto& f : lap.frames) {
    f.raster_left = Raster(h, w);
    f.raster_right = Raster(h, w);
    if (!read_f32_le(r, f.raster_left.px.data(), f.raster_left.size()) ||
        !read_f32_le(r, f.raster_right.px.data(), f.raster_right.size()))
      throw Error("format", rpath.string() + ": truncated");
  }
  return lap;
}

// ---------------------------------------------------------------------------
// Datasets

struct CourseData {
  int course_id = 0;
  std::vector<Lap> laps;
};

struct Dataset {
  std::vector<CourseData> courses;

  std::size_t frame_count() const {
    std::size_t n = 0;
    for (const auto& c : courses)
      for (const auto& l : c.laps) n += l.frames.size();
    return n;
  }
};

inline void save_dataset(const Dataset& ds, const fs::path& root) {
  for (const auto& c : ds.courses)
    for (const auto& l : c.laps) save_lap(l, root);
}

/// Loads every course_<id> directory under root whose id is listed (all when empty).
inline Dataset load_dataset(const fs::path& root, const std::vector<int>& course_ids = {}) {
  if (!fs::is_directory(root)) throw Error("dependency", "dataset directory " + root.string() + " does not exist (run `collect` first)");
  std::vector<int> ids = course_ids;
  if (ids.empty()) {
    for (const auto& e : fs::directory_iterator(root)) {
      const std::string name = e.path().filename().string();
      if (e.is_directory() && name.rfind("course_", 0) == 0) ids.push_back(std::stoi(name.substr(7)));
    }
    std::sort(ids.begin(), ids.end());
  }
  Dataset ds;
  for (int id : ids) {
    CourseData cd;
    cd.course_id = id;
    const fs::path dir = root / ("course_" + std::to_string(id));
    if (!fs::is_directory(dir)) throw Error("dependency", "dataset has no course " + std::to_string(id));
    std::vector<int> lap_ids;
    for (const auto& e : fs::directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      if (e.path().extension() == ".manifest" && name.rfind("lap_", 0) == 0)
        lap_ids.push_back(std::stoi(name.substr(4)));
    }
    std::sort(lap_ids.begin(), lap_ids.end());
    for (int lid : lap_ids) cd.laps.push_back(load_lap(lap_manifest_path(root, id, lid)));
    ds.courses.push_back(std::move(cd));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Label segments

struct FrameRange {
  int begin = 0, end = 0;  // [begin, end)
  int length() const { return end - begin; }
};

struct WaypointSegments {
  int waypoint = 0;
  FrameRange positive;
  std::vector<FrameRange> negatives;  // contiguous negative runs
};

/// Positive range and negative runs of every waypoint, in first-appearance order.
inline std::vector<WaypointSegments> lap_segments(const Lap& lap) {
  std::vector<WaypointSegments> out;
  auto find = [&](int wp) -> WaypointSegments& {
    for (auto& s : out)
      if (s.waypoint == wp) return s;
    out.push_back({wp, {-1, -1}, {}});
    return out.back();
  };
  const int n = int(lap.frames.size());
  int t = 0;
  while (t < n) {
    const Label lab = lap.frames[std::size_t(t)].label;
    int u = t + 1;
    while (u < n && lap.frames[std::size_t(u)].label == lab) ++u;
    if (lab.kind == Label::Kind::Positive) find(lab.waypoint).positive = {t, u};
    else if (lab.kind == Label::Kind::Negative) find(lab.waypoint).negatives.push_back({t, u});
    t = u;
  }
  // Waypoint order follows the positive segments.
  std::stable_sort(out.begin(), out.end(), [](const WaypointSegments& a, const WaypointSegments& b) {
    return a.positive.begin < b.positive.begin;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Episodes

struct FrameBlock {
  int course = 0;  // index into Dataset::courses
  int lap = 0;     // index into CourseData::laps
  int begin = 0;   // first frame
  int length = 0;
};

struct Episode {
  int waypoint = 0;
  FrameBlock support;
  std::vector<FrameBlock> queries;
  std::vector<int> labels;  // 1 positive, 0 negative, aligned with queries

  int positives() const { return int(std::count(labels.begin(), labels.end(), 1)); }
};

struct EpisodeSpec {
  int shots = 10;  // s: consecutive frames per support/query block
  int positive_queries = 1;
  int negative_queries = 6;
};

/// Random episodes over a labeled training split. Positive queries always
/// come from a different lap than the support.
class EpisodeSampler {
 public:
  EpisodeSampler(const Dataset& ds, EpisodeSpec spec) : ds_(&ds), spec_(spec) {
    if (spec.shots < 1) throw Error("sampler", "s must be >= 1");
    for (int c = 0; c < int(ds.courses.size()); ++c) {
      const auto& cd = ds.courses[std::size_t(c)];
      std::vector<std::vector<WaypointSegments>> segs;
      for (const auto& lap : cd.laps) segs.push_back(lap_segments(lap));
      std::map<int, Candidate> by_wp;
      for (int l = 0; l < int(segs.size()); ++l) {
        for (const auto& ws : segs[std::size_t(l)]) {
          auto& cand = by_wp[ws.waypoint];
          cand.course = c;
          cand.waypoint = ws.waypoint;
          if (ws.positive.length() >= spec.shots) cand.pos.push_back({c, l, ws.positive.begin, ws.positive.length()});
          for (const auto& r : ws.negatives)
            if (r.length() >= spec.shots) cand.neg.push_back({c, l, r.begin, r.length()});
        }
      }
      for (auto& [wp, cand] : by_wp)
        if (cand.pos.size() >= 2 && !cand.neg.empty()) eligible_.push_back(std::move(cand));
    }
  }

  bool empty() const { return eligible_.empty(); }
  std::size_t eligible_waypoints() const { return eligible_.size(); }

  Episode sample(Rng& rng) const {
    if (eligible_.empty())
      throw Error("sampler", "no waypoint has >= s positive frames in two laps plus a negative run");
    // Random course first, then a waypoint within it.
    std::vector<int> courses;
    for (const auto& c : eligible_)
      if (courses.empty() || courses.back() != c.course) courses.push_back(c.course);
    const int course = courses[std::size_t(uniform_int(rng, 0, int(courses.size()) - 1))];
    std::vector<const Candidate*> in_course;
    for (const auto& c : eligible_)
      if (c.course == course) in_course.push_back(&c);
    const Candidate& cand = *in_course[std::size_t(uniform_int(rng, 0, int(in_course.size()) - 1))];

    const int s = spec_.shots;
    auto pick_block = [&](const FrameBlock& run) {
      FrameBlock b = run;
      b.begin = run.begin + uniform_int(rng, 0, run.length - s);
      b.length = s;
      return b;
    };
    Episode ep;
    ep.waypoint = cand.waypoint;
    const FrameBlock& sup_run = cand.pos[std::size_t(uniform_int(rng, 0, int(cand.pos.size()) - 1))];
    ep.support = pick_block(sup_run);
    std::vector<const FrameBlock*> other;
    for (const auto& r : cand.pos)
      if (r.lap != sup_run.lap) other.push_back(&r);
    for (int k = 0; k < spec_.positive_queries; ++k) {
      ep.queries.push_back(pick_block(*other[std::size_t(uniform_int(rng, 0, int(other.size()) - 1))]));
      ep.labels.push_back(1);
    }
    for (int k = 0; k < spec_.negative_queries; ++k) {
      ep.queries.push_back(pick_block(cand.neg[std::size_t(uniform_int(rng, 0, int(cand.neg.size()) - 1))]));
      ep.labels.push_back(0);
    }
    return ep;
  }

  const Dataset& dataset() const { return *ds_; }
  const EpisodeSpec& spec() const { return spec_; }

 private:
  struct Candidate {
    int course = 0, waypoint = 0;
    std::vector<FrameBlock> pos, neg;
  };
  const Dataset* ds_;
  EpisodeSpec spec_;
  std::vector<Candidate> eligible_;
};

inline const FrameRecord& frame_at(const Dataset& ds, const FrameBlock& b, int k) {
  return ds.courses[std::size_t(b.course)].laps[std::size_t(b.lap)].frames[std::size_t(b.begin + k)];
}

// ---------------------------------------------------------------------------
// Training-time transforms

struct Box {
  int row = 0, col = 0, height = 0, width = 0;
};

inline void zero_boxes(Raster& r, const std::vector<Box>& boxes) {
  for (const auto& b : boxes)
    for (int y = std::max(0, b.row); y < std::min(r.height, b.row + b.height); ++y)
      for (int x = std::max(0, b.col); x < std::min(r.width, b.col + b.width); ++x) r.at(y, x) = 0.0f;
}

/// Bilinear rotation about the image center, edge pixels extended.
inline Raster rotate(const Raster& in, double angle_deg) {
  if (angle_deg == 0.0) return in;
  Raster out(in.height, in.width);
  const double a = deg2rad(angle_deg), ca = std::cos(a), sa = std::sin(a);
  const double cy = (in.height - 1) / 2.0, cx = (in.width - 1) / 2.0;
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double sx = std::clamp(cx + ca * dx + sa * dy, 0.0, in.width - 1.0);
      const double sy = std::clamp(cy - sa * dx + ca * dy, 0.0, in.height - 1.0);
      const int x0 = int(sx), y0 = int(sy);
      const int x1 = std::min(x0 + 1, in.width - 1), y1 = std::min(y0 + 1, in.height - 1);
      const double fx = sx - x0, fy = sy - y0;
      const double v = (1 - fy) * ((1 - fx) * in.at(y0, x0) + fx * in.at(y0, x1)) +
                       fy * ((1 - fx) * in.at(y1, x0) + fx * in.at(y1, x1));
      out.at(y, x) = float(v);
    }
  }
  return out;
}

struct TransformSpec {
  double rotation_deg = 10.0;
  double brightness = 0.2;  // factor drawn from [1-b, 1+b]
  double contrast = 0.2;
  int dropout_max_holes = 2;
  int dropout_max_size = 6;
};

struct TransformDraw {
  double angle_deg = 0.0;
  double brightness = 1.0;
  double contrast = 1.0;
  std::vector<Box> holes;

  static TransformDraw identity() { return {}; }
};

inline TransformDraw draw_training_transforms(Rng& rng, const TransformSpec& spec, int height, int width) {
  TransformDraw d;
  d.angle_deg = uniform(rng, -spec.rotation_deg, spec.rotation_deg);
  d.brightness = uniform(rng, 1.0 - spec.brightness, 1.0 + spec.brightness);
  d.contrast = uniform(rng, 1.0 - spec.contrast, 1.0 + spec.contrast);
  const int holes = uniform_int(rng, 0, spec.dropout_max_holes);
  for (int k = 0; k < holes; ++k) {
    Box b;
    b.height = uniform_int(rng, 1, spec.dropout_max_size);
    b.width = uniform_int(rng, 1, spec.dropout_max_size);
    b.row = uniform_int(rng, 0, std::max(0, height - b.height));
    b.col = uniform_int(rng, 0, std::max(0, width - b.width));
    d.holes.push_back(b);
  }
  return d;
}

/// Rotation, brightness/contrast jitter (the grayscale stand-in for color
/// jitter) and coarse dropout, clamped to [0,1].
inline Raster apply_training_transforms(const Raster& in, const TransformDraw& d) {
  Raster out = rotate(in, d.angle_deg);
  if (d.brightness != 1.0 || d.contrast != 1.0)
    for (float& v : out.px) v = float((v * d.brightness - 0.5) * d.contrast + 0.5);
  zero_boxes(out, d.holes);
  clamp_unit(out);
  return out;
}

inline Raster apply_training_transforms(const Raster& in, Rng& rng, const TransformSpec& spec = {}) {
  return apply_training_transforms(in, draw_training_transforms(rng, spec, in.height, in.width));
}

// ---------------------------------------------------------------------------
// Test-time corruptions. Pixel sizes are the 224-pixel settings scaled by 1/7
// to 32-pixel rasters; noise sigmas are on the 0-255 scale divided by 255.

enum class Corruption : std::uint8_t { CoarseDropout, Brightness, DefocusBlur, GaussianNoise };
enum class Severity : std::uint8_t { None, Low, Moderate, Severe };

inline constexpr std::array<Corruption, 4> kAllCorruptions = {
    Corruption::CoarseDropout, Corruption::Brightness, Corruption::DefocusBlur, Corruption::GaussianNoise};
inline constexpr std::array<Severity, 3> kAllSeverities = {Severity::Low, Severity::Moderate, Severity::Severe};

struct CorruptionKind {
  Corruption corruption = Corruption::GaussianNoise;
  Severity severity = Severity::None;
};

inline std::string_view to_string(Corruption c) {
  switch (c) {
    case Corruption::CoarseDropout: return "Coarse Dropout";
    case Corruption::Brightness: return "Brightness Change";
    case Corruption::DefocusBlur: return "Defocus Blur";
    case Corruption::GaussianNoise: return "Gaussian Noise";
  }
  return "?";
}

inline std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::None: return "None";
    case Severity::Low: return "Low";
    case Severity::Moderate: return "Moderate";
    case Severity::Severe: return "Severe";
  }
  return "?";
}

struct CorruptionParams {
  int dropout_holes = 3;
  int dropout_box = 0;
  double brightness_lo = 1.0, brightness_hi = 1.0;
  int defocus_radius = 0;
  double noise_sigma = 0.0;
};

inline CorruptionParams corruption_params(Severity s) {
  CorruptionParams p;
  switch (s) {
    case Severity::None: break;
    case Severity::Low:
      p.dropout_box = 6;
      p.brightness_lo = 0.75, p.brightness_hi = 1.33;
      p.defocus_radius = 1;
      p.noise_sigma = 10.0 / 255.0;
      break;
    case Severity::Moderate:
      p.dropout_box = 11;
      p.brightness_lo = 0.5, p.brightness_hi = 2.0;
      p.defocus_radius = 2;
      p.noise_sigma = 50.0 / 255.0;
      break;
    case Severity::Severe:
      p.dropout_box = 17;
      p.brightness_lo = 0.33, p.brightness_hi = 3.0;
      p.defocus_radius = 3;
      p.noise_sigma = 200.0 / 255.0;
      break;
  }
  return p;
}

inline Raster apply_brightness(const Raster& in, double factor) {
  Raster out = in;
  if (factor == 1.0) return out;
  for (float& v : out.px) v = float(v * factor);
  clamp_unit(out);
  return out;
}

/// Normalized disk kernel convolution with replicated edges.
inline Raster defocus_blur(const Raster& in, int radius) {
  if (radius <= 0) return in;
  Raster out(in.height, in.width);
  std::vector<std::pair<int, int>> taps;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius) taps.emplace_back(dy, dx);
  const double norm = 1.0 / double(taps.size());
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      double acc = 0;
      for (auto [dy, dx] : taps)
        acc += in.at(std::clamp(y + dy, 0, in.height - 1), std::clamp(x + dx, 0, in.width - 1));
      out.at(y, x) = float(acc * norm);
    }
  return out;
}

inline Raster apply_corruption(const Raster& in, const CorruptionKind& kind, Rng& rng) {
  if (kind.severity == Severity::None) return in;
  const CorruptionParams p = corruption_params(kind.severity);
  Raster out = in;
  switch (kind.corruption) {
    case Corruption::CoarseDropout: {
      const int holes = uniform_int(rng, 1, p.dropout_holes);
      std::vector<Box> boxes;
      for (int k = 0; k < holes; ++k) {
        Box b;
        b.height = uniform_int(rng, 1, p.dropout_box);
        b.width = uniform_int(rng, 1, p.dropout_box);
        b.row = uniform_int(rng, 0, std::max(0, in.height - b.height));
        b.col = uniform_int(rng, 0, std::max(0, in.width - b.width));
        boxes.push_back(b);
      }
      zero_boxes(out, boxes);
      break;
    }
    case Corruption::Brightness:
      out = apply_brightness(in, uniform(rng, p.brightness_lo, p.brightness_hi));
      break;
    case Corruption::DefocusBlur:
      out = defocus_blur(in, p.defocus_radius);
      break;
    case Corruption::GaussianNoise: {
      std::normal_distribution<double> nd(0.0, p.noise_sigma);
      for (float& v : out.px) v = float(v + nd(rng));
      break;
    }
  }
  clamp_unit(out);
  return out;
}

}  // namespace waynav
