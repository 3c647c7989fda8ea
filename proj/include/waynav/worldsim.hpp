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

// Deterministic corridor world. The world is a row of rectangular regions
// ("buildings"); each region is a Manhattan lattice of corridors whose
// crossings are intersections. Wall cells next to an intersection carry that
// intersection's landmark texture. Courses are closed rectilinear loops on a
// region lattice that turn only at intersections.

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "waynav/core.hpp"

namespace waynav {

struct Vec2 {
  double x = 0, y = 0;
  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
  bool operator==(const Vec2&) const = default;
};

struct Pose {
  double x = 0, y = 0;
  double heading = 0;  // radians, (-pi, pi], 0 = +x, counter-clockwise positive
  Vec2 pos() const { return {x, y}; }
  bool operator==(const Pose&) const = default;
};

enum class Direction : std::uint8_t { CW, CCW };

inline std::string_view to_string(Direction d) { return d == Direction::CW ? "cw" : "ccw"; }

// ---------------------------------------------------------------------------
// Configuration

struct CameraSpec {
  int height = 32;
  int width = 32;
  double yaw_deg = 30.0;   // each camera turned outwards by this much
  double fov_deg = 90.0;   // horizontal field of view per camera
  double wall_height = 2.0;
  double noise_sigma = 0.02;  // additive per-pixel render noise
};

struct VehicleSpec {
  double speed = 2.0;  // world units (cells) per second
  double dt = 0.1;
  double wheelbase = 0.5;
  double max_steer_deg = 30.0;
  double radius = 0.3;  // collision circle
};

struct ExpertSpec {
  double lookahead_cells = 2.0;
  double driver_noise = 0.03;  // AR(1) steering perturbation of recorded laps
  double start_lateral = 0.3;
  double start_heading_deg = 3.0;
  double start_along = 0.5;
};

struct WorldSpec {
  int corridor_width = 3;
  int block_size = 9;
  int region_nodes = 5;
  int long_region_nodes = 8;
  int train_courses = 12;
  int val_courses = 6;
  int test_courses = 6;
  bool long_course = true;
  int course_waypoints = 8;
  int long_waypoints = 20;
  int landmark_reach = 3;  // wall cells within this many cells of an intersection get its landmark
  CameraSpec camera;
  VehicleSpec vehicle;
  ExpertSpec expert;

  int period() const { return corridor_width + block_size; }
};

// ---------------------------------------------------------------------------
// World types

struct NodeIdx {
  int i = 0, j = 0;
  bool operator==(const NodeIdx&) const = default;
  auto operator<=>(const NodeIdx&) const = default;
};

struct Region {
  int id = 0;
  int origin_x = 0, origin_y = 0;  // cell coordinate of the lower-left corridor cell
  int nodes = 0;                   // lattice is nodes x nodes
  std::vector<int> landmark_ids;   // per node, row-major j * nodes + i

  int landmark(NodeIdx n) const { return landmark_ids[std::size_t(n.j) * nodes + n.i]; }
  bool contains(NodeIdx n) const { return n.i >= 0 && n.j >= 0 && n.i < nodes && n.j < nodes; }
};

struct Waypoint {
  int id = 0;
  NodeIdx node;
  Vec2 position;
  Action action = Action::Straight;
};

struct CourseSpec {
  int id = 0;
  std::string split;  // train | val | test | long
  int region = 0;
  int location = 0;  // CW/CCW partners share a location id
  Direction direction = Direction::CCW;
  std::vector<NodeIdx> loop;  // lattice nodes in traversal order, loop[0] begins the start side
  std::vector<Waypoint> route;
  Pose start;

  std::size_t length() const { return route.size(); }
};

struct Texture {
  static constexpr int kSize = 8;
  std::array<float, kSize * kSize> texel{};
  float at(int row, int col) const { return texel[std::size_t(row) * kSize + col]; }
};

struct World {
  std::uint64_t seed = 0;
  WorldSpec spec;
  int width = 0, height = 0;
  std::vector<std::int32_t> cells;  // -1 free, otherwise texture id
  std::map<int, std::uint64_t> landmark_texture_map;  // landmark id -> texture seed
  std::vector<Texture> textures;                      // indexed by texture id
  std::vector<Region> regions;
  std::vector<CourseSpec> courses;

  static constexpr int kGenericTextures = 3;
  static constexpr std::int32_t kFree = -1;

  bool in_bounds(int cx, int cy) const { return cx >= 0 && cy >= 0 && cx < width && cy < height; }
  std::int32_t cell(int cx, int cy) const {
    return in_bounds(cx, cy) ? cells[std::size_t(cy) * width + cx] : 0;
  }
  bool is_wall(int cx, int cy) const { return cell(cx, cy) != kFree; }
  bool is_wall_at(double x, double y) const {
    return is_wall(int(std::floor(x)), int(std::floor(y)));
  }

  Vec2 node_center(const Region& r, NodeIdx n) const {
    const double half = spec.corridor_width / 2.0;
    return {r.origin_x + n.i * double(spec.period()) + half,
            r.origin_y + n.j * double(spec.period()) + half};
  }

  const CourseSpec& course(int id) const {
    for (const auto& c : courses)
      if (c.id == id) return c;
    throw Error("world", "no course with id " + std::to_string(id));
  }

  const Region& region_at(double x) const {
    for (const auto& r : regions) {
      const double extent = (r.nodes - 1) * double(spec.period()) + spec.corridor_width;
      if (x >= r.origin_x - 1 && x < r.origin_x + extent + 1) return r;
    }
    throw Error("world", "position outside every region");
  }
};

// ---------------------------------------------------------------------------
// Lattice helpers

/// Unit direction index: 0=E, 1=N, 2=W, 3=S.
inline NodeIdx dir_step(int d) {
  static constexpr int dx[4] = {1, 0, -1, 0};
  static constexpr int dy[4] = {0, 1, 0, -1};
  return {dx[d & 3], dy[d & 3]};
}

inline int dir_between(NodeIdx a, NodeIdx b) {
  if (b.i > a.i) return 0;
  if (b.j > a.j) return 1;
  if (b.i < a.i) return 2;
  return 3;
}

inline int apply_action(int dir, Action a) {
  switch (a) {
    case Action::Left: return (dir + 1) & 3;
    case Action::Right: return (dir + 3) & 3;
    case Action::Straight: return dir;
  }
  return dir;
}

inline int arm_count(const Region& r, NodeIdx n) {
  int c = 0;
  for (int d = 0; d < 4; ++d) {
    NodeIdx s = dir_step(d);
    if (r.contains({n.i + s.i, n.j + s.j})) ++c;
  }
  return c;
}

namespace detail {

inline Texture make_texture(std::uint64_t tex_seed, bool generic) {
  Rng rng(tex_seed);
  Texture t;
  if (generic) {
    const double base = uniform(rng, 0.5, 0.6);
    for (auto& v : t.texel) v = float(std::clamp(base + uniform(rng, -0.06, 0.06), 0.0, 1.0));
    return t;
  }
  // Coarse random block code: 4x4 blocks of 2x2 texels.
  std::array<float, 16> code{};
  for (auto& v : code) v = float(uniform(rng, 0.05, 0.95));
  for (int row = 0; row < Texture::kSize; ++row)
    for (int col = 0; col < Texture::kSize; ++col)
      t.texel[std::size_t(row) * Texture::kSize + col] = code[std::size_t(row / 2) * 4 + std::size_t(col / 2)];
  return t;
}

struct Polygon {
  std::vector<NodeIdx> vertices;  // all lattice nodes along the boundary, CCW
  std::vector<std::size_t> corners;  // indices into vertices where direction changes
};

// Boundary of the square set as a single CCW cycle, or nullopt when the set
// has holes or pinch vertices.
inline std::optional<Polygon> trace_boundary(const std::vector<char>& filled, int sq) {
  auto is_filled = [&](int a, int b) {
    return a >= 0 && b >= 0 && a < sq && b < sq && filled[std::size_t(b) * sq + a];
  };
  const int nn = sq + 1;
  std::vector<int> next(std::size_t(nn) * nn, -1);
  int edges = 0;
  auto add = [&](int ai, int aj, int bi, int bj) {
    int& slot = next[std::size_t(aj) * nn + ai];
    if (slot != -1) return false;
    slot = bj * nn + bi;
    ++edges;
    return true;
  };
  int start = -1;
  for (int b = 0; b < sq; ++b) {
    for (int a = 0; a < sq; ++a) {
      if (!is_filled(a, b)) continue;
      if (!is_filled(a, b - 1) && !add(a, b, a + 1, b)) return std::nullopt;
      if (!is_filled(a + 1, b) && !add(a + 1, b, a + 1, b + 1)) return std::nullopt;
      if (!is_filled(a, b + 1) && !add(a + 1, b + 1, a, b + 1)) return std::nullopt;
      if (!is_filled(a - 1, b) && !add(a, b + 1, a, b)) return std::nullopt;
      if (start < 0) start = b * nn + a;
    }
  }
  if (start < 0) return std::nullopt;
  Polygon poly;
  int cur = start;
  do {
    poly.vertices.push_back({cur % nn, cur / nn});
    cur = next[std::size_t(cur)];
    if (cur < 0 || int(poly.vertices.size()) > edges) return std::nullopt;
  } while (cur != start);
  if (int(poly.vertices.size()) != edges) return std::nullopt;
  const std::size_t n = poly.vertices.size();
  for (std::size_t k = 0; k < n; ++k) {
    const NodeIdx prev = poly.vertices[(k + n - 1) % n];
    const NodeIdx here = poly.vertices[k];
    const NodeIdx nxt = poly.vertices[(k + 1) % n];
    if (dir_between(prev, here) != dir_between(here, nxt)) poly.corners.push_back(k);
  }
  return poly;
}

// Grows a random polyomino on the region lattice until its boundary has
// exactly `corners` corners, none of them at a 2-arm lattice corner.
inline std::optional<Polygon> random_loop(const Region& region, int corners, Rng& rng) {
  const int sq = region.nodes - 1;
  for (int attempt = 0; attempt < 400; ++attempt) {
    std::vector<char> filled(std::size_t(sq) * sq, 0);
    filled[std::size_t(uniform_int(rng, 0, sq - 1)) * sq + uniform_int(rng, 0, sq - 1)] = 1;
    for (int step = 0; step < sq * sq; ++step) {
      std::vector<int> cand;
      for (int b = 0; b < sq; ++b)
        for (int a = 0; a < sq; ++a) {
          if (filled[std::size_t(b) * sq + a]) continue;
          const bool adj = (a > 0 && filled[std::size_t(b) * sq + a - 1]) ||
                           (a + 1 < sq && filled[std::size_t(b) * sq + a + 1]) ||
                           (b > 0 && filled[std::size_t(b - 1) * sq + a]) ||
                           (b + 1 < sq && filled[std::size_t(b + 1) * sq + a]);
          if (adj) cand.push_back(b * sq + a);
        }
      std::shuffle(cand.begin(), cand.end(), rng);
      bool grew = false;
      for (int c : cand) {
        filled[std::size_t(c)] = 1;
        auto poly = trace_boundary(filled, sq);
        if (!poly) {
          filled[std::size_t(c)] = 0;
          continue;
        }
        grew = true;
        if (int(poly->corners.size()) == corners) {
          bool ok = true;
          for (std::size_t k : poly->corners)
            if (arm_count(region, poly->vertices[k]) < 3) ok = false;
          if (ok) return poly;
        }
        if (int(poly->corners.size()) > corners + 6) grew = false;
        break;
      }
      if (!grew) break;
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Builds the route description for one traversal direction of a loop.
inline CourseSpec make_course(const World& w, const Region& region, const detail::Polygon& poly,
                              Direction dir, int id, int location, std::string split) {
  CourseSpec c;
  c.id = id;
  c.split = std::move(split);
  c.region = region.id;
  c.location = location;
  c.direction = dir;
  std::vector<NodeIdx> verts = poly.vertices;
  std::vector<char> is_corner(verts.size(), 0);
  for (std::size_t k : poly.corners) is_corner[k] = 1;
  if (dir == Direction::CW) {
    std::reverse(verts.begin(), verts.end());
    std::reverse(is_corner.begin(), is_corner.end());
  }
  const std::size_t n = verts.size();
  // Start on the longest side, breaking ties by traversal order.
  std::size_t best_corner = 0, best_len = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!is_corner[k]) continue;
    std::size_t len = 1;
    while (!is_corner[(k + len) % n]) ++len;
    if (len > best_len) {
      best_len = len;
      best_corner = k;
    }
  }
  for (std::size_t k = 0; k < n; ++k) c.loop.push_back(verts[(best_corner + k) % n]);
  // Start just past the corner that opens the longest side, so the run-up to
  // the first waypoint is as long as possible.
  const int d0 = dir_between(c.loop[0], c.loop[1]);
  const Vec2 a = w.node_center(region, c.loop[0]);
  const Vec2 step{double(dir_step(d0).i), double(dir_step(d0).j)};
  const Vec2 s = a + step * double(w.spec.corridor_width);
  c.start = {s.x, s.y, wrap_angle(d0 * kPi / 2.0)};
  // Waypoints: corners in traversal order after the start; loop[0] is last.
  int wid = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    const std::size_t idx = k % n;
    if (!is_corner[(best_corner + idx) % n]) continue;
    const NodeIdx prev = c.loop[(idx + n - 1) % n];
    const NodeIdx here = c.loop[idx];
    const NodeIdx nxt = c.loop[(idx + 1) % n];
    const int din = dir_between(prev, here), dout = dir_between(here, nxt);
    Waypoint wp;
    wp.id = wid++;
    wp.node = here;
    wp.position = w.node_center(region, here);
    wp.action = ((din + 1) & 3) == dout ? Action::Left : Action::Right;
    c.route.push_back(wp);
  }
  return c;
}

/// Generates the world. Throws Error("world", ...) naming the first course
/// whose loop cannot be placed.
inline World generate_world(std::uint64_t seed, const WorldSpec& spec) {
  World w;
  w.seed = seed;
  w.spec = spec;
  if (spec.corridor_width < 1 || spec.block_size < 1)
    throw Error("world", "corridor_width and block_size must be positive");
  if (spec.train_courses % 2 || spec.val_courses % 2 || spec.test_courses % 2)
    throw Error("world", "course counts must be even (CW/CCW pairs)");

  struct Plan {
    std::string split;
    int nodes, corners, location;
  };
  std::vector<Plan> plans;
  int location = 1;
  auto add_pairs = [&](const char* split, int courses) {
    for (int k = 0; k < courses / 2; ++k)
      plans.push_back({split, spec.region_nodes, spec.course_waypoints, location++});
  };
  // Test locations are numbered first so they read 1..n in reports.
  add_pairs("test", spec.test_courses);
  if (spec.long_course) plans.push_back({"long", spec.long_region_nodes, spec.long_waypoints, location++});
  add_pairs("train", spec.train_courses);
  add_pairs("val", spec.val_courses);

  const int gap = 2;
  const int period = spec.period();
  int cursor = gap;
  int max_extent = 0;
  for (std::size_t r = 0; r < plans.size(); ++r) {
    Region reg;
    reg.id = int(r);
    reg.nodes = plans[r].nodes;
    reg.origin_x = cursor;
    reg.origin_y = gap;
    const int extent = (reg.nodes - 1) * period + spec.corridor_width;
    cursor += extent + gap;
    max_extent = std::max(max_extent, extent);
    w.regions.push_back(reg);
  }
  w.width = plans.empty() ? 2 * gap + 1 : cursor;
  w.height = plans.empty() ? 2 * gap + 1 : max_extent + 2 * gap;
  w.cells.assign(std::size_t(w.width) * w.height, 0);

  for (int g = 0; g < World::kGenericTextures; ++g)
    w.textures.push_back(detail::make_texture(derive_seed(seed, "generic-texture", std::uint64_t(g)), true));
  int next_landmark = 0;
  for (auto& reg : w.regions) {
    for (int k = 0; k < reg.nodes * reg.nodes; ++k) {
      const int lid = next_landmark++;
      const std::uint64_t ts = derive_seed(seed, "landmark-texture", std::uint64_t(lid));
      w.landmark_texture_map[lid] = ts;
      w.textures.push_back(detail::make_texture(ts, false));
      reg.landmark_ids.push_back(lid);
    }
    const int extent = (reg.nodes - 1) * period + spec.corridor_width;
    for (int k = 0; k < reg.nodes; ++k) {
      const int lo = k * period;
      for (int t = 0; t < extent; ++t)
        for (int c = 0; c < spec.corridor_width; ++c) {
          w.cells[std::size_t(reg.origin_y + t) * w.width + reg.origin_x + lo + c] = World::kFree;
          w.cells[std::size_t(reg.origin_y + lo + c) * w.width + reg.origin_x + t] = World::kFree;
        }
    }
  }
  // Wall textures: landmark of the nearest intersection if close, else generic.
  for (int cy = 0; cy < w.height; ++cy) {
    for (int cx = 0; cx < w.width; ++cx) {
      auto& cell = w.cells[std::size_t(cy) * w.width + cx];
      if (cell == World::kFree) continue;
      cell = std::int32_t(splitmix64(derive_seed(seed, "wall") ^ std::uint64_t(cy * w.width + cx)) %
                          World::kGenericTextures);
      for (const auto& reg : w.regions) {
        const int extent = (reg.nodes - 1) * period + spec.corridor_width;
        if (cx < reg.origin_x - 1 || cx > reg.origin_x + extent || cy < reg.origin_y - 1 ||
            cy > reg.origin_y + extent)
          continue;
        const double px = cx + 0.5, py = cy + 0.5;
        const int ni = std::clamp(int(std::lround((px - reg.origin_x - spec.corridor_width / 2.0) / period)), 0, reg.nodes - 1);
        const int nj = std::clamp(int(std::lround((py - reg.origin_y - spec.corridor_width / 2.0) / period)), 0, reg.nodes - 1);
        const Vec2 c = w.node_center(reg, {ni, nj});
        const double cheb = std::max(std::fabs(px - c.x), std::fabs(py - c.y));
        if (cheb <= spec.corridor_width / 2.0 + spec.landmark_reach)
          cell = World::kGenericTextures + reg.landmark({ni, nj});
      }
    }
  }

  int course_id = 0;
  for (std::size_t r = 0; r < plans.size(); ++r) {
    const auto& plan = plans[r];
    Rng rng = make_rng(seed, "loop", r);
    auto poly = detail::random_loop(w.regions[r], plan.corners, rng);
    if (!poly)
      throw Error("world", "cannot place course " + std::to_string(course_id) + " (" + plan.split +
                               ", " + std::to_string(plan.corners) + " waypoints on a " +
                               std::to_string(plan.nodes) + "x" + std::to_string(plan.nodes) +
                               " lattice)");
    w.courses.push_back(make_course(w, w.regions[r], *poly, Direction::CCW, course_id++, plan.location, plan.split));
    if (plan.split != "long")
      w.courses.push_back(make_course(w, w.regions[r], *poly, Direction::CW, course_id++, plan.location, plan.split));
  }
  return w;
}

/// Byte-stable text serialization of the complete world.
inline std::string serialize_world(const World& w) {
  std::ostringstream os;
  const auto& s = w.spec;
  os << "waynav-world 1\n";
  os << "seed " << w.seed << "\n";
  os << "geometry " << s.corridor_width << ' ' << s.block_size << ' ' << s.region_nodes << ' '
     << s.long_region_nodes << ' ' << s.landmark_reach << "\n";
  os << "grid " << w.width << ' ' << w.height << "\n";
  for (int cy = 0; cy < w.height; ++cy) {
    for (int cx = 0; cx < w.width; ++cx) {
      if (cx) os << ' ';
      os << w.cell(cx, cy);
    }
    os << '\n';
  }
  os << "landmarks " << w.landmark_texture_map.size() << "\n";
  for (auto [id, ts] : w.landmark_texture_map) os << id << ' ' << ts << "\n";
  os << "regions " << w.regions.size() << "\n";
  for (const auto& r : w.regions) os << r.id << ' ' << r.origin_x << ' ' << r.origin_y << ' ' << r.nodes << "\n";
  os << "courses " << w.courses.size() << "\n";
  for (const auto& c : w.courses) {
    os << "course " << c.id << ' ' << c.split << ' ' << c.region << ' ' << c.location << ' '
       << to_string(c.direction) << ' ' << fmt_double(c.start.x) << ' ' << fmt_double(c.start.y)
       << ' ' << fmt_double(c.start.heading) << "\n";
    os << "loop " << c.loop.size();
    for (auto n : c.loop) os << ' ' << n.i << ' ' << n.j;
    os << "\nroute " << c.route.size();
    for (const auto& wp : c.route)
      os << ' ' << wp.id << ' ' << wp.node.i << ' ' << wp.node.j << ' ' << to_string(wp.action);
    os << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Rendering

struct RayHit {
  double distance = 0;  // perpendicular to the camera axis
  int texture = 0;
  double u = 0;  // horizontal texture coordinate in [0,1)
};

inline RayHit cast_ray(const World& w, double ox, double oy, double angle, double cam_heading) {
  const double dx = std::cos(angle), dy = std::sin(angle);
  int cx = int(std::floor(ox)), cy = int(std::floor(oy));
  const double ddx = dx == 0 ? 1e30 : std::fabs(1.0 / dx);
  const double ddy = dy == 0 ? 1e30 : std::fabs(1.0 / dy);
  const int sx = dx < 0 ? -1 : 1, sy = dy < 0 ? -1 : 1;
  double tx = dx < 0 ? (ox - cx) * ddx : (cx + 1.0 - ox) * ddx;
  double ty = dy < 0 ? (oy - cy) * ddy : (cy + 1.0 - oy) * ddy;
  int side = 0;
  double t = 0;
  for (int guard = 0; guard < 4 * (w.width + w.height); ++guard) {
    if (tx < ty) {
      t = tx;
      tx += ddx;
      cx += sx;
      side = 0;
    } else {
      t = ty;
      ty += ddy;
      cy += sy;
      side = 1;
    }
    if (w.is_wall(cx, cy)) break;
  }
  RayHit hit;
  hit.texture = std::max(0, w.cell(cx, cy));
  const double hx = ox + t * dx, hy = oy + t * dy;
  double u = side == 0 ? hy - std::floor(hy) : hx - std::floor(hx);
  if ((side == 0 && dx < 0) || (side == 1 && dy > 0)) u = 1.0 - u;
  hit.u = std::clamp(u, 0.0, 0.999999);
  hit.distance = std::max(1e-3, t * std::cos(angle - cam_heading));
  return hit;
}

inline Raster render_camera(const World& w, const Pose& pose, double yaw_offset) {
  const auto& cam = w.spec.camera;
  Raster img(cam.height, cam.width);
  const double half_fov = deg2rad(cam.fov_deg) / 2.0;
  const double focal = (cam.width / 2.0) / std::tan(half_fov);
  const double heading = pose.heading + yaw_offset;
  for (int col = 0; col < cam.width; ++col) {
    const double xs = ((col + 0.5) / cam.width) * 2.0 - 1.0;
    const double ang = heading - std::atan(xs * std::tan(half_fov));
    const RayHit hit = cast_ray(w, pose.x, pose.y, ang, heading);
    const double half = focal * (cam.wall_height / 2.0) / hit.distance;
    const double shade = 0.35 + 0.65 * std::exp(-hit.distance / 10.0);
    const Texture& tex = w.textures[std::size_t(hit.texture)];
    const int tcol = int(hit.u * Texture::kSize);
    for (int row = 0; row < cam.height; ++row) {
      const double ys = cam.height / 2.0 - (row + 0.5);
      double v;
      if (std::fabs(ys) < half) {
        const double tv = 0.5 - ys / (2.0 * half);
        const int trow = std::clamp(int(tv * Texture::kSize), 0, Texture::kSize - 1);
        v = tex.at(trow, tcol) * shade;
      } else if (ys > 0) {
        v = 0.12;
      } else {
        v = 0.25 + 0.15 * (-ys / (cam.height / 2.0));
      }
      img.at(row, col) = float(v);
    }
  }
  return img;
}

struct Observation {
  Raster left, right;
};

/// Renders both cameras; noise_seed drives the additive pixel noise
/// (sigma from the camera spec, 0 disables it).
inline Observation render_observation(const World& w, const Pose& pose, std::uint64_t noise_seed) {
  if (w.is_wall_at(pose.x, pose.y))
    throw Error("render", "pose (" + fmt_double(pose.x, 6) + ", " + fmt_double(pose.y, 6) + ") is inside a wall");
  const double yaw = deg2rad(w.spec.camera.yaw_deg);
  Observation obs{render_camera(w, pose, +yaw), render_camera(w, pose, -yaw)};
  const double sigma = w.spec.camera.noise_sigma;
  if (sigma > 0) {
    Rng rng(derive_seed(noise_seed, "render-noise"));
    std::normal_distribution<float> nd(0.0f, float(sigma));
    for (float& v : obs.left.px) v += nd(rng);
    for (float& v : obs.right.px) v += nd(rng);
  }
  clamp_unit(obs.left);
  clamp_unit(obs.right);
  return obs;
}

// ---------------------------------------------------------------------------
// Vehicle

struct StepResult {
  Pose pose;
  bool collision = false;
};

inline bool collides(const World& w, double x, double y, double radius) {
  for (int cy = int(std::floor(y - radius)); cy <= int(std::floor(y + radius)); ++cy)
    for (int cx = int(std::floor(x - radius)); cx <= int(std::floor(x + radius)); ++cx) {
      if (!w.is_wall(cx, cy)) continue;
      const double qx = std::clamp(x, double(cx), cx + 1.0);
      const double qy = std::clamp(y, double(cy), cy + 1.0);
      if ((qx - x) * (qx - x) + (qy - y) * (qy - y) < radius * radius) return true;
    }
  return false;
}

/// Exact constant-steer bicycle integration (rear-axle reference).
/// steering in [0,1]: 0 = full right, 0.5 = straight, 1 = full left.
inline Pose integrate_bicycle(const Pose& p, double steering, double dt, const VehicleSpec& v) {
  if (!(dt > 0)) throw Error("vehicle", "dt must be positive");
  const double delta = (2.0 * std::clamp(steering, 0.0, 1.0) - 1.0) * deg2rad(v.max_steer_deg);
  const double dist = v.speed * dt;
  Pose out = p;
  if (std::fabs(delta) < 1e-12) {
    out.x += dist * std::cos(p.heading);
    out.y += dist * std::sin(p.heading);
    return out;
  }
  const double radius = v.wheelbase / std::tan(delta);
  const double h1 = p.heading + dist / radius;
  out.x += radius * (std::sin(h1) - std::sin(p.heading));
  out.y -= radius * (std::cos(h1) - std::cos(p.heading));
  out.heading = wrap_angle(h1);
  return out;
}

inline StepResult step_vehicle(const World& w, const Pose& pose, double steering, double dt) {
  Pose next = integrate_bicycle(pose, steering, dt, w.spec.vehicle);
  if (collides(w, next.x, next.y, w.spec.vehicle.radius)) return {pose, true};
  return {next, false};
}

// ---------------------------------------------------------------------------
// Expert driver

struct EdgeLocation {
  const Region* region = nullptr;
  NodeIdx from, to;  // directed lattice edge the vehicle is travelling on
  int dir = 0;
  double along = 0;   // distance travelled from `from`
  double lateral = 0; // signed offset, positive to the left
};

/// Finds the directed corridor edge that best explains the pose.
inline EdgeLocation locate_edge(const World& w, const Pose& pose) {
  const Region& reg = w.region_at(pose.x);
  const double period = w.spec.period();
  const double half = w.spec.corridor_width / 2.0;
  const double u = (pose.x - reg.origin_x - half) / period;
  const double v = (pose.y - reg.origin_y - half) / period;
  EdgeLocation best;
  double best_score = 1e300;
  auto consider = [&](NodeIdx a, NodeIdx b) {
    if (!reg.contains(a) || !reg.contains(b)) return;
    for (int flip = 0; flip < 2; ++flip) {
      const NodeIdx from = flip ? b : a, to = flip ? a : b;
      const int d = dir_between(from, to);
      const Vec2 pa = w.node_center(reg, from);
      const Vec2 dv{double(dir_step(d).i), double(dir_step(d).j)};
      const Vec2 rel = pose.pos() - pa;
      const double along = rel.dot(dv);
      const double lateral = dv.x * rel.y - dv.y * rel.x;
      const double outside = std::max(0.0, -along) + std::max(0.0, along - period);
      const double align = std::cos(pose.heading - d * kPi / 2.0);
      const double score = std::fabs(lateral) + outside + 2.0 * (1.0 - align);
      if (score < best_score) {
        best_score = score;
        best = {&reg, from, to, d, along, lateral};
      }
    }
  };
  const int fi = int(std::floor(u)), ri = int(std::lround(u));
  const int fj = int(std::floor(v)), rj = int(std::lround(v));
  for (int di = -1; di <= 1; ++di) {
    consider({fi + di, rj}, {fi + di + 1, rj});
    consider({ri, fj + di}, {ri, fj + di + 1});
  }
  if (!best.region) throw Error("expert", "pose is not on any corridor");
  return best;
}

/// Pure pursuit on the local polyline [from, to, exit] where the exit branch
/// at `to` is selected by `active_action`. Returns steering in [0,1].
inline double expert_steering(const World& w, const Pose& pose, Action active_action) {
  const EdgeLocation loc = locate_edge(w, pose);
  const Region& reg = *loc.region;
  const int exit_dir = apply_action(loc.dir, active_action);
  const NodeIdx es = dir_step(exit_dir);
  const NodeIdx exit{loc.to.i + es.i, loc.to.j + es.j};
  if (!reg.contains(exit))
    throw Error("expert", "no " + std::string(to_string(active_action)) + " branch at intersection (" +
                              std::to_string(loc.to.i) + ", " + std::to_string(loc.to.j) + ")");
  const double period = w.spec.period();
  const double ld = w.spec.expert.lookahead_cells;
  const Vec2 a = w.node_center(reg, loc.from);
  const Vec2 b = w.node_center(reg, loc.to);
  const Vec2 c = w.node_center(reg, exit);
  const double s = std::clamp(loc.along, 0.0, period) + ld;
  Vec2 target;
  if (s <= period) {
    target = a + (b - a) * (s / period);
  } else {
    target = b + (c - b) * ((s - period) / period);
  }
  const Vec2 rel = target - pose.pos();
  const double alpha = wrap_angle(std::atan2(rel.y, rel.x) - pose.heading);
  const double dist = std::max(rel.norm(), 1e-6);
  const double curvature = 2.0 * std::sin(alpha) / dist;
  const double dmax = deg2rad(w.spec.vehicle.max_steer_deg);
  const double delta = std::clamp(std::atan(w.spec.vehicle.wheelbase * curvature), -dmax, dmax);
  return 0.5 + 0.5 * delta / dmax;
}

/// Action the route prescribes at lattice node `n` of a course.
inline Action route_action_at(const CourseSpec& c, NodeIdx n) {
  for (const auto& wp : c.route)
    if (wp.node == n) return wp.action;
  return Action::Straight;
}

// ---------------------------------------------------------------------------
// Laps

struct Label {
  enum class Kind : std::uint8_t { Unlabeled, Positive, Negative };
  Kind kind = Kind::Unlabeled;
  int waypoint = -1;
  bool operator==(const Label&) const = default;
};

struct FrameRecord {
  int frame_index = 0;
  Raster raster_left, raster_right;
  double steering = 0.5;
  Label label;
  bool operator==(const FrameRecord&) const = default;
};

struct Lap {
  int course_id = 0;
  int lap_id = 0;
  std::vector<FrameRecord> frames;
  bool operator==(const Lap&) const = default;
};

/// Progress tracker along a course's closed loop polyline.
class LoopProgress {
 public:
  LoopProgress(const World& w, const CourseSpec& c) {
    const Region& reg = w.regions[std::size_t(c.region)];
    for (auto n : c.loop) pts_.push_back(w.node_center(reg, n));
    cum_.push_back(0);
    for (std::size_t k = 0; k < pts_.size(); ++k)
      cum_.push_back(cum_.back() + (pts_[(k + 1) % pts_.size()] - pts_[k]).norm());
    auto [arc, seg] = project_global(c.start.pos());
    start_ = arc;
    seg_ = seg;
  }

  double total() const { return cum_.back(); }

  /// Distance travelled since the start point; follows the loop forward.
  double update(Vec2 p) {
    const std::size_t n = pts_.size();
    const std::size_t nxt = (seg_ + 1) % n;
    auto [d0, a0] = project_seg(p, seg_);
    auto [d1, a1] = project_seg(p, nxt);
    double arc = a0;
    dist_ = d0;
    if (d1 < d0 - 1e-9) {
      if (nxt == 0) wraps_ += 1;
      seg_ = nxt;
      arc = a1;
      dist_ = d1;
    }
    return arc - start_ + wraps_ * total();
  }

  /// Distance from the loop polyline at the last update.
  double distance() const { return dist_; }

  /// Re-anchors tracking at p (e.g. after a respawn); arc stays relative to
  /// the original start and does not wrap backwards.
  void relocate(Vec2 p) {
    const auto [arc, seg] = project_global(p);
    if (seg < seg_) wraps_ += 1;
    seg_ = seg;
    dist_ = 0;
    (void)arc;
  }

  /// Arc length of a point relative to the start, in [-total/2, total).
  double arc_of(Vec2 p) const {
    double d = project_global(p).first - start_;
    if (d < -total() / 2) d += total();
    if (d >= total()) d -= total();
    return d;
  }

  /// Point on the loop at the given arc length from the start.
  Vec2 point_at(double arc) const {
    double s = std::fmod(arc + start_, total());
    if (s < 0) s += total();
    const std::size_t n = pts_.size();
    for (std::size_t k = 0; k < n; ++k) {
      if (s <= cum_[k + 1]) {
        const Vec2 a = pts_[k], b = pts_[(k + 1) % n];
        return a + (b - a) * ((s - cum_[k]) / (cum_[k + 1] - cum_[k]));
      }
    }
    return pts_.front();
  }

 private:
  std::pair<double, double> project_seg(Vec2 p, std::size_t k) const {
    const Vec2 a = pts_[k], b = pts_[(k + 1) % pts_.size()];
    const double len = (b - a).norm();
    const double t = std::clamp((p - a).dot(b - a) / (len * len), 0.0, 1.0);
    return {(a + (b - a) * t - p).norm(), cum_[k] + t * len};
  }

  std::pair<double, std::size_t> project_global(Vec2 p) const {
    double best = 1e300, arc = 0;
    std::size_t seg = 0;
    for (std::size_t k = 0; k < pts_.size(); ++k) {
      auto [d, a] = project_seg(p, k);
      if (d < best - 1e-9) {
        best = d;
        arc = a;
        seg = k;
      }
    }
    return {arc, seg};
  }

  std::vector<Vec2> pts_;
  std::vector<double> cum_;
  double start_ = 0;
  std::size_t seg_ = 0;
  int wraps_ = 0;
  double dist_ = 0;
};

struct LapOptions {
  bool perturb = true;  // start-pose and driver-noise variation from noise_seed
  std::vector<double>* arcs = nullptr;  // optional: distance travelled at each frame
};

/// Drives the expert once around the course. Frame noise and trajectory
/// variation are derived from noise_seed.
inline Lap record_lap(const World& w, const CourseSpec& course, std::uint64_t noise_seed,
                      int lap_id = 0, LapOptions opts = {}) {
  if (course.route.empty()) throw Error("record", "course " + std::to_string(course.id) + " has no waypoints");
  const auto& ex = w.spec.expert;
  const auto& veh = w.spec.vehicle;
  Rng rng = make_rng(noise_seed, "lap-variation");
  Pose pose = course.start;
  double noise_sigma = 0;
  if (opts.perturb) {
    const double along = uniform(rng, -ex.start_along, ex.start_along);
    const double lat = uniform(rng, -ex.start_lateral, ex.start_lateral);
    pose.x += along * std::cos(pose.heading) - lat * std::sin(pose.heading);
    pose.y += along * std::sin(pose.heading) + lat * std::cos(pose.heading);
    pose.heading = wrap_angle(pose.heading + deg2rad(uniform(rng, -ex.start_heading_deg, ex.start_heading_deg)));
    noise_sigma = ex.driver_noise;
  }
  LoopProgress progress(w, course);
  Lap lap;
  lap.course_id = course.id;
  lap.lap_id = lap_id;
  const int max_frames = int(3.0 * progress.total() / (veh.speed * veh.dt)) + 100;
  double ar = 0;
  const double rho = 0.9;
  for (int t = 0; t < max_frames; ++t) {
    const double travelled = progress.update(pose.pos());
    if (t > 10 && travelled >= progress.total() - 1e-9) return lap;
    const EdgeLocation loc = locate_edge(w, pose);
    const Action act = route_action_at(course, loc.to);
    const double expert = expert_steering(w, pose, act);
    ar = rho * ar + gaussian(rng, noise_sigma * std::sqrt(1 - rho * rho));
    const double steer = std::clamp(expert + ar, 0.0, 1.0);
    Observation obs = render_observation(w, pose, derive_seed(noise_seed, "frame", std::uint64_t(t)));
    lap.frames.push_back({t, std::move(obs.left), std::move(obs.right), steer, {}});
    if (opts.arcs) opts.arcs->push_back(travelled);
    StepResult st = step_vehicle(w, pose, steer, veh.dt);
    if (st.collision) throw Error("record", "expert collision at frame " + std::to_string(t) + " on course " + std::to_string(course.id));
    pose = st.pose;
  }
  throw Error("record", "lap on course " + std::to_string(course.id) + " did not complete");
}

struct SegmentOptions {
  double turn_threshold = 0.15;
  int positive_len = 15;
  int onset_frames = 3;
};

/// Indices of turn onsets: |steering - 0.5| > threshold for >= m frames.
inline std::vector<int> detect_turn_onsets(std::span<const double> steering, double threshold, int m) {
  std::vector<int> onsets;
  int run = 0;
  bool in_turn = false;
  for (int t = 0; t < int(steering.size()); ++t) {
    const bool turning = std::fabs(steering[std::size_t(t)] - 0.5) > threshold;
    run = turning ? run + 1 : 0;
    if (!turning) in_turn = false;
    if (!in_turn && run >= m) {
      onsets.push_back(t - run + 1);
      in_turn = true;
    }
  }
  return onsets;
}

/// Labels every frame of the lap as Positive(n) or Negative(n).
inline Lap segment_lap(Lap lap, const CourseSpec& course, const SegmentOptions& opt = {}) {
  if (opt.positive_len < 1) throw Error("segment", "positive_len must be >= 1");
  std::vector<double> steer;
  for (const auto& f : lap.frames) steer.push_back(f.steering);
  const auto onsets = detect_turn_onsets(steer, opt.turn_threshold, opt.onset_frames);
  std::vector<const Waypoint*> turns;
  for (const auto& wp : course.route)
    if (wp.action != Action::Straight) turns.push_back(&wp);
  if (turns.size() != course.route.size())
    throw Error("segment", "course " + std::to_string(course.id) + " has straight waypoints, which steering cannot locate");
  if (onsets.size() != turns.size())
    throw Error("segment", "detected " + std::to_string(onsets.size()) + " turns, course " +
                               std::to_string(course.id) + " has " + std::to_string(turns.size()));
  const int n = int(lap.frames.size());
  int prev_end = 0;  // first frame after the previous positive segment
  for (std::size_t k = 0; k < turns.size(); ++k) {
    const int onset = onsets[k];
    const bool left = steer[std::size_t(onset)] > 0.5;
    if (left != (turns[k]->action == Action::Left))
      throw Error("segment", "turn " + std::to_string(k) + " steers the wrong way");
    const int start = onset - opt.positive_len;
    if (start < prev_end)
      throw Error("segment", "positive window of waypoint " + std::to_string(turns[k]->id) + " overlaps the previous one");
    for (int t = prev_end; t < start; ++t) lap.frames[std::size_t(t)].label = {Label::Kind::Negative, turns[k]->id};
    for (int t = start; t < onset; ++t) lap.frames[std::size_t(t)].label = {Label::Kind::Positive, turns[k]->id};
    prev_end = onset;
  }
  for (int t = prev_end; t < n; ++t)
    lap.frames[std::size_t(t)].label = {Label::Kind::Negative, turns.front()->id};
  return lap;
}

}  // namespace waynav
