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

#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"

namespace waynav {
namespace {

using testing::default_world;
using testing::labelled_lap;

TEST(World, DefaultSplitCounts) {
  const World& w = default_world();
  std::map<std::string, int> n;
  for (const auto& c : w.courses) ++n[c.split];
  EXPECT_EQ(n["train"], 12);
  EXPECT_EQ(n["val"], 6);
  EXPECT_EQ(n["test"], 6);
  EXPECT_EQ(n["long"], 1);
  for (const auto& c : w.courses) EXPECT_EQ(int(c.length()), c.split == "long" ? 20 : 8) << "course " << c.id;
}

TEST(World, GenerationIsDeterministic) {
  EXPECT_EQ(serialize_world(generate_world(7, {})), serialize_world(default_world()));
  EXPECT_NE(serialize_world(generate_world(8, {})), serialize_world(default_world()));
}

TEST(World, EmptySpecGivesEmptyWorld) {
  WorldSpec s;
  s.train_courses = s.val_courses = s.test_courses = 0;
  s.long_course = false;
  const World w = generate_world(7, s);
  EXPECT_TRUE(w.courses.empty());
}

TEST(World, InfeasibleSpecNamesCourse) {
  WorldSpec s;
  s.course_waypoints = 40;
  try {
    generate_world(7, s);
    FAIL() << "expected a construction error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("course 0"), std::string::npos) << e.what();
  }
}

TEST(World, CourseInvariants) {
  const World& w = default_world();
  for (const auto& c : w.courses) {
    const Region& reg = w.regions[std::size_t(c.region)];
    for (std::size_t k = 0; k < c.route.size(); ++k) {
      if (k) {
        EXPECT_GT(c.route[k].id, c.route[k - 1].id);
      }
      EXPECT_GE(arm_count(reg, c.route[k].node), 3) << "course " << c.id << " waypoint " << c.route[k].id;
      // The waypoint position lies in free space at the intersection.
      EXPECT_FALSE(w.is_wall_at(c.route[k].position.x, c.route[k].position.y));
    }
  }
}

TEST(World, ClockwisePartnersReverseTheLoop) {
  const World& w = default_world();
  int pairs = 0;
  for (const auto& a : w.courses)
    for (const auto& b : w.courses)
      if (a.id < b.id && a.location == b.location) {
        ++pairs;
        EXPECT_NE(a.direction, b.direction);
        std::set<NodeIdx> na(a.loop.begin(), a.loop.end()), nb(b.loop.begin(), b.loop.end());
        EXPECT_EQ(na, nb);
        // Same cyclic sequence read backwards.
        const std::size_t n = a.loop.size();
        ASSERT_EQ(n, b.loop.size());
        std::size_t off = 0;
        while (off < n && !(b.loop[off] == a.loop[0])) ++off;
        ASSERT_LT(off, n);
        for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(a.loop[i], b.loop[(off + n - i) % n]);
      }
  EXPECT_EQ(pairs, 12);
}

TEST(World, TestWaypointsDisjointFromTraining) {
  const World& w = default_world();
  std::set<std::pair<double, double>> train;
  for (const auto& c : w.courses)
    if (c.split == "train")
      for (const auto& wp : c.route) train.insert({wp.position.x, wp.position.y});
  for (const auto& c : w.courses)
    if (c.split == "test" || c.split == "long") {
      for (const auto& wp : c.route) EXPECT_FALSE(train.count({wp.position.x, wp.position.y}));
    }
}

TEST(Render, DeterministicAndClamped) {
  const World& w = default_world();
  const CourseSpec& c = testing::first_course("train");
  const Observation a = render_observation(w, c.start, 11), b = render_observation(w, c.start, 11);
  EXPECT_EQ(a.left, b.left);
  EXPECT_EQ(a.right, b.right);
  EXPECT_NE(render_observation(w, c.start, 12).left, a.left);
  Rng rng(5);
  int rendered = 0;
  while (rendered < 1000) {
    const Pose p{uniform(rng, 0, w.width), uniform(rng, 0, w.height), uniform(rng, -kPi, kPi)};
    if (w.is_wall_at(p.x, p.y)) continue;
    const Observation o = render_observation(w, p, std::uint64_t(rendered));
    ASSERT_EQ(o.left.height, 32);
    ASSERT_EQ(o.left.width, 32);
    for (const Raster* r : {&o.left, &o.right})
      for (float v : r->px) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
    ++rendered;
  }
}

TEST(Render, PoseInWallIsAnError) {
  const World& w = default_world();
  EXPECT_THROW(render_observation(w, {0.5, 0.5, 0.0}, 1), Error);
}

/// Straight corridor with a uniform wall texture, mirror symmetric about y = 2.5.
World symmetric_corridor() {
  World w;
  w.spec.camera.noise_sigma = 0;
  w.width = 40;
  w.height = 5;
  w.cells.assign(std::size_t(w.width * w.height), World::kFree);
  for (int x = 0; x < w.width; ++x) {
    w.cells[std::size_t(x)] = 0;
    w.cells[std::size_t(4 * w.width + x)] = 0;
  }
  for (int y = 0; y < w.height; ++y) {
    w.cells[std::size_t(y * w.width)] = 0;
    w.cells[std::size_t(y * w.width + w.width - 1)] = 0;
  }
  Texture t;
  t.texel.fill(0.7f);
  w.textures.push_back(t);
  return w;
}

TEST(Render, SymmetricCorridorMirrorsCameras) {
  const World w = symmetric_corridor();
  const Observation o = render_observation(w, {20.0, 2.5, 0.0}, 1);
  EXPECT_EQ(o.left, flip_horizontal(o.right));
  // Turning the vehicle by twice the camera yaw brings its right camera onto
  // the old left camera's viewing direction.
  const double yaw = deg2rad(w.spec.camera.yaw_deg);
  const Raster old_left = render_camera(w, {20.0, 2.5, 0.1}, +yaw);
  const Raster new_right = render_camera(w, {20.0, 2.5, 0.1 + 2 * yaw}, -yaw);
  double diff = 0;
  for (std::size_t i = 0; i < old_left.size(); ++i) diff = std::max(diff, double(std::fabs(old_left.px[i] - new_right.px[i])));
  EXPECT_LT(diff, 1e-6);
  // An off-center pose breaks the symmetry.
  const Observation off = render_observation(w, {20.0, 1.8, 0.0}, 1);
  EXPECT_NE(off.left, flip_horizontal(off.right));
}

TEST(Vehicle, CenterSteeringGoesStraight) {
  const VehicleSpec v;
  Pose p{1, 2, 0.3};
  for (int i = 0; i < 50; ++i) p = integrate_bicycle(p, 0.5, v.dt, v);
  EXPECT_DOUBLE_EQ(p.heading, 0.3);
  EXPECT_NEAR(p.x, 1 + 50 * v.speed * v.dt * std::cos(0.3), 1e-9);
  EXPECT_NEAR(p.y, 2 + 50 * v.speed * v.dt * std::sin(0.3), 1e-9);
}

TEST(Vehicle, FullLeftFollowsClosedFormArc) {
  const VehicleSpec v;
  const double R = v.wheelbase / std::tan(deg2rad(v.max_steer_deg));
  Pose p{0, 0, 0};
  const Vec2 center{0, R};  // left of the heading
  for (int i = 1; i <= 40; ++i) {
    p = integrate_bicycle(p, 1.0, v.dt, v);
    EXPECT_NEAR((p.pos() - center).norm(), R, 1e-9);
    EXPECT_NEAR(std::remainder(p.heading - i * v.speed * v.dt / R, 2 * kPi), 0.0, 1e-9);
  }
}

TEST(Vehicle, ZeroDtRejectedAndWallsCollide) {
  const World& w = default_world();
  EXPECT_THROW(integrate_bicycle({}, 0.5, 0.0, {}), Error);
  const CourseSpec& c = testing::first_course("train");
  Pose p = c.start;
  bool hit = false;
  for (int i = 0; i < 400 && !hit; ++i) {
    const StepResult s = step_vehicle(w, p, 0.5, 0.1);
    if (s.collision) {
      hit = true;
      EXPECT_EQ(s.pose.x, p.x);
      EXPECT_EQ(s.pose.y, p.y);
    }
    p = s.pose;
  }
  EXPECT_TRUE(hit) << "driving straight forever must reach a wall";
}

TEST(Expert, StraightCorridorStaysCentered) {
  const World& w = default_world();
  const Region& reg = w.regions[0];
  const Vec2 a = w.node_center(reg, {0, 1});
  const double s = expert_steering(w, {a.x + 6.0, a.y, 0.0}, Action::Straight);
  EXPECT_NEAR(s, 0.5, 0.05);
}

TEST(Expert, LeftTurnSteersLeft) {
  const World& w = default_world();
  const Region& reg = w.regions[0];
  const Vec2 a = w.node_center(reg, {0, 1});
  Pose p{a.x + 3.0, a.y, 0.0};
  std::vector<double> steer;
  for (int t = 0; t < 80; ++t) {
    const double s = expert_steering(w, p, Action::Left);
    steer.push_back(s);
    const StepResult st = step_vehicle(w, p, s, w.spec.vehicle.dt);
    ASSERT_FALSE(st.collision);
    p = st.pose;
  }
  const auto onsets = detect_turn_onsets(steer, 0.15, 3);
  ASSERT_EQ(onsets.size(), 1u);
  for (std::size_t t = std::size_t(onsets[0]); t < steer.size() && std::fabs(steer[t] - 0.5) > 0.15; ++t)
    EXPECT_GT(steer[t], 0.5);
  EXPECT_NEAR(p.heading, kPi / 2, 0.15);
}

TEST(Expert, MissingBranchIsAnError) {
  const World& w = default_world();
  const Region& reg = w.regions[0];
  const Vec2 a = w.node_center(reg, {0, 0});
  // Heading east along the bottom row: there is no branch to the right.
  EXPECT_THROW(expert_steering(w, {a.x + 6.0, a.y, 0.0}, Action::Right), Error);
  EXPECT_NO_THROW(expert_steering(w, {a.x + 6.0, a.y, 0.0}, Action::Left));
}

TEST(Lap, RecordingProperties) {
  const World& w = default_world();
  const CourseSpec& c = testing::first_course("test");
  const Lap a = record_lap(w, c, 101), b = record_lap(w, c, 202);
  const double ratio = double(a.frames.size()) / double(b.frames.size());
  EXPECT_NEAR(ratio, 1.0, 0.05);
  EXPECT_NE(a.frames[0].raster_left, b.frames[0].raster_left);
  EXPECT_GT(a.frames.size(), 15 * c.route.size());
  for (std::size_t t = 0; t < a.frames.size(); ++t) EXPECT_EQ(a.frames[t].frame_index, int(t));
  EXPECT_EQ(record_lap(w, c, 101), a);
  CourseSpec empty = c;
  empty.route.clear();
  EXPECT_THROW(record_lap(w, empty, 1), Error);
}

TEST(Segment, OnsetLabelsPrecedingFrames) {
  CourseSpec c;
  c.route.push_back({4, {}, {}, Action::Left});
  Lap lap;
  for (int t = 0; t < 260; ++t) lap.frames.push_back({t, {}, {}, t >= 200 && t < 215 ? 0.9 : 0.5, {}});
  const Lap s = segment_lap(lap, c);
  for (int t = 0; t < 260; ++t) {
    const Label& l = s.frames[std::size_t(t)].label;
    EXPECT_EQ(l.waypoint, 4);
    EXPECT_EQ(l.kind, t >= 185 && t <= 199 ? Label::Kind::Positive : Label::Kind::Negative) << t;
  }
  CourseSpec straight;
  straight.route.push_back({0, {}, {}, Action::Straight});
  EXPECT_THROW(segment_lap(lap, straight), Error);
  CourseSpec two = c;
  two.route.push_back({5, {}, {}, Action::Right});
  EXPECT_THROW(segment_lap(lap, two), Error);
}

TEST(Segment, RecordedLapsArePartitioned) {
  const World& w = default_world();
  for (const auto& c : w.courses) {
    if (c.split != "test" && c.split != "long") continue;
    const Lap& lap = labelled_lap(c.id, 0);
    const auto segs = lap_segments(lap);
    ASSERT_EQ(segs.size(), c.route.size());
    for (const auto& f : lap.frames) EXPECT_NE(f.label.kind, Label::Kind::Unlabeled);
    int prev_end = 0;
    for (std::size_t k = 0; k < segs.size(); ++k) {
      EXPECT_EQ(segs[k].waypoint, c.route[k].id);
      EXPECT_EQ(segs[k].positive.length(), 15);
      // Negatives run from the previous positive segment up to this one.
      ASSERT_FALSE(segs[k].negatives.empty());
      EXPECT_EQ(segs[k].negatives[0].begin, prev_end);
      EXPECT_EQ(segs[k].negatives[0].end, segs[k].positive.begin);
      prev_end = segs[k].positive.end;
    }
    // The tail after the last turn counts towards the first waypoint.
    EXPECT_EQ(segs[0].negatives.back().end, int(lap.frames.size()));
  }
}

TEST(Kinematics, ExpertCompletesRandomWorlds) {
  WorldSpec s;
  s.camera.height = s.camera.width = 2;  // rendering is irrelevant here
  int laps = 0;
  for (std::uint64_t seed = 1000; seed < 1100; ++seed) {
    const World w = generate_world(seed, s);
    for (const auto& c : w.courses) {
      ASSERT_NO_THROW(record_lap(w, c, seed * 31 + std::uint64_t(c.id))) << "world " << seed << " course " << c.id;
      ++laps;
    }
  }
  EXPECT_EQ(laps, 100 * 25);
}

}  // namespace
}  // namespace waynav
