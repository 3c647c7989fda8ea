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

#include "fixtures.hpp"

namespace waynav {
namespace {

FrameEmbedding point(double m) {
  const GaussianDiag g{Eigen::VectorXd::Constant(1, m), Eigen::VectorXd::Constant(1, 1.0)};
  return {g, g};
}

/// Detector whose classifier computes sigmoid(kBias - d_left) under the
/// Euclidean metric, so slot probabilities can be set through slot means.
constexpr double kBias = 5.0;
DetectorParams transparent_detector() {
  DetectorConfig c = testing::small_detector_config({Metric::Euclidean, InputForm::Multivariate});
  c.embed_dim = 1;
  c.classifier_hidden = {2, 2, 2};
  DetectorParams p = init_detector(c, 1);
  for (auto& l : p.w.cls) l.set_zero();
  p.w.cls[0].W(0, 0) = 1;
  p.w.cls[1].W(0, 0) = 1;
  p.w.cls[2].W(0, 0) = 1;
  p.w.cls[3].W(0, 0) = -1;
  p.w.cls[3].b[0] = kBias;
  return p;
}

/// Slot whose probability against a zero-mean query is prob.
FrameEmbedding slot_with_probability(double prob) {
  const double d2 = kBias - std::log(prob / (1 - prob));
  FrameEmbedding e = point(std::sqrt(d2));
  e.right = point(0).right;
  return e;
}

struct Fixture {
  DetectorParams params = transparent_detector();
  MemoryBank bank;
  ActionLUT lut;
  Fixture(std::vector<std::vector<double>> probs, std::vector<Action> actions) {
    for (std::size_t k = 0; k < probs.size(); ++k) {
      bank.waypoint_ids.push_back(int(k) * 10 + 3);
      std::vector<FrameEmbedding> slots;
      for (double p : probs[k]) slots.push_back(slot_with_probability(p));
      bank.slots.push_back(slots);
      lut.entries.emplace_back(int(k) * 10 + 3, actions[k]);
    }
  }
};

NavConfig plain(int refractory = 0) {
  NavConfig c;
  c.refractory = refractory;
  c.auto_revert = false;
  c.hold_during_turn = false;
  return c;
}

void fill(Navigator& nav, int n = 10) {
  for (int k = 0; k < n; ++k) nav.push_frame(point(0));
}

TEST(Classifier, TransparentDetectorHitsRequestedProbability) {
  const DetectorParams p = transparent_detector();
  for (double prob : {0.3, 0.64, 0.7, 0.99})
    EXPECT_NEAR(max_slot_probability(p, point(0), {slot_with_probability(prob)}), prob, 1e-12);
}

/// Lap with one waypoint whose positive window has the given length.
std::pair<Lap, CourseSpec> window_lap(int positive) {
  CourseSpec c;
  c.route.push_back({7, {}, {}, Action::Right});
  Lap lap;
  for (int t = 0; t < 40; ++t)
    lap.frames.push_back({t, {}, {}, 0.5, {t >= 20 && t < 20 + positive ? Label::Kind::Positive : Label::Kind::Negative, 7}});
  return {lap, c};
}

TEST(Memory, SlidingWindowGeometry) {
  std::vector<FrameEmbedding> emb;
  for (int t = 0; t < 40; ++t) emb.push_back(point(t));
  {
    const auto [lap, c] = window_lap(15);
    const auto [bank, lut] = build_memory(lap, emb, c, 10);
    ASSERT_EQ(bank.slots_for(7).size(), 6u);
    for (int k = 0; k < 6; ++k)  // slot k averages frames 20+k .. 29+k
      EXPECT_DOUBLE_EQ(bank.slots_for(7)[std::size_t(k)].left.mean[0], 20 + k + 4.5);
    EXPECT_EQ(lut.at(7), Action::Right);
    EXPECT_THROW(lut.at(8), Error);
  }
  {
    const auto [lap, c] = window_lap(10);
    EXPECT_EQ(build_memory(lap, emb, c, 10).first.slots_for(7).size(), 1u);
  }
  {
    const auto [lap, c] = window_lap(9);
    EXPECT_THROW(build_memory(lap, emb, c, 10), Error);
  }
}

TEST(Memory, RecordedLapGivesSixSlotsPerWaypoint) {
  const CourseSpec& c = testing::first_course("test");
  const Lap& lap = testing::labelled_lap(c.id, 0);
  const DetectorParams p = init_detector(testing::small_detector_config(), 2);
  const auto [bank, lut] = build_memory(lap, p, c);
  ASSERT_EQ(bank.size(), c.route.size());
  for (std::size_t k = 0; k < c.route.size(); ++k) {
    EXPECT_EQ(bank.waypoint_ids[k], c.route[k].id);
    EXPECT_EQ(bank.slots[k].size(), 6u);
    EXPECT_EQ(lut.at(c.route[k].id), c.route[k].action);
  }
  const auto dir = testing::scratch_dir("memory");
  save_memory(bank, lut, (dir / "m.mem").string());
  const auto [b2, l2] = load_memory((dir / "m.mem").string());
  ASSERT_EQ(b2.waypoint_ids, bank.waypoint_ids);
  EXPECT_EQ(l2.entries, lut.entries);
  for (std::size_t k = 0; k < bank.size(); ++k)
    for (std::size_t s = 0; s < 6; ++s) {
      EXPECT_TRUE(b2.slots[k][s].left.mean.isApprox(bank.slots[k][s].left.mean, 1e-6));
      EXPECT_TRUE(b2.slots[k][s].right.var.isApprox(bank.slots[k][s].right.var, 1e-6));
    }
}

TEST(Ring, EvictsOldestAndNeedsFullRing) {
  Fixture f({{0.99}}, {Action::Left});
  Navigator nav(f.bank, f.lut, f.params, plain());
  nav.push_frame(point(0));
  EXPECT_EQ(nav.ring_size(), 1u);
  EXPECT_FALSE(nav.upcoming_probability().has_value());
  EXPECT_FALSE(nav.detect().has_value());
  for (int k = 1; k <= 10; ++k) nav.push_frame(point(k));
  EXPECT_EQ(nav.ring_size(), 10u);
  EXPECT_EQ(nav.ring().front().left.mean[0], 1.0);
  EXPECT_EQ(nav.ring().back().left.mean[0], 10.0);
}

TEST(Detect, MaxOverSlotsAgainstThreshold) {
  Fixture f({{0.3, 0.7, 0.4, 0.2, 0.1, 0.5}}, {Action::Left});
  NavConfig c = plain();
  c.threshold = 0.65;
  Navigator nav(f.bank, f.lut, f.params, c);
  fill(nav);
  const auto d = nav.detect();
  ASSERT_TRUE(d.has_value());
  EXPECT_NEAR(d->probability, 0.7, 1e-12);
  EXPECT_EQ(d->waypoint_id, 3);
  EXPECT_EQ(d->action, Action::Left);
  EXPECT_TRUE(nav.complete());
  EXPECT_FALSE(nav.detect().has_value());  // course complete
}

TEST(Detect, StrictThreshold) {
  Fixture f({{0.64}, {0.65}}, {Action::Left, Action::Right});
  NavConfig c = plain();
  c.threshold = 0.65;
  Navigator nav(f.bank, f.lut, f.params, c);
  fill(nav);
  EXPECT_FALSE(nav.detect().has_value());
  nav.skip_to(1);
  EXPECT_FALSE(nav.detect().has_value());  // p == threshold does not fire
}

TEST(Detect, ComparesOnlyTheUpcomingWaypoint) {
  Fixture f({{0.1}, {0.99}, {0.99}}, {Action::Left, Action::Right, Action::Left});
  Navigator nav(f.bank, f.lut, f.params, plain());
  fill(nav);
  for (int k = 0; k < 20; ++k) {
    EXPECT_FALSE(nav.detect().has_value());
    EXPECT_EQ(nav.last_compared(), 0);
  }
  nav.skip_to(1);
  const auto d = nav.detect();
  ASSERT_TRUE(d.has_value());
  EXPECT_EQ(d->route_index, 1);
  EXPECT_EQ(nav.upcoming(), 2);
  EXPECT_THROW(nav.skip_to(0), Error);
}

TEST(Latch, HoldsUntilNextDetection) {
  Fixture f({{0.99}, {0.99}, {0.1}}, {Action::Left, Action::Right, Action::Left});
  Navigator nav(f.bank, f.lut, f.params, plain(10));
  EXPECT_EQ(nav.current_action(), Action::Straight);
  fill(nav);
  ASSERT_TRUE(nav.detect().has_value());
  EXPECT_EQ(nav.current_action(), Action::Left);
  // Refractory: the next n_q frames cannot fire even though p = 0.99.
  for (int k = 0; k < 9; ++k) {
    nav.push_frame(point(0));
    EXPECT_FALSE(nav.detect().has_value());
    EXPECT_EQ(nav.current_action(), Action::Left);
  }
  nav.push_frame(point(0));
  ASSERT_TRUE(nav.detect().has_value());
  EXPECT_EQ(nav.current_action(), Action::Right);
  for (int k = 0; k < 30; ++k) {
    nav.push_frame(point(0));
    EXPECT_FALSE(nav.detect().has_value());
    EXPECT_EQ(nav.current_action(), Action::Right);
  }
}

TEST(Latch, RevertAfterCompletedTurnAndHold) {
  Fixture f({{0.99}, {0.99}}, {Action::Left, Action::Right});
  NavConfig c;
  c.refractory = 0;
  Navigator nav(f.bank, f.lut, f.params, c);
  fill(nav);
  ASSERT_TRUE(nav.detect().has_value());
  nav.push_frame(point(0));
  EXPECT_FALSE(nav.detect().has_value()) << "no comparisons while the turn executes";
  for (int k = 0; k < 3; ++k) nav.observe_steering(0.9);
  EXPECT_EQ(nav.current_action(), Action::Left);
  for (int k = 0; k < 3; ++k) nav.observe_steering(0.5);
  EXPECT_EQ(nav.current_action(), Action::Straight);
  for (int k = 0; k < 9; ++k) {
    nav.push_frame(point(0));
    EXPECT_FALSE(nav.detect().has_value());
  }
  nav.push_frame(point(0));
  EXPECT_TRUE(nav.detect().has_value());
}

TEST(Replay, RecordedLapIsDeterministicAndMonotone) {
  const CourseSpec& c = testing::first_course("test");
  const DetectorParams p = init_detector(testing::small_detector_config(), 2);
  const auto [bank, lut] = build_memory(testing::labelled_lap(c.id, 0), p, c);
  const MemoryBank bank_before = bank;
  const auto emb = embed_lap(p, testing::labelled_lap(c.id, 1));
  auto run = [&](double threshold) {
    NavConfig cfg = plain(10);
    cfg.threshold = threshold;
    Navigator nav(bank, lut, p, cfg);
    std::vector<Detection> out;
    for (const auto& e : emb) {
      nav.push_frame(e);
      const int before = nav.upcoming();
      if (auto d = nav.detect()) {
        EXPECT_EQ(d->route_index, before);
        out.push_back(*d);
      }
      if (!nav.complete() && nav.ring_size() == 10u) {
        EXPECT_LE(nav.last_compared(), nav.upcoming());
      }
    }
    return out;
  };
  for (double thr : {0.0, 0.3, 0.5}) {
    const auto a = run(thr), b = run(thr);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      EXPECT_EQ(a[k].waypoint_id, b[k].waypoint_id);
      EXPECT_EQ(a[k].probability, b[k].probability);
      if (k) {
        EXPECT_GT(a[k].waypoint_id, a[k - 1].waypoint_id);
      }
    }
  }
  EXPECT_EQ(run(0.0).size(), c.route.size());  // everything fires in order
  ASSERT_EQ(bank.waypoint_ids, bank_before.waypoint_ids);
  for (std::size_t k = 0; k < bank.size(); ++k)
    for (std::size_t s = 0; s < bank.slots[k].size(); ++s) EXPECT_EQ(bank.slots[k][s].left, bank_before.slots[k][s].left);
}

}  // namespace
}  // namespace waynav
