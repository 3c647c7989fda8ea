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

#include <numeric>

#include "fixtures.hpp"

namespace waynav {
namespace {

using testing::labelled_lap;

struct SmallSplits {
  Dataset train, val;
  std::vector<const CourseSpec*> val_courses;
};

const SmallSplits& splits() {
  static const SmallSplits s = [] {
    SmallSplits out;
    const World& w = testing::default_world();
    int ntrain = 0;
    for (const auto& c : w.courses) {
      if (c.split == "train" && ntrain < 2) {
        ++ntrain;
        out.train.courses.push_back({c.id, {labelled_lap(c.id, 0), labelled_lap(c.id, 1)}});
      }
      if (c.split == "val" && out.val_courses.empty()) {
        out.val.courses.push_back({c.id, {labelled_lap(c.id, 0), labelled_lap(c.id, 1)}});
        out.val_courses.push_back(&c);
      }
    }
    return out;
  }();
  return s;
}

TrainHyper quick(int phase, int iterations) {
  TrainHyper h = phase == 1 ? TrainHyper::phase1() : TrainHyper::phase2();
  h.iterations = iterations;
  h.batch_episodes = 4;
  h.validate_every = 10;
  h.augment_variants = 2;
  h.lr = 1e-2;
  return h;
}

TEST(Bce, ClosedFormExamples) {
  const std::vector<double> half = {0.5};
  const std::vector<int> one = {1};
  EXPECT_NEAR(bce_loss(half, one), std::log(2.0), 1e-12);
  const std::vector<double> p = {0.9, 0.1};
  const std::vector<int> y = {1, 0};
  EXPECT_NEAR(bce_loss(p, y), -0.5 * (std::log(0.9) + std::log(0.9)), 1e-12);
  EXPECT_NEAR(bce_loss(p, y), 0.1054, 1e-4);
  const std::vector<double> exact = {1.0, 0.0};
  EXPECT_NEAR(bce_loss(exact, y), 0.0, 1e-6);
  EXPECT_THROW(bce_loss(p, one), Error);
}

TEST(Schedule, HalvingTraces) {
  const TrainHyper h1 = TrainHyper::phase1(), h2 = TrainHyper::phase2();
  EXPECT_EQ(h1.iterations, 240);
  EXPECT_EQ(h1.batch_episodes, 36);
  EXPECT_EQ(h2.iterations, 4000);
  EXPECT_EQ(h2.batch_episodes, 3);
  EXPECT_DOUBLE_EQ(h1.lr_at(1), 1e-4);
  EXPECT_DOUBLE_EQ(h1.lr_at(160), 1e-4);
  EXPECT_DOUBLE_EQ(h1.lr_at(161), 5e-5);
  EXPECT_DOUBLE_EQ(h1.lr_at(240), 5e-5);
  EXPECT_DOUBLE_EQ(h2.lr_at(1000), 1e-5);
  EXPECT_DOUBLE_EQ(h2.lr_at(1001), 5e-6);
  EXPECT_DOUBLE_EQ(h2.lr_at(3001), 1.25e-6);
  EXPECT_DOUBLE_EQ(h2.lr_at(4000), 1.25e-6);
  const auto grid = default_threshold_grid();
  ASSERT_EQ(grid.size(), 13u);
  EXPECT_DOUBLE_EQ(grid.front(), 0.30);
  EXPECT_NEAR(grid.back(), 0.90, 1e-12);
}

TEST(Episode, SevenProbabilitiesAndZeroInputForIdenticalBlocks) {
  Rng rng(2);
  const DetectorParams p = init_detector(testing::small_detector_config(), 4);
  EpisodeFeatures e;
  e.shots = 10;
  e.labels = {1, 0, 0, 0, 0, 0, 0};
  e.X0 = nn::Mat(p.config.feature_dim, 8 * 10 * 2);
  for (Eigen::Index i = 0; i < e.X0.size(); ++i) e.X0.data()[i] = std::tanh(gaussian(rng));
  e.X0.middleCols(20, 20) = e.X0.leftCols(20);  // query 0 repeats the support block
  const EpisodeOutput out = episode_forward(p, e);
  ASSERT_EQ(out.probs.size(), 7u);
  EXPECT_DOUBLE_EQ(out.probs[0], classify(p, nn::Vec::Zero(p.config.classifier_input_dim())));
  e.X0.conservativeResize(Eigen::NoChange, e.X0.cols() - 1);
  EXPECT_THROW(episode_forward(p, e), Error);
}

TEST(TrainPhase, DefaultPhaseOneCountsAndFreezesBackbone) {
  const auto& s = splits();
  const DetectorParams init = init_detector(testing::small_detector_config(), 3);
  const ValidationSet vs(init, s.val, s.val_courses);
  TrainHyper h = TrainHyper::phase1();
  h.augment_variants = 1;
  const TrainResult r = train_phase(s.train, vs, init, h, 17);
  ASSERT_EQ(r.history.size(), 240u);
  const auto validations = std::count_if(r.history.begin(), r.history.end(), [](const HistoryRow& row) { return row.val_accuracy.has_value(); });
  EXPECT_GE(validations, 8);
  EXPECT_TRUE(r.history.back().val_accuracy.has_value());
  EXPECT_EQ(r.params.projection, init.projection);
  EXPECT_EQ(r.params.w.adapter, init.w.adapter);
  EXPECT_NE(r.params.w.mean_head, init.w.mean_head);
  EXPECT_DOUBLE_EQ(r.history[160].lr, 5e-5);
}

TEST(TrainPhase, PhaseTwoMovesOnlyTheAdapterOnTop) {
  const auto& s = splits();
  const DetectorParams init = init_detector(testing::small_detector_config(), 3);
  const ValidationSet vs(init, s.val, s.val_courses);
  const TrainResult r = train_phase(s.train, vs, init, quick(2, 20), 17);
  EXPECT_EQ(r.params.projection, init.projection);
  if (r.best_iteration > 0) {
    EXPECT_NE(r.params.w.adapter, init.w.adapter);
  }
}

TEST(TrainPhase, Deterministic) {
  const auto& s = splits();
  const DetectorParams init = init_detector(testing::small_detector_config(), 3);
  const ValidationSet vs(init, s.val, s.val_courses);
  const TrainResult a = train_phase(s.train, vs, init, quick(1, 30), 21);
  const TrainResult b = train_phase(s.train, vs, init, quick(1, 30), 21);
  EXPECT_EQ(a.params.w, b.params.w);
  EXPECT_EQ(history_csv(a.history), history_csv(b.history));
  const TrainResult c = train_phase(s.train, vs, init, quick(1, 30), 22);
  EXPECT_NE(history_csv(a.history), history_csv(c.history));
}

TEST(TrainPhase, SmoothedLossDecreases) {
  const auto& s = splits();
  for (std::uint64_t seed : {1, 2, 3}) {
    const DetectorParams init = init_detector(testing::small_detector_config(), seed);
    const ValidationSet vs(init, s.val, s.val_courses);
    TrainHyper h = quick(1, 200);
    h.validate_every = 200;
    const TrainResult r = train_phase(s.train, vs, init, h, seed);
    auto window_mean = [&](std::size_t from) {
      double acc = 0;
      for (std::size_t i = from; i < from + 20; ++i) acc += r.history[i].loss;
      return acc / 20;
    };
    EXPECT_LT(window_mean(r.history.size() - 20), window_mean(0)) << "seed " << seed;
  }
}

TEST(Validate, SingleThresholdGrid) {
  const auto& s = splits();
  const DetectorParams p = init_detector(testing::small_detector_config(), 3);
  const ValidationSet vs(p, s.val, s.val_courses);
  const auto [acc, thr] = validate(p, vs, {0.42});
  EXPECT_DOUBLE_EQ(thr, 0.42);
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);
}

TEST(TrainPhase, BadHyperRejected) {
  const auto& s = splits();
  const DetectorParams p = init_detector(testing::small_detector_config(), 3);
  const ValidationSet vs(p, s.val, s.val_courses);
  TrainHyper h = quick(1, 0);
  EXPECT_THROW(train_phase(s.train, vs, p, h, 1), Error);
  h = quick(1, 5);
  h.phase = 3;
  EXPECT_THROW(train_phase(s.train, vs, p, h, 1), Error);
}

}  // namespace
}  // namespace waynav
