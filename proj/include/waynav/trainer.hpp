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

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "waynav/datastore.hpp"
#include "waynav/embednet.hpp"
#include "waynav/offline.hpp"

namespace waynav {

struct TrainHyper {
  int phase = 1;
  int iterations = 240;
  int batch_episodes = 36;
  double lr = 1e-4;
  int lr_halve_every = 160;
  int lr_max_halvings = 1;  // -1: unlimited
  int validate_every = 32;
  EpisodeSpec episode;
  int augment_variants = 4;  // augmented copies of every training frame
  TransformSpec transforms;
  std::vector<double> thresholds = default_threshold_grid();

  static TrainHyper phase1() { return {}; }
  static TrainHyper phase2() {
    TrainHyper h;
    h.phase = 2;
    h.iterations = 4000;
    h.batch_episodes = 3;
    h.lr = 1e-5;
    h.lr_halve_every = 1000;
    h.lr_max_halvings = -1;
    h.validate_every = 200;
    return h;
  }

  void check() const {
    if (phase != 1 && phase != 2) throw Error("config", "phase must be 1 or 2");
    if (iterations < 1 || batch_episodes < 1 || lr_halve_every < 1 || validate_every < 1)
      throw Error("config", "training counts must be >= 1");
    if (!(lr > 0)) throw Error("config", "learning rate must be positive");
    if (augment_variants < 0) throw Error("config", "augment_variants must be >= 0");
    if (thresholds.empty()) throw Error("config", "threshold grid is empty");
  }

  /// Learning rate at 1-based iteration i.
  double lr_at(int i) const {
    int halvings = (i - 1) / lr_halve_every;
    if (lr_max_halvings >= 0) halvings = std::min(halvings, lr_max_halvings);
    return lr * std::ldexp(1.0, -halvings);
  }
};

struct HistoryRow {
  int iteration = 0;
  double loss = 0;
  double lr = 0;
  std::optional<double> val_accuracy;
  std::optional<double> val_threshold;
};

struct TrainResult {
  DetectorParams params;  // best validation checkpoint
  double best_accuracy = -1;
  double best_threshold = 0.5;
  int best_iteration = 0;
  std::vector<HistoryRow> history;
};

inline std::string history_csv(const std::vector<HistoryRow>& h) {
  std::string s = "iteration,loss,lr,val_accuracy,val_threshold\n";
  for (const auto& r : h) {
    s += std::to_string(r.iteration) + "," + fmt_double(r.loss, 10) + "," + fmt_double(r.lr, 10) + ",";
    if (r.val_accuracy) s += fmt_double(*r.val_accuracy, 10);
    s += ",";
    if (r.val_threshold) s += fmt_fixed(*r.val_threshold, 2);
    s += "\n";
  }
  return s;
}

// ---------------------------------------------------------------------------
// Fixed-feature bank. The projection is frozen in both phases, so the tanh
// features of every (augmented) training frame are computed once.

class FeatureBank {
 public:
  FeatureBank(const DetectorParams& p, const Dataset& ds, int variants, const TransformSpec& tspec,
              std::uint64_t seed) : variants_(std::max(1, variants)) {
    const int dim = p.config.input_dim();
    data_.resize(ds.courses.size());
    for (std::size_t c = 0; c < ds.courses.size(); ++c) {
      for (std::size_t l = 0; l < ds.courses[c].laps.size(); ++l) {
        const Lap& lap = ds.courses[c].laps[l];
        const int n = int(lap.frames.size());
        Eigen::MatrixXf feats(p.config.feature_dim, Eigen::Index(n) * variants_ * 2);
        const int chunk = 128;
        for (int s = 0; s < n; s += chunk) {
          const int e = std::min(n, s + chunk);
          Mat X(dim, Eigen::Index(e - s) * variants_ * 2);
          for (int t = s; t < e; ++t) {
            const auto& f = lap.frames[std::size_t(t)];
            for (int v = 0; v < variants_; ++v)
              for (int cam = 0; cam < 2; ++cam) {
                const Raster& r = cam == 0 ? f.raster_left : f.raster_right;
                const Eigen::Index col = (Eigen::Index(t - s) * variants_ + v) * 2 + cam;
                if (variants <= 0) {
                  for (int i = 0; i < dim; ++i) X(i, col) = r.px[std::size_t(i)];
                  continue;
                }
                const std::uint64_t key = ((std::uint64_t(lap.course_id) * 64 + std::uint64_t(lap.lap_id)) * 100000 +
                                           std::uint64_t(t)) * 64 + std::uint64_t(v * 2 + cam);
                Rng rng = make_rng(seed, "augment", key);
                const Raster a = apply_training_transforms(r, rng, tspec);
                for (int i = 0; i < dim; ++i) X(i, col) = a.px[std::size_t(i)];
              }
          }
          feats.middleCols(Eigen::Index(s) * variants_ * 2, X.cols()) = fixed_features(p, X).cast<float>();
        }
        data_[c].push_back(std::move(feats));
      }
    }
  }

  int variants() const { return variants_; }

  auto column(int course, int lap, int frame, int variant, int cam) const {
    return data_[std::size_t(course)][std::size_t(lap)].col((Eigen::Index(frame) * variants_ + variant) * 2 + cam);
  }

  /// Assembles the episode feature matrix, drawing one variant per frame.
  EpisodeFeatures gather(const Episode& ep, Rng& rng) const {
    EpisodeFeatures e;
    e.shots = ep.support.length;
    e.labels = ep.labels;
    const int blocks = 1 + int(ep.queries.size());
    e.X0.resize(column(0, 0, 0, 0, 0).rows(), Eigen::Index(blocks) * e.shots * 2);
    for (int b = 0; b < blocks; ++b) {
      const FrameBlock& fb = b == 0 ? ep.support : ep.queries[std::size_t(b - 1)];
      if (fb.length != e.shots) throw Error("sampler", "episode blocks differ in length");
      for (int k = 0; k < e.shots; ++k) {
        const int v = variants_ > 1 ? uniform_int(rng, 0, variants_ - 1) : 0;
        for (int cam = 0; cam < 2; ++cam)
          e.X0.col(e.col(b, k, cam)) = column(fb.course, fb.lap, fb.begin + k, v, cam).cast<double>();
      }
    }
    return e;
  }

 private:
  int variants_;
  std::vector<std::vector<Eigen::MatrixXf>> data_;
};

// ---------------------------------------------------------------------------
// Validation

/// Validation courses with their laps and cached fixed features.
class ValidationSet {
 public:
  ValidationSet(const DetectorParams& p, const Dataset& ds, std::vector<const CourseSpec*> courses, OfflineSpec spec = {})
      : ds_(&ds), courses_(std::move(courses)), spec_(spec) {
    if (ds.courses.empty()) throw Error("eval", "empty validation set");
    if (courses_.size() != ds.courses.size()) throw Error("eval", "validation courses do not match the dataset");
    for (const auto& cd : ds.courses) {
      std::vector<Mat> laps;
      for (const auto& lap : cd.laps) {
        const int dim = p.config.input_dim();
        Mat X(dim, Eigen::Index(lap.frames.size()) * 2);
        for (std::size_t t = 0; t < lap.frames.size(); ++t)
          for (int i = 0; i < dim; ++i) {
            X(i, Eigen::Index(2 * t)) = lap.frames[t].raster_left.px[std::size_t(i)];
            X(i, Eigen::Index(2 * t + 1)) = lap.frames[t].raster_right.px[std::size_t(i)];
          }
        laps.push_back(fixed_features(p, X));
      }
      fixed_.push_back(std::move(laps));
    }
  }

  OfflineSweep sweep(const DetectorParams& p, const std::vector<double>& thresholds, int jobs = 1) const {
    std::vector<EvalCourse> ec(ds_->courses.size());
    for (std::size_t c = 0; c < ds_->courses.size(); ++c) {
      ec[c].course = courses_[c];
      for (std::size_t l = 0; l < ds_->courses[c].laps.size(); ++l) {
        ec[c].laps.push_back(&ds_->courses[c].laps[l]);
        ec[c].memory.push_back(embed_fixed_batch(p, fixed_[c][l]));
      }
      ec[c].test = ec[c].memory;
    }
    return offline_sweep(p, ec, thresholds, spec_, jobs);
  }

 private:
  const Dataset* ds_;
  std::vector<const CourseSpec*> courses_;
  OfflineSpec spec_;
  std::vector<std::vector<Mat>> fixed_;
};

/// Best validation accuracy over the grid and its threshold.
inline std::pair<double, double> validate(const DetectorParams& p, const ValidationSet& vs,
                                          const std::vector<double>& thresholds, int jobs = 1) {
  const OfflineSweep s = vs.sweep(p, thresholds, jobs);
  const std::size_t b = s.best_index();
  return {s.pooled(b).accuracy(), thresholds[b]};
}

// ---------------------------------------------------------------------------
// Training

using TrainLogger = std::function<void(const HistoryRow&)>;

/// One training phase. Phase 1 updates the heads and classifier; phase 2
/// additionally updates the adapter. Returns the best validation checkpoint.
inline TrainResult train_phase(const Dataset& train, const ValidationSet& val, DetectorParams params,
                               const TrainHyper& hyper, std::uint64_t seed, const TrainLogger& log = {},
                               int jobs = 1) {
  hyper.check();
  const bool adapter = hyper.phase == 2;
  EpisodeSampler sampler(train, hyper.episode);
  if (sampler.empty()) throw Error("sampler", "no eligible waypoint in the training set");
  const FeatureBank bank(params, train, hyper.augment_variants, hyper.transforms, derive_seed(seed, "feature-bank"));
  nn::AdamState adam;
  DetectorWeights grad = DetectorWeights::zeros_like(params.w);
  TrainResult res;
  res.params = params;
  for (int it = 1; it <= hyper.iterations; ++it) {
    const double lr = hyper.lr_at(it);
    Rng rng = make_rng(seed, hyper.phase == 1 ? "train-phase1" : "train-phase2", std::uint64_t(it));
    grad.set_zero();
    double loss = 0;
    for (int b = 0; b < hyper.batch_episodes; ++b) {
      const Episode ep = sampler.sample(rng);
      const EpisodeFeatures ef = bank.gather(ep, rng);
      loss += episode_forward(params, ef, &grad, adapter, 1.0 / hyper.batch_episodes).loss;
    }
    loss /= hyper.batch_episodes;
    if (!std::isfinite(loss)) throw Error("train", "non-finite loss at iteration " + std::to_string(it));
    nn::adam_step(params.w.tensors(adapter), grad.tensors(adapter), adam, lr, true);
    HistoryRow row{it, loss, lr, std::nullopt, std::nullopt};
    if (it % hyper.validate_every == 0 || it == hyper.iterations) {
      const auto [acc, thr] = validate(params, val, hyper.thresholds, jobs);
      row.val_accuracy = acc;
      row.val_threshold = thr;
      if (acc > res.best_accuracy) {
        res.best_accuracy = acc;
        res.best_threshold = thr;
        res.best_iteration = it;
        res.params = params;
      }
    }
    res.history.push_back(row);
    if (log) log(row);
  }
  return res;
}

}  // namespace waynav
