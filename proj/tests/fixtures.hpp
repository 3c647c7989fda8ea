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

// Shared test data, built lazily once per test binary.

#pragma once

#include <filesystem>
#include <map>

#include "waynav/evalsuite.hpp"

namespace waynav::testing {

inline const World& default_world() {
  static const World w = generate_world(7, WorldSpec{});
  return w;
}

inline const CourseSpec& first_course(const std::string& split) {
  for (const auto& c : default_world().courses)
    if (c.split == split) return c;
  throw Error("test", "no course in split " + split);
}

/// Labelled lap of a default-world course, cached.
inline const Lap& labelled_lap(int course_id, int lap_id) {
  static std::map<std::pair<int, int>, Lap> cache;
  auto it = cache.find({course_id, lap_id});
  if (it == cache.end()) {
    const World& w = default_world();
    const CourseSpec& c = w.course(course_id);
    Lap lap = segment_lap(record_lap(w, c, derive_seed(7, "lap", std::uint64_t(course_id) * 100 + std::uint64_t(lap_id)), lap_id), c);
    it = cache.emplace(std::make_pair(course_id, lap_id), std::move(lap)).first;
  }
  return it->second;
}

/// Small detector for gradient and state-machine tests.
inline DetectorConfig small_detector_config(MetricKind kind = {}) {
  DetectorConfig c;
  c.feature_dim = 12;
  c.embed_dim = 4;
  c.cov_hidden = 6;
  c.classifier_hidden = {8, 6, 4};
  c.kind = kind;
  return c;
}

inline Raster random_raster(Rng& rng, int h = 32, int w = 32) {
  Raster r(h, w);
  for (auto& v : r.px) v = float(uniform(rng));
  return r;
}

inline GaussianDiag random_gaussian(Rng& rng, int d, double mean_sd = 1.0) {
  GaussianDiag g{Eigen::VectorXd(d), Eigen::VectorXd(d)};
  for (int i = 0; i < d; ++i) {
    g.mean[i] = gaussian(rng, mean_sd);
    g.var[i] = std::exp(uniform(rng, -2.0, 2.0));
  }
  return g;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("waynav_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace waynav::testing
