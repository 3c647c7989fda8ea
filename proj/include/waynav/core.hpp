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

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace waynav {

/// Base class of every error raised by the library. The category string
/// names the subsystem ("world", "render", "format", ...).
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& what)
      : std::runtime_error(category + ": " + what), category_(std::move(category)) {}
  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

inline constexpr double kPi = std::numbers::pi;

inline double deg2rad(double d) { return d * kPi / 180.0; }

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0) a += 2.0 * kPi;
  a -= kPi;
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

// ---------------------------------------------------------------------------
// Actions

enum class Action : std::uint8_t { Left = 0, Right = 1, Straight = 2 };

inline constexpr std::array<Action, 3> kAllActions = {Action::Left, Action::Right,
                                                      Action::Straight};

inline std::array<double, 3> one_hot(Action a) {
  std::array<double, 3> v{0.0, 0.0, 0.0};
  v[static_cast<std::size_t>(a)] = 1.0;
  return v;
}

inline Action mirrored(Action a) {
  switch (a) {
    case Action::Left: return Action::Right;
    case Action::Right: return Action::Left;
    case Action::Straight: return Action::Straight;
  }
  return a;
}

inline std::string_view to_string(Action a) {
  switch (a) {
    case Action::Left: return "left";
    case Action::Right: return "right";
    case Action::Straight: return "straight";
  }
  return "?";
}

inline Action parse_action(std::string_view s) {
  if (s == "left") return Action::Left;
  if (s == "right") return Action::Right;
  if (s == "straight") return Action::Straight;
  throw Error("format", "unknown action '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Raster: row-major grayscale image, values nominally in [0,1].

struct Raster {
  int height = 0;
  int width = 0;
  std::vector<float> px;

  Raster() = default;
  Raster(int h, int w, float fill = 0.0f) : height(h), width(w), px(std::size_t(h) * w, fill) {}

  float& at(int r, int c) { return px[std::size_t(r) * width + c]; }
  float at(int r, int c) const { return px[std::size_t(r) * width + c]; }
  std::size_t size() const { return px.size(); }

  bool operator==(const Raster&) const = default;
};

inline bool all_finite(const Raster& r) {
  for (float v : r.px)
    if (!std::isfinite(v)) return false;
  return true;
}

inline Raster flip_horizontal(const Raster& r) {
  Raster out(r.height, r.width);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x) out.at(y, x) = r.at(y, r.width - 1 - x);
  return out;
}

inline void clamp_unit(Raster& r) {
  for (float& v : r.px) v = std::fmin(1.0f, std::fmax(0.0f, v));
}

// ---------------------------------------------------------------------------
// Seeding. Every random stream is derived from (seed, tag, index) so that
// independent jobs stay reproducible regardless of scheduling.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
  std::uint64_t h = splitmix64(seed);
  for (char c : tag) h = splitmix64(h ^ static_cast<unsigned char>(c));
  return splitmix64(h ^ splitmix64(index + 0x51ed27f0ULL));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, tag, index));
}

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {  // inclusive
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double gaussian(Rng& rng, double sigma = 1.0) {
  return std::normal_distribution<double>(0.0, sigma)(rng);
}

// ---------------------------------------------------------------------------
// Little-endian float32 I/O shared by every binary format in the project.

inline void write_f32_le(std::ostream& os, const float* data, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(data), std::streamsize(n * sizeof(float)));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t u;
      std::memcpy(&u, data + i, 4);
      unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                            static_cast<unsigned char>(u >> 16),
                            static_cast<unsigned char>(u >> 24)};
      os.write(reinterpret_cast<const char*>(b), 4);
    }
  }
}

inline bool read_f32_le(std::istream& is, float* data, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    is.read(reinterpret_cast<char*>(data), std::streamsize(n * sizeof(float)));
    return std::size_t(is.gcount()) == n * sizeof(float);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      unsigned char b[4];
      is.read(reinterpret_cast<char*>(b), 4);
      if (is.gcount() != 4) return false;
      std::uint32_t u = b[0] | (b[1] << 8) | (b[2] << 16) | (std::uint32_t(b[3]) << 24);
      std::memcpy(data + i, &u, 4);
    }
    return true;
  }
}

/// Formats a double with round-trip precision, locale independent.
inline std::string fmt_double(double v, int precision = 17) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

inline std::string fmt_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace waynav
