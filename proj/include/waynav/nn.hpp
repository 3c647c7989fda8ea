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

// Small dense-network toolkit: affine layers, activations, Adam, and the
// tensor checkpoint format shared by the detector and the controller.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "waynav/core.hpp"

namespace waynav::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct Dense {
  Mat W;  // out x in
  Vec b;

  Dense() = default;
  Dense(int in, int out) : W(Mat::Zero(out, in)), b(Vec::Zero(out)) {}

  int in() const { return int(W.cols()); }
  int out() const { return int(W.rows()); }

  /// Columns of X are samples.
  Mat forward(const Mat& X) const { return (W * X).colwise() + b; }

  void set_zero() {
    W.setZero();
    b.setZero();
  }
  static Dense zeros_like(const Dense& d) { return Dense(d.in(), d.out()); }
  bool operator==(const Dense& o) const { return W == o.W && b == o.b; }
};

/// Accumulates parameter gradients into g and returns dL/dX.
inline Mat backward(const Dense& layer, const Mat& X, const Mat& dY, Dense& g) {
  g.W.noalias() += dY * X.transpose();
  g.b += dY.rowwise().sum();
  return layer.W.transpose() * dY;
}

/// Glorot-uniform weights, zero bias.
inline void init_glorot(Dense& d, Rng& rng, double gain = 1.0) {
  const double lim = gain * std::sqrt(6.0 / double(d.in() + d.out()));
  for (Eigen::Index i = 0; i < d.W.size(); ++i) d.W.data()[i] = uniform(rng, -lim, lim);
  d.b.setZero();
}

// ---------------------------------------------------------------------------
// Activations (elementwise). The *_grad helpers take the pre-activation.

inline Mat elu(const Mat& z) { return z.unaryExpr([](double v) { return v > 0 ? v : std::expm1(v); }); }
inline Mat elu_grad(const Mat& z) { return z.unaryExpr([](double v) { return v > 0 ? 1.0 : std::exp(v); }); }

inline Mat relu(const Mat& z) { return z.cwiseMax(0.0); }
inline Mat relu_grad(const Mat& z) { return z.unaryExpr([](double v) { return v > 0 ? 1.0 : 0.0; }); }

inline double sigmoid(double v) {
  return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}
inline Mat sigmoid(const Mat& z) { return z.unaryExpr([](double v) { return sigmoid(v); }); }

inline double softplus(double v) { return v > 30 ? v : std::log1p(std::exp(v)); }
inline Mat softplus(const Mat& z) { return z.unaryExpr([](double v) { return softplus(v); }); }

inline void check_finite(const Mat& m, const char* layer) {
  if (!m.allFinite()) throw Error("numeric", std::string("non-finite value in layer '") + layer + "'");
}

/// Rounds every entry to the nearest float32 so that float checkpoints
/// reproduce the in-memory parameters exactly.
inline void round_to_f32(Dense& d) {
  for (Eigen::Index i = 0; i < d.W.size(); ++i) d.W.data()[i] = double(float(d.W.data()[i]));
  for (Eigen::Index i = 0; i < d.b.size(); ++i) d.b.data()[i] = double(float(d.b.data()[i]));
}

// ---------------------------------------------------------------------------
// Named parameter views

struct TensorRef {
  std::string name;
  double* data = nullptr;
  Eigen::Index rows = 0, cols = 0;
  Eigen::Index size() const { return rows * cols; }
};

inline void add_dense(std::vector<TensorRef>& out, const std::string& name, Dense& d) {
  out.push_back({name + ".W", d.W.data(), d.W.rows(), d.W.cols()});
  out.push_back({name + ".b", d.b.data(), d.b.rows(), 1});
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long step = 0;
  std::vector<Vec> m, v;
};

/// One Adam update of params from grads (matching shapes, same order).
inline void adam_step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads,
                      AdamState& st, double lr, bool round_f32 = false) {
  if (params.size() != grads.size()) throw Error("optimizer", "parameter/gradient count mismatch");
  if (st.m.empty()) {
    for (const auto& p : params) {
      st.m.push_back(Vec::Zero(p.size()));
      st.v.push_back(Vec::Zero(p.size()));
    }
  }
  if (st.m.size() != params.size()) throw Error("optimizer", "moment count does not match parameters");
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, double(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, double(st.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    const auto& g = grads[k];
    if (p.size() != g.size() || st.m[k].size() != p.size())
      throw Error("optimizer", "shape mismatch for " + p.name);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double gi = g.data[i];
      double& mi = st.m[k][i];
      double& vi = st.v[k][i];
      mi = st.beta1 * mi + (1.0 - st.beta1) * gi;
      vi = st.beta2 * vi + (1.0 - st.beta2) * gi * gi;
      double np = p.data[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + st.eps);
      if (round_f32) np = double(float(np));
      p.data[i] = np;
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   waynav-checkpoint 1
//   <key> <value>          (metadata, any number of lines)
//   tensor <name> <rows> <cols>
//   ...
//   end
//   <binary little-endian float32 payload, tensors in header order, column-major>

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Mat>> tensors;

  const std::string& get(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw Error("format", "checkpoint lacks metadata key '" + key + "'");
    return it->second;
  }
  const Mat& tensor(const std::string& name) const {
    for (const auto& [n, m] : tensors)
      if (n == name) return m;
    throw Error("format", "checkpoint lacks tensor '" + name + "'");
  }
};

inline void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("format", "cannot write " + path);
  os << "waynav-checkpoint 1\n";
  for (const auto& [k, v] : ck.meta) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos)
      throw Error("format", "bad checkpoint metadata key '" + k + "'");
    os << k << ' ' << v << "\n";
  }
  for (const auto& [n, m] : ck.tensors) os << "tensor " << n << ' ' << m.rows() << ' ' << m.cols() << "\n";
  os << "end\n";
  std::vector<float> buf;
  for (const auto& [n, m] : ck.tensors) {
    buf.resize(std::size_t(m.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i) buf[std::size_t(i)] = float(m.data()[i]);
    write_f32_le(os, buf.data(), buf.size());
  }
  if (!os) throw Error("format", "write failed for " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("dependency", "checkpoint " + path + " not found");
  std::string line;
  if (!std::getline(is, line) || line != "waynav-checkpoint 1") throw Error("format", path + ": not a waynav checkpoint");
  Checkpoint ck;
  std::vector<std::tuple<std::string, long, long>> shapes;
  while (std::getline(is, line)) {
    if (line == "end") break;
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw Error("format", path + ": malformed header line '" + line + "'");
    const std::string key = line.substr(0, sp);
    if (key == "tensor") {
      std::istringstream ss(line.substr(sp + 1));
      std::string name;
      long r = -1, c = -1;
      if (!(ss >> name >> r >> c) || r < 0 || c < 0) throw Error("format", path + ": malformed tensor line");
      shapes.emplace_back(name, r, c);
    } else {
      ck.meta[key] = line.substr(sp + 1);
    }
  }
  if (line != "end") throw Error("format", path + ": header not terminated");
  std::vector<float> buf;
  for (const auto& [name, r, c] : shapes) {
    Mat m(r, c);
    buf.resize(std::size_t(r * c));
    if (!read_f32_le(is, buf.data(), buf.size())) throw Error("format", path + ": truncated tensor " + name);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = double(buf[std::size_t(i)]);
    ck.tensors.emplace_back(name, std::move(m));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw Error("format", path + ": trailing bytes after payload");
  return ck;
}

inline void put_dense(Checkpoint& ck, const std::string& name, const Dense& d) {
  ck.tensors.emplace_back(name + ".W", d.W);
  ck.tensors.emplace_back(name + ".b", Mat(d.b));
}

inline Dense get_dense(const Checkpoint& ck, const std::string& name, int in, int out) {
  Dense d;
  d.W = ck.tensor(name + ".W");
  const Mat& b = ck.tensor(name + ".b");
  if (d.W.rows() != out || d.W.cols() != in || b.rows() != out || b.cols() != 1)
    throw Error("format", "tensor " + name + " has unexpected shape");
  d.b = b.col(0);
  return d;
}

}  // namespace waynav::nn
