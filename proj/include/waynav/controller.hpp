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

// Action-conditioned steering controller and its imitation-learning data.

#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "waynav/datastore.hpp"
#include "waynav/nn.hpp"
#include "waynav/worldsim.hpp"

namespace waynav {

struct ControllerConfig {
  int input_height = 32;
  int input_width = 64;  // both cameras side by side
  int projection_dim = 256;
  int feature_dim = 64;
  int hidden = 32;
  double projection_scale = 3.0;
  double projection_bias = 0.5;
  double output_init_gain = 0.1;

  int input_dim() const { return input_height * input_width; }
};

struct ControllerWeights {
  nn::Dense trunk;  // projection_dim -> feature_dim, ReLU
  nn::Dense head1;  // feature_dim + 3 -> hidden, ReLU
  nn::Dense head2;  // hidden -> 1, Sigmoid

  static ControllerWeights zeros_like(const ControllerWeights& w) {
    return {nn::Dense::zeros_like(w.trunk), nn::Dense::zeros_like(w.head1), nn::Dense::zeros_like(w.head2)};
  }
  std::vector<nn::TensorRef> tensors() {
    std::vector<nn::TensorRef> t;
    nn::add_dense(t, "trunk", trunk);
    nn::add_dense(t, "head.0", head1);
    nn::add_dense(t, "head.1", head2);
    return t;
  }
  void set_zero() { trunk.set_zero(), head1.set_zero(), head2.set_zero(); }
  void round_to_f32() { nn::round_to_f32(trunk), nn::round_to_f32(head1), nn::round_to_f32(head2); }
  bool operator==(const ControllerWeights&) const = default;
};

struct ControllerParams {
  ControllerConfig config;
  nn::Dense projection;  // frozen
  ControllerWeights w;
  std::uint64_t seed_projection = 0, seed_init = 0;
};

inline ControllerParams init_controller(const ControllerConfig& cfg, std::uint64_t seed) {
  ControllerParams p;
  p.config = cfg;
  p.seed_projection = derive_seed(seed, "controller-projection");
  p.seed_init = derive_seed(seed, "controller-init");
  const int n = cfg.input_dim();
  Rng prng(p.seed_projection);
  p.projection = nn::Dense(n, cfg.projection_dim);
  const double sd = cfg.projection_scale / std::sqrt(double(n));
  for (Eigen::Index i = 0; i < p.projection.W.size(); ++i) p.projection.W.data()[i] = double(float(gaussian(prng, sd)));
  for (int i = 0; i < cfg.projection_dim; ++i)
    p.projection.b[i] = double(float(-0.5 * p.projection.W.row(i).sum() + gaussian(prng, cfg.projection_bias)));
  Rng rng(p.seed_init);
  p.w.trunk = nn::Dense(cfg.projection_dim, cfg.feature_dim);
  nn::init_glorot(p.w.trunk, rng);
  p.w.head1 = nn::Dense(cfg.feature_dim + 3, cfg.hidden);
  nn::init_glorot(p.w.head1, rng);
  p.w.head2 = nn::Dense(cfg.hidden, 1);
  nn::init_glorot(p.w.head2, rng, cfg.output_init_gain);
  p.w.round_to_f32();
  return p;
}

/// Left raster in columns [0, W), right raster in [W, 2W).
inline Raster concat_cameras(const Raster& left, const Raster& right) {
  if (left.height != right.height || left.width != right.width) throw Error("dimension", "camera rasters differ in size");
  Raster out(left.height, left.width * 2);
  for (int y = 0; y < left.height; ++y)
    for (int x = 0; x < left.width; ++x) {
      out.at(y, x) = left.at(y, x);
      out.at(y, x + left.width) = right.at(y, x);
    }
  return out;
}

inline nn::Mat controller_fixed_features(const ControllerParams& p, const nn::Mat& X) {
  if (X.rows() != p.projection.in()) throw Error("dimension", "controller input size mismatch");
  if (!X.allFinite()) throw Error("numeric", "non-finite controller input");
  return p.projection.forward(X).array().tanh().matrix();
}

inline nn::Vec controller_fixed_features(const ControllerParams& p, const Raster& left, const Raster& right) {
  const Raster c = concat_cameras(left, right);
  if (c.height != p.config.input_height || c.width != p.config.input_width)
    throw Error("dimension", "controller expects " + std::to_string(p.config.input_height) + "x" +
                                 std::to_string(p.config.input_width) + " concatenated input");
  nn::Mat X(c.size(), 1);
  for (std::size_t i = 0; i < c.size(); ++i) X(Eigen::Index(i), 0) = c.px[i];
  return controller_fixed_features(p, X).col(0);
}

struct ControllerCache {
  nn::Mat X0, Z1, F, In, Z2, H, Z3, Out;
};

/// A: 3 x N one-hot actions.
inline void controller_forward_batch(const ControllerParams& p, const nn::Mat& X0, const nn::Mat& A, ControllerCache& c) {
  c.X0 = X0;
  c.Z1 = p.w.trunk.forward(X0);
  c.F = nn::relu(c.Z1);
  c.In.resize(c.F.rows() + 3, c.F.cols());
  c.In.topRows(c.F.rows()) = c.F;
  c.In.bottomRows(3) = A;
  c.Z2 = p.w.head1.forward(c.In);
  c.H = nn::relu(c.Z2);
  c.Z3 = p.w.head2.forward(c.H);
  nn::check_finite(c.Z3, "controller");
  c.Out = nn::sigmoid(c.Z3);
}

/// dZ: gradient with respect to the output logits (1 x N).
inline void controller_backward_batch(const ControllerParams& p, const ControllerCache& c, const nn::Mat& dZ,
                                      ControllerWeights& g) {
  const nn::Mat dH = nn::backward(p.w.head2, c.H, dZ, g.head2);
  const nn::Mat dZ2 = dH.cwiseProduct(nn::relu_grad(c.Z2));
  const nn::Mat dIn = nn::backward(p.w.head1, c.In, dZ2, g.head1);
  const nn::Mat dZ1 = dIn.topRows(c.F.rows()).cwiseProduct(nn::relu_grad(c.Z1));
  nn::backward(p.w.trunk, c.X0, dZ1, g.trunk);
}

inline nn::Mat one_hot_matrix(std::span<const Action> actions) {
  nn::Mat A = nn::Mat::Zero(3, Eigen::Index(actions.size()));
  for (std::size_t i = 0; i < actions.size(); ++i) A(Eigen::Index(actions[i]), Eigen::Index(i)) = 1.0;
  return A;
}

inline double controller_forward_fixed(const ControllerParams& p, const nn::Vec& x0, Action a) {
  ControllerCache c;
  const Action acts[1] = {a};
  controller_forward_batch(p, nn::Mat(x0), one_hot_matrix(acts), c);
  return c.Out(0, 0);
}

inline double controller_forward(const ControllerParams& p, const Raster& left, const Raster& right, Action a) {
  return controller_forward_fixed(p, controller_fixed_features(p, left, right), a);
}

/// Mean squared error of a batch and, optionally, its gradient.
inline double controller_loss(const ControllerParams& p, const nn::Mat& X0, std::span<const Action> actions,
                              std::span<const double> targets, ControllerWeights* grad = nullptr) {
  ControllerCache c;
  controller_forward_batch(p, X0, one_hot_matrix(actions), c);
  const Eigen::Index n = X0.cols();
  double loss = 0;
  nn::Mat dZ(1, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = c.Out(0, i), e = y - targets[std::size_t(i)];
    loss += e * e;
    dZ(0, i) = 2.0 * e * y * (1.0 - y) / double(n);
  }
  loss /= double(n);
  if (!std::isfinite(loss)) throw Error("numeric", "non-finite controller loss");
  if (grad) controller_backward_batch(p, c, dZ, *grad);
  return loss;
}

// ---------------------------------------------------------------------------
// Samples and augmentation

struct ControlSample {
  Raster left, right;
  Action action = Action::Straight;
  double steering = 0.5;
  bool operator==(const ControlSample&) const = default;
};

/// Mirror image of a sample: both rasters flipped, cameras swapped,
/// steering reflected about center and turns exchanged.
inline ControlSample mirror_sample(const ControlSample& s) {
  return {flip_horizontal(s.right), flip_horizontal(s.left), mirrored(s.action), 1.0 - s.steering};
}

inline ControlSample mirror_augment(const ControlSample& s, Rng& rng) {
  return uniform(rng) < 0.5 ? mirror_sample(s) : s;
}

inline Raster gaussian_blur(const Raster& in, double sigma) {
  if (sigma <= 0) return in;
  const int r = std::max(1, int(std::ceil(2.5 * sigma)));
  std::vector<double> k(std::size_t(2 * r + 1));
  double sum = 0;
  for (int i = -r; i <= r; ++i) sum += k[std::size_t(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  Raster tmp(in.height, in.width), out(in.height, in.width);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[std::size_t(i + r)] * in.at(y, std::clamp(x + i, 0, in.width - 1));
      tmp.at(y, x) = float(acc);
    }
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[std::size_t(i + r)] * tmp.at(std::clamp(y + i, 0, in.height - 1), x);
      out.at(y, x) = float(acc);
    }
  return out;
}

struct ControlAugmentSpec {
  double brightness = 0.2;
  double contrast = 0.2;
  double blur_max_sigma = 0.8;
  double blur_probability = 0.3;
};

/// Jitter, occasional blur and a random mirror, applied to one sample.
inline ControlSample augment_control_sample(const ControlSample& s, Rng& rng, const ControlAugmentSpec& spec) {
  ControlSample out = mirror_augment(s, rng);
  const double b = uniform(rng, 1 - spec.brightness, 1 + spec.brightness);
  const double c = uniform(rng, 1 - spec.contrast, 1 + spec.contrast);
  const bool blur = uniform(rng) < spec.blur_probability;
  const double sigma = blur ? uniform(rng, 0.3, spec.blur_max_sigma) : 0.0;
  for (Raster* r : {&out.left, &out.right}) {
    for (float& v : r->px) v = float((v * b - 0.5) * c + 0.5);
    clamp_unit(*r);
    if (blur) *r = gaussian_blur(*r, sigma);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Data collection: the expert drives through a region choosing a random
// action at every intersection. The action label switches on a random
// distance before the intersection, stays on through the turn and reverts to
// Straight once steering re-centers, mirroring how the navigator latches
// and releases actions. Executed steering carries extra noise so that the
// data covers recoveries; labels are the clean expert command.

struct ControlCollectSpec {
  int drives_per_region = 6;
  int drive_frames = 500;
  double activation_min = 2.0;  // distance to the intersection center
  double activation_max = 7.0;
  double exec_noise = 0.08;     // AR(1) stationary sigma on executed steering
  double revert_threshold = 0.15;
  int revert_frames = 3;
};

inline std::vector<ControlSample> collect_control_samples(const World& w, const Region& reg, std::uint64_t seed,
                                                          const ControlCollectSpec& spec) {
  std::vector<ControlSample> out;
  const double rho = 0.9;
  const double cw = w.spec.corridor_width;
  struct Plan {
    Action action;
    double activation;
    int last_seen;
  };
  for (int d = 0; d < spec.drives_per_region; ++d) {
    Rng rng = make_rng(seed, "control-drive", std::uint64_t(reg.id) * 1000 + std::uint64_t(d));
    auto spawn = [&] {
      for (;;) {
        const NodeIdx from{uniform_int(rng, 0, reg.nodes - 1), uniform_int(rng, 0, reg.nodes - 1)};
        const int dir = uniform_int(rng, 0, 3);
        const NodeIdx st = dir_step(dir);
        if (!reg.contains({from.i + st.i, from.j + st.j})) continue;
        const Vec2 a = w.node_center(reg, from);
        return Pose{a.x + st.i * cw, a.y + st.j * cw, wrap_angle(dir * kPi / 2.0)};
      }
    };
    Pose pose = spawn();
    std::map<std::pair<int, int>, Plan> plans;  // keyed by (approached node, travel dir)
    Action label = Action::Straight;
    bool turning = false;
    int seen = 0, centered = 0;
    double ar = 0;
    for (int t = 0; t < spec.drive_frames; ++t) {
      const EdgeLocation loc = locate_edge(w, pose);
      const auto key = std::make_pair(loc.to.j * reg.nodes + loc.to.i, loc.dir);
      auto it = plans.find(key);
      if (it == plans.end() || t - it->second.last_seen > 20) {
        std::vector<Action> feasible;
        for (Action ac : kAllActions) {
          const NodeIdx es = dir_step(apply_action(loc.dir, ac));
          if (reg.contains({loc.to.i + es.i, loc.to.j + es.j})) feasible.push_back(ac);
        }
        Plan pl{feasible[std::size_t(uniform_int(rng, 0, int(feasible.size()) - 1))],
                uniform(rng, spec.activation_min, spec.activation_max), t};
        it = plans.insert_or_assign(key, pl).first;
      }
      it->second.last_seen = t;
      const Plan& plan = it->second;
      const double to_node = w.spec.period() - loc.along;
      if (label == Action::Straight && !turning && to_node <= plan.activation && to_node > 0) label = plan.action;
      const double expert = expert_steering(w, pose, plan.action);
      Observation obs = render_observation(
          w, pose, derive_seed(seed, "control-frame", (std::uint64_t(reg.id) * 1000 + std::uint64_t(d)) * 100000 + std::uint64_t(t)));
      out.push_back({std::move(obs.left), std::move(obs.right), label, expert});
      // The action is released once the turn has been seen and steering
      // has re-centered.
      if (label != Action::Straight) {
        const bool off = std::fabs(expert - 0.5) > spec.revert_threshold;
        if (!turning) {
          seen = off ? seen + 1 : 0;
          if (seen >= spec.revert_frames) turning = true;
        } else {
          centered = off ? 0 : centered + 1;
          if (centered >= spec.revert_frames) {
            label = Action::Straight;
            turning = false;
            seen = centered = 0;
          }
        }
      }
      ar = rho * ar + gaussian(rng, spec.exec_noise * std::sqrt(1 - rho * rho));
      StepResult st = step_vehicle(w, pose, std::clamp(expert + ar, 0.0, 1.0), w.spec.vehicle.dt);
      if (st.collision) {
        st.pose = spawn();
        plans.clear();
        label = Action::Straight;
        turning = false;
        seen = centered = 0;
        ar = 0;
      }
      pose = st.pose;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct ControllerHyper {
  int epochs = 100;
  int batch = 32;
  double lr = 1e-4;
  int augment_variants = 4;
  ControlAugmentSpec augment;
};

struct ControllerTrainResult {
  ControllerParams params;
  std::vector<double> epoch_loss;
};

using EpochLogger = std::function<void(int epoch, double loss)>;

inline ControllerTrainResult train_controller(const std::vector<ControlSample>& data, ControllerParams params,
                                              const ControllerHyper& hyper, std::uint64_t seed,
                                              const EpochLogger& log = {}) {
  if (data.empty()) throw Error("train", "controller training set is empty");
  if (hyper.epochs < 1 || hyper.batch < 1 || !(hyper.lr > 0)) throw Error("config", "bad controller hyperparameters");
  const int variants = std::max(1, hyper.augment_variants);
  const std::size_t n = data.size();
  // Precomputed frozen features of every augmented variant.
  Eigen::MatrixXf feats(params.config.projection_dim, Eigen::Index(n) * variants);
  std::vector<Action> acts(n * std::size_t(variants));
  std::vector<double> targets(n * std::size_t(variants));
  const int dim = params.config.input_dim();
  const std::size_t chunk = 256;
  for (std::size_t s = 0; s < n; s += chunk) {
    const std::size_t e = std::min(n, s + chunk);
    nn::Mat X(dim, Eigen::Index((e - s) * std::size_t(variants)));
    for (std::size_t i = s; i < e; ++i)
      for (int v = 0; v < variants; ++v) {
        Rng rng = make_rng(seed, "control-augment", i * 64 + std::size_t(v));
        const ControlSample a = hyper.augment_variants > 0 ? augment_control_sample(data[i], rng, hyper.augment) : data[i];
        const Raster c = concat_cameras(a.left, a.right);
        const Eigen::Index col = Eigen::Index((i - s) * std::size_t(variants) + std::size_t(v));
        for (int k = 0; k < dim; ++k) X(k, col) = c.px[std::size_t(k)];
        acts[i * std::size_t(variants) + std::size_t(v)] = a.action;
        targets[i * std::size_t(variants) + std::size_t(v)] = a.steering;
      }
    feats.middleCols(Eigen::Index(s) * variants, X.cols()) = controller_fixed_features(params, X).cast<float>();
  }
  nn::AdamState adam;
  ControllerWeights grad = ControllerWeights::zeros_like(params.w);
  ControllerTrainResult res;
  std::vector<std::size_t> order(n);
  for (int ep = 1; ep <= hyper.epochs; ++ep) {
    Rng rng = make_rng(seed, "control-epoch", std::uint64_t(ep));
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    for (std::size_t s = 0; s < n; s += std::size_t(hyper.batch)) {
      const std::size_t e = std::min(n, s + std::size_t(hyper.batch));
      nn::Mat X0(feats.rows(), Eigen::Index(e - s));
      std::vector<Action> ba(e - s);
      std::vector<double> bt(e - s);
      for (std::size_t k = s; k < e; ++k) {
        const std::size_t idx = order[k] * std::size_t(variants) + std::size_t(uniform_int(rng, 0, variants - 1));
        X0.col(Eigen::Index(k - s)) = feats.col(Eigen::Index(idx)).cast<double>();
        ba[k - s] = acts[idx];
        bt[k - s] = targets[idx];
      }
      grad.set_zero();
      const double loss = controller_loss(params, X0, ba, bt, &grad);
      if (!std::isfinite(loss)) throw Error("train", "non-finite controller loss in epoch " + std::to_string(ep));
      total += loss * double(e - s);
      nn::adam_step(params.w.tensors(), grad.tensors(), adam, hyper.lr, true);
    }
    res.epoch_loss.push_back(total / double(n));
    if (log) log(ep, res.epoch_loss.back());
  }
  res.params = std::move(params);
  return res;
}

/// Mean squared error of the controller over samples without augmentation.
inline double controller_mse(const ControllerParams& p, const std::vector<ControlSample>& data) {
  if (data.empty()) return 0.0;
  double acc = 0;
  for (const auto& s : data) {
    const double e = controller_forward(p, s.left, s.right, s.action) - s.steering;
    acc += e * e;
  }
  return acc / double(data.size());
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

inline void save_controller(const ControllerParams& p, const std::string& path) {
  nn::Checkpoint ck;
  const auto& c = p.config;
  ck.meta["model"] = "controller";
  ck.meta["input_height"] = std::to_string(c.input_height);
  ck.meta["input_width"] = std::to_string(c.input_width);
  ck.meta["projection_dim"] = std::to_string(c.projection_dim);
  ck.meta["feature_dim"] = std::to_string(c.feature_dim);
  ck.meta["hidden"] = std::to_string(c.hidden);
  ck.meta["projection_scale"] = fmt_double(c.projection_scale);
  ck.meta["projection_bias"] = fmt_double(c.projection_bias);
  ck.meta["output_init_gain"] = fmt_double(c.output_init_gain);
  ck.meta["seed_projection"] = std::to_string(p.seed_projection);
  ck.meta["seed_init"] = std::to_string(p.seed_init);
  nn::put_dense(ck, "projection", p.projection);
  nn::put_dense(ck, "trunk", p.w.trunk);
  nn::put_dense(ck, "head.0", p.w.head1);
  nn::put_dense(ck, "head.1", p.w.head2);
  nn::write_checkpoint(path, ck);
}

inline ControllerParams load_controller(const std::string& path) {
  const nn::Checkpoint ck = nn::read_checkpoint(path);
  if (ck.get("model") != "controller") throw Error("format", path + " is not a controller checkpoint");
  ControllerParams p;
  auto& c = p.config;
  c.input_height = std::stoi(ck.get("input_height"));
  c.input_width = std::stoi(ck.get("input_width"));
  c.projection_dim = std::stoi(ck.get("projection_dim"));
  c.feature_dim = std::stoi(ck.get("feature_dim"));
  c.hidden = std::stoi(ck.get("hidden"));
  c.projection_scale = std::stod(ck.get("projection_scale"));
  c.projection_bias = std::stod(ck.get("projection_bias"));
  c.output_init_gain = std::stod(ck.get("output_init_gain"));
  p.seed_projection = std::stoull(ck.get("seed_projection"));
  p.seed_init = std::stoull(ck.get("seed_init"));
  p.projection = nn::get_dense(ck, "projection", c.input_dim(), c.projection_dim);
  p.w.trunk = nn::get_dense(ck, "trunk", c.projection_dim, c.feature_dim);
  p.w.head1 = nn::get_dense(ck, "head.0", c.feature_dim + 3, c.hidden);
  p.w.head2 = nn::get_dense(ck, "head.1", c.hidden, 1);
  return p;
}

}  // namespace waynav
