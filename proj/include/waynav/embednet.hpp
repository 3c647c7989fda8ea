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

// Waypoint detector: frozen random projection + trainable adapter, Gaussian
// embedding heads (mean, diagonal variance) and the dissimilarity classifier.

#pragma once

#include <array>
#include <string>
#include <vector>

#include "waynav/core.hpp"
#include "waynav/distmetrics.hpp"
#include "waynav/nn.hpp"
#include "waynav/worldsim.hpp"

namespace waynav {

using nn::Dense;
using nn::Mat;
using nn::Vec;

struct DetectorConfig {
  int input_height = 32;
  int input_width = 32;
  int feature_dim = 512;  // F
  int embed_dim = 64;     // D
  int cov_hidden = 64;
  std::array<int, 3> classifier_hidden = {64, 32, 16};
  double var_floor = 1e-6;
  double projection_scale = 3.0;  // weight std = scale / sqrt(H*W)
  double projection_bias = 0.5;   // std of the random bias
  MetricKind kind;

  int input_dim() const { return input_height * input_width; }
  int classifier_input_dim() const { return 2 * int(dissim_size(kind.form, embed_dim)); }
};

/// Everything trainable. Doubles as the gradient container.
struct DetectorWeights {
  Dense adapter;
  Dense mean_head;
  Dense cov1, cov2;
  std::array<Dense, 4> cls;

  static DetectorWeights zeros_like(const DetectorWeights& w) {
    DetectorWeights g;
    g.adapter = Dense::zeros_like(w.adapter);
    g.mean_head = Dense::zeros_like(w.mean_head);
    g.cov1 = Dense::zeros_like(w.cov1);
    g.cov2 = Dense::zeros_like(w.cov2);
    for (std::size_t i = 0; i < 4; ++i) g.cls[i] = Dense::zeros_like(w.cls[i]);
    return g;
  }

  /// Tensors in a fixed order; the adapter comes first and is optional.
  std::vector<nn::TensorRef> tensors(bool with_adapter) {
    std::vector<nn::TensorRef> t;
    if (with_adapter) nn::add_dense(t, "adapter", adapter);
    nn::add_dense(t, "mean_head", mean_head);
    nn::add_dense(t, "cov_head.0", cov1);
    nn::add_dense(t, "cov_head.1", cov2);
    for (std::size_t i = 0; i < 4; ++i) nn::add_dense(t, "classifier." + std::to_string(i), cls[i]);
    return t;
  }

  void set_zero() {
    adapter.set_zero(), mean_head.set_zero(), cov1.set_zero(), cov2.set_zero();
    for (auto& c : cls) c.set_zero();
  }

  void round_to_f32() {
    nn::round_to_f32(adapter), nn::round_to_f32(mean_head), nn::round_to_f32(cov1), nn::round_to_f32(cov2);
    for (auto& c : cls) nn::round_to_f32(c);
  }

  bool operator==(const DetectorWeights&) const = default;
};

struct DetectorParams {
  DetectorConfig config;
  Dense projection;  // frozen, input_dim -> F
  DetectorWeights w;
  std::uint64_t seed_projection = 0;
  std::uint64_t seed_init = 0;

  const MetricKind& kind() const { return config.kind; }
};

inline DetectorParams init_detector(const DetectorConfig& cfg, std::uint64_t seed) {
  if (cfg.feature_dim < 1 || cfg.embed_dim < 1 || cfg.input_dim() < 1) throw Error("config", "detector dimensions must be positive");
  DetectorParams p;
  p.config = cfg;
  p.seed_projection = derive_seed(seed, "detector-projection");
  p.seed_init = derive_seed(seed, "detector-init");
  const int n = cfg.input_dim(), f = cfg.feature_dim, d = cfg.embed_dim;

  // Pixels are centered at 0.5 through the bias.
  Rng prng(p.seed_projection);
  p.projection = Dense(n, f);
  const double sd = cfg.projection_scale / std::sqrt(double(n));
  for (Eigen::Index i = 0; i < p.projection.W.size(); ++i) p.projection.W.data()[i] = double(float(gaussian(prng, sd)));
  for (int i = 0; i < f; ++i) {
    const double centering = -0.5 * p.projection.W.row(i).sum();
    p.projection.b[i] = double(float(centering + gaussian(prng, cfg.projection_bias)));
  }

  Rng rng(p.seed_init);
  p.w.adapter = Dense(f, f);
  p.w.adapter.W.setIdentity();
  p.w.mean_head = Dense(f, d);
  nn::init_glorot(p.w.mean_head, rng);
  p.w.cov1 = Dense(f, cfg.cov_hidden);
  nn::init_glorot(p.w.cov1, rng);
  p.w.cov2 = Dense(cfg.cov_hidden, d);
  nn::init_glorot(p.w.cov2, rng);
  int in = cfg.classifier_input_dim();
  for (std::size_t i = 0; i < 4; ++i) {
    const int out = i < 3 ? cfg.classifier_hidden[i] : 1;
    p.w.cls[i] = Dense(in, out);
    nn::init_glorot(p.w.cls[i], rng);
    in = out;
  }
  p.w.round_to_f32();
  return p;
}

// ---------------------------------------------------------------------------
// Backbone

inline Vec flatten(const Raster& r) {
  Vec x(Eigen::Index(r.size()));
  for (std::size_t i = 0; i < r.size(); ++i) x[Eigen::Index(i)] = r.px[i];
  return x;
}

/// tanh(P x + c) for every column of X (the frozen part of the backbone).
inline Mat fixed_features(const DetectorParams& p, const Mat& X) {
  if (X.rows() != p.projection.in()) throw Error("dimension", "raster size does not match the detector input");
  if (!X.allFinite()) throw Error("numeric", "non-finite raster value");
  return p.projection.forward(X).array().tanh().matrix();
}

inline Vec fixed_features(const DetectorParams& p, const Raster& r) {
  if (r.height != p.config.input_height || r.width != p.config.input_width)
    throw Error("dimension", "raster is " + std::to_string(r.height) + "x" + std::to_string(r.width) + ", detector expects " +
                                 std::to_string(p.config.input_height) + "x" + std::to_string(p.config.input_width));
  return fixed_features(p, Mat(flatten(r))).col(0);
}

inline Vec backbone_features(const DetectorParams& p, const Raster& r) {
  return p.w.adapter.forward(Mat(fixed_features(p, r))).col(0);
}

// ---------------------------------------------------------------------------
// Embedding heads over a batch of fixed-feature columns

struct HeadCache {
  Mat X0, H, Z1, G, Z2, Mu, Var;
};

inline void heads_forward(const DetectorParams& p, const Mat& X0, HeadCache& c) {
  c.X0 = X0;
  c.H = p.w.adapter.forward(X0);
  nn::check_finite(c.H, "adapter");
  c.Mu = p.w.mean_head.forward(c.H);
  nn::check_finite(c.Mu, "mean_head");
  c.Z1 = p.w.cov1.forward(c.H);
  c.G = nn::elu(c.Z1);
  c.Z2 = p.w.cov2.forward(c.G);
  nn::check_finite(c.Z2, "cov_head");
  c.Var = (nn::softplus(c.Z2).array() + p.config.var_floor).matrix();
}

inline void heads_backward(const DetectorParams& p, const HeadCache& c, const Mat& dMu, const Mat& dVar,
                           DetectorWeights& g, bool adapter_trainable) {
  const Mat dZ2 = dVar.cwiseProduct(nn::sigmoid(c.Z2));
  const Mat dG = nn::backward(p.w.cov2, c.G, dZ2, g.cov2);
  const Mat dZ1 = dG.cwiseProduct(nn::elu_grad(c.Z1));
  Mat dH = nn::backward(p.w.cov1, c.H, dZ1, g.cov1);
  dH += nn::backward(p.w.mean_head, c.H, dMu, g.mean_head);
  if (adapter_trainable) nn::backward(p.w.adapter, c.X0, dH, g.adapter);
}

struct FrameEmbedding {
  GaussianDiag left, right;
};

inline FrameEmbedding embed_fixed(const DetectorParams& p, const Vec& x0_left, const Vec& x0_right) {
  Mat X0(x0_left.size(), 2);
  X0.col(0) = x0_left;
  X0.col(1) = x0_right;
  HeadCache c;
  heads_forward(p, X0, c);
  return {GaussianDiag(c.Mu.col(0), c.Var.col(0)), GaussianDiag(c.Mu.col(1), c.Var.col(1))};
}

inline FrameEmbedding embed_frame(const DetectorParams& p, const Raster& left, const Raster& right) {
  return embed_fixed(p, fixed_features(p, left), fixed_features(p, right));
}

inline FrameEmbedding embed_frame(const DetectorParams& p, const FrameRecord& f) {
  return embed_frame(p, f.raster_left, f.raster_right);
}

/// Embeds many frames at once; columns of X0 alternate left/right per frame.
inline std::vector<FrameEmbedding> embed_fixed_batch(const DetectorParams& p, const Mat& X0) {
  HeadCache c;
  heads_forward(p, X0, c);
  std::vector<FrameEmbedding> out(std::size_t(X0.cols() / 2));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto l = Eigen::Index(2 * i), r = l + 1;
    out[i] = {GaussianDiag(c.Mu.col(l), c.Var.col(l)), GaussianDiag(c.Mu.col(r), c.Var.col(r))};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Classifier

struct ClassifierCache {
  std::array<Mat, 5> A;  // A[0] = input, A[4] = probabilities
  std::array<Mat, 4> Z;
};

inline void classifier_forward(const DetectorParams& p, const Mat& X, ClassifierCache& c) {
  if (X.rows() != p.w.cls[0].in())
    throw Error("dimension", "classifier input has length " + std::to_string(X.rows()) + ", expected " +
                                 std::to_string(p.w.cls[0].in()));
  c.A[0] = X;
  for (std::size_t i = 0; i < 4; ++i) {
    c.Z[i] = p.w.cls[i].forward(c.A[i]);
    nn::check_finite(c.Z[i], "classifier");
    c.A[i + 1] = i < 3 ? nn::elu(c.Z[i]) : nn::sigmoid(c.Z[i]);
  }
}

/// dZ is the gradient with respect to the final pre-sigmoid logits.
inline Mat classifier_backward(const DetectorParams& p, const ClassifierCache& c, const Mat& dZ_out, DetectorWeights& g) {
  Mat dZ = dZ_out;
  for (int i = 3; i >= 0; --i) {
    const Mat dA = nn::backward(p.w.cls[std::size_t(i)], c.A[std::size_t(i)], dZ, g.cls[std::size_t(i)]);
    if (i == 0) return dA;
    dZ = dA.cwiseProduct(nn::elu_grad(c.Z[std::size_t(i - 1)]));
  }
  return {};
}

inline double classify(const DetectorParams& p, const Vec& input) {
  ClassifierCache c;
  classifier_forward(p, Mat(input), c);
  return c.A[4](0, 0);
}

/// Probability that a query (per-camera Gaussians) matches a support prototype.
inline double match_probability(const DetectorParams& p, const FrameEmbedding& query, const FrameEmbedding& support) {
  return classify(p, classifier_input({query.left, support.left}, {query.right, support.right}, p.kind()));
}

// ---------------------------------------------------------------------------
// Episode loss and exact gradient

inline constexpr double kBceEps = 1e-7;

inline double bce_loss(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size()) throw Error("dimension", "bce_loss: length mismatch");
  if (probs.empty()) return 0.0;
  double acc = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double pc = std::clamp(probs[i], kBceEps, 1.0 - kBceEps);
    acc -= labels[i] ? std::log(pc) : std::log(1.0 - pc);
  }
  return acc / double(probs.size());
}

/// Fixed features of one episode. Column (b*s + k)*2 + c holds frame k of
/// block b (0 = support, 1.. = queries) for camera c (0 = left).
struct EpisodeFeatures {
  int shots = 0;
  Mat X0;
  std::vector<int> labels;  // one per query block

  int queries() const { return int(labels.size()); }
  Eigen::Index col(int block, int k, int cam) const { return (Eigen::Index(block) * shots + k) * 2 + cam; }
};

struct EpisodeOutput {
  double loss = 0;
  std::vector<double> probs;
};

namespace detail {

inline GaussianDiag block_mean(const HeadCache& c, const EpisodeFeatures& e, int block, int cam) {
  const Eigen::Index d = c.Mu.rows();
  GaussianDiag g(Vec::Zero(d), Vec::Zero(d));
  for (int k = 0; k < e.shots; ++k) {
    g.mean += c.Mu.col(e.col(block, k, cam));
    g.var += c.Var.col(e.col(block, k, cam));
  }
  g.mean /= double(e.shots);
  g.var /= double(e.shots);
  return g;
}

}  // namespace detail

/// Forward pass of one episode; when grad is non-null the gradient of the
/// (mean BCE) loss, scaled by weight, is accumulated into it.
inline EpisodeOutput episode_forward(const DetectorParams& p, const EpisodeFeatures& e, DetectorWeights* grad = nullptr,
                                     bool adapter_trainable = false, double weight = 1.0) {
  const int nq = e.queries();
  const int blocks = nq + 1;
  if (e.shots < 1 || e.X0.cols() != Eigen::Index(blocks) * e.shots * 2)
    throw Error("dimension", "episode feature matrix has the wrong number of columns");
  HeadCache hc;
  heads_forward(p, e.X0, hc);
  std::vector<std::array<GaussianDiag, 2>> proto(static_cast<std::size_t>(blocks));
  for (int b = 0; b < blocks; ++b)
    for (int cam = 0; cam < 2; ++cam) proto[std::size_t(b)][std::size_t(cam)] = detail::block_mean(hc, e, b, cam);

  const MetricKind& kind = p.kind();
  const Eigen::Index half = dissim_size(kind.form, p.config.embed_dim);
  Mat X(2 * half, nq);
  for (int q = 0; q < nq; ++q) {
    const auto& Q = proto[std::size_t(q + 1)];
    const auto& S = proto[0];
    X.col(q) = classifier_input({Q[0], S[0]}, {Q[1], S[1]}, kind);
  }
  ClassifierCache cc;
  classifier_forward(p, X, cc);
  EpisodeOutput out;
  out.probs.resize(std::size_t(nq));
  for (int q = 0; q < nq; ++q) out.probs[std::size_t(q)] = cc.A[4](0, q);
  out.loss = bce_loss(out.probs, e.labels);
  if (!std::isfinite(out.loss)) throw Error("numeric", "non-finite episode loss");
  if (!grad) return out;

  // d(mean BCE)/d logit = (p - y)/n inside the clamp range, zero outside.
  Mat dZ(1, nq);
  for (int q = 0; q < nq; ++q) {
    const double pr = out.probs[std::size_t(q)];
    const bool inside = pr > kBceEps && pr < 1.0 - kBceEps;
    dZ(0, q) = inside ? weight * (pr - e.labels[std::size_t(q)]) / double(nq) : 0.0;
  }
  const Mat dX = classifier_backward(p, cc, dZ, *grad);

  std::vector<std::array<GaussianGrad, 2>> pg(static_cast<std::size_t>(blocks));
  for (int q = 0; q < nq; ++q) {
    for (int cam = 0; cam < 2; ++cam) {
      const Eigen::VectorXd up = dX.col(q).segment(cam * half, half);
      dissim_backward(proto[std::size_t(q + 1)][std::size_t(cam)], proto[0][std::size_t(cam)], kind, up,
                      pg[std::size_t(q + 1)][std::size_t(cam)], pg[0][std::size_t(cam)]);
    }
  }
  Mat dMu = Mat::Zero(hc.Mu.rows(), hc.Mu.cols());
  Mat dVar = Mat::Zero(hc.Var.rows(), hc.Var.cols());
  for (int b = 0; b < blocks; ++b)
    for (int cam = 0; cam < 2; ++cam) {
      const GaussianGrad& g = pg[std::size_t(b)][std::size_t(cam)];
      if (g.d_mean.size() == 0) continue;
      for (int k = 0; k < e.shots; ++k) {
        dMu.col(e.col(b, k, cam)) = g.d_mean / double(e.shots);
        dVar.col(e.col(b, k, cam)) = g.d_var / double(e.shots);
      }
    }
  heads_backward(p, hc, dMu, dVar, *grad, adapter_trainable);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

inline nn::Checkpoint to_checkpoint(const DetectorParams& p) {
  nn::Checkpoint ck;
  const auto& c = p.config;
  ck.meta["model"] = "detector";
  ck.meta["input_height"] = std::to_string(c.input_height);
  ck.meta["input_width"] = std::to_string(c.input_width);
  ck.meta["feature_dim"] = std::to_string(c.feature_dim);
  ck.meta["embed_dim"] = std::to_string(c.embed_dim);
  ck.meta["cov_hidden"] = std::to_string(c.cov_hidden);
  ck.meta["classifier_hidden"] = std::to_string(c.classifier_hidden[0]) + "," + std::to_string(c.classifier_hidden[1]) +
                                 "," + std::to_string(c.classifier_hidden[2]);
  ck.meta["var_floor"] = fmt_double(c.var_floor);
  ck.meta["projection_scale"] = fmt_double(c.projection_scale);
  ck.meta["projection_bias"] = fmt_double(c.projection_bias);
  ck.meta["metric"] = std::string(to_string(c.kind.metric));
  ck.meta["form"] = std::string(to_string(c.kind.form));
  ck.meta["kl_direction"] = std::string(to_string(c.kind.kl));
  ck.meta["seed_projection"] = std::to_string(p.seed_projection);
  ck.meta["seed_init"] = std::to_string(p.seed_init);
  nn::put_dense(ck, "projection", p.projection);
  nn::put_dense(ck, "adapter", p.w.adapter);
  nn::put_dense(ck, "mean_head", p.w.mean_head);
  nn::put_dense(ck, "cov_head.0", p.w.cov1);
  nn::put_dense(ck, "cov_head.1", p.w.cov2);
  for (std::size_t i = 0; i < 4; ++i) nn::put_dense(ck, "classifier." + std::to_string(i), p.w.cls[i]);
  return ck;
}

inline DetectorParams from_checkpoint(const nn::Checkpoint& ck) {
  if (ck.get("model") != "detector") throw Error("format", "checkpoint is not a detector");
  DetectorParams p;
  auto& c = p.config;
  c.input_height = std::stoi(ck.get("input_height"));
  c.input_width = std::stoi(ck.get("input_width"));
  c.feature_dim = std::stoi(ck.get("feature_dim"));
  c.embed_dim = std::stoi(ck.get("embed_dim"));
  c.cov_hidden = std::stoi(ck.get("cov_hidden"));
  {
    std::istringstream ss(ck.get("classifier_hidden"));
    char comma;
    ss >> c.classifier_hidden[0] >> comma >> c.classifier_hidden[1] >> comma >> c.classifier_hidden[2];
    if (!ss) throw Error("format", "bad classifier_hidden");
  }
  c.var_floor = std::stod(ck.get("var_floor"));
  c.projection_scale = std::stod(ck.get("projection_scale"));
  c.projection_bias = std::stod(ck.get("projection_bias"));
  c.kind.metric = parse_metric(ck.get("metric"));
  c.kind.form = parse_form(ck.get("form"));
  c.kind.kl = parse_kl_direction(ck.get("kl_direction"));
  p.seed_projection = std::stoull(ck.get("seed_projection"));
  p.seed_init = std::stoull(ck.get("seed_init"));
  const int n = c.input_dim(), f = c.feature_dim, d = c.embed_dim;
  p.projection = nn::get_dense(ck, "projection", n, f);
  p.w.adapter = nn::get_dense(ck, "adapter", f, f);
  p.w.mean_head = nn::get_dense(ck, "mean_head", f, d);
  p.w.cov1 = nn::get_dense(ck, "cov_head.0", f, c.cov_hidden);
  p.w.cov2 = nn::get_dense(ck, "cov_head.1", c.cov_hidden, d);
  int in = c.classifier_input_dim();
  for (std::size_t i = 0; i < 4; ++i) {
    const int out = i < 3 ? c.classifier_hidden[i] : 1;
    p.w.cls[i] = nn::get_dense(ck, "classifier." + std::to_string(i), in, out);
    in = out;
  }
  return p;
}

inline void save_detector(const DetectorParams& p, const std::string& path) { nn::write_checkpoint(path, to_checkpoint(p)); }
inline DetectorParams load_detector(const std::string& path) { return from_checkpoint(nn::read_checkpoint(path)); }

}  // namespace waynav
