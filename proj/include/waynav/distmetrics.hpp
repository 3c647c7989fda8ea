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

// Diagonal-Gaussian prototypes and the dissimilarities fed to the waypoint
// classifier. Every metric is a sum of independent per-dimension terms, which
// is what makes the aggregate-univariate input form available.

#include <Eigen/Dense>

#include <span>
#include <string>
#include <string_view>

#include "waynav/core.hpp"

namespace waynav {

struct GaussianDiag {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;  // diagonal of the covariance, strictly positive

  GaussianDiag() = default;
  GaussianDiag(Eigen::VectorXd m, Eigen::VectorXd v) : mean(std::move(m)), var(std::move(v)) {}

  Eigen::Index dim() const { return mean.size(); }
  bool operator==(const GaussianDiag& o) const { return mean == o.mean && var == o.var; }
};

enum class Metric : std::uint8_t { Euclidean, SymKL, Wasserstein2, SymMahalanobis };
enum class InputForm : std::uint8_t { Multivariate, AggregateUnivariate };
/// Which KL direction the "KL" metric uses. Jeffreys is the symmetric sum.
enum class KlDirection : std::uint8_t { Jeffreys, QueryToSupport, SupportToQuery };

inline constexpr std::array<Metric, 4> kAllMetrics = {Metric::Euclidean, Metric::SymKL,
                                                      Metric::Wasserstein2,
                                                      Metric::SymMahalanobis};
inline constexpr std::array<InputForm, 2> kAllForms = {InputForm::Multivariate,
                                                       InputForm::AggregateUnivariate};

struct MetricKind {
  Metric metric = Metric::SymMahalanobis;
  InputForm form = InputForm::Multivariate;
  KlDirection kl = KlDirection::Jeffreys;

  bool operator==(const MetricKind&) const = default;
};

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::Euclidean: return "euclidean";
    case Metric::SymKL: return "kl";
    case Metric::Wasserstein2: return "wasserstein2";
    case Metric::SymMahalanobis: return "sym_mahalanobis";
  }
  return "?";
}

inline std::string_view display_name(Metric m) {
  switch (m) {
    case Metric::Euclidean: return "Euclidean";
    case Metric::SymKL: return "KL Divergence";
    case Metric::Wasserstein2: return "2-Wasserstein";
    case Metric::SymMahalanobis: return "Sym. Mahalanobis";
  }
  return "?";
}

inline std::string_view to_string(InputForm f) {
  return f == InputForm::Multivariate ? "multivariate" : "aggregate_univariate";
}

inline std::string_view display_name(InputForm f) {
  return f == InputForm::Multivariate ? "Multivariate" : "Aggregate Univariate";
}

inline std::string_view to_string(KlDirection k) {
  switch (k) {
    case KlDirection::Jeffreys: return "jeffreys";
    case KlDirection::QueryToSupport: return "query_to_support";
    case KlDirection::SupportToQuery: return "support_to_query";
  }
  return "?";
}

inline Metric parse_metric(std::string_view s) {
  for (Metric m : kAllMetrics)
    if (to_string(m) == s) return m;
  throw Error("format", "unknown metric '" + std::string(s) + "'");
}

inline InputForm parse_form(std::string_view s) {
  for (InputForm f : kAllForms)
    if (to_string(f) == s) return f;
  throw Error("format", "unknown input form '" + std::string(s) + "'");
}

inline KlDirection parse_kl_direction(std::string_view s) {
  for (KlDirection k : {KlDirection::Jeffreys, KlDirection::QueryToSupport,
                        KlDirection::SupportToQuery})
    if (to_string(k) == s) return k;
  throw Error("format", "unknown kl direction '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Prototype combination: equal-weight mean of member means and variances.

inline GaussianDiag combine(std::span<const GaussianDiag> members) {
  if (members.empty()) throw Error("metric", "combine: empty member list");
  const Eigen::Index d = members.front().dim();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
  for (const auto& g : members) {
    if (g.dim() != d || g.var.size() != d) throw Error("metric", "combine: dimension mismatch");
    mean += g.mean;
    var += g.var;
  }
  const double inv = 1.0 / double(members.size());
  return {mean * inv, var * inv};
}

// ---------------------------------------------------------------------------
// Per-dimension terms and their partial derivatives.

struct TermGrad {
  double d_mean_q = 0, d_var_q = 0, d_mean_s = 0, d_var_s = 0;
};

namespace detail {

inline double kl_directed(double mq, double vq, double ms, double vs) {
  // KL(N(mq,vq) || N(ms,vs))
  const double d = mq - ms;
  return 0.5 * (vq / vs + d * d / vs - 1.0 + std::log(vs / vq));
}

inline double term(Metric m, KlDirection kl, double mq, double vq, double ms, double vs) {
  const double d = mq - ms;
  switch (m) {
    case Metric::Euclidean: return d * d;
    case Metric::SymMahalanobis: return d * d / (0.5 * (vq + vs));
    case Metric::Wasserstein2: {
      const double ds = std::sqrt(vq) - std::sqrt(vs);
      return d * d + ds * ds;
    }
    case Metric::SymKL:
      switch (kl) {
        case KlDirection::Jeffreys:
          return 0.5 * (vq / vs + vs / vq - 2.0 + d * d * (1.0 / vq + 1.0 / vs));
        case KlDirection::QueryToSupport: return kl_directed(mq, vq, ms, vs);
        case KlDirection::SupportToQuery: return kl_directed(ms, vs, mq, vq);
      }
  }
  return 0.0;
}

inline TermGrad term_grad(Metric m, KlDirection kl, double mq, double vq, double ms, double vs) {
  const double d = mq - ms;
  TermGrad g;
  switch (m) {
    case Metric::Euclidean:
      g.d_mean_q = 2.0 * d;
      break;
    case Metric::SymMahalanobis: {
      const double p = 0.5 * (vq + vs);
      g.d_mean_q = 2.0 * d / p;
      g.d_var_q = g.d_var_s = -0.5 * d * d / (p * p);
      break;
    }
    case Metric::Wasserstein2: {
      const double sq = std::sqrt(vq), ss = std::sqrt(vs);
      g.d_mean_q = 2.0 * d;
      g.d_var_q = (sq - ss) / sq;
      g.d_var_s = -(sq - ss) / ss;
      break;
    }
    case Metric::SymKL:
      switch (kl) {
        case KlDirection::Jeffreys:
          g.d_mean_q = d * (1.0 / vq + 1.0 / vs);
          g.d_var_q = 0.5 * (1.0 / vs - (vs + d * d) / (vq * vq));
          g.d_var_s = 0.5 * (1.0 / vq - (vq + d * d) / (vs * vs));
          break;
        case KlDirection::QueryToSupport:
          g.d_mean_q = d / vs;
          g.d_var_q = 0.5 * (1.0 / vs - 1.0 / vq);
          g.d_var_s = 0.5 * (1.0 / vs - (vq + d * d) / (vs * vs));
          break;
        case KlDirection::SupportToQuery:
          g.d_mean_q = d / vq;
          g.d_var_q = 0.5 * (1.0 / vq - (vs + d * d) / (vq * vq));
          g.d_var_s = 0.5 * (1.0 / vq - 1.0 / vs);
          break;
      }
      break;
  }
  g.d_mean_s = -g.d_mean_q;
  return g;
}

inline void check_dims(const GaussianDiag& q, const GaussianDiag& s) {
  if (q.dim() != s.dim() || q.var.size() != q.dim() || s.var.size() != s.dim())
    throw Error("metric", "dimension mismatch between query and support");
}

inline double metric_sum(Metric m, KlDirection kl, const GaussianDiag& q, const GaussianDiag& s) {
  check_dims(q, s);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < q.dim(); ++i) acc += term(m, kl, q.mean[i], q.var[i], s.mean[i], s.var[i]);
  return acc;
}

}  // namespace detail

/// Squared symmetrized Mahalanobis distance with pooled covariance (Sq+Ss)/2.
inline double sym_mahalanobis(const GaussianDiag& q, const GaussianDiag& s) {
  return detail::metric_sum(Metric::SymMahalanobis, KlDirection::Jeffreys, q, s);
}

/// KL-based divergence; Jeffreys (both directions summed) unless asked otherwise.
inline double sym_kl(const GaussianDiag& q, const GaussianDiag& s,
                     KlDirection dir = KlDirection::Jeffreys) {
  return detail::metric_sum(Metric::SymKL, dir, q, s);
}

/// Squared 2-Wasserstein distance between diagonal Gaussians.
inline double wasserstein2_sq(const GaussianDiag& q, const GaussianDiag& s) {
  return detail::metric_sum(Metric::Wasserstein2, KlDirection::Jeffreys, q, s);
}

/// Squared Euclidean distance between the means; variances are ignored.
inline double euclidean_sq(const GaussianDiag& q, const GaussianDiag& s) {
  return detail::metric_sum(Metric::Euclidean, KlDirection::Jeffreys, q, s);
}

inline Eigen::Index dissim_size(InputForm form, Eigen::Index dim) {
  return form == InputForm::Multivariate ? 1 : dim;
}

/// Dissimilarity vector: length 1 (multivariate) or D (aggregate univariate).
inline Eigen::VectorXd dissim(const GaussianDiag& q, const GaussianDiag& s, const MetricKind& kind) {
  detail::check_dims(q, s);
  const Eigen::Index d = q.dim();
  Eigen::VectorXd terms(d);
  for (Eigen::Index i = 0; i < d; ++i)
    terms[i] = detail::term(kind.metric, kind.kl, q.mean[i], q.var[i], s.mean[i], s.var[i]);
  if (kind.form == InputForm::AggregateUnivariate) return terms;
  Eigen::VectorXd out(1);
  out[0] = terms.sum();
  return out;
}

struct GaussianGrad {
  Eigen::VectorXd d_mean, d_var;
};

/// Back-propagates an upstream gradient on dissim(q, s) to both arguments.
inline void dissim_backward(const GaussianDiag& q, const GaussianDiag& s, const MetricKind& kind,
                            const Eigen::Ref<const Eigen::VectorXd>& upstream, GaussianGrad& gq,
                            GaussianGrad& gs) {
  const Eigen::Index d = q.dim();
  if (gq.d_mean.size() != d) {
    gq.d_mean = Eigen::VectorXd::Zero(d);
    gq.d_var = Eigen::VectorXd::Zero(d);
  }
  if (gs.d_mean.size() != d) {
    gs.d_mean = Eigen::VectorXd::Zero(d);
    gs.d_var = Eigen::VectorXd::Zero(d);
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    const double up = kind.form == InputForm::Multivariate ? upstream[0] : upstream[i];
    if (up == 0.0) continue;
    const TermGrad t =
        detail::term_grad(kind.metric, kind.kl, q.mean[i], q.var[i], s.mean[i], s.var[i]);
    gq.d_mean[i] += up * t.d_mean_q;
    gq.d_var[i] += up * t.d_var_q;
    gs.d_mean[i] += up * t.d_mean_s;
    gs.d_var[i] += up * t.d_var_s;
  }
}

/// A (query, support) pair for one camera.
struct GaussianPair {
  const GaussianDiag& query;
  const GaussianDiag& support;
};

/// Concatenates the per-camera dissimilarities, left camera first.
inline Eigen::VectorXd classifier_input(const GaussianPair& left, const GaussianPair& right,
                                        const MetricKind& kind) {
  if (left.query.dim() != right.query.dim() || left.support.dim() != right.support.dim())
    throw Error("metric", "classifier_input: camera dimension mismatch");
  Eigen::VectorXd l = dissim(left.query, left.support, kind);
  Eigen::VectorXd r = dissim(right.query, right.support, kind);
  Eigen::VectorXd out(l.size() + r.size());
  out << l, r;
  return out;
}

}  // namespace waynav
