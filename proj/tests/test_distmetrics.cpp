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

GaussianDiag g1(double m, double v) { return {Eigen::VectorXd::Constant(1, m), Eigen::VectorXd::Constant(1, v)}; }
GaussianDiag g2(double m0, double m1, double v0, double v1) {
  Eigen::VectorXd m(2), v(2);
  m << m0, m1;
  v << v0, v1;
  return {m, v};
}

// KL(N(a, va) || N(b, vb)) by trapezoidal integration of p log(p/q).
double kl_numeric(double a, double va, double b, double vb) {
  const double sa = std::sqrt(va), lo = a - 12 * sa, hi = a + 12 * sa;
  const int n = 200000;
  const double h = (hi - lo) / n;
  double acc = 0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double lp = -0.5 * (x - a) * (x - a) / va - 0.5 * std::log(2 * kPi * va);
    const double lq = -0.5 * (x - b) * (x - b) / vb - 0.5 * std::log(2 * kPi * vb);
    acc += (i == 0 || i == n ? 0.5 : 1.0) * std::exp(lp) * (lp - lq);
  }
  return acc * h;
}

TEST(Combine, MatchesLoopOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int d = uniform_int(rng, 1, 16), n = uniform_int(rng, 1, 12);
    std::vector<GaussianDiag> members;
    for (int k = 0; k < n; ++k) members.push_back(testing::random_gaussian(rng, d, 3.0));
    const GaussianDiag c = combine(members);
    for (int i = 0; i < d; ++i) {
      long double sm = 0, sv = 0;
      for (const auto& g : members) sm += g.mean[i], sv += g.var[i];
      EXPECT_NEAR(c.mean[i], double(sm / n), 1e-12);
      EXPECT_NEAR(c.var[i], double(sv / n), 1e-12);
    }
  }
}

TEST(Combine, Examples) {
  const std::vector<GaussianDiag> m = {g2(1, 3, 1, 1), g2(3, 5, 3, 3)};
  EXPECT_EQ(combine(m), g2(2, 4, 2, 2));
  const std::vector<GaussianDiag> one = {g2(1, 3, 0.5, 2)};
  EXPECT_EQ(combine(one), one[0]);
  EXPECT_THROW(combine(std::span<const GaussianDiag>{}), Error);
}

TEST(Metrics, WorkedExamples) {
  EXPECT_NEAR(sym_mahalanobis(g2(2, 0, 2, 2), g2(0, 0, 2, 2)), 2.0, 1e-10);
  EXPECT_NEAR(sym_mahalanobis(g2(4, 0, 8, 8), g2(0, 0, 8, 8)), 2.0, 1e-10);  // vars x4, gap x2
  EXPECT_NEAR(sym_kl(g1(0, 1), g1(1, 1)), 1.0, 1e-10);
  EXPECT_NEAR(wasserstein2_sq(g1(0, 1), g1(3, 1)), 9.0, 1e-10);
  EXPECT_NEAR(wasserstein2_sq(g1(0, 1), g1(0, 4)), 1.0, 1e-10);
  EXPECT_NEAR(euclidean_sq(g2(0, 0, 1, 1), g2(3, 4, 1, 1)), 25.0, 1e-10);
  EXPECT_NEAR(euclidean_sq(g2(0, 0, 1, 9), g2(3, 4, 7, 0.1)), 25.0, 1e-10);
  EXPECT_THROW(sym_kl(g1(0, 1), g2(0, 0, 1, 1)), Error);
}

TEST(Metrics, KlMatchesNumericalIntegration) {
  Rng rng(2);
  for (int k = 0; k < 20; ++k) {
    const double a = gaussian(rng), b = gaussian(rng);
    const double va = std::exp(uniform(rng, -1, 1)), vb = std::exp(uniform(rng, -1, 1));
    const double fwd = kl_numeric(a, va, b, vb), bwd = kl_numeric(b, vb, a, va);
    EXPECT_NEAR(sym_kl(g1(a, va), g1(b, vb), KlDirection::QueryToSupport), fwd, 1e-6);
    EXPECT_NEAR(sym_kl(g1(a, va), g1(b, vb), KlDirection::SupportToQuery), bwd, 1e-6);
    EXPECT_NEAR(sym_kl(g1(a, va), g1(b, vb)), fwd + bwd, 1e-6);
  }
}

TEST(Metrics, AxiomsOnRandomPairs) {
  Rng rng(3);
  for (int k = 0; k < 100000; ++k) {
    const int d = uniform_int(rng, 1, 8);
    const GaussianDiag q = testing::random_gaussian(rng, d), s = testing::random_gaussian(rng, d);
    for (Metric m : kAllMetrics) {
      ASSERT_GE(detail::metric_sum(m, KlDirection::Jeffreys, q, s), 0.0);
      ASSERT_EQ(detail::metric_sum(m, KlDirection::Jeffreys, q, q), 0.0);
    }
    ASSERT_GT(sym_kl(q, s), 0.0);
    ASSERT_GT(wasserstein2_sq(q, s), 0.0);
    // Same means, different variances: divergences see it, mean distances do not.
    const GaussianDiag sv{q.mean, s.var};
    if (sv.var != q.var) {
      ASSERT_GT(sym_kl(q, sv), 0.0);
      ASSERT_GT(wasserstein2_sq(q, sv), 0.0);
    }
    ASSERT_EQ(sym_mahalanobis(q, sv), 0.0);
    ASSERT_EQ(euclidean_sq(q, sv), 0.0);
    // Pooled covariance is symmetric in the two variance vectors.
    ASSERT_NEAR(sym_mahalanobis(q, s), sym_mahalanobis({q.mean, s.var}, {s.mean, q.var}),
                1e-12 * (1 + sym_mahalanobis(q, s)));
    // Aggregate univariate terms sum to the multivariate scalar.
    for (Metric m : kAllMetrics) {
      const double multi = dissim(q, s, {m, InputForm::Multivariate})[0];
      const Eigen::VectorXd agg = dissim(q, s, {m, InputForm::AggregateUnivariate});
      ASSERT_EQ(agg.size(), d);
      ASSERT_NEAR(agg.sum(), multi, 1e-12 * (1 + multi));
    }
  }
}

TEST(Metrics, BackwardMatchesFiniteDifferences) {
  Rng rng(4);
  const double h = 1e-6;
  for (Metric m : kAllMetrics)
    for (KlDirection kl : {KlDirection::Jeffreys, KlDirection::QueryToSupport, KlDirection::SupportToQuery})
      for (InputForm f : kAllForms) {
        const MetricKind kind{m, f, kl};
        const GaussianDiag q = testing::random_gaussian(rng, 5), s = testing::random_gaussian(rng, 5);
        const Eigen::Index n = dissim_size(f, 5);
        Eigen::VectorXd up(n);
        for (Eigen::Index i = 0; i < n; ++i) up[i] = gaussian(rng);
        GaussianGrad gq, gs;
        dissim_backward(q, s, kind, up, gq, gs);
        auto loss = [&](const GaussianDiag& a, const GaussianDiag& b) { return up.dot(dissim(a, b, kind)); };
        for (int i = 0; i < 5; ++i) {
          auto fd = [&](auto mutate) {
            GaussianDiag qp = q, sp = s, qm = q, sm = s;
            mutate(qp, sp, +h);
            mutate(qm, sm, -h);
            return (loss(qp, sp) - loss(qm, sm)) / (2 * h);
          };
          EXPECT_NEAR(gq.d_mean[i], fd([&](GaussianDiag& a, GaussianDiag&, double e) { a.mean[i] += e; }), 1e-5);
          EXPECT_NEAR(gq.d_var[i], fd([&](GaussianDiag& a, GaussianDiag&, double e) { a.var[i] += e; }), 1e-5);
          EXPECT_NEAR(gs.d_mean[i], fd([&](GaussianDiag&, GaussianDiag& b, double e) { b.mean[i] += e; }), 1e-5);
          EXPECT_NEAR(gs.d_var[i], fd([&](GaussianDiag&, GaussianDiag& b, double e) { b.var[i] += e; }), 1e-5);
        }
      }
}

TEST(ClassifierInput, ConcatenatesCameras) {
  const GaussianDiag left_q = g2(2, 0, 2, 2), left_s = g2(0, 0, 2, 2);
  const GaussianDiag right_q = g1(0, 1), right_s = g1(std::sqrt(1.5 * 2), 2);  // pooled 1.5, gap^2 3
  const MetricKind kind{Metric::SymMahalanobis, InputForm::Multivariate};
  EXPECT_THROW(classifier_input({left_q, left_s}, {right_q, right_s}, kind), Error);
  const GaussianDiag rq = g2(0, 0, 1, 2), rs = g2(std::sqrt(3.0 * 1.5 / 2), std::sqrt(3.0 * 2 / 2), 2, 2);
  const Eigen::VectorXd x = classifier_input({left_q, left_s}, {rq, rs}, kind);
  ASSERT_EQ(x.size(), 2);
  EXPECT_NEAR(x[0], 2.0, 1e-12);
  EXPECT_NEAR(x[1], 3.0, 1e-12);
  Rng rng(5);
  const GaussianDiag a = testing::random_gaussian(rng, 32), b = testing::random_gaussian(rng, 32);
  for (Metric m : kAllMetrics) {
    EXPECT_EQ(classifier_input({a, a}, {b, b}, {m, InputForm::Multivariate}), Eigen::VectorXd::Zero(2));
    EXPECT_EQ(classifier_input({a, b}, {b, a}, {m, InputForm::AggregateUnivariate}).size(), 64);
  }
}

}  // namespace
}  // namespace waynav
