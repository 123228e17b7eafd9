#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "leafdec/lipmap.hpp"

using namespace leafdec;
using namespace leafdec::testing;

namespace {

// Smooth 1-Lipschitz map R^2 -> R^2 without analytic derivatives.
LipschitzMap smooth_fd_map() {
  return LipschitzMap("smooth", 2, 2, [](const Vec& x) {
    Vec y(2);
    y << 0.5 * std::sin(x[0]) + 0.3 * std::cos(x[1]), 0.4 * std::sin(x[0] + x[1]);
    return y;
  });
}

Mat smooth_fd_jacobian(const Vec& x) {
  Mat j(2, 2);
  j << 0.5 * std::cos(x[0]), -0.3 * std::sin(x[1]), 0.4 * std::cos(x[0] + x[1]), 0.4 * std::cos(x[0] + x[1]);
  return j;
}

}  // namespace

TEST(LipschitzMap, EvaluatesAndChecksDimension) {
  const LipschitzMap p = projection_map(3, 2);
  const Vec y = p(vec({3, -1, 7}));
  EXPECT_EQ(y, vec({3, -1}));
  EXPECT_THROW(p(vec({1, 2})), DimensionError);
}

TEST(LipschitzMap, NonFiniteOutputThrows) {
  const LipschitzMap bad("bad", 1, 1, [](const Vec&) { return vec({std::nan("")}); });
  EXPECT_THROW(bad(vec({0.0})), NonFinite);
  const LipschitzMap ok = identity_map(2);
  EXPECT_THROW(ok(vec({std::numeric_limits<double>::infinity(), 0.0})), NonFinite);
}

TEST(LipschitzMap, FiniteDifferenceJacobianIsSecondOrder) {
  const LipschitzMap f = smooth_fd_map();
  const Vec x = vec({0.7, -0.4});
  const Mat exact = smooth_fd_jacobian(x);
  const double e1 = (f.fd_jacobian(x, 1e-2) - exact).norm();
  const double e2 = (f.fd_jacobian(x, 5e-3) - exact).norm();
  EXPECT_GE(std::log2(e1 / e2), 1.9);
  EXPECT_LT((f.jacobian(x) - exact).norm(), 1e-9);
}

TEST(LipschitzMap, AnalyticJacobianMatchesDifferences) {
  for (const auto& e : test_atlas()) {
    const auto pts = sample_points(e, 50, 11, [&](const Vec& x) { return chartable(e, x); });
    for (const Vec& x : pts) EXPECT_LT((e.map.jacobian(x) - e.map.fd_jacobian(x)).norm(), 1e-7) << e.key;
  }
}

TEST(LipschitzMap, AnalyticHessianMatchesDifferences) {
  for (const auto& e : test_atlas()) {
    if (!e.map.has_analytic_hessian()) continue;
    const auto pts = sample_points(e, 30, 12, [&](const Vec& x) { return chartable(e, x); });
    for (const Vec& x : pts) {
      const auto h = e.map.hessian(x);
      const auto fd = e.map.fd_hessian(x);
      ASSERT_EQ(h.size(), fd.size());
      for (std::size_t l = 0; l < h.size(); ++l) {
        EXPECT_LT((h[l] - fd[l]).norm(), 1e-5) << e.key;
        EXPECT_LT((h[l] - h[l].transpose()).norm(), 1e-14);
      }
    }
  }
}

TEST(LipschitzMap, DifferentiabilityDetectedByOneSidedQuotients) {
  const LipschitzMap norm_fd("norm", 2, 1, [](const Vec& x) { return vec({x.norm()}); });
  EXPECT_FALSE(norm_fd.differentiable_jacobian(vec({0.0, 0.0})).has_value());
  const auto j = norm_fd.differentiable_jacobian(vec({3.0, 4.0}));
  ASSERT_TRUE(j.has_value());
  EXPECT_NEAR((*j)(0, 0), 0.6, 1e-6);
  // analytic Jacobian marks the kink with NaN
  EXPECT_FALSE(cylindrical_map(3).differentiable_jacobian(vec({0.0, 0.0, 1.0})).has_value());
}

TEST(LipschitzMap, IsometryDefect) {
  const LipschitzMap d = distance_map(Vec::Zero(2));
  EXPECT_NEAR(isometry_defect(d, vec({3, 4}), vec({6, 8})), 0.0, 1e-12);
  // (3,4) to (-3,-4): distance 10, image difference 0
  EXPECT_NEAR(isometry_defect(d, vec({3, 4}), vec({-3, -4})), 100.0, 1e-12);
}

TEST(VerifyLipschitz, AtlasMapsPassAndScaledMapFails) {
  for (const auto& e : test_atlas()) {
    const auto pts = sample_points(e, 200, 13, [&](const Vec& x) { return !e.map.excluded(x); });
    const LipschitzReport r = verify_lipschitz(e.map, pts);
    EXPECT_TRUE(r.pass) << e.key;
    EXPECT_LE(r.max_operator_norm, 1.0 + 1e-6);
  }
  const LipschitzMap twice("twice", 2, 2, [](const Vec& x) { return Vec(2.0 * x); });
  const LipschitzReport r = verify_lipschitz(twice, {vec({0.1, 0.2})});
  EXPECT_FALSE(r.pass);
  EXPECT_NEAR(r.max_operator_norm, 2.0, 1e-6);
  EXPECT_THROW(verify_lipschitz(twice, {}), std::invalid_argument);
}

TEST(WeightedMeasure, GaussianDerivativesMatchDifferences) {
  const WeightedMeasure g = gaussian_measure(vec({0.5, -1.0, 2.0}), 2.0);
  const Vec x = vec({0.1, 0.3, -0.2});
  const double h = 1e-5;
  Vec grad(3);
  for (int i = 0; i < 3; ++i) {
    const Vec e = Vec::Unit(3, i) * h;
    grad[i] = (g.rho(x + e) - g.rho(x - e)) / (2 * h);
  }
  EXPECT_LT((grad - g.grad_rho(x)).norm(), 1e-8);
  EXPECT_LT((g.hess_rho(x) - 0.5 * Mat::Identity(3, 3)).norm(), 1e-14);
  EXPECT_NEAR(g.density(x), std::exp(-g.rho(x)), 1e-15);
}

TEST(WeightedMeasure, LebesgueIsConstant) {
  const WeightedMeasure l = lebesgue_measure(2);
  EXPECT_TRUE(l.constant_rho);
  EXPECT_DOUBLE_EQ(l.density(vec({5, -3})), 1.0);
}

TEST(WeightedMeasure, ConcaveWeightHasNegativeHessian) {
  const WeightedMeasure c = concave_weight(2);
  EXPECT_LT((c.hess_rho(vec({1, 1})) + Mat::Identity(2, 2)).norm(), 1e-14);
}

TEST(WeightedMeasure, ScalingDividesDensity) {
  const WeightedMeasure g = gaussian_measure(Vec::Zero(2));
  const WeightedMeasure s = scaled_measure(g, 4.0);
  const Vec x = vec({0.3, -0.7});
  EXPECT_NEAR(s.density(x), g.density(x) / 4.0, 1e-15);
  EXPECT_LT((s.hess_rho(x) - g.hess_rho(x)).norm(), 1e-15);
  EXPECT_LT((s.grad_rho(x) - g.grad_rho(x)).norm(), 1e-15);
}

TEST(CDParams, Validation) {
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_NO_THROW((CDParams{0.0, 3, inf}.validate()));
  EXPECT_NO_THROW((CDParams{0.0, 3, 3.0}.validate()));
  EXPECT_NO_THROW((CDParams{0.0, 3, 4.5}.validate()));
  EXPECT_NO_THROW((CDParams{0.0, 3, 0.5}.validate()));
  EXPECT_NO_THROW((CDParams{0.0, 3, -2.0}.validate()));
  EXPECT_THROW((CDParams{0.0, 3, 2.5}.validate()), InvalidN);
  EXPECT_THROW((CDParams{0.0, 3, 1.0}.validate()), InvalidN);
  EXPECT_THROW((CDParams{0.0, 3, std::nan("")}.validate()), InvalidN);
  EXPECT_THROW((CDParams{0.0, 3, -inf}.validate()), InvalidN);
}

// If x is at least as close as y to every vertex, the same holds on the hull.
TEST(Geometry, CloserToVerticesImpliesCloserOnHull) {
  Rng rng(21);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  int cases = 0;
  while (cases < 200) {
    const int n = 2 + cases % 2;
    std::vector<Vec> verts;
    for (int i = 0; i < n + 1; ++i) verts.push_back(Vec::NullaryExpr(n, [&] { return normal(rng); }));
    const Vec x = Vec::NullaryExpr(n, [&] { return normal(rng); });
    const Vec y = Vec::NullaryExpr(n, [&] { return 3.0 * normal(rng); });
    bool closer = true;
    for (const Vec& z : verts) closer = closer && (x - z).norm() <= (y - z).norm();
    if (!closer) continue;
    ++cases;
    for (int k = 0; k < 10; ++k) {
      Vec w = Vec::NullaryExpr(n + 1, [&] { return -std::log(uni(rng) + 1e-300); });
      w /= w.sum();
      Vec z = Vec::Zero(n);
      for (int i = 0; i < n + 1; ++i) z += w[i] * verts[i];
      EXPECT_LE((x - z).norm(), (y - z).norm() + 1e-12);
    }
  }
}
