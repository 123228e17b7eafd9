#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "leafdec/leafdetect.hpp"

using namespace leafdec;
using namespace leafdec::testing;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

DetectConfig with_rmax(double r_max) {
  DetectConfig cfg;
  cfg.r_max = r_max;
  return cfg;
}

// Extent along the tangent direction closest to `dir` (ambient coordinates).
double extent_towards(const LeafModel& leaf, const Vec& dir) {
  double best = -2.0, radius = 0.0;
  for (const auto& e : leaf.extent) {
    const double c = (leaf.frame * e.direction).dot(dir);
    if (c > best) {
      best = c;
      radius = e.radius;
    }
  }
  return radius;
}

}  // namespace

TEST(Alpha, DistanceMapRayLength) {
  const LipschitzMap d = distance_map(Vec::Zero(2));
  const DetectConfig cfg = with_rmax(100.0);
  const double a = estimate_alpha(d, vec({3, 4}), 1, 100.0, cfg.tol_defect, cfg);
  EXPECT_NEAR(a, 5.0, 0.025);
}

TEST(Alpha, ProjectionClampsAtRmax) {
  const LipschitzMap p = projection_map(3, 1);
  EXPECT_DOUBLE_EQ(estimate_alpha(p, vec({0.2, -1, 3}), 1, 10.0, 1e-8), 10.0);
}

TEST(Alpha, CylindricalHalfPlaneClamped) {
  const LipschitzMap c = cylindrical_map(3);
  EXPECT_DOUBLE_EQ(estimate_alpha(c, vec({1, 0, 2}), 2, 0.5, 1e-8, with_rmax(0.5)), 0.5);
}

TEST(Beta, DistanceMapPositive) {
  const LipschitzMap d = distance_map(Vec::Zero(2));
  EXPECT_GT(estimate_beta(d, vec({3, 4}), 1, 10.0, 1e-8), 1.0);
}

TEST(Beta, DimensionErrorBeyondM) {
  const LipschitzMap id = identity_map(2);
  EXPECT_THROW(estimate_beta(id, vec({0, 0}), 3, 10.0, 1e-8), DimensionError);
  EXPECT_THROW(estimate_alpha(id, vec({0, 0}), 3, 10.0, 1e-8), DimensionError);
}

TEST(Beta, CylindricalAxisOneSidedOnly) {
  const LipschitzMap c = cylindrical_map(3);
  const Vec axis = vec({0, 0, 5});
  EXPECT_GT(estimate_beta(c, axis, 2, 10.0, 1e-8), 0.1);
  EXPECT_EQ(estimate_alpha(c, axis, 2, 10.0, 1e-8), 0.0);
}

TEST(Classify, ProjectionInterior) {
  const PointClass pc = classify_point(projection_map(3, 2), vec({0.4, -2, 9}));
  ASSERT_TRUE(pc.leaf_dim.has_value());
  EXPECT_EQ(*pc.leaf_dim, 2);
  EXPECT_TRUE(pc.interior);
  EXPECT_EQ(pc.alpha.size(), 2u);
  EXPECT_EQ(pc.beta.size(), 2u);
}

TEST(Classify, DistanceOriginIsBoundary) {
  const PointClass pc = classify_point(distance_map(Vec::Zero(2)), vec({0, 0}));
  ASSERT_TRUE(pc.leaf_dim.has_value());
  EXPECT_EQ(*pc.leaf_dim, 1);
  EXPECT_FALSE(pc.interior);
}

TEST(Classify, CylindricalInterior) {
  const PointClass pc = classify_point(cylindrical_map(3), vec({1, 0, 2}));
  ASSERT_TRUE(pc.leaf_dim.has_value());
  EXPECT_EQ(*pc.leaf_dim, 2);
  EXPECT_TRUE(pc.interior);
}

TEST(Classify, BallInteriorIsPointLeaf) {
  const PointClass pc = classify_point(ball_distance_map(Vec::Zero(2), 1.0), vec({0.2, 0.3}));
  ASSERT_TRUE(pc.leaf_dim.has_value());
  EXPECT_EQ(*pc.leaf_dim, 0);
  EXPECT_TRUE(pc.interior);
}

TEST(Classify, IdentityFullDimension) {
  const PointClass pc = classify_point(identity_map(3), vec({1, 2, 3}));
  ASSERT_TRUE(pc.leaf_dim.has_value());
  EXPECT_EQ(*pc.leaf_dim, 3);
  EXPECT_TRUE(pc.interior);
}

TEST(Classify, MonotoneInK) {
  for (const auto& e : test_atlas()) {
    const auto pts = sample_points(e, 1000 / 5, 31, [&](const Vec&) { return true; });
    for (const auto& pc : classify_points(e.map, pts, DetectConfig{}, 1)) {
      for (std::size_t k = 1; k < pc.beta.size(); ++k) {
        EXPECT_GE(pc.beta[k - 1], pc.beta[k]) << e.key;
        EXPECT_GE(pc.alpha[k - 1], pc.alpha[k]) << e.key;
      }
      // beta_k > 0 exactly up to leaf_dim
      if (pc.leaf_dim) {
        for (int k = 1; k <= static_cast<int>(pc.beta.size()); ++k) {
          if (k <= *pc.leaf_dim) EXPECT_GT(pc.beta[k - 1], 0.0);
          else EXPECT_LT(pc.beta[k - 1], DetectConfig{}.r_min);
        }
      }
    }
  }
}

TEST(Classify, AgreesWithGroundTruth) {
  for (const auto& e : test_atlas()) {
    const auto pts = sample_points(e, 1000, 32, [&](const Vec& x) { return !e.map.excluded(x); });
    int agree = 0, unknown = 0;
    for (const auto& pc : classify_points(e.map, pts, DetectConfig{}, 2)) {
      if (pc.leaf_dim && *pc.leaf_dim == e.truth.at(pc.point).dim) ++agree;
      if (!pc.leaf_dim || !pc.interior) ++unknown;
    }
    EXPECT_GE(agree, 990) << e.key;
    EXPECT_LT(unknown, 10) << e.key;
  }
}

TEST(Classify, ThreadCountDoesNotChangeResults) {
  const auto e = test_atlas()[3];
  const auto pts = sample_points(e, 200, 33, [](const Vec&) { return true; });
  DetectConfig cfg;
  cfg.seed = 5;
  const auto a = classify_points(e.map, pts, cfg, 1);
  const auto b = classify_points(e.map, pts, cfg, 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(to_json(a[i]).dump(), to_json(b[i]).dump());
  }
}

// Along x_l -> x0 on the axis, alpha_2 tends to alpha_2(x0) = 0 from above.
TEST(Alpha, UpperSemicontinuityTowardsAxis) {
  const LipschitzMap c = cylindrical_map(3);
  const DetectConfig cfg;
  const double limit = estimate_alpha(c, vec({0, 0, 1}), 2, cfg.r_max, cfg.tol_defect, cfg);
  double prev = kInf;
  for (double r : {0.8, 0.4, 0.2, 0.1, 0.05, 0.02}) {
    const double a = estimate_alpha(c, vec({r, 0, 1}), 2, cfg.r_max, cfg.tol_defect, cfg);
    EXPECT_LE(a, prev + 1e-12);
    EXPECT_NEAR(a, r, 2e-3 * r + 1e-9);
    prev = a;
  }
  EXPECT_LE(prev, limit + 0.02 + cfg.r_min);
}

TEST(Trace, ProjectionPlane) {
  const LeafModel leaf = trace_leaf(projection_map(3, 2), vec({0, 0, 7}));
  EXPECT_EQ(leaf.dim, 2);
  EXPECT_LT((leaf.projection() - Mat(Vec(vec({1, 1, 0})).asDiagonal())).norm(), 1e-10);
  for (const auto& e : leaf.extent) EXPECT_TRUE(e.clamped);
  EXPECT_DOUBLE_EQ(leaf.sigma, leaf.r_max);
}

TEST(Trace, CylindricalHalfPlane) {
  const LeafModel leaf = trace_leaf(cylindrical_map(3), vec({2, 0, 0}));
  EXPECT_EQ(leaf.dim, 2);
  Mat expected = Mat::Zero(3, 3);
  expected(0, 0) = expected(2, 2) = 1.0;
  EXPECT_LT((leaf.projection() - expected).norm(), 1e-10);
  EXPECT_NEAR(extent_towards(leaf, vec({-1, 0, 0})), 2.0, 1e-6);
  EXPECT_NEAR(extent_towards(leaf, vec({1, 0, 0})), leaf.r_max, 1e-9);
  EXPECT_NEAR(extent_towards(leaf, vec({0, 0, 1})), leaf.r_max, 1e-9);
  EXPECT_NEAR(extent_towards(leaf, vec({0, 0, -1})), leaf.r_max, 1e-9);
  EXPECT_NEAR(leaf.sigma, 2.0, 1e-6);
}

TEST(Trace, DistanceRay) {
  const LeafModel leaf = trace_leaf(distance_map(Vec::Zero(2)), vec({3, 4}));
  EXPECT_EQ(leaf.dim, 1);
  EXPECT_NEAR(std::abs(leaf.frame(0, 0)), 0.6, 1e-10);
  EXPECT_NEAR(std::abs(leaf.frame(1, 0)), 0.8, 1e-10);
  EXPECT_NEAR(extent_towards(leaf, vec({-0.6, -0.8})), 5.0, 1e-6);
  EXPECT_NEAR(leaf.sigma, 5.0, 1e-6);
}

TEST(Trace, RejectsBoundaryPoints) {
  EXPECT_THROW(trace_leaf(cylindrical_map(3), vec({0, 0, 1})), NotInterior);
  EXPECT_THROW(trace_leaf(distance_map(Vec::Zero(2)), vec({0, 0})), NotInterior);
}

TEST(Trace, LeafModelInvariants) {
  for (const auto& e : test_atlas()) {
    const auto pts = sample_points(e, 40, 34, [&](const Vec& x) { return chartable(e, x); });
    for (const Vec& x : pts) {
      const LeafModel leaf = trace_leaf(e.map, x);
      const int k = leaf.dim;
      EXPECT_LT((leaf.frame.transpose() * leaf.frame - Mat::Identity(k, k)).norm(), 1e-10);
      EXPECT_LT((leaf.isometry.transpose() * leaf.isometry - Mat::Identity(k, k)).norm(), 1e-10);
      EXPECT_LE(leaf.sigma, leaf.min_extent() + 1e-12);
      const Vec ub = e.map(leaf.base);
      for (const auto& s : leaf.extent) {
        EXPECT_GT(s.radius, 0.0);
        const double t = 0.999 * std::min(s.radius, leaf.min_extent());
        const Vec moved = e.map(leaf.base + t * leaf.frame * s.direction);
        EXPECT_LT((moved - ub - t * leaf.isometry * s.direction).norm(), 1e-6 * (1 + t)) << e.key;
      }
    }
  }
}

TEST(Trace, JsonRoundTrip) {
  const LeafModel leaf = trace_leaf(cylindrical_map(3), vec({1, 0.5, 2}));
  const LeafModel back = leaf_from_json(to_json(leaf));
  EXPECT_EQ(back.dim, leaf.dim);
  EXPECT_LT((back.frame - leaf.frame).norm(), 1e-15);
  EXPECT_LT((back.isometry - leaf.isometry).norm(), 1e-15);
  EXPECT_EQ(back.extent.size(), leaf.extent.size());
  EXPECT_DOUBLE_EQ(back.sigma, leaf.sigma);
  EXPECT_EQ(to_json(back).dump(), to_json(leaf).dump());
}

TEST(Gamma, OriginRayAndRecession) {
  const LipschitzMap c = cylindrical_map(3);
  const LeafModel leaf = trace_leaf(c, vec({1, 0, 2}));
  EXPECT_EQ(minkowski_gamma(leaf, c, vec({0, 0})), 0.0);
  EXPECT_NEAR(minkowski_gamma(leaf, c, vec({-2, 0})), 2.0, 1e-6);
  EXPECT_EQ(minkowski_gamma(leaf, c, vec({1, 5})), 0.0);
  EXPECT_NEAR(minkowski_gamma(leaf, c, vec({-0.5, 0})), 0.5, 1e-6);
}

TEST(Gamma, OutsideRangeIsInfinite) {
  const LipschitzMap d = distance_map(Vec::Zero(2));
  const LeafModel leaf = trace_leaf(d, vec({3, 4}));
  EXPECT_NEAR(minkowski_gamma(leaf, d, vec({-10.0})), 2.0, 1e-6);
  const LipschitzMap p = projection_map(3, 1);
  const LeafModel line = trace_leaf(p, vec({0, 0, 0}));
  EXPECT_EQ(minkowski_gamma(line, p, vec({4.0})), 0.0);
}

// Leaves at distinct angles meet only on the axis, never in relative interiors.
TEST(Trace, CylindricalLeavesDisjointInteriors) {
  const LipschitzMap c = cylindrical_map(3);
  std::vector<LeafModel> leaves;
  for (int i = 0; i < 8; ++i) {
    const double th = 2.0 * M_PI * i / 8;
    leaves.push_back(trace_leaf(c, vec({std::cos(th), std::sin(th), 0.0})));
  }
  const auto inside = [](const LeafModel& leaf, const Vec& q) {
    const Vec d = q - leaf.base;
    const Vec coords = leaf.frame.transpose() * d;
    if ((d - leaf.frame * coords).norm() > 1e-9) return false;
    const double r = coords.norm();
    if (r < 1e-12) return true;
    // strictly inside the radial extent model
    double best = -2.0, radius = 0.0;
    for (const auto& e : leaf.extent) {
      const double cs = e.direction.dot(coords / r);
      if (cs > best) {
        best = cs;
        radius = e.radius;
      }
    }
    return r < radius * (1.0 - 1e-6);
  };
  int shared = 0;
  const int g = 22;
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) {
      for (int k = 0; k < g; ++k) {
        const Vec q = vec({-2 + 4.0 * i / (g - 1), -2 + 4.0 * j / (g - 1), -2 + 4.0 * k / (g - 1)});
        int count = 0;
        for (const auto& leaf : leaves) count += inside(leaf, q);
        if (count > 1) ++shared;
      }
    }
  }
  EXPECT_EQ(shared, 0);
  // along a leaf ray the exclusion is the axis, where both half-planes end
  EXPECT_NEAR(extent_towards(leaves[0], vec({-1, 0, 0})), 1.0, 1e-6);
}

TEST(Extent, SigmaOfHull) {
  std::vector<ExtentSample> ring;
  for (const Vec& d : sphere_design(2, 64)) ring.push_back({d, 3.0, false});
  EXPECT_NEAR(extent_sigma(ring, 2, 10.0), 3.0 * std::cos(M_PI / 64), 1e-9);
  std::vector<ExtentSample> seg{{vec({1.0}), 4.0, false}, {vec({-1.0}), 1.5, false}};
  EXPECT_DOUBLE_EQ(extent_sigma(seg, 1, 10.0), 1.5);
}

TEST(PointClassJson, UnknownIsNull) {
  PointClass pc;
  pc.point = vec({1, 2});
  pc.alpha = {0.0};
  pc.beta = {0.0};
  EXPECT_TRUE(to_json(pc).at("leaf_dim").is_null());
  pc.leaf_dim = 1;
  EXPECT_EQ(to_json(pc).at("leaf_dim"), 1);
}
