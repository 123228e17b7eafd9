#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "leafdec/lipmap.hpp"

namespace leafdec {

struct DetectConfig {
  double tol_defect = 1e-8;     // isometry accepted when defect <= tol_defect (1 + d^2)
  double tol_sv = 1e-4;         // unit singular values: sigma >= 1 - tol_sv
  double r_max = 10.0;          // radii clamp
  double r_min = 1e-3;          // smallest probe radius; also the detection floor
  double rel_precision = 1e-3;  // radius bisection stops at this relative width
  double gram_min = 0.1;        // cone generators keep Gram determinant >= gram_min
  double search_radius = 1e-2;  // probe radius of the direction search
  int extent_iterations = 40;
  int extent_directions = 64;   // tangent design size for k = 2
  int disk_directions = 16;     // probe ring for two-sided tests, k = 2
  int extra_cones = 3;          // cones tried beyond k before declaring zero
  std::uint64_t seed = 0;
};

// Radial extent sample in tangent coordinates.
struct ExtentSample {
  Vec direction;     // unit k-vector
  double radius = 0; // largest isometric parameter along base + t * frame * direction
  bool clamped = false;
};

struct LeafModel {
  Vec base;
  int dim = 0;
  Mat frame;     // n x k, orthonormal columns
  Mat isometry;  // m x k, orthonormal columns; u(base + frame c) = u(base) + isometry c
  std::vector<ExtentSample> extent;
  double sigma = 0.0;
  double r_max = 0.0;

  Mat projection() const { return frame * frame.transpose(); }
  Mat range_projection() const { return isometry * isometry.transpose(); }
  // T P as an m x n matrix.
  Mat tangent_map() const { return isometry * frame.transpose(); }
  double min_extent() const;
};

struct PointClass {
  Vec point;
  std::optional<int> leaf_dim;  // nullopt = Unknown
  bool interior = false;
  std::vector<double> alpha;    // alpha_1..alpha_m
  std::vector<double> beta;     // beta_1..beta_m
};

double estimate_alpha(const LipschitzMap& map, const Vec& x, int k, double r_max, double tol,
                      const DetectConfig& cfg = {});
double estimate_beta(const LipschitzMap& map, const Vec& x, int k, double r_max, double tol,
                     const DetectConfig& cfg = {});

PointClass classify_point(const LipschitzMap& map, const Vec& x, const DetectConfig& cfg = {});

// Classification of a batch; point i uses seed derive_seed(cfg.seed, i).
std::vector<PointClass> classify_points(const LipschitzMap& map, const std::vector<Vec>& points,
                                        const DetectConfig& cfg, int threads = 1);

LeafModel trace_leaf(const LipschitzMap& map, const Vec& x, const DetectConfig& cfg = {});

// Minkowski functional of u(S) - u(base) at y; +inf outside its cone, 0 on recession rays.
double minkowski_gamma(const LeafModel& leaf, const LipschitzMap& map, const Vec& y,
                       const DetectConfig& cfg = {});

// Largest t in [0, r_max] with base + t d on the leaf (affine residual and defect
// within tolerance); `clamped` when t = r_max passes.
ExtentSample ray_extent(const LipschitzMap& map, const Vec& base, const Vec& ubase, const Vec& dir,
                        const Vec& image_dir, const DetectConfig& cfg);

// Whether base + v lies on the leaf through base with u(base + v) = u(base) + w.
bool on_leaf(const LipschitzMap& map, const Vec& base, const Vec& ubase, const Vec& v, const Vec& w,
             double tol);

// Distance from the origin to the boundary of the hull of the extent points.
double extent_sigma(const std::vector<ExtentSample>& extent, int dim, double r_max);

nlohmann::json to_json(const PointClass& pc);
nlohmann::json to_json(const LeafModel& leaf);
LeafModel leaf_from_json(const nlohmann::json& j);

}  // namespace leafdec
