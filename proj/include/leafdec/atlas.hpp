#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "leafdec/lipmap.hpp"

namespace leafdec {

// Exact leaf data at a query point.
struct LeafTruth {
  int dim = 0;
  Mat tangent;                 // n x dim orthonormal
  bool on_boundary = false;    // point lies on the relative boundary of its leaf (or in several leaves)
  double boundary_distance = std::numeric_limits<double>::infinity();
};

struct GroundTruth {
  std::function<LeafTruth(const Vec&)> at;
};

struct AtlasEntry {
  std::string key;
  nlohmann::json params;  // full parameter object including "map"
  LipschitzMap map;
  GroundTruth truth;
  Vec sample_lo;          // default sampling box
  Vec sample_hi;
};

LipschitzMap identity_map(int n);
// (x_1..x_n) -> (x_1..x_m).
LipschitzMap projection_map(int n, int m);
// x -> ||x - p||; excluded where ||x - p|| < 0.1.
LipschitzMap distance_map(const Vec& p);
// (x_1..x_n) -> (sqrt(x_1^2 + x_2^2), x_3..x_n), n >= 3; excluded where the radius < 0.1.
LipschitzMap cylindrical_map(int n = 3);
// x -> max(0, ||x - c|| - R); excluded where | ||x - c|| - R | < 0.1.
LipschitzMap ball_distance_map(const Vec& c, double radius);

// Default entries: identity (n=3), projection (3->2), distance (R^2, p=0),
// cylindrical (R^3), ball distance (R^2, R=1).
std::vector<AtlasEntry> test_atlas();

// Builds an entry from {"map": key, ...params}; unknown keys raise ConfigError.
AtlasEntry atlas_entry(const nlohmann::json& spec);

std::vector<std::string> atlas_keys();

}  // namespace leafdec
