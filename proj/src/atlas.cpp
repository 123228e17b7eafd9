#include "leafdec/atlas.hpp"

#include <cmath>
#include <fmt/format.h>
#include <set>

namespace leafdec {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kExclusion = 0.1;

Mat nan_matrix(int r, int c) { return Mat::Constant(r, c, kNaN); }

Vec json_vec(const nlohmann::json& j, const char* key) {
  if (!j.is_array()) throw ConfigError(fmt::format("'{}' must be an array of numbers", key));
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(fmt::format("'{}' must contain numbers", key));
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

nlohmann::json vec_json(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

int json_int(const nlohmann::json& spec, const char* key, int fallback) {
  if (!spec.contains(key)) return fallback;
  const auto& j = spec.at(key);
  if (!j.is_number_integer()) throw ConfigError(fmt::format("'{}' must be an integer", key));
  return j.get<int>();
}

void reject_unknown(const nlohmann::json& spec, const std::set<std::string>& allowed) {
  for (auto it = spec.begin(); it != spec.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError(fmt::format("unknown key '{}' for map '{}'", it.key(), spec.value("map", "")));
    }
  }
}

Mat radial_tangent(const Vec& d) {
  Mat t(d.size(), 1);
  t.col(0) = d.normalized();
  return t;
}

}  // namespace

LipschitzMap identity_map(int n) {
  LipschitzMap map("identity", n, n, [](const Vec& x) { return x; });
  map.with_jacobian([n](const Vec&) { return Mat::Identity(n, n).eval(); });
  map.with_hessian([n](const Vec&) { return HessianTensor(n, Mat::Zero(n, n)); });
  return map;
}

LipschitzMap projection_map(int n, int m) {
  LipschitzMap map("projection", n, m, [m](const Vec& x) { return x.head(m).eval(); });
  map.with_jacobian([n, m](const Vec&) {
    Mat j = Mat::Zero(m, n);
    j.leftCols(m).setIdentity();
    return j;
  });
  map.with_hessian([n, m](const Vec&) { return HessianTensor(m, Mat::Zero(n, n)); });
  return map;
}

LipschitzMap distance_map(const Vec& p) {
  const int n = static_cast<int>(p.size());
  LipschitzMap map("distance", n, 1, [p](const Vec& x) { return Vec::Constant(1, (x - p).norm()); });
  map.with_jacobian([p, n](const Vec& x) {
    const Vec d = x - p;
    const double r = d.norm();
    if (r <= 1e-14) return nan_matrix(1, n);
    return Mat(d.transpose() / r);
  });
  map.with_hessian([p, n](const Vec& x) {
    const Vec d = x - p;
    const double r = d.norm();
    if (r <= 1e-14) return HessianTensor(1, nan_matrix(n, n));
    const Vec e = d / r;
    return HessianTensor(1, ((Mat::Identity(n, n) - e * e.transpose()) / r).eval());
  });
  map.with_exclusion([p](const Vec& x) { return (x - p).norm() < kExclusion; });
  return map;
}

LipschitzMap cylindrical_map(int n) {
  if (n < 3) throw DimensionError("cylindrical map needs n >= 3");
  const int m = n - 1;
  LipschitzMap map("cylindrical", n, m, [m](const Vec& x) {
    Vec y(m);
    y[0] = std::hypot(x[0], x[1]);
    y.tail(m - 1) = x.tail(m - 1);
    return y;
  });
  map.with_jacobian([n, m](const Vec& x) {
    const double r = std::hypot(x[0], x[1]);
    if (r <= 1e-14) return nan_matrix(m, n);
    Mat j = Mat::Zero(m, n);
    j(0, 0) = x[0] / r;
    j(0, 1) = x[1] / r;
    for (int i = 1; i < m; ++i) j(i, i + 1) = 1.0;
    return j;
  });
  map.with_hessian([n, m](const Vec& x) {
    const double r = std::hypot(x[0], x[1]);
    if (r <= 1e-14) return HessianTensor(m, nan_matrix(n, n));
    HessianTensor h(m, Mat::Zero(n, n));
    const double r3 = r * r * r;
    h[0](0, 0) = x[1] * x[1] / r3;
    h[0](1, 1) = x[0] * x[0] / r3;
    h[0](0, 1) = h[0](1, 0) = -x[0] * x[1] / r3;
    return h;
  });
  map.with_exclusion([](const Vec& x) { return std::hypot(x[0], x[1]) < kExclusion; });
  return map;
}

LipschitzMap ball_distance_map(const Vec& c, double radius) {
  const int n = static_cast<int>(c.size());
  if (!(radius > 0.0)) throw DimensionError("ball radius must be positive");
  LipschitzMap map("ball_distance", n, 1, [c, radius](const Vec& x) {
    return Vec::Constant(1, std::max(0.0, (x - c).norm() - radius));
  });
  const double kink = 1e-14 * std::max(1.0, radius);
  map.with_jacobian([c, radius, n, kink](const Vec& x) {
    const Vec d = x - c;
    const double r = d.norm();
    if (std::abs(r - radius) <= kink) return nan_matrix(1, n);
    if (r < radius) return Mat(Mat::Zero(1, n));
    return Mat(d.transpose() / r);
  });
  map.with_hessian([c, radius, n, kink](const Vec& x) {
    const Vec d = x - c;
    const double r = d.norm();
    if (std::abs(r - radius) <= kink) return HessianTensor(1, nan_matrix(n, n));
    if (r < radius) return HessianTensor(1, Mat::Zero(n, n));
    const Vec e = d / r;
    return HessianTensor(1, ((Mat::Identity(n, n) - e * e.transpose()) / r).eval());
  });
  map.with_exclusion([c, radius](const Vec& x) { return std::abs((x - c).norm() - radius) < kExclusion; });
  return map;
}

std::vector<std::string> atlas_keys() {
  return {"identity", "projection", "distance", "cylindrical", "ball_distance"};
}

AtlasEntry atlas_entry(const nlohmann::json& spec) {
  if (!spec.is_object() || !spec.contains("map") || !spec.at("map").is_string()) {
    throw ConfigError("map spec must be an object with a string 'map' key");
  }
  const std::string key = spec.at("map").get<std::string>();

  if (key == "identity") {
    reject_unknown(spec, {"map", "n"});
    const int n = json_int(spec, "n", 3);
    if (n < 1) throw ConfigError("identity needs n >= 1");
    GroundTruth truth{[n](const Vec&) { return LeafTruth{n, Mat::Identity(n, n), false}; }};
    return AtlasEntry{key, {{"map", key}, {"n", n}}, identity_map(n), truth,
                      Vec::Constant(n, -2.0), Vec::Constant(n, 2.0)};
  }
  if (key == "projection") {
    reject_unknown(spec, {"map", "n", "m"});
    const int n = json_int(spec, "n", 3);
    const int m = json_int(spec, "m", std::max(1, n - 1));
    if (n < 1 || m < 1 || m > n) throw ConfigError("projection needs 1 <= m <= n");
    GroundTruth truth{[n, m](const Vec&) {
      return LeafTruth{m, Mat::Identity(n, n).leftCols(m), false};
    }};
    return AtlasEntry{key, {{"map", key}, {"n", n}, {"m", m}}, projection_map(n, m), truth,
                      Vec::Constant(n, -2.0), Vec::Constant(n, 2.0)};
  }
  if (key == "distance") {
    reject_unknown(spec, {"map", "n", "p"});
    Vec p = spec.contains("p") ? json_vec(spec.at("p"), "p") : Vec::Zero(json_int(spec, "n", 2));
    if (spec.contains("n") && json_int(spec, "n", 0) != p.size()) throw ConfigError("'n' disagrees with 'p'");
    if (p.size() < 1) throw ConfigError("distance needs n >= 1");
    GroundTruth truth{[p](const Vec& x) {
      const Vec d = x - p;
      const double r = d.norm();
      if (r == 0.0) return LeafTruth{1, Mat(p.size(), 0), true, 0.0};
      return LeafTruth{1, radial_tangent(d), false, r};
    }};
    const int n = static_cast<int>(p.size());
    return AtlasEntry{key, {{"map", key}, {"n", n}, {"p", vec_json(p)}}, distance_map(p), truth,
                      (p.array() - 3.0).matrix(), (p.array() + 3.0).matrix()};
  }
  if (key == "cylindrical") {
    reject_unknown(spec, {"map", "n"});
    const int n = json_int(spec, "n", 3);
    if (n < 3) throw ConfigError("cylindrical needs n >= 3");
    GroundTruth truth{[n](const Vec& x) {
      const double r = std::hypot(x[0], x[1]);
      Mat t = Mat::Zero(n, n - 1);
      if (r == 0.0) return LeafTruth{n - 1, Mat(n, 0), true, 0.0};
      t(0, 0) = x[0] / r;
      t(1, 0) = x[1] / r;
      for (int i = 1; i < n - 1; ++i) t(i + 1, i) = 1.0;
      return LeafTruth{n - 1, t, false, r};
    }};
    return AtlasEntry{key, {{"map", key}, {"n", n}}, cylindrical_map(n), truth,
                      Vec::Constant(n, -2.0), Vec::Constant(n, 2.0)};
  }
  if (key == "ball_distance") {
    reject_unknown(spec, {"map", "n", "center", "radius"});
    Vec c = spec.contains("center") ? json_vec(spec.at("center"), "center") : Vec::Zero(json_int(spec, "n", 2));
    if (spec.contains("n") && json_int(spec, "n", 0) != c.size()) throw ConfigError("'n' disagrees with 'center'");
    double radius = 1.0;
    if (spec.contains("radius")) {
      if (!spec.at("radius").is_number()) throw ConfigError("'radius' must be a number");
      radius = spec.at("radius").get<double>();
    }
    if (!(radius > 0.0) || c.size() < 1) throw ConfigError("ball_distance needs radius > 0 and n >= 1");
    GroundTruth truth{[c, radius](const Vec& x) {
      const int n = static_cast<int>(c.size());
      const Vec d = x - c;
      const double r = d.norm();
      if (r < radius) return LeafTruth{0, Mat(n, 0), false};
      if (r == radius) return LeafTruth{1, radial_tangent(d), true, 0.0};
      return LeafTruth{1, radial_tangent(d), false, r - radius};
    }};
    const int n = static_cast<int>(c.size());
    const double half = 3.0 * radius;
    return AtlasEntry{key,
                      {{"map", key}, {"n", n}, {"center", vec_json(c)}, {"radius", radius}},
                      ball_distance_map(c, radius),
                      truth,
                      (c.array() - half).matrix(),
                      (c.array() + half).matrix()};
  }
  throw ConfigError(fmt::format("unknown atlas map '{}'", key));
}

std::vector<AtlasEntry> test_atlas() {
  std::vector<AtlasEntry> out;
  out.push_back(atlas_entry({{"map", "identity"}, {"n", 3}}));
  out.push_back(atlas_entry({{"map", "projection"}, {"n", 3}, {"m", 2}}));
  out.push_back(atlas_entry({{"map", "distance"}, {"n", 2}}));
  out.push_back(atlas_entry({{"map", "cylindrical"}, {"n", 3}}));
  out.push_back(atlas_entry({{"map", "ball_distance"}, {"n", 2}, {"radius", 1.0}}));
  return out;
}

}  // namespace leafdec
