#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "leafdec/atlas.hpp"
#include "leafdec/chart.hpp"
#include "leafdec/disintegrate.hpp"

namespace leafdec::testing {

// Atlas entry with charts covering its m-dimensional leaves on the sample box.
struct ChartedEntry {
  AtlasEntry entry;
  std::vector<ChartPtr> charts;
};

inline Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

inline std::vector<ChartPtr> sector_charts(const LipschitzMap& map, const Vec& level, int count, double radius,
                                           const Vec& rest, const ChartConfig& cfg = {}) {
  std::vector<ChartPtr> out;
  for (int k = 0; k < count; ++k) {
    out.push_back(std::make_shared<const Chart>(build_chart(map, level, sector_seeds(count, k, radius, rest), cfg)));
  }
  return out;
}

inline ChartedEntry charted(const AtlasEntry& e) {
  ChartedEntry c{e, {}};
  const LipschitzMap& map = e.map;
  if (e.key == "identity") {
    c.charts.push_back(std::make_shared<const Chart>(build_chart(map, vec({0.3, -0.2, 0.5}), {vec({0, 0, 0})})));
  } else if (e.key == "projection") {
    std::vector<Vec> seeds;
    for (double t = -2.0; t <= 2.0 + 1e-12; t += 1.0) seeds.push_back(vec({0.3, 0.2, t}));
    c.charts.push_back(std::make_shared<const Chart>(build_chart(map, vec({0, 0}), seeds)));
  } else if (e.key == "distance") {
    c.charts = sector_charts(map, vec({1.0}), 8, 1.5, Vec(0));
  } else if (e.key == "cylindrical") {
    c.charts = sector_charts(map, vec({1.0, 0.0}), 16, 1.5, vec({0.0}));
  } else if (e.key == "ball_distance") {
    c.charts = sector_charts(map, vec({0.5}), 8, 1.5, Vec(0));
  }
  return c;
}

inline std::vector<ChartedEntry> charted_atlas() {
  std::vector<ChartedEntry> out;
  for (const auto& e : test_atlas()) out.push_back(charted(e));
  return out;
}

// Outside the declared singular set, on an m-dimensional leaf, away from its boundary.
inline bool chartable(const AtlasEntry& e, const Vec& x, double margin = 0.1) {
  if (e.map.excluded(x)) return false;
  const LeafTruth t = e.truth.at(x);
  return t.dim == e.map.dim_out() && !t.on_boundary && t.boundary_distance > margin;
}

// Uniform points of the entry's sample box accepted by `keep`.
inline std::vector<Vec> sample_points(const AtlasEntry& e, int count, std::uint64_t seed,
                                      const std::function<bool(const Vec&)>& keep) {
  Rng rng(seed);
  std::vector<Vec> pts;
  long tries = 0;
  while (static_cast<int>(pts.size()) < count && tries < 1000L * count) {
    ++tries;
    Vec x = random_uniform(rng, e.sample_lo, e.sample_hi);
    if (keep(x)) pts.push_back(std::move(x));
  }
  return pts;
}

// Finite-difference n x n determinant of F at (a, b); central differences with step h.
inline double fd_det_f(const Chart& chart, const Vec& a, const Vec& b, double h = 1e-5) {
  const int d = static_cast<int>(a.size()), m = static_cast<int>(b.size());
  const int n = d + m;
  Mat jac(n, n);
  for (int i = 0; i < d; ++i) {
    Vec ap = a, am = a;
    ap[i] += h;
    am[i] -= h;
    jac.col(i) = (map_f(chart, ap, b) - map_f(chart, am, b)) / (2.0 * h);
  }
  for (int j = 0; j < m; ++j) {
    Vec bp = b, bm = b;
    bp[j] += h;
    bm[j] -= h;
    jac.col(d + j) = (map_f(chart, a, bp) - map_f(chart, a, bm)) / (2.0 * h);
  }
  return std::abs(jac.determinant());
}

}  // namespace leafdec::testing
