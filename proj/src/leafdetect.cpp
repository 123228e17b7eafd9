#include "leafdec/leafdetect.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <functional>

#include "leafdec/parallel.hpp"

namespace leafdec {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::uint64_t kAlphaStream = 0xa1fa;
constexpr std::uint64_t kBetaStream = 0xbe7a;

// Isometry tests on probe sets {x} u {x + r d_i}; every pair is checked.
struct Probe {
  const LipschitzMap& map;
  const Vec& x;
  const Vec& ux;
  double tol;

  bool isometric(const std::vector<Vec>& dirs, double r) const {
    std::vector<Vec> off(dirs.size()), img(dirs.size());
    for (std::size_t i = 0; i < dirs.size(); ++i) {
      off[i] = r * dirs[i];
      img[i] = map(x + off[i]) - ux;
      const double d2 = off[i].squaredNorm();
      if (d2 - img[i].squaredNorm() > tol * (1.0 + d2)) return false;
    }
    for (std::size_t i = 0; i < dirs.size(); ++i) {
      for (std::size_t j = i + 1; j < dirs.size(); ++j) {
        const double d2 = (off[i] - off[j]).squaredNorm();
        if (d2 - (img[i] - img[j]).squaredNorm() > tol * (1.0 + d2)) return false;
      }
    }
    return true;
  }

  // Largest pairwise defect relative to squared pair distance.
  double worst_relative(const std::vector<Vec>& dirs, double r) const {
    std::vector<Vec> off(dirs.size()), img(dirs.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < dirs.size(); ++i) {
      off[i] = r * dirs[i];
      img[i] = map(x + off[i]) - ux;
      const double d2 = off[i].squaredNorm();
      worst = std::max(worst, (d2 - img[i].squaredNorm()) / d2);
    }
    for (std::size_t i = 0; i < dirs.size(); ++i) {
      for (std::size_t j = i + 1; j < dirs.size(); ++j) {
        const double d2 = (off[i] - off[j]).squaredNorm();
        if (d2 <= 0.0) continue;
        worst = std::max(worst, (d2 - (img[i] - img[j]).squaredNorm()) / d2);
      }
    }
    return worst;
  }
};

// Two-sided design directions of the disk spanned by frame.
std::vector<Vec> disk_dirs(const Mat& frame, const DetectConfig& cfg) {
  std::vector<Vec> out;
  for (const Vec& c : sphere_design(static_cast<int>(frame.cols()), cfg.disk_directions)) out.push_back(frame * c);
  return out;
}

// One-sided directions filling the cone generated by the columns of gens.
std::vector<Vec> cone_dirs(const Mat& gens) {
  std::vector<Vec> out;
  for (const Vec& w : orthant_design(static_cast<int>(gens.cols()))) out.push_back((gens * w).normalized());
  return out;
}

// Largest passing radius in [r_lo, r_max]; 0 when r_lo fails.
double radius_search(const std::function<bool(double)>& test, double r_max, double r_lo, double rel) {
  r_lo = std::min(r_lo, r_max);
  if (test(r_max)) return r_max;
  if (!test(r_lo)) return 0.0;
  double lo = r_lo, hi = r_max;
  while (hi - lo > rel * lo) {
    const double mid = hi > 2.0 * lo ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
    if (test(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

// Running maximum of cone/disk radii; a candidate that fails just above the
// current best cannot raise it and is skipped.
struct RadiusMax {
  const Probe& probe;
  double r_max;
  double r_min;
  double rel;
  double best = 0.0;

  bool saturated() const { return best >= r_max; }

  void offer(const std::vector<Vec>& dirs) {
    if (saturated()) return;
    auto test = [&](double r) { return probe.isometric(dirs, r); };
    double lo = r_min;
    if (best > 0.0) {
      const double above = std::min(r_max, best * (1.0 + rel));
      if (!test(above)) return;
      lo = above;
    }
    best = std::max(best, radius_search(test, r_max, lo, rel));
  }
};

// Maximizes f over unit vectors of span(basis) by compass search from start.
Vec sphere_pattern_search(const Mat& basis, const Vec& start, const std::function<double(const Vec&)>& f,
                          double good_enough, int max_evals = 300) {
  const int d = static_cast<int>(basis.cols());
  Vec y = basis.transpose() * start;
  if (y.norm() < 1e-12) y = Vec::Unit(d, 0);
  y.normalize();
  double best = f(basis * y);
  int evals = 1;
  double step = 0.5;
  while (step > 1e-7 && evals < max_evals && best < good_enough) {
    bool improved = false;
    for (int i = 0; i < d && !improved; ++i) {
      for (double s : {1.0, -1.0}) {
        Vec y2 = y;
        y2[i] += s * step;
        if (y2.norm() < 1e-12) continue;
        y2.normalize();
        const double v = f(basis * y2);
        ++evals;
        if (v > best + 1e-15) {
          y = y2;
          best = v;
          improved = true;
          break;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return basis * y;
}

Mat random_subframe(const Mat& span, int k, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat g(span.cols(), k);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
  Eigen::HouseholderQR<Mat> qr(g);
  const Mat q = qr.householderQ() * Mat::Identity(span.cols(), k);
  return span * q;
}

// Gram determinant of k unit generators normalize(a + tau s_j) around a common axis.
double simplex_cone_gram(int k, double tau) {
  if (k <= 1) return 1.0;
  const double c = (1.0 - tau * tau / (k - 1)) / (1.0 + tau * tau);
  return std::pow(1.0 - c, k - 1) * (1.0 + (k - 1) * c);
}

// Cone generators centred on axis inside the unit-singular space of Du at x + rho axis.
std::optional<Mat> axis_cone(const Probe& probe, const Vec& axis, int k, double rho, double tau,
                             const DetectConfig& cfg) {
  const auto jac = probe.map.differentiable_jacobian(probe.x + rho * axis);
  if (!jac) return std::nullopt;
  const JacobianFrame f = analyze_jacobian(*jac, cfg.tol_sv);
  if (f.unit_count < k) return std::nullopt;
  const Mat span = f.tangent(f.unit_count);
  Vec a = span * (span.transpose() * axis);
  if (a.norm() < 1e-8) return std::nullopt;
  a.normalize();
  Mat gens(a.size(), k);
  if (k == 1) {
    gens.col(0) = a;
    return gens;
  }
  const Mat comp = orthonormal_complement(span.transpose() * a, f.unit_count);
  const Mat w = span * comp.leftCols(k - 1);
  const Mat s = regular_simplex(k);
  for (int j = 0; j < k; ++j) gens.col(j) = (a + tau * w * s.col(j)).normalized();
  return gens;
}

double beta_fallback(const Probe& probe, int k, double r_max, const DetectConfig& cfg, Rng& rng) {
  const int n = probe.map.dim_in();
  const Mat id = Mat::Identity(n, n);
  const double rho = std::min(cfg.search_radius, r_max);
  RadiusMax acc{probe, r_max, std::min(cfg.r_min, r_max), cfg.rel_precision};
  const double tau0 = k >= 2 ? std::sqrt(k - 1.0) : 0.0;
  for (double tau = tau0;; tau *= 0.5) {
    if (k >= 2 && simplex_cone_gram(k, tau) < cfg.gram_min) break;
    for (int attempt = 0; attempt < k + cfg.extra_cones && !acc.saturated(); ++attempt) {
      Vec d = random_unit(rng, n);
      d = sphere_pattern_search(
          id, d, [&](const Vec& v) { return -probe.worst_relative({v}, rho); }, -1e-12);
      auto score = [&](const Vec& axis) {
        const auto gens = axis_cone(probe, axis, k, rho, tau, cfg);
        if (!gens) return -2.0;
        return -probe.worst_relative(cone_dirs(*gens), rho);
      };
      const Vec axis = sphere_pattern_search(id, d, score, -1e-12);
      const auto gens = axis_cone(probe, axis, k, rho, tau, cfg);
      if (!gens || gram_determinant(*gens) < cfg.gram_min) continue;
      acc.offer(cone_dirs(*gens));
    }
    if (k == 1 || acc.best > 0.0) break;
  }
  return acc.best;
}

double alpha_fallback(const Probe& probe, int k, double r_max, const DetectConfig& cfg, Rng& rng) {
  const int n = probe.map.dim_in();
  const double rho = std::min(cfg.search_radius, r_max);
  RadiusMax acc{probe, r_max, std::min(cfg.r_min, r_max), cfg.rel_precision};
  for (int attempt = 0; attempt < k + cfg.extra_cones && !acc.saturated(); ++attempt) {
    Mat frame(n, 0);
    for (int j = 0; j < k; ++j) {
      const Mat basis = orthonormal_complement(frame, n);
      const Vec start = basis * random_unit(rng, static_cast<int>(basis.cols()));
      auto score = [&](const Vec& d) {
        std::vector<Vec> dirs{d, -d};
        for (Eigen::Index c = 0; c < frame.cols(); ++c) {
          dirs.push_back(frame.col(c));
          dirs.push_back(-frame.col(c));
        }
        return -probe.worst_relative(dirs, rho);
      };
      const Vec d = sphere_pattern_search(basis, start, score, -1e-12);
      frame.conservativeResize(Eigen::NoChange, j + 1);
      frame.col(j) = d.normalized();
    }
    acc.offer(disk_dirs(frame, cfg));
  }
  return acc.best;
}

double alpha_impl(const Probe& probe, const std::optional<JacobianFrame>& jf, int k, double r_max,
                  const DetectConfig& cfg, Rng& rng) {
  if (!jf) return alpha_fallback(probe, k, r_max, cfg, rng);
  if (jf->unit_count < k) return 0.0;
  RadiusMax acc{probe, r_max, std::min(cfg.r_min, r_max), cfg.rel_precision};
  acc.offer(disk_dirs(jf->tangent(k), cfg));
  if (jf->unit_count > k) {
    const Mat span = jf->tangent(jf->unit_count);
    for (int i = 0; i < k + cfg.extra_cones && !acc.saturated(); ++i) {
      acc.offer(disk_dirs(random_subframe(span, k, rng), cfg));
    }
  }
  return acc.best;
}

double beta_impl(const Probe& probe, const std::optional<JacobianFrame>& jf, int k, double r_max,
                 const DetectConfig& cfg, Rng& rng) {
  if (!jf) return beta_fallback(probe, k, r_max, cfg, rng);
  // a leaf of dimension >= k through a differentiability point forces k unit singular values
  if (jf->unit_count < k) return 0.0;
  RadiusMax acc{probe, r_max, std::min(cfg.r_min, r_max), cfg.rel_precision};
  const Mat span = jf->tangent(jf->unit_count);
  const Mat ek = span.leftCols(k);
  const int patterns = std::min(1 << k, 8);
  for (int p = 0; p < patterns && !acc.saturated(); ++p) {
    Mat gens = ek;
    for (int j = 0; j < k; ++j) {
      if (p & (1 << j)) gens.col(j) *= -1.0;
    }
    acc.offer(cone_dirs(gens));
  }
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < k + cfg.extra_cones && !acc.saturated(); ++i) {
    Mat gens = random_subframe(span, k, rng);
    for (int j = 0; j < k; ++j) {
      if (coin(rng)) gens.col(j) *= -1.0;
    }
    acc.offer(cone_dirs(gens));
  }
  return acc.best;
}

void check_order(const LipschitzMap& map, int k) {
  if (k < 1 || k > map.dim_out()) {
    throw DimensionError(fmt::format("order k={} outside [1, m={}]", k, map.dim_out()));
  }
}

std::optional<JacobianFrame> frame_at(const LipschitzMap& map, const Vec& x, const DetectConfig& cfg) {
  const auto jac = map.differentiable_jacobian(x);
  if (!jac) return std::nullopt;
  return analyze_jacobian(*jac, cfg.tol_sv);
}

nlohmann::json vec_json(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

nlohmann::json mat_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_json(m.row(i).transpose()));
  return rows;
}

Vec json_vec(const nlohmann::json& j) {
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

Mat json_mat(const nlohmann::json& j, Eigen::Index cols) {
  Mat m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = json_vec(j[i]).transpose();
  return m;
}

}  // namespace

double LeafModel::min_extent() const {
  double r = kInf;
  for (const auto& e : extent) r = std::min(r, e.radius);
  return r;
}

double estimate_alpha(const LipschitzMap& map, const Vec& x, int k, double r_max, double tol,
                      const DetectConfig& cfg) {
  check_order(map, k);
  if (!(r_max > 0.0)) throw std::invalid_argument("r_max must be positive");
  const Vec ux = map(x);
  Probe probe{map, x, ux, tol};
  Rng rng(derive_seed(cfg.seed, kAlphaStream + k));
  return alpha_impl(probe, frame_at(map, x, cfg), k, r_max, cfg, rng);
}

double estimate_beta(const LipschitzMap& map, const Vec& x, int k, double r_max, double tol,
                     const DetectConfig& cfg) {
  check_order(map, k);
  if (!(r_max > 0.0)) throw std::invalid_argument("r_max must be positive");
  const Vec ux = map(x);
  Probe probe{map, x, ux, tol};
  Rng rng(derive_seed(cfg.seed, kBetaStream + k));
  return beta_impl(probe, frame_at(map, x, cfg), k, r_max, cfg, rng);
}

PointClass classify_point(const LipschitzMap& map, const Vec& x, const DetectConfig& cfg) {
  const int m = map.dim_out();
  PointClass pc;
  pc.point = x;
  pc.alpha.assign(m, 0.0);
  pc.beta.assign(m, 0.0);
  const Vec ux = map(x);
  Probe probe{map, x, ux, cfg.tol_defect};
  const auto jf = frame_at(map, x, cfg);
  const double floor = cfg.r_min;

  for (int k = 1; k <= m; ++k) {
    Rng rng(derive_seed(cfg.seed, kBetaStream + k));
    pc.beta[k - 1] = beta_impl(probe, jf, k, cfg.r_max, cfg, rng);
    if (pc.beta[k - 1] < floor) break;
  }
  // a k+1 cone contains a k cone
  for (int k = m - 1; k >= 1; --k) pc.beta[k - 1] = std::max(pc.beta[k - 1], pc.beta[k]);

  int dim = 0;
  bool ambiguous = jf && jf->ambiguous;
  for (int k = 1; k <= m; ++k) {
    if (pc.beta[k - 1] >= floor) dim = k;
    if (pc.beta[k - 1] >= floor && pc.beta[k - 1] < 2.0 * floor) ambiguous = true;
  }

  for (int k = 1; k <= dim; ++k) {
    Rng rng(derive_seed(cfg.seed, kAlphaStream + k));
    pc.alpha[k - 1] = alpha_impl(probe, jf, k, cfg.r_max, cfg, rng);
  }
  for (int k = dim - 1; k >= 1; --k) pc.alpha[k - 1] = std::max(pc.alpha[k - 1], pc.alpha[k]);

  if (ambiguous) {
    pc.leaf_dim.reset();
    pc.interior = false;
  } else {
    pc.leaf_dim = dim;
    pc.interior = dim == 0 || pc.alpha[dim - 1] >= floor;
  }
  return pc;
}

std::vector<PointClass> classify_points(const LipschitzMap& map, const std::vector<Vec>& points,
                                        const DetectConfig& cfg, int threads) {
  std::vector<PointClass> out(points.size());
  parallel_for(points.size(), threads, [&](std::size_t i) {
    DetectConfig local = cfg;
    local.seed = derive_seed(cfg.seed, i);
    out[i] = classify_point(map, points[i], local);
  });
  return out;
}

bool on_leaf(const LipschitzMap& map, const Vec& base, const Vec& ubase, const Vec& v, const Vec& w,
             double tol) {
  const Vec du = map(base + v) - ubase;
  const double d2 = v.squaredNorm();
  const double bound = tol * (1.0 + d2);
  return (du - w).squaredNorm() <= bound && d2 - du.squaredNorm() <= bound;
}

ExtentSample ray_extent(const LipschitzMap& map, const Vec& base, const Vec& ubase, const Vec& dir,
                        const Vec& image_dir, const DetectConfig& cfg) {
  ExtentSample s;
  auto ok = [&](double t) { return on_leaf(map, base, ubase, t * dir, t * image_dir, cfg.tol_defect); };
  if (ok(cfg.r_max)) {
    s.radius = cfg.r_max;
    s.clamped = true;
    return s;
  }
  double lo = 0.0, hi = cfg.r_max;
  for (int it = 0; it < cfg.extent_iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (ok(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  s.radius = lo;
  return s;
}

double extent_sigma(const std::vector<ExtentSample>& extent, int dim, double r_max) {
  if (dim == 0 || extent.empty()) return r_max;
  double sigma = r_max;
  if (dim == 2) {
    // boundary of the sampled polygon; an edge between clamped vertices is open
    for (std::size_t j = 0; j < extent.size(); ++j) {
      const auto& a = extent[j];
      const auto& b = extent[(j + 1) % extent.size()];
      if (a.clamped && b.clamped) continue;
      const Vec pa = a.radius * a.direction;
      const Vec pb = b.radius * b.direction;
      const Vec e = pb - pa;
      const double len2 = e.squaredNorm();
      double t = len2 > 0.0 ? std::clamp(-pa.dot(e) / len2, 0.0, 1.0) : 0.0;
      sigma = std::min(sigma, (pa + t * e).norm());
    }
    return sigma;
  }
  const double shrink = dim == 1 ? 1.0 : 1.0 / std::sqrt(static_cast<double>(dim));
  for (const auto& e : extent) {
    if (!e.clamped) sigma = std::min(sigma, e.radius * shrink);
  }
  return sigma;
}

LeafModel trace_leaf(const LipschitzMap& map, const Vec& x, const DetectConfig& cfg) {
  const auto jac = map.differentiable_jacobian(x);
  if (!jac) throw NotInterior("map is not differentiable at the point");
  const JacobianFrame f = analyze_jacobian(*jac, cfg.tol_sv);
  if (f.ambiguous) throw FrameDegenerate("singular values inside the hysteresis band");
  const int k = f.unit_count;
  const int n = map.dim_in();
  const int m = map.dim_out();
  LeafModel leaf;
  leaf.base = x;
  leaf.dim = k;
  leaf.r_max = cfg.r_max;
  if (k == 0) {
    leaf.frame = Mat(n, 0);
    leaf.isometry = Mat(m, 0);
    leaf.sigma = cfg.r_max;
    return leaf;
  }
  leaf.frame = f.tangent(k);
  leaf.isometry = f.isometry(k);
  for (int j = 0; j < k; ++j) {
    Eigen::Index idx = 0;
    leaf.frame.col(j).cwiseAbs().maxCoeff(&idx);
    if (leaf.frame(idx, j) < 0) {
      leaf.frame.col(j) *= -1.0;
      leaf.isometry.col(j) *= -1.0;
    }
  }
  const Vec ux = map(x);
  Probe probe{map, x, ux, cfg.tol_defect};
  if (!probe.isometric(disk_dirs(leaf.frame, cfg), std::min(cfg.r_min, cfg.r_max))) {
    throw NotInterior("no two-sided isometric disk at the detection floor");
  }
  for (const Vec& c : sphere_design(k, cfg.extent_directions)) {
    ExtentSample s = ray_extent(map, x, ux, leaf.frame * c, leaf.isometry * c, cfg);
    s.direction = c;
    leaf.extent.push_back(std::move(s));
  }
  leaf.sigma = extent_sigma(leaf.extent, k, cfg.r_max);
  return leaf;
}

double minkowski_gamma(const LeafModel& leaf, const LipschitzMap& map, const Vec& y, const DetectConfig& cfg) {
  if (leaf.dim < 1) throw DimensionError("minkowski_gamma needs a leaf of dimension >= 1");
  const double ny = y.norm();
  if (ny == 0.0) return 0.0;
  const Vec c = leaf.isometry.transpose() * y;
  if ((leaf.isometry * c - y).norm() > 1e-9 * (1.0 + ny) || c.norm() == 0.0) return kInf;
  const Vec dir = c.normalized();
  DetectConfig local = cfg;
  local.r_max = leaf.r_max > 0.0 ? leaf.r_max : cfg.r_max;
  const ExtentSample s = ray_extent(map, leaf.base, map(leaf.base), leaf.frame * dir, leaf.isometry * dir, local);
  if (s.clamped) return 0.0;
  if (s.radius <= 0.0) return kInf;
  return c.norm() / s.radius;
}

nlohmann::json to_json(const PointClass& pc) {
  nlohmann::json j;
  j["point"] = vec_json(pc.point);
  j["leaf_dim"] = pc.leaf_dim ? nlohmann::json(*pc.leaf_dim) : nlohmann::json(nullptr);
  j["interior"] = pc.interior;
  j["alpha"] = pc.alpha;
  j["beta"] = pc.beta;
  return j;
}

nlohmann::json to_json(const LeafModel& leaf) {
  nlohmann::json j;
  j["base"] = vec_json(leaf.base);
  j["dim"] = leaf.dim;
  j["tangent_frame"] = mat_json(leaf.frame);
  j["isometry_factor"] = mat_json(leaf.isometry);
  nlohmann::json ext = nlohmann::json::array();
  for (const auto& e : leaf.extent) {
    ext.push_back({{"direction", vec_json(e.direction)}, {"radius", e.radius}, {"clamped", e.clamped}});
  }
  j["extent"] = ext;
  j["sigma"] = leaf.sigma;
  j["r_max"] = leaf.r_max;
  return j;
}

LeafModel leaf_from_json(const nlohmann::json& j) {
  LeafModel leaf;
  leaf.base = json_vec(j.at("base"));
  leaf.dim = j.at("dim").get<int>();
  leaf.frame = json_mat(j.at("tangent_frame"), leaf.dim);
  leaf.isometry = json_mat(j.at("isometry_factor"), leaf.dim);
  for (const auto& e : j.at("extent")) {
    leaf.extent.push_back({json_vec(e.at("direction")), e.at("radius").get<double>(), e.at("clamped").get<bool>()});
  }
  leaf.sigma = j.at("sigma").get<double>();
  leaf.r_max = j.at("r_max").get<double>();
  return leaf;
}

}  // namespace leafdec
