#include "leafdec/cdcheck.hpp"

#include <array>
#include <cmath>
#include <fmt/format.h>

namespace leafdec {

namespace {

constexpr double kRelViolation = 1e-12;

nlohmann::json vec_json(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

nlohmann::json n_eff_json(double n) {
  if (std::isinf(n)) return n > 0 ? "inf" : "-inf";
  return n;
}

std::vector<Vec> test_directions(int dim, int extra, Rng& rng) {
  std::vector<Vec> dirs;
  for (int i = 0; i < dim; ++i) dirs.push_back(Vec::Unit(dim, i));
  for (int i = 0; i < extra; ++i) dirs.push_back(random_unit(rng, dim));
  return dirs;
}

void record(CDReport& rep, double margin, const Vec& x, const Vec& v) {
  if (rep.n_checked == 0 || margin < rep.worst_margin) {
    rep.worst_margin = margin;
    rep.worst_point = x;
    rep.worst_dir = v;
  }
  ++rep.n_checked;
}

double neg_log(const ConditionalDensity& cond, const Vec& c) {
  if (!cond.in_support(c)) throw BoundaryContact("stencil leaves the support");
  double d = 0.0;
  try {
    d = cond(c);
  } catch (const SingularH&) {
    throw BoundaryContact("stencil touches a singular transverse operator");
  }
  if (!(d > 0.0) || !std::isfinite(d)) throw BoundaryContact("density vanishes on the stencil");
  return -std::log(d);
}

}  // namespace

double cd_margin(const Mat& hess, const Vec& grad, const Vec& v, double kappa, double n_eff, int dim) {
  const double quad = v.dot(hess * v);
  const double kv = kappa * v.squaredNorm();
  if (std::isinf(n_eff)) return quad - kv;
  if (n_eff == static_cast<double>(dim)) return quad - kv;  // rho constant on this branch
  const double g = grad.dot(v);
  return quad - g * g / (n_eff - dim) - kv;
}

CDReport check_ambient_cd(const WeightedMeasure& measure, const CDParams& params, const std::vector<Vec>& samples,
                          int dirs_per_point, std::uint64_t seed, double tol_cd) {
  params.validate();
  const int n = measure.dim;
  if (params.n_dim != n) throw DimensionError("CD parameters use a different ambient dimension");
  CDReport rep;
  rep.params = params;
  rep.tol_cd = tol_cd;
  if (params.n_eff == static_cast<double>(n) && !measure.constant_rho) {
    const double rho0 = samples.empty() ? 0.0 : measure.rho(samples.front());
    for (const Vec& x : samples) {
      if (std::abs(measure.rho(x) - rho0) > 1e-12 * (1.0 + std::abs(rho0)) || measure.grad_rho(x).norm() > 1e-12) {
        throw NonConstantRho("N = n requires a constant weight");
      }
    }
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Vec& x = samples[i];
    Rng rng(derive_seed(seed, i));
    const Mat hess = measure.hess_rho(x);
    const Vec grad = measure.grad_rho(x);
    for (const Vec& v : test_directions(n, dirs_per_point, rng)) {
      record(rep, cd_margin(hess, grad, v, params.kappa, params.n_eff, n), x, v);
    }
  }
  rep.pass = rep.n_checked > 0 && rep.worst_margin >= -tol_cd;
  return rep;
}

std::pair<double, double> neg_log_derivatives(const ConditionalDensity& cond, const Vec& c, const Vec& q, double h) {
  const double f0 = neg_log(cond, c);
  const double fp = neg_log(cond, c + h * q);
  const double fm = neg_log(cond, c - h * q);
  return {(fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / (h * h)};
}

CDReport check_leaf_cd(const ConditionalDensity& cond, const CDParams& params, const std::vector<Vec>& samples,
                       int dirs, std::uint64_t seed, double tol_cd, double h_rel) {
  params.validate();
  const int m = cond.dim();
  if (params.n_dim < m) throw DimensionError("ambient dimension below the leaf dimension");
  CDReport rep;
  rep.params = params;
  rep.tol_cd = tol_cd;
  const bool flat_branch = params.n_eff == static_cast<double>(m);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Vec& c = samples[i];
    Rng rng(derive_seed(seed, i));
    const double h = h_rel * std::max(1.0, c.norm());
    for (const Vec& q : test_directions(m, dirs, rng)) {
      const auto [d1, d2] = neg_log_derivatives(cond, c, q, h);
      if (flat_branch && std::abs(d1) > 1e-6) throw NonConstantRho("N = m requires a constant leaf weight");
      double margin = d2 - params.kappa * q.squaredNorm();
      if (!params.infinite() && !flat_branch) margin -= d1 * d1 / (params.n_eff - m);
      record(rep, margin, c, q);
    }
  }
  rep.pass = rep.n_checked > 0 && rep.worst_margin >= -tol_cd;
  return rep;
}

NeedleReport check_needle_logconcavity(const ConditionalDensity& cond, int grid_n, double tol_cd) {
  if (!cond.box) throw DegenerateSupport("needle check needs a coordinate box");
  if (grid_n < 3) throw std::invalid_argument("grid needs at least 3 nodes per axis");
  const int m = cond.dim();
  const Vec& lo = cond.box->first;
  const Vec& hi = cond.box->second;
  NeedleReport rep;
  rep.min_second_difference_of_neg_log = std::numeric_limits<double>::infinity();
  long nodes = 1;
  for (int i = 0; i < m; ++i) nodes *= grid_n;
  for (long cell = 0; cell < nodes; ++cell) {
    Vec c(m);
    std::vector<int> idx(m);
    long rem = cell;
    for (int i = 0; i < m; ++i) {
      idx[i] = static_cast<int>(rem % grid_n);
      rem /= grid_n;
      c[i] = lo[i] + (hi[i] - lo[i]) * idx[i] / (grid_n - 1);
    }
    for (int axis = 0; axis < m; ++axis) {
      if (idx[axis] == 0 || idx[axis] == grid_n - 1) continue;
      const double h = (hi[axis] - lo[axis]) / (grid_n - 1);
      const auto [d1, d2] = neg_log_derivatives(cond, c, Vec::Unit(m, axis), h);
      (void)d1;
      rep.min_second_difference_of_neg_log = std::min(rep.min_second_difference_of_neg_log, d2);
      ++rep.n_checked;
    }
  }
  rep.pass = rep.n_checked > 0 && rep.min_second_difference_of_neg_log >= -tol_cd;
  return rep;
}

double two_fraction_gap(double a, double b, double x, double y) {
  return x * x / a + y * y / b - (x - y) * (x - y) / (a + b);
}

double trace_gap(const Mat& a) {
  const double tr = a.trace();
  return static_cast<double>(a.rows()) * (a * a).trace() - tr * tr;
}

WitnessReport trace_inequality_check(const std::vector<Mat>& a_samples,
                                     const std::vector<std::array<double, 4>>& fraction_samples) {
  WitnessReport rep;
  for (const Mat& a : a_samples) {
    const double tr = a.trace();
    const double scale = std::abs(static_cast<double>(a.rows()) * (a * a).trace()) + tr * tr;
    const double gap = trace_gap(a);
    const double rel = scale > 0.0 ? gap / scale : 0.0;
    rep.worst_trace_gap = std::min(rep.worst_trace_gap, rel);
    if (gap < -kRelViolation * scale) ++rep.trace_violations;
  }
  for (const auto& s : fraction_samples) {
    const double a = s[0], b = s[1], x = s[2], y = s[3];
    if (!(b > 0.0) || (a >= -b && a <= 0.0)) throw std::invalid_argument("inadmissible (a, b)");
    const double scale = std::abs(x * x / a) + std::abs(y * y / b) + std::abs((x - y) * (x - y) / (a + b));
    const double gap = two_fraction_gap(a, b, x, y);
    const double rel = scale > 0.0 ? gap / scale : 0.0;
    rep.worst_fraction_gap = std::min(rep.worst_fraction_gap, rel);
    if (gap < -kRelViolation * scale) ++rep.fraction_violations;
  }
  rep.instances = static_cast<int>(std::max(a_samples.size(), fraction_samples.size()));
  rep.pass = rep.trace_violations == 0 && rep.fraction_violations == 0;
  return rep;
}

WitnessReport trace_inequality_check(int instances, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> dim(1, 3);
  std::uniform_real_distribution<double> logscale(-3.0, 3.0);
  std::bernoulli_distribution coin(0.5);
  std::vector<Mat> mats;
  std::vector<std::array<double, 4>> fracs;
  for (int i = 0; i < instances; ++i) {
    const int d = dim(rng);
    Mat a(d, d);
    for (int r = 0; r < d; ++r) {
      for (int c = 0; c <= r; ++c) a(r, c) = a(c, r) = normal(rng);
    }
    mats.push_back(a);
    const double b = std::pow(10.0, logscale(rng));
    // a > 0 or a < -b
    const double a_val = coin(rng) ? std::pow(10.0, logscale(rng)) : -b - std::pow(10.0, logscale(rng));
    fracs.push_back({a_val, b, normal(rng), normal(rng)});
  }
  return trace_inequality_check(mats, fracs);
}

nlohmann::json to_json(const CDReport& r) {
  nlohmann::json j;
  j["params"] = {{"kappa", r.params.kappa}, {"n_dim", r.params.n_dim}, {"n_eff", n_eff_json(r.params.n_eff)}};
  j["worst_margin"] = r.worst_margin;
  j["worst_point"] = vec_json(r.worst_point);
  j["worst_dir"] = vec_json(r.worst_dir);
  j["n_checked"] = r.n_checked;
  j["tol_cd"] = r.tol_cd;
  j["pass"] = r.pass;
  return j;
}

nlohmann::json to_json(const NeedleReport& r) {
  return {{"min_second_difference_of_neg_log", r.min_second_difference_of_neg_log},
          {"n_checked", r.n_checked},
          {"pass", r.pass}};
}

nlohmann::json to_json(const WitnessReport& r) {
  return {{"instances", r.instances},
          {"fraction_violations", r.fraction_violations},
          {"trace_violations", r.trace_violations},
          {"worst_fraction_gap", r.worst_fraction_gap},
          {"worst_trace_gap", r.worst_trace_gap},
          {"pass", r.pass}};
}

}  // namespace leafdec
