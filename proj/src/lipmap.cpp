#include "leafdec/lipmap.hpp"

#include <cmath>
#include <fmt/format.h>

namespace leafdec {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

std::string describe(const Vec& x) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < x.size(); ++i) s += fmt::format("{}{:.6g}", i ? ", " : "", x[i]);
  return s + ")";
}

}  // namespace

LipschitzMap::LipschitzMap(std::string name, int dim_in, int dim_out, EvalFn eval)
    : name_(std::move(name)), n_(dim_in), m_(dim_out), eval_(std::move(eval)) {
  if (n_ < 1 || m_ < 1 || m_ > n_) {
    throw DimensionError(fmt::format("map '{}' needs 1 <= m <= n, got n={} m={}", name_, n_, m_));
  }
}

LipschitzMap& LipschitzMap::with_jacobian(JacobianFn fn) {
  jac_ = std::move(fn);
  return *this;
}
LipschitzMap& LipschitzMap::with_hessian(HessianFn fn) {
  hess_ = std::move(fn);
  return *this;
}
LipschitzMap& LipschitzMap::with_exclusion(ExclusionFn fn) {
  excl_ = std::move(fn);
  return *this;
}

double LipschitzMap::jacobian_step(const Vec& x) { return std::cbrt(kEps) * std::max(1.0, x.norm()); }
double LipschitzMap::hessian_step(const Vec& x) {
  return std::pow(kEps, 0.25) * std::max(1.0, x.norm());
}

void LipschitzMap::check_input(const Vec& x) const {
  if (x.size() != n_) {
    throw DimensionError(fmt::format("map '{}' expects dimension {}, got {}", name_, n_, x.size()));
  }
  if (!x.allFinite()) throw NonFinite("non-finite input point");
}

Vec LipschitzMap::operator()(const Vec& x) const {
  check_input(x);
  Vec y = eval_(x);
  if (y.size() != m_) {
    throw DimensionError(fmt::format("map '{}' returned dimension {}, expected {}", name_, y.size(), m_));
  }
  if (!y.allFinite()) throw NonFinite(fmt::format("map '{}' non-finite at {}", name_, describe(x)));
  return y;
}

Mat LipschitzMap::fd_jacobian(const Vec& x, double h) const {
  Mat j(m_, n_);
  Vec xp = x, xm = x;
  for (int i = 0; i < n_; ++i) {
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    j.col(i) = ((*this)(xp) - (*this)(xm)) / (xp[i] - xm[i]);
    xp[i] = xm[i] = x[i];
  }
  return j;
}

Mat LipschitzMap::jacobian(const Vec& x) const {
  check_input(x);
  Mat j = jac_ ? jac_(x) : fd_jacobian(x);
  if (j.rows() != m_ || j.cols() != n_) throw DimensionError("jacobian has wrong shape");
  if (!j.allFinite()) throw NonFinite(fmt::format("map '{}' jacobian non-finite at {}", name_, describe(x)));
  return j;
}

std::optional<Mat> LipschitzMap::differentiable_jacobian(const Vec& x) const {
  check_input(x);
  if (jac_) {
    Mat j = jac_(x);
    if (!j.allFinite()) return std::nullopt;
    return j;
  }
  // one-sided quotients at the optimal forward step; a kink separates them by O(1)
  const double h = std::sqrt(kEps) * std::max(1.0, x.norm());
  const Vec u0 = (*this)(x);
  Mat j(m_, n_);
  Vec xs = x;
  for (int i = 0; i < n_; ++i) {
    xs[i] = x[i] + h;
    const double hp = xs[i] - x[i];
    const Vec fwd = ((*this)(xs) - u0) / hp;
    xs[i] = x[i] - h;
    const double hm = x[i] - xs[i];
    const Vec bwd = (u0 - (*this)(xs)) / hm;
    xs[i] = x[i];
    if ((fwd - bwd).norm() > 1e-5) return std::nullopt;
  }
  return fd_jacobian(x);
}

HessianTensor LipschitzMap::fd_hessian(const Vec& x, double h) const {
  HessianTensor out(m_, Mat::Zero(n_, n_));
  const Vec u0 = (*this)(x);
  Vec xs = x;
  for (int i = 0; i < n_; ++i) {
    xs[i] = x[i] + h;
    const Vec up = (*this)(xs);
    xs[i] = x[i] - h;
    const Vec um = (*this)(xs);
    xs[i] = x[i];
    for (int l = 0; l < m_; ++l) out[l](i, i) = (up[l] - 2.0 * u0[l] + um[l]) / (h * h);
    for (int k = i + 1; k < n_; ++k) {
      Vec pp = x, pm = x, mp = x, mm = x;
      pp[i] += h; pp[k] += h;
      pm[i] += h; pm[k] -= h;
      mp[i] -= h; mp[k] += h;
      mm[i] -= h; mm[k] -= h;
      const Vec d = ((*this)(pp) - (*this)(pm) - (*this)(mp) + (*this)(mm)) / (4.0 * h * h);
      for (int l = 0; l < m_; ++l) out[l](i, k) = out[l](k, i) = d[l];
    }
  }
  return out;
}

HessianTensor LipschitzMap::hessian(const Vec& x) const {
  check_input(x);
  HessianTensor h = hess_ ? hess_(x) : fd_hessian(x);
  if (static_cast<int>(h.size()) != m_) throw DimensionError("hessian has wrong output count");
  for (auto& a : h) {
    if (a.rows() != n_ || a.cols() != n_) throw DimensionError("hessian has wrong shape");
    if (!a.allFinite()) throw NonFinite(fmt::format("map '{}' hessian non-finite at {}", name_, describe(x)));
    a = 0.5 * (a + a.transpose()).eval();
  }
  return h;
}

double isometry_defect(const LipschitzMap& map, const Vec& x, const Vec& y) {
  return (x - y).squaredNorm() - (map(x) - map(y)).squaredNorm();
}

LipschitzReport verify_lipschitz(const LipschitzMap& map, const std::vector<Vec>& samples, double tol_lip) {
  if (samples.empty()) throw std::invalid_argument("verify_lipschitz needs at least one sample");
  LipschitzReport rep;
  rep.max_operator_norm = -1.0;
  for (const auto& x : samples) {
    const Mat j = map.jacobian(x);
    Eigen::JacobiSVD<Mat> svd(j);
    const double s = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
    if (s > rep.max_operator_norm) {
      rep.max_operator_norm = s;
      rep.worst_point = x;
    }
  }
  rep.pass = rep.max_operator_norm <= 1.0 + tol_lip;
  return rep;
}

double WeightedMeasure::density(const Vec& x) const {
  const double d = std::exp(-rho(x));
  if (!std::isfinite(d) || d <= 0.0) throw NonFinite(fmt::format("density exp(-rho) invalid at {}", describe(x)));
  return d;
}

WeightedMeasure lebesgue_measure(int n) {
  WeightedMeasure w;
  w.name = "lebesgue";
  w.dim = n;
  w.rho = [](const Vec&) { return 0.0; };
  w.grad_rho = [n](const Vec&) { return Vec::Zero(n).eval(); };
  w.hess_rho = [n](const Vec&) { return Mat::Zero(n, n).eval(); };
  w.constant_rho = true;
  return w;
}

WeightedMeasure gaussian_measure(const Vec& center, double variance) {
  if (!(variance > 0.0)) throw std::invalid_argument("gaussian variance must be positive");
  const int n = static_cast<int>(center.size());
  WeightedMeasure w;
  w.name = "gaussian";
  w.dim = n;
  w.rho = [center, variance](const Vec& x) { return (x - center).squaredNorm() / (2.0 * variance); };
  w.grad_rho = [center, variance](const Vec& x) { return ((x - center) / variance).eval(); };
  w.hess_rho = [n, variance](const Vec&) { return (Mat::Identity(n, n) / variance).eval(); };
  return w;
}

WeightedMeasure concave_weight(int n) {
  WeightedMeasure w;
  w.name = "concave";
  w.dim = n;
  w.rho = [](const Vec& x) { return -0.5 * x.squaredNorm(); };
  w.grad_rho = [](const Vec& x) { return (-x).eval(); };
  w.hess_rho = [n](const Vec&) { return (-Mat::Identity(n, n)).eval(); };
  return w;
}

WeightedMeasure scaled_measure(const WeightedMeasure& base, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("measure scale must be positive");
  WeightedMeasure w = base;
  const double shift = std::log(scale);
  auto rho = base.rho;
  w.name = base.name + "_scaled";
  w.rho = [rho, shift](const Vec& x) { return rho(x) + shift; };
  return w;
}

void CDParams::validate() const {
  if (std::isnan(n_eff) || (std::isinf(n_eff) && n_eff < 0)) {
    throw InvalidN("effective dimension must be a real number or +inf");
  }
  if (n_eff == static_cast<double>(n_dim)) return;
  if (n_eff >= 1.0 && n_eff < static_cast<double>(n_dim)) {
    throw InvalidN(fmt::format("N = {} lies in the excluded range [1, {})", n_eff, n_dim));
  }
}

}  // namespace leafdec
