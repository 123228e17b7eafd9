#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "leafdec/errors.hpp"
#include "leafdec/linalg.hpp"

namespace leafdec {

// Per-output Hessians: entry l is the symmetric n x n Hessian of u_l.
using HessianTensor = std::vector<Mat>;

// A map u: R^n -> R^m assumed 1-Lipschitz.
//
// Plugin convention: any callable taking an n-vector and returning an m-vector.
// Derivatives are optional; missing ones fall back to central differences.
// An analytic Jacobian may return non-finite entries where u is not differentiable.
// The exclusion predicate marks a declared null set where derivatives are not requested.
class LipschitzMap {
 public:
  using EvalFn = std::function<Vec(const Vec&)>;
  using JacobianFn = std::function<Mat(const Vec&)>;
  using HessianFn = std::function<HessianTensor(const Vec&)>;
  using ExclusionFn = std::function<bool(const Vec&)>;

  LipschitzMap(std::string name, int dim_in, int dim_out, EvalFn eval);

  LipschitzMap& with_jacobian(JacobianFn fn);
  LipschitzMap& with_hessian(HessianFn fn);
  LipschitzMap& with_exclusion(ExclusionFn fn);

  const std::string& name() const { return name_; }
  int dim_in() const { return n_; }
  int dim_out() const { return m_; }
  bool has_analytic_jacobian() const { return static_cast<bool>(jac_); }
  bool has_analytic_hessian() const { return static_cast<bool>(hess_); }

  // Throws NonFinite on non-finite output, DimensionError on size mismatch.
  Vec operator()(const Vec& x) const;

  // Analytic Jacobian when present, else central differences; NonFinite if not finite.
  Mat jacobian(const Vec& x) const;
  Mat fd_jacobian(const Vec& x, double h) const;
  Mat fd_jacobian(const Vec& x) const { return fd_jacobian(x, jacobian_step(x)); }

  // Du(x) if u is differentiable at x, nullopt otherwise. Without an analytic
  // Jacobian, forward and backward one-sided quotients must agree.
  std::optional<Mat> differentiable_jacobian(const Vec& x) const;

  HessianTensor hessian(const Vec& x) const;
  HessianTensor fd_hessian(const Vec& x, double h) const;
  HessianTensor fd_hessian(const Vec& x) const { return fd_hessian(x, hessian_step(x)); }

  bool excluded(const Vec& x) const { return excl_ ? excl_(x) : false; }

  static double jacobian_step(const Vec& x);
  static double hessian_step(const Vec& x);

 private:
  void check_input(const Vec& x) const;

  std::string name_;
  int n_;
  int m_;
  EvalFn eval_;
  JacobianFn jac_;
  HessianFn hess_;
  ExclusionFn excl_;
};

// ||x - y||^2 - ||u(x) - u(y)||^2.
double isometry_defect(const LipschitzMap& map, const Vec& x, const Vec& y);

struct LipschitzReport {
  double max_operator_norm = 0.0;
  Vec worst_point;
  bool pass = false;
};

LipschitzReport verify_lipschitz(const LipschitzMap& map, const std::vector<Vec>& samples,
                                 double tol_lip = 1e-6);

// Density exp(-rho) against Lebesgue measure.
struct WeightedMeasure {
  std::string name;
  int dim = 0;
  std::function<double(const Vec&)> rho;
  std::function<Vec(const Vec&)> grad_rho;
  std::function<Mat(const Vec&)> hess_rho;
  bool constant_rho = false;

  // exp(-rho(x)); NonFinite unless finite and positive.
  double density(const Vec& x) const;
};

WeightedMeasure lebesgue_measure(int n);
// rho = ||x - center||^2 / (2 variance).
WeightedMeasure gaussian_measure(const Vec& center, double variance = 1.0);
// rho = -||x||^2 / 2, a log-convex weight.
WeightedMeasure concave_weight(int n);
// rho + log(scale): the measure scaled by 1/scale.
WeightedMeasure scaled_measure(const WeightedMeasure& base, double scale);

// CD(kappa, N) parameters. N = +inf is represented by std::numeric_limits<double>::infinity().
struct CDParams {
  double kappa = 0.0;
  int n_dim = 1;
  double n_eff = std::numeric_limits<double>::infinity();

  bool infinite() const { return std::isinf(n_eff) && n_eff > 0; }
  // Throws InvalidN when n_eff lies in [1, n_dim) or is NaN / -inf.
  void validate() const;
};

}  // namespace leafdec
