#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "leafdec/disintegrate.hpp"
#include "leafdec/lipmap.hpp"

namespace leafdec {

struct CDReport {
  CDParams params;
  double worst_margin = 0.0;  // min of Ric_{mu,N}(q,q) - kappa |q|^2 over points and unit directions
  Vec worst_point;
  Vec worst_dir;
  int n_checked = 0;
  double tol_cd = 1e-5;
  bool pass = false;
};

// Ric_{mu,N}(v,v) - kappa |v|^2 for rho with gradient `grad` and Hessian `hess`
// in a space of dimension `dim` (N = dim needs constant rho; N = inf drops the quadratic term).
double cd_margin(const Mat& hess, const Vec& grad, const Vec& v, double kappa, double n_eff, int dim);

CDReport check_ambient_cd(const WeightedMeasure& measure, const CDParams& params, const std::vector<Vec>& samples,
                          int dirs_per_point = 8, std::uint64_t seed = 0, double tol_cd = 1e-5);

// Leaf check on -log of the conditional density in its m leaf coordinates.
// params.n_dim is the ambient dimension n; samples are leaf coordinates.
// Stencil step h = h_rel * max(1, |c|).
CDReport check_leaf_cd(const ConditionalDensity& cond, const CDParams& params, const std::vector<Vec>& samples,
                       int dirs = 8, std::uint64_t seed = 0, double tol_cd = 1e-5, double h_rel = 1e-4);

// Directional first and second derivatives of -log density by central differences.
// BoundaryContact when a stencil point leaves the support.
std::pair<double, double> neg_log_derivatives(const ConditionalDensity& cond, const Vec& c, const Vec& q, double h);

struct NeedleReport {
  double min_second_difference_of_neg_log = 0.0;
  int n_checked = 0;
  bool pass = false;
};

// Second differences of -log density along grid lines of cond.box (grid_n nodes per axis).
NeedleReport check_needle_logconcavity(const ConditionalDensity& cond, int grid_n, double tol_cd = 1e-5);

// x^2/a + y^2/b - (x-y)^2/(a+b), nonnegative for b > 0 and a outside [-b, 0].
double two_fraction_gap(double a, double b, double x, double y);
// d tr(A^2) - (tr A)^2 for symmetric A of size d.
double trace_gap(const Mat& a);

struct WitnessReport {
  int instances = 0;
  int fraction_violations = 0;
  int trace_violations = 0;
  double worst_fraction_gap = 0.0;  // most negative relative gap seen
  double worst_trace_gap = 0.0;
  bool pass = false;
};

// Random instances: symmetric A in dimension 1..3 and admissible (a, b, x, y).
// A violation is a gap below -1e-12 times the magnitude of the terms.
WitnessReport trace_inequality_check(int instances, std::uint64_t seed = 0);
WitnessReport trace_inequality_check(const std::vector<Mat>& a_samples,
                                     const std::vector<std::array<double, 4>>& fraction_samples);

nlohmann::json to_json(const CDReport& r);
nlohmann::json to_json(const NeedleReport& r);
nlohmann::json to_json(const WitnessReport& r);

}  // namespace leafdec
