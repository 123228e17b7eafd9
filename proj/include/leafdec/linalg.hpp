#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

namespace leafdec {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

bool all_finite(const Vec& v);
bool all_finite(const Mat& m);

// Splitmix64 mixing of (seed, stream); distinct streams give independent engines.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

using Rng = std::mt19937_64;

Vec random_unit(Rng& rng, int dim);
Vec random_uniform(Rng& rng, const Vec& lo, const Vec& hi);

// Singular structure of a Jacobian split at the unit threshold.
// `unit_count` counts sigma >= 1 - tol; `ambiguous` flags any sigma inside
// the hysteresis band [1 - 2 tol, 1 - tol).
struct JacobianFrame {
  Mat right;       // n x n, right singular vectors ordered by decreasing sigma
  Mat left;        // m x min(m,n)
  Vec singular;    // min(m,n)
  int unit_count = 0;
  bool ambiguous = false;

  Mat tangent(int k) const { return right.leftCols(k); }
  Mat isometry(int k) const { return left.leftCols(k); }
  Mat normal(int k) const { return right.rightCols(right.cols() - k); }
};

JacobianFrame analyze_jacobian(const Mat& jac, double tol_sv);

// Orthonormal basis of the orthogonal complement of span(cols), deterministic signs.
Mat orthonormal_complement(const Mat& cols, int ambient);

// Columns flipped so that the entry of largest magnitude in each is positive.
void canonical_signs(Mat& cols);

// Unit vectors covering S^{k-1}: +-1 for k=1, `circle` equally spaced angles for k=2,
// normalized {-1,0,1}^k \ {0} for k=3,4 and +-e_i, (+-e_i +- e_j)/sqrt2 beyond.
std::vector<Vec> sphere_design(int k, int circle = 16);

// Vertices of a regular simplex with k unit vertices in R^{k-1}.
Mat regular_simplex(int k);

// Nonnegative directions spanning the positive orthant of R^k, normalized
// points of {0,1,2}^k \ {0} with duplicates removed.
std::vector<Vec> orthant_design(int k);

double gram_determinant(const Mat& cols);

}  // namespace leafdec
