#include "leafdec/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace leafdec {

bool all_finite(const Vec& v) { return v.allFinite(); }
bool all_finite(const Mat& m) { return m.allFinite(); }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Vec random_unit(Rng& rng, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(dim);
  do {
    for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  } while (v.norm() < 1e-12);
  return v.normalized();
}

Vec random_uniform(Rng& rng, const Vec& lo, const Vec& hi) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Vec v(lo.size());
  for (Eigen::Index i = 0; i < lo.size(); ++i) v[i] = lo[i] + (hi[i] - lo[i]) * uni(rng);
  return v;
}

JacobianFrame analyze_jacobian(const Mat& jac, double tol_sv) {
  JacobianFrame f;
  const int n = static_cast<int>(jac.cols());
  if (jac.rows() == 0 || n == 0) {
    f.right = Mat::Identity(n, n);
    f.left = Mat(jac.rows(), 0);
    f.singular = Vec(0);
    return f;
  }
  Eigen::JacobiSVD<Mat> svd(jac, Eigen::ComputeFullV | Eigen::ComputeThinU);
  f.right = svd.matrixV();
  f.left = svd.matrixU();
  f.singular = svd.singularValues();
  for (Eigen::Index i = 0; i < f.singular.size(); ++i) {
    const double s = f.singular[i];
    if (s >= 1.0 - tol_sv) {
      ++f.unit_count;
    } else if (s >= 1.0 - 2.0 * tol_sv) {
      f.ambiguous = true;
    }
  }
  return f;
}

void canonical_signs(Mat& cols) {
  for (Eigen::Index j = 0; j < cols.cols(); ++j) {
    Eigen::Index idx = 0;
    cols.col(j).cwiseAbs().maxCoeff(&idx);
    if (cols(idx, j) < 0) cols.col(j) *= -1.0;
  }
}

Mat orthonormal_complement(const Mat& cols, int ambient) {
  const int k = static_cast<int>(cols.cols());
  if (k == 0) return Mat::Identity(ambient, ambient);
  Eigen::JacobiSVD<Mat> svd(cols, Eigen::ComputeFullU);
  Mat comp = svd.matrixU().rightCols(ambient - k);
  canonical_signs(comp);
  return comp;
}

std::vector<Vec> sphere_design(int k, int circle) {
  std::vector<Vec> out;
  if (k <= 0) return out;
  if (k == 1) {
    out.push_back(Vec::Constant(1, 1.0));
    out.push_back(Vec::Constant(1, -1.0));
    return out;
  }
  if (k == 2) {
    for (int j = 0; j < circle; ++j) {
      const double phi = 2.0 * M_PI * j / circle;
      Vec v(2);
      v << std::cos(phi), std::sin(phi);
      out.push_back(v);
    }
    return out;
  }
  if (k <= 4) {
    int total = 1;
    for (int i = 0; i < k; ++i) total *= 3;
    for (int code = 0; code < total; ++code) {
      Vec v(k);
      int c = code;
      for (int i = 0; i < k; ++i) {
        v[i] = (c % 3) - 1;
        c /= 3;
      }
      if (v.squaredNorm() > 0) out.push_back(v.normalized());
    }
    return out;
  }
  for (int i = 0; i < k; ++i) {
    for (double s : {1.0, -1.0}) {
      Vec v = Vec::Zero(k);
      v[i] = s;
      out.push_back(v);
    }
    for (int j = i + 1; j < k; ++j) {
      for (double s : {1.0, -1.0}) {
        for (double t : {1.0, -1.0}) {
          Vec v = Vec::Zero(k);
          v[i] = s / std::sqrt(2.0);
          v[j] = t / std::sqrt(2.0);
          out.push_back(v);
        }
      }
    }
  }
  return out;
}

Mat regular_simplex(int k) {
  if (k <= 1) return Mat::Zero(0, std::max(k, 0));
  // centred standard basis lies in the sum-zero hyperplane of R^k
  Mat centred = Mat::Identity(k, k) - Mat::Constant(k, k, 1.0 / k);
  Mat basis = orthonormal_complement(Vec::Ones(k).normalized(), k);  // k x (k-1)
  Mat s = basis.transpose() * centred;                                // (k-1) x k
  for (int j = 0; j < k; ++j) s.col(j).normalize();
  return s;
}

std::vector<Vec> orthant_design(int k) {
  std::vector<Vec> out;
  if (k <= 0) return out;
  int total = 1;
  for (int i = 0; i < k; ++i) total *= 3;
  for (int code = 1; code < total; ++code) {
    Vec v(k);
    int c = code;
    for (int i = 0; i < k; ++i) {
      v[i] = c % 3;
      c /= 3;
    }
    Vec u = v.normalized();
    bool dup = false;
    for (const auto& w : out) {
      if ((w - u).norm() < 1e-12) {
        dup = true;
        break;
      }
    }
    if (!dup) out.push_back(u);
  }
  return out;
}

double gram_determinant(const Mat& cols) {
  if (cols.cols() == 0) return 1.0;
  return (cols.transpose() * cols).determinant();
}

}  // namespace leafdec
