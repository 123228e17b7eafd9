#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "leafdec/leafdetect.hpp"

namespace leafdec {

struct ChartConfig {
  double j_min = 0.05;        // bases keep sigma >= j_min
  double lambda_cut = 0.1;
  double newton_tol = 1e-10;
  int newton_max_iter = 50;
  double member_tol = 1e-6;   // tangent-coordinate residual accepted by membership tests
  double label_tol = 1e-7;    // section must reproduce the foot point within this distance
  DetectConfig detect;
};

struct ChartBase {
  Vec label;   // a in R^{n-m}
  Vec point;   // z with u(z) = level
  LeafModel leaf;
};

enum class SeedOutcome { Accepted, Duplicate, NotInterior, WrongDimension, LevelUnreachable, BelowJmin };
std::string to_string(SeedOutcome o);

// Foot-point geometry of the section at a label.
struct SectionGeometry {
  Vec label;
  Vec z;
  Mat du;          // m x n, Du(z)
  Mat normal;      // n x (n-m), orthonormal complement of the leaf tangent at z
  Mat dv;          // n x (n-m), derivative of the section
  double transverse_det = 1.0;  // |det(normal^T dv)|
  std::vector<Mat> curvature;   // m symmetric (n-m) x (n-m) blocks normal^T D^2u_l normal
};

class Chart {
 public:
  Chart(LipschitzMap map, Vec level, ChartConfig cfg);

  const LipschitzMap& map() const { return map_; }
  const Vec& level() const { return level_; }
  const ChartConfig& config() const { return cfg_; }
  const std::vector<ChartBase>& bases() const { return bases_; }
  const std::vector<SeedOutcome>& seed_outcomes() const { return outcomes_; }
  int label_dim() const { return map_.dim_in() - map_.dim_out(); }
  const Vec& reference_point() const { return z_ref_; }
  const Mat& reference_frame() const { return e_ref_; }
  const Mat& transverse_frame() const { return n_ref_; }
  const Vec& label_lo() const { return lo_; }
  const Vec& label_hi() const { return hi_; }
  double label_volume() const;

  // w: transverse coordinates of a foot point.
  Vec label_of(const Vec& z) const;
  bool label_in_domain(const Vec& a) const;
  // v: the foot point on the level set with label a; NoLeaf if the solve fails.
  Vec section(const Vec& a) const;

  friend Chart build_chart(const LipschitzMap&, const Vec&, const std::vector<Vec>&, const ChartConfig&);
  friend Chart chart_from_json(const LipschitzMap&, const nlohmann::json&);

 private:
  LipschitzMap map_;
  Vec level_;
  ChartConfig cfg_;
  std::vector<ChartBase> bases_;
  std::vector<SeedOutcome> outcomes_;
  Vec z_ref_;
  Mat e_ref_;
  Mat n_ref_;
  Vec lo_;
  Vec hi_;
};

using ChartPtr = std::shared_ptr<const Chart>;

Chart build_chart(const LipschitzMap& map, const Vec& level, const std::vector<Vec>& seeds,
                  const ChartConfig& cfg = {});

struct ChartPointImage {
  Vec a;
  Vec b;
  double jacobian_f = 0.0;
};

ChartPointImage map_g(const Chart& chart, const Vec& x);
// map_g without the Jacobian; nullopt where map_g would raise NoLeaf.
std::optional<std::pair<Vec, Vec>> locate(const Chart& chart, const Vec& x);
Vec map_f(const Chart& chart, const Vec& a, const Vec& b);
double jacobian_f(const Chart& chart, const Vec& a, const Vec& b);

SectionGeometry section_geometry(const Chart& chart, const Vec& a);
// I + sum_l b_l curvature_l.
Mat transverse_operator(const SectionGeometry& g, const Vec& b);
// transverse_det * |det H(b)|; SingularH if det H(b) <= 0.
double jacobian_from_geometry(const SectionGeometry& g, const Vec& b);
// v(a) + Du(v(a))^T b without the membership check.
Vec chart_point(const SectionGeometry& g, const Vec& b);

// Seeds around the circle of radius `radius` in the (x_1, x_2) plane for sector
// `index` of `count`: the sector centre first, then both edges. Remaining
// coordinates are `rest`.
std::vector<Vec> sector_seeds(int count, int index, double radius, const Vec& rest);

nlohmann::json to_json(const Chart& chart);
Chart chart_from_json(const LipschitzMap& map, const nlohmann::json& j);

}  // namespace leafdec
