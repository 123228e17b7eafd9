#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "leafdec/chart.hpp"
#include "leafdec/lipmap.hpp"

namespace leafdec {

// Density of a conditional measure in leaf coordinates c in R^m.
// For chart-built densities c is the b coordinate: the point is v(a) + Du(v(a))^T c.
class ConditionalDensity {
 public:
  using ScalarFn = std::function<double(const Vec&)>;
  using SupportFn = std::function<bool(const Vec&)>;
  using EmbedFn = std::function<Vec(const Vec&)>;

  // Free-standing density on R^dim; the embedding is the identity.
  ConditionalDensity(int dim, ScalarFn density, SupportFn support);
  ConditionalDensity(int dim, ScalarFn density, SupportFn support, EmbedFn embed);

  int dim() const { return dim_; }
  // 0 outside the support.
  double operator()(const Vec& c) const;
  bool in_support(const Vec& c) const { return support_(c); }
  Vec to_ambient(const Vec& c) const { return embed_(c); }

  std::optional<LeafModel> leaf;
  std::optional<Vec> chart_label;
  std::optional<double> normalization;
  // Coordinate box containing the support, when known.
  std::optional<std::pair<Vec, Vec>> box;

 private:
  int dim_;
  ScalarFn density_;
  SupportFn support_;
  EmbedFn embed_;
};

// exp(-rho) * J_nF on the leaf with label a; SingularH at a stencil reports boundary contact.
ConditionalDensity conditional_density(const ChartPtr& chart, const Vec& a, const WeightedMeasure& measure);

struct Region {
  std::string description;
  std::function<bool(const Vec&)> contains;
  Vec lo;
  Vec hi;
  bool empty = false;
};

Region ball_region(const Vec& centre, double radius);
Region box_region(const Vec& lo, const Vec& hi);
// {r_in <= hypot(x_1, x_2) <= r_out, z_lo <= x_k <= z_hi for k >= 3}.
Region shell_region(int n, double r_in, double r_out, double z_lo, double z_hi);
// r_in <= ||x - centre|| <= r_out.
Region annulus_region(const Vec& centre, double r_in, double r_out);
Region empty_region(int n);

struct MixtureConfig {
  int n_outer = 256;      // label nodes shared by all charts
  int n_inner = 4096;     // stratified b samples per label node
  int n_direct = 1 << 18; // stratified samples for the direct integral
  int n_coverage = 4096;
  double max_uncovered = 0.02;
  double floor = 1e-12;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct MixtureReport {
  std::string set_descr;
  double mu_direct = 0.0;
  double mu_mixture = 0.0;
  double se_direct = 0.0;
  double se_mixture = 0.0;
  int n_outer = 0;
  int n_inner = 0;
  int n_direct = 0;
  double rel_err = 0.0;
  double uncovered_fraction = 0.0;
  Vec box_lo;
  Vec box_hi;
};

class CoverageGap : public Error {
 public:
  CoverageGap(const std::string& what, MixtureReport report)
      : Error("CoverageGap", what), report_(std::move(report)) {}
  const MixtureReport& report() const { return report_; }

 private:
  MixtureReport report_;
};

// First chart (construction order) whose domain contains x, with its (a, b).
struct ChartHit {
  std::size_t chart = 0;
  Vec a;
  Vec b;
};
std::optional<ChartHit> first_chart(const std::vector<ChartPtr>& charts, const Vec& x);

MixtureReport mixture_check(const LipschitzMap& map, const WeightedMeasure& measure,
                            const std::vector<ChartPtr>& charts, const Region& region,
                            const MixtureConfig& cfg = {});

// Rejection sampling against a uniform proposal on `box` (or cond.box).
std::vector<Vec> sample_leaf_measure(const ConditionalDensity& cond, int count, std::uint64_t seed,
                                     std::optional<std::pair<Vec, Vec>> box = std::nullopt);

// Rows (a..., b..., density) on a grid of b over the box of each label.
struct DensityRow {
  Vec a;
  Vec b;
  double density = 0.0;
};
std::vector<DensityRow> tabulate_density(const ConditionalDensity& cond, const Vec& a, int grid);

nlohmann::json to_json(const MixtureReport& r);

}  // namespace leafdec
