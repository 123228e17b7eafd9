#include "leafdec/chart.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace leafdec {

namespace {

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

// Newton iteration on u(z) = level inside the affine plane z0 + span(frame).
std::optional<Vec> solve_in_plane(const LipschitzMap& map, const Vec& level, const Vec& z0, const Mat& frame,
                                  Vec t, double tol, int max_iter) {
  for (int it = 0; it < max_iter; ++it) {
    const Vec z = z0 + frame * t;
    Vec r;
    Mat jac;
    try {
      r = map(z) - level;
      jac = map.jacobian(z);
    } catch (const NonFinite&) {
      return std::nullopt;
    }
    const Mat reduced = jac * frame;
    Eigen::FullPivLU<Mat> lu(reduced);
    if (!lu.isInvertible()) return std::nullopt;
    const Vec step = lu.solve(r);
    if (r.norm() <= tol) {
      t -= step;  // polish
      return (z0 + frame * t).eval();
    }
    t -= step;
  }
  return std::nullopt;
}

double label_scale(const Vec& a) { return std::cbrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, a.norm()); }

}  // namespace

std::string to_string(SeedOutcome o) {
  switch (o) {
    case SeedOutcome::Accepted: return "accepted";
    case SeedOutcome::Duplicate: return "duplicate";
    case SeedOutcome::NotInterior: return "not_interior";
    case SeedOutcome::WrongDimension: return "wrong_dimension";
    case SeedOutcome::LevelUnreachable: return "level_unreachable";
    case SeedOutcome::BelowJmin: return "below_j_min";
  }
  return "unknown";
}

Chart::Chart(LipschitzMap map, Vec level, ChartConfig cfg)
    : map_(std::move(map)), level_(std::move(level)), cfg_(std::move(cfg)) {}

double Chart::label_volume() const {
  double v = 1.0;
  for (Eigen::Index i = 0; i < lo_.size(); ++i) v *= hi_[i] - lo_[i];
  return v;
}

Vec Chart::label_of(const Vec& z) const { return n_ref_.transpose() * z; }

bool Chart::label_in_domain(const Vec& a) const {
  if (a.size() != lo_.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double slack = 1e-12 * (1.0 + std::abs(a[i]));
    if (a[i] < lo_[i] - slack || a[i] > hi_[i] + slack) return false;
  }
  return true;
}

Vec Chart::section(const Vec& a) const {
  if (a.size() != label_dim()) throw DimensionError("label has wrong dimension");
  if (label_dim() == 0) return bases_.front().point;
  // warm start from the base with the nearest label
  const ChartBase* nearest = &bases_.front();
  for (const auto& b : bases_) {
    if ((b.label - a).squaredNorm() < (nearest->label - a).squaredNorm()) nearest = &b;
  }
  const Vec z0 = z_ref_ + n_ref_ * (a - n_ref_.transpose() * z_ref_);
  const Vec t0 = e_ref_.transpose() * (nearest->point - z_ref_);
  const auto z = solve_in_plane(map_, level_, z0, e_ref_, t0, cfg_.newton_tol, cfg_.newton_max_iter);
  if (!z) throw NoLeaf("section solve did not converge");
  return *z;
}

Chart build_chart(const LipschitzMap& map, const Vec& level, const std::vector<Vec>& seeds, const ChartConfig& cfg) {
  if (seeds.empty()) throw EmptyChart("no seeds supplied");
  const int n = map.dim_in();
  const int m = map.dim_out();
  if (level.size() != m) throw DimensionError("level has wrong dimension");
  Chart chart(map, level, cfg);
  for (const Vec& seed : seeds) {
    LeafModel leaf;
    try {
      leaf = trace_leaf(map, seed, cfg.detect);
    } catch (const NotInterior&) {
      chart.outcomes_.push_back(SeedOutcome::NotInterior);
      continue;
    } catch (const FrameDegenerate&) {
      chart.outcomes_.push_back(SeedOutcome::NotInterior);
      continue;
    }
    if (leaf.dim != m) {
      chart.outcomes_.push_back(SeedOutcome::WrongDimension);
      continue;
    }
    // walk along the leaf: u(seed + E c) = u(seed) + T c
    const Vec useed = map(seed);
    const Vec c = leaf.isometry.transpose() * (level - useed);
    if (!on_leaf(map, seed, useed, leaf.frame * c, leaf.isometry * c, cfg.detect.tol_defect)) {
      chart.outcomes_.push_back(SeedOutcome::LevelUnreachable);
      continue;
    }
    const auto z = solve_in_plane(map, level, seed, leaf.frame, c, 1e-13, 5);
    if (!z || (map(*z) - level).norm() > 1e-8) {
      chart.outcomes_.push_back(SeedOutcome::LevelUnreachable);
      continue;
    }
    LeafModel at_z;
    try {
      at_z = trace_leaf(map, *z, cfg.detect);
    } catch (const NotInterior&) {
      chart.outcomes_.push_back(SeedOutcome::LevelUnreachable);
      continue;
    } catch (const FrameDegenerate&) {
      chart.outcomes_.push_back(SeedOutcome::LevelUnreachable);
      continue;
    }
    if (at_z.dim != m) {
      chart.outcomes_.push_back(SeedOutcome::LevelUnreachable);
      continue;
    }
    if (at_z.sigma < cfg.j_min) {
      chart.outcomes_.push_back(SeedOutcome::BelowJmin);
      continue;
    }
    bool dup = false;
    for (const auto& b : chart.bases_) {
      if ((b.point - *z).norm() <= 1e-8 * (1.0 + z->norm())) dup = true;
    }
    if (dup) {
      chart.outcomes_.push_back(SeedOutcome::Duplicate);
      continue;
    }
    chart.outcomes_.push_back(SeedOutcome::Accepted);
    chart.bases_.push_back({Vec(), *z, std::move(at_z)});
  }
  if (chart.bases_.empty()) {
    bool all_unreachable = true;
    for (auto o : chart.outcomes_) all_unreachable = all_unreachable && o == SeedOutcome::LevelUnreachable;
    if (all_unreachable) throw LevelUnreachable("level is outside the image of every seed leaf");
    throw EmptyChart("no seed produced a base");
  }
  const ChartBase& ref = chart.bases_.front();
  chart.z_ref_ = ref.point;
  chart.e_ref_ = ref.leaf.frame;
  chart.n_ref_ = orthonormal_complement(chart.e_ref_, n);
  chart.lo_ = Vec::Constant(n - m, std::numeric_limits<double>::infinity());
  chart.hi_ = Vec::Constant(n - m, -std::numeric_limits<double>::infinity());
  for (auto& b : chart.bases_) {
    b.label = chart.label_of(b.point);
    chart.lo_ = chart.lo_.cwiseMin(b.label);
    chart.hi_ = chart.hi_.cwiseMax(b.label);
  }
  return chart;
}

std::optional<std::pair<Vec, Vec>> locate(const Chart& chart, const Vec& x) {
  const LipschitzMap& map = chart.map();
  const int m = map.dim_out();
  if (map.excluded(x)) return std::nullopt;
  const auto jac = map.differentiable_jacobian(x);
  if (!jac) return std::nullopt;
  const JacobianFrame f = analyze_jacobian(*jac, chart.config().detect.tol_sv);
  if (f.ambiguous || f.unit_count != m) return std::nullopt;
  const Mat e = f.tangent(m);
  const Mat t = f.isometry(m);
  const Vec ux = map(x);
  const Vec c = t.transpose() * (chart.level() - ux);
  const Vec z = x + e * c;
  const Vec du = map(z) - ux;
  const double c2 = c.squaredNorm();
  if ((du - t * c).norm() > chart.config().member_tol * (1.0 + c.norm())) return std::nullopt;
  if (c2 - du.squaredNorm() > chart.config().detect.tol_defect * (1.0 + c2)) return std::nullopt;
  Vec a = chart.label_of(z);
  if (!chart.label_in_domain(a)) return std::nullopt;
  Vec zv;
  try {
    zv = chart.section(a);
  } catch (const NoLeaf&) {
    return std::nullopt;
  }
  if ((zv - z).norm() > chart.config().label_tol * (1.0 + z.norm())) return std::nullopt;
  return std::make_pair(std::move(a), (ux - chart.level()).eval());
}

ChartPointImage map_g(const Chart& chart, const Vec& x) {
  const auto ab = locate(chart, x);
  if (!ab) throw NoLeaf("no chart leaf contains the point in its interior");
  ChartPointImage img;
  img.a = ab->first;
  img.b = ab->second;
  img.jacobian_f = jacobian_f(chart, img.a, img.b);
  return img;
}

Vec map_f(const Chart& chart, const Vec& a, const Vec& b) {
  const LipschitzMap& map = chart.map();
  if (b.size() != map.dim_out()) throw DimensionError("b has wrong dimension");
  if (!chart.label_in_domain(a)) throw NoLeaf("label outside the chart domain");
  const Vec z = chart.section(a);
  const Vec x = z + map.jacobian(z).transpose() * b;
  Vec du;
  try {
    du = map(x) - chart.level();
  } catch (const NonFinite&) {
    throw OutsideLeaf("image point not evaluable");
  }
  const double b2 = b.squaredNorm();
  if ((du - b).norm() > chart.config().member_tol * (1.0 + b.norm()) ||
      b2 - du.squaredNorm() > chart.config().detect.tol_defect * (1.0 + b2)) {
    throw OutsideLeaf("b lies outside the leaf image");
  }
  return x;
}

SectionGeometry section_geometry(const Chart& chart, const Vec& a) {
  const LipschitzMap& map = chart.map();
  const int n = map.dim_in();
  const int m = map.dim_out();
  const int q = n - m;
  SectionGeometry g;
  g.label = a;
  g.z = chart.section(a);
  g.du = map.jacobian(g.z);
  const JacobianFrame f = analyze_jacobian(g.du, chart.config().detect.tol_sv);
  g.normal = f.normal(m);
  g.dv = Mat(n, q);
  const double h = label_scale(a);
  for (int j = 0; j < q; ++j) {
    Vec ap = a, am = a;
    ap[j] += h;
    am[j] -= h;
    g.dv.col(j) = (chart.section(ap) - chart.section(am)) / (ap[j] - am[j]);
  }
  g.transverse_det = q == 0 ? 1.0 : std::abs((g.normal.transpose() * g.dv).determinant());
  const HessianTensor hess = map.hessian(g.z);
  for (int l = 0; l < m; ++l) {
    Mat c = g.normal.transpose() * hess[l] * g.normal;
    g.curvature.push_back(0.5 * (c + c.transpose()));
  }
  return g;
}

Mat transverse_operator(const SectionGeometry& g, const Vec& b) {
  const Eigen::Index q = g.normal.cols();
  Mat h = Mat::Identity(q, q);
  for (std::size_t l = 0; l < g.curvature.size(); ++l) h += b[static_cast<Eigen::Index>(l)] * g.curvature[l];
  return h;
}

double jacobian_from_geometry(const SectionGeometry& g, const Vec& b) {
  const Mat h = transverse_operator(g, b);
  const double det = h.size() == 0 ? 1.0 : h.determinant();
  if (!(det > 1e-14)) throw SingularH(fmt::format("det H(b) = {:.3g}", det));
  return g.transverse_det * det;
}

Vec chart_point(const SectionGeometry& g, const Vec& b) { return g.z + g.du.transpose() * b; }

double jacobian_f(const Chart& chart, const Vec& a, const Vec& b) {
  return jacobian_from_geometry(section_geometry(chart, a), b);
}

std::vector<Vec> sector_seeds(int count, int index, double radius, const Vec& rest) {
  std::vector<Vec> seeds;
  const double centre = 2.0 * M_PI * index / count;
  const double half = M_PI / count;
  for (double theta : {centre, centre - half, centre + half}) {
    Vec s(2 + rest.size());
    s[0] = radius * std::cos(theta);
    s[1] = radius * std::sin(theta);
    s.tail(rest.size()) = rest;
    seeds.push_back(s);
  }
  return seeds;
}

nlohmann::json to_json(const Chart& chart) {
  nlohmann::json j;
  j["map"] = chart.map().name();
  j["level_s"] = vec_json(chart.level());
  j["j_min"] = chart.config().j_min;
  j["lambda_cut"] = chart.config().lambda_cut;
  j["reference_point"] = vec_json(chart.reference_point());
  j["reference_frame"] = mat_json(chart.reference_frame());
  j["transverse_frame"] = mat_json(chart.transverse_frame());
  j["label_lo"] = vec_json(chart.label_lo());
  j["label_hi"] = vec_json(chart.label_hi());
  nlohmann::json bases = nlohmann::json::array();
  for (const auto& b : chart.bases()) {
    bases.push_back({{"a", vec_json(b.label)}, {"z", vec_json(b.point)}, {"leaf", to_json(b.leaf)}});
  }
  j["bases"] = bases;
  nlohmann::json outcomes = nlohmann::json::array();
  for (auto o : chart.seed_outcomes()) outcomes.push_back(to_string(o));
  j["seed_outcomes"] = outcomes;
  return j;
}

Chart chart_from_json(const LipschitzMap& map, const nlohmann::json& j) {
  ChartConfig cfg;
  cfg.j_min = j.at("j_min").get<double>();
  cfg.lambda_cut = j.at("lambda_cut").get<double>();
  Chart chart(map, json_vec(j.at("level_s")), cfg);
  const int n = map.dim_in();
  const int m = map.dim_out();
  chart.z_ref_ = json_vec(j.at("reference_point"));
  chart.e_ref_ = json_mat(j.at("reference_frame"), m);
  chart.n_ref_ = json_mat(j.at("transverse_frame"), n - m);
  chart.lo_ = json_vec(j.at("label_lo"));
  chart.hi_ = json_vec(j.at("label_hi"));
  for (const auto& b : j.at("bases")) {
    chart.bases_.push_back({json_vec(b.at("a")), json_vec(b.at("z")), leaf_from_json(b.at("leaf"))});
  }
  if (chart.bases_.empty()) throw EmptyChart("serialized chart has no bases");
  const SeedOutcome all[] = {SeedOutcome::Accepted,       SeedOutcome::Duplicate,        SeedOutcome::NotInterior,
                             SeedOutcome::WrongDimension, SeedOutcome::LevelUnreachable, SeedOutcome::BelowJmin};
  for (const auto& o : j.value("seed_outcomes", nlohmann::json::array())) {
    const auto name = o.get<std::string>();
    const auto it = std::find_if(std::begin(all), std::end(all), [&](SeedOutcome s) { return to_string(s) == name; });
    if (it == std::end(all)) throw ConfigError("unknown seed outcome '" + name + "'");
    chart.outcomes_.push_back(*it);
  }
  return chart;
}

}  // namespace leafdec
