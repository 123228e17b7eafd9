#include "leafdec/disintegrate.hpp"

#include <cmath>
#include <fmt/format.h>

#include "leafdec/parallel.hpp"

namespace leafdec {

namespace {

constexpr std::uint64_t kDirectStream = 0xd1;
constexpr std::uint64_t kInnerStream = 0x1a4e;
constexpr std::uint64_t kCoverageStream = 0xc0;

nlohmann::json vec_json(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

double box_volume(const Vec& lo, const Vec& hi) {
  double v = 1.0;
  for (Eigen::Index i = 0; i < lo.size(); ++i) v *= std::max(0.0, hi[i] - lo[i]);
  return v;
}

int grid_side(int total, int dim) {
  if (dim == 0) return 1;
  int g = std::max(1, static_cast<int>(std::ceil(std::pow(static_cast<double>(total), 1.0 / dim) - 1e-9)));
  return g;
}

// Cell index -> multi-index on a g^dim grid.
Vec jittered_cell(long cell, int g, const Vec& lo, const Vec& hi, Rng& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Vec x(lo.size());
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    const long idx = cell % g;
    cell /= g;
    x[i] = lo[i] + (hi[i] - lo[i]) * (static_cast<double>(idx) + uni(rng)) / g;
  }
  return x;
}

struct Moments {
  double sum = 0.0;
  double sumsq = 0.0;
  long count = 0;
  void add(double v) {
    sum += v;
    sumsq += v * v;
    ++count;
  }
  double mean() const { return count ? sum / count : 0.0; }
  // standard error of the mean under iid sampling; conservative for stratified designs
  double se() const {
    if (count < 2) return 0.0;
    const double m = mean();
    const double var = std::max(0.0, sumsq / count - m * m);
    return std::sqrt(var / (count - 1));
  }
};

bool leaf_member(const Chart& chart, const Vec& x, const Vec& b) {
  Vec du;
  try {
    du = chart.map()(x) - chart.level();
  } catch (const NonFinite&) {
    return false;
  }
  const double b2 = b.squaredNorm();
  return (du - b).norm() <= chart.config().member_tol * (1.0 + b.norm()) &&
         b2 - du.squaredNorm() <= chart.config().detect.tol_defect * (1.0 + b2);
}

}  // namespace

ConditionalDensity::ConditionalDensity(int dim, ScalarFn density, SupportFn support)
    : ConditionalDensity(dim, std::move(density), std::move(support), [](const Vec& c) { return c; }) {}

ConditionalDensity::ConditionalDensity(int dim, ScalarFn density, SupportFn support, EmbedFn embed)
    : dim_(dim), density_(std::move(density)), support_(std::move(support)), embed_(std::move(embed)) {}

double ConditionalDensity::operator()(const Vec& c) const {
  if (c.size() != dim_) throw DimensionError("density coordinate has wrong dimension");
  if (!support_(c)) return 0.0;
  return density_(c);
}

ConditionalDensity conditional_density(const ChartPtr& chart, const Vec& a, const WeightedMeasure& measure) {
  if (measure.dim != chart->map().dim_in()) throw DimensionError("measure dimension differs from the map");
  if (!chart->label_in_domain(a)) throw NoLeaf("label outside the chart domain");
  auto geo = std::make_shared<const SectionGeometry>(section_geometry(*chart, a));
  auto support = [chart, geo](const Vec& b) {
    const Vec x = chart_point(*geo, b);
    if (!leaf_member(*chart, x, b)) return false;
    return transverse_operator(*geo, b).determinant() > 0.0 || geo->normal.cols() == 0;
  };
  auto density = [geo, measure](const Vec& b) {
    return measure.density(chart_point(*geo, b)) * jacobian_from_geometry(*geo, b);
  };
  auto embed = [geo](const Vec& b) { return chart_point(*geo, b); };
  ConditionalDensity cond(chart->map().dim_out(), density, support, embed);
  cond.chart_label = a;
  try {
    cond.leaf = trace_leaf(chart->map(), geo->z, chart->config().detect);
    // b = T c on a full-dimensional leaf; the box spans the extent points.
    const int m = cond.dim();
    if (cond.leaf->dim == m && !cond.leaf->extent.empty()) {
      Vec lo = Vec::Zero(m), hi = Vec::Zero(m);
      for (const auto& e : cond.leaf->extent) {
        const Vec b = e.radius * (cond.leaf->isometry * e.direction);
        lo = lo.cwiseMin(b);
        hi = hi.cwiseMax(b);
      }
      if ((hi.array() > lo.array()).all()) cond.box = std::make_pair(lo, hi);
    }
  } catch (const Error&) {
    cond.leaf.reset();
  }
  return cond;
}

Region ball_region(const Vec& centre, double radius) {
  Region r;
  r.description = fmt::format("ball(r={})", radius);
  r.contains = [centre, radius](const Vec& x) { return (x - centre).norm() <= radius; };
  r.lo = (centre.array() - radius).matrix();
  r.hi = (centre.array() + radius).matrix();
  return r;
}

Region box_region(const Vec& lo, const Vec& hi) {
  Region r;
  r.description = "box";
  r.contains = [lo, hi](const Vec& x) {
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
  };
  r.lo = lo;
  r.hi = hi;
  r.empty = (hi.array() <= lo.array()).any();
  return r;
}

Region shell_region(int n, double r_in, double r_out, double z_lo, double z_hi) {
  Region r;
  r.description = fmt::format("shell({}<=r<={}, {}<=z<={})", r_in, r_out, z_lo, z_hi);
  r.contains = [r_in, r_out, z_lo, z_hi](const Vec& x) {
    const double rad = std::hypot(x[0], x[1]);
    if (rad < r_in || rad > r_out) return false;
    for (Eigen::Index i = 2; i < x.size(); ++i) {
      if (x[i] < z_lo || x[i] > z_hi) return false;
    }
    return true;
  };
  r.lo = Vec::Constant(n, z_lo);
  r.hi = Vec::Constant(n, z_hi);
  r.lo.head(2).setConstant(-r_out);
  r.hi.head(2).setConstant(r_out);
  return r;
}

Region annulus_region(const Vec& centre, double r_in, double r_out) {
  Region r;
  r.description = fmt::format("annulus({}<=r<={})", r_in, r_out);
  r.contains = [centre, r_in, r_out](const Vec& x) {
    const double d = (x - centre).norm();
    return d >= r_in && d <= r_out;
  };
  r.lo = (centre.array() - r_out).matrix();
  r.hi = (centre.array() + r_out).matrix();
  return r;
}

Region empty_region(int n) {
  Region r;
  r.description = "empty";
  r.contains = [](const Vec&) { return false; };
  r.lo = Vec::Zero(n);
  r.hi = Vec::Zero(n);
  r.empty = true;
  return r;
}

std::optional<ChartHit> first_chart(const std::vector<ChartPtr>& charts, const Vec& x) {
  for (std::size_t c = 0; c < charts.size(); ++c) {
    if (auto ab = locate(*charts[c], x)) return ChartHit{c, std::move(ab->first), std::move(ab->second)};
  }
  return std::nullopt;
}

MixtureReport mixture_check(const LipschitzMap& map, const WeightedMeasure& measure,
                            const std::vector<ChartPtr>& charts, const Region& region, const MixtureConfig& cfg) {
  const int n = map.dim_in();
  const int m = map.dim_out();
  if (measure.dim != n || region.lo.size() != n) throw DimensionError("measure or region dimension differs from the map");
  MixtureReport rep;
  rep.set_descr = region.description;
  rep.box_lo = region.lo;
  rep.box_hi = region.hi;
  rep.n_inner = cfg.n_inner;
  const double vol = box_volume(region.lo, region.hi);
  if (region.empty || vol <= 0.0) return rep;
  const int threads = std::max(1, cfg.threads);

  // direct integral: stratified over g^n cells, one stream per slab of the first axis
  {
    const int g = grid_side(cfg.n_direct, n);
    long per_slab = 1;
    for (int i = 1; i < n; ++i) per_slab *= g;
    std::vector<Moments> slabs(g);
    parallel_for(static_cast<std::size_t>(g), threads, [&](std::size_t s) {
      Rng rng(derive_seed(cfg.seed, kDirectStream + (static_cast<std::uint64_t>(s) << 20)));
      Vec lo = region.lo, hi = region.hi;
      const double w = (region.hi[0] - region.lo[0]) / g;
      lo[0] = region.lo[0] + w * static_cast<double>(s);
      hi[0] = lo[0] + w;
      Vec rlo = lo.tail(n - 1), rhi = hi.tail(n - 1);
      std::uniform_real_distribution<double> uni(0.0, 1.0);
      for (long cell = 0; cell < per_slab; ++cell) {
        Vec x(n);
        x[0] = lo[0] + w * uni(rng);
        if (n > 1) x.tail(n - 1) = jittered_cell(cell, g, rlo, rhi, rng);
        slabs[s].add(region.contains(x) ? measure.density(x) : 0.0);
      }
    });
    Moments all;
    for (const auto& s : slabs) {
      all.sum += s.sum;
      all.sumsq += s.sumsq;
      all.count += s.count;
    }
    rep.n_direct = static_cast<int>(all.count);
    rep.mu_direct = vol * all.mean();
    rep.se_direct = vol * all.se();
  }

  // outer label nodes, split across charts by label volume
  struct Task {
    std::size_t chart;
    Vec a;
    double weight;
  };
  std::vector<Task> tasks;
  const int q = n - m;
  if (q == 0) {
    for (std::size_t c = 0; c < charts.size(); ++c) tasks.push_back({c, Vec(0), 1.0});
  } else {
    double total = 0.0;
    for (const auto& ch : charts) total += ch->label_volume();
    for (std::size_t c = 0; c < charts.size() && total > 0.0; ++c) {
      const Chart& ch = *charts[c];
      const double v = ch.label_volume();
      if (v <= 0.0) continue;
      const int nodes = std::max(1, static_cast<int>(std::lround(cfg.n_outer * v / total)));
      const int g = std::max(1, static_cast<int>(std::lround(std::pow(nodes, 1.0 / q))));
      long cells = 1;
      for (int i = 0; i < q; ++i) cells *= g;
      for (long cell = 0; cell < cells; ++cell) {
        Vec a(q);
        long rem = cell;
        for (int i = 0; i < q; ++i) {
          const long idx = rem % g;
          rem /= g;
          a[i] = ch.label_lo()[i] + (ch.label_hi()[i] - ch.label_lo()[i]) * (idx + 0.5) / g;
        }
        tasks.push_back({c, a, v / static_cast<double>(cells)});
      }
    }
  }
  rep.n_outer = static_cast<int>(tasks.size());

  // box corners for the b-range of each leaf
  std::vector<Vec> corners;
  for (long code = 0; code < (1L << n); ++code) {
    Vec p(n);
    for (int i = 0; i < n; ++i) p[i] = (code >> i) & 1 ? region.hi[i] : region.lo[i];
    corners.push_back(p);
  }

  std::vector<double> inner(tasks.size(), 0.0), inner_se(tasks.size(), 0.0);
  parallel_for(tasks.size(), threads, [&](std::size_t t) {
    const Task& task = tasks[t];
    const Chart& chart = *charts[task.chart];
    SectionGeometry geo;
    try {
      geo = section_geometry(chart, task.a);
    } catch (const NoLeaf&) {
      return;
    }
    // first-match: a leaf already parameterized by an earlier chart is skipped
    for (std::size_t c = 0; c < task.chart; ++c) {
      if (locate(*charts[c], geo.z)) return;
    }
    Vec blo = Vec::Constant(m, std::numeric_limits<double>::infinity());
    Vec bhi = -blo;
    for (const Vec& p : corners) {
      const Vec b = geo.du * (p - geo.z);
      blo = blo.cwiseMin(b);
      bhi = bhi.cwiseMax(b);
    }
    const double bvol = box_volume(blo, bhi);
    if (bvol <= 0.0) return;
    const int g = grid_side(cfg.n_inner, m);
    long cells = 1;
    for (int i = 0; i < m; ++i) cells *= g;
    Rng rng(derive_seed(cfg.seed, kInnerStream + (static_cast<std::uint64_t>(t) << 16)));
    Moments mom;
    for (long cell = 0; cell < cells; ++cell) {
      const Vec b = jittered_cell(cell, g, blo, bhi, rng);
      const Vec x = chart_point(geo, b);
      double val = 0.0;
      if (region.contains(x) && leaf_member(chart, x, b)) {
        const double det = q == 0 ? 1.0 : transverse_operator(geo, b).determinant();
        if (det > 0.0) val = measure.density(x) * geo.transverse_det * det;
      }
      mom.add(val);
    }
    inner[t] = bvol * mom.mean();
    inner_se[t] = bvol * mom.se();
  });
  double var = 0.0;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    rep.mu_mixture += tasks[t].weight * inner[t];
    var += std::pow(tasks[t].weight * inner_se[t], 2);
  }
  rep.se_mixture = std::sqrt(var);
  rep.rel_err = std::abs(rep.mu_direct - rep.mu_mixture) / std::max(rep.mu_direct, cfg.floor);

  // mass not parameterized by any chart
  {
    const std::size_t nc = static_cast<std::size_t>(std::max(0, cfg.n_coverage));
    std::vector<double> mass(nc, 0.0), lost(nc, 0.0);
    parallel_for(nc, threads, [&](std::size_t i) {
      Rng rng(derive_seed(cfg.seed, kCoverageStream + (static_cast<std::uint64_t>(i) << 24)));
      const Vec x = random_uniform(rng, region.lo, region.hi);
      if (!region.contains(x)) return;
      mass[i] = measure.density(x);
      if (!first_chart(charts, x)) lost[i] = mass[i];
    });
    double tm = 0.0, tl = 0.0;
    for (std::size_t i = 0; i < nc; ++i) {
      tm += mass[i];
      tl += lost[i];
    }
    rep.uncovered_fraction = tm > 0.0 ? tl / tm : 0.0;
  }
  if (rep.uncovered_fraction > cfg.max_uncovered) {
    throw CoverageGap(fmt::format("uncovered mass fraction {:.4f} exceeds {:.4f}", rep.uncovered_fraction,
                                  cfg.max_uncovered),
                      rep);
  }
  return rep;
}

std::vector<Vec> sample_leaf_measure(const ConditionalDensity& cond, int count, std::uint64_t seed,
                                     std::optional<std::pair<Vec, Vec>> box) {
  if (!box) box = cond.box;
  if (!box) throw DegenerateSupport("no bounding box for the proposal");
  const Vec& lo = box->first;
  const Vec& hi = box->second;
  if (lo.size() != cond.dim() || hi.size() != cond.dim() || (hi.array() <= lo.array()).any()) {
    throw DegenerateSupport("proposal box is empty");
  }
  Rng rng(seed);
  double envelope = 0.0;
  for (int i = 0; i < 4096; ++i) envelope = std::max(envelope, cond(random_uniform(rng, lo, hi)));
  if (!(envelope > 0.0)) throw DegenerateSupport("density vanishes on the proposal box");
  envelope *= 1.2;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(std::max(0, count)));
  long proposals = 0;
  while (static_cast<int>(out.size()) < count) {
    const Vec c = random_uniform(rng, lo, hi);
    const double d = cond(c);
    ++proposals;
    if (d > envelope) envelope = 1.2 * d;
    if (uni(rng) * envelope <= d && d > 0.0) out.push_back(cond.to_ambient(c));
    if (proposals >= 100000 && static_cast<double>(out.size()) / proposals < 1e-4) {
      throw DegenerateSupport("acceptance rate below 1e-4");
    }
  }
  return out;
}

std::vector<DensityRow> tabulate_density(const ConditionalDensity& cond, const Vec& a, int grid) {
  std::vector<DensityRow> rows;
  if (!cond.box) return rows;
  const Vec& lo = cond.box->first;
  const Vec& hi = cond.box->second;
  const int m = cond.dim();
  long cells = 1;
  for (int i = 0; i < m; ++i) cells *= grid;
  for (long cell = 0; cell < cells; ++cell) {
    Vec b(m);
    long rem = cell;
    for (int i = 0; i < m; ++i) {
      const long idx = rem % grid;
      rem /= grid;
      b[i] = lo[i] + (hi[i] - lo[i]) * (idx + 0.5) / grid;
    }
    double d = 0.0;
    try {
      d = cond(b);
    } catch (const SingularH&) {
      d = 0.0;
    }
    rows.push_back({a, b, d});
  }
  return rows;
}

nlohmann::json to_json(const MixtureReport& r) {
  nlohmann::json j;
  j["set_descr"] = r.set_descr;
  j["mu_direct"] = r.mu_direct;
  j["mu_mixture"] = r.mu_mixture;
  j["se_direct"] = r.se_direct;
  j["se_mixture"] = r.se_mixture;
  j["n_outer"] = r.n_outer;
  j["n_inner"] = r.n_inner;
  j["n_direct"] = r.n_direct;
  j["rel_err"] = r.rel_err;
  j["uncovered_fraction"] = r.uncovered_fraction;
  j["box_lo"] = vec_json(r.box_lo);
  j["box_hi"] = vec_json(r.box_hi);
  return j;
}

}  // namespace leafdec
