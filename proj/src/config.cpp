#include "leafdec/config.hpp"

#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <set>
#include <sstream>

namespace leafdec {

namespace {

using nlohmann::json;

void allow(const json& obj, const std::string& where, const std::set<std::string>& keys) {
  if (!obj.is_object()) throw ConfigError(fmt::format("'{}' must be an object", where));
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!keys.count(it.key())) throw ConfigError(fmt::format("unknown key '{}' in '{}'", it.key(), where));
  }
}

double num(const json& obj, const std::string& key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_number()) throw ConfigError(fmt::format("'{}' must be a number", key));
  const double v = obj.at(key).get<double>();
  if (!std::isfinite(v)) throw ConfigError(fmt::format("'{}' must be finite", key));
  return v;
}

double positive(const json& obj, const std::string& key, double fallback) {
  const double v = num(obj, key, fallback);
  if (!(v > 0.0)) throw ConfigError(fmt::format("'{}' must be positive", key));
  return v;
}

int integer(const json& obj, const std::string& key, int fallback, int min_value) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_number_integer()) throw ConfigError(fmt::format("'{}' must be an integer", key));
  const long long v = obj.at(key).get<long long>();
  if (v < min_value || v > (1LL << 30)) throw ConfigError(fmt::format("'{}' out of range", key));
  return static_cast<int>(v);
}

Vec vec(const json& j, const std::string& key, int size) {
  if (!j.is_array()) throw ConfigError(fmt::format("'{}' must be an array", key));
  if (size >= 0 && static_cast<int>(j.size()) != size) {
    throw ConfigError(fmt::format("'{}' must have {} entries", key, size));
  }
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(fmt::format("'{}' must contain numbers", key));
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    if (!std::isfinite(v[static_cast<Eigen::Index>(i)])) throw ConfigError(fmt::format("'{}' must be finite", key));
  }
  return v;
}

Vec vec_at(const json& obj, const std::string& key, int size) {
  if (!obj.contains(key)) throw ConfigError(fmt::format("missing '{}'", key));
  return vec(obj.at(key), key, size);
}

void check_box(const Vec& lo, const Vec& hi, const std::string& where) {
  if ((hi.array() < lo.array()).any()) throw ConfigError(fmt::format("'{}' needs lo <= hi", where));
}

void validate_chart_spec(const json& spec, int n, int m) {
  if (spec.is_array()) {
    if (spec.empty()) throw ConfigError("chart list is empty");
    for (const auto& s : spec) validate_chart_spec(s, n, m);
    return;
  }
  allow(spec, "chart", {"level", "seeds", "sectors"});
  vec_at(spec, "level", m);
  const bool has_seeds = spec.contains("seeds");
  const bool has_sectors = spec.contains("sectors");
  if (has_seeds == has_sectors) throw ConfigError("chart needs exactly one of 'seeds' or 'sectors'");
  if (has_seeds) {
    const auto& seeds = spec.at("seeds");
    if (!seeds.is_array() || seeds.empty()) throw ConfigError("'seeds' must be a nonempty array");
    for (const auto& s : seeds) vec(s, "seeds", n);
  } else {
    const auto& sec = spec.at("sectors");
    allow(sec, "sectors", {"count", "radius", "rest"});
    if (n < 2) throw ConfigError("'sectors' needs n >= 2");
    integer(sec, "count", 8, 1);
    positive(sec, "radius", 1.0);
    if (sec.contains("rest")) vec(sec.at("rest"), "rest", n - 2);
  }
}

void validate_box_block(const json& obj, const std::string& key, int dim) {
  if (!obj.contains(key)) return;
  allow(obj.at(key), key, {"lo", "hi"});
  check_box(vec_at(obj.at(key), "lo", dim), vec_at(obj.at(key), "hi", dim), key);
}

}  // namespace

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double parse_n_eff(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    throw ConfigError(fmt::format("N must be a number or \"inf\", got \"{}\"", s));
  }
  if (!j.is_number()) throw ConfigError("N must be a number or \"inf\"");
  return j.get<double>();
}

WeightedMeasure make_measure(const json& spec, int n) {
  allow(spec, "measure", {"name", "center", "variance", "scale"});
  if (!spec.contains("name") || !spec.at("name").is_string()) throw ConfigError("measure needs a string 'name'");
  const std::string name = spec.at("name").get<std::string>();
  WeightedMeasure w;
  if (name == "lebesgue" || name == "uniform") {
    if (spec.contains("center") || spec.contains("variance")) throw ConfigError("lebesgue takes no center/variance");
    w = lebesgue_measure(n);
  } else if (name == "gaussian") {
    const Vec c = spec.contains("center") ? vec(spec.at("center"), "center", n) : Vec::Zero(n);
    w = gaussian_measure(c, positive(spec, "variance", 1.0));
  } else if (name == "concave") {
    if (spec.contains("center") || spec.contains("variance")) throw ConfigError("concave takes no center/variance");
    w = concave_weight(n);
  } else {
    throw ConfigError(fmt::format("unknown measure '{}'", name));
  }
  if (spec.contains("scale")) w = scaled_measure(w, positive(spec, "scale", 1.0));
  return w;
}

Region make_region(const json& spec, int n) {
  allow(spec, "region", {"type", "center", "radius", "lo", "hi", "r_in", "r_out", "z_lo", "z_hi"});
  if (!spec.contains("type") || !spec.at("type").is_string()) throw ConfigError("region needs a string 'type'");
  const std::string type = spec.at("type").get<std::string>();
  const Vec centre = spec.contains("center") ? vec(spec.at("center"), "center", n) : Vec::Zero(n);
  if (type == "ball") return ball_region(centre, positive(spec, "radius", 1.0));
  if (type == "box") {
    const Vec lo = vec_at(spec, "lo", n), hi = vec_at(spec, "hi", n);
    check_box(lo, hi, "region");
    return box_region(lo, hi);
  }
  if (type == "shell") {
    if (n < 3) throw ConfigError("shell region needs n >= 3");
    const double r_in = num(spec, "r_in", 1.0), r_out = positive(spec, "r_out", 2.0);
    const double z_lo = num(spec, "z_lo", -1.0), z_hi = num(spec, "z_hi", 1.0);
    if (r_in < 0.0 || r_in > r_out || z_lo > z_hi) throw ConfigError("shell bounds are inconsistent");
    return shell_region(n, r_in, r_out, z_lo, z_hi);
  }
  if (type == "annulus") {
    const double r_in = num(spec, "r_in", 1.0), r_out = positive(spec, "r_out", 2.0);
    if (r_in < 0.0 || r_in > r_out) throw ConfigError("annulus bounds are inconsistent");
    return annulus_region(centre, r_in, r_out);
  }
  if (type == "empty") return empty_region(n);
  throw ConfigError(fmt::format("unknown region type '{}'", type));
}

std::vector<ChartPtr> make_charts(const LipschitzMap& map, const json& spec, const ChartConfig& cfg) {
  const int n = map.dim_in(), m = map.dim_out();
  validate_chart_spec(spec, n, m);
  std::vector<ChartPtr> out;
  if (spec.is_array()) {
    for (const auto& s : spec) {
      auto part = make_charts(map, s, cfg);
      out.insert(out.end(), part.begin(), part.end());
    }
    return out;
  }
  const Vec level = vec_at(spec, "level", m);
  if (spec.contains("seeds")) {
    std::vector<Vec> seeds;
    for (const auto& s : spec.at("seeds")) seeds.push_back(vec(s, "seeds", n));
    out.push_back(std::make_shared<const Chart>(build_chart(map, level, seeds, cfg)));
    return out;
  }
  const auto& sec = spec.at("sectors");
  const int count = integer(sec, "count", 8, 1);
  const double radius = positive(sec, "radius", 1.0);
  const Vec rest = sec.contains("rest") ? vec(sec.at("rest"), "rest", n - 2) : Vec::Zero(n - 2);
  for (int k = 0; k < count; ++k) {
    out.push_back(std::make_shared<const Chart>(build_chart(map, level, sector_seeds(count, k, radius, rest), cfg)));
  }
  return out;
}

std::vector<Vec> make_points(const json& spec, int n, std::uint64_t seed) {
  allow(spec, "classify", {"points", "grid", "random", "skip_excluded"});
  const int kinds = spec.contains("points") + spec.contains("grid") + spec.contains("random");
  if (kinds != 1) throw ConfigError("classify needs exactly one of 'points', 'grid', 'random'");
  if (spec.contains("skip_excluded") && !spec.at("skip_excluded").is_boolean()) {
    throw ConfigError("'skip_excluded' must be a boolean");
  }
  std::vector<Vec> pts;
  if (spec.contains("points")) {
    if (!spec.at("points").is_array()) throw ConfigError("'points' must be an array");
    for (const auto& p : spec.at("points")) pts.push_back(vec(p, "points", n));
  } else if (spec.contains("grid")) {
    const auto& g = spec.at("grid");
    allow(g, "grid", {"lo", "hi", "n"});
    const Vec lo = vec_at(g, "lo", n), hi = vec_at(g, "hi", n);
    check_box(lo, hi, "grid");
    const int side = integer(g, "n", 8, 1);
    long total = 1;
    for (int i = 0; i < n; ++i) {
      total *= side;
      if (total > 50'000'000) throw ConfigError("grid too large");
    }
    for (long cell = 0; cell < total; ++cell) {
      Vec p(n);
      long rem = cell;
      for (int i = n - 1; i >= 0; --i) {
        const long idx = rem % side;
        rem /= side;
        p[i] = side == 1 ? 0.5 * (lo[i] + hi[i]) : lo[i] + (hi[i] - lo[i]) * idx / (side - 1);
      }
      pts.push_back(p);
    }
  } else {
    const auto& r = spec.at("random");
    allow(r, "random", {"lo", "hi", "count"});
    const Vec lo = vec_at(r, "lo", n), hi = vec_at(r, "hi", n);
    check_box(lo, hi, "random");
    const int count = integer(r, "count", 100, 0);
    Rng rng(derive_seed(seed, 0x9e7));
    for (int i = 0; i < count; ++i) pts.push_back(random_uniform(rng, lo, hi));
  }
  if (pts.empty()) throw ConfigError("classify sample list is empty");
  return pts;
}

RunConfig parse_config(const std::string& text) {
  RunConfig rc;
  try {
    rc.doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("malformed JSON: {}", e.what()));
  }
  const json& d = rc.doc;
  allow(d, "config",
        {"command", "seed", "threads", "map", "measure", "tolerances", "output", "classify", "chart", "disintegrate",
         "cdcheck"});
  rc.hash = fnv1a64(d.dump());
  if (d.contains("command")) {
    if (!d.at("command").is_string()) throw ConfigError("'command' must be a string");
    rc.command = d.at("command").get<std::string>();
  }
  if (d.contains("seed")) {
    if (!d.at("seed").is_number_unsigned()) throw ConfigError("'seed' must be a non-negative integer");
    rc.seed = d.at("seed").get<std::uint64_t>();
  }
  if (d.contains("threads")) rc.threads = integer(d, "threads", 1, 1);

  if (!d.contains("map")) throw ConfigError("missing 'map'");
  rc.map_spec = d.at("map");
  const AtlasEntry entry = atlas_entry(rc.map_spec);
  const int n = entry.map.dim_in(), m = entry.map.dim_out();

  rc.measure_spec = d.contains("measure") ? d.at("measure") : json{{"name", "lebesgue"}};
  make_measure(rc.measure_spec, n);

  if (d.contains("tolerances")) {
    const auto& t = d.at("tolerances");
    allow(t, "tolerances",
          {"tol_defect", "tol_sv", "r_max", "r_min", "gram_min", "tol_lip", "tol_cd", "member_tol", "j_min",
           "lambda_cut", "newton_tol", "extent_directions"});
    rc.detect.tol_defect = positive(t, "tol_defect", rc.detect.tol_defect);
    rc.detect.tol_sv = positive(t, "tol_sv", rc.detect.tol_sv);
    rc.detect.r_max = positive(t, "r_max", rc.detect.r_max);
    rc.detect.r_min = positive(t, "r_min", rc.detect.r_min);
    rc.detect.gram_min = positive(t, "gram_min", rc.detect.gram_min);
    rc.detect.extent_directions = integer(t, "extent_directions", rc.detect.extent_directions, 3);
    rc.tol_lip = positive(t, "tol_lip", rc.tol_lip);
    rc.tol_cd = positive(t, "tol_cd", rc.tol_cd);
    rc.chart_cfg.member_tol = positive(t, "member_tol", rc.chart_cfg.member_tol);
    rc.chart_cfg.j_min = positive(t, "j_min", rc.chart_cfg.j_min);
    rc.chart_cfg.lambda_cut = positive(t, "lambda_cut", rc.chart_cfg.lambda_cut);
    rc.chart_cfg.newton_tol = positive(t, "newton_tol", rc.chart_cfg.newton_tol);
    if (rc.detect.r_min > rc.detect.r_max) throw ConfigError("r_min exceeds r_max");
  }
  rc.detect.seed = rc.seed;
  rc.chart_cfg.detect = rc.detect;

  if (d.contains("output")) {
    const auto& o = d.at("output");
    allow(o, "output", {"dir", "chart_out"});
    if (o.contains("dir")) {
      if (!o.at("dir").is_string()) throw ConfigError("'output.dir' must be a string");
      rc.out_dir = o.at("dir").get<std::string>();
    }
    if (o.contains("chart_out")) {
      if (!o.at("chart_out").is_string()) throw ConfigError("'output.chart_out' must be a string");
      rc.chart_out = o.at("chart_out").get<std::string>();
    }
  }

  if (d.contains("classify")) {
    rc.classify = d.at("classify");
    make_points(rc.classify, n, rc.seed);
  }
  if (d.contains("chart")) {
    rc.chart = d.at("chart");
    validate_chart_spec(rc.chart, n, m);
  }
  if (d.contains("disintegrate")) {
    rc.disintegrate = d.at("disintegrate");
    const auto& b = rc.disintegrate;
    allow(b, "disintegrate",
          {"charts", "region", "n_outer", "n_inner", "n_direct", "n_coverage", "max_uncovered", "max_rel_err",
           "density_grid", "density_labels"});
    if (b.contains("charts")) validate_chart_spec(b.at("charts"), n, m);
    if (!b.contains("region")) throw ConfigError("disintegrate needs a 'region'");
    make_region(b.at("region"), n);
    integer(b, "n_outer", 256, 1);
    integer(b, "n_inner", 4096, 1);
    integer(b, "n_direct", 1 << 18, 1);
    integer(b, "n_coverage", 4096, 0);
    integer(b, "density_grid", 16, 2);
    integer(b, "density_labels", 4, 0);
    if (num(b, "max_uncovered", 0.02) < 0.0) throw ConfigError("'max_uncovered' must be >= 0");
    positive(b, "max_rel_err", 0.02);
  }
  if (d.contains("cdcheck")) {
    rc.cdcheck = d.at("cdcheck");
    const auto& c = rc.cdcheck;
    allow(c, "cdcheck", {"mode", "kappa", "N", "samples", "dirs", "labels", "sample_box", "charts"});
    if (c.contains("mode")) {
      if (!c.at("mode").is_string()) throw ConfigError("'mode' must be a string");
      const auto mode = c.at("mode").get<std::string>();
      if (mode != "leaf" && mode != "ambient") throw ConfigError("'mode' must be \"leaf\" or \"ambient\"");
    }
    num(c, "kappa", 0.0);
    if (c.contains("N")) parse_n_eff(c.at("N"));
    integer(c, "samples", 16, 1);
    integer(c, "dirs", 8, 0);
    integer(c, "labels", 4, 1);
    if (c.contains("charts")) validate_chart_spec(c.at("charts"), n, m);
    const bool leaf_mode = c.value("mode", std::string("leaf")) == "leaf";
    validate_box_block(c, "sample_box", leaf_mode ? m : n);
  }
  return rc;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot read config '{}'", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace leafdec
