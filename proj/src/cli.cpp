#include "leafdec/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>
#include <thread>

#include "leafdec/atlas.hpp"
#include "leafdec/cdcheck.hpp"
#include "leafdec/config.hpp"
#include "leafdec/parallel.hpp"

namespace leafdec {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kOk = 0;
constexpr int kFail = 1;
constexpr int kConfig = 2;

struct Run {
  RunConfig cfg;
  std::string command;
  fs::path out;
  int threads = 1;
};

std::string num(double v) { return fmt::format("{:.17g}", v); }

json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json header(const Run& run) {
  return {{"tool", "leafdec"},
          {"version", kToolVersion},
          {"config_hash", fmt::format("{:016x}", run.cfg.hash)},
          {"seed", run.cfg.seed},
          {"threads", run.threads},
          {"command", run.command}};
}

std::string csv_header(const Run& run) {
  return fmt::format("# tool=leafdec version={}\n# config_hash={:016x}\n# seed={}\n# threads={}\n# command={}\n",
                     kToolVersion, run.cfg.hash, run.cfg.seed, run.threads, run.command);
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << text;
  if (!out) throw std::runtime_error(fmt::format("write failed for '{}'", path.string()));
  spdlog::info("wrote {}", path.string());
}

void write_json(const fs::path& path, const json& body) { write_file(path, body.dump(2) + "\n"); }

std::vector<ChartPtr> charts_for(const Run& run, const LipschitzMap& map, const json& spec) {
  auto charts = make_charts(map, spec, run.cfg.chart_cfg);
  if (run.cfg.chart_out) {
    json arr = json::array();
    for (const auto& c : charts) arr.push_back(to_json(*c));
    write_json(*run.cfg.chart_out, {{"header", header(run)}, {"charts", arr}});
  }
  return charts;
}

const json& require_block(const json& block, const char* name) {
  if (block.is_null()) throw ConfigError(fmt::format("command needs a '{}' block", name));
  return block;
}

int cmd_classify(const Run& run) {
  const json& spec = require_block(run.cfg.classify, "classify");
  const AtlasEntry entry = atlas_entry(run.cfg.map_spec);
  const int n = entry.map.dim_in(), m = entry.map.dim_out();
  std::vector<Vec> points = make_points(spec, n, run.cfg.seed);
  if (spec.value("skip_excluded", false)) {
    std::erase_if(points, [&](const Vec& x) { return entry.map.excluded(x); });
    if (points.empty()) throw ConfigError("every classify point is excluded");
  }
  spdlog::info("classifying {} points", points.size());
  const auto classes = classify_points(entry.map, points, run.cfg.detect, run.threads);

  std::string csv = csv_header(run);
  std::vector<std::string> cols;
  for (int i = 1; i <= n; ++i) cols.push_back(fmt::format("x{}", i));
  cols.emplace_back("leaf_dim");
  cols.emplace_back("interior");
  for (int k = 1; k <= m; ++k) cols.push_back(fmt::format("alpha_{}", k));
  for (int k = 1; k <= m; ++k) cols.push_back(fmt::format("beta_{}", k));
  csv += fmt::format("{}\n", fmt::join(cols, ","));

  std::map<std::string, int> counts;
  int interior = 0;
  for (const auto& pc : classes) {
    std::vector<std::string> row;
    for (int i = 0; i < n; ++i) row.push_back(num(pc.point[i]));
    const std::string dim = pc.leaf_dim ? std::to_string(*pc.leaf_dim) : "unknown";
    row.push_back(dim);
    row.emplace_back(pc.interior ? "1" : "0");
    for (double a : pc.alpha) row.push_back(num(a));
    for (int k = static_cast<int>(pc.alpha.size()); k < m; ++k) row.emplace_back("");
    for (double b : pc.beta) row.push_back(num(b));
    csv += fmt::format("{}\n", fmt::join(row, ","));
    ++counts[dim];
    interior += pc.interior ? 1 : 0;
  }
  write_file(run.out / "classify.csv", csv);
  write_json(run.out / "classify.json", {{"header", header(run)},
                                         {"map", entry.params},
                                         {"points", classes.size()},
                                         {"leaf_dim_counts", counts},
                                         {"interior", interior}});
  return kOk;
}

int cmd_chart(const Run& run) {
  const json& spec = require_block(run.cfg.chart, "chart");
  const AtlasEntry entry = atlas_entry(run.cfg.map_spec);
  const auto charts = make_charts(entry.map, spec, run.cfg.chart_cfg);
  json arr = json::array();
  for (const auto& c : charts) arr.push_back(to_json(*c));
  const json body = {{"header", header(run)}, {"map", entry.params}, {"charts", arr}};
  write_json(run.cfg.chart_out ? fs::path(*run.cfg.chart_out) : run.out / "chart.json", body);
  return kOk;
}

// Evenly spaced labels along the diagonal of the chart's label box, inside the domain.
std::vector<Vec> chart_labels(const Chart& chart, int count) {
  std::vector<Vec> labels;
  const Vec& lo = chart.label_lo();
  const Vec& hi = chart.label_hi();
  for (int i = 0; i < count; ++i) {
    const Vec a = lo + (hi - lo) * ((i + 0.5) / count);
    if (chart.label_in_domain(a)) labels.push_back(a);
  }
  return labels;
}

int cmd_disintegrate(const Run& run) {
  const json& spec = require_block(run.cfg.disintegrate, "disintegrate");
  const AtlasEntry entry = atlas_entry(run.cfg.map_spec);
  const int n = entry.map.dim_in();
  const json& chart_spec = spec.contains("charts") ? spec.at("charts") : require_block(run.cfg.chart, "chart");
  const WeightedMeasure measure = make_measure(run.cfg.measure_spec, n);
  const Region region = make_region(spec.at("region"), n);
  MixtureConfig mc;
  mc.n_outer = spec.value("n_outer", mc.n_outer);
  mc.n_inner = spec.value("n_inner", mc.n_inner);
  mc.n_direct = spec.value("n_direct", mc.n_direct);
  mc.n_coverage = spec.value("n_coverage", mc.n_coverage);
  mc.max_uncovered = spec.value("max_uncovered", mc.max_uncovered);
  mc.seed = run.cfg.seed;
  mc.threads = run.threads;
  const double max_rel_err = spec.value("max_rel_err", 0.02);
  const auto charts = charts_for(run, entry.map, chart_spec);

  json body = {{"header", header(run)}, {"map", entry.params}, {"measure", run.cfg.measure_spec},
               {"max_rel_err", max_rel_err}};
  MixtureReport report;
  try {
    report = mixture_check(entry.map, measure, charts, region, mc);
  } catch (const CoverageGap& gap) {
    body["report"] = to_json(gap.report());
    body["error"] = {{"kind", gap.kind()}, {"message", gap.what()}};
    body["pass"] = false;
    write_json(run.out / "mixture.json", body);
    spdlog::error("{}", gap.what());
    return kFail;
  }
  const bool pass = report.rel_err <= max_rel_err;
  body["report"] = to_json(report);
  body["pass"] = pass;
  write_json(run.out / "mixture.json", body);

  const int grid = spec.value("density_grid", 16);
  const int per_chart = spec.value("density_labels", 4);
  const int m = entry.map.dim_out();
  std::string csv = csv_header(run);
  std::vector<std::string> cols{"chart"};
  for (int i = 1; i <= n - m; ++i) cols.push_back(fmt::format("a{}", i));
  for (int i = 1; i <= m; ++i) cols.push_back(fmt::format("b{}", i));
  cols.emplace_back("density");
  csv += fmt::format("{}\n", fmt::join(cols, ","));
  for (std::size_t ci = 0; ci < charts.size(); ++ci) {
    for (const Vec& a : chart_labels(*charts[ci], per_chart)) {
      ConditionalDensity cond = [&] {
        try {
          return conditional_density(charts[ci], a, measure);
        } catch (const NoLeaf&) {
          return ConditionalDensity(m, [](const Vec&) { return 0.0; }, [](const Vec&) { return false; });
        }
      }();
      for (const auto& row : tabulate_density(cond, a, grid)) {
        std::vector<std::string> cells{std::to_string(ci)};
        for (Eigen::Index i = 0; i < row.a.size(); ++i) cells.push_back(num(row.a[i]));
        for (Eigen::Index i = 0; i < row.b.size(); ++i) cells.push_back(num(row.b[i]));
        cells.push_back(num(row.density));
        csv += fmt::format("{}\n", fmt::join(cells, ","));
      }
    }
  }
  write_file(run.out / "densities.csv", csv);
  spdlog::info("rel_err {} (bound {})", report.rel_err, max_rel_err);
  return pass ? kOk : kFail;
}

Vec json_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::pair<Vec, Vec> box_block(const json& spec, const Vec& lo, const Vec& hi) {
  if (!spec.contains("sample_box")) return {lo, hi};
  const auto& b = spec.at("sample_box");
  return {json_vec(b.at("lo")), json_vec(b.at("hi"))};
}

int cmd_cdcheck(const Run& run) {
  const json& spec = require_block(run.cfg.cdcheck, "cdcheck");
  const AtlasEntry entry = atlas_entry(run.cfg.map_spec);
  const int n = entry.map.dim_in(), m = entry.map.dim_out();
  CDParams params;
  params.kappa = spec.value("kappa", 0.0);
  params.n_dim = n;
  params.n_eff = spec.contains("N") ? parse_n_eff(spec.at("N")) : std::numeric_limits<double>::infinity();
  params.validate();
  const std::string mode = spec.value("mode", std::string("leaf"));
  const int samples = spec.value("samples", 16);
  const int dirs = spec.value("dirs", 8);
  const WeightedMeasure measure = make_measure(run.cfg.measure_spec, n);
  json body = {{"header", header(run)}, {"map", entry.params}, {"measure", run.cfg.measure_spec}, {"mode", mode}};

  if (mode == "ambient") {
    const auto [lo, hi] = box_block(spec, entry.sample_lo, entry.sample_hi);
    Rng rng(derive_seed(run.cfg.seed, 0xa3));
    std::vector<Vec> pts;
    for (int i = 0; i < samples; ++i) pts.push_back(random_uniform(rng, lo, hi));
    const CDReport rep = check_ambient_cd(measure, params, pts, dirs, run.cfg.seed, run.cfg.tol_cd);
    body["report"] = to_json(rep);
    body["pass"] = rep.pass;
    write_json(run.out / "cdcheck.json", body);
    return rep.pass ? kOk : kFail;
  }

  const json& chart_spec = spec.contains("charts") ? spec.at("charts") : require_block(run.cfg.chart, "chart");
  const auto charts = charts_for(run, entry.map, chart_spec);
  const int labels = spec.value("labels", 4);
  json leaves = json::array();
  bool pass = true;
  double worst = std::numeric_limits<double>::infinity();
  int checked = 0;
  std::uint64_t leaf_index = 0;
  for (std::size_t ci = 0; ci < charts.size(); ++ci) {
    for (const Vec& a : chart_labels(*charts[ci], labels)) {
      const ConditionalDensity cond = conditional_density(charts[ci], a, measure);
      std::pair<Vec, Vec> box;
      if (spec.contains("sample_box")) {
        box = box_block(spec, Vec::Zero(m), Vec::Zero(m));
      } else {
        if (!cond.box) throw DegenerateSupport("leaf has no coordinate box");
        // middle half of the leaf box keeps stencils away from the relative boundary
        const Vec mid = 0.5 * (cond.box->first + cond.box->second);
        const Vec half = 0.25 * (cond.box->second - cond.box->first);
        box = {mid - half, mid + half};
      }
      Rng rng(derive_seed(run.cfg.seed, 0x1eaf00 + leaf_index));
      std::vector<Vec> pts;
      for (int tries = 0; static_cast<int>(pts.size()) < samples && tries < 100 * samples; ++tries) {
        const Vec c = random_uniform(rng, box.first, box.second);
        if (cond.in_support(c)) pts.push_back(c);
      }
      if (pts.empty()) throw DegenerateSupport("no sample point inside the leaf support");
      const CDReport rep =
          check_leaf_cd(cond, params, pts, dirs, derive_seed(run.cfg.seed, leaf_index), run.cfg.tol_cd);
      json entry_json = to_json(rep);
      entry_json["chart"] = ci;
      entry_json["label"] = vec_json(a);
      leaves.push_back(entry_json);
      pass = pass && rep.pass;
      worst = std::min(worst, rep.worst_margin);
      checked += rep.n_checked;
      ++leaf_index;
    }
  }
  if (leaves.empty()) throw EmptyChart("no label inside any chart domain");
  body["params"] = {{"kappa", params.kappa},
                    {"n_dim", params.n_dim},
                    {"n_eff", params.infinite() ? json("inf") : json(params.n_eff)}};
  body["leaves"] = leaves;
  body["worst_margin"] = worst;
  body["n_checked"] = checked;
  body["tol_cd"] = run.cfg.tol_cd;
  body["pass"] = pass;
  write_json(run.out / "cdcheck.json", body);
  spdlog::info("worst margin {} over {} checks", worst, checked);
  return pass ? kOk : kFail;
}

int cmd_atlas_list(const Run& run) {
  json arr = json::array();
  for (const auto& e : test_atlas()) {
    arr.push_back({{"key", e.key},
                   {"params", e.params},
                   {"n", e.map.dim_in()},
                   {"m", e.map.dim_out()},
                   {"sample_lo", vec_json(e.sample_lo)},
                   {"sample_hi", vec_json(e.sample_hi)}});
    fmt::print("{:<14} n={} m={}\n", e.key, e.map.dim_in(), e.map.dim_out());
  }
  write_json(run.out / "atlas.json", {{"header", header(run)}, {"keys", atlas_keys()}, {"entries", arr}});
  return kOk;
}

void setup_logging(const std::string& level) {
  auto logger = spdlog::get("leafdec");
  if (!logger) logger = spdlog::stderr_color_mt("leafdec");
  spdlog::set_default_logger(logger);
  const auto lvl = spdlog::level::from_str(level);
  if (lvl == spdlog::level::off && level != "off") throw ConfigError(fmt::format("unknown log level '{}'", level));
  spdlog::set_level(lvl);
}

bool is_config_kind(const std::string& kind) {
  return kind == "ConfigError" || kind == "InvalidN" || kind == "NonConstantRho" || kind == "DimensionError";
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"leafdec: leaf decomposition of 1-Lipschitz maps"};
  app.require_subcommand(1, 1);
  std::string config_path, out_dir, log_level = "warn", chart_out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--out", out_dir, "output directory (overrides output.dir)");
  app.add_option("--seed", seed, "64-bit seed (overrides the config)");
  app.add_option("--threads", threads, "worker threads (default: available cores)")->check(CLI::PositiveNumber);
  app.add_option("--log-level", log_level, "trace|debug|info|warn|err|critical|off");
  app.add_option("--chart-out", chart_out, "write built charts to this JSON file");
  app.set_version_flag("--version", kToolVersion);
  const std::vector<std::string> commands{"classify", "chart", "disintegrate", "cdcheck", "atlas-list"};
  for (const auto& c : commands) app.add_subcommand(c, "run " + c)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  Run run;
  run.command = app.get_subcommands().front()->get_name();
  try {
    setup_logging(log_level);
    if (run.command != "atlas-list" || !config_path.empty()) {
      if (config_path.empty()) throw ConfigError("--config is required");
      run.cfg = load_config(config_path);
    } else {
      run.cfg.hash = fnv1a64("{}");
    }
    if (!run.cfg.command.empty() && run.cfg.command != run.command) {
      throw ConfigError(fmt::format("config is for '{}', not '{}'", run.cfg.command, run.command));
    }
    if (seed) {
      run.cfg.seed = *seed;
      run.cfg.detect.seed = *seed;
      run.cfg.chart_cfg.detect.seed = *seed;
    }
    run.threads = threads ? *threads : run.cfg.threads.value_or(default_threads());
    if (!chart_out.empty()) run.cfg.chart_out = chart_out;
    run.out = out_dir.empty() ? fs::path(run.cfg.out_dir) : fs::path(out_dir);
    spdlog::debug("command {} seed {} threads {}", run.command, run.cfg.seed, run.threads);

    if (run.command == "classify") return cmd_classify(run);
    if (run.command == "chart") return cmd_chart(run);
    if (run.command == "disintegrate") return cmd_disintegrate(run);
    if (run.command == "cdcheck") return cmd_cdcheck(run);
    return cmd_atlas_list(run);
  } catch (const Error& e) {
    spdlog::error("{}: {}", e.kind(), e.what());
    return is_config_kind(e.kind()) ? kConfig : kFail;
  } catch (const nlohmann::json::exception& e) {
    spdlog::error("config: {}", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kFail;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> storage{"leafdec"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  argv.push_back(nullptr);
  return run_cli(static_cast<int>(storage.size()), argv.data());
}

}  // namespace leafdec
