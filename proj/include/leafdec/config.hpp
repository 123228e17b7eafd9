#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "leafdec/atlas.hpp"
#include "leafdec/cdcheck.hpp"
#include "leafdec/chart.hpp"
#include "leafdec/disintegrate.hpp"

namespace leafdec {

// Schema-checked run configuration. Every block is validated on load, whatever
// the command; unknown keys raise ConfigError.
struct RunConfig {
  nlohmann::json doc;          // parsed document
  std::uint64_t hash = 0;      // FNV-1a of the canonical dump
  std::string command;         // optional "command" key
  std::uint64_t seed = 0;
  std::optional<int> threads;
  nlohmann::json map_spec;
  nlohmann::json measure_spec;
  DetectConfig detect;
  ChartConfig chart_cfg;
  double tol_lip = 1e-6;
  double tol_cd = 1e-5;
  std::string out_dir = "out";
  std::optional<std::string> chart_out;
  nlohmann::json classify;     // null when absent
  nlohmann::json chart;
  nlohmann::json disintegrate;
  nlohmann::json cdcheck;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

std::uint64_t fnv1a64(const std::string& bytes);

WeightedMeasure make_measure(const nlohmann::json& spec, int n);
Region make_region(const nlohmann::json& spec, int n);

// A chart spec is {"level": [...], "seeds": [[...], ...]} or
// {"level": [...], "sectors": {"count": K, "radius": r, "rest": [...]}} (K charts).
// An array of specs concatenates.
std::vector<ChartPtr> make_charts(const LipschitzMap& map, const nlohmann::json& spec, const ChartConfig& cfg);

// Points of a classify block: "points", "grid" {lo, hi, n} or "random" {lo, hi, count}.
std::vector<Vec> make_points(const nlohmann::json& spec, int n, std::uint64_t seed);

double parse_n_eff(const nlohmann::json& j);

}  // namespace leafdec
