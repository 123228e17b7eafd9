#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "leafdec/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Fresh scratch directory per test.
class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / "leafdec_cli_tests" / info->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  fs::path write_config(const std::string& name, const std::string& text) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }
  fs::path write_config(const std::string& name, const json& doc) const { return write_config(name, doc.dump()); }

  int run(const std::string& cmd, const fs::path& config, const fs::path& out,
          std::vector<std::string> extra = {}) const {
    std::vector<std::string> args{cmd, "--config", config.string(), "--out", out.string(), "--log-level", "off"};
    args.insert(args.end(), extra.begin(), extra.end());
    return leafdec::run_cli(args);
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  static json read_json(const fs::path& p) { return json::parse(slurp(p)); }

  fs::path dir_;
};

json classify_doc(const std::string& map, int n, int count) {
  std::vector<double> lo(n, -2.0), hi(n, 2.0);
  json map_spec = {{"map", map}, {"n", n}};
  return {{"command", "classify"},
          {"seed", 5},
          {"map", map_spec},
          {"classify", {{"random", {{"lo", lo}, {"hi", hi}, {"count", count}}}}}};
}

json cdcheck_doc(double kappa, const json& n_eff) {
  return {{"command", "cdcheck"},
          {"seed", 3},
          {"map", {{"map", "cylindrical"}, {"n", 3}}},
          {"chart", {{"level", {1, 0}}, {"sectors", {{"count", 4}, {"radius", 1.5}, {"rest", {0}}}}}},
          {"cdcheck", {{"mode", "leaf"}, {"kappa", kappa}, {"N", n_eff}, {"samples", 8}, {"labels", 2}}}};
}

json disintegrate_doc() {
  return {{"command", "disintegrate"},
          {"seed", 11},
          {"map", {{"map", "projection"}, {"n", 3}, {"m", 2}}},
          {"measure", {{"name", "gaussian"}, {"center", {0, 0, 0}}, {"variance", 1}}},
          {"disintegrate",
           {{"charts", {{"level", {0, 0}}, {"seeds", {{0.3, 0.2, -1.05}, {0.3, 0.2, 0}, {0.3, 0.2, 1.05}}}}},
            {"region", {{"type", "ball"}, {"center", {0, 0, 0}}, {"radius", 1}}},
            {"n_direct", 1 << 15},
            {"n_inner", 1024}}}};
}

}  // namespace

TEST_F(CliTest, ClassifyCylindricalIsMostlyTwoDimensional) {
  const auto cfg = write_config("c.json", classify_doc("cylindrical", 3, 2000));
  ASSERT_EQ(run("classify", cfg, dir_ / "out"), 0);
  const json summary = read_json(dir_ / "out" / "classify.json");
  EXPECT_EQ(summary["points"], 2000);
  EXPECT_GE(summary["leaf_dim_counts"].value("2", 0), 1980);

  std::istringstream csv(slurp(dir_ / "out" / "classify.csv"));
  std::string line;
  int comments = 0, rows = 0;
  while (std::getline(csv, line)) {
    if (line.rfind('#', 0) == 0) {
      ++comments;
      continue;
    }
    if (rows++ == 0) EXPECT_EQ(line, "x1,x2,x3,leaf_dim,interior,alpha_1,alpha_2,beta_1,beta_2");
  }
  EXPECT_EQ(comments, 5);
  EXPECT_EQ(rows, 2001);
}

TEST_F(CliTest, ClassifyIdentityIsFullDimensionalInterior) {
  const auto cfg = write_config("c.json", classify_doc("identity", 2, 200));
  ASSERT_EQ(run("classify", cfg, dir_ / "out"), 0);
  const json summary = read_json(dir_ / "out" / "classify.json");
  EXPECT_EQ(summary["leaf_dim_counts"].value("2", 0), 200);
  EXPECT_EQ(summary["interior"], 200);
}

TEST_F(CliTest, ClassifyEmptyPointListIsConfigError) {
  json doc = classify_doc("identity", 2, 1);
  doc["classify"] = {{"points", json::array()}};
  EXPECT_EQ(run("classify", write_config("c.json", doc), dir_ / "out"), 2);
}

TEST_F(CliTest, DisintegrateProjectionPasses) {
  ASSERT_EQ(run("disintegrate", write_config("d.json", disintegrate_doc()), dir_ / "out"), 0);
  const json body = read_json(dir_ / "out" / "mixture.json");
  EXPECT_TRUE(body["pass"].get<bool>());
  EXPECT_LE(body["report"]["rel_err"].get<double>(), 0.02);
  EXPECT_TRUE(fs::exists(dir_ / "out" / "densities.csv"));
}

TEST_F(CliTest, DisintegrateCoverageGapExitsOne) {
  json doc = {{"command", "disintegrate"},
              {"seed", 1},
              {"map", {{"map", "cylindrical"}, {"n", 3}}},
              {"disintegrate",
               {{"charts", {{"level", {1, 0}}, {"sectors", {{"count", 8}, {"radius", 1.5}, {"rest", {0}}}}}},
                {"region", {{"type", "box"}, {"lo", {-1, -1, -1}}, {"hi", {1, 1, 1}}}},
                {"max_uncovered", 0},
                {"n_direct", 4096},
                {"n_inner", 256}}}};
  EXPECT_EQ(run("disintegrate", write_config("d.json", doc), dir_ / "out"), 1);
  const json body = read_json(dir_ / "out" / "mixture.json");
  EXPECT_TRUE(body.contains("error"));
  EXPECT_GT(body["report"]["uncovered_fraction"].get<double>(), 0.0);
}

TEST_F(CliTest, MalformedJsonExitsTwo) {
  EXPECT_EQ(run("disintegrate", write_config("d.json", std::string("{\"command\": ")), dir_ / "out"), 2);
}

TEST_F(CliTest, UnknownKeyExitsTwo) {
  json doc = disintegrate_doc();
  doc["disintegrate"]["n_outr"] = 3;
  EXPECT_EQ(run("disintegrate", write_config("d.json", doc), dir_ / "out"), 2);
  doc = disintegrate_doc();
  doc["colour"] = "red";
  EXPECT_EQ(run("disintegrate", write_config("d.json", doc), dir_ / "out"), 2);
}

TEST_F(CliTest, CommandMismatchExitsTwo) {
  EXPECT_EQ(run("classify", write_config("d.json", disintegrate_doc()), dir_ / "out"), 2);
}

TEST_F(CliTest, CdcheckTightPairPasses) {
  ASSERT_EQ(run("cdcheck", write_config("k.json", cdcheck_doc(0.0, 3)), dir_ / "out"), 0);
  const json body = read_json(dir_ / "out" / "cdcheck.json");
  EXPECT_TRUE(body["pass"].get<bool>());
  EXPECT_EQ(body["leaves"].size(), 8u);
  EXPECT_GE(body["worst_margin"].get<double>(), -1e-5);
}

TEST_F(CliTest, CdcheckShiftedKappaFails) {
  EXPECT_EQ(run("cdcheck", write_config("k.json", cdcheck_doc(0.1, 3)), dir_ / "out"), 1);
  EXPECT_FALSE(read_json(dir_ / "out" / "cdcheck.json")["pass"].get<bool>());
}

TEST_F(CliTest, CdcheckExcludedNExitsTwo) {
  EXPECT_EQ(run("cdcheck", write_config("k.json", cdcheck_doc(0.0, 2.5)), dir_ / "out"), 2);
}

TEST_F(CliTest, CdcheckInfiniteNAsString) {
  ASSERT_EQ(run("cdcheck", write_config("k.json", cdcheck_doc(0.0, "inf")), dir_ / "out"), 0);
  EXPECT_EQ(read_json(dir_ / "out" / "cdcheck.json")["params"]["n_eff"], "inf");
}

TEST_F(CliTest, OutputIsDeterministicAcrossThreadCounts) {
  const auto cfg = write_config("c.json", classify_doc("cylindrical", 3, 300));
  ASSERT_EQ(run("classify", cfg, dir_ / "a", {"--threads", "1"}), 0);
  ASSERT_EQ(run("classify", cfg, dir_ / "b", {"--threads", "3"}), 0);
  ASSERT_EQ(run("classify", cfg, dir_ / "c", {"--threads", "3"}), 0);
  const auto strip_threads = [](std::string s) {
    std::istringstream in(s);
    std::string line, out;
    while (std::getline(in, line)) {
      if (line.rfind("# threads=", 0) != 0) out += line + "\n";
    }
    return out;
  };
  EXPECT_EQ(slurp(dir_ / "b" / "classify.csv"), slurp(dir_ / "c" / "classify.csv"));
  EXPECT_EQ(strip_threads(slurp(dir_ / "a" / "classify.csv")), strip_threads(slurp(dir_ / "b" / "classify.csv")));
}

TEST_F(CliTest, HeaderRecordsRunIdentity) {
  const auto cfg = write_config("c.json", classify_doc("identity", 2, 10));
  ASSERT_EQ(run("classify", cfg, dir_ / "out", {"--seed", "42", "--threads", "2"}), 0);
  const json h = read_json(dir_ / "out" / "classify.json")["header"];
  EXPECT_EQ(h["tool"], "leafdec");
  EXPECT_EQ(h["version"], leafdec::kToolVersion);
  EXPECT_EQ(h["seed"], 42);
  EXPECT_EQ(h["threads"], 2);
  EXPECT_EQ(h["command"], "classify");
  EXPECT_EQ(h["config_hash"].get<std::string>().size(), 16u);
  const std::string csv = slurp(dir_ / "out" / "classify.csv");
  EXPECT_EQ(csv.rfind("# tool=leafdec version=", 0), 0u);
  EXPECT_NE(csv.find("# seed=42\n"), std::string::npos);
}

TEST_F(CliTest, SeedOverrideChangesRandomPoints) {
  const auto cfg = write_config("c.json", classify_doc("identity", 2, 20));
  ASSERT_EQ(run("classify", cfg, dir_ / "a"), 0);
  ASSERT_EQ(run("classify", cfg, dir_ / "b", {"--seed", "6"}), 0);
  EXPECT_NE(slurp(dir_ / "a" / "classify.csv"), slurp(dir_ / "b" / "classify.csv"));
}

TEST_F(CliTest, ChartOutWritesCharts) {
  json doc = {{"command", "chart"},
              {"seed", 7},
              {"map", {{"map", "cylindrical"}, {"n", 3}}},
              {"chart", {{"level", {1, 0}}, {"sectors", {{"count", 4}, {"radius", 1.5}, {"rest", {0}}}}}}};
  const fs::path target = dir_ / "charts" / "mine.json";
  ASSERT_EQ(run("chart", write_config("c.json", doc), dir_ / "out", {"--chart-out", target.string()}), 0);
  const json body = read_json(target);
  EXPECT_EQ(body["charts"].size(), 4u);
  EXPECT_FALSE(fs::exists(dir_ / "out" / "chart.json"));
}

TEST_F(CliTest, AtlasListNeedsNoConfig) {
  ASSERT_EQ(leafdec::run_cli({"atlas-list", "--out", (dir_ / "out").string(), "--log-level", "off"}), 0);
  const json body = read_json(dir_ / "out" / "atlas.json");
  EXPECT_EQ(body["keys"].size(), 5u);
}

TEST_F(CliTest, BadArgumentsExitTwo) {
  EXPECT_EQ(leafdec::run_cli({"frobnicate"}), 2);
  EXPECT_EQ(leafdec::run_cli({"classify", "--threads", "0", "--config", "x.json"}), 2);
  EXPECT_EQ(leafdec::run_cli({"classify", "--config", (dir_ / "missing.json").string(), "--log-level", "off"}), 2);
  EXPECT_EQ(leafdec::run_cli({"--version"}), 0);
}
