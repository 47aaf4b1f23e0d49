#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "experiment.hpp"

namespace fs = std::filesystem;
using gcoupling::cli::json;

namespace {

struct CliRun {
  int code = -1;
  std::string out, err;
};

CliRun run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "gcoupling");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = gcoupling::cli::main_entry(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("gcoupling_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

fs::path write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Cli, RaceExactValue) {
  const fs::path d = scratch("race");
  const auto cfg = write(d / "race.json", R"({"p": [0.5, 0.5], "q": [0.7, 0.3]})");
  const CliRun r = run_cli({"race", "--config", cfg.string(), "--seed", "3", "--replicas", "20000", "--out-dir", (d / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(slurp(d / "out" / "race.json"));
  EXPECT_NEAR(j["results"]["exact"].get<double>(), 0.8, 1e-12);
  EXPECT_NEAR(j["results"]["lower_bound"].get<double>(), 0.8 / 1.2, 1e-12);
  EXPECT_EQ(j["version"], gcoupling::version);
  EXPECT_EQ(j["config_hash"].get<std::string>().size(), 16u);
  EXPECT_EQ(j["status"], "ok");
}

TEST(Cli, CoupleIdenticalDensitiesAgree) {
  const fs::path d = scratch("couple");
  const auto cfg = write(d / "c.json", R"({"seed": 5, "replicas": 500, "f": {"family": "linear", "intercept": 0, "slope": 2},
    "g": {"family": "linear", "intercept": 0, "slope": 2}})");
  const CliRun r = run_cli({"couple", "--config", cfg.string(), "--out-dir", (d / "a").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(slurp(d / "a" / "couple.json"));
  EXPECT_EQ(j["results"]["agreement_rate"].get<double>(), 1.0);
  const std::string csv = slurp(d / "a" / "couple.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "seed,x_f,x_g,t_f,t_g,agree_t,agree_x");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 501);
}

TEST(Cli, RerunIsByteIdentical) {
  const fs::path d = scratch("determinism");
  const auto cfg = write(d / "c.json", R"({"seed": 9, "replicas": 300, "f": {"weights": [1, 1, 2]}, "g": {"weights": [3, 1, 0]}})");
  const std::string out = (d / "a").string();
  ASSERT_NE(run_cli({"couple", "--config", cfg.string(), "--out-dir", out}).code, 2);
  const std::string csv = slurp(d / "a" / "couple.csv"), summary = slurp(d / "a" / "couple.json");
  fs::remove_all(d / "a");
  ASSERT_NE(run_cli({"couple", "--config", cfg.string(), "--out-dir", out}).code, 2);
  EXPECT_EQ(slurp(d / "a" / "couple.csv"), csv);
  EXPECT_EQ(slurp(d / "a" / "couple.json"), summary);
}

TEST(Cli, ConfigHashTracksContent) {
  const fs::path d = scratch("hash");
  const auto c1 = write(d / "1.json", R"({"p": [0.5, 0.5], "q": [0.7, 0.3], "out_dir": "x"})");
  const auto c2 = write(d / "2.json", R"({"p": [0.5, 0.5], "q": [0.6, 0.4], "out_dir": "x"})");
  const auto h1 = json::parse(run_cli({"race", "--config", c1.string(), "--seed", "1", "--replicas", "100"}).out)["config_hash"];
  const auto h1b = json::parse(run_cli({"race", "--config", c1.string(), "--seed", "1", "--replicas", "100"}).out)["config_hash"];
  const auto h2 = json::parse(run_cli({"race", "--config", c2.string(), "--seed", "1", "--replicas", "100"}).out)["config_hash"];
  EXPECT_EQ(h1, h1b);
  EXPECT_NE(h1, h2);
  fs::remove_all("x");
}

TEST(Cli, ParseErrorReportsLocation) {
  const fs::path d = scratch("parse");
  const auto cfg = write(d / "bad.json", "{\n  \"p\": [0.5, 0.5],\n  \"q\": [0.7 0.3]\n}\n");
  const CliRun r = run_cli({"race", "--config", cfg.string(), "--seed", "1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bad.json:3:"), std::string::npos) << r.err;
}

TEST(Cli, ValidationErrorsPointAtTheField) {
  const fs::path d = scratch("validate");
  const auto unknown = write(d / "u.json", R"({"seed": 1, "model": {"family": "geometric_binary", "c": 0.3, "r": 0.5, "foo": 1}})");
  CliRun r = run_cli({"influence", "--config", unknown.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("/model/foo"), std::string::npos) << r.err;

  const auto positivity = write(d / "p.json", R"({"seed": 1, "model": {"family": "geometric_binary", "c": 1.2, "r": 0.5}})");
  r = run_cli({"influence", "--config", positivity.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("/model"), std::string::npos);

  const auto noseed = write(d / "n.json", R"({"p": [1], "q": [1]})");
  r = run_cli({"race", "--config", noseed.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("/seed"), std::string::npos);

  r = run_cli({"frobnicate", "--seed", "1"});
  EXPECT_EQ(r.code, 2);

  const auto other = write(d / "o.json", R"({"command": "couple", "p": [1], "q": [1]})");
  r = run_cli({"race", "--config", other.string(), "--seed", "1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("/command"), std::string::npos);
}

TEST(Cli, InadmissiblePathIsRuntimeError) {
  const fs::path d = scratch("govern_bad");
  write(d / "path.csv", "n,x\n1,0\n2,1\n3,1\n");
  const auto cfg = write(d / "g.json", R"({"seed": 1, "path_file": "path.csv",
    "model": {"family": "markov", "order": 1, "rows": [[1, 0], [0.5, 0.5]]}})");
  const CliRun r = run_cli({"govern", "--config", cfg.string(), "--out-dir", (d / "out").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("[governor] at index 2"), std::string::npos) << r.err;
}

TEST(Cli, GovernSimulatedPathIsClean) {
  const fs::path d = scratch("govern");
  const auto cfg = write(d / "g.json", R"({"seed": 4, "replicas": 3000, "model": {"family": "geometric_binary", "c": 0.3, "r": 0.5}})");
  const CliRun r = run_cli({"govern", "--config", cfg.string(), "--out-dir", (d / "out").string()});
  ASSERT_EQ(r.code, 0) << r.out << r.err;
  const json j = json::parse(r.out);
  EXPECT_EQ(j["results"]["recursion_failures"], 0);
  EXPECT_EQ(j["results"]["replay_mismatches"], 0);
}

TEST(Cli, ViolationsExitOne) {
  const fs::path d = scratch("violation");
  const auto cfg = write(d / "p.json", R"({"seed": 2, "replicas": 2000, "length": 3, "epsilon": 0,
    "constants": {"m": 1, "n": 1}, "model": {"family": "geometric_binary", "c": 0.3, "r": 0.5}})");
  const CliRun r = run_cli({"prime", "--config", cfg.string(), "--out-dir", (d / "out").string()});
  EXPECT_EQ(r.code, 1) << r.err;
  const json j = json::parse(slurp(d / "out" / "prime.json"));
  EXPECT_EQ(j["status"], "violations");
  bool found = false;
  for (const auto& v : j["violations"]) found = found || v["check"] == "conditional_mismatch";
  EXPECT_TRUE(found);
}

TEST(Cli, InfluenceCsvColumns) {
  const fs::path d = scratch("influence");
  const auto cfg = write(d / "i.json", R"({"seed": 2, "replicas": 500, "max_n": 4, "positivity_pasts": 100,
    "model": {"family": "markov", "order": 2, "rows": [[0.8, 0.2], [0.4, 0.6], [0.5, 0.5], [0.1, 0.9]]}})");
  const CliRun r = run_cli({"influence", "--config", cfg.string(), "--out-dir", (d / "out").string()});
  ASSERT_EQ(r.code, 0) << r.out << r.err;
  std::istringstream csv(slurp(d / "out" / "influence.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "n,delta_exact,eta_hat,eta_stderr");
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 5u);
}
