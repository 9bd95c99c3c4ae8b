// Copyright 2026 The AGCN Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Runs the agcn binary as a child process.

#include "agcn/agcn.hpp"

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace agcn {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("agcn_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Exit status of `agcn <args>`, run inside the test directory.
  int run(const std::string& args) {
    const std::string cmd = "cd '" + dir_.string() + "' && '" + AGCN_CLI_PATH + "' " + args +
                            " > stdout.txt 2> stderr.txt";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string file(const std::string& rel) const { return slurp(dir_ / rel); }

  json read_json(const std::string& rel) const { return json::parse(file(rel)); }

  void make_sbm() {
    ASSERT_EQ(run("generate sbm --blocks 20,20 --p-in 0.3 --p-out 0.02 --seed 0 --out-dir data"), 0)
        << file("stderr.txt");
  }

  static std::string graph_flags() {
    return "--graph data/sbm.edges --features data/sbm.csv --labels data/sbm.lab";
  }

  static std::string small_model() {
    return "--epochs 15 --heads 2 --dq 8 --dv 8 --dout 8";
  }

  fs::path dir_;
};

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("train --features x.csv"), 2);
  EXPECT_EQ(run("train --graph a --features b --mode dense"), 2);
  EXPECT_EQ(run("generate sbm --blocks 20,x"), 2);
}

TEST_F(CliTest, HelpExitsZero) { EXPECT_EQ(run("--help"), 0); }

TEST_F(CliTest, RuntimeFailuresExitOne) {
  make_sbm();
  EXPECT_EQ(run("train --graph missing.edges --features data/sbm.csv"), 1);
  EXPECT_NE(file("stderr.txt").find("missing.edges"), std::string::npos);
  std::ofstream(dir_ / "bad.edges") << "0 1\n0 99\n";
  EXPECT_EQ(run("train --graph bad.edges --features data/sbm.csv"), 1);
  EXPECT_NE(file("stderr.txt").find(":2:"), std::string::npos);
}

TEST_F(CliTest, InvalidConfigValuesExitTwo) {
  make_sbm();
  EXPECT_EQ(run("train " + graph_flags() + " --heads 3 --dq 8 --dv 8"), 2);
  EXPECT_EQ(run("analyze r-ratio " + graph_flags() + " --k-range 9:1"), 2);
  std::ofstream(dir_ / "cfg.json") << R"({"epochz": 3})";
  EXPECT_EQ(run("train " + graph_flags() + " --config cfg.json"), 2);
}

TEST_F(CliTest, TrainWritesArtifacts) {
  make_sbm();
  ASSERT_EQ(run("train " + graph_flags() + " --k 3 --lambda 1e-2 --seed 0 " + small_model() +
                " --out-dir run"),
            0)
      << file("stderr.txt");
  for (const char* f : {"params.bin", "history.csv", "result.json", "report.json"})
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  const json stdout_json = json::parse(file("stdout.txt"));
  EXPECT_TRUE(stdout_json["acc"].is_number());
  EXPECT_TRUE(stdout_json["nmi"].is_number());
  const json result = read_json("run/result.json");
  EXPECT_EQ(result["config"]["k"], 3);
  EXPECT_EQ(result["dataset"]["nodes"], 40);
  EXPECT_GE(result["acc"].get<double>(), 0.0);
  EXPECT_FALSE(result.contains("wall_clock_seconds"));
  EXPECT_TRUE(read_json("run/report.json").contains("wall_clock_seconds"));
  const ModelParams p = load_params(dir_ / "run" / "params.bin");
  EXPECT_EQ(p.dims.heads, 2);
  EXPECT_EQ(read_history_csv(dir_ / "run" / "history.csv").size(), 15u);
}

TEST_F(CliTest, ZeroLambdaHistoryEqualsNegativeTerm) {
  make_sbm();
  ASSERT_EQ(run("train " + graph_flags() + " --lambda 0 " + small_model() + " --out-dir run"), 0)
      << file("stderr.txt");
  const auto h = read_history_csv(dir_ / "run" / "history.csv");
  ASSERT_EQ(h.size(), 15u);
  for (const auto& e : h) EXPECT_EQ(e.total, e.neg);
}

TEST_F(CliTest, FlagsOverrideConfigFile) {
  make_sbm();
  std::ofstream(dir_ / "cfg.json") << R"({"epochs": 3, "k": 4, "heads": 2, "dq": 8, "dv": 8, "dout": 8})";
  ASSERT_EQ(run("train " + graph_flags() + " --config cfg.json --epochs 5 --out-dir run"), 0)
      << file("stderr.txt");
  const json r = read_json("run/result.json");
  EXPECT_EQ(r["config"]["epochs"], 5);
  EXPECT_EQ(r["config"]["k"], 4);
}

TEST_F(CliTest, SweepRanksFourRecords) {
  make_sbm();
  ASSERT_EQ(run("train " + graph_flags() + " --sweep --k-grid 2,4 --lambda-grid 1e-2,1 " +
                small_model() + " --out-dir sweep"),
            0)
      << file("stderr.txt");
  const json s = read_json("sweep/summary.json");
  ASSERT_EQ(s["records"].size(), 4u);
  for (std::size_t i = 1; i < 4; ++i)
    EXPECT_GE(s["records"][i - 1]["acc"].get<double>(), s["records"][i]["acc"].get<double>());
  EXPECT_TRUE(fs::exists(dir_ / "sweep" / "k4_lambda1" / "history.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "sweep" / "k2_lambda0.01" / "params.bin"));
}

TEST_F(CliTest, VanillaModeRuns) {
  make_sbm();
  ASSERT_EQ(run("train " + graph_flags() + " --mode vanilla --residual hidden --layer-norm " +
                small_model() + " --out-dir run"),
            0)
      << file("stderr.txt");
  EXPECT_EQ(read_json("run/result.json")["config"]["mode"], "vanilla");
}

TEST_F(CliTest, AnalyzePathsHasUnreachableBucket) {
  make_sbm();
  ASSERT_EQ(run("analyze paths " + graph_flags() + " --out-dir paths"), 0) << file("stderr.txt");
  const json r = read_json("paths/report.json");
  EXPECT_TRUE(r["histogram"].contains("∞"));
  std::int64_t total = 0;
  for (const auto& [k, v] : r["histogram"].items()) total += v.get<std::int64_t>();
  EXPECT_EQ(total, 2 * 19 * 20 / 2);  // same-label unordered pairs
}

TEST_F(CliTest, AnalyzeGroupingWritesCoordinates) {
  make_sbm();
  ASSERT_EQ(run("analyze grouping " + graph_flags() + " --k 5 --out-dir grp"), 0) << file("stderr.txt");
  std::istringstream coords(file("grp/coords.csv"));
  std::string line;
  int rows = 0;
  std::getline(coords, line);
  EXPECT_NE(line.find("misclustered"), std::string::npos);
  while (std::getline(coords, line)) ++rows;
  EXPECT_EQ(rows, 40);
  EXPECT_EQ(read_json("grp/report.json")["k"], 5);
}

TEST_F(CliTest, AnalyzeRRatioCoversRange) {
  make_sbm();
  ASSERT_EQ(run("analyze r-ratio " + graph_flags() + " --k-range 1:9 --out-dir rr"), 0)
      << file("stderr.txt");
  const json r = read_json("rr/report.json");
  EXPECT_EQ(r["r_ratio"]["entries"].size(), 2u * 9u);
  EXPECT_EQ(r["r_ratio"]["k_max"], 9);
}

TEST_F(CliTest, AnalyzeMaskFeatures) {
  make_sbm();
  ASSERT_EQ(run("analyze mask-features " + graph_flags() + " --fraction 0.6 --seed 2 --out-dir mf"), 0)
      << file("stderr.txt");
  const Graph g = load_graph(dir_ / "mf" / "masked.edges", dir_ / "mf" / "masked.csv");
  EXPECT_EQ(zero_feature_rows(g).size(), 24u);
  EXPECT_EQ(file("mf/masked.edges"), file("data/sbm.edges"));
}

TEST_F(CliTest, GenerateTreeMatch) {
  ASSERT_EQ(run("generate tree-match --depth 3 --seed 1 --out-dir t"), 0) << file("stderr.txt");
  const Graph g = load_graph(dir_ / "t" / "tree.edges", dir_ / "t" / "tree.csv", dir_ / "t" / "tree.lab");
  EXPECT_EQ(g.n_nodes(), 15);
  EXPECT_EQ(g.n_edges(), 14);
}

TEST_F(CliTest, RerunsAreByteIdentical) {
  ASSERT_EQ(run("generate sbm --blocks 20,20 --seed 5 --out-dir a"), 0);
  ASSERT_EQ(run("generate sbm --blocks 20,20 --seed 5 --out-dir b"), 0);
  for (const char* f : {"sbm.edges", "sbm.csv", "sbm.lab"})
    EXPECT_EQ(file(std::string("a/") + f), file(std::string("b/") + f)) << f;
  const std::string flags = " --graph a/sbm.edges --features a/sbm.csv --labels a/sbm.lab " + small_model();
  ASSERT_EQ(run("train" + flags + " --out-dir r1"), 0);
  ASSERT_EQ(::setenv("AGCN_THREADS", "1", 1), 0);
  ASSERT_EQ(run("train" + flags + " --out-dir r2"), 0);
  ::unsetenv("AGCN_THREADS");
  for (const char* f : {"params.bin", "history.csv", "result.json"})
    EXPECT_EQ(file(std::string("r1/") + f), file(std::string("r2/") + f)) << f;
}

}  // namespace
}  // namespace agcn
