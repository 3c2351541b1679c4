// Copyright 2026 The polystack Authors.
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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "cli/cli.hpp"
#include "polystack/network_builder.hpp"

namespace polystack {
namespace {

namespace fs = std::filesystem;

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::dispatch(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::path(POLYSTACK_TEST_TMP) / ::testing::UnitTest::GetInstance()->current_test_info()->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

const std::vector<std::string> kToyData{"--data-size", "120", "--image-size", "16", "--input-size", "16"};

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

TEST_F(CliTest, RewritePrintsCascadedForms) {
  auto r = run({"rewrite", "--kind", "poly-2"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "I + (I+F)F\n");
  EXPECT_EQ(run({"rewrite", "--kind", "mpoly-3"}).out, "I + (I+(I+H)G)F\n");
  EXPECT_EQ(run({"rewrite", "--kind", "poly-3"}).out, "I + (I+(I+F)F)F\n");
  r = run({"expand", "--kind", "poly-3", "--beta", "0.3", "--stats"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "I + 0.3*(F+FF+FFF)");
  EXPECT_NE(r.out.find("naive 6, cascaded 3"), std::string::npos);
}

TEST_F(CliTest, ExitCodes) {
  auto r = run({"parse", ""});
  EXPECT_EQ(r.code, cli::kValidation);
  EXPECT_NE(r.err.find("syntax error"), std::string::npos);
  EXPECT_EQ(run({"parse", "A: foo-2"}).code, cli::kValidation);
  EXPECT_EQ(run({"rewrite", "--kind", "poly-0"}).code, cli::kValidation);
  EXPECT_EQ(run({"expand", "--kind", "ir", "--beta", "2"}).code, cli::kValidation);
  EXPECT_EQ(run({}).code, cli::kUsage);
  EXPECT_EQ(run({"rewrite"}).code, cli::kUsage);
  EXPECT_EQ(run({"parse", "IR 1-1-1", "--no-such-flag"}).code, cli::kUsage);
  EXPECT_EQ(run({"analyze", "--network", "IR 1-1-1", "--format", "xml"}).code, cli::kUsage);
  EXPECT_EQ(run({"--help"}).code, cli::kOk);
}

TEST_F(CliTest, ParseReportsModulesAsJson) {
  const auto r = run({"parse", "B: (3-way -> mpoly-3 -> poly-3) x 4", "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["module_count"], 12);
  EXPECT_EQ(j["canonical"], "B: (3-way -> mpoly-3 -> poly-3) x 4");
  EXPECT_EQ(j["modules"][1]["kind"], "mpoly-3");
  const auto text = run({"parse", "ir-3-6-3"});
  EXPECT_EQ(text.code, 0);
  EXPECT_EQ(text.out.substr(0, text.out.find('\n')), "A: (ir) x 3; B: (ir) x 6; C: (ir) x 3");
}

TEST_F(CliTest, AnalyzeEmitsParseableCsvAndJson) {
  const auto csv = run({"analyze", "--network", "A: ir -> poly-3; B: mpoly-3", "--format", "csv"});
  ASSERT_EQ(csv.code, 0) << csv.err;
  std::istringstream in(csv.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "config,stage,module_index,kind,params,macs,block_apps");
  std::int64_t poly3 = -1, ir = -1, mpoly3 = -1, total = 0, sum = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    ASSERT_EQ(f.size(), 7u) << line;
    const auto params = std::stoll(f[4]);
    if (f[1] == "total") {
      total = params;
      continue;
    }
    sum += params;
    if (f[3] == "ir") ir = params;
    if (f[3] == "poly-3") poly3 = params;
    if (f[3] == "mpoly-3") mpoly3 = params;
  }
  EXPECT_EQ(total, sum);
  EXPECT_EQ(poly3, ir);
  EXPECT_GT(mpoly3, poly3);
  const auto json = run({"analyze", "--network", "IR 1-2-1", "--format", "json"});
  ASSERT_EQ(json.code, 0);
  EXPECT_TRUE(nlohmann::json::parse(json.out).contains("rows"));
  const auto grid = run({"analyze", "--network", "ir-3-6-3", "--grid", "--format", "json"});
  ASSERT_EQ(grid.code, 0) << grid.err;
  EXPECT_EQ(nlohmann::json::parse(grid.out)["rows"].size(), 19u);
}

TEST_F(CliTest, ConfigFileSuppliesOptions) {
  std::ofstream(path("a.conf")) << "# toy run\nnetwork = IR 1-2-1  # three stages\n\nformat = json\n";
  const auto r = run({"analyze", "--config", path("a.conf")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["block_apps"], 4);
  std::ofstream(path("bad.conf")) << "network\n";
  EXPECT_NE(run({"analyze", "--config", path("bad.conf")}).code, 0);
}

TEST_F(CliTest, GradcheckPassesAndFailsByTolerance) {
  auto r = run({"gradcheck", "--kind", "mpoly-3", "--arch", "dense:4,8"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("ok"), std::string::npos);
  r = run({"gradcheck", "--kind", "poly-2", "--tol", "1e-15"});
  EXPECT_EQ(r.code, cli::kNumeric);
  EXPECT_NE(r.err.find("exceeds 1.000e-15"), std::string::npos) << r.err;
}

TEST_F(CliTest, TrainIsReproducibleFromItsManifest) {
  const auto args = with({"train", "--network", "A: ir; B: poly-2", "--iterations", "20", "--eval-every", "10",
                          "--seed", "3", "--out", path("run1")},
                         kToyData);
  const auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"manifest.json", "run.conf", "history.jsonl", "train.json", "checkpoints/final.pnck"}) {
    EXPECT_TRUE(fs::exists(dir_ / "run1" / f)) << f;
  }
  const auto manifest = nlohmann::json::parse(slurp(dir_ / "run1" / "manifest.json"));
  EXPECT_EQ(manifest["command"], "train");
  EXPECT_EQ(manifest["options"]["seed"], "3");
  const auto again = run({"train", "--config", path("run1/run.conf"), "--out", path("run2")});
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(slurp(dir_ / "run1" / "history.jsonl"), slurp(dir_ / "run2" / "history.jsonl"));
  const Model a = load_checkpoint(path("run1/checkpoints/final.pnck"));
  const Model b = load_checkpoint(path("run2/checkpoints/final.pnck"));
  EXPECT_TRUE(a.params.bitwise_equal(b.params));
}

TEST_F(CliTest, DivergentTrainingAbortsWithNumericExit) {
  const auto r = run(with({"train", "--network", "IR 1-1-1", "--iterations", "20", "--lr", "1e300", "--out",
                           path("nan")},
                          kToyData));
  EXPECT_EQ(r.code, cli::kNumeric);
  EXPECT_NE(r.err.find("non-finite"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("lr 1e+300"), std::string::npos) << r.err;
}

TEST_F(CliTest, EvalAndSurgeryOnACheckpoint) {
  ASSERT_EQ(run(with({"train", "--network", "A: ir; B: ir", "--iterations", "10", "--out", path("t")}, kToyData)).code,
            0);
  const std::string ckpt = path("t/checkpoints/final.pnck");
  const auto ev = run(with({"eval", "--checkpoint", ckpt, "--out", path("ev")}, {"--data-size", "120", "--image-size", "16"}));
  ASSERT_EQ(ev.code, 0) << ev.err;
  const auto report = nlohmann::json::parse(slurp(dir_ / "ev" / "eval.json"));
  EXPECT_TRUE(report.dump().find("top1") != std::string::npos);

  const auto sg = run({"surgery", "--checkpoint", ckpt, "--target", "A: mpoly-2; B: 3-way", "--zero-last", "--out",
                       path("sg")});
  ASSERT_EQ(sg.code, 0) << sg.err;
  const Model before = load_checkpoint(ckpt);
  const Model after = load_checkpoint(path("sg/surgery.pnck"));
  EXPECT_TRUE(after.params.group_bitwise_equal("A.0.F", before.params, "A.0.F"));
  EXPECT_EQ(render_network(after.meta.config), "A: mpoly-2; B: 3-way");
  EXPECT_EQ(run({"surgery", "--checkpoint", ckpt, "--target", "A: ir", "--out", path("bad")}).code,
            cli::kValidation);
  EXPECT_NE(run({"surgery", "--checkpoint", path("missing.pnck"), "--target", "A: ir; B: ir"}).code, 0);
}

TEST_F(CliTest, SweepWritesTheGrid) {
  const auto r = run(with({"sweep", "--network", "IR 1-1-1", "--iterations", "5", "--seeds", "1", "--out",
                           path("sw")},
                          kToyData));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(dir_ / "sw" / "sweep.json"));
  EXPECT_NE(j.dump().find("C:mpoly-3"), std::string::npos);
  std::istringstream csv(slurp(dir_ / "sw" / "sweep.csv"));
  std::size_t lines = 0;
  for (std::string line; std::getline(csv, line);) ++lines;
  EXPECT_EQ(lines, 20u);
}

}  // namespace
}  // namespace polystack
