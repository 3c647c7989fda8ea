// Copyright 2026 The waynav Authors. All Rights Reserved.
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

#include <cstdlib>

#include "fixtures.hpp"
#include "waynav/pipeline.hpp"

namespace waynav {
namespace {

const std::string kConfigDir = WAYNAV_CONFIG_DIR;

RunContext context(const std::filesystem::path& out, std::vector<std::string> overrides = {}) {
  RunContext ctx;
  ctx.config = load_config(kConfigDir + "/smoke.cfg", overrides);
  ctx.out = out;
  return ctx;
}

int run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string(WAYNAV_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

TEST(Pipeline, DefaultConfigParses) {
  const PipelineConfig c = load_config(kConfigDir + "/default.cfg");
  EXPECT_EQ(c.seeds.world, 7u);
  EXPECT_EQ(resolved_config(c), resolved_config(parse_config(resolved_config(c))));
}

TEST(Pipeline, TrainWithoutDatasetIsDependencyError) {
  const auto dir = testing::scratch_dir("nodata");
  const RunContext ctx = context(dir);
  stage_gen_world(ctx);
  try {
    stage_train_detector(ctx);
    FAIL() << "expected a dependency error";
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), "dependency");
    EXPECT_NE(std::string(e.what()).find("waynav collect"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, StaleStageIsDependencyError) {
  const auto dir = testing::scratch_dir("stale");
  stage_gen_world(context(dir));
  const RunContext other = context(dir, {"world.landmark_reach=2"});
  try {
    stage_collect(other);
    FAIL() << "expected a dependency error";
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), "dependency");
    EXPECT_NE(std::string(e.what()).find("different configuration"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, CliDependencyErrorAndUsage) {
  const auto dir = testing::scratch_dir("cli");
  const std::string common = "--config " + kConfigDir + "/smoke.cfg --out " + dir.string() + " --quiet";
  EXPECT_EQ(run_cli("gen-world " + common, dir / "a.log"), 0);
  EXPECT_EQ(run_cli("train-detector " + common, dir / "b.log"), 1);
  const std::string err = read_text(dir / "b.log");
  EXPECT_NE(err.find("dataset not found"), std::string::npos) << err;
  EXPECT_EQ(run_cli("no-such-command", dir / "c.log"), 2);
  EXPECT_EQ(run_cli("gen-world --out " + dir.string(), dir / "c2.log"), 2);
  EXPECT_NE(run_cli("gen-world --config " + kConfigDir + "/missing.cfg", dir / "d.log"), 0);
  EXPECT_EQ(run_cli("gen-world " + common + " --set bogus.key=1", dir / "e.log"), 1);
}

TEST(Pipeline, SmokeChainWritesReportsAndEvents) {
  const auto dir = testing::scratch_dir("chain");
  EventLog log(dir / "events.log", false);
  RunContext ctx = context(dir);
  ctx.log = &log;
  const ReproduceResult r = stage_reproduce_all(ctx);
  EXPECT_TRUE(r.gates_passed());
  EXPECT_EQ(r.ablation.size(), 16u);
  for (const char* name : {"offline", "corruption", "ablation", "online", "summary"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "reports" / (std::string(name) + ".csv"))) << name;
    EXPECT_TRUE(std::filesystem::exists(dir / "reports" / (std::string(name) + ".resolved.cfg"))) << name;
    const Report rep = parse_report_csv(read_text(dir / "reports" / (std::string(name) + ".csv")));
    EXPECT_FALSE(rep.cells.empty()) << name;
  }
  const std::string events = read_text(dir / "events.log");
  EXPECT_NE(events.find("stage=train-detector event=validate"), std::string::npos);
  EXPECT_NE(events.find("stage=eval-online event=run"), std::string::npos);
}

TEST(Pipeline, ReportsAreReproducible) {
  const auto a = testing::scratch_dir("rep_a"), b = testing::scratch_dir("rep_b");
  stage_reproduce_all(context(a));
  RunContext cb = context(b);
  cb.jobs = 2;
  stage_reproduce_all(cb);
  for (const auto& e : std::filesystem::directory_iterator(a / "reports"))
    EXPECT_EQ(read_text(e.path()), read_text(b / "reports" / e.path().filename())) << e.path().filename();
}

TEST(Pipeline, ThresholdShadowsConfig) {
  const RunContext ctx = context("unused", {"navigator.threshold=0.7"});
  ASSERT_TRUE(ctx.config.threshold.has_value());
  EXPECT_DOUBLE_EQ(*ctx.config.threshold, 0.7);
}

}  // namespace
}  // namespace waynav
