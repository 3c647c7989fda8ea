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

// waynav command line. Exit codes: 0 success, 1 error, 2 usage,
// 3 an acceptance gate from [eval] was violated.

#include <CLI11.hpp>

#include "waynav/pipeline.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string out = "out";
  std::vector<std::string> set;
  std::optional<double> threshold;
  std::string metric, form;
  bool quiet = false;
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "Config file")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "Use this value for every seed in the config");
  sub->add_option("--jobs", o.jobs, "Parallel jobs")->check(CLI::PositiveNumber);
  sub->add_option("--out", o.out, "Output directory");
  sub->add_option("--set", o.set, "Override a config key: section.key=value (repeatable)");
  sub->add_flag("--quiet", o.quiet, "Do not echo events to stderr");
}

void add_threshold(CLI::App* sub, Options& o) {
  sub->add_option("--threshold", o.threshold, "Detection threshold (shadows navigator.threshold)")
      ->check(CLI::Range(0.0, 1.0));
}

int exit_for(const waynav::RunContext& ctx, const std::string& stage, const std::vector<waynav::Gate>& gates) {
  waynav::log_gates(ctx, stage, gates);
  for (const auto& g : gates)
    if (!g.passed()) return 3;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace waynav;
  CLI::App app{"waynav: visual waypoint detection and navigation pipeline"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-world", "Generate the world and write world/world.txt"},
      {"collect", "Record labelled laps for every split"},
      {"train-detector", "Two-phase episodic training of the waypoint detector"},
      {"train-controller", "Collect driving data and train the steering controller"},
      {"eval-offline", "Segment accuracy on the test courses"},
      {"eval-online", "Closed-loop evaluation on the test and long courses"},
      {"ablate", "Metric x form x training-regimen grid"},
      {"corrupt-eval", "Offline accuracy under image corruptions"},
      {"reproduce-all", "Run every stage and emit all reports"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub, o);
    subs[name] = sub;
  }
  for (const char* n : {"eval-offline", "eval-online", "corrupt-eval"}) add_threshold(subs[n], o);
  subs["train-detector"]->add_option("--metric", o.metric, "Shadows detector.metric");
  subs["train-detector"]->add_option("--form", o.form, "Shadows detector.form");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::string cmd;
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) cmd = name;
  try {
    std::vector<std::string> overrides = o.set;
    if (o.threshold) overrides.push_back("navigator.threshold=" + fmt_double(*o.threshold));
    if (!o.metric.empty()) overrides.push_back("detector.metric=" + o.metric);
    if (!o.form.empty()) overrides.push_back("detector.form=" + o.form);
    RunContext ctx;
    ctx.config = load_config(o.config, overrides, o.seed);
    ctx.out = o.out;
    ctx.jobs = o.jobs;
    EventLog log(ctx.out / "events.log", !o.quiet);
    ctx.log = &log;
    log.event(cmd, "begin", {{"config", o.config}, {"out", o.out}, {"jobs", std::to_string(o.jobs)}});
    int code = 0;
    if (cmd == "gen-world") stage_gen_world(ctx);
    else if (cmd == "collect") stage_collect(ctx);
    else if (cmd == "train-detector") stage_train_detector(ctx);
    else if (cmd == "train-controller") stage_train_controller(ctx);
    else if (cmd == "eval-offline") code = exit_for(ctx, cmd, {stage_eval_offline(ctx).gate});
    else if (cmd == "eval-online") code = exit_for(ctx, cmd, {stage_eval_online(ctx).gate});
    else if (cmd == "ablate") stage_ablate(ctx);
    else if (cmd == "corrupt-eval") stage_corrupt_eval(ctx);
    else if (cmd == "reproduce-all") code = stage_reproduce_all(ctx).gates_passed() ? 0 : 3;
    log.event(cmd, "end", {{"exit", std::to_string(code)}});
    return code;
  } catch (const Error& e) {
    std::cerr << "waynav " << cmd << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "waynav " << cmd << ": unexpected error: " << e.what() << "\n";
    return 1;
  }
}
