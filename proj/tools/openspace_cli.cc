/******************************************************************************
 * Copyright 2026 The OpenSpace Planner Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *****************************************************************************/

// Command line front end: plan, bench and check.
//
// Exit codes: 0 success, 1 planning failure, 2 input error.

#include <cstdio>
#include <exception>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "openspace/harness.hpp"
#include "openspace/output.hpp"
#include "openspace/scenario.hpp"

namespace {

using openspace::FormatNumber;

constexpr int kOk = 0;
constexpr int kPlanFailed = 1;
constexpr int kInputError = 2;

const std::map<std::string, openspace::SmoothMode> kModes{
    {"dliaps", openspace::SmoothMode::kDliaps}, {"ces", openspace::SmoothMode::kCes}};

// "x:-8:8:1" -> axis 'x' and its three numbers.
void ParseAxis(const std::string& spec, openspace::GridSpec& grid) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  for (std::size_t next; (next = spec.find(':', pos)) != std::string::npos; pos = next + 1) {
    parts.push_back(spec.substr(pos, next - pos));
  }
  parts.push_back(spec.substr(pos));
  if (parts.size() != 4 || (parts[0] != "x" && parts[0] != "y")) {
    throw openspace::InputError("grid axis '" + spec + "' is not <x|y>:<min>:<max>:<step>");
  }
  double v[3];
  for (int i = 0; i < 3; ++i) {
    std::size_t used = 0;
    try {
      v[i] = std::stod(parts[i + 1], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != parts[i + 1].size()) {
      throw openspace::InputError("grid axis '" + spec + "' has a bad number");
    }
  }
  if (parts[0] == "x") {
    grid.x_min = v[0];
    grid.x_max = v[1];
    grid.x_step = v[2];
  } else {
    grid.y_min = v[0];
    grid.y_max = v[1];
    grid.y_step = v[2];
  }
}

void PrintReport(const openspace::RunReport& r) {
  std::printf("%s: %s", r.scenario.c_str(), r.success ? "success" : "FAILED");
  if (!r.success) std::printf(" at %s (%s)", r.failure_stage.c_str(), r.message.c_str());
  std::printf("\n  search %.3f s, smoothing %.3f s, speed %.3f s, total %.3f s\n",
              r.timings.search, r.timings.smoothing, r.timings.speed, r.timings.total);
  if (r.duration > 0.0) {
    std::printf("  length %.2f m, duration %.2f s, gear switches %d, max |kappa| %.4f\n",
                r.path_length, r.duration, r.gear_switches, r.max_abs_kappa);
  }
}

int RunPlan(const std::string& scenario_path, const std::string& out_dir,
            const std::string& mode, bool traces) {
  const auto sc = openspace::LoadScenario(scenario_path);
  const auto plan = openspace::Plan(sc, kModes.at(mode));
  openspace::Emit(sc, plan, out_dir, traces);
  PrintReport(plan.report);
  return plan.report.success ? kOk : kPlanFailed;
}

int RunBench(const std::string& scenario_path, const std::vector<std::string>& axes,
             double heading, const std::string& mode, int jobs, const std::string& out_dir) {
  const auto sc = openspace::LoadScenario(scenario_path);
  openspace::GridSpec grid;
  grid.heading = heading;
  bool seen_x = false, seen_y = false;
  for (const auto& a : axes) {
    ParseAxis(a, grid);
    (a[0] == 'x' ? seen_x : seen_y) = true;
  }
  if (!seen_x || !seen_y) throw openspace::InputError("--grid needs an x axis and a y axis");
  grid.Validate();
  const auto bench = openspace::BenchGrid(sc, grid, kModes.at(mode), jobs);
  openspace::EmitBench(bench, out_dir, true);

  const int n = static_cast<int>(bench.cases.size());
  std::printf("%s %s: %d/%d cases succeeded\n", sc.name.c_str(), mode.c_str(),
              bench.Successes(), n);
  std::printf("%-10s %10s %10s %10s %10s\n", "stat", "search", "smoothing", "speed", "total");
  const auto search = bench.Stats([](const auto& t) { return t.search; });
  const auto smooth = bench.Stats([](const auto& t) { return t.smoothing; });
  const auto speed = bench.Stats([](const auto& t) { return t.speed; });
  const auto total = bench.Stats([](const auto& t) { return t.total; });
  auto row = [&](const char* name, double openspace::TimingStats::*m) {
    std::printf("%-10s %10.4f %10.4f %10.4f %10.4f\n", name, search.*m, smooth.*m, speed.*m,
                total.*m);
  };
  row("mean", &openspace::TimingStats::mean);
  row("min", &openspace::TimingStats::min);
  row("max", &openspace::TimingStats::max);
  return bench.Successes() == n ? kOk : kPlanFailed;
}

int RunCheck(const std::string& scenario_path) {
  const auto sc = openspace::LoadScenario(scenario_path);
  std::printf("%s: ok (%zu obstacles, start %s %s %s, goal %s %s %s)\n", sc.name.c_str(),
              sc.obstacles.size(), FormatNumber(sc.start.position.x).c_str(),
              FormatNumber(sc.start.position.y).c_str(), FormatNumber(sc.start.heading).c_str(),
              FormatNumber(sc.goal.position.x).c_str(), FormatNumber(sc.goal.position.y).c_str(),
              FormatNumber(sc.goal.heading).c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-space trajectory planner"};
  app.require_subcommand(1);

  std::string scenario, out_dir, mode = "dliaps";
  std::vector<std::string> axes;
  double heading = 0.0;
  int jobs = 1;
  bool traces = false;
  const auto mode_check = CLI::IsMember({"dliaps", "ces"});

  auto* plan = app.add_subcommand("plan", "Plan one scenario and write its files");
  plan->add_option("--scenario", scenario, "Scenario file")->required();
  plan->add_option("--out", out_dir, "Output directory")->required();
  plan->add_option("--mode", mode, "Smoother: dliaps or ces")->check(mode_check);
  plan->add_flag("--trace", traces, "Also write the smoother trace per segment");

  auto* bench = app.add_subcommand("bench", "Plan from every start pose of a grid");
  bench->add_option("--scenario", scenario, "Scenario file")->required();
  bench->add_option("--grid", axes, "x:<min>:<max>:<step> y:<min>:<max>:<step>")
      ->required()
      ->expected(2);
  bench->add_option("--heading", heading, "Start heading [rad]")->required();
  bench->add_option("--mode", mode, "Smoother: dliaps or ces")->check(mode_check);
  bench->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  bench->add_option("--out", out_dir, "Output directory")->default_val("bench_out");

  auto* check = app.add_subcommand("check", "Load and validate a scenario");
  check->add_option("--scenario", scenario, "Scenario file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInputError;
  }

  try {
    if (plan->parsed()) return RunPlan(scenario, out_dir, mode, traces);
    if (bench->parsed()) return RunBench(scenario, axes, heading, mode, jobs, out_dir);
    return RunCheck(scenario);
  } catch (const openspace::InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kInputError;
  } catch (const openspace::IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kInputError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kPlanFailed;
  }
}
