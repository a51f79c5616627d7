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

#include "openspace/harness.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "gtest/gtest.h"
#include "openspace/output.hpp"
#include "openspace/scenario.hpp"

namespace openspace {
namespace {

const std::string kDir = OPENSPACE_SCENARIO_DIR;

Scenario Parse(const std::string& text) {
  std::istringstream in(text);
  return ParseScenario(in, "test.scn");
}

std::string ParseError(const std::string& text) {
  try {
    Parse(text);
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

const char* kMinimal =
    "name tiny\n"
    "bounds box -5 -10 30 10\n"
    "start 0 0 0\n"
    "goal 20 0 0\n";

std::string ReadFile(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::filesystem::path TempDir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("openspace_harness_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

TEST(ScenarioTest, BundledParallelParking) {
  const auto sc = LoadScenario(kDir + "/parallel_parking.scn");
  EXPECT_EQ(sc.name, "parallel_parking");
  EXPECT_EQ(sc.vehicle.wheelbase, 2.8);
  EXPECT_EQ(sc.smoother.delta_s, 0.1);
  EXPECT_EQ(sc.speed.delta_t, 0.05);
  EXPECT_EQ(sc.obstacles.size(), 2u);
  EXPECT_EQ(sc.start, Pose(-6, 2.5, 0));
}

TEST(ScenarioTest, DefaultsApply) {
  const auto sc = Parse(kMinimal);
  EXPECT_EQ(sc.search, SearchConfig{});
  EXPECT_EQ(sc.smoother, SmootherConfig{});
  EXPECT_EQ(sc.speed, SpeedConfig{});
  EXPECT_TRUE(sc.obstacles.empty());
}

TEST(ScenarioTest, CommentsAndBlankLines) {
  const auto sc = Parse(std::string("# header\n\n") + kMinimal + "speed.v_max 1.5  # slower\n");
  EXPECT_EQ(sc.speed.v_max, 1.5);
}

TEST(ScenarioTest, RoundTrip) {
  for (const char* file : {"parallel_parking.scn", "pullover_5.scn", "straight.scn"}) {
    const auto sc = LoadScenario(kDir + "/" + file);
    std::ostringstream os;
    WriteScenario(os, sc);
    const auto again = Parse(os.str());
    EXPECT_EQ(again, sc) << file;
    std::ostringstream os2;
    WriteScenario(os2, again);
    EXPECT_EQ(os2.str(), os.str()) << file;
  }
}

TEST(ScenarioTest, RoundTripKeepsOddValues) {
  auto sc = Parse(kMinimal);
  sc.smoother.c_tol = 1.0 / 3.0;
  sc.search.max_expansions = 12345;
  sc.obstacles.push_back(ConvexPolygon({{10, 5}, {10.1, 5.3}, {9.7, 5.2}}));
  std::ostringstream os;
  WriteScenario(os, sc);
  EXPECT_EQ(Parse(os.str()), sc);
}

TEST(ScenarioTest, TwoVertexObstacleNamesTheObstacle) {
  const auto msg = ParseError(std::string(kMinimal) +
                              "obstacle box 10 5 11 6\nobstacle polygon 0 5 1 5\n");
  EXPECT_NE(msg.find("test.scn:6"), std::string::npos) << msg;
  EXPECT_NE(msg.find("obstacle 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("at least 3 vertices"), std::string::npos) << msg;
}

TEST(ScenarioTest, StartInCollision) {
  const auto msg = ParseError(std::string(kMinimal) + "obstacle box -1 -1 1 1\n");
  EXPECT_NE(msg.find("start in collision"), std::string::npos) << msg;
}

TEST(ScenarioTest, GoalOutsideBounds) {
  const auto msg = ParseError("name a\nbounds box -5 -10 30 10\nstart 0 0 0\ngoal 29 0 0\n");
  EXPECT_NE(msg.find("goal in collision"), std::string::npos) << msg;
}

TEST(ScenarioTest, StrictParsing) {
  EXPECT_NE(ParseError(std::string(kMinimal) + "speed.vmax 2\n").find("unknown field 'speed.vmax'"),
            std::string::npos);
  EXPECT_NE(ParseError(std::string(kMinimal) + "speed.v_max 2\nspeed.v_max 3\n").find("repeated"),
            std::string::npos);
  EXPECT_NE(ParseError(std::string(kMinimal) + "speed.v_max fast\n").find("speed.v_max"),
            std::string::npos);
  EXPECT_NE(ParseError(std::string(kMinimal) + "speed.v_max 2 3\n").find("one value"),
            std::string::npos);
  EXPECT_NE(ParseError(std::string(kMinimal) + "search.max_expansions 1.5\n").find("integer"),
            std::string::npos);
  EXPECT_NE(ParseError(std::string(kMinimal) + "speed.v_max nan\n").find("finite"),
            std::string::npos);
  EXPECT_NE(ParseError("name a\nstart 0 0 0\ngoal 1 0 0\n").find("'bounds'"), std::string::npos);
  EXPECT_NE(ParseError(std::string(kMinimal) + "obstacle circle 1 2 3\n").find("unknown shape"),
            std::string::npos);
  EXPECT_NE(ParseError(std::string(kMinimal) + "speed.v_max -1\n").find("speed.v_max"),
            std::string::npos);
}

TEST(ScenarioTest, MissingFile) {
  EXPECT_THROW(LoadScenario(kDir + "/does_not_exist.scn"), InputError);
}

TEST(GridTest, PaperGridHas85Poses) {
  GridSpec g{-8, 8, 1.0, 2, 4, 0.5, 0.0};
  const auto poses = g.Poses();
  ASSERT_EQ(poses.size(), 85u);
  EXPECT_EQ(poses.front(), Pose(-8, 2, 0));
  EXPECT_EQ(poses[1], Pose(-8, 2.5, 0));
  EXPECT_EQ(poses.back(), Pose(8, 4, 0));
}

TEST(GridTest, Invalid) {
  EXPECT_THROW((GridSpec{0, 1, 0.0, 0, 1, 1, 0}).Poses(), InputError);
  EXPECT_THROW((GridSpec{1, 0, 1, 0, 1, 1, 0}).Poses(), InputError);
  EXPECT_EQ((GridSpec{0, 0, 1, 0, 0, 1, 0}).Poses().size(), 1u);
}

TEST(PlanTest, StraightLine) {
  const auto sc = LoadScenario(kDir + "/straight.scn");
  const auto plan = Plan(sc);
  ASSERT_TRUE(plan.report.success) << plan.report.message;
  const double straight = Distance(sc.start.position, sc.goal.position);
  EXPECT_NEAR(plan.report.path_length, straight, 0.01 * straight);
  EXPECT_EQ(plan.report.gear_switches, 0);
  EXPECT_GE(plan.report.timings.search, 0.0);
  EXPECT_NEAR(plan.report.timings.total,
              plan.report.timings.search + plan.report.timings.smoothing +
                  plan.report.timings.speed,
              1e-12);
  EXPECT_LT(Distance(plan.trajectory.points.back().pose.position, sc.goal.position), 1e-6);
}

TEST(PlanTest, ParallelParking) {
  const auto sc = LoadScenario(kDir + "/parallel_parking.scn");
  const auto plan = Plan(sc);
  ASSERT_TRUE(plan.report.success) << plan.report.message;
  EXPECT_GE(plan.report.gear_switches, 1);
  ASSERT_TRUE(plan.validation.has_value());
  EXPECT_TRUE(plan.validation->Passed());
  EXPECT_LE(plan.report.max_abs_kappa, 0.2 + 1e-3);
  EXPECT_LE(plan.report.max_boundary_speed, 0.05);
}

TEST(PlanTest, UnreachableGoalFailsAtSearch) {
  auto sc = Parse(std::string(kMinimal) + "obstacle box 10 -10 11 10\nsearch.max_expansions 3000\n");
  const auto plan = Plan(sc);
  EXPECT_FALSE(plan.report.success);
  EXPECT_EQ(plan.report.failure_stage, "search");
  EXPECT_TRUE(plan.trajectory.points.empty());
}

TEST(PlanTest, StartEqualsGoal) {
  auto sc = Parse("name a\nbounds box -5 -10 30 10\nstart 0 0 0\ngoal 0 0 0\n");
  const auto plan = Plan(sc);
  ASSERT_TRUE(plan.report.success) << plan.report.message;
  EXPECT_EQ(plan.trajectory.points.size(), 1u);
}

TEST(BenchTest, SingleCaseMatchesPlan) {
  const auto sc = LoadScenario(kDir + "/straight.scn");
  GridSpec g{sc.start.position.x, sc.start.position.x, 1.0, sc.start.position.y,
             sc.start.position.y, 1.0, sc.start.heading};
  const auto bench = BenchGrid(sc, g);
  ASSERT_EQ(bench.cases.size(), 1u);
  const auto single = Plan(sc);
  const auto& r = bench.cases[0].result.report;
  EXPECT_EQ(r.success, single.report.success);
  EXPECT_EQ(r.max_abs_kappa, single.report.max_abs_kappa);
  EXPECT_EQ(r.duration, single.report.duration);
  const auto total = bench.Stats([](const StageTimings& t) { return t.total; });
  EXPECT_EQ(total.min, r.timings.total);
  EXPECT_EQ(total.max, r.timings.total);
  EXPECT_DOUBLE_EQ(total.mean, r.timings.total);
}

TEST(BenchTest, ThreadedMatchesSerial) {
  const auto sc = LoadScenario(kDir + "/straight.scn");
  GridSpec g{0, 1, 1.0, -1, 1, 1.0, 0.0};
  const auto serial = BenchGrid(sc, g, SmoothMode::kDliaps, 1);
  const auto threaded = BenchGrid(sc, g, SmoothMode::kDliaps, 3);
  ASSERT_EQ(serial.cases.size(), 6u);
  std::ostringstream a, b;
  WriteBenchCsv(a, serial);
  WriteBenchCsv(b, threaded);
  EXPECT_EQ(a.str(), b.str());
}

TEST(BenchTest, StatsOrdering) {
  const auto sc = LoadScenario(kDir + "/straight.scn");
  GridSpec g{0, 2, 1.0, 0, 0, 1.0, 0.0};
  const auto bench = BenchGrid(sc, g);
  for (auto get : {+[](const StageTimings& t) { return t.search; },
                   +[](const StageTimings& t) { return t.smoothing; },
                   +[](const StageTimings& t) { return t.speed; },
                   +[](const StageTimings& t) { return t.total; }}) {
    const auto s = bench.Stats(get);
    EXPECT_LE(s.min, s.mean);
    EXPECT_LE(s.mean, s.max);
  }
}

TEST(EmitTest, FilesAndDeterminism) {
  const auto sc = LoadScenario(kDir + "/parallel_parking.scn");
  const auto plan = Plan(sc);
  ASSERT_TRUE(plan.report.success);
  const auto dir = TempDir("emit");
  Emit(sc, plan, dir);
  for (const char* f : {"trajectory.csv", "report.csv", "path.svg", "profile.svg"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  const auto csv = ReadFile(dir / "trajectory.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,x,y,theta,kappa,v,a,jerk,gear");
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')),
            plan.trajectory.points.size() + 1);
  const auto report = ReadFile(dir / "report.csv");
  EXPECT_EQ(std::count(report.begin(), report.end(), '\n'), 2);
  EXPECT_NE(ReadFile(dir / "path.svg").find("</svg>"), std::string::npos);

  const auto again = TempDir("emit_again");
  Emit(sc, plan, again);
  for (const char* f : {"trajectory.csv", "report.csv", "path.svg", "profile.svg"}) {
    EXPECT_EQ(ReadFile(dir / f), ReadFile(again / f)) << f;
  }
}

TEST(EmitTest, Traces) {
  const auto sc = LoadScenario(kDir + "/straight.scn");
  const auto plan = Plan(sc);
  ASSERT_TRUE(plan.report.success);
  const auto dir = TempDir("emit_trace");
  Emit(sc, plan, dir, true);
  ASSERT_FALSE(plan.smoothed.empty());
  for (std::size_t k = 0; k < plan.smoothed.size(); ++k) {
    const auto trace = ReadFile(dir / ("trace_" + std::to_string(k) + ".csv"));
    EXPECT_EQ(trace.substr(0, trace.find('\n')),
              "collision,penalty,subproblem,trust,mu,t,merit,candidate_merit,max_g,accepted");
    EXPECT_EQ(static_cast<std::size_t>(std::count(trace.begin(), trace.end(), '\n')),
              plan.smoothed[k].trace.size() + 1);
  }
  EXPECT_FALSE(std::filesystem::exists(dir / ("trace_" + std::to_string(plan.smoothed.size()) +
                                              ".csv")));
}

TEST(EmitTest, UnwritableDirectory) {
  const auto sc = LoadScenario(kDir + "/straight.scn");
  const auto plan = Plan(sc);
  const auto file = TempDir("blocker");
  std::ofstream(file.string()) << "x";
  EXPECT_THROW(Emit(sc, plan, file / "sub"), IoError);
}

TEST(FormatTest, NineSignificantDigits) {
  EXPECT_EQ(FormatNumber(0.1), "0.1");
  EXPECT_EQ(FormatNumber(1.0 / 3.0), "0.333333333");
  EXPECT_EQ(FormatNumber(-0.0), "0");
  EXPECT_EQ(FormatNumber(123456789012.0), "1.23456789e+11");
  EXPECT_EQ(CsvQuote("a,b"), "\"a,b\"");
}

}  // namespace
}  // namespace openspace
