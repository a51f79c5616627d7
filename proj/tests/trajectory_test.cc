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

#include "openspace/trajectory.hpp"

#include <numbers>

#include "gtest/gtest.h"

namespace openspace {
namespace {

SmoothResult Line(Point2 from, Point2 to, int n, Gear gear) {
  SmoothResult r;
  r.gear = gear;
  for (int i = 0; i <= n; ++i) {
    const double u = static_cast<double>(i) / n;
    r.points.push_back(from + u * (to - from));
  }
  r.headings = PathHeadings(r.points, gear);
  return r;
}

PathSegment Straight(double length, Gear gear = Gear::kForward) {
  const auto r = Line({0.0, 0.0}, {length, 0.0}, static_cast<int>(length * 10), gear);
  return MakePathSegment(r.points, r.headings, gear);
}

// Constant speed v over n steps, ignoring the rest constraints.
SpeedProfile Uniform(double v, int n, double dt) {
  SpeedProfile p;
  p.n = n;
  p.delta_t = dt;
  for (int k = 0; k < n; ++k) {
    p.s.push_back(v * k * dt);
    p.s_dot.push_back(v);
    p.s_ddot.push_back(0.0);
  }
  return p;
}

std::vector<TrajectoryPoint> Resting(double t0, double duration, Gear gear) {
  std::vector<TrajectoryPoint> pts(static_cast<std::size_t>(duration / 0.05) + 1);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    pts[k].t = t0 + static_cast<double>(k) * 0.05;
    pts[k].gear = gear;
  }
  return pts;
}

TEST(SplitGearsTest, AllForwardIsOneSegment) {
  const std::vector<SmoothResult> in{Line({0, 0}, {5, 0}, 50, Gear::kForward)};
  const auto segs = SplitGears(in);
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_NEAR(segs[0].Length(), 5.0, 1e-12);
  EXPECT_EQ(segs[0].cumulative_s.front(), 0.0);
  for (std::size_t i = 1; i < segs[0].cumulative_s.size(); ++i) {
    EXPECT_GT(segs[0].cumulative_s[i], segs[0].cumulative_s[i - 1]);
  }
}

TEST(SplitGearsTest, ThreeGearRuns) {
  const std::vector<SmoothResult> in{Line({0, 0}, {5, 0}, 50, Gear::kForward),
                                     Line({5, 0}, {2, 0}, 30, Gear::kBackward),
                                     Line({2, 0}, {4, 0}, 20, Gear::kForward)};
  const auto segs = SplitGears(in);
  ASSERT_EQ(segs.size(), 3u);
  EXPECT_EQ(segs[1].gear, Gear::kBackward);
  EXPECT_EQ(segs[1].points.front(), (Point2{5, 0}));
  EXPECT_NEAR(segs[1].Length(), 3.0, 1e-12);
}

TEST(SplitGearsTest, SameGearRunsMerge) {
  const std::vector<SmoothResult> in{Line({0, 0}, {1, 0}, 10, Gear::kForward),
                                     Line({1, 0}, {2, 0}, 10, Gear::kForward)};
  const auto segs = SplitGears(in);
  ASSERT_EQ(segs.size(), 1u);
  // The shared point appears once.
  EXPECT_EQ(segs[0].points.size(), 21u);
}

TEST(SplitGearsTest, TwoPointSegmentHasZeroCurvature) {
  const std::vector<SmoothResult> in{Line({0, 0}, {0.2, 0.1}, 1, Gear::kForward)};
  const auto segs = SplitGears(in);
  ASSERT_EQ(segs[0].points.size(), 2u);
  EXPECT_EQ(segs[0].curvatures, (std::vector<double>{0.0, 0.0}));
}

TEST(SplitGearsTest, CurvatureOfCircle) {
  SmoothResult r;
  for (int i = 0; i <= 40; ++i) r.points.push_back(5.0 * UnitVector(0.02 * i));
  r.headings = PathHeadings(r.points, Gear::kForward);
  const std::vector<SmoothResult> in{r};
  const auto segs = SplitGears(in);
  for (double k : segs[0].curvatures) EXPECT_NEAR(k, 0.2, 1e-6);
}

TEST(SplitGearsTest, Empty) {
  EXPECT_THROW(SplitGears(std::vector<SmoothResult>{}), InputError);
}

TEST(CombineTest, StraightLineFollowsProfile) {
  const auto seg = Straight(10.0);
  const auto pts = Combine(seg, Uniform(2.0, 101, 0.05));
  ASSERT_EQ(pts.size(), 101u);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    EXPECT_NEAR(pts[k].pose.position.x, 0.1 * k, 1e-12);
    EXPECT_NEAR(pts[k].pose.position.y, 0.0, 1e-12);
    EXPECT_EQ(pts[k].v, 2.0);
    EXPECT_EQ(pts[k].t, 0.05 * static_cast<double>(k));
  }
}

TEST(CombineTest, VertexIsReturnedExactly) {
  SmoothResult r;
  r.points = {{0, 0}, {1, 0.5}, {2.5, 0.5}};
  r.headings = PathHeadings(r.points, Gear::kForward);
  const auto seg = MakePathSegment(r.points, r.headings, Gear::kForward);
  SpeedProfile p;
  p.delta_t = 0.1;
  p.s = {0.0, seg.cumulative_s[1], seg.Length()};
  p.s_dot = {0.0, 1.0, 0.0};
  p.s_ddot = {0.0, 0.0, 0.0};
  p.n = 3;
  const auto pts = Combine(seg, p);
  EXPECT_EQ(pts[1].pose.position, r.points[1]);
  EXPECT_EQ(pts[1].pose.heading, r.headings[1]);
  EXPECT_EQ(pts[2].pose.position, r.points[2]);
}

TEST(CombineTest, BackwardSegmentHasNegativeSpeed) {
  const std::vector<SmoothResult> in{Line({4, 0}, {0, 0}, 40, Gear::kBackward)};
  const auto seg = SplitGears(in)[0];
  const auto pts = Combine(seg, Uniform(1.0, 81, 0.05));
  EXPECT_EQ(pts[10].v, -1.0);
  EXPECT_NEAR(pts[10].pose.position.x, 3.5, 1e-12);
  EXPECT_NEAR(pts[10].pose.heading, 0.0, 1e-12);
}

TEST(CombineTest, JerkAndOffset) {
  const auto seg = Straight(1.0);
  SpeedProfile p;
  p.delta_t = 0.5;
  p.s = {0.0, 0.5, 1.0};
  p.s_dot = {0.0, 0.0, 0.0};
  p.s_ddot = {0.0, 0.25, 0.5};
  p.n = 3;
  const auto pts = Combine(seg, p, 3.0);
  EXPECT_EQ(pts[0].t, 3.0);
  EXPECT_EQ(pts[2].t, 4.0);
  EXPECT_DOUBLE_EQ(pts[0].jerk, 0.5);
  EXPECT_EQ(pts[2].jerk, 0.0);
}

TEST(CombineTest, ProfileBeyondSegmentIsAContractError) {
  const auto seg = Straight(1.0);
  EXPECT_THROW(Combine(seg, Uniform(1.0, 23, 0.05)), ContractError);
}

TEST(CombineTest, ArcLengthIsPreserved) {
  SmoothResult r;
  for (int i = 0; i <= 60; ++i) r.points.push_back(5.0 * UnitVector(0.02 * i));
  r.headings = PathHeadings(r.points, Gear::kForward);
  const auto seg = MakePathSegment(r.points, r.headings, Gear::kForward);
  SegmentSpec spec{seg.Length(), seg.MaxAbsCurvature(), Gear::kForward};
  const auto profile = OptimizeSegment(spec, SpeedConfig{});
  const auto pts = Combine(seg, profile);
  const double bound = 1e-6 + 0.1 * 0.1 * 0.2;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const double chord = Distance(pts[k].pose.position, pts[k + 1].pose.position);
    EXPECT_NEAR(chord, std::abs(profile.s[k + 1] - profile.s[k]), bound);
  }
}

TEST(StitchTest, DurationsAdd) {
  const std::vector<std::vector<TrajectoryPoint>> segs{Resting(0.0, 5.0, Gear::kForward),
                                                       Resting(0.0, 3.0, Gear::kBackward)};
  const auto traj = Stitch(segs);
  EXPECT_NEAR(traj.Duration(), 8.0, 1e-9);
  ASSERT_EQ(traj.segment_boundaries.size(), 1u);
  EXPECT_EQ(traj.points.size(), segs[0].size() + segs[1].size() - 1);
  EXPECT_EQ(traj.points[traj.segment_boundaries[0]].gear, Gear::kBackward);
  for (std::size_t k = 0; k + 1 < traj.points.size(); ++k) {
    EXPECT_LT(traj.points[k].t, traj.points[k + 1].t);
  }
}

TEST(StitchTest, AlignedSegmentsKeepTheirTimes) {
  const std::vector<std::vector<TrajectoryPoint>> segs{Resting(0.0, 1.0, Gear::kForward),
                                                       Resting(1.0, 1.0, Gear::kBackward)};
  const auto traj = Stitch(segs);
  for (std::size_t k = 0; k < segs[1].size(); ++k) {
    EXPECT_EQ(traj.points[traj.segment_boundaries[0] + k].t, segs[1][k].t);
  }
}

TEST(StitchTest, SingleSegmentIsIdentity) {
  const std::vector<std::vector<TrajectoryPoint>> segs{Resting(0.0, 2.0, Gear::kForward)};
  const auto traj = Stitch(segs);
  EXPECT_EQ(traj.points.size(), segs[0].size());
  EXPECT_TRUE(traj.segment_boundaries.empty());
}

TEST(StitchTest, MovingBoundaryIsAContractError) {
  std::vector<std::vector<TrajectoryPoint>> segs{Resting(0.0, 1.0, Gear::kForward),
                                                 Resting(0.0, 1.0, Gear::kBackward)};
  segs[0].back().v = 0.2;
  EXPECT_THROW(Stitch(segs), ContractError);
}

class ValidateTest : public ::testing::Test {
 protected:
  VehicleParams vehicle;
  ConvexPolygon bounds = ConvexPolygon::Box(-20, -10, 20, 10);
  std::vector<ConvexPolygon> obstacles;
  TrajectoryLimits limits;
};

TEST_F(ValidateTest, SinglePointAtRestPasses) {
  Trajectory traj;
  traj.points.resize(1);
  const auto r = Validate(traj, vehicle, obstacles, bounds, limits);
  EXPECT_TRUE(r.Passed());
  EXPECT_EQ(r.max_abs_kappa, 0.0);
  EXPECT_NEAR(r.min_clearance, 9.0, 1e-12);
}

TEST_F(ValidateTest, CurvatureViolationIsFlagged) {
  Trajectory traj;
  traj.points = Resting(0.0, 1.0, Gear::kForward);
  traj.points[5].kappa = 0.25;
  const auto r = Validate(traj, vehicle, obstacles, bounds, limits);
  EXPECT_FALSE(r.kappa_ok);
  EXPECT_FALSE(r.Passed());
  EXPECT_EQ(r.max_abs_kappa, 0.25);
}

TEST_F(ValidateTest, SpeedSignAndLimits) {
  Trajectory traj;
  traj.points = Resting(0.0, 1.0, Gear::kBackward);
  traj.points[3].v = -1.0;
  EXPECT_TRUE(Validate(traj, vehicle, obstacles, bounds, limits).v_ok);
  traj.points[3].v = -1.1;
  EXPECT_FALSE(Validate(traj, vehicle, obstacles, bounds, limits).v_ok);
  traj.points[3].v = 0.5;
  EXPECT_FALSE(Validate(traj, vehicle, obstacles, bounds, limits).v_ok);
}

TEST_F(ValidateTest, BoundarySpeedIsChecked) {
  const std::vector<std::vector<TrajectoryPoint>> segs{Resting(0.0, 1.0, Gear::kForward),
                                                       Resting(1.0, 1.0, Gear::kBackward)};
  auto traj = Stitch(segs);
  traj.points.back().v = -0.1;
  const auto r = Validate(traj, vehicle, obstacles, bounds, limits);
  EXPECT_FALSE(r.stop_ok);
  EXPECT_NEAR(r.max_boundary_speed, 0.1, 1e-15);
}

TEST_F(ValidateTest, MidpointCollisionIsCaught) {
  // A thin wall between two samples 2 m apart: both samples are free, the
  // midpoint footprint overlaps the wall.
  obstacles.push_back(ConvexPolygon::Box(5.0, 1.05, 5.1, 3.0));
  Trajectory traj;
  traj.points.resize(2);
  traj.points[0].pose = Pose(-0.2, 0.0, 0.0);
  traj.points[1].pose = Pose(6.3, 0.0, 0.0);
  traj.points[1].t = 1.0;
  auto r = Validate(traj, vehicle, obstacles, bounds, limits);
  EXPECT_FALSE(r.collision);
  obstacles[0] = ConvexPolygon::Box(5.0, 0.5, 5.1, 3.0);
  r = Validate(traj, vehicle, obstacles, bounds, limits);
  EXPECT_TRUE(PoseIsFree(traj.points[0].pose, vehicle, obstacles, bounds));
  EXPECT_TRUE(PoseIsFree(traj.points[1].pose, vehicle, obstacles, bounds));
  EXPECT_TRUE(r.collision);
  EXPECT_EQ(r.first_collision, 0u);
  EXPECT_FALSE(r.Passed());
}

TEST_F(ValidateTest, NonIncreasingTimeFails) {
  Trajectory traj;
  traj.points.resize(2);
  EXPECT_FALSE(Validate(traj, vehicle, obstacles, bounds, limits).time_ok);
}

TEST(FootprintClearanceTest, AgainstBoxes) {
  const VehicleParams vehicle;
  const auto bounds = ConvexPolygon::Box(-20, -10, 20, 10);
  // Footprint spans x in [-1, 3.7], y in [-1, 1].
  const std::vector<ConvexPolygon> obstacles{ConvexPolygon::Box(5.0, -1.0, 6.0, 1.0)};
  EXPECT_NEAR(FootprintClearance(Pose(0, 0, 0), vehicle, obstacles, bounds), 1.3, 1e-12);
  EXPECT_EQ(FootprintClearance(Pose(1.5, 0, 0), vehicle, obstacles, bounds), 0.0);
  const std::vector<ConvexPolygon> none;
  EXPECT_NEAR(FootprintClearance(Pose(0, 8.5, 0), vehicle, none, bounds), 0.5, 1e-12);
  EXPECT_EQ(FootprintClearance(Pose(0, 9.5, 0), vehicle, none, bounds), 0.0);
}

TEST(FootprintClearanceTest, ObstacleVertexInsideEdgeSpan) {
  const VehicleParams vehicle;
  const auto bounds = ConvexPolygon::Box(-20, -10, 20, 10);
  // Diamond whose lowest vertex sits 0.4 m above the long side of the car.
  const std::vector<ConvexPolygon> obstacles{
      ConvexPolygon({{1.0, 1.4}, {2.0, 2.4}, {1.0, 3.4}, {0.0, 2.4}})};
  EXPECT_NEAR(FootprintClearance(Pose(0, 0, 0), vehicle, obstacles, bounds), 0.4, 1e-12);
}

}  // namespace
}  // namespace openspace
