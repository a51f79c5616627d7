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

#include "openspace/dliaps.hpp"

#include <numbers>
#include <random>
#include <sstream>

#include "gtest/gtest.h"

namespace openspace {
namespace {

constexpr double kPi = std::numbers::pi;

struct ParkingWorld {
  ConvexPolygon bounds = ConvexPolygon::Box(-13, -3, 13, 7);
  std::vector<ConvexPolygon> obstacles{ConvexPolygon::Box(-13, -3, -4, -0.5),
                                       ConvexPolygon::Box(4, -3, 13, -0.5)};
  Pose goal{-1.35, -1.75, 0.0};
};

SearchConfig ParkingSearch() {
  SearchConfig cfg;
  cfg.max_steering = std::atan(2.8 * 0.18);
  return cfg;
}

std::vector<Point2> Line(int n, double spacing) {
  std::vector<Point2> p;
  for (int i = 0; i < n; ++i) p.push_back({i * spacing, 0.0});
  return p;
}

std::vector<Bubble> OpenBubbles(std::span<const Point2> p, double radius) {
  std::vector<Bubble> b(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    b[k].center = p[k];
    b[k].radius = (k < 2 || k + 2 >= p.size()) ? 0.0 : radius;
  }
  return b;
}

double MaxAbsMenger(std::span<const Point2> p) {
  double worst = 0.0;
  for (std::size_t k = 1; k + 1 < p.size(); ++k) {
    worst = std::max(worst, std::abs(MengerCurvature(p[k - 1], p[k], p[k + 1])));
  }
  return worst;
}

TEST(ResampleTest, StraightSegments) {
  const std::vector<Point2> one{{0, 0}, {1, 0}};
  const auto a = Resample(one, 0.1);
  ASSERT_TRUE(a.has_value());
  ASSERT_EQ(a->size(), 11u);
  for (int i = 0; i < 11; ++i) EXPECT_NEAR((*a)[i].x, 0.1 * i, 1e-12);
  EXPECT_EQ(a->front(), one.front());
  EXPECT_EQ(a->back(), one.back());

  const std::vector<Point2> two{{0, 0}, {0.7, 0}, {2, 0}};
  const auto b = Resample(two, 0.1);
  ASSERT_TRUE(b.has_value());
  EXPECT_EQ(b->size(), 21u);
}

TEST(ResampleTest, TooShort) {
  const std::vector<Point2> p{{0, 0}, {0.3, 0}};
  EXPECT_FALSE(Resample(p, 0.1).has_value());
  const std::vector<Point2> q{{0, 0}, {0.4, 0}};
  EXPECT_TRUE(Resample(q, 0.1).has_value());
}

TEST(ResampleTest, UniformAlongCorner) {
  const std::vector<Point2> p{{0, 0}, {1.03, 0}, {1.03, 0.77}};
  const auto r = Resample(p, 0.1);
  ASSERT_TRUE(r.has_value());
  const double h = 1.8 / 18;
  ASSERT_EQ(r->size(), 19u);
  double s = 0.0;
  for (std::size_t i = 0; i < r->size(); ++i) {
    const Point2 q = (*r)[i];
    // On the polyline, at arc length i * h.
    const double along = q.y == 0.0 ? q.x : 1.03 + q.y;
    EXPECT_NEAR(along, i * h, 1e-12);
    if (i > 0) s += Distance((*r)[i - 1], q);
  }
  EXPECT_EQ(r->back(), p.back());
}

TEST(InitBubblesTest, OpenSpaceIsCapped) {
  const auto bounds = ConvexPolygon::Box(-10, -10, 10, 10);
  const auto pts = Line(8, 0.1);
  SmootherConfig cfg;
  cfg.bubble_max = 1.0;
  const auto b = InitBubbles(pts, {}, bounds, cfg);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    EXPECT_EQ(b[k].center, pts[k]);
    if (k < 2 || k + 2 >= pts.size()) {
      EXPECT_EQ(b[k].radius, 0.0);
    } else {
      EXPECT_EQ(b[k].radius, 1.0);
    }
  }
}

TEST(InitBubblesTest, MarginAndFloor) {
  const auto bounds = ConvexPolygon::Box(-10, -10, 10, 10);
  // Clearance 0.4 at the middle point.
  std::vector<ConvexPolygon> obstacles{ConvexPolygon::Box(-1, 0.4, 1, 1)};
  const auto pts = Line(5, 0.1);
  std::vector<Point2> shifted;
  for (auto p : pts) shifted.push_back({p.x - 0.2, 0.0});
  SmootherConfig cfg;
  cfg.bubble_margin = 0.3;
  cfg.bubble_min = 0.05;
  cfg.bubble_max = 1.0;
  auto b = InitBubbles(shifted, obstacles, bounds, cfg);
  EXPECT_NEAR(b[2].radius, 0.1, 1e-12);
  cfg.bubble_margin = 0.39;
  b = InitBubbles(shifted, obstacles, bounds, cfg);
  EXPECT_NEAR(b[2].radius, 0.05, 1e-12);
}

TEST(CurvatureConstraintTest, Examples) {
  EXPECT_NEAR(CurvatureConstraintEval({0, 0}, {1, 0}, {2, 0}, 5.0).value, -0.04, 1e-15);
  EXPECT_NEAR(CurvatureConstraintEval({0, 0}, {1, 0}, {1, 1}, 5.0).value, 1.96, 1e-15);
}

TEST(CurvatureConstraintTest, GradientMatchesFiniteDifferences) {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const double h = 1e-6;
  for (int trial = 0; trial < 1000; ++trial) {
    std::array<double, 6> x;
    for (double& v : x) v = u(rng);
    auto eval = [](const std::array<double, 6>& c) {
      return CurvatureConstraintEval({c[0], c[1]}, {c[2], c[3]}, {c[4], c[5]}, 5.0);
    };
    const auto e = eval(x);
    for (int j = 0; j < 6; ++j) {
      auto xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const double fd = (eval(xp).value - eval(xm).value) / (2 * h);
      const double scale = std::max(1.0, std::abs(e.gradient[j]));
      EXPECT_LE(std::abs(fd - e.gradient[j]) / scale, 1e-4) << trial << " " << j;
    }
  }
}

struct SubproblemFixture {
  SmoothState state;
  double r_min = 5.0;

  explicit SubproblemFixture(int n, double radius, std::mt19937* rng = nullptr) {
    state.points = Line(n, 0.1);
    if (rng != nullptr) {
      std::uniform_real_distribution<double> jitter(-0.01, 0.01);
      for (int k = 2; k + 2 < n; ++k) state.points[k].y += jitter(*rng);
    }
    state.bubbles = OpenBubbles(state.points, radius);
    state.mu = 10.0;
    state.t = 0.5;
  }
};

TEST(SubproblemTest, StraightLineIsFixedPoint) {
  SubproblemFixture f(5, 0.3);
  const auto prob = BuildSubproblem(f.state, f.state.points, f.r_min);
  const auto sol = SolveQp(prob);
  ASSERT_EQ(sol.status, QpStatus::kSolved);
  for (int i = 0; i < 10; ++i) EXPECT_NEAR(sol.primal[i], 0.0, 1e-7);
  EXPECT_NEAR(sol.objective, 0.0, 1e-9);
}

TEST(SubproblemTest, InscribedBoxHalfWidth) {
  SubproblemFixture f(7, 0.2);
  const auto prob = BuildSubproblem(f.state, f.state.points, f.r_min);
  for (int k = 2; k < 5; ++k) {
    for (int c = 0; c < 2; ++c) {
      EXPECT_NEAR(prob.upper[2 * k + c], 0.2 / std::sqrt(2.0), 1e-12);
      EXPECT_NEAR(prob.lower[2 * k + c], -0.2 / std::sqrt(2.0), 1e-12);
    }
  }
  // Pinned points cannot move.
  for (int i : {0, 1, 2, 3, 10, 11, 12, 13}) {
    EXPECT_EQ(prob.lower[i], 0.0);
    EXPECT_EQ(prob.upper[i], 0.0);
  }
  // A trust radius below the half-width takes over.
  f.state.t = 0.05;
  const auto tight = BuildSubproblem(f.state, f.state.points, f.r_min);
  EXPECT_NEAR(tight.upper[4], 0.05, 1e-12);
}

TEST(SubproblemTest, DoublingMuDoublesSlackCostOnly) {
  SubproblemFixture f(9, 0.3);
  const auto a = BuildSubproblem(f.state, f.state.points, f.r_min);
  f.state.mu *= 2.0;
  const auto b = BuildSubproblem(f.state, f.state.points, f.r_min);
  const int n = 9;
  const int slack0 = 2 * n + 2 * (n - 2);
  for (int i = 0; i < a.n_vars; ++i) {
    if (i >= slack0) {
      EXPECT_DOUBLE_EQ(b.linear_cost[i], 2.0 * a.linear_cost[i]);
      EXPECT_GT(a.linear_cost[i], 0.0);
    } else {
      EXPECT_EQ(b.linear_cost[i], a.linear_cost[i]);
    }
  }
  EXPECT_EQ(Eigen::MatrixXd(a.quadratic_cost), Eigen::MatrixXd(b.quadratic_cost));
}

// Plugs a displacement into the lifted rows and checks cost and curvature rows
// against the unlifted quantities.
TEST(SubproblemTest, LiftedRowsMatchLinearization) {
  std::mt19937 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    SubproblemFixture f(10, 0.3, &rng);
    const int n = 10;
    const auto& prev = f.state.points;
    const auto prob = BuildSubproblem(f.state, prev, f.r_min);
    const double d = Distance(prev[0], prev[1]);
    const double gain = f.r_min / (d * d);
    const double scale = gain * gain;

    std::uniform_real_distribution<double> small(-1e-3, 1e-3);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(prob.n_vars);
    std::vector<Point2> moved = prev;
    for (int k = 2; k + 2 < n; ++k) {
      x[2 * k] = small(rng);
      x[2 * k + 1] = small(rng);
      moved[k] = prev[k] + Point2{x[2 * k], x[2 * k + 1]};
    }
    for (int k = 1; k + 1 < n; ++k) {
      const Point2 u = gain * (2.0 * moved[k] - moved[k - 1] - moved[k + 1]);
      x[2 * n + 2 * (k - 1)] = u.x;
      x[2 * n + 2 * (k - 1) + 1] = u.y;
    }
    const Eigen::VectorXd ax = prob.constraint_matrix * x;
    for (int r = 2 * n; r < 2 * n + 2 * (n - 2); ++r) {
      EXPECT_NEAR(ax[r], prob.lower[r], 1e-9);
      EXPECT_EQ(prob.lower[r], prob.upper[r]);
    }
    const double cost = 0.5 * x.dot(prob.quadratic_cost.selfadjointView<Eigen::Upper>() * x);
    EXPECT_NEAR(cost, scale * internal::SmoothnessCost(moved), 1e-9 * std::max(1.0, cost));
    for (int k = 1; k + 1 < n; ++k) {
      const int r = 2 * n + 2 * (n - 2) + (k - 1);
      const auto e = CurvatureConstraintEval(prev[k - 1], prev[k], prev[k + 1], f.r_min);
      const double delta[6] = {x[2 * (k - 1)], x[2 * (k - 1) + 1], x[2 * k],
                               x[2 * k + 1],   x[2 * (k + 1)],     x[2 * (k + 1) + 1]};
      double lin = e.value;
      for (int j = 0; j < 6; ++j) lin += e.gradient[j] * delta[j];
      EXPECT_NEAR(ax[r] - prob.upper[r], scale * lin, 1e-7) << trial << " " << k;
    }
  }
}

TEST(CesTest, BoundExample) {
  EXPECT_NEAR(CesBound({0, 0}, {0.1, 0}, 5.0), 4e-6, 1e-18);
}

TEST(CesTest, StraightInputMatchesDliaps) {
  SubproblemFixture f(8, 0.3);
  const auto ces = SolveQp(CesSubproblem(f.state, f.state.points, f.r_min));
  const auto dl = SolveQp(BuildSubproblem(f.state, f.state.points, f.r_min));
  ASSERT_EQ(ces.status, QpStatus::kSolved);
  ASSERT_EQ(dl.status, QpStatus::kSolved);
  for (int i = 0; i < 16; ++i) EXPECT_NEAR(ces.primal[i], dl.primal[i], 1e-7);
}

TEST(SmoothInnerTest, StraightInputUnchanged) {
  const auto pts = Line(20, 0.1);
  const auto bubbles = OpenBubbles(pts, 0.5);
  SmootherConfig cfg;
  SmoothIterations it;
  const auto r = SmoothInner(pts, bubbles, 5.0, cfg, &it);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(it.penalty, 1);
  EXPECT_EQ(it.subproblem, 1);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    EXPECT_NEAR(r.points[k].x, pts[k].x, 1e-9);
    EXPECT_NEAR(r.points[k].y, pts[k].y, 1e-9);
  }
}

class ZigZagTest : public ::testing::Test {
 protected:
  void SetUp() override {
    pts_ = Line(41, 0.1);
    for (std::size_t k = 2; k + 2 < pts_.size(); ++k) pts_[k].y = (k % 2 == 0) ? 0.02 : -0.02;
    bubbles_ = OpenBubbles(pts_, 0.5);
    for (auto& b : bubbles_) b.center.y = 0.0;
    result_ = SmoothInner(pts_, bubbles_, 5.0, cfg_, &it_, &trace_);
  }

  std::vector<Point2> pts_;
  std::vector<Bubble> bubbles_;
  SmootherConfig cfg_;
  SmoothIterations it_;
  std::vector<TraceRecord> trace_;
  InnerResult result_;
};

TEST_F(ZigZagTest, CurvatureWithinLimit) {
  EXPECT_TRUE(result_.converged);
  EXPECT_LE(MaxAbsMenger(result_.points), 0.2 + 1e-3);
  for (std::size_t k = 1; k + 1 < result_.points.size(); ++k) {
    const auto& p = result_.points;
    EXPECT_LE(CurvatureConstraintEval(p[k - 1], p[k], p[k + 1], 5.0).value, cfg_.c_tol);
  }
}

TEST_F(ZigZagTest, PinsAndBoxesHold) {
  const auto& p = result_.points;
  const std::size_t n = p.size();
  EXPECT_EQ(p[0], pts_[0]);
  EXPECT_EQ(p[1], pts_[1]);
  EXPECT_EQ(p[n - 2], pts_[n - 2]);
  EXPECT_EQ(p[n - 1], pts_[n - 1]);
  for (std::size_t k = 2; k + 2 < n; ++k) {
    const double half = bubbles_[k].radius / std::sqrt(2.0);
    EXPECT_LE(std::abs(p[k].x - bubbles_[k].center.x), half + 1e-12);
    EXPECT_LE(std::abs(p[k].y - bubbles_[k].center.y), half + 1e-12);
  }
}

TEST_F(ZigZagTest, AcceptedStepsNeverRaiseMerit) {
  EXPECT_LE(result_.max_merit_increase, 1e-9);
  bool any = false;
  for (const auto& r : trace_) {
    if (!r.accepted) continue;
    any = true;
    EXPECT_LE(r.candidate_merit, r.merit + 1e-9);
  }
  EXPECT_TRUE(any);
}

TEST_F(ZigZagTest, RejectionHalvesRadiusAndKeepsIterate) {
  for (std::size_t i = 0; i + 1 < trace_.size(); ++i) {
    const auto& a = trace_[i];
    const auto& b = trace_[i + 1];
    if (a.accepted || a.penalty != b.penalty || a.subproblem != b.subproblem) continue;
    EXPECT_DOUBLE_EQ(b.t, a.t * cfg_.gamma_minus);
    EXPECT_EQ(b.merit, a.merit);
    EXPECT_EQ(b.trust, a.trust + 1);
  }
}

TEST(ShrinkBubblesTest, OnlyCollidingPointsShrink) {
  std::vector<Bubble> b(5);
  for (auto& x : b) x.radius = 0.4;
  SmootherConfig cfg;
  const std::vector<std::size_t> hits{2};
  EXPECT_TRUE(internal::ShrinkBubbles(b, hits, cfg));
  EXPECT_DOUBLE_EQ(b[2].radius, 0.2);
  for (int k : {0, 1, 3, 4}) EXPECT_DOUBLE_EQ(b[k].radius, 0.4);
}

TEST(ShrinkBubblesTest, FloorCollapsesToZero) {
  std::vector<Bubble> b(1);
  b[0].radius = 0.015;
  SmootherConfig cfg;
  const std::vector<std::size_t> hits{0};
  EXPECT_TRUE(internal::ShrinkBubbles(b, hits, cfg));
  EXPECT_EQ(b[0].radius, 0.0);
  EXPECT_FALSE(internal::ShrinkBubbles(b, hits, cfg));
}

TEST(SmoothSegmentTest, ObstacleFreeTakesOneOuterIteration) {
  const auto bounds = ConvexPolygon::Box(-20, -20, 20, 20);
  std::vector<Pose> ref;
  Pose p(0, 0, 0);
  for (int i = 0; i < 30; ++i) {
    ref.push_back(p);
    p = AdvanceArc(p, 0.15, 0.2);
  }
  const auto r = SmoothSegment(ref, Gear::kForward, {}, bounds, VehicleParams{}, {});
  EXPECT_TRUE(r.smoothed);
  EXPECT_TRUE(r.collision_free);
  EXPECT_EQ(r.iterations.collision, 1);
  EXPECT_EQ(r.points.front(), ref.front().position);
  EXPECT_EQ(r.points.back(), ref.back().position);
}

TEST(SmoothSegmentTest, BackwardHeadingsFlip) {
  const auto bounds = ConvexPolygon::Box(-20, -20, 20, 20);
  std::vector<Pose> ref;
  for (int i = 0; i < 12; ++i) ref.push_back(Pose(-0.2 * i, 0, 0));
  const auto r = SmoothSegment(ref, Gear::kBackward, {}, bounds, VehicleParams{}, {});
  ASSERT_TRUE(r.smoothed);
  for (double h : r.headings) EXPECT_NEAR(NormalizeAngle(h), 0.0, 1e-9);
}

TEST(SmoothSegmentTest, ShortSegmentPassesThrough) {
  const auto bounds = ConvexPolygon::Box(-20, -20, 20, 20);
  const std::vector<Pose> ref{Pose(0, 0, 0), Pose(0.2, 0, 0)};
  const auto r = SmoothSegment(ref, Gear::kForward, {}, bounds, VehicleParams{}, {});
  EXPECT_FALSE(r.smoothed);
  ASSERT_EQ(r.points.size(), 2u);
  EXPECT_EQ(r.points[1], ref[1].position);
}

TEST(SmoothSegmentTest, EmptyInputRejected) {
  const auto bounds = ConvexPolygon::Box(-20, -20, 20, 20);
  EXPECT_THROW(SmoothSegment({}, Gear::kForward, {}, bounds, VehicleParams{}, {}), InputError);
}

TEST(SplitReferenceTest, SharesSwitchPose) {
  ReferencePath p;
  p.poses = {Pose(0, 0, 0), Pose(0.2, 0, 0), Pose(0.4, 0, 0), Pose(0.2, 0, 0), Pose(0, 0, 0)};
  p.gears = {Gear::kForward, Gear::kForward, Gear::kBackward, Gear::kBackward, Gear::kBackward};
  const auto segs = SplitReference(p);
  ASSERT_EQ(segs.size(), 2u);
  EXPECT_EQ(segs[0].poses.size(), 3u);
  EXPECT_EQ(segs[1].poses.size(), 3u);
  EXPECT_EQ(segs[0].poses.back().position, segs[1].poses.front().position);
  EXPECT_EQ(segs[1].gear, Gear::kBackward);
}

class ParkingSmoothTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ParkingWorld w;
    path_ = new ReferencePath(
        Search(Pose(-6, 2.5, 0), w.goal, w.obstacles, w.bounds, VehicleParams{}, ParkingSearch()));
    results_ = new std::vector<SmoothResult>(
        Smooth(*path_, w.obstacles, w.bounds, VehicleParams{}, SmootherConfig{}));
  }
  static void TearDownTestSuite() {
    delete path_;
    delete results_;
  }
  static ReferencePath* path_;
  static std::vector<SmoothResult>* results_;
};

ReferencePath* ParkingSmoothTest::path_ = nullptr;
std::vector<SmoothResult>* ParkingSmoothTest::results_ = nullptr;

TEST_F(ParkingSmoothTest, CollisionFreeWithExactEndpoints) {
  const auto segs = SplitReference(*path_);
  ASSERT_EQ(segs.size(), results_->size());
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto& r = (*results_)[i];
    EXPECT_TRUE(r.collision_free) << i;
    EXPECT_LE(Distance(r.points.front(), segs[i].poses.front().position), 1e-9);
    EXPECT_LE(Distance(r.points.back(), segs[i].poses.back().position), 1e-9);
  }
}

TEST_F(ParkingSmoothTest, EndHeadingsPinned) {
  const auto segs = SplitReference(*path_);
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto& r = (*results_)[i];
    if (!r.smoothed) continue;
    const std::size_t n = r.points.size();
    const double flip = r.gear == Gear::kBackward ? kPi : 0.0;
    const Point2 d0 = r.points[1] - r.points[0];
    const Point2 d1 = r.points[n - 1] - r.points[n - 2];
    EXPECT_LE(std::abs(NormalizeAngle(std::atan2(d0.y, d0.x) + flip -
                                      segs[i].poses.front().heading)),
              1e-6);
    EXPECT_LE(std::abs(NormalizeAngle(std::atan2(d1.y, d1.x) + flip -
                                      segs[i].poses.back().heading)),
              1e-6);
  }
}

TEST_F(ParkingSmoothTest, CurvatureBounded) {
  for (const auto& r : *results_) {
    if (!r.smoothed) continue;
    EXPECT_LE(MaxAbsMenger(r.points), 0.2 + 1e-3);
    EXPECT_LE(r.max_constraint, 1e-4);
    EXPECT_LE(r.max_merit_increase, 1e-9);
  }
}

TEST_F(ParkingSmoothTest, Deterministic) {
  ParkingWorld w;
  const auto again = Smooth(*path_, w.obstacles, w.bounds, VehicleParams{}, SmootherConfig{});
  ASSERT_EQ(again.size(), results_->size());
  for (std::size_t i = 0; i < again.size(); ++i) {
    ASSERT_EQ(again[i].points.size(), (*results_)[i].points.size());
    for (std::size_t k = 0; k < again[i].points.size(); ++k) {
      EXPECT_EQ(again[i].points[k], (*results_)[i].points[k]);
    }
  }
}

TEST(TraceTest, CsvHeaderAndRows) {
  std::vector<TraceRecord> t(2);
  t[1].accepted = true;
  t[1].mu = 100;
  std::ostringstream os;
  WriteTrace(os, t);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "collision,penalty,subproblem,trust,mu,t,merit,candidate_merit,max_g,accepted");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 2);
}

TEST(SmootherConfigTest, Validation) {
  SmootherConfig c;
  EXPECT_NO_THROW(c.Validate());
  c.alpha = 1.0;
  EXPECT_THROW(c.Validate(), InputError);
  c = {};
  c.rho = 1.0;
  EXPECT_THROW(c.Validate(), InputError);
  c = {};
  c.bubble_max = 0.001;
  EXPECT_THROW(c.Validate(), InputError);
}

}  // namespace
}  // namespace openspace
