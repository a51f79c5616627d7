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

/**
 * @file
 * @brief End-to-end planning and grid benchmarks.
 */

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "openspace/dliaps.hpp"
#include "openspace/errors.hpp"
#include "openspace/geometry.hpp"
#include "openspace/hybrid_astar.hpp"
#include "openspace/pjso.hpp"
#include "openspace/scenario.hpp"
#include "openspace/trajectory.hpp"

namespace openspace {

struct StageTimings {
  double search = 0.0;
  double smoothing = 0.0;
  double speed = 0.0;
  double total = 0.0;
};

struct RunReport {
  std::string scenario;
  bool success = false;
  /// Empty on success; otherwise search, smoothing, speed, trajectory or validate.
  std::string failure_stage;
  std::string message;
  StageTimings timings;

  double max_abs_kappa = 0.0;
  double max_abs_v = 0.0;
  double max_abs_a = 0.0;
  double max_abs_jerk = 0.0;
  double min_clearance = 0.0;
  double duration = 0.0;
  double path_length = 0.0;
  int gear_switches = 0;

  /// Smoothed path curvature, also set when a later stage fails; NaN before
  /// smoothing.
  double path_max_abs_kappa = std::numeric_limits<double>::quiet_NaN();
  /// Largest curvature residual g_k over smoothed segments.
  double max_constraint = 0.0;
  double max_merit_increase = 0.0;
  double max_dynamics_residual = 0.0;
  double max_arrival_gap = 0.0;
  double max_boundary_speed = 0.0;
  bool smoothing_converged = false;
};

struct PlanResult {
  ReferencePath reference;
  std::vector<SmoothResult> smoothed;
  std::vector<PathSegment> segments;
  std::vector<SpeedProfile> profiles;
  Trajectory trajectory;
  std::optional<ValidationReport> validation;
  RunReport report;
};

namespace internal {

inline double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

// Single resting sample, used when start and goal coincide.
inline Trajectory RestingTrajectory(const Pose& pose) {
  Trajectory traj;
  traj.points.resize(1);
  traj.points[0].pose = pose;
  return traj;
}

}  // namespace internal

/// Smoothing, speed, fusion and validation on an existing reference path.
inline PlanResult PlanFromReference(const Scenario& sc, ReferencePath reference,
                                    SmoothMode mode = SmoothMode::kDliaps,
                                    double search_seconds = 0.0) {
  using Clock = std::chrono::steady_clock;
  PlanResult out;
  RunReport& rep = out.report;
  rep.scenario = sc.name;
  rep.timings.search = search_seconds;
  out.reference = std::move(reference);
  auto fail = [&](const char* stage, const std::string& why) {
    rep.failure_stage = stage;
    rep.message = why;
    rep.timings.total = rep.timings.search + rep.timings.smoothing + rep.timings.speed;
    return out;
  };

  const auto t_smooth = Clock::now();
  try {
    out.smoothed = Smooth(out.reference, sc.obstacles, sc.bounds, sc.vehicle, sc.smoother, mode);
  } catch (const std::exception& e) {
    rep.timings.smoothing = internal::Seconds(t_smooth);
    return fail("smoothing", e.what());
  }
  rep.timings.smoothing = internal::Seconds(t_smooth);
  rep.path_max_abs_kappa = 0.0;
  rep.smoothing_converged = true;
  bool free = true;
  for (const auto& r : out.smoothed) {
    for (double k : r.curvatures) rep.path_max_abs_kappa = std::max(rep.path_max_abs_kappa, std::abs(k));
    rep.max_constraint = std::max(rep.max_constraint, r.max_constraint);
    if (r.smoothed) rep.max_merit_increase = std::max(rep.max_merit_increase, r.max_merit_increase);
    rep.smoothing_converged = rep.smoothing_converged && r.converged;
    free = free && r.collision_free;
  }
  if (!free) return fail("smoothing", "smoothed path still collides");

  out.segments = SplitGears(out.smoothed);
  std::erase_if(out.segments, [](const PathSegment& s) { return s.Length() <= 1e-9; });
  for (const auto& s : out.segments) rep.path_length += s.Length();

  const auto t_speed = Clock::now();
  try {
    for (const auto& seg : out.segments) {
      const SegmentSpec spec{seg.Length(), seg.MaxAbsCurvature(), seg.gear};
      out.profiles.push_back(OptimizeSegment(spec, sc.speed));
      const auto& p = out.profiles.back();
      rep.max_dynamics_residual = std::max(rep.max_dynamics_residual, DynamicsResidual(p));
      rep.max_arrival_gap = std::max(rep.max_arrival_gap, std::abs(p.s.back() - spec.s_f));
    }
  } catch (const std::exception& e) {
    rep.timings.speed = internal::Seconds(t_speed);
    return fail("speed", e.what());
  }
  rep.timings.speed = internal::Seconds(t_speed);

  try {
    if (out.segments.empty()) {
      out.trajectory = internal::RestingTrajectory(sc.start);
    } else {
      std::vector<std::vector<TrajectoryPoint>> pieces;
      double t0 = 0.0;
      for (std::size_t i = 0; i < out.segments.size(); ++i) {
        pieces.push_back(Combine(out.segments[i], out.profiles[i], t0));
        t0 = pieces.back().back().t;
      }
      out.trajectory = Stitch(pieces);
    }
  } catch (const std::exception& e) {
    return fail("trajectory", e.what());
  }

  const auto v = Validate(out.trajectory, sc.vehicle, sc.obstacles, sc.bounds,
                          TrajectoryLimits::From(sc.vehicle, sc.speed));
  out.validation = v;
  rep.max_abs_kappa = v.max_abs_kappa;
  rep.max_abs_v = v.MaxAbsV();
  rep.max_abs_a = v.MaxAbsA();
  rep.max_abs_jerk = v.MaxAbsJerk();
  rep.min_clearance = v.min_clearance;
  rep.max_boundary_speed = v.max_boundary_speed;
  rep.duration = out.trajectory.Duration();
  rep.gear_switches = static_cast<int>(out.trajectory.segment_boundaries.size());
  if (!v.Passed()) {
    std::string why;
    if (!v.kappa_ok) why += " curvature";
    if (!v.v_ok) why += " speed";
    if (!v.a_ok) why += " acceleration";
    if (!v.jerk_ok) why += " jerk";
    if (!v.stop_ok) why += " gear-stop";
    if (!v.time_ok) why += " time";
    if (v.collision) why += " collision";
    return fail("validate", "limits violated:" + why);
  }
  rep.success = true;
  rep.timings.total = rep.timings.search + rep.timings.smoothing + rep.timings.speed;
  return out;
}

/// Full pipeline. Stage failures are recorded in the report, never thrown.
inline PlanResult Plan(const Scenario& sc, SmoothMode mode = SmoothMode::kDliaps) {
  const auto t0 = std::chrono::steady_clock::now();
  ReferencePath ref;
  try {
    ref = Search(sc.start, sc.goal, sc.obstacles, sc.bounds, sc.vehicle, sc.search);
  } catch (const std::exception& e) {
    PlanResult out;
    out.report.scenario = sc.name;
    out.report.failure_stage = "search";
    out.report.message = e.what();
    out.report.timings.search = out.report.timings.total = internal::Seconds(t0);
    return out;
  }
  return PlanFromReference(sc, std::move(ref), mode, internal::Seconds(t0));
}

struct GridSpec {
  double x_min = 0.0, x_max = 0.0, x_step = 1.0;
  double y_min = 0.0, y_max = 0.0, y_step = 1.0;
  double heading = 0.0;

  void Validate() const {
    for (double v : {x_min, x_max, x_step, y_min, y_max, y_step, heading}) {
      if (!std::isfinite(v)) throw InputError("grid values must be finite");
    }
    if (!(x_step > 0.0 && y_step > 0.0)) throw InputError("grid steps must be positive");
    if (!(x_min <= x_max && y_min <= y_max)) throw InputError("grid needs min <= max");
  }

  static int Count(double lo, double hi, double step) {
    return static_cast<int>(std::floor((hi - lo) / step + 1e-9)) + 1;
  }

  /// Start poses, x outer and y inner.
  std::vector<Pose> Poses() const {
    Validate();
    std::vector<Pose> out;
    const int nx = Count(x_min, x_max, x_step), ny = Count(y_min, y_max, y_step);
    for (int i = 0; i < nx; ++i) {
      for (int j = 0; j < ny; ++j) out.emplace_back(x_min + i * x_step, y_min + j * y_step, heading);
    }
    return out;
  }
};

struct BenchCase {
  int index = 0;
  Pose start;
  PlanResult result;
  /// CES runs only: smoothed-path curvature of the DL-IAPS smoother on the
  /// same reference.
  double dliaps_max_abs_kappa = std::numeric_limits<double>::quiet_NaN();
};

struct TimingStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct BenchResult {
  SmoothMode mode = SmoothMode::kDliaps;
  std::vector<BenchCase> cases;

  int Successes() const {
    return static_cast<int>(std::count_if(cases.begin(), cases.end(),
                                          [](const auto& c) { return c.result.report.success; }));
  }

  /// Over successful cases; zeros when there are none.
  template <typename Getter>
  TimingStats Stats(Getter get) const {
    TimingStats s;
    int n = 0;
    for (const auto& c : cases) {
      if (!c.result.report.success) continue;
      const double v = get(c.result.report.timings);
      s.min = n == 0 ? v : std::min(s.min, v);
      s.max = n == 0 ? v : std::max(s.max, v);
      s.mean += v;
      ++n;
    }
    if (n > 0) s.mean /= n;
    return s;
  }
};

/// Runs the pipeline from every grid start. jobs > 1 runs cases on worker
/// threads; results are keyed by grid index, so the order never changes.
inline BenchResult BenchGrid(const Scenario& base, const GridSpec& grid,
                             SmoothMode mode = SmoothMode::kDliaps, int jobs = 1) {
  if (jobs < 1) throw InputError("jobs must be at least 1");
  BenchResult out;
  out.mode = mode;
  const auto poses = grid.Poses();
  out.cases.resize(poses.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < poses.size(); i = next++) {
      BenchCase& c = out.cases[i];
      c.index = static_cast<int>(i);
      c.start = poses[i];
      Scenario sc = base;
      sc.start = poses[i];
      if (!PoseIsFree(sc.start, sc.vehicle, sc.obstacles, sc.bounds)) {
        c.result.report.scenario = sc.name;
        c.result.report.failure_stage = "search";
        c.result.report.message = "start in collision";
        continue;
      }
      c.result = Plan(sc, mode);
      if (mode == SmoothMode::kCes && !c.result.reference.poses.empty()) {
        try {
          double m = 0.0;
          for (const auto& r : Smooth(c.result.reference, sc.obstacles, sc.bounds, sc.vehicle,
                                      sc.smoother, SmoothMode::kDliaps)) {
            for (double k : r.curvatures) m = std::max(m, std::abs(k));
          }
          c.dliaps_max_abs_kappa = m;
        } catch (const std::exception&) {
        }
      }
    }
  };
  const int n_threads = std::min<int>(jobs, static_cast<int>(poses.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return out;
}

}  // namespace openspace
