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
 * @brief Gear segments, path and speed fusion, and trajectory validation.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "openspace/dliaps.hpp"
#include "openspace/errors.hpp"
#include "openspace/geometry.hpp"
#include "openspace/pjso.hpp"

namespace openspace {

/// One constant-gear piece of the smoothed path.
struct PathSegment {
  std::vector<Point2> points;
  std::vector<double> headings;
  std::vector<double> curvatures;
  std::vector<double> cumulative_s;
  Gear gear = Gear::kForward;

  double Length() const { return cumulative_s.empty() ? 0.0 : cumulative_s.back(); }
  double MaxAbsCurvature() const {
    double m = 0.0;
    for (double k : curvatures) m = std::max(m, std::abs(k));
    return m;
  }
};

struct TrajectoryPoint {
  double t = 0.0;
  Pose pose;
  double kappa = 0.0;
  /// Negative when driving backward.
  double v = 0.0;
  /// Acceleration and jerk along the direction of travel.
  double a = 0.0;
  double jerk = 0.0;
  Gear gear = Gear::kForward;
};

struct Trajectory {
  std::vector<TrajectoryPoint> points;
  /// Index of the first point of every segment after the first.
  std::vector<std::size_t> segment_boundaries;

  double Duration() const { return points.empty() ? 0.0 : points.back().t - points.front().t; }
};

/// Builds a segment from points and headings; repeated points are dropped.
inline PathSegment MakePathSegment(std::span<const Point2> points,
                                   std::span<const double> headings, Gear gear) {
  if (points.empty()) throw InputError("path segment is empty");
  if (points.size() != headings.size()) {
    throw InputError("path segment points and headings differ in length");
  }
  PathSegment seg;
  seg.gear = gear;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!seg.points.empty() && Distance(seg.points.back(), points[i]) <= 1e-12) continue;
    seg.points.push_back(points[i]);
    seg.headings.push_back(headings[i]);
  }
  seg.cumulative_s.assign(seg.points.size(), 0.0);
  for (std::size_t i = 1; i < seg.points.size(); ++i) {
    seg.cumulative_s[i] = seg.cumulative_s[i - 1] + Distance(seg.points[i - 1], seg.points[i]);
  }
  seg.curvatures = PathCurvatures(seg.points);
  return seg;
}

/// One segment per maximal constant-gear run of smoothed results.
inline std::vector<PathSegment> SplitGears(std::span<const SmoothResult> results) {
  if (results.empty()) throw InputError("no smoothed segments to split");
  std::vector<PathSegment> out;
  std::vector<Point2> points;
  std::vector<double> headings;
  Gear gear = results.front().gear;
  auto flush = [&] {
    if (!points.empty()) out.push_back(MakePathSegment(points, headings, gear));
    points.clear();
    headings.clear();
  };
  for (const auto& r : results) {
    if (r.points.size() != r.headings.size()) {
      throw InputError("smoothed segment points and headings differ in length");
    }
    if (r.gear != gear) {
      flush();
      gear = r.gear;
    }
    points.insert(points.end(), r.points.begin(), r.points.end());
    headings.insert(headings.end(), r.headings.begin(), r.headings.end());
  }
  flush();
  return out;
}

namespace internal {

inline double LerpAngle(double a, double b, double u) {
  return NormalizeAngle(a + u * NormalizeAngle(b - a));
}

}  // namespace internal

/// Pose and curvature at arc length s, interpolated linearly between vertices.
inline std::pair<Pose, double> SampleSegment(const PathSegment& seg, double s) {
  const auto& cum = seg.cumulative_s;
  if (seg.points.size() == 1 || s <= 0.0) {
    return {Pose(seg.points.front(), seg.headings.front()), seg.curvatures.front()};
  }
  if (s >= cum.back()) {
    return {Pose(seg.points.back(), seg.headings.back()), seg.curvatures.back()};
  }
  const std::size_t i = static_cast<std::size_t>(
      std::upper_bound(cum.begin(), cum.end(), s) - cum.begin()) - 1;
  const double u = (s - cum[i]) / (cum[i + 1] - cum[i]);
  if (u == 0.0) return {Pose(seg.points[i], seg.headings[i]), seg.curvatures[i]};
  const Point2 p = seg.points[i] + u * (seg.points[i + 1] - seg.points[i]);
  const double theta = internal::LerpAngle(seg.headings[i], seg.headings[i + 1], u);
  const double kappa = seg.curvatures[i] + u * (seg.curvatures[i + 1] - seg.curvatures[i]);
  return {Pose(p, theta), kappa};
}

/// Maps a speed profile onto a path segment; time starts at t0.
inline std::vector<TrajectoryPoint> Combine(const PathSegment& seg, const SpeedProfile& profile,
                                            double t0 = 0.0) {
  if (seg.points.empty()) throw InputError("cannot combine an empty path segment");
  if (profile.s.empty()) throw InputError("cannot combine an empty speed profile");
  constexpr double kTol = 0.05;
  const double length = seg.Length();
  if (std::abs(profile.s.back() - length) > kTol) {
    throw ContractError("speed profile ends " + std::to_string(profile.s.back()) +
                        " m along a " + std::to_string(length) + " m segment");
  }
  const double sign = GearSign(seg.gear);
  const std::size_t n = profile.s.size();
  std::vector<TrajectoryPoint> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double s = profile.s[k];
    if (s > length + kTol || s < -kTol) {
      throw ContractError("profile sample s = " + std::to_string(s) + " leaves the segment");
    }
    auto& tp = out[k];
    std::tie(tp.pose, tp.kappa) = SampleSegment(seg, s);
    tp.t = t0 + static_cast<double>(k) * profile.delta_t;
    tp.v = sign * profile.s_dot[k];
    tp.a = profile.s_ddot[k];
    tp.jerk = k + 1 < n ? (profile.s_ddot[k + 1] - profile.s_ddot[k]) / profile.delta_t : 0.0;
    tp.gear = seg.gear;
  }
  return out;
}

/**
 * Concatenates per-segment samples. The last sample of a segment and the
 * first of the next share a time stamp; the later one is kept. Segments that
 * do not already start at the previous end time are shifted.
 */
inline Trajectory Stitch(std::span<const std::vector<TrajectoryPoint>> segments,
                         double rest_tol = 0.05) {
  Trajectory traj;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& seg = segments[i];
    if (seg.empty()) throw InputError("cannot stitch an empty segment");
    if (traj.points.empty()) {
      traj.points = seg;
      continue;
    }
    if (std::abs(traj.points.back().v) > rest_tol || std::abs(seg.front().v) > rest_tol) {
      throw ContractError("segment " + std::to_string(i) + " does not start from rest");
    }
    const double offset = traj.points.back().t - seg.front().t;
    traj.points.pop_back();
    traj.segment_boundaries.push_back(traj.points.size());
    for (auto tp : seg) {
      if (offset != 0.0) tp.t += offset;
      traj.points.push_back(tp);
    }
  }
  return traj;
}

struct TrajectoryLimits {
  double kappa_max = 0.2;
  double v_max_forward = 2.0;
  double v_max_backward = 1.0;
  double a_min = -1.0;
  double a_max = 1.0;
  double jerk_min = -1.0;
  double jerk_max = 1.0;
  double kappa_tol = 1e-3;
  double tol = 1e-4;
  /// Largest |v| allowed at a segment boundary.
  double rest_tol = 0.05;

  static TrajectoryLimits From(const VehicleParams& vehicle, const SpeedConfig& speed) {
    TrajectoryLimits l;
    l.kappa_max = vehicle.max_curvature;
    l.v_max_forward = speed.v_max;
    l.v_max_backward = speed.v_max_backward;
    l.a_min = speed.a_min;
    l.a_max = speed.a_max;
    l.jerk_min = speed.jerk_min;
    l.jerk_max = speed.jerk_max;
    return l;
  }
};

struct ValidationReport {
  double max_abs_kappa = 0.0;
  double v_min = 0.0, v_max = 0.0;
  double a_min = 0.0, a_max = 0.0;
  double jerk_min = 0.0, jerk_max = 0.0;
  double max_boundary_speed = 0.0;
  double min_clearance = std::numeric_limits<double>::infinity();
  /// Largest violation of the constant-jerk speed recursion.
  double dynamics_residual = 0.0;
  bool collision = false;
  /// Index of the first colliding sample; a midpoint reports its left point.
  std::size_t first_collision = 0;

  bool kappa_ok = true;
  bool v_ok = true;
  bool a_ok = true;
  bool jerk_ok = true;
  bool stop_ok = true;
  bool time_ok = true;

  double MaxAbsV() const { return std::max(std::abs(v_min), std::abs(v_max)); }
  double MaxAbsA() const { return std::max(std::abs(a_min), std::abs(a_max)); }
  double MaxAbsJerk() const { return std::max(std::abs(jerk_min), std::abs(jerk_max)); }
  bool Passed() const {
    return kappa_ok && v_ok && a_ok && jerk_ok && stop_ok && time_ok && !collision;
  }
};

/// Gap between a footprint and the obstacles or workspace edge; 0 on contact.
inline double FootprintClearance(const Pose& pose, const VehicleParams& vehicle,
                                 std::span<const ConvexPolygon> obstacles,
                                 const ConvexPolygon& bounds) {
  const auto corners = internal::FootprintCorners(pose, vehicle);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : corners) {
    if (!bounds.ContainsStrictly(c)) return 0.0;
    best = std::min(best, DistanceToBoundary(c, bounds));
  }
  const ConvexPolygon fp(std::vector<Point2>(corners.begin(), corners.end()));
  for (const auto& obstacle : obstacles) {
    if (PolygonsIntersect(fp, obstacle)) return 0.0;
    for (const auto& c : corners) best = std::min(best, DistanceToBoundary(c, obstacle));
    for (const auto& v : obstacle.vertices()) best = std::min(best, DistanceToBoundary(v, fp));
  }
  return best;
}

inline Pose MidPose(const Pose& a, const Pose& b) {
  return Pose(a.position + 0.5 * (b.position - a.position),
              internal::LerpAngle(a.heading, b.heading, 0.5));
}

/// Checks limits, boundary stops and footprints at every sample and midpoint.
inline ValidationReport Validate(const Trajectory& traj, const VehicleParams& vehicle,
                                 std::span<const ConvexPolygon> obstacles,
                                 const ConvexPolygon& bounds, const TrajectoryLimits& limits) {
  if (traj.points.empty()) throw InputError("cannot validate an empty trajectory");
  ValidationReport r;
  const auto& pts = traj.points;
  r.v_min = r.v_max = pts.front().v;
  r.a_min = r.a_max = pts.front().a;
  r.jerk_min = r.jerk_max = pts.front().jerk;
  auto hit = [&](std::size_t k) {
    if (!r.collision) r.first_collision = k;
    r.collision = true;
  };
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const auto& p = pts[k];
    r.max_abs_kappa = std::max(r.max_abs_kappa, std::abs(p.kappa));
    r.v_min = std::min(r.v_min, p.v);
    r.v_max = std::max(r.v_max, p.v);
    r.a_min = std::min(r.a_min, p.a);
    r.a_max = std::max(r.a_max, p.a);
    r.jerk_min = std::min(r.jerk_min, p.jerk);
    r.jerk_max = std::max(r.jerk_max, p.jerk);
    const double vcap = p.gear == Gear::kForward ? limits.v_max_forward : limits.v_max_backward;
    if (GearSign(p.gear) * p.v < -limits.tol || std::abs(p.v) > vcap + limits.tol) {
      r.v_ok = false;
    }
    if (!PoseIsFree(p.pose, vehicle, obstacles, bounds)) hit(k);
    r.min_clearance = std::min(r.min_clearance, FootprintClearance(p.pose, vehicle, obstacles,
                                                                   bounds));
    if (k + 1 < pts.size()) {
      if (!(pts[k + 1].t > p.t)) r.time_ok = false;
      if (!PoseIsFree(MidPose(p.pose, pts[k + 1].pose), vehicle, obstacles, bounds)) hit(k);
    }
  }
  r.kappa_ok = r.max_abs_kappa <= limits.kappa_max + limits.kappa_tol;
  r.a_ok = r.a_min >= limits.a_min - limits.tol && r.a_max <= limits.a_max + limits.tol;
  r.jerk_ok = r.jerk_min >= limits.jerk_min - limits.tol && r.jerk_max <= limits.jerk_max + limits.tol;

  // Segments share their boundary sample, so the speed recursion runs straight
  // through; |v| keeps it gear independent.
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const double dt = pts[k + 1].t - pts[k].t;
    const double res =
        std::abs(pts[k + 1].v) - std::abs(pts[k].v) - 0.5 * dt * (pts[k].a + pts[k + 1].a);
    r.dynamics_residual = std::max(r.dynamics_residual, std::abs(res));
  }
  r.max_boundary_speed = std::max(std::abs(pts.front().v), std::abs(pts.back().v));
  for (std::size_t b : traj.segment_boundaries) {
    r.max_boundary_speed = std::max(r.max_boundary_speed, std::abs(pts[b].v));
  }
  r.stop_ok = r.max_boundary_speed <= limits.rest_tol;
  return r;
}

}  // namespace openspace
