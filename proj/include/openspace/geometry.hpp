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
 * @brief Planar primitives: points, poses, convex polygons, the vehicle
 * footprint, separating-axis collision and discrete curvature.
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "openspace/errors.hpp"

namespace openspace {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
  friend Point2 operator*(Point2 a, double s) { return {s * a.x, s * a.y}; }
  friend bool operator==(Point2 a, Point2 b) = default;

  double Norm() const { return std::hypot(x, y); }
  double SquaredNorm() const { return x * x + y * y; }
};

inline double Dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double Cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double Distance(Point2 a, Point2 b) { return (a - b).Norm(); }

inline bool IsFinite(Point2 p) { return std::isfinite(p.x) && std::isfinite(p.y); }

/// Wraps an angle into (-pi, pi].
inline double NormalizeAngle(double angle) {
  constexpr double kPi = std::numbers::pi;
  double a = std::fmod(angle, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

inline Point2 UnitVector(double heading) {
  return {std::cos(heading), std::sin(heading)};
}

struct Pose {
  Point2 position;
  double heading = 0.0;

  Pose() = default;
  Pose(Point2 p, double theta) : position(p), heading(NormalizeAngle(theta)) {}
  Pose(double x, double y, double theta)
      : position{x, y}, heading(NormalizeAngle(theta)) {}

  friend bool operator==(const Pose&, const Pose&) = default;
};

enum class Gear { kForward, kBackward };

inline const char* GearName(Gear gear) {
  return gear == Gear::kForward ? "forward" : "backward";
}

/// +1 for forward motion, -1 for reverse.
inline double GearSign(Gear gear) { return gear == Gear::kForward ? 1.0 : -1.0; }

/// Axis-aligned bounding box, used as a cheap pre-filter for polygon tests.
struct Aabb {
  double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;

  bool Overlaps(const Aabb& o) const {
    return min_x <= o.max_x && o.min_x <= max_x && min_y <= o.max_y &&
           o.min_y <= max_y;
  }
};

/**
 * Strictly convex polygon with counter-clockwise vertex order. Construction
 * re-orders clockwise input and rejects anything non-convex, degenerate or
 * non-finite.
 */
class ConvexPolygon {
 public:
  ConvexPolygon() = default;

  explicit ConvexPolygon(std::vector<Point2> vertices)
      : vertices_(std::move(vertices)) {
    if (vertices_.size() < 3) {
      throw InputError("polygon needs at least 3 vertices, got " +
                       std::to_string(vertices_.size()));
    }
    for (const auto& v : vertices_) {
      if (!IsFinite(v)) throw InputError("polygon vertex is not finite");
    }
    if (SignedArea(vertices_) < 0.0) std::reverse(vertices_.begin(), vertices_.end());
    const std::size_t n = vertices_.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point2 a = vertices_[i];
      const Point2 b = vertices_[(i + 1) % n];
      const Point2 c = vertices_[(i + 2) % n];
      if (a == b) throw InputError("polygon has repeated vertices");
      if (Cross(b - a, c - b) <= 0.0) {
        throw InputError("polygon is not strictly convex");
      }
    }
    // A star-shaped winding can pass the local turn test; total turning must
    // be exactly one revolution.
    double turning = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Point2 e0 = vertices_[(i + 1) % n] - vertices_[i];
      const Point2 e1 = vertices_[(i + 2) % n] - vertices_[(i + 1) % n];
      turning += std::atan2(Cross(e0, e1), Dot(e0, e1));
    }
    if (std::abs(turning - 2.0 * std::numbers::pi) > 1e-6) {
      throw InputError("polygon is self-intersecting");
    }
    box_ = {vertices_[0].x, vertices_[0].y, vertices_[0].x, vertices_[0].y};
    for (const auto& v : vertices_) {
      box_.min_x = std::min(box_.min_x, v.x);
      box_.min_y = std::min(box_.min_y, v.y);
      box_.max_x = std::max(box_.max_x, v.x);
      box_.max_y = std::max(box_.max_y, v.y);
    }
  }

  /// Axis-aligned rectangle [min_x, max_x] x [min_y, max_y].
  static ConvexPolygon Box(double min_x, double min_y, double max_x, double max_y) {
    return ConvexPolygon({{min_x, min_y}, {max_x, min_y}, {max_x, max_y}, {min_x, max_y}});
  }

  const std::vector<Point2>& vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }
  const Aabb& bounding_box() const { return box_; }

  double Area() const { return SignedArea(vertices_); }

  /// Closed containment: boundary points count as inside.
  bool Contains(Point2 p) const {
    const std::size_t n = vertices_.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point2 a = vertices_[i];
      const Point2 b = vertices_[(i + 1) % n];
      if (Cross(b - a, p - a) < 0.0) return false;
    }
    return true;
  }

  /// Strict containment, boundary excluded.
  bool ContainsStrictly(Point2 p) const {
    const std::size_t n = vertices_.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point2 a = vertices_[i];
      const Point2 b = vertices_[(i + 1) % n];
      if (Cross(b - a, p - a) <= 0.0) return false;
    }
    return true;
  }

  friend bool operator==(const ConvexPolygon& a, const ConvexPolygon& b) {
    return a.vertices_ == b.vertices_;
  }

 private:
  static double SignedArea(const std::vector<Point2>& v) {
    double twice = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      twice += Cross(v[i], v[(i + 1) % v.size()]);
    }
    return 0.5 * twice;
  }

  std::vector<Point2> vertices_;
  Aabb box_;
};

/// Ego geometry. The pose reference point is the rear-axle center.
struct VehicleParams {
  double wheelbase = 2.8;
  double front_overhang = 0.9;
  double rear_overhang = 1.0;
  double width = 2.0;
  double max_curvature = 0.2;

  double length() const { return wheelbase + front_overhang + rear_overhang; }
  double min_turning_radius() const { return 1.0 / max_curvature; }

  /// Distance from the rear axle to the farthest footprint corner.
  double circumradius() const {
    const double forward = wheelbase + front_overhang;
    const double along = std::max(forward, rear_overhang);
    return std::hypot(along, 0.5 * width);
  }

  /// Footprint grown by `margin` on every side.
  VehicleParams Inflated(double margin) const {
    VehicleParams v = *this;
    v.front_overhang += margin;
    v.rear_overhang += margin;
    v.width += 2.0 * margin;
    return v;
  }

  void Validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw InputError(std::string("vehicle.") + name + " must be positive");
      }
    };
    positive(wheelbase, "wheelbase");
    positive(front_overhang, "front_overhang");
    positive(rear_overhang, "rear_overhang");
    positive(width, "width");
    positive(max_curvature, "max_curvature");
  }

  friend bool operator==(const VehicleParams&, const VehicleParams&) = default;
};

struct Bubble {
  Point2 center;
  double radius = 0.0;
};

namespace internal {

// Footprint corners, counter-clockwise from the rear right.
inline std::array<Point2, 4> FootprintCorners(const Pose& pose, const VehicleParams& vehicle) {
  const double c = std::cos(pose.heading);
  const double s = std::sin(pose.heading);
  const double front = vehicle.wheelbase + vehicle.front_overhang;
  const double back = -vehicle.rear_overhang;
  const double half_w = 0.5 * vehicle.width;
  auto to_world = [&](double lx, double ly) {
    return Point2{pose.position.x + c * lx - s * ly, pose.position.y + s * lx + c * ly};
  };
  return {to_world(back, -half_w), to_world(front, -half_w), to_world(front, half_w),
          to_world(back, half_w)};
}

}  // namespace internal

inline ConvexPolygon Footprint(const Pose& pose, const VehicleParams& vehicle) {
  const auto corners = internal::FootprintCorners(pose, vehicle);
  return ConvexPolygon(std::vector<Point2>(corners.begin(), corners.end()));
}

namespace internal {

// Projects polygon onto axis and returns [min, max].
inline std::pair<double, double> Project(std::span<const Point2> poly, Point2 axis) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& v : poly) {
    const double d = Dot(v, axis);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  return {lo, hi};
}

// True when some edge normal of `a` strictly separates the two polygons.
inline bool HasSeparatingEdge(std::span<const Point2> a, std::span<const Point2> b) {
  const auto& v = a;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Point2 edge = v[(i + 1) % v.size()] - v[i];
    const Point2 normal{edge.y, -edge.x};
    const auto [a_lo, a_hi] = Project(a, normal);
    const auto [b_lo, b_hi] = Project(b, normal);
    if (a_hi < b_lo || b_hi < a_lo) return true;
  }
  return false;
}

inline double DistancePointSegment(Point2 p, Point2 a, Point2 b) {
  const Point2 ab = b - a;
  const double len2 = ab.SquaredNorm();
  double t = len2 > 0.0 ? Dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return Distance(p, a + t * ab);
}

}  // namespace internal

/// Separating-axis test. Touching boundaries count as intersecting.
inline bool PolygonsIntersect(const ConvexPolygon& a, const ConvexPolygon& b) {
  if (!a.bounding_box().Overlaps(b.bounding_box())) return false;
  return !internal::HasSeparatingEdge(a.vertices(), b.vertices()) &&
         !internal::HasSeparatingEdge(b.vertices(), a.vertices());
}

inline double DistanceToBoundary(Point2 p, const ConvexPolygon& poly) {
  const auto& v = poly.vertices();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    best = std::min(best, internal::DistancePointSegment(p, v[i], v[(i + 1) % v.size()]));
  }
  return best;
}

/// Euclidean distance to the closed polygon; 0 inside.
inline double DistancePointPolygon(Point2 p, const ConvexPolygon& poly) {
  if (poly.Contains(p)) return 0.0;
  return DistanceToBoundary(p, poly);
}

/// Free distance around `p`: nearest obstacle or workspace boundary.
inline double Clearance(Point2 p, std::span<const ConvexPolygon> obstacles,
                        const ConvexPolygon& bounds) {
  if (!bounds.Contains(p)) {
    throw DomainError("clearance query point lies outside the bounds");
  }
  double best = DistanceToBoundary(p, bounds);
  for (const auto& obstacle : obstacles) {
    best = std::min(best, DistancePointPolygon(p, obstacle));
  }
  return best;
}

/// Footprint stays strictly inside the bounds and touches no obstacle.
inline bool FootprintIsFree(const ConvexPolygon& footprint,
                            std::span<const ConvexPolygon> obstacles,
                            const ConvexPolygon& bounds) {
  for (const auto& v : footprint.vertices()) {
    if (!bounds.ContainsStrictly(v)) return false;
  }
  for (const auto& obstacle : obstacles) {
    if (PolygonsIntersect(footprint, obstacle)) return false;
  }
  return true;
}

inline bool PoseIsFree(const Pose& pose, const VehicleParams& vehicle,
                       std::span<const ConvexPolygon> obstacles,
                       const ConvexPolygon& bounds) {
  // Same test as FootprintIsFree(Footprint(...)) without building a polygon.
  const auto corners = internal::FootprintCorners(pose, vehicle);
  Aabb box{corners[0].x, corners[0].y, corners[0].x, corners[0].y};
  for (const auto& v : corners) {
    if (!bounds.ContainsStrictly(v)) return false;
    box.min_x = std::min(box.min_x, v.x);
    box.min_y = std::min(box.min_y, v.y);
    box.max_x = std::max(box.max_x, v.x);
    box.max_y = std::max(box.max_y, v.y);
  }
  for (const auto& obstacle : obstacles) {
    if (!box.Overlaps(obstacle.bounding_box())) continue;
    if (!internal::HasSeparatingEdge(corners, obstacle.vertices()) &&
        !internal::HasSeparatingEdge(obstacle.vertices(), corners)) {
      return false;
    }
  }
  return true;
}

/// Signed curvature of the circle through three points; positive for left turns.
inline double MengerCurvature(Point2 p0, Point2 p1, Point2 p2) {
  const double a = Distance(p0, p1);
  const double b = Distance(p1, p2);
  const double c = Distance(p0, p2);
  if (a == 0.0 || b == 0.0) {
    throw DomainError("menger curvature needs distinct consecutive points");
  }
  if (c == 0.0) return 0.0;
  return 2.0 * Cross(p1 - p0, p2 - p1) / (a * b * c);
}

}  // namespace openspace
