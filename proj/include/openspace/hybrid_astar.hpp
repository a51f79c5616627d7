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
 * @brief Hybrid A* over (x, y, heading) with bicycle-model arc primitives.
 *
 * Produces the collision-free, kinematically admissible but jerky reference
 * path that the smoother consumes. The heuristic is straight-line distance.
 * The goal is reached through a single-gear biarc shot once a pose is within
 * connect_distance; there is no Reeds-Shepp expansion.
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "openspace/errors.hpp"
#include "openspace/geometry.hpp"

namespace openspace {

struct SearchConfig {
  double step_size = 0.2;
  double steering_resolution = 0.026;
  /// Non-positive means "derive from the vehicle": atan(wheelbase * max_curvature).
  double max_steering = 0.0;
  double xy_bin = 0.3;
  double theta_bin = 0.1;
  double reverse_penalty = 2.0;
  double gear_switch_penalty = 1.0;
  /// Range of the biarc shot to the goal.
  double connect_distance = 2.0;
  /// Footprint inflation on every side for poses the search generates; the
  /// endpoints themselves are checked with the true footprint.
  double collision_margin = 0.1;
  int max_expansions = 200000;

  double EffectiveMaxSteering(const VehicleParams& vehicle) const {
    return max_steering > 0.0 ? max_steering
                              : std::atan(vehicle.wheelbase * vehicle.max_curvature);
  }

  void Validate(const VehicleParams& vehicle) const {
    if (!(step_size > 0.0)) throw InputError("search.step_size must be positive");
    if (!(xy_bin > 0.0)) throw InputError("search.xy_bin must be positive");
    if (!(theta_bin > 0.0)) throw InputError("search.theta_bin must be positive");
    if (!(reverse_penalty >= 1.0)) throw InputError("search.reverse_penalty must be >= 1");
    if (!(gear_switch_penalty >= 0.0)) {
      throw InputError("search.gear_switch_penalty must be non-negative");
    }
    if (!(connect_distance >= xy_bin)) {
      throw InputError("search.connect_distance must be at least xy_bin");
    }
    if (!(collision_margin >= 0.0)) {
      throw InputError("search.collision_margin must be non-negative");
    }
    if (max_expansions <= 0) throw InputError("search.max_expansions must be positive");
    const double max_steer = EffectiveMaxSteering(vehicle);
    if (!(steering_resolution > 0.0) || steering_resolution > max_steer) {
      throw InputError("search.steering_resolution must lie in (0, max_steering]");
    }
    if (max_steer > std::atan(vehicle.wheelbase * vehicle.max_curvature) + 1e-12) {
      throw InputError("search.max_steering exceeds the vehicle's curvature limit");
    }
  }

  friend bool operator==(const SearchConfig&, const SearchConfig&) = default;
};

/// Search output. gears[i] is the direction of travel from poses[i] to
/// poses[i + 1]; the last entry repeats its predecessor.
struct ReferencePath {
  std::vector<Pose> poses;
  std::vector<Gear> gears;

  std::size_t size() const { return poses.size(); }

  int GearSwitches() const {
    int switches = 0;
    for (std::size_t i = 1; i + 1 < gears.size(); ++i) {
      if (gears[i] != gears[i - 1]) ++switches;
    }
    return switches;
  }

  double Length() const {
    double len = 0.0;
    for (std::size_t i = 1; i < poses.size(); ++i) {
      len += Distance(poses[i - 1].position, poses[i].position);
    }
    return len;
  }
};

struct SearchNode {
  Pose pose;
  Gear gear = Gear::kForward;
  /// False only for the start node, which has no incoming motion.
  bool has_gear = false;
  double cost = 0.0;
};

/// Steering angles from -max to +max at the configured spacing, including both
/// extremes and zero.
inline std::vector<double> SteeringSet(const VehicleParams& vehicle, const SearchConfig& config) {
  const double max_steer = config.EffectiveMaxSteering(vehicle);
  const double res = config.steering_resolution;
  std::vector<double> out;
  const int k = static_cast<int>(std::floor(max_steer / res - 1e-9));
  out.push_back(-max_steer);
  for (int i = -k; i <= k; ++i) out.push_back(i * res);
  out.push_back(max_steer);
  return out;
}

/// Advances `pose` by signed arc length `arc` at constant curvature.
inline Pose AdvanceArc(const Pose& pose, double curvature, double arc) {
  const double th = pose.heading;
  if (std::abs(curvature) < 1e-12) {
    return Pose(pose.position + arc * UnitVector(th), th);
  }
  const double dth = curvature * arc;
  const double r = 1.0 / curvature;
  const Point2 p{pose.position.x + r * (std::sin(th + dth) - std::sin(th)),
                 pose.position.y - r * (std::cos(th + dth) - std::cos(th))};
  return Pose(p, th + dth);
}

/// Two tangent-continuous circular arcs; headings are directions of travel.
struct Biarc {
  Point2 start;
  double start_heading = 0.0;
  Point2 joint;
  double joint_heading = 0.0;
  double curvature1 = 0.0, length1 = 0.0;
  double curvature2 = 0.0, length2 = 0.0;

  double Length() const { return length1 + length2; }

  /// Position and travel heading at arc length s from the start.
  Pose At(double s) const {
    if (s <= length1) return AdvanceArc(Pose(start, start_heading), curvature1, s);
    return AdvanceArc(Pose(joint, joint_heading), curvature2, std::min(s, Length()) - length1);
  }
};

namespace internal {

// Arc leaving `from` along `heading` that ends at `to`: (curvature, length,
// end heading). Nullopt when the arc would turn by half a circle or more.
inline std::optional<std::array<double, 3>> ArcTo(Point2 from, double heading, Point2 to) {
  const Point2 c = to - from;
  const double chord = c.Norm();
  const double alpha = NormalizeAngle(std::atan2(c.y, c.x) - heading);
  if (std::abs(alpha) >= 0.5 * std::numbers::pi) return std::nullopt;
  if (std::abs(alpha) < 1e-12) return std::array<double, 3>{0.0, chord, heading};
  return std::array<double, 3>{2.0 * std::sin(alpha) / chord, alpha * chord / std::sin(alpha),
                               heading + 2.0 * alpha};
}

}  // namespace internal

/**
 * Equal-tangent biarc from (p0, th0) to (p1, th1), headings being directions
 * of travel. Nullopt for coincident points or when either arc would turn by a
 * half circle or more.
 */
inline std::optional<Biarc> FitBiarc(Point2 p0, double th0, Point2 p1, double th1) {
  const Point2 v = p1 - p0;
  const double vv = v.SquaredNorm();
  if (vv < 1e-18) return std::nullopt;
  const Point2 t0 = UnitVector(th0);
  const Point2 t1 = UnitVector(th1);
  const double vt = Dot(v, t0 + t1);
  const double denom = 2.0 * (1.0 - Dot(t0, t1));
  double d;
  if (denom < 1e-12) {
    const double vt1 = Dot(v, t1);
    if (vt1 <= 0.0) return std::nullopt;
    d = vv / (4.0 * vt1);
  } else {
    d = (-vt + std::sqrt(vt * vt + denom * vv)) / denom;
  }
  if (!(d > 0.0)) return std::nullopt;
  const Point2 joint = 0.5 * ((p0 + d * t0) + (p1 - d * t1));
  const auto a1 = internal::ArcTo(p0, th0, joint);
  if (!a1) return std::nullopt;
  const auto a2 = internal::ArcTo(joint, (*a1)[2], p1);
  if (!a2) return std::nullopt;
  Biarc b;
  b.start = p0;
  b.start_heading = th0;
  b.joint = joint;
  b.joint_heading = (*a1)[2];
  b.curvature1 = (*a1)[0];
  b.length1 = (*a1)[1];
  b.curvature2 = (*a2)[0];
  b.length2 = (*a2)[1];
  return b;
}

/// One step of step_size for every (steering, direction) pair.
inline std::vector<SearchNode> Expand(const SearchNode& node, const VehicleParams& vehicle,
                                      const SearchConfig& config) {
  std::vector<SearchNode> out;
  const auto steering = SteeringSet(vehicle, config);
  out.reserve(2 * steering.size());
  for (const Gear gear : {Gear::kForward, Gear::kBackward}) {
    const double dir = GearSign(gear);
    double step_cost = config.step_size * (gear == Gear::kForward ? 1.0 : config.reverse_penalty);
    if (node.has_gear && node.gear != gear) step_cost += config.gear_switch_penalty;
    for (const double delta : steering) {
      const double curvature = std::tan(delta) / vehicle.wheelbase;
      SearchNode next;
      next.pose = AdvanceArc(node.pose, curvature, dir * config.step_size);
      next.gear = gear;
      next.has_gear = true;
      next.cost = node.cost + step_cost;
      out.push_back(next);
    }
  }
  return out;
}

namespace internal {

class SearchGrid {
 public:
  SearchGrid(const Aabb& box, const SearchConfig& config)
      : box_(box), xy_(config.xy_bin), th_(config.theta_bin) {
    nx_ = static_cast<int>(std::ceil((box.max_x - box.min_x) / xy_)) + 1;
    ny_ = static_cast<int>(std::ceil((box.max_y - box.min_y) / xy_)) + 1;
    nth_ = static_cast<int>(std::ceil(2.0 * std::numbers::pi / th_));
  }

  std::size_t cells() const {
    return static_cast<std::size_t>(nx_) * ny_ * nth_;
  }

  std::int64_t Key(const Pose& p) const {
    const int ix = std::clamp(static_cast<int>((p.position.x - box_.min_x) / xy_), 0, nx_ - 1);
    const int iy = std::clamp(static_cast<int>((p.position.y - box_.min_y) / xy_), 0, ny_ - 1);
    const int it = std::clamp(
        static_cast<int>((p.heading + std::numbers::pi) / th_), 0, nth_ - 1);
    return (static_cast<std::int64_t>(it) * ny_ + iy) * nx_ + ix;
  }

 private:
  Aabb box_;
  double xy_, th_;
  int nx_ = 0, ny_ = 0, nth_ = 0;
};

struct Primitive {
  double curvature;
  Gear gear;
};

struct NodeRecord {
  Pose pose;
  Gear gear;
  bool has_gear;
  double g;
  int parent;
  // Intermediate poses from the parent, excluding the parent, including this.
  std::vector<Pose> chain;
};

struct OpenEntry {
  double f;
  std::int64_t order;
  int node;
  bool operator>(const OpenEntry& o) const {
    if (f != o.f) return f > o.f;
    return order > o.order;
  }
};

}  // namespace internal

namespace internal {

/**
 * Hybrid A* from `start` toward `goal` with per-metre costs for the two
 * search directions. Each expansion chains single `step_size` arcs with a
 * fixed steering until the pose has covered a minimum arc and left the
 * parent's (x, y, heading) bin. Returned poses are spaced by at most
 * step_size; the final pose is the exact goal.
 */
inline ReferencePath SearchDirected(const Pose& start, const Pose& goal,
                                    std::span<const ConvexPolygon> obstacles,
                                    const ConvexPolygon& bounds, const VehicleParams& vehicle,
                                    const SearchConfig& config, double forward_weight,
                                    double backward_weight) {
  ReferencePath path;
  using internal::NodeRecord;
  using internal::OpenEntry;
  const internal::SearchGrid grid(bounds.bounding_box(), config);
  std::vector<std::uint8_t> closed(grid.cells(), 0);
  std::vector<double> best_g(grid.cells(), std::numeric_limits<double>::infinity());

  std::vector<internal::Primitive> primitives;
  for (const Gear gear : {Gear::kForward, Gear::kBackward}) {
    for (const double delta : SteeringSet(vehicle, config)) {
      primitives.push_back({std::tan(delta) / vehicle.wheelbase, gear});
    }
  }
  const double max_kappa = std::tan(config.EffectiveMaxSteering(vehicle)) / vehicle.wheelbase;
  // A primitive must be long enough to cross a bin diagonal and, at full
  // steer, a heading bin; otherwise it tends to land in a bin already closed
  // by a neighbouring primitive.
  const double min_arc = std::max(config.xy_bin * std::sqrt(2.0), config.theta_bin / max_kappa);
  const int min_chain = static_cast<int>(std::ceil(min_arc / config.step_size - 1e-9));
  const int max_chain = min_chain + 4;

  auto heuristic = [&](const Pose& p) { return Distance(p.position, goal.position); };
  const VehicleParams inflated = vehicle.Inflated(config.collision_margin);
  auto is_free = [&](const Pose& p) { return PoseIsFree(p, inflated, obstacles, bounds); };

  std::vector<NodeRecord> nodes;
  std::priority_queue<OpenEntry, std::vector<OpenEntry>, std::greater<>> open;
  std::int64_t order = 0;
  nodes.push_back({start, Gear::kForward, false, 0.0, -1, {}});
  best_g[grid.Key(start)] = 0.0;
  open.push({heuristic(start), order++, 0});

  // Biarc shot from `from` to the goal within the curvature limit, driven in
  // the arriving gear (either gear from the start node). Fills `tail` with
  // the connecting poses on success.
  Gear tail_gear = Gear::kForward;
  auto try_goal = [&](const Pose& from, bool has_gear, Gear gear, std::vector<Pose>& tail) {
    const double dist = Distance(from.position, goal.position);
    if (dist > config.connect_distance) return false;
    tail.clear();
    if (dist < 1e-9) {
      if (std::abs(NormalizeAngle(goal.heading - from.heading)) > 1e-9) return false;
      tail.push_back(goal);
      return true;
    }
    for (const Gear g : {Gear::kForward, Gear::kBackward}) {
      if (has_gear && g != gear) continue;
      const double flip = g == Gear::kBackward ? std::numbers::pi : 0.0;
      const auto arc =
          FitBiarc(from.position, from.heading + flip, goal.position, goal.heading + flip);
      if (!arc || std::abs(arc->curvature1) > max_kappa ||
          std::abs(arc->curvature2) > max_kappa) {
        continue;
      }
      const double len = arc->Length();
      const int steps = std::max(1, static_cast<int>(std::ceil(len / config.step_size - 1e-9)));
      tail.clear();
      bool free = true;
      for (int k = 1; k <= steps && free; ++k) {
        if (k == steps) {
          tail.push_back(goal);
          break;
        }
        const Pose t = arc->At(len * k / steps);
        const Pose p(t.position, t.heading - flip);
        free = is_free(p);
        tail.push_back(p);
      }
      if (free) {
        tail_gear = g;
        return true;
      }
    }
    return false;
  };

  // Assembles the path ending at node `idx`, then `partial` (poses along the
  // last primitive, driven in `partial_gear`), then `tail`.
  auto build = [&](int idx, const std::vector<Pose>& partial, Gear partial_gear,
                   const std::vector<Pose>& tail) {
    std::vector<int> chain_nodes;
    for (int i = idx; i >= 0; i = nodes[i].parent) chain_nodes.push_back(i);
    std::reverse(chain_nodes.begin(), chain_nodes.end());
    path.poses.push_back(start);
    for (std::size_t c = 1; c < chain_nodes.size(); ++c) {
      const NodeRecord& n = nodes[chain_nodes[c]];
      for (const auto& p : n.chain) {
        path.poses.push_back(p);
        path.gears.push_back(n.gear);
      }
    }
    for (const auto& p : partial) {
      path.poses.push_back(p);
      path.gears.push_back(partial_gear);
    }
    if (Distance(path.poses.back().position, goal.position) < 1e-9 && tail.size() == 1) {
      path.poses.back() = goal;
    } else {
      for (const auto& p : tail) {
        path.poses.push_back(p);
        path.gears.push_back(tail_gear);
      }
    }
    // gears[i] describes the motion from poses[i] to poses[i + 1].
    path.gears.push_back(path.gears.back());
    return path;
  };

  int expansions = 0;
  std::vector<Pose> tail;
  while (!open.empty()) {
    const OpenEntry top = open.top();
    open.pop();
    const int idx = top.node;
    const std::int64_t key = grid.Key(nodes[idx].pose);
    if (closed[key]) continue;
    closed[key] = 1;

    if (try_goal(nodes[idx].pose, nodes[idx].has_gear, nodes[idx].gear, tail)) {
      return build(idx, {}, Gear::kForward, tail);
    }

    if (++expansions > config.max_expansions) break;

    const NodeRecord parent = nodes[idx];
    for (const auto& prim : primitives) {
      const double dir = GearSign(prim.gear);
      const double step_cost =
          config.step_size * (prim.gear == Gear::kForward ? forward_weight : backward_weight);
      double g = parent.g;
      if (parent.has_gear && parent.gear != prim.gear) g += config.gear_switch_penalty;
      std::vector<Pose> chain;
      Pose current = parent.pose;
      bool ok = true;
      std::int64_t next_key = key;
      for (int s = 0; s < max_chain; ++s) {
        current = AdvanceArc(current, prim.curvature, dir * config.step_size);
        g += step_cost;
        if (!is_free(current)) {
          ok = false;
          break;
        }
        chain.push_back(current);
        if (try_goal(current, true, prim.gear, tail)) return build(idx, chain, prim.gear, tail);
        next_key = grid.Key(current);
        if (s + 1 >= min_chain && next_key != key) break;
      }
      if (!ok || next_key == key || closed[next_key]) continue;
      if (g >= best_g[next_key]) continue;
      best_g[next_key] = g;
      nodes.push_back({current, prim.gear, true, g, idx, std::move(chain)});
      open.push({g + heuristic(current), order++, static_cast<int>(nodes.size()) - 1});
    }
  }
  throw NoPathError("hybrid a*: no path found after " + std::to_string(expansions) +
                    " expansions");
}

}  // namespace internal

inline Gear Opposite(Gear g) { return g == Gear::kForward ? Gear::kBackward : Gear::kForward; }

/// Reverses the driving order of a path; every motion flips gear.
inline ReferencePath ReversePath(const ReferencePath& path) {
  ReferencePath out;
  const std::size_t m = path.poses.size();
  out.poses.assign(path.poses.rbegin(), path.poses.rend());
  for (std::size_t j = 0; j + 1 < m; ++j) out.gears.push_back(Opposite(path.gears[m - 2 - j]));
  out.gears.push_back(out.gears.empty() ? Gear::kForward : out.gears.back());
  return out;
}

/**
 * Hybrid A* reference search. The tree is grown from the goal toward the
 * start, which is much cheaper when the goal sits in a confined slot, and the
 * result is returned in driving order: poses[0] is the start, the last pose is
 * the exact goal. Costs are charged for the driven direction.
 */
inline ReferencePath Search(const Pose& start, const Pose& goal,
                            std::span<const ConvexPolygon> obstacles,
                            const ConvexPolygon& bounds, const VehicleParams& vehicle,
                            const SearchConfig& config) {
  vehicle.Validate();
  config.Validate(vehicle);
  if (!PoseIsFree(start, vehicle, obstacles, bounds)) {
    throw InputError("start pose is in collision or outside the bounds");
  }
  if (!PoseIsFree(goal, vehicle, obstacles, bounds)) {
    throw InputError("goal pose is in collision or outside the bounds");
  }
  if (Distance(start.position, goal.position) < 1e-9 &&
      std::abs(NormalizeAngle(start.heading - goal.heading)) < 1e-9) {
    ReferencePath path;
    path.poses = {goal};
    path.gears = {Gear::kForward};
    return path;
  }
  // Forward motion in the search tree is driven backward, and vice versa.
  return ReversePath(internal::SearchDirected(goal, start, obstacles, bounds, vehicle, config,
                                              config.reverse_penalty, 1.0));
}

}  // namespace openspace
