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
 * @brief Scenario files: one `key value...` entry per line.
 *
 *   name parallel_parking
 *   bounds box -13 -3 13 7
 *   obstacle box -13 -3 -4 -0.5
 *   obstacle polygon 0 0 2 0 1 1
 *   start -6 2.5 0
 *   goal -1.35 -1.75 0
 *   vehicle.wheelbase 2.8
 *   search.max_steering 0.4668
 *
 * `#` starts a comment. name, bounds, start and goal are required; config
 * keys default to the struct defaults. Unknown or repeated keys are errors.
 */

#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "openspace/dliaps.hpp"
#include "openspace/errors.hpp"
#include "openspace/geometry.hpp"
#include "openspace/hybrid_astar.hpp"
#include "openspace/pjso.hpp"

namespace openspace {

struct Scenario {
  std::string name;
  ConvexPolygon bounds;
  std::vector<ConvexPolygon> obstacles;
  Pose start;
  Pose goal;
  VehicleParams vehicle;
  SearchConfig search;
  SmootherConfig smoother;
  SpeedConfig speed;

  /// Configs, then start and goal footprints.
  void Validate() const {
    vehicle.Validate();
    search.Validate(vehicle);
    smoother.Validate();
    speed.Validate();
    if (bounds.size() < 3) throw InputError("bounds missing");
    if (!PoseIsFree(start, vehicle, obstacles, bounds)) throw InputError("start in collision");
    if (!PoseIsFree(goal, vehicle, obstacles, bounds)) throw InputError("goal in collision");
  }

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

namespace internal {

struct ScenarioField {
  const char* key;
  std::variant<double*, int*> target;
};

inline std::vector<ScenarioField> ScenarioFields(Scenario& s) {
  auto& v = s.vehicle;
  auto& h = s.search;
  auto& m = s.smoother;
  auto& p = s.speed;
  return {
      {"vehicle.wheelbase", &v.wheelbase},
      {"vehicle.front_overhang", &v.front_overhang},
      {"vehicle.rear_overhang", &v.rear_overhang},
      {"vehicle.width", &v.width},
      {"vehicle.max_curvature", &v.max_curvature},
      {"search.step_size", &h.step_size},
      {"search.steering_resolution", &h.steering_resolution},
      {"search.max_steering", &h.max_steering},
      {"search.xy_bin", &h.xy_bin},
      {"search.theta_bin", &h.theta_bin},
      {"search.reverse_penalty", &h.reverse_penalty},
      {"search.gear_switch_penalty", &h.gear_switch_penalty},
      {"search.connect_distance", &h.connect_distance},
      {"search.collision_margin", &h.collision_margin},
      {"search.max_expansions", &h.max_expansions},
      {"smoother.r_min", &m.r_min},
      {"smoother.delta_s", &m.delta_s},
      {"smoother.alpha", &m.alpha},
      {"smoother.rho", &m.rho},
      {"smoother.gamma_plus", &m.gamma_plus},
      {"smoother.gamma_minus", &m.gamma_minus},
      {"smoother.f_tol", &m.f_tol},
      {"smoother.x_tol", &m.x_tol},
      {"smoother.c_tol", &m.c_tol},
      {"smoother.beta", &m.beta},
      {"smoother.mu0", &m.mu0},
      {"smoother.t0", &m.t0},
      {"smoother.max_collision_iters", &m.max_collision_iters},
      {"smoother.max_penalty_iters", &m.max_penalty_iters},
      {"smoother.max_subproblem_iters", &m.max_subproblem_iters},
      {"smoother.max_trust_iters", &m.max_trust_iters},
      {"smoother.wall_clock_budget", &m.wall_clock_budget},
      {"smoother.qp_max_iterations", &m.qp_max_iterations},
      {"smoother.bubble_margin", &m.bubble_margin},
      {"smoother.bubble_min", &m.bubble_min},
      {"smoother.bubble_max", &m.bubble_max},
      {"smoother.collision_margin", &m.collision_margin},
      {"speed.delta_t", &p.delta_t},
      {"speed.v_max", &p.v_max},
      {"speed.v_max_backward", &p.v_max_backward},
      {"speed.a_max", &p.a_max},
      {"speed.a_min", &p.a_min},
      {"speed.jerk_max", &p.jerk_max},
      {"speed.jerk_min", &p.jerk_min},
      {"speed.lateral_a_max", &p.lateral_a_max},
      {"speed.r", &p.r},
      {"speed.w_sf", &p.w_sf},
      {"speed.w_jerk", &p.w_jerk},
      {"speed.w_acc", &p.w_acc},
      {"speed.arrival_tol", &p.arrival_tol},
  };
}

class LineError {
 public:
  LineError(std::string source, int line) : prefix_(std::move(source) + ":" + std::to_string(line)) {}
  [[noreturn]] void Fail(const std::string& what) const {
    throw InputError(prefix_ + ": " + what);
  }

 private:
  std::string prefix_;
};

inline double ParseDouble(std::string_view tok, const std::string& field, const LineError& at) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    at.Fail(field + ": '" + std::string(tok) + "' is not a finite number");
  }
  return v;
}

inline int ParseInt(std::string_view tok, const std::string& field, const LineError& at) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    at.Fail(field + ": '" + std::string(tok) + "' is not an integer");
  }
  return v;
}

inline ConvexPolygon ParsePolygon(const std::vector<std::string>& tok, const std::string& field,
                                  const LineError& at) {
  if (tok.size() < 2) at.Fail(field + ": expected 'box' or 'polygon'");
  std::vector<double> nums;
  for (std::size_t i = 2; i < tok.size(); ++i) nums.push_back(ParseDouble(tok[i], field, at));
  std::vector<Point2> v;
  if (tok[1] == "box") {
    if (nums.size() != 4) at.Fail(field + ": box takes min_x min_y max_x max_y");
    if (!(nums[0] < nums[2] && nums[1] < nums[3])) at.Fail(field + ": box has min >= max");
    v = {{nums[0], nums[1]}, {nums[2], nums[1]}, {nums[2], nums[3]}, {nums[0], nums[3]}};
  } else if (tok[1] == "polygon") {
    if (nums.size() % 2 != 0) at.Fail(field + ": polygon needs x y pairs");
    for (std::size_t i = 0; i < nums.size(); i += 2) v.push_back({nums[i], nums[i + 1]});
  } else {
    at.Fail(field + ": unknown shape '" + tok[1] + "'");
  }
  try {
    return ConvexPolygon(std::move(v));
  } catch (const InputError& e) {
    at.Fail(field + ": " + e.what());
  }
}

inline Pose ParsePose(const std::vector<std::string>& tok, const LineError& at) {
  if (tok.size() != 4) at.Fail(tok[0] + ": expected x y heading");
  return Pose(ParseDouble(tok[1], tok[0], at), ParseDouble(tok[2], tok[0], at),
              ParseDouble(tok[3], tok[0], at));
}

inline bool ValidName(std::string_view name) {
  if (name.empty()) return false;
  for (char c : name) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) {
      return false;
    }
  }
  return true;
}

}  // namespace internal

/// Parses and validates a scenario. `source` prefixes error messages.
inline Scenario ParseScenario(std::istream& in, const std::string& source = "<scenario>") {
  Scenario s;
  auto fields = internal::ScenarioFields(s);
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const internal::LineError at(source, line_no);
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    const std::string& key = tok[0];
    if (key == "obstacle") {
      const std::string field = "obstacle " + std::to_string(s.obstacles.size() + 1);
      s.obstacles.push_back(internal::ParsePolygon(tok, field, at));
      continue;
    }
    if (!seen.insert(key).second) at.Fail(key + ": repeated");
    if (key == "name") {
      if (tok.size() != 2 || !internal::ValidName(tok[1])) {
        at.Fail("name: expected one word of letters, digits, '_', '-' or '.'");
      }
      s.name = tok[1];
    } else if (key == "bounds") {
      s.bounds = internal::ParsePolygon(tok, "bounds", at);
    } else if (key == "start") {
      s.start = internal::ParsePose(tok, at);
    } else if (key == "goal") {
      s.goal = internal::ParsePose(tok, at);
    } else {
      auto it = std::find_if(fields.begin(), fields.end(),
                             [&](const auto& f) { return key == f.key; });
      if (it == fields.end()) at.Fail("unknown field '" + key + "'");
      if (tok.size() != 2) at.Fail(key + ": expected one value");
      if (auto* d = std::get_if<double*>(&it->target)) {
        **d = internal::ParseDouble(tok[1], key, at);
      } else {
        *std::get<int*>(it->target) = internal::ParseInt(tok[1], key, at);
      }
    }
  }
  for (const char* required : {"name", "bounds", "start", "goal"}) {
    if (!seen.count(required)) {
      throw InputError(source + ": missing required field '" + required + "'");
    }
  }
  try {
    s.Validate();
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  }
  return s;
}

inline Scenario LoadScenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open scenario file " + path);
  return ParseScenario(in, path);
}

namespace internal {

inline std::string Exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void WritePolygon(std::ostream& os, const char* key, const ConvexPolygon& poly) {
  os << key << " polygon";
  for (const auto& v : poly.vertices()) os << ' ' << Exact(v.x) << ' ' << Exact(v.y);
  os << '\n';
}

}  // namespace internal

/// Writes every field with round-trip precision; ParseScenario reads it back.
inline void WriteScenario(std::ostream& os, const Scenario& scenario) {
  Scenario s = scenario;
  os << "name " << s.name << '\n';
  internal::WritePolygon(os, "bounds", s.bounds);
  for (const auto& o : s.obstacles) internal::WritePolygon(os, "obstacle", o);
  for (const auto& [key, pose] : {std::pair{"start", s.start}, std::pair{"goal", s.goal}}) {
    os << key << ' ' << internal::Exact(pose.position.x) << ' '
       << internal::Exact(pose.position.y) << ' ' << internal::Exact(pose.heading) << '\n';
  }
  for (const auto& f : internal::ScenarioFields(s)) {
    os << f.key << ' ';
    if (auto* d = std::get_if<double*>(&f.target)) {
      os << internal::Exact(**d);
    } else {
      os << *std::get<int*>(f.target);
    }
    os << '\n';
  }
}

}  // namespace openspace
