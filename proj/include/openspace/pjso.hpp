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
 * @brief Piece-wise jerk speed optimization along one gear segment.
 *
 * Decision variables are [s; s'; s''] over n steps of length dt with
 * constant jerk inside every step. Each segment starts and ends at rest.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "openspace/errors.hpp"
#include "openspace/geometry.hpp"
#include "openspace/qp.hpp"

namespace openspace {

struct SpeedConfig {
  double delta_t = 0.05;
  /// Speed caps per gear; both are magnitudes.
  double v_max = 2.0;
  double v_max_backward = 1.0;
  double a_max = 1.0;
  double a_min = -1.0;
  double jerk_max = 1.0;
  double jerk_min = -1.0;
  double lateral_a_max = 1.0;
  /// Horizon expansion ratio over the bang-bang lower bound.
  double r = 1.2;
  double w_sf = 10.0;
  double w_jerk = 1.0;
  double w_acc = 1.0;
  /// Arrival check on the final state.
  double arrival_tol = 0.05;

  double VMax(Gear gear) const { return gear == Gear::kForward ? v_max : v_max_backward; }

  void Validate() const {
    if (!(delta_t > 0.0)) throw InputError("speed.delta_t must be positive");
    if (!(v_max > 0.0)) throw InputError("speed.v_max must be positive");
    if (!(v_max_backward > 0.0)) throw InputError("speed.v_max_backward must be positive");
    if (!(a_min < 0.0 && a_max > 0.0)) throw InputError("speed: need a_min < 0 < a_max");
    if (!(jerk_min < 0.0 && jerk_max > 0.0)) {
      throw InputError("speed: need jerk_min < 0 < jerk_max");
    }
    if (!(lateral_a_max > 0.0)) throw InputError("speed.lateral_a_max must be positive");
    if (!(r >= 1.0)) throw InputError("speed.r must be >= 1");
    if (!(w_sf >= 0.0 && w_jerk >= 0.0 && w_acc >= 0.0)) {
      throw InputError("speed weights must be non-negative");
    }
    if (!(arrival_tol > 0.0)) throw InputError("speed.arrival_tol must be positive");
  }

  friend bool operator==(const SpeedConfig&, const SpeedConfig&) = default;
};

struct SegmentSpec {
  double s_f = 0.0;
  double kappa_max = 0.0;
  Gear gear = Gear::kForward;

  void Validate() const {
    if (!(s_f > 0.0) || !std::isfinite(s_f)) throw InputError("segment length must be positive");
    if (!(kappa_max >= 0.0) || !std::isfinite(kappa_max)) {
      throw InputError("segment kappa_max must be non-negative");
    }
  }
};

struct SpeedProfile {
  std::vector<double> s;
  std::vector<double> s_dot;
  std::vector<double> s_ddot;
  double delta_t = 0.0;
  int n = 0;
  /// Horizon was doubled after the first attempt failed.
  bool extended = false;
  int qp_iterations = 0;

  double Duration() const { return n > 0 ? (n - 1) * delta_t : 0.0; }
};

/// Step count: r times the bang-bang lower bound, at least 4.
inline int SpeedHorizon(double s_f, double v_max, double a_max, double delta_t, double r) {
  const double n_min = (v_max * v_max + s_f * a_max) / (a_max * v_max * delta_t);
  // Guard against 168.00000000000003 style round-up.
  const double n = std::ceil(r * n_min * (1.0 - 1e-12));
  return std::max(4, static_cast<int>(n));
}

inline double CurvatureSpeedCap(double kappa_max, double lateral_a_max, double v_max) {
  if (kappa_max < 1e-6) return v_max;
  return std::min(v_max, std::sqrt(lateral_a_max / kappa_max));
}

/// Speed cap of a segment: gear limit tightened by the lateral acceleration bound.
inline double SegmentSpeedCap(const SegmentSpec& segment, const SpeedConfig& config) {
  return CurvatureSpeedCap(segment.kappa_max, config.lateral_a_max, config.VMax(segment.gear));
}

inline int SegmentHorizon(const SegmentSpec& segment, const SpeedConfig& config) {
  return SpeedHorizon(segment.s_f, SegmentSpeedCap(segment, config), config.a_max,
                      config.delta_t, config.r);
}

/**
 * Speed QP over n steps. Columns: s in [0, n), s' in [n, 2n), s'' in
 * [2n, 3n). Rows: one bound row per variable, then n - 1 velocity rows,
 * n - 1 position rows and n - 1 jerk rows.
 */
inline QpProblem BuildSpeedQp(const SegmentSpec& segment, const SpeedConfig& config, int n) {
  if (n < 2) throw InputError("speed horizon must have at least 2 steps");
  const double dt = config.delta_t;
  const double cap = SegmentSpeedCap(segment, config);
  const int nv = 3 * n;
  const int is = 0, iv = n, ia = 2 * n;

  std::vector<Triplet> p;
  Eigen::VectorXd q = Eigen::VectorXd::Zero(nv);
  for (int k = 0; k < n; ++k) {
    p.emplace_back(is + k, is + k, 2.0 * config.w_sf);
    q[is + k] = -2.0 * config.w_sf * segment.s_f;
    p.emplace_back(ia + k, ia + k, 2.0 * config.w_acc);
  }
  const double wj = 2.0 * config.w_jerk / (dt * dt);
  for (int k = 0; k + 1 < n; ++k) {
    p.emplace_back(ia + k, ia + k, wj);
    p.emplace_back(ia + k + 1, ia + k + 1, wj);
    p.emplace_back(ia + k, ia + k + 1, -wj);
  }

  const int m = nv + 3 * (n - 1);
  std::vector<Triplet> a;
  Eigen::VectorXd lo(m), hi(m);
  for (int k = 0; k < n; ++k) {
    a.emplace_back(is + k, is + k, 1.0);
    lo[is + k] = 0.0;
    hi[is + k] = segment.s_f;
    a.emplace_back(iv + k, iv + k, 1.0);
    lo[iv + k] = 0.0;
    hi[iv + k] = cap;
    a.emplace_back(ia + k, ia + k, 1.0);
    lo[ia + k] = config.a_min;
    hi[ia + k] = config.a_max;
  }
  // Start at rest at s = 0, stop completely at the end.
  hi[is] = 0.0;
  hi[iv] = 0.0;
  lo[ia] = hi[ia] = 0.0;
  hi[iv + n - 1] = 0.0;
  lo[ia + n - 1] = hi[ia + n - 1] = 0.0;

  int row = nv;
  for (int k = 0; k + 1 < n; ++k, ++row) {
    a.emplace_back(row, iv + k + 1, 1.0);
    a.emplace_back(row, iv + k, -1.0);
    a.emplace_back(row, ia + k, -0.5 * dt);
    a.emplace_back(row, ia + k + 1, -0.5 * dt);
    lo[row] = hi[row] = 0.0;
  }
  for (int k = 0; k + 1 < n; ++k, ++row) {
    a.emplace_back(row, is + k + 1, 1.0);
    a.emplace_back(row, is + k, -1.0);
    a.emplace_back(row, iv + k, -dt);
    a.emplace_back(row, ia + k, -dt * dt / 3.0);
    a.emplace_back(row, ia + k + 1, -dt * dt / 6.0);
    lo[row] = hi[row] = 0.0;
  }
  for (int k = 0; k + 1 < n; ++k, ++row) {
    a.emplace_back(row, ia + k + 1, 1.0);
    a.emplace_back(row, ia + k, -1.0);
    lo[row] = config.jerk_min * dt;
    hi[row] = config.jerk_max * dt;
  }

  QpProblem prob;
  prob.n_vars = nv;
  prob.quadratic_cost.resize(nv, nv);
  prob.quadratic_cost.setFromTriplets(p.begin(), p.end());
  prob.linear_cost = std::move(q);
  prob.constraint_matrix.resize(m, nv);
  prob.constraint_matrix.setFromTriplets(a.begin(), a.end());
  prob.lower = std::move(lo);
  prob.upper = std::move(hi);
  return prob;
}

/// Largest violation of the constant-jerk position and velocity recursions.
inline double DynamicsResidual(const SpeedProfile& p) {
  const double dt = p.delta_t;
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < p.s.size(); ++k) {
    const double rv = p.s_dot[k + 1] - p.s_dot[k] - 0.5 * dt * (p.s_ddot[k] + p.s_ddot[k + 1]);
    const double rs = p.s[k + 1] - p.s[k] - dt * p.s_dot[k] - dt * dt / 3.0 * p.s_ddot[k] -
                      dt * dt / 6.0 * p.s_ddot[k + 1];
    worst = std::max({worst, std::abs(rv), std::abs(rs)});
  }
  return worst;
}

/// Sum of squared jerks, the smoothness term of the objective.
inline double JerkCost(const SpeedProfile& p) {
  double sum = 0.0;
  for (std::size_t k = 0; k + 1 < p.s_ddot.size(); ++k) {
    const double j = (p.s_ddot[k + 1] - p.s_ddot[k]) / p.delta_t;
    sum += j * j;
  }
  return sum;
}

inline SpeedProfile ProfileFromSolution(const Eigen::VectorXd& x, int n, double delta_t) {
  SpeedProfile p;
  p.n = n;
  p.delta_t = delta_t;
  p.s.assign(x.data(), x.data() + n);
  p.s_dot.assign(x.data() + n, x.data() + 2 * n);
  p.s_ddot.assign(x.data() + 2 * n, x.data() + 3 * n);
  return p;
}

/// The optimum usually rests at s_f for a while; that tail is degenerate and
/// stalls ADMM, so speed QPs go to the interior-point method.
inline QpSettings SpeedQpSettings() {
  QpSettings s;
  s.method = QpMethod::kInteriorPoint;
  s.abs_tol = 1e-8;
  return s;
}

/**
 * Solves the speed QP for one segment. If the solve fails or the profile does
 * not arrive within arrival_tol, the horizon is doubled once.
 */
inline SpeedProfile OptimizeSegment(const SegmentSpec& segment, const SpeedConfig& config,
                                    const QpSettings& settings = SpeedQpSettings()) {
  segment.Validate();
  config.Validate();
  int n = SegmentHorizon(segment, config);
  std::string why;
  for (int attempt = 0; attempt < 2; ++attempt, n *= 2) {
    const auto sol = SolveQp(BuildSpeedQp(segment, config, n), settings);
    if (sol.status != QpStatus::kSolved) {
      why = std::string("qp ") + QpStatusName(sol.status);
      continue;
    }
    auto prof = ProfileFromSolution(sol.primal, n, config.delta_t);
    prof.extended = attempt > 0;
    prof.qp_iterations = sol.iterations;
    const double gap = std::abs(prof.s.back() - segment.s_f);
    if (gap > config.arrival_tol || std::abs(prof.s_dot.back()) > config.arrival_tol) {
      why = "final gap " + std::to_string(gap) + " m";
      continue;
    }
    if (DynamicsResidual(prof) > 1e-6) {
      throw SolverError("speed profile violates the dynamics by " +
                        std::to_string(DynamicsResidual(prof)));
    }
    return prof;
  }
  throw SolverError("speed optimization failed for a " + std::to_string(segment.s_f) +
                    " m segment with horizon " + std::to_string(n / 2) + ": " + why);
}

}  // namespace openspace
