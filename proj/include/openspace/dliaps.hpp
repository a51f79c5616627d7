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
 * @brief Dual-loop iterative anchoring path smoothing.
 *
 * The inner loops (penalty, sequential convex subproblems, trust region)
 * minimize the sum of squared second differences subject to the discrete
 * curvature bound
 *
 *   g_k = |2 P_k - P_{k-1} - P_{k+1}|^2 - |P_k - P_{k-1}|^4 / R^2 <= 0,
 *
 * each point confined to the square inscribed in its bubble. The outer loop
 * shrinks the bubbles of points whose footprint collides and smooths again.
 *
 * Internally every subproblem is scaled by c = R^2 / d^4, d being the point
 * spacing, so the curvature rows are O(1). The merit function and c_tol are
 * applied in the scaled units; merits in the trace are divided by c.
 */

#pragma once

#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "openspace/errors.hpp"
#include "openspace/geometry.hpp"
#include "openspace/hybrid_astar.hpp"
#include "openspace/qp.hpp"

namespace openspace {

enum class SmoothMode { kDliaps, kCes };

inline const char* SmoothModeName(SmoothMode mode) {
  return mode == SmoothMode::kDliaps ? "dliaps" : "ces";
}

struct SmootherConfig {
  /// Non-positive means 1 / vehicle.max_curvature.
  double r_min = 0.0;
  double delta_s = 0.1;
  double alpha = 10.0;
  double rho = 0.25;
  double gamma_plus = 1.5;
  double gamma_minus = 0.5;
  double f_tol = 1e-6;
  double x_tol = 1e-8;
  double c_tol = 1e-4;
  double beta = 0.5;
  double mu0 = 10.0;
  double t0 = 0.5;
  int max_collision_iters = 10;
  int max_penalty_iters = 8;
  int max_subproblem_iters = 30;
  int max_trust_iters = 12;
  double wall_clock_budget = 5.0;
  /// ADMM iteration cap per subproblem; the ratio test screens unfinished solves.
  int qp_max_iterations = 4000;
  /// Bubble radius = clamp(clearance - margin, bubble_min, bubble_max).
  /// bubble_min is also the floor below which a shrunk bubble becomes 0.
  double bubble_margin = 0.0;
  double bubble_min = 0.01;
  double bubble_max = 0.5;
  /// Footprint inflation for the collision check between outer iterations.
  double collision_margin = 0.05;

  double EffectiveRMin(const VehicleParams& vehicle) const {
    return r_min > 0.0 ? r_min : vehicle.min_turning_radius();
  }

  void Validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw InputError(std::string("smoother.") + name + " must be positive");
      }
    };
    if (!(r_min >= 0.0)) throw InputError("smoother.r_min must be non-negative");
    positive(delta_s, "delta_s");
    if (!(alpha > 1.0)) throw InputError("smoother.alpha must exceed 1");
    if (!(rho > 0.0 && rho < 1.0)) throw InputError("smoother.rho must lie in (0, 1)");
    if (!(gamma_plus > 1.0)) throw InputError("smoother.gamma_plus must exceed 1");
    if (!(gamma_minus > 0.0 && gamma_minus < 1.0)) {
      throw InputError("smoother.gamma_minus must lie in (0, 1)");
    }
    positive(f_tol, "f_tol");
    positive(x_tol, "x_tol");
    positive(c_tol, "c_tol");
    if (!(beta > 0.0 && beta < 1.0)) throw InputError("smoother.beta must lie in (0, 1)");
    positive(mu0, "mu0");
    positive(t0, "t0");
    if (max_collision_iters <= 0 || max_penalty_iters <= 0 || max_subproblem_iters <= 0 ||
        max_trust_iters <= 0 || qp_max_iterations <= 0) {
      throw InputError("smoother iteration budgets must be positive");
    }
    positive(wall_clock_budget, "wall_clock_budget");
    if (!(bubble_margin >= 0.0)) throw InputError("smoother.bubble_margin must be non-negative");
    if (!(collision_margin >= 0.0)) {
      throw InputError("smoother.collision_margin must be non-negative");
    }
    positive(bubble_min, "bubble_min");
    if (!(bubble_max >= bubble_min)) {
      throw InputError("smoother.bubble_max must be at least bubble_min");
    }
  }

  friend bool operator==(const SmootherConfig&, const SmootherConfig&) = default;
};

/// Algorithm state. The first two and last two points are pinned.
struct SmoothState {
  std::vector<Point2> points;
  std::vector<Bubble> bubbles;
  double mu = 10.0;
  double t = 0.5;
  Eigen::VectorXd slack;
};

struct SmoothIterations {
  int collision = 0;
  int penalty = 0;
  int subproblem = 0;
  int trust = 0;
  int qp_solves = 0;
};

/// One line of the optional convergence trace.
struct TraceRecord {
  int collision = 0;
  int penalty = 0;
  int subproblem = 0;
  int trust = 0;
  double mu = 0.0;
  double t = 0.0;
  double merit = 0.0;
  double candidate_merit = 0.0;
  double max_g = 0.0;
  bool accepted = false;
};

/// Smoothing outcome for one gear segment.
struct SmoothResult {
  Gear gear = Gear::kForward;
  std::vector<Point2> points;
  std::vector<double> headings;
  std::vector<double> curvatures;
  /// False when the segment was too short to smooth and is passed through.
  bool smoothed = false;
  bool converged = false;
  bool collision_free = false;
  SmoothIterations iterations;
  double seconds = 0.0;
  /// Largest merit change over accepted steps (positive means an increase).
  double max_merit_increase = -std::numeric_limits<double>::infinity();
  /// Largest curvature residual g_k, unscaled and scaled by R^2 / d^4.
  double max_constraint = -std::numeric_limits<double>::infinity();
  double max_scaled_constraint = -std::numeric_limits<double>::infinity();
  std::vector<TraceRecord> trace;
};

/**
 * Uniform arc-length resampling of a polyline. The spacing is
 * length / round(length / delta_s), so both endpoints are kept exactly.
 * Returns nullopt when the polyline is shorter than 4 * delta_s.
 */
inline std::optional<std::vector<Point2>> Resample(std::span<const Point2> polyline,
                                                   double delta_s) {
  if (polyline.size() < 2) throw InputError("resample needs at least two points");
  if (!(delta_s > 0.0)) throw InputError("resample spacing must be positive");
  std::vector<double> cum(polyline.size(), 0.0);
  for (std::size_t i = 1; i < polyline.size(); ++i) {
    cum[i] = cum[i - 1] + Distance(polyline[i - 1], polyline[i]);
  }
  const double length = cum.back();
  if (length < 4.0 * delta_s - 1e-12) return std::nullopt;
  const int n = std::max(1, static_cast<int>(std::lround(length / delta_s)));
  const double h = length / n;
  std::vector<Point2> out;
  out.reserve(n + 1);
  out.push_back(polyline.front());
  std::size_t seg = 1;
  for (int k = 1; k < n; ++k) {
    const double s = k * h;
    while (seg + 1 < cum.size() && cum[seg] < s) ++seg;
    const double len = cum[seg] - cum[seg - 1];
    const double u = len > 0.0 ? (s - cum[seg - 1]) / len : 0.0;
    out.push_back(polyline[seg - 1] + u * (polyline[seg] - polyline[seg - 1]));
  }
  out.push_back(polyline.back());
  return out;
}

inline std::vector<Bubble> InitBubbles(std::span<const Point2> points,
                                       std::span<const ConvexPolygon> obstacles,
                                       const ConvexPolygon& bounds,
                                       const SmootherConfig& config) {
  const std::size_t n = points.size();
  std::vector<Bubble> bubbles(n);
  for (std::size_t k = 0; k < n; ++k) {
    bubbles[k].center = points[k];
    if (k < 2 || k + 2 >= n) continue;
    const double free = Clearance(points[k], obstacles, bounds) - config.bubble_margin;
    bubbles[k].radius = std::clamp(free, config.bubble_min, config.bubble_max);
  }
  return bubbles;
}

struct CurvatureEval {
  double value = 0.0;
  /// d g / d (x_{k-1}, y_{k-1}, x_k, y_k, x_{k+1}, y_{k+1}).
  std::array<double, 6> gradient{};
};

inline CurvatureEval CurvatureConstraintEval(Point2 p_prev, Point2 p, Point2 p_next,
                                             double r_min) {
  const Point2 v = 2.0 * p - p_prev - p_next;
  const Point2 w = p - p_prev;
  const double ww = w.SquaredNorm();
  const double inv_r2 = 1.0 / (r_min * r_min);
  CurvatureEval e;
  e.value = v.SquaredNorm() - ww * ww * inv_r2;
  const Point2 quartic = (4.0 * ww * inv_r2) * w;
  const Point2 d_prev = -2.0 * v + quartic;
  const Point2 d_mid = 4.0 * v - quartic;
  const Point2 d_next = -2.0 * v;
  e.gradient = {d_prev.x, d_prev.y, d_mid.x, d_mid.y, d_next.x, d_next.y};
  return e;
}

namespace internal {

inline double SmoothnessCost(std::span<const Point2> p) {
  double f = 0.0;
  for (std::size_t k = 1; k + 1 < p.size(); ++k) {
    f += (2.0 * p[k] - p[k - 1] - p[k + 1]).SquaredNorm();
  }
  return f;
}

inline double Spacing(std::span<const Point2> p) { return Distance(p[0], p[1]); }

inline bool IsPinned(std::size_t k, std::size_t n) { return k < 2 || k + 2 >= n; }

// Per-coordinate bounds on the displacement from `prev`: the inscribed
// bubble square intersected with the trust box; pinned points are fixed.
inline void DisplacementBounds(const SmoothState& state, std::span<const Point2> prev,
                               double trust, Eigen::VectorXd& lower, Eigen::VectorXd& upper) {
  const std::size_t n = prev.size();
  for (std::size_t k = 0; k < n; ++k) {
    const Bubble& b = state.bubbles[k];
    const double half = IsPinned(k, n) ? 0.0 : b.radius / std::numbers::sqrt2;
    const double c[2] = {b.center.x, b.center.y};
    const double p[2] = {prev[k].x, prev[k].y};
    for (int d = 0; d < 2; ++d) {
      double lo = c[d] - half - p[d];
      double hi = c[d] + half - p[d];
      if (!IsPinned(k, n)) {
        lo = std::max(lo, -trust);
        hi = std::min(hi, trust);
      }
      // `prev` lies in its box, so lo <= 0 <= hi up to rounding.
      lo = std::min(lo, 0.0);
      hi = std::max(hi, 0.0);
      if (IsPinned(k, n)) lo = hi = c[d] - p[d];
      lower[2 * k + d] = lo;
      upper[2 * k + d] = hi;
    }
  }
}

// Rows tying the lifted curvature variables to the displacements:
// u_k = (R / d^2) (2 P_k - P_{k-1} - P_{k+1}) with P = prev + delta. Columns of
// u start at `u_col`; rows start at `row`.
inline void AddLiftRows(std::span<const Point2> prev, double gain, int u_col, int& row,
                        std::vector<Triplet>& a_trip, Eigen::VectorXd& lower,
                        Eigen::VectorXd& upper) {
  const int n = static_cast<int>(prev.size());
  for (int k = 1; k + 1 < n; ++k) {
    const Point2 v = 2.0 * prev[k] - prev[k - 1] - prev[k + 1];
    for (int c = 0; c < 2; ++c) {
      a_trip.emplace_back(row, 2 * (k - 1) + c, -gain);
      a_trip.emplace_back(row, 2 * k + c, 2.0 * gain);
      a_trip.emplace_back(row, 2 * (k + 1) + c, -gain);
      a_trip.emplace_back(row, u_col + 2 * (k - 1) + c, -1.0);
      lower[row] = upper[row] = -gain * (c == 0 ? v.x : v.y);
      ++row;
    }
  }
}

}  // namespace internal

/**
 * Convex subproblem around `previous_points`, in scaled units. Decision
 * vector:
 *
 *   [dx_0, dy_0, ..., dx_{n-1}, dy_{n-1} | u_1, ..., u_{n-2} | s_1, ..., s_{n-2}]
 *
 * (dx, dy) is each point's displacement from `previous_points`; u_k (two
 * entries each) is the second difference scaled by R / d^2, so that the cost
 * sum |u_k|^2 is c times the smoothness cost and |u_k| <= 1 is the curvature
 * bound at uniform spacing; s_k is the slack of the linearized curvature row.
 * Rows: 2n displacement bounds, 2(n-2) equalities defining u, n-2 linearized
 * curvature rows, n-2 slack lower bounds.
 */
inline QpProblem BuildSubproblem(const SmoothState& state, std::span<const Point2> previous_points,
                                 double r_min) {
  const std::span<const Point2> prev = previous_points;
  const int n = static_cast<int>(prev.size());
  if (n < 5 || static_cast<int>(state.bubbles.size()) != n) {
    throw InputError("subproblem needs at least 5 points with matching bubbles");
  }
  const double d = internal::Spacing(prev);
  const double gain = r_min / (d * d);
  const int nx = 2 * n;
  const int nu = 2 * (n - 2);
  const int ns = n - 2;
  QpProblem prob;
  prob.n_vars = nx + nu + ns;
  prob.linear_cost = Eigen::VectorXd::Zero(prob.n_vars);
  std::vector<Triplet> p_trip;
  for (int i = 0; i < nu; ++i) p_trip.emplace_back(nx + i, nx + i, 2.0);
  for (int k = 0; k < ns; ++k) prob.linear_cost[nx + nu + k] = state.mu;
  prob.quadratic_cost.resize(prob.n_vars, prob.n_vars);
  prob.quadratic_cost.setFromTriplets(p_trip.begin(), p_trip.end());

  const int m = nx + nu + 2 * ns;
  std::vector<Triplet> a_trip;
  prob.lower.resize(m);
  prob.upper.resize(m);
  for (int i = 0; i < nx; ++i) a_trip.emplace_back(i, i, 1.0);
  Eigen::VectorXd lo(nx), hi(nx);
  internal::DisplacementBounds(state, prev, state.t, lo, hi);
  prob.lower.head(nx) = lo;
  prob.upper.head(nx) = hi;
  int row = nx;
  internal::AddLiftRows(prev, gain, nx, row, a_trip, prob.lower, prob.upper);
  for (int k = 1; k + 1 < n; ++k) {
    // c g ~ c g0 + 2 u0 . (u - u0) - (4 |w0|^2 / d^4) w0 . (dP_k - dP_{k-1})
    const Point2 u0 = gain * (2.0 * prev[k] - prev[k - 1] - prev[k + 1]);
    const Point2 w0 = prev[k] - prev[k - 1];
    const double cw = 4.0 * w0.SquaredNorm() / (d * d * d * d);
    const double g0 =
        gain * gain * CurvatureConstraintEval(prev[k - 1], prev[k], prev[k + 1], r_min).value;
    const int uc = nx + 2 * (k - 1);
    a_trip.emplace_back(row, uc, 2.0 * u0.x);
    a_trip.emplace_back(row, uc + 1, 2.0 * u0.y);
    a_trip.emplace_back(row, 2 * k, -cw * w0.x);
    a_trip.emplace_back(row, 2 * k + 1, -cw * w0.y);
    a_trip.emplace_back(row, 2 * (k - 1), cw * w0.x);
    a_trip.emplace_back(row, 2 * (k - 1) + 1, cw * w0.y);
    a_trip.emplace_back(row, nx + nu + (k - 1), -1.0);
    prob.lower[row] = -kQpInfinity;
    prob.upper[row] = 2.0 * u0.SquaredNorm() - g0;
    ++row;
  }
  for (int k = 0; k < ns; ++k) {
    a_trip.emplace_back(row, nx + nu + k, 1.0);
    prob.lower[row] = 0.0;
    prob.upper[row] = kQpInfinity;
    ++row;
  }
  prob.constraint_matrix.resize(m, prob.n_vars);
  prob.constraint_matrix.setFromTriplets(a_trip.begin(), a_trip.end());
  return prob;
}

/// Comparison-mode bound on |2 P_k - P_{k-1} - P_{k+1}|^2: the quartic term
/// frozen at the reference spacing, |ref_k - ref_{k-1}|^4 / R^2.
inline double CesBound(Point2 ref_prev, Point2 ref, double r_min) {
  const double w2 = (ref - ref_prev).SquaredNorm();
  return w2 * w2 / (r_min * r_min);
}

/// Number of facets of the polygon that outer-approximates the CES norm ball.
inline constexpr int kCesFacets = 16;

/**
 * Comparison-mode subproblem: the quartic term is frozen at the reference
 * spacing, |2 P_k - P_{k-1} - P_{k+1}| <= |ref_k - ref_{k-1}|^2 / R, and that
 * norm ball is replaced by its circumscribed 16-gon so the QP stays linear. No
 * slack, no trust region. Decision vector: [displacements from state.points |
 * u_1, ..., u_{n-2}] as in BuildSubproblem.
 */
inline QpProblem CesSubproblem(const SmoothState& state, std::span<const Point2> reference,
                               double r_min) {
  const std::span<const Point2> prev(state.points);
  const int n = static_cast<int>(prev.size());
  if (n < 5 || static_cast<int>(reference.size()) != n ||
      static_cast<int>(state.bubbles.size()) != n) {
    throw InputError("ces subproblem needs at least 5 points with matching reference");
  }
  const double d = internal::Spacing(prev);
  const double gain = r_min / (d * d);
  const int nx = 2 * n;
  const int nu = 2 * (n - 2);
  QpProblem prob;
  prob.n_vars = nx + nu;
  prob.linear_cost = Eigen::VectorXd::Zero(prob.n_vars);
  std::vector<Triplet> p_trip;
  for (int i = 0; i < nu; ++i) p_trip.emplace_back(nx + i, nx + i, 2.0);
  prob.quadratic_cost.resize(prob.n_vars, prob.n_vars);
  prob.quadratic_cost.setFromTriplets(p_trip.begin(), p_trip.end());

  const int m = nx + nu + kCesFacets * (n - 2);
  std::vector<Triplet> a_trip;
  prob.lower.resize(m);
  prob.upper.resize(m);
  for (int i = 0; i < nx; ++i) a_trip.emplace_back(i, i, 1.0);
  Eigen::VectorXd lo(nx), hi(nx);
  internal::DisplacementBounds(state, prev, kQpInfinity, lo, hi);
  prob.lower.head(nx) = lo;
  prob.upper.head(nx) = hi;
  int row = nx;
  internal::AddLiftRows(prev, gain, nx, row, a_trip, prob.lower, prob.upper);
  for (int k = 1; k + 1 < n; ++k) {
    const double radius = gain * std::sqrt(CesBound(reference[k - 1], reference[k], r_min));
    const int uc = nx + 2 * (k - 1);
    for (int j = 0; j < kCesFacets; ++j) {
      const double phi = 2.0 * std::numbers::pi * j / kCesFacets;
      a_trip.emplace_back(row, uc, std::cos(phi));
      a_trip.emplace_back(row, uc + 1, std::sin(phi));
      prob.lower[row] = -kQpInfinity;
      prob.upper[row] = radius;
      ++row;
    }
  }
  prob.constraint_matrix.resize(m, prob.n_vars);
  prob.constraint_matrix.setFromTriplets(a_trip.begin(), a_trip.end());
  return prob;
}

namespace internal {

// Merit in scaled units: c (sum |v_k|^2) + mu sum max(0, c g_k).
struct Merit {
  double r_min = 1.0;
  double spacing = 1.0;

  double gain() const { return r_min / (spacing * spacing); }
  double scale() const { return gain() * gain(); }

  double MaxScaledConstraint(std::span<const Point2> p) const {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k + 1 < p.size(); ++k) {
      worst = std::max(worst,
                       scale() * CurvatureConstraintEval(p[k - 1], p[k], p[k + 1], r_min).value);
    }
    return worst;
  }

  double Exact(std::span<const Point2> p, double mu) const {
    double penalty = 0.0;
    for (std::size_t k = 1; k + 1 < p.size(); ++k) {
      penalty += std::max(
          0.0, scale() * CurvatureConstraintEval(p[k - 1], p[k], p[k + 1], r_min).value);
    }
    return scale() * SmoothnessCost(p) + mu * penalty;
  }

  // Merit with every g_k linearized about `lin`.
  double Model(std::span<const Point2> p, std::span<const Point2> lin, double mu) const {
    double penalty = 0.0;
    for (std::size_t k = 1; k + 1 < p.size(); ++k) {
      const auto e = CurvatureConstraintEval(lin[k - 1], lin[k], lin[k + 1], r_min);
      const double delta[6] = {p[k - 1].x - lin[k - 1].x, p[k - 1].y - lin[k - 1].y,
                               p[k].x - lin[k].x,         p[k].y - lin[k].y,
                               p[k + 1].x - lin[k + 1].x, p[k + 1].y - lin[k + 1].y};
      double g = e.value;
      for (int j = 0; j < 6; ++j) g += e.gradient[j] * delta[j];
      penalty += std::max(0.0, scale() * g);
    }
    return scale() * SmoothnessCost(p) + mu * penalty;
  }
};

inline std::vector<Point2> ApplyDisplacement(std::span<const Point2> prev,
                                             const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& lower,
                                             const Eigen::VectorXd& upper) {
  std::vector<Point2> out(prev.begin(), prev.end());
  for (std::size_t k = 0; k < prev.size(); ++k) {
    // Clamp away the solver's feasibility tolerance.
    out[k].x += std::clamp(x[2 * k], lower[2 * k], upper[2 * k]);
    out[k].y += std::clamp(x[2 * k + 1], lower[2 * k + 1], upper[2 * k + 1]);
  }
  return out;
}

inline bool BudgetExceeded(std::chrono::steady_clock::time_point start, double budget) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >
         budget;
}

}  // namespace internal

struct InnerResult {
  std::vector<Point2> points;
  bool converged = false;
  double mu = 0.0;
  double max_merit_increase = -std::numeric_limits<double>::infinity();
};

/**
 * Penalty, subproblem and trust-region loops on one set of bubbles. The
 * first two and last two points are held fixed. `trace`, when given,
 * receives one record per trust-region iteration.
 */
inline InnerResult SmoothInner(std::span<const Point2> points, std::span<const Bubble> bubbles,
                               double r_min, const SmootherConfig& config,
                               SmoothIterations* iterations = nullptr,
                               std::vector<TraceRecord>* trace = nullptr, int collision_iter = 0,
                               std::optional<std::chrono::steady_clock::time_point> start = {}) {
  if (points.size() < 5 || bubbles.size() != points.size()) {
    throw InputError("smooth_inner needs at least 5 points with matching bubbles");
  }
  const auto t_start = start.value_or(std::chrono::steady_clock::now());
  SmoothIterations local;
  SmoothIterations& it = iterations != nullptr ? *iterations : local;
  SmoothState state;
  state.points.assign(points.begin(), points.end());
  state.bubbles.assign(bubbles.begin(), bubbles.end());
  state.mu = config.mu0;
  state.t = config.t0;
  const double d = internal::Spacing(state.points);
  const internal::Merit merit{r_min, d};
  double max_half = 0.0;
  for (const auto& b : bubbles) max_half = std::max(max_half, b.radius / std::numbers::sqrt2);
  const double t_max = std::max(config.t0, max_half);

  InnerResult result;
  QpSettings qp_settings;
  qp_settings.max_iterations = config.qp_max_iterations;
  const int nx = 2 * static_cast<int>(points.size());
  bool out_of_time = false;
  for (int pen = 0; pen < config.max_penalty_iters && !out_of_time; ++pen) {
    ++it.penalty;
    for (int sub = 0; sub < config.max_subproblem_iters; ++sub) {
      ++it.subproblem;
      if (internal::BudgetExceeded(t_start, config.wall_clock_budget)) {
        out_of_time = true;
        break;
      }
      const std::vector<Point2> prev = state.points;
      QpSolver solver(BuildSubproblem(state, prev, r_min), qp_settings);
      Eigen::VectorXd lower = solver.problem().lower;
      Eigen::VectorXd upper = solver.problem().upper;
      const double m_prev = merit.Exact(prev, state.mu);
      bool accepted = false;
      bool stationary = false;
      double step = 0.0;
      // The last rejected candidate and its largest coordinate move. While it
      // fits the shrunk trust box it is also that box's QP optimum.
      std::vector<Point2> candidate;
      double moved = std::numeric_limits<double>::infinity();
      for (int tr = 0; tr < config.max_trust_iters; ++tr) {
        ++it.trust;
        if (moved > state.t) {
          if (tr > 0) {
            Eigen::VectorXd lo(nx), hi(nx);
            internal::DisplacementBounds(state, prev, state.t, lo, hi);
            lower.head(nx) = lo;
            upper.head(nx) = hi;
            solver.UpdateBounds(lower, upper);
          }
          ++it.qp_solves;
          const QpSolution sol = solver.Solve();
          if (sol.status == QpStatus::kPrimalInfeasible ||
              sol.status == QpStatus::kDualInfeasible) {
            throw SolverError(std::string("smoothing subproblem ") + QpStatusName(sol.status) +
                              " (penalty iteration " + std::to_string(pen) + ", subproblem " +
                              std::to_string(sub) + ", trust iteration " + std::to_string(tr) +
                              ")");
          }
          candidate = internal::ApplyDisplacement(prev, sol.primal, lower, upper);
          moved = 0.0;
          for (std::size_t k = 0; k < prev.size(); ++k) {
            moved = std::max({moved, std::abs(candidate[k].x - prev[k].x),
                              std::abs(candidate[k].y - prev[k].y)});
          }
        }
        const double m_new = merit.Exact(candidate, state.mu);
        const double m_model = merit.Model(candidate, prev, state.mu);
        const double model_improve = m_prev - m_model;
        const double true_improve = m_prev - m_new;
        const double tol = config.f_tol * std::max(1.0, std::abs(m_prev));
        TraceRecord rec{collision_iter, pen, sub, tr, state.mu, state.t, m_prev / merit.scale(),
                        m_new / merit.scale(), merit.MaxScaledConstraint(candidate), false};
        if (model_improve <= tol) {
          stationary = true;
          if (trace != nullptr) trace->push_back(rec);
          break;
        }
        if (true_improve / model_improve > config.rho) {
          step = moved;
          state.points = candidate;
          state.t = std::min(state.t * config.gamma_plus, t_max);
          accepted = true;
          result.max_merit_increase =
              std::max(result.max_merit_increase, -true_improve / merit.scale());
          rec.accepted = true;
          if (trace != nullptr) trace->push_back(rec);
          if (true_improve <= tol) stationary = true;
          break;
        }
        if (trace != nullptr) trace->push_back(rec);
        state.t *= config.gamma_minus;
        if (state.t < config.x_tol) {
          stationary = true;
          break;
        }
      }
      if (!accepted || stationary || step <= config.x_tol) break;
    }
    if (merit.MaxScaledConstraint(state.points) <= config.c_tol) {
      result.converged = !out_of_time;
      break;
    }
    if (pen + 1 < config.max_penalty_iters) state.mu *= config.alpha;
  }
  result.points = std::move(state.points);
  result.mu = state.mu;
  return result;
}

/// atan2 of forward differences, flipped by pi when driving backward; the last
/// point copies its predecessor.
inline std::vector<double> PathHeadings(std::span<const Point2> points, Gear gear) {
  const std::size_t n = points.size();
  std::vector<double> headings(n, 0.0);
  const double flip = gear == Gear::kBackward ? std::numbers::pi : 0.0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const Point2 d = points[k + 1] - points[k];
    headings[k] = NormalizeAngle(std::atan2(d.y, d.x) + flip);
  }
  if (n >= 2) headings[n - 1] = headings[n - 2];
  return headings;
}

/// Signed Menger curvature along the direction of travel; ends copy their
/// neighbour, fewer than three points give zeros.
inline std::vector<double> PathCurvatures(std::span<const Point2> points) {
  const std::size_t n = points.size();
  std::vector<double> kappa(n, 0.0);
  if (n < 3) return kappa;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    kappa[k] = MengerCurvature(points[k - 1], points[k], points[k + 1]);
  }
  kappa[0] = kappa[1];
  kappa[n - 1] = kappa[n - 2];
  return kappa;
}

namespace internal {

inline void FinishResult(SmoothResult& r, double r_min) {
  r.curvatures = PathCurvatures(r.points);
  if (r.points.size() >= 3) {
    const double d = Spacing(r.points);
    const double scale = r_min * r_min / (d * d * d * d);
    for (std::size_t k = 1; k + 1 < r.points.size(); ++k) {
      const double g =
          CurvatureConstraintEval(r.points[k - 1], r.points[k], r.points[k + 1], r_min).value;
      r.max_constraint = std::max(r.max_constraint, g);
      r.max_scaled_constraint = std::max(r.max_scaled_constraint, scale * g);
    }
  }
}

// Scales the bubbles of colliding points by beta; below bubble_min a bubble
// collapses to 0. Returns false when nothing could shrink.
inline bool ShrinkBubbles(std::vector<Bubble>& bubbles, std::span<const std::size_t> hits,
                          const SmootherConfig& config) {
  bool shrunk = false;
  for (const std::size_t k : hits) {
    if (bubbles[k].radius <= 0.0) continue;
    bubbles[k].radius *= config.beta;
    if (bubbles[k].radius < config.bubble_min) bubbles[k].radius = 0.0;
    shrunk = true;
  }
  return shrunk;
}

// Clamps each point into its bubble square; pinned points snap to centres.
inline void ClampIntoBubbles(std::vector<Point2>& p, std::span<const Bubble> bubbles) {
  const std::size_t n = p.size();
  for (std::size_t k = 0; k < n; ++k) {
    const Bubble& b = bubbles[k];
    const double half = IsPinned(k, n) ? 0.0 : b.radius / std::numbers::sqrt2;
    p[k].x = std::clamp(p[k].x, b.center.x - half, b.center.x + half);
    p[k].y = std::clamp(p[k].y, b.center.y - half, b.center.y + half);
  }
}

}  // namespace internal

/**
 * Smooths one constant-gear run of reference poses: resample, pin the end
 * headings, grow bubbles, then alternate inner smoothing and bubble shrinking
 * until the footprints are collision-free, no bubble can shrink further, or
 * the wall-clock budget is spent.
 */
inline SmoothResult SmoothSegment(std::span<const Pose> reference, Gear gear,
                                  std::span<const ConvexPolygon> obstacles,
                                  const ConvexPolygon& bounds, const VehicleParams& vehicle,
                                  const SmootherConfig& config,
                                  SmoothMode mode = SmoothMode::kDliaps) {
  if (reference.empty()) throw InputError("smoothing input path is empty");
  const auto t_start = std::chrono::steady_clock::now();
  const double r_min = config.EffectiveRMin(vehicle);
  SmoothResult r;
  r.gear = gear;
  std::vector<Point2> polyline;
  for (const auto& p : reference) polyline.push_back(p.position);
  std::optional<std::vector<Point2>> sampled;
  if (polyline.size() >= 2) sampled = Resample(polyline, config.delta_s);
  // Movable points are checked with a margin, since the trajectory also visits
  // poses between them. Pinned points cannot move and get the true footprint.
  const VehicleParams inflated = vehicle.Inflated(config.collision_margin);
  auto collisions = [&](const std::vector<Point2>& pts, const std::vector<double>& headings,
                        bool margin) {
    std::vector<std::size_t> hits;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const bool grow = margin && !internal::IsPinned(k, pts.size());
      if (!PoseIsFree(Pose(pts[k], headings[k]), grow ? inflated : vehicle, obstacles, bounds)) {
        hits.push_back(k);
      }
    }
    return hits;
  };

  if (!sampled) {
    // Too short to smooth; pass the reference through.
    r.points = polyline;
    r.headings.clear();
    for (const auto& p : reference) r.headings.push_back(p.heading);
    r.collision_free = collisions(r.points, r.headings, false).empty();
    r.converged = true;
    internal::FinishResult(r, r_min);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return r;
  }

  std::vector<Point2> pts = std::move(*sampled);
  const std::size_t n = pts.size();
  // Resampler spacing, reused by the heading pins.
  double length = 0.0;
  for (std::size_t i = 1; i < polyline.size(); ++i) {
    length += Distance(polyline[i - 1], polyline[i]);
  }
  const double h = length / static_cast<double>(n - 1);
  const double sign = GearSign(gear);
  pts[1] = pts[0] + (sign * h) * UnitVector(reference.front().heading);
  pts[n - 2] = pts[n - 1] - (sign * h) * UnitVector(reference.back().heading);
  const std::vector<Point2> ref_points = pts;

  auto bubbles = InitBubbles(pts, obstacles, bounds, config);
  r.smoothed = true;
  bool all_converged = true;
  for (int outer = 0; outer < config.max_collision_iters; ++outer) {
    ++r.iterations.collision;
    internal::ClampIntoBubbles(pts, bubbles);
    if (mode == SmoothMode::kDliaps) {
      auto inner = SmoothInner(pts, bubbles, r_min, config, &r.iterations, &r.trace, outer,
                               t_start);
      pts = std::move(inner.points);
      all_converged = inner.converged;
      r.max_merit_increase = std::max(r.max_merit_increase, inner.max_merit_increase);
    } else {
      SmoothState state;
      state.points = pts;
      state.bubbles = bubbles;
      QpSolver solver(CesSubproblem(state, ref_points, r_min));
      ++r.iterations.qp_solves;
      const auto sol = solver.Solve();
      if (sol.status == QpStatus::kSolved || sol.status == QpStatus::kMaxIterations) {
        pts = internal::ApplyDisplacement(pts, sol.primal, solver.problem().lower.head(2 * n),
                                          solver.problem().upper.head(2 * n));
        all_converged = sol.status == QpStatus::kSolved;
      } else {
        all_converged = false;
      }
    }
    const auto headings = PathHeadings(pts, gear);
    const auto hits = collisions(pts, headings, true);
    if (hits.empty()) {
      r.collision_free = true;
      break;
    }
    const bool shrunk = internal::ShrinkBubbles(bubbles, hits, config);
    if (!shrunk || internal::BudgetExceeded(t_start, config.wall_clock_budget)) break;
  }
  r.converged = all_converged;
  r.points = std::move(pts);
  r.headings = PathHeadings(r.points, gear);
  if (!r.collision_free) r.collision_free = collisions(r.points, r.headings, false).empty();
  internal::FinishResult(r, r_min);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return r;
}

/// Constant-gear runs of a reference path. Neighbouring runs share the pose
/// at the gear switch.
struct ReferenceSegment {
  std::vector<Pose> poses;
  Gear gear = Gear::kForward;
};

inline std::vector<ReferenceSegment> SplitReference(const ReferencePath& path) {
  std::vector<ReferenceSegment> out;
  if (path.poses.empty()) throw InputError("reference path is empty");
  if (path.poses.size() == 1) {
    out.push_back({path.poses, path.gears.empty() ? Gear::kForward : path.gears[0]});
    return out;
  }
  std::size_t begin = 0;
  for (std::size_t i = 1; i < path.poses.size(); ++i) {
    const bool last = i + 1 == path.poses.size();
    if (last || path.gears[i] != path.gears[begin]) {
      ReferenceSegment seg;
      seg.gear = path.gears[begin];
      seg.poses.assign(path.poses.begin() + begin, path.poses.begin() + i + 1);
      out.push_back(std::move(seg));
      begin = i;
    }
  }
  return out;
}

/// Smooths every gear segment of `path` independently.
inline std::vector<SmoothResult> Smooth(const ReferencePath& path,
                                        std::span<const ConvexPolygon> obstacles,
                                        const ConvexPolygon& bounds,
                                        const VehicleParams& vehicle,
                                        const SmootherConfig& config,
                                        SmoothMode mode = SmoothMode::kDliaps) {
  config.Validate();
  std::vector<SmoothResult> out;
  for (const auto& seg : SplitReference(path)) {
    out.push_back(SmoothSegment(seg.poses, seg.gear, obstacles, bounds, vehicle, config, mode));
  }
  return out;
}

/// Writes the convergence trace as CSV.
inline void WriteTrace(std::ostream& os, std::span<const TraceRecord> trace) {
  os << "collision,penalty,subproblem,trust,mu,t,merit,candidate_merit,max_g,accepted\n";
  char buf[256];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n", r.collision,
                  r.penalty, r.subproblem, r.trust, r.mu, r.t, r.merit, r.candidate_merit,
                  r.max_g, r.accepted ? 1 : 0);
    os << buf;
  }
}

}  // namespace openspace
