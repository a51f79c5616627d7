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
 * @brief Sparse convex QP solver.
 *
 *   minimize    1/2 x'Px + q'x
 *   subject to  l <= Ax <= u
 *
 * Operator splitting (ADMM) on the equality-constrained KKT system with a
 * cached sparse LDL' factorization, Ruiz equilibration, adaptive step size,
 * infeasibility certificates and an optional active-set polish. A
 * primal-dual interior-point method is available as an alternative for
 * problems whose optimal active set is degenerate, where ADMM stalls.
 */

#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "openspace/errors.hpp"

namespace openspace {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Triplet = Eigen::Triplet<double, int>;

/// Bounds at or beyond this magnitude are treated as infinite.
inline constexpr double kQpInfinity = 1e30;

struct QpProblem {
  int n_vars = 0;
  /// Upper triangle of the symmetric PSD cost Hessian.
  SparseMatrix quadratic_cost;
  Eigen::VectorXd linear_cost;
  SparseMatrix constraint_matrix;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  int n_constraints() const { return static_cast<int>(constraint_matrix.rows()); }

  void Validate() const {
    const int m = n_constraints();
    if (n_vars <= 0) throw InputError("qp: n_vars must be positive");
    if (quadratic_cost.rows() != n_vars || quadratic_cost.cols() != n_vars) {
      throw InputError("qp: quadratic cost has wrong dimensions");
    }
    if (linear_cost.size() != n_vars) throw InputError("qp: linear cost has wrong size");
    if (constraint_matrix.cols() != n_vars) {
      throw InputError("qp: constraint matrix has wrong column count");
    }
    if (lower.size() != m || upper.size() != m) {
      throw InputError("qp: bound vectors have wrong size");
    }
    for (int i = 0; i < m; ++i) {
      if (std::isnan(lower[i]) || std::isnan(upper[i]) || lower[i] > upper[i]) {
        throw InputError("qp: lower bound exceeds upper bound in row " + std::to_string(i));
      }
    }
    for (int k = 0; k < quadratic_cost.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(quadratic_cost, k); it; ++it) {
        if (it.row() > it.col()) {
          throw InputError("qp: quadratic cost must store the upper triangle only");
        }
      }
    }
  }

  /// 1/2 x'Px + q'x.
  double Objective(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd px = quadratic_cost.selfadjointView<Eigen::Upper>() * x;
    return 0.5 * x.dot(px) + linear_cost.dot(x);
  }
};

enum class QpMethod { kAdmm, kInteriorPoint };

struct QpSettings {
  QpMethod method = QpMethod::kAdmm;
  double abs_tol = 1e-6;
  double rel_tol = 1e-6;
  int max_iterations = 20000;
  bool polish = true;
  /// Initial ADMM step size in the equilibrated problem.
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  bool adaptive_rho = true;
  int scaling_iterations = 10;
  double infeasibility_tol = 1e-5;
  int check_interval = 5;
  /// Iterations between early polish attempts; 0 disables them.
  int polish_interval = 100;
  /// Newton iteration cap of the interior-point method.
  int ipm_max_iterations = 100;
};

enum class QpStatus { kSolved, kMaxIterations, kPrimalInfeasible, kDualInfeasible };

inline const char* QpStatusName(QpStatus status) {
  switch (status) {
    case QpStatus::kSolved: return "solved";
    case QpStatus::kMaxIterations: return "max_iter";
    case QpStatus::kPrimalInfeasible: return "primal_infeasible";
    case QpStatus::kDualInfeasible: return "dual_infeasible";
  }
  return "unknown";
}

struct QpSolution {
  Eigen::VectorXd primal;
  Eigen::VectorXd dual;
  QpStatus status = QpStatus::kMaxIterations;
  int iterations = 0;
  double objective = 0.0;
  bool polished = false;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
};

/**
 * Reusable solver workspace. The sparsity pattern and matrix values are fixed
 * at construction; bounds and the linear cost can be updated between solves
 * without refactoring, which is what sequential trust-region loops need.
 */
class QpSolver {
 public:
  QpSolver(QpProblem problem, QpSettings settings = {})
      : problem_(std::move(problem)), settings_(settings) {
    problem_.Validate();
    if (!(settings_.abs_tol > 0.0) || !(settings_.rel_tol > 0.0)) {
      throw InputError("qp: tolerances must be positive");
    }
    n_ = problem_.n_vars;
    m_ = problem_.n_constraints();
    rho_ = settings_.rho;
    Equilibrate();
    SetBoundsScaled();
    x_ = Eigen::VectorXd::Zero(n_);
    z_ = Eigen::VectorXd::Zero(m_);
    y_ = Eigen::VectorXd::Zero(m_);
    BuildKkt();
    Factorize();
  }

  const QpProblem& problem() const { return problem_; }

  void UpdateBounds(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
    if (lower.size() != m_ || upper.size() != m_) {
      throw InputError("qp: bound update has wrong size");
    }
    for (int i = 0; i < m_; ++i) {
      if (!(lower[i] <= upper[i])) {
        throw InputError("qp: lower bound exceeds upper bound in row " + std::to_string(i));
      }
    }
    problem_.lower = lower;
    problem_.upper = upper;
    SetBoundsScaled();
    // Equality/inequality classification may change with the bounds.
    if (UpdateRhoVector()) Factorize();
  }

  void UpdateLinearCost(const Eigen::VectorXd& q) {
    if (q.size() != n_) throw InputError("qp: linear cost update has wrong size");
    problem_.linear_cost = q;
    q_ = cost_scale_ * d_.cwiseProduct(q);
  }

  /// Warm start in unscaled coordinates. Dual may be empty.
  void WarmStart(const Eigen::VectorXd& x, const Eigen::VectorXd& y = {}) {
    if (x.size() != n_) throw InputError("qp: warm start has wrong size");
    x_ = d_inv_.cwiseProduct(x);
    z_ = a_ * x_;
    if (y.size() == m_) {
      y_ = cost_scale_ * e_inv_.cwiseProduct(y);
    } else {
      y_.setZero();
    }
  }

  QpSolution Solve() {
    QpSolution sol;
    Eigen::VectorXd x_prev = x_, y_prev = y_, z_prev = z_;
    Eigen::VectorXd rhs(n_ + m_), x_tilde(n_), z_tilde(m_);
    const double alpha = settings_.alpha;
    const double sigma = settings_.sigma;
    int iter = 0;
    bool done = false;
    Residuals res;
    for (iter = 1; iter <= settings_.max_iterations; ++iter) {
      x_prev = x_;
      y_prev = y_;
      z_prev = z_;

      rhs.head(n_) = sigma * x_prev - q_;
      rhs.tail(m_) = z_prev - rho_vec_inv_.cwiseProduct(y_prev);
      const Eigen::VectorXd sol_kkt = ldlt_.solve(rhs);
      x_tilde = sol_kkt.head(n_);
      z_tilde = z_prev + rho_vec_inv_.cwiseProduct(sol_kkt.tail(m_) - y_prev);

      x_ = alpha * x_tilde + (1.0 - alpha) * x_prev;
      const Eigen::VectorXd z_relaxed = alpha * z_tilde + (1.0 - alpha) * z_prev;
      z_ = (z_relaxed + rho_vec_inv_.cwiseProduct(y_prev)).cwiseMax(l_).cwiseMin(u_);
      y_ = y_prev + rho_vec_.cwiseProduct(z_relaxed - z_);

      const bool check = iter % settings_.check_interval == 0 ||
                         iter == settings_.max_iterations;
      if (!check) continue;

      res = ComputeResiduals();
      if (res.primal <= res.eps_primal && res.dual <= res.eps_dual) {
        sol.status = QpStatus::kSolved;
        done = true;
        break;
      }
      // ADMM often identifies the active set long before its tail converges;
      // an early polish that meets the tolerances ends the solve.
      if (settings_.polish && settings_.polish_interval > 0 &&
          iter % settings_.polish_interval == 0) {
        if (auto polished = Polish(res.eps_primal, res.eps_dual)) {
          sol.status = QpStatus::kSolved;
          sol.iterations = iter;
          sol.polished = true;
          sol.primal_residual = polished->primal_residual;
          sol.dual_residual = polished->dual_residual;
          sol.primal = std::move(polished->x);
          sol.dual = std::move(polished->y);
          sol.objective = problem_.Objective(sol.primal);
          return sol;
        }
      }
      if (IsPrimalInfeasible(y_ - y_prev)) {
        sol.status = QpStatus::kPrimalInfeasible;
        done = true;
        break;
      }
      if (IsDualInfeasible(x_ - x_prev)) {
        sol.status = QpStatus::kDualInfeasible;
        done = true;
        break;
      }
      if (settings_.adaptive_rho && iter % (5 * settings_.check_interval) == 0) {
        AdaptRho(res);
      }
    }
    if (!done) sol.status = QpStatus::kMaxIterations;
    sol.iterations = std::min(iter, settings_.max_iterations);

    Eigen::VectorXd x = d_.cwiseProduct(x_);
    Eigen::VectorXd y = e_.cwiseProduct(y_) / cost_scale_;
    sol.primal_residual = res.primal;
    sol.dual_residual = res.dual;

    if (sol.status == QpStatus::kSolved && settings_.polish) {
      if (auto polished = Polish(std::max(res.primal, settings_.abs_tol),
                                 std::max(res.dual, settings_.abs_tol))) {
        x = std::move(polished->x);
        y = std::move(polished->y);
        sol.primal_residual = polished->primal_residual;
        sol.dual_residual = polished->dual_residual;
        sol.polished = true;
      }
    }
    sol.primal = std::move(x);
    sol.dual = std::move(y);
    if (sol.status == QpStatus::kSolved || sol.status == QpStatus::kMaxIterations) {
      sol.objective = problem_.Objective(sol.primal);
    } else {
      sol.objective = std::numeric_limits<double>::quiet_NaN();
    }
    return sol;
  }

 private:
  struct Residuals {
    double primal = 0.0;
    double dual = 0.0;
    double eps_primal = 0.0;
    double eps_dual = 0.0;
    double ax_norm = 0.0, z_norm = 0.0, px_norm = 0.0, aty_norm = 0.0, q_norm = 0.0;
  };

  static double InfNorm(const Eigen::VectorXd& v) {
    return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
  }

  static double ToInternalBound(double b) {
    if (b >= kQpInfinity) return std::numeric_limits<double>::infinity();
    if (b <= -kQpInfinity) return -std::numeric_limits<double>::infinity();
    return b;
  }

  // Ruiz equilibration of the KKT matrix followed by cost scaling.
  void Equilibrate() {
    SparseMatrix p_upper = problem_.quadratic_cost;
    p_full_ = p_upper.selfadjointView<Eigen::Upper>();
    a_ = problem_.constraint_matrix;
    d_ = Eigen::VectorXd::Ones(n_);
    e_ = Eigen::VectorXd::Ones(m_);
    cost_scale_ = 1.0;
    q_ = problem_.linear_cost;

    auto clip = [](double v) {
      if (v < 1e-4) return 1.0;
      return std::min(v, 1e4);
    };
    for (int it = 0; it < settings_.scaling_iterations; ++it) {
      Eigen::VectorXd col_norm = Eigen::VectorXd::Zero(n_);
      Eigen::VectorXd row_norm = Eigen::VectorXd::Zero(m_);
      for (int k = 0; k < p_full_.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it2(p_full_, k); it2; ++it2) {
          col_norm[k] = std::max(col_norm[k], std::abs(it2.value()));
        }
      }
      for (int k = 0; k < a_.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it2(a_, k); it2; ++it2) {
          const double v = std::abs(it2.value());
          col_norm[k] = std::max(col_norm[k], v);
          row_norm[it2.row()] = std::max(row_norm[it2.row()], v);
        }
      }
      Eigen::VectorXd dd(n_), ee(m_);
      for (int j = 0; j < n_; ++j) dd[j] = 1.0 / std::sqrt(clip(col_norm[j]));
      for (int i = 0; i < m_; ++i) ee[i] = 1.0 / std::sqrt(clip(row_norm[i]));
      p_full_ = dd.asDiagonal() * p_full_ * dd.asDiagonal();
      a_ = ee.asDiagonal() * a_ * dd.asDiagonal();
      q_ = dd.cwiseProduct(q_);
      d_ = d_.cwiseProduct(dd);
      e_ = e_.cwiseProduct(ee);
    }
    // Cost scaling.
    double mean_col = 0.0;
    if (n_ > 0) {
      Eigen::VectorXd col_norm = Eigen::VectorXd::Zero(n_);
      for (int k = 0; k < p_full_.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it2(p_full_, k); it2; ++it2) {
          col_norm[k] = std::max(col_norm[k], std::abs(it2.value()));
        }
      }
      mean_col = col_norm.mean();
    }
    const double cost_norm = std::max(mean_col, InfNorm(q_));
    double gamma = 1.0 / (cost_norm < 1e-4 ? 1.0 : std::min(cost_norm, 1e4));
    cost_scale_ = gamma;
    p_full_ *= gamma;
    q_ *= gamma;
    d_inv_ = d_.cwiseInverse();
    e_inv_ = e_.cwiseInverse();
    p_full_.makeCompressed();
    a_.makeCompressed();
    at_ = a_.transpose();
  }

  void SetBoundsScaled() {
    l_.resize(m_);
    u_.resize(m_);
    for (int i = 0; i < m_; ++i) {
      l_[i] = e_[i] * ToInternalBound(problem_.lower[i]);
      u_[i] = e_[i] * ToInternalBound(problem_.upper[i]);
    }
    if (rho_vec_.size() == 0) UpdateRhoVector();
  }

  bool IsEqualityRow(int i) const {
    return problem_.upper[i] - problem_.lower[i] <= 1e-9 * std::max(1.0, std::abs(problem_.lower[i]));
  }

  // Returns true when the per-row step sizes changed.
  bool UpdateRhoVector() {
    Eigen::VectorXd next(m_);
    constexpr double kRhoMin = 1e-6;
    constexpr double kEqualityScale = 1e3;
    for (int i = 0; i < m_; ++i) {
      const bool lower_free = std::isinf(l_[i]);
      const bool upper_free = std::isinf(u_[i]);
      if (lower_free && upper_free) {
        next[i] = kRhoMin;
      } else if (IsEqualityRow(i)) {
        next[i] = kEqualityScale * rho_;
      } else {
        next[i] = rho_;
      }
    }
    const bool changed = rho_vec_.size() != m_ || (next - rho_vec_).cwiseAbs().maxCoeff() > 0.0;
    rho_vec_ = next;
    rho_vec_inv_ = rho_vec_.cwiseInverse();
    return changed;
  }

  void BuildKkt() {
    UpdateRhoVector();
    std::vector<Triplet> triplets;
    triplets.reserve(p_full_.nonZeros() + a_.nonZeros() + n_ + m_);
    for (int k = 0; k < p_full_.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(p_full_, k); it; ++it) {
        if (it.row() < it.col()) triplets.emplace_back(it.row(), it.col(), it.value());
      }
    }
    // Diagonal of P plus sigma, always present so the pattern is stable.
    Eigen::VectorXd p_diag = Eigen::VectorXd::Zero(n_);
    for (int k = 0; k < p_full_.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(p_full_, k); it; ++it) {
        if (it.row() == it.col()) p_diag[k] += it.value();
      }
    }
    for (int j = 0; j < n_; ++j) triplets.emplace_back(j, j, p_diag[j] + settings_.sigma);
    // A' in the upper-right block: row j (variable), column n + i.
    for (int k = 0; k < a_.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(a_, k); it; ++it) {
        triplets.emplace_back(k, n_ + static_cast<int>(it.row()), it.value());
      }
    }
    for (int i = 0; i < m_; ++i) triplets.emplace_back(n_ + i, n_ + i, -rho_vec_inv_[i]);
    kkt_.resize(n_ + m_, n_ + m_);
    kkt_.setFromTriplets(triplets.begin(), triplets.end());
    kkt_.makeCompressed();
    rho_diag_index_.assign(m_, -1);
    for (int i = 0; i < m_; ++i) {
      const int col = n_ + i;
      for (int idx = kkt_.outerIndexPtr()[col]; idx < kkt_.outerIndexPtr()[col + 1]; ++idx) {
        if (kkt_.innerIndexPtr()[idx] == col) rho_diag_index_[i] = idx;
      }
    }
    ldlt_.analyzePattern(kkt_);
  }

  void Factorize() {
    for (int i = 0; i < m_; ++i) kkt_.valuePtr()[rho_diag_index_[i]] = -rho_vec_inv_[i];
    ldlt_.factorize(kkt_);
    if (ldlt_.info() != Eigen::Success) {
      throw SolverError("qp: KKT factorization failed (n=" + std::to_string(n_) +
                        ", m=" + std::to_string(m_) + ", rho=" + std::to_string(rho_) + ")");
    }
  }

  Residuals ComputeResiduals() const {
    Residuals r;
    const Eigen::VectorXd ax = a_ * x_;
    const Eigen::VectorXd px = p_full_ * x_;
    const Eigen::VectorXd aty = at_ * y_;
    r.primal = InfNorm(e_inv_.cwiseProduct(ax - z_));
    r.dual = InfNorm(d_inv_.cwiseProduct(px + q_ + aty)) / cost_scale_;
    r.ax_norm = InfNorm(e_inv_.cwiseProduct(ax));
    r.z_norm = InfNorm(e_inv_.cwiseProduct(z_));
    r.px_norm = InfNorm(d_inv_.cwiseProduct(px)) / cost_scale_;
    r.aty_norm = InfNorm(d_inv_.cwiseProduct(aty)) / cost_scale_;
    r.q_norm = InfNorm(d_inv_.cwiseProduct(q_)) / cost_scale_;
    r.eps_primal = settings_.abs_tol + settings_.rel_tol * std::max(r.ax_norm, r.z_norm);
    r.eps_dual = settings_.abs_tol +
                 settings_.rel_tol * std::max({r.px_norm, r.aty_norm, r.q_norm});
    return r;
  }

  void AdaptRho(const Residuals& r) {
    const double prim_scale = std::max(r.ax_norm, r.z_norm);
    const double dual_scale = std::max({r.px_norm, r.aty_norm, r.q_norm});
    const double prim = r.primal / (prim_scale + 1e-30);
    const double dual = r.dual / (dual_scale + 1e-30);
    if (!(prim > 0.0) || !(dual > 0.0)) return;
    double next = rho_ * std::sqrt(prim / dual);
    next = std::clamp(next, 1e-6, 1e6);
    if (next > 5.0 * rho_ || next < 0.2 * rho_) {
      rho_ = next;
      UpdateRhoVector();
      Factorize();
    }
  }

  bool IsPrimalInfeasible(const Eigen::VectorXd& dy_scaled) const {
    if (m_ == 0) return false;
    const double eps = settings_.infeasibility_tol;
    const Eigen::VectorXd dy = e_.cwiseProduct(dy_scaled);
    const double norm = InfNorm(dy);
    if (norm <= eps) return false;
    const Eigen::VectorXd dyn = dy / norm;
    double support = 0.0;
    for (int i = 0; i < m_; ++i) {
      const double ub = ToInternalBound(problem_.upper[i]);
      const double lb = ToInternalBound(problem_.lower[i]);
      if (dyn[i] > 0.0) {
        if (std::isinf(ub)) {
          if (dyn[i] > eps) return false;
          continue;
        }
        support += ub * dyn[i];
      } else if (dyn[i] < 0.0) {
        if (std::isinf(lb)) {
          if (-dyn[i] > eps) return false;
          continue;
        }
        support += lb * dyn[i];
      }
    }
    if (support >= -eps) return false;
    const Eigen::VectorXd aty = problem_.constraint_matrix.transpose() * dyn;
    return InfNorm(aty) <= eps;
  }

  bool IsDualInfeasible(const Eigen::VectorXd& dx_scaled) const {
    const double eps = settings_.infeasibility_tol;
    const Eigen::VectorXd dx = d_.cwiseProduct(dx_scaled);
    const double norm = InfNorm(dx);
    if (norm <= eps) return false;
    const Eigen::VectorXd dxn = dx / norm;
    if (problem_.linear_cost.dot(dxn) >= -eps) return false;
    const Eigen::VectorXd pdx = problem_.quadratic_cost.selfadjointView<Eigen::Upper>() * dxn;
    if (InfNorm(pdx) > eps) return false;
    const Eigen::VectorXd adx = problem_.constraint_matrix * dxn;
    for (int i = 0; i < m_; ++i) {
      const bool upper_free = problem_.upper[i] >= kQpInfinity;
      const bool lower_free = problem_.lower[i] <= -kQpInfinity;
      if (!upper_free && adx[i] > eps) return false;
      if (!lower_free && adx[i] < -eps) return false;
    }
    return true;
  }

  struct Polished {
    Eigen::VectorXd x, y;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
  };

  // Solves the equality-constrained KKT system on the guessed active set and
  // keeps the result only if its residuals are within the given limits.
  std::optional<Polished> Polish(double prim_ok, double dual_ok) {
    // 0 inactive, -1 at lower, +1 at upper.
    std::vector<int> side(m_, 0);
    for (int i = 0; i < m_; ++i) {
      if (IsEqualityRow(i) || z_[i] - l_[i] < -y_[i]) {
        side[i] = -1;
      } else if (u_[i] - z_[i] < y_[i]) {
        side[i] = 1;
      }
    }
    auto attempt = PolishOn(side);
    if (!attempt) return std::nullopt;
    const auto& [x_scaled, y_scaled] = *attempt;
    const Eigen::VectorXd ax = a_ * x_scaled;
    const Eigen::VectorXd z = ax.cwiseMax(l_).cwiseMin(u_);
    const double prim = InfNorm(e_inv_.cwiseProduct(ax - z));
    const double dual =
        InfNorm(d_inv_.cwiseProduct(p_full_ * x_scaled + q_ + at_ * y_scaled)) / cost_scale_;
    // Multipliers must have the sign matching the bound they sit on.
    for (int i = 0; i < m_; ++i) {
      if (IsEqualityRow(i)) continue;
      if ((side[i] < 0 && y_scaled[i] > 1e-9) || (side[i] > 0 && y_scaled[i] < -1e-9)) {
        return std::nullopt;
      }
    }
    if (prim > prim_ok || dual > dual_ok) return std::nullopt;
    return Polished{d_.cwiseProduct(x_scaled), e_.cwiseProduct(y_scaled) / cost_scale_, prim,
                    dual};
  }

  // KKT solve with rows of nonzero `side` held at the matching bound.
  std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> PolishOn(
      const std::vector<int>& side) {
    constexpr double kDelta = 1e-7;
    std::vector<int> active;
    std::vector<double> target;
    for (int i = 0; i < m_; ++i) {
      if (side[i] == 0) continue;
      active.push_back(i);
      target.push_back(side[i] < 0 ? l_[i] : u_[i]);
    }
    const int na = static_cast<int>(active.size());
    std::vector<Triplet> exact, reg;
    for (int k = 0; k < p_full_.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(p_full_, k); it; ++it) {
        if (it.row() <= it.col()) {
          exact.emplace_back(it.row(), it.col(), it.value());
        }
      }
    }
    reg = exact;
    for (int j = 0; j < n_; ++j) reg.emplace_back(j, j, kDelta);
    std::vector<int> row_to_active(m_, -1);
    for (int r = 0; r < na; ++r) row_to_active[active[r]] = r;
    for (int k = 0; k < a_.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(a_, k); it; ++it) {
        const int r = row_to_active[it.row()];
        if (r < 0) continue;
        exact.emplace_back(k, n_ + r, it.value());
        reg.emplace_back(k, n_ + r, it.value());
      }
    }
    for (int r = 0; r < na; ++r) reg.emplace_back(n_ + r, n_ + r, -kDelta);
    SparseMatrix k_exact(n_ + na, n_ + na), k_reg(n_ + na, n_ + na);
    k_exact.setFromTriplets(exact.begin(), exact.end());
    k_reg.setFromTriplets(reg.begin(), reg.end());
    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Upper, Eigen::AMDOrdering<int>> ldlt(k_reg);
    if (ldlt.info() != Eigen::Success) return std::nullopt;
    Eigen::VectorXd rhs(n_ + na);
    rhs.head(n_) = -q_;
    for (int r = 0; r < na; ++r) rhs[n_ + r] = target[r];
    Eigen::VectorXd sol = ldlt.solve(rhs);
    const auto k_exact_full = k_exact.selfadjointView<Eigen::Upper>();
    for (int refine = 0; refine < 5; ++refine) {
      const Eigen::VectorXd residual = rhs - k_exact_full * sol;
      sol += ldlt.solve(residual);
    }
    if (!sol.allFinite()) return std::nullopt;
    Eigen::VectorXd y_scaled = Eigen::VectorXd::Zero(m_);
    for (int r = 0; r < na; ++r) y_scaled[active[r]] = sol[n_ + r];
    return std::make_pair(Eigen::VectorXd(sol.head(n_)), std::move(y_scaled));
  }

  QpProblem problem_;
  QpSettings settings_;
  int n_ = 0;
  int m_ = 0;

  SparseMatrix p_full_;
  SparseMatrix a_;
  SparseMatrix at_;
  Eigen::VectorXd q_, l_, u_;
  Eigen::VectorXd d_, e_, d_inv_, e_inv_;
  double cost_scale_ = 1.0;

  double rho_ = 0.1;
  Eigen::VectorXd rho_vec_, rho_vec_inv_;
  SparseMatrix kkt_;
  std::vector<int> rho_diag_index_;
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Upper, Eigen::AMDOrdering<int>> ldlt_;

  Eigen::VectorXd x_, z_, y_;
};

namespace internal {

/**
 * Mehrotra predictor-corrector on
 *
 *   min 1/2 x'Px + q'x  s.t.  Ex = b,  Gx - h = s >= 0,
 *
 * where every finite side of a ranged row of A becomes one row of G. Each
 * Newton system is reduced to the quasi-definite [P + G'(Z/S)G, E'; E, 0].
 */
inline QpSolution SolveInteriorPoint(const QpProblem& problem, const QpSettings& settings,
                                     const Eigen::VectorXd* initial_primal) {
  problem.Validate();
  const int n = problem.n_vars;
  const int m = problem.n_constraints();
  const Eigen::SparseMatrix<double, Eigen::RowMajor, int> a_rows = problem.constraint_matrix;

  // Row bookkeeping: E rows, G rows with sign and source row.
  std::vector<Triplet> e_trip, g_trip;
  std::vector<double> b_vec, h_vec;
  std::vector<int> e_src, g_src;
  std::vector<double> g_sign;
  for (int i = 0; i < m; ++i) {
    const double lo = problem.lower[i], hi = problem.upper[i];
    const bool equality = hi - lo <= 1e-9 * std::max(1.0, std::abs(lo));
    auto add = [&](std::vector<Triplet>& trip, int row, double sign) {
      for (decltype(a_rows)::InnerIterator it(a_rows, i); it; ++it) {
        trip.emplace_back(row, it.col(), sign * it.value());
      }
    };
    if (equality) {
      add(e_trip, static_cast<int>(b_vec.size()), 1.0);
      b_vec.push_back(lo);
      e_src.push_back(i);
      continue;
    }
    if (lo > -kQpInfinity) {
      add(g_trip, static_cast<int>(h_vec.size()), 1.0);
      h_vec.push_back(lo);
      g_src.push_back(i);
      g_sign.push_back(1.0);
    }
    if (hi < kQpInfinity) {
      add(g_trip, static_cast<int>(h_vec.size()), -1.0);
      h_vec.push_back(-hi);
      g_src.push_back(i);
      g_sign.push_back(-1.0);
    }
  }
  const int me = static_cast<int>(b_vec.size());
  const int mi = static_cast<int>(h_vec.size());
  SparseMatrix e_mat(me, n), g_mat(mi, n);
  e_mat.setFromTriplets(e_trip.begin(), e_trip.end());
  g_mat.setFromTriplets(g_trip.begin(), g_trip.end());
  const SparseMatrix e_t = e_mat.transpose();
  const SparseMatrix g_t = g_mat.transpose();
  const Eigen::Map<const Eigen::VectorXd> b(b_vec.data(), me);
  const Eigen::Map<const Eigen::VectorXd> h(h_vec.data(), mi);
  const SparseMatrix p_full = problem.quadratic_cost.selfadjointView<Eigen::Upper>();
  const Eigen::VectorXd& q = problem.linear_cost;

  constexpr double kReg = 1e-9;
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Upper, Eigen::AMDOrdering<int>> ldlt;
  bool analyzed = false;
  SparseMatrix k_exact;
  auto factor = [&](const Eigen::VectorXd& d) {
    SparseMatrix hess = p_full;
    if (mi > 0) hess += g_t * d.asDiagonal() * g_mat;
    std::vector<Triplet> trip;
    for (int k = 0; k < hess.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(hess, k); it; ++it) {
        if (it.row() <= it.col()) trip.emplace_back(it.row(), it.col(), it.value());
      }
    }
    for (int k = 0; k < e_t.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(e_t, k); it; ++it) {
        trip.emplace_back(it.row(), n + k, it.value());
      }
    }
    k_exact.resize(n + me, n + me);
    k_exact.setFromTriplets(trip.begin(), trip.end());
    for (int j = 0; j < n; ++j) trip.emplace_back(j, j, kReg);
    for (int j = 0; j < me; ++j) trip.emplace_back(n + j, n + j, -kReg);
    SparseMatrix k_reg(n + me, n + me);
    k_reg.setFromTriplets(trip.begin(), trip.end());
    if (!analyzed) {
      ldlt.analyzePattern(k_reg);
      analyzed = true;
    }
    ldlt.factorize(k_reg);
    if (ldlt.info() != Eigen::Success) throw SolverError("qp: interior-point factorization failed");
  };
  auto solve = [&](const Eigen::VectorXd& rhs) {
    Eigen::VectorXd sol = ldlt.solve(rhs);
    const auto k_full = k_exact.selfadjointView<Eigen::Upper>();
    for (int refine = 0; refine < 3; ++refine) {
      const Eigen::VectorXd residual = rhs - k_full * sol;
      sol += ldlt.solve(residual);
    }
    return sol;
  };

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n), y = Eigen::VectorXd::Zero(me);
  Eigen::VectorXd s = Eigen::VectorXd::Ones(mi), z = Eigen::VectorXd::Ones(mi);
  {
    // Least-squares start: slacks and multipliers at one.
    factor(Eigen::VectorXd::Ones(mi));
    Eigen::VectorXd rhs(n + me);
    rhs.head(n) = -q + g_t * h;
    rhs.tail(me) = b;
    if (initial_primal != nullptr) {
      x = *initial_primal;
    } else {
      x = solve(rhs).head(n);
    }
    if (mi > 0) s = (g_mat * x - h).cwiseMax(1.0);
  }

  auto inf_norm = [](const Eigen::VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; };
  auto max_step = [](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
    double alpha = 1.0;
    for (int i = 0; i < v.size(); ++i) {
      if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
    }
    return alpha;
  };

  QpSolution sol;
  sol.status = QpStatus::kMaxIterations;
  int iter = 0;
  for (; iter <= settings.ipm_max_iterations; ++iter) {
    const Eigen::VectorXd gx = g_mat * x;
    const Eigen::VectorXd px = p_full * x;
    const Eigen::VectorXd r_d = px + q - g_t * z + e_t * y;
    const Eigen::VectorXd r_e = e_mat * x - b;
    const Eigen::VectorXd r_p = gx - h - s;
    const double mu = mi > 0 ? s.dot(z) / mi : 0.0;
    const double eps_p = settings.abs_tol;
    const double eps_d =
        settings.abs_tol +
        settings.rel_tol * std::max({inf_norm(px), inf_norm(q), inf_norm(g_t * z - e_t * y)});
    const double violation = std::max(inf_norm(r_e), inf_norm((h - gx).cwiseMax(0.0)));
    if (!x.allFinite() || !s.allFinite() || !z.allFinite()) break;
    if (violation <= eps_p && inf_norm(r_p) <= eps_p && inf_norm(r_d) <= eps_d &&
        mu <= 1e-2 * settings.abs_tol) {
      sol.status = QpStatus::kSolved;
      break;
    }
    if (iter == settings.ipm_max_iterations) break;

    factor(z.cwiseQuotient(s));
    auto direction = [&](const Eigen::VectorXd& r_c, Eigen::VectorXd& dx, Eigen::VectorXd& dy,
                         Eigen::VectorXd& ds, Eigen::VectorXd& dz) {
      Eigen::VectorXd rhs(n + me);
      const Eigen::VectorXd w = (r_c + z.cwiseProduct(r_p)).cwiseQuotient(s);
      rhs.head(n) = -r_d - g_t * w;
      rhs.tail(me) = -r_e;
      const Eigen::VectorXd d = solve(rhs);
      dx = d.head(n);
      dy = d.tail(me);
      ds = g_mat * dx + r_p;
      dz = -(r_c + z.cwiseProduct(ds)).cwiseQuotient(s);
    };
    Eigen::VectorXd dx, dy, ds, dz;
    const Eigen::VectorXd sz = s.cwiseProduct(z);
    direction(sz, dx, dy, ds, dz);
    double alpha = std::min(max_step(s, ds), max_step(z, dz));
    double sigma = 0.0;
    if (mi > 0) {
      const double mu_aff = (s + alpha * ds).dot(z + alpha * dz) / mi;
      sigma = std::pow(mu_aff / mu, 3);
      const Eigen::VectorXd r_c =
          sz + ds.cwiseProduct(dz) - Eigen::VectorXd::Constant(mi, sigma * mu);
      direction(r_c, dx, dy, ds, dz);
      alpha = std::min(1.0, 0.99 * std::min(max_step(s, ds), max_step(z, dz)));
    }
    x += alpha * dx;
    y += alpha * dy;
    s += alpha * ds;
    z += alpha * dz;
  }
  sol.iterations = iter;
  sol.primal = x;
  sol.dual = Eigen::VectorXd::Zero(m);
  for (int j = 0; j < me; ++j) sol.dual[e_src[j]] = y[j];
  // Stationarity Px + q + A'y = 0: lower sides carry -z, upper sides +z.
  for (int j = 0; j < mi; ++j) sol.dual[g_src[j]] -= g_sign[j] * z[j];
  sol.objective = problem.Objective(x);
  sol.primal_residual = std::max(inf_norm(e_mat * x - b), inf_norm((h - g_mat * x).cwiseMax(0.0)));
  sol.dual_residual = inf_norm(p_full * x + q + problem.constraint_matrix.transpose() * sol.dual);
  return sol;
}

}  // namespace internal

/// One-shot solve. `initial_primal`, when given, warm starts the iterate.
inline QpSolution SolveQp(const QpProblem& problem, const QpSettings& settings = {},
                          const Eigen::VectorXd* initial_primal = nullptr) {
  if (settings.method == QpMethod::kInteriorPoint) {
    return internal::SolveInteriorPoint(problem, settings, initial_primal);
  }
  QpSolver solver(problem, settings);
  if (initial_primal != nullptr) solver.WarmStart(*initial_primal);
  return solver.Solve();
}

// Debug dump format (whitespace separated, one record per line):
//
//   qp_problem 1
//   n_vars <n>
//   n_constraints <m>
//   P <nnz>          followed by <nnz> lines "row col value" (upper triangle)
//   q                followed by n lines "value"
//   A <nnz>          followed by <nnz> lines "row col value"
//   bounds           followed by m lines "lower upper"
//
// Values are written with 17 significant digits so a reload is bit-exact.

inline void WriteQpProblem(std::ostream& os, const QpProblem& problem) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  auto write_matrix = [&](const char* tag, const SparseMatrix& mat) {
    os << tag << ' ' << mat.nonZeros() << '\n';
    for (int k = 0; k < mat.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(mat, k); it; ++it) {
        os << it.row() << ' ' << it.col() << ' ' << num(it.value()) << '\n';
      }
    }
  };
  os << "qp_problem 1\n";
  os << "n_vars " << problem.n_vars << '\n';
  os << "n_constraints " << problem.n_constraints() << '\n';
  write_matrix("P", problem.quadratic_cost);
  os << "q\n";
  for (int i = 0; i < problem.linear_cost.size(); ++i) os << num(problem.linear_cost[i]) << '\n';
  write_matrix("A", problem.constraint_matrix);
  os << "bounds\n";
  for (int i = 0; i < problem.n_constraints(); ++i) {
    os << num(problem.lower[i]) << ' ' << num(problem.upper[i]) << '\n';
  }
}

inline QpProblem ReadQpProblem(std::istream& is) {
  auto expect = [&](const std::string& want) {
    std::string tag;
    if (!(is >> tag) || tag != want) {
      throw InputError("qp dump: expected '" + want + "', got '" + tag + "'");
    }
  };
  auto read_int = [&]() {
    long long v;
    if (!(is >> v)) throw InputError("qp dump: expected integer");
    return static_cast<int>(v);
  };
  auto read_double = [&]() {
    std::string token;
    if (!(is >> token)) throw InputError("qp dump: expected number");
    return std::stod(token);
  };
  expect("qp_problem");
  if (read_int() != 1) throw InputError("qp dump: unsupported version");
  QpProblem p;
  expect("n_vars");
  p.n_vars = read_int();
  expect("n_constraints");
  const int m = read_int();
  auto read_matrix = [&](const char* tag, int rows, int cols) {
    expect(tag);
    const int nnz = read_int();
    std::vector<Triplet> triplets;
    triplets.reserve(nnz);
    for (int k = 0; k < nnz; ++k) {
      const int r = read_int();
      const int c = read_int();
      const double v = read_double();
      if (r < 0 || r >= rows || c < 0 || c >= cols) {
        throw InputError("qp dump: matrix index out of range");
      }
      triplets.emplace_back(r, c, v);
    }
    SparseMatrix mat(rows, cols);
    mat.setFromTriplets(triplets.begin(), triplets.end());
    return mat;
  };
  p.quadratic_cost = read_matrix("P", p.n_vars, p.n_vars);
  expect("q");
  p.linear_cost.resize(p.n_vars);
  for (int i = 0; i < p.n_vars; ++i) p.linear_cost[i] = read_double();
  p.constraint_matrix = read_matrix("A", m, p.n_vars);
  expect("bounds");
  p.lower.resize(m);
  p.upper.resize(m);
  for (int i = 0; i < m; ++i) {
    p.lower[i] = read_double();
    p.upper[i] = read_double();
  }
  p.Validate();
  return p;
}

}  // namespace openspace
