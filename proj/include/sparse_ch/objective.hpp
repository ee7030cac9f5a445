// Cost functional, reduced gradient, the pointwise prox map of the L1 + box
// term, sparsity diagnostics and the second-order quadratic form.
//
// Space-time quadrature is the cell sum value * h * dt. Tracking runs over
// the computed levels 1..n_steps; the control has levels 0..n_steps-1.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "sparse_ch/adjoint.hpp"
#include "sparse_ch/core.hpp"
#include "sparse_ch/problem.hpp"
#include "sparse_ch/sensitivity.hpp"
#include "sparse_ch/state_solver.hpp"

namespace sparse_ch {

struct CostValue {
  double tracking = 0.0;  // (b1/2) ||phi - phi_Q||^2
  double terminal = 0.0;  // (b2/2) ||phi(T) - phi_Omega||^2
  double control = 0.0;   // (b3/2) ||u||^2
  double J_smooth = 0.0;
  double G = 0.0;         // ||u||_L1
  double J_total = 0.0;   // J_smooth + kappa G
};

inline CostValue evaluate_cost(const StateTrajectory& state, const SpaceTimeField& u,
                               const Targets& targets, const CostWeights& weights,
                               const Grid& grid, double dt) {
  const std::size_t nt = u.levels();
  const std::size_t n = u.cells();
  if (state.phi.levels() != nt + 1 || state.phi.cells() != n || !state.phi.same_shape(targets.phi_Q) ||
      targets.phi_Omega.size() != n) {
    throw std::invalid_argument("evaluate_cost: shape mismatch");
  }
  CostValue c;
  double track = 0.0;
  for (std::size_t k = 1; k <= nt; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      const double e = state.phi(k, i) - targets.phi_Q(k, i);
      track += e * e;
    }
  }
  double term = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = state.phi(nt, i) - targets.phi_Omega[i];
    term += e * e;
  }
  double usq = 0.0, uabs = 0.0;
  for (double v : u.flat()) {
    usq += v * v;
    uabs += std::abs(v);
  }
  c.tracking = 0.5 * weights.b1 * track * grid.h * dt;
  c.terminal = 0.5 * weights.b2 * term * grid.h;
  c.control = 0.5 * weights.b3 * usq * grid.h * dt;
  c.J_smooth = c.tracking + c.terminal + c.control;
  c.G = uabs * grid.h * dt;
  c.J_total = c.J_smooth + weights.kappa * c.G;
  return c;
}

/// Gradient of the smooth reduced cost: r + b3 u.
inline SpaceTimeField reduced_gradient(const SpaceTimeField& u, const AdjointTrajectory& adj,
                                       const CostWeights& weights) {
  if (adj.r.levels() != u.levels() + 1 || adj.r.cells() != u.cells()) {
    throw std::invalid_argument("reduced_gradient: adjoint does not match the control");
  }
  SpaceTimeField g = u;
  for (std::size_t m = 0; m < u.levels(); ++m) {
    for (std::size_t i = 0; i < u.cells(); ++i) g(m, i) = adj.r(m, i) + weights.b3 * u(m, i);
  }
  return g;
}

/// Same, from the control-level adjoint part r (n_steps levels).
inline SpaceTimeField reduced_gradient_from_r(const SpaceTimeField& u, const SpaceTimeField& r,
                                              const CostWeights& weights) {
  if (!r.same_shape(u)) throw std::invalid_argument("reduced_gradient: r does not match the control");
  SpaceTimeField g = u;
  auto gg = g.flat();
  auto rr = r.flat();
  for (std::size_t k = 0; k < gg.size(); ++k) gg[k] = rr[k] + weights.b3 * gg[k];
  return g;
}

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

/// argmin over [lb, ub] of (1/2 alpha)(v - (u_old - alpha g))^2 + kappa |v|.
inline double prox_point(double g, double u_old, double alpha, const CostWeights& weights,
                         double lb, double ub) {
  if (lb > ub) throw std::invalid_argument("prox_point: lower bound exceeds upper bound");
  if (!(alpha > 0.0)) throw std::invalid_argument("prox_point: alpha must be positive");
  const double v = soft_threshold(u_old - alpha * g, alpha * weights.kappa);
  return std::min(ub, std::max(lb, v));
}

inline SpaceTimeField prox_map(const SpaceTimeField& u, const SpaceTimeField& g, double alpha,
                               const CostWeights& weights, const BoxBounds& bounds) {
  SpaceTimeField out = u;
  auto o = out.flat();
  auto uu = u.flat();
  auto gg = g.flat();
  auto lo = bounds.lower.flat();
  auto up = bounds.upper.flat();
  for (std::size_t k = 0; k < o.size(); ++k) {
    o[k] = prox_point(gg[k], uu[k], alpha, weights, lo[k], up[k]);
  }
  return out;
}

/// ||u - prox(u - alpha g)||_inf; zero exactly at stationary points.
inline double stationarity_residual(const SpaceTimeField& u, const SpaceTimeField& g, double alpha,
                                    const CostWeights& weights, const BoxBounds& bounds) {
  const SpaceTimeField p = prox_map(u, g, alpha, weights, bounds);
  double m = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) m = std::max(m, std::abs(u.flat()[k] - p.flat()[k]));
  return m;
}

/// Subgradient of |u| chosen by the optimality system: sign(u) off the
/// zero set, clip(-(r + b3 u)/kappa, -1, 1) on it.
inline SpaceTimeField subgradient_lambda(const SpaceTimeField& u, const SpaceTimeField& r,
                                         const CostWeights& weights, double tol_u = 0.0) {
  if (!(weights.kappa > 0.0)) {
    throw std::invalid_argument("subgradient_lambda: kappa must be positive");
  }
  SpaceTimeField lam = u;
  for (std::size_t m = 0; m < u.levels(); ++m) {
    for (std::size_t i = 0; i < u.cells(); ++i) {
      const double v = u(m, i);
      if (std::abs(v) <= tol_u) {
        lam(m, i) = std::clamp(-(r(m, i) + weights.b3 * v) / weights.kappa, -1.0, 1.0);
      } else {
        lam(m, i) = v > 0.0 ? 1.0 : -1.0;
      }
    }
  }
  return lam;
}

struct SparsityReport {
  double kappa = 0.0;
  double delta = 0.0;
  double tol_u = 0.0;
  std::size_t points = 0;
  double zero_fraction = 0.0;
  std::size_t violations_a = 0;  // |u| > tol_u although |r| <= kappa - delta
  std::size_t violations_b = 0;  // |u| <= tol_u although |r| > kappa + delta
  bool skipped = false;          // kappa = 0: the equivalence is not checked
  bool hypothesis_holds = true;  // constant bounds with lower < 0 < upper
};

inline SparsityReport sparsity_report(const SpaceTimeField& u, const SpaceTimeField& r,
                                      const CostWeights& weights, const BoxBounds& bounds,
                                      double tol_u, double delta) {
  SparsityReport rep;
  rep.kappa = weights.kappa;
  rep.delta = delta;
  rep.tol_u = tol_u;
  rep.points = u.size();
  rep.skipped = !(weights.kappa > 0.0);
  rep.hypothesis_holds = bounds.straddles_zero();
  std::size_t zeros = 0;
  for (std::size_t m = 0; m < u.levels(); ++m) {
    for (std::size_t i = 0; i < u.cells(); ++i) {
      const bool zero = std::abs(u(m, i)) <= tol_u;
      if (zero) ++zeros;
      if (rep.skipped) continue;
      const double a = std::abs(r(m, i));
      if (!zero && a <= weights.kappa - delta) ++rep.violations_a;
      if (zero && a > weights.kappa + delta) ++rep.violations_b;
    }
  }
  rep.zero_fraction = rep.points ? static_cast<double>(zeros) / static_cast<double>(rep.points) : 0.0;
  return rep;
}

/// Second derivative of the smooth reduced cost from two linearized solutions:
///   sum_n h dt sum_i (b1 - f'''(phi_n) q_n) xi^h xi^k + b2 h sum_i xi^h_N xi^k_N + b3 <h, k>.
inline double hessian_quadratic_form(const SpaceTimeField& h, const SpaceTimeField& k,
                                     const LinearizedTrajectory& lin_h,
                                     const LinearizedTrajectory& lin_k,
                                     const StateTrajectory& base, const AdjointTrajectory& adj,
                                     const ProblemSpec& spec) {
  const std::size_t n = spec.n_cells();
  const std::size_t nt = spec.n_steps();
  const double hx = spec.grid.h;
  const double dt = spec.dt();
  const CostWeights& w = spec.weights;
  double interior = 0.0;
  for (std::size_t lvl = 1; lvl <= nt; ++lvl) {
    for (std::size_t i = 0; i < n; ++i) {
      const double f3 = f_deriv(base.phi(lvl, i), 3, spec.potential);
      interior += (w.b1 - f3 * adj.q(lvl - 1, i)) * lin_h.xi(lvl, i) * lin_k.xi(lvl, i);
    }
  }
  double terminal = 0.0;
  for (std::size_t i = 0; i < n; ++i) terminal += lin_h.xi(nt, i) * lin_k.xi(nt, i);
  return interior * hx * dt + w.b2 * terminal * hx + w.b3 * inner(h, k, hx, dt);
}

inline double hessian_quadratic_form(const SpaceTimeField& h, const SpaceTimeField& k,
                                     const StateTrajectory& base, const AdjointTrajectory& adj,
                                     const ProblemSpec& spec, StepJacobians& jacobians) {
  const LinearizedTrajectory lh = solve_linearized(h, spec, jacobians);
  const LinearizedTrajectory lk = solve_linearized(k, spec, jacobians);
  return hessian_quadratic_form(h, k, lh, lk, base, adj, spec);
}

inline double hessian_quadratic_form(const SpaceTimeField& h, const SpaceTimeField& k,
                                     const StateTrajectory& base, const AdjointTrajectory& adj,
                                     const ProblemSpec& spec) {
  StepJacobians jac(base, spec);
  return hessian_quadratic_form(h, k, base, adj, spec, jac);
}

/// Reduced cost bundle for one control: state, adjoint and derived data.
struct Evaluation {
  StateTrajectory state;
  CostValue cost;
};

inline Evaluation evaluate(const SpaceTimeField& u, const ProblemSpec& spec) {
  Evaluation e;
  e.state = solve_state(u, spec);
  e.cost = evaluate_cost(e.state, u, spec.targets, spec.weights, spec.grid, spec.dt());
  return e;
}

}  // namespace sparse_ch
