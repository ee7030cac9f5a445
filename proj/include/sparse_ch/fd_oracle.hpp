// Finite-difference oracles for the smooth reduced cost. They use only the
// forward solver and the cost evaluation, never the adjoint or the
// linearized systems.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sparse_ch/core.hpp"
#include "sparse_ch/objective.hpp"
#include "sparse_ch/problem.hpp"
#include "sparse_ch/state_solver.hpp"

namespace sparse_ch {

struct OracleConfig {
  std::vector<double> fd_steps{1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7};  // times 1/||dir||_inf
  bool richardson = false;
  std::uint64_t seed = 20240601;
};

struct FdEstimate {
  double value = 0.0;
  double step = 0.0;            // selected step (already scaled)
  double error_estimate = 0.0;  // |D_k - D_k+1| at the selected pair
  std::vector<double> steps;    // all probed steps
  std::vector<double> values;   // difference quotient per step
};

namespace detail {

inline double smooth_cost(const SpaceTimeField& u, const ProblemSpec& spec) {
  const StateTrajectory st = solve_state(u, spec);
  return evaluate_cost(st, u, spec.targets, spec.weights, spec.grid, spec.dt()).J_smooth;
}

inline void check_steps(const OracleConfig& cfg) {
  if (cfg.fd_steps.size() < 2) throw std::invalid_argument("oracle needs at least two steps");
  for (std::size_t k = 0; k < cfg.fd_steps.size(); ++k) {
    if (!(cfg.fd_steps[k] > 0.0) || (k > 0 && !(cfg.fd_steps[k] < cfg.fd_steps[k - 1]))) {
      throw std::invalid_argument("oracle steps must be positive and descending");
    }
  }
}

// Picks the pair of consecutive steps whose quotients agree best.
inline FdEstimate select_plateau(FdEstimate est, double order, bool richardson) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t pick = 0;
  for (std::size_t k = 0; k + 1 < est.values.size(); ++k) {
    const double gap = std::abs(est.values[k] - est.values[k + 1]);
    if (gap < best) {
      best = gap;
      pick = k;
    }
  }
  est.error_estimate = best;
  est.step = est.steps[pick + 1];
  est.value = est.values[pick + 1];
  if (richardson) {
    const double ratio = std::pow(est.steps[pick] / est.steps[pick + 1], order);
    est.value = (ratio * est.values[pick + 1] - est.values[pick]) / (ratio - 1.0);
  }
  return est;
}

}  // namespace detail

/// Central-difference directional derivative of the smooth reduced cost.
inline FdEstimate fd_gradient(const SpaceTimeField& u, const SpaceTimeField& dir,
                              const ProblemSpec& spec, const OracleConfig& cfg = {}) {
  detail::check_steps(cfg);
  const double norm = max_abs(dir.flat());
  FdEstimate est;
  if (norm == 0.0) return est;
  for (double s0 : cfg.fd_steps) {
    const double s = s0 / norm;
    const double plus = detail::smooth_cost(u.axpy(s, dir), spec);
    const double minus = detail::smooth_cost(u.axpy(-s, dir), spec);
    est.steps.push_back(s);
    est.values.push_back((plus - minus) / (2.0 * s));
  }
  return detail::select_plateau(std::move(est), 2.0, cfg.richardson);
}

/// Second difference (J(u + s d) - 2 J(u) + J(u - s d)) / s^2.
inline FdEstimate fd_second_difference(const SpaceTimeField& u, const SpaceTimeField& dir,
                                       const ProblemSpec& spec, const OracleConfig& cfg = {}) {
  detail::check_steps(cfg);
  const double norm = max_abs(dir.flat());
  FdEstimate est;
  if (norm == 0.0) return est;
  const double center = detail::smooth_cost(u, spec);
  for (double s0 : cfg.fd_steps) {
    const double s = s0 / norm;
    const double plus = detail::smooth_cost(u.axpy(s, dir), spec);
    const double minus = detail::smooth_cost(u.axpy(-s, dir), spec);
    est.steps.push_back(s);
    est.values.push_back((plus - 2.0 * center + minus) / (s * s));
  }
  return detail::select_plateau(std::move(est), 2.0, cfg.richardson);
}

}  // namespace sparse_ch
