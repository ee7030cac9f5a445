// First and second directional derivatives of the control-to-state map.
//
// Both systems reuse the Jacobian of the forward step evaluated at the
// implicit level phi[n+1] of a base trajectory, so they are the exact
// derivatives of the discrete solution map.
#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <vector>

#include "sparse_ch/core.hpp"
#include "sparse_ch/potential.hpp"
#include "sparse_ch/problem.hpp"
#include "sparse_ch/state_solver.hpp"

namespace sparse_ch {

struct LinearizedTrajectory {
  SpaceTimeField xi;   // levels 0..n_steps
  SpaceTimeField eta;
  SpaceTimeField v;
};

struct BilinearizedTrajectory {
  SpaceTimeField psi;
  SpaceTimeField nu;
  SpaceTimeField z;  // identically zero
};

/// Lazily built per-step Jacobians along a base trajectory. Entry n is the
/// Jacobian of the step from level n to n+1, evaluated at phi[n+1].
class StepJacobians {
 public:
  StepJacobians(const StateTrajectory& base, const ProblemSpec& spec)
      : base_{&base}, spec_{&spec}, lap_{spec.laplacian()}, steps_(spec.n_steps()) {}

  const StepJacobian& at(std::size_t n) {
    if (!steps_[n]) {
      auto phi = base_->phi[n + 1];
      Field fpp(phi.size());
      for (std::size_t i = 0; i < phi.size(); ++i) fpp[i] = f_deriv(phi[i], 2, spec_->potential);
      steps_[n] = std::make_unique<StepJacobian>(lap_, spec_->dt(), spec_->phys.tau, fpp);
    }
    return *steps_[n];
  }

  const StateTrajectory& base() const { return *base_; }

 private:
  const StateTrajectory* base_;
  const ProblemSpec* spec_;
  BandedMatrix lap_;
  std::vector<std::unique_ptr<StepJacobian>> steps_;
};

namespace detail {

inline void check_increment(const SpaceTimeField& h, const ProblemSpec& spec) {
  if (h.levels() != spec.n_steps() || h.cells() != spec.n_cells()) {
    throw std::invalid_argument("control increment must have n_steps levels of n_cells values");
  }
}

}  // namespace detail

/// Linearized system: v follows the exponential update driven by h, and
///   J_{n+1} [xi; eta]_{n+1} = [xi_n / dt; tau xi_n / dt + v_{n+1}].
inline LinearizedTrajectory solve_linearized(const SpaceTimeField& h, const ProblemSpec& spec,
                                             StepJacobians& jacobians) {
  detail::check_increment(h, spec);
  const std::size_t n = spec.n_cells();
  const std::size_t nt = spec.n_steps();
  const double dt = spec.dt();
  const double tau = spec.phys.tau;

  LinearizedTrajectory lin{SpaceTimeField(nt + 1, n), SpaceTimeField(nt + 1, n),
                           SpaceTimeField(nt + 1, n)};
  Field c(n), d(n);
  for (std::size_t k = 0; k < nt; ++k) {
    const Field v_next = step_w(lin.v[k], h[k], dt, spec.phys.gamma);
    std::copy(v_next.begin(), v_next.end(), lin.v[k + 1].begin());
    auto xi = lin.xi[k];
    for (std::size_t i = 0; i < n; ++i) {
      c[i] = xi[i] / dt;
      d[i] = tau * xi[i] / dt + v_next[i];
    }
    jacobians.at(k).solve(c, d, lin.xi[k + 1], lin.eta[k + 1]);
  }
  return lin;
}

inline LinearizedTrajectory solve_linearized(const SpaceTimeField& h, const StateTrajectory& base,
                                             const ProblemSpec& spec) {
  StepJacobians jac(base, spec);
  return solve_linearized(h, spec, jac);
}

/// Bilinearized system for a pair of linearized solutions:
///   J_{n+1} [psi; nu]_{n+1} = [psi_n / dt; tau psi_n / dt - f'''(phi_{n+1}) xi^h xi^k].
inline BilinearizedTrajectory solve_bilinearized(const LinearizedTrajectory& lin_h,
                                                 const LinearizedTrajectory& lin_k,
                                                 const ProblemSpec& spec,
                                                 StepJacobians& jacobians) {
  const StateTrajectory& base = jacobians.base();
  const std::size_t n = spec.n_cells();
  const std::size_t nt = spec.n_steps();
  const double dt = spec.dt();
  const double tau = spec.phys.tau;

  BilinearizedTrajectory bil{SpaceTimeField(nt + 1, n), SpaceTimeField(nt + 1, n),
                             SpaceTimeField(nt + 1, n)};
  Field c(n), d(n);
  for (std::size_t k = 0; k < nt; ++k) {
    auto psi = bil.psi[k];
    for (std::size_t i = 0; i < n; ++i) {
      const double f3 = f_deriv(base.phi(k + 1, i), 3, spec.potential);
      c[i] = psi[i] / dt;
      d[i] = tau * psi[i] / dt - f3 * lin_h.xi(k + 1, i) * lin_k.xi(k + 1, i);
    }
    jacobians.at(k).solve(c, d, bil.psi[k + 1], bil.nu[k + 1]);
  }
  return bil;
}

inline BilinearizedTrajectory solve_bilinearized(const SpaceTimeField& h, const SpaceTimeField& k,
                                                 const StateTrajectory& base,
                                                 const ProblemSpec& spec) {
  StepJacobians jac(base, spec);
  const LinearizedTrajectory lh = solve_linearized(h, spec, jac);
  const LinearizedTrajectory lk = solve_linearized(k, spec, jac);
  return solve_bilinearized(lh, lk, spec, jac);
}

}  // namespace sparse_ch
