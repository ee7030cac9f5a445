// Backward adjoint sweep: the transpose of the linearized time stepping.
//
// Storage is staggered with the control. Level m < n_steps holds the adjoint
// pair belonging to the implicit step that produces phi[m+1], so that r[m]
// pairs with u[m]. Level n_steps holds the terminal data:
//   p + tau q = b2 (phi(T) - phi_Omega),  q = -Lap p,  r = 0.
#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "sparse_ch/core.hpp"
#include "sparse_ch/problem.hpp"
#include "sparse_ch/sensitivity.hpp"
#include "sparse_ch/state_solver.hpp"

namespace sparse_ch {

struct AdjointTrajectory {
  SpaceTimeField p;      // levels 0..n_steps
  SpaceTimeField q;
  SpaceTimeField r;
  SpaceTimeField combo;  // p + tau q
};

inline AdjointTrajectory solve_adjoint(const StateTrajectory& base, const Targets& targets,
                                       const CostWeights& weights, const ProblemSpec& spec,
                                       StepJacobians& jacobians) {
  const std::size_t n = spec.n_cells();
  const std::size_t nt = spec.n_steps();
  const double dt = spec.dt();
  const double tau = spec.phys.tau;
  if (targets.phi_Q.levels() != nt + 1 || targets.phi_Q.cells() != n ||
      targets.phi_Omega.size() != n) {
    throw std::invalid_argument("solve_adjoint: target shapes do not match the discretization");
  }

  AdjointTrajectory adj{SpaceTimeField(nt + 1, n), SpaceTimeField(nt + 1, n),
                        SpaceTimeField(nt + 1, n), SpaceTimeField(nt + 1, n)};

  const BandedMatrix lap = spec.laplacian();
  for (std::size_t i = 0; i < n; ++i) {
    adj.combo(nt, i) = weights.b2 * (base.phi(nt, i) - targets.phi_Omega[i]);
  }
  {
    const Field p_end = solve_banded(lap, -tau, 1.0, adj.combo[nt]);
    std::copy(p_end.begin(), p_end.end(), adj.p[nt].begin());
    const Field lp = lap.apply(p_end);
    for (std::size_t i = 0; i < n; ++i) adj.q(nt, i) = -lp[i];
  }

  // J_m^T [p; q]_m = [b1 (phi[m+1] - phi_Q[m+1]) + combo[m+1] / dt; 0]
  Field c(n);
  const Field zero(n, 0.0);
  for (std::size_t m = nt; m-- > 0;) {
    for (std::size_t i = 0; i < n; ++i) {
      c[i] = weights.b1 * (base.phi(m + 1, i) - targets.phi_Q(m + 1, i)) + adj.combo(m + 1, i) / dt;
    }
    jacobians.at(m).solve_transposed(c, zero, adj.p[m], adj.q[m]);
    for (std::size_t i = 0; i < n; ++i) adj.combo(m, i) = adj.p(m, i) + tau * adj.q(m, i);
  }

  // Transpose of the exponential update for w: r[m] = (1 - E) s[m] with
  // s[m] = q[m] + E s[m+1], s[n_steps] = 0.
  Field s(n, 0.0);
  for (std::size_t m = nt; m-- > 0;) {
    for (std::size_t i = 0; i < n; ++i) {
      const double e = std::exp(-dt / spec.phys.gamma[i]);
      s[i] = adj.q(m, i) + e * s[i];
      adj.r(m, i) = (1.0 - e) * s[i];
    }
  }
  return adj;
}

inline AdjointTrajectory solve_adjoint(const StateTrajectory& base, const Targets& targets,
                                       const CostWeights& weights, const ProblemSpec& spec) {
  StepJacobians jac(base, spec);
  return solve_adjoint(base, targets, weights, spec, jac);
}

/// Adjoint gradient component restricted to the control levels 0..n_steps-1.
inline SpaceTimeField control_gradient_part(const AdjointTrajectory& adj) {
  const std::size_t nt = adj.r.levels() - 1;
  SpaceTimeField out(nt, adj.r.cells());
  for (std::size_t m = 0; m < nt; ++m) std::copy(adj.r[m].begin(), adj.r[m].end(), out[m].begin());
  return out;
}

}  // namespace sparse_ch
