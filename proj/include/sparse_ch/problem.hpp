// Problem data: grid, time horizon, physical parameters, initial data,
// targets, cost weights and box bounds, with admissibility checks.
#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>

#include "sparse_ch/core.hpp"
#include "sparse_ch/potential.hpp"

namespace sparse_ch {

/// Raised when problem data violates an admissibility requirement.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct PhysParams {
  double tau = 0.1;     // viscosity
  Field gamma;          // relaxation coefficient of the w equation, one per cell
  double gamma0 = 0.0;  // required lower bound of gamma
  double T = 1.0;
  std::size_t n_steps = 1;

  double dt() const { return T / static_cast<double>(n_steps); }
};

struct InitialData {
  Field phi0;
  Field w0;
};

/// Tracking target over the time levels 0..n_steps and a terminal target.
struct Targets {
  SpaceTimeField phi_Q;
  Field phi_Omega;
};

struct CostWeights {
  double b1 = 0.0;
  double b2 = 0.0;
  double b3 = 1.0;
  double kappa = 0.0;

  void validate() const {
    if (!(b1 >= 0.0) || !(b2 >= 0.0)) throw ValidationError("cost weights b1, b2 must be >= 0");
    if (!(b3 > 0.0)) throw ValidationError("cost weight b3 must be > 0");
    if (!(kappa >= 0.0)) throw ValidationError("sparsity weight kappa must be >= 0");
  }
};

/// Box constraints for the control, one value per control entry.
struct BoxBounds {
  SpaceTimeField lower;
  SpaceTimeField upper;
  bool constant = true;  // both bounds are spatially and temporally constant
  double lower_const = 0.0;
  double upper_const = 0.0;

  static BoxBounds uniform(std::size_t levels, std::size_t cells, double lb, double ub) {
    BoxBounds b;
    b.lower = SpaceTimeField(levels, cells, lb);
    b.upper = SpaceTimeField(levels, cells, ub);
    b.constant = true;
    b.lower_const = lb;
    b.upper_const = ub;
    return b;
  }

  static BoxBounds fields(SpaceTimeField lb, SpaceTimeField ub) {
    BoxBounds b;
    b.lower = std::move(lb);
    b.upper = std::move(ub);
    b.constant = false;
    return b;
  }

  /// Constant bounds with lb < 0 < ub, the setting of the sparsity theorem.
  bool straddles_zero() const { return constant && lower_const < 0.0 && 0.0 < upper_const; }

  void validate(std::size_t levels, std::size_t cells) const {
    if (lower.levels() != levels || lower.cells() != cells || !lower.same_shape(upper)) {
      throw ValidationError("box bounds have the wrong shape");
    }
    auto lo = lower.flat();
    auto up = upper.flat();
    for (std::size_t k = 0; k < lo.size(); ++k) {
      if (!(lo[k] <= up[k])) throw ValidationError("box bounds need lower <= upper");
    }
  }

  SpaceTimeField project(const SpaceTimeField& u) const {
    SpaceTimeField out = u;
    auto o = out.flat();
    auto lo = lower.flat();
    auto up = upper.flat();
    for (std::size_t k = 0; k < o.size(); ++k) o[k] = std::min(up[k], std::max(lo[k], o[k]));
    return out;
  }

  bool contains(const SpaceTimeField& u) const {
    auto v = u.flat();
    auto lo = lower.flat();
    auto up = upper.flat();
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (v[k] < lo[k] || v[k] > up[k]) return false;
    }
    return true;
  }
};

struct NewtonOptions {
  double tol = 1e-10;           // sup norm of the dt-scaled residual
  int max_iters = 50;
  double backtrack = 0.5;
  int max_backtracks = 30;
  double armijo = 1e-4;
  double boundary_gap = 1e-9;   // iterates stay in [-1 + gap, 1 - gap]
  double fallback_eps = 1e-3;   // Yosida parameter of the regularized fallback
  bool allow_fallback = true;
};

struct ProblemSpec {
  Grid grid;
  PotentialParams potential;
  PhysParams phys;
  InitialData initial;
  Targets targets;
  CostWeights weights;
  BoxBounds bounds;
  NewtonOptions newton;
  // Seeded fault for mutation testing: added to the first diagonal entry of
  // the Laplacian, which breaks its zero row sum.
  double laplacian_row_sum_fault = 0.0;

  std::size_t n_cells() const { return grid.n_cells; }
  std::size_t n_steps() const { return phys.n_steps; }
  double dt() const { return phys.dt(); }

  BandedMatrix laplacian() const {
    BandedMatrix lap = neumann_laplacian(grid);
    if (laplacian_row_sum_fault != 0.0) lap.at(0, 0) += laplacian_row_sum_fault;
    return lap;
  }

  /// Zero control with one level per time interval.
  SpaceTimeField zero_control() const { return SpaceTimeField(phys.n_steps, grid.n_cells); }

  void validate() const {
    const std::size_t n = grid.n_cells;
    if (n < 4 || !(grid.length > 0.0) ||
        std::abs(grid.h * static_cast<double>(n) - grid.length) > 4e-16 * grid.length * n) {
      throw ValidationError("inconsistent grid");
    }
    try {
      potential.validate();
    } catch (const std::invalid_argument& e) {
      throw ValidationError(e.what());
    }
    if (!(phys.tau > 0.0)) throw ValidationError("tau must be > 0");
    if (!(phys.T > 0.0) || !std::isfinite(phys.T)) throw ValidationError("T must be > 0");
    if (phys.n_steps < 1) throw ValidationError("n_steps must be >= 1");
    if (!(phys.gamma0 > 0.0)) throw ValidationError("gamma0 must be > 0");
    if (phys.gamma.size() != n) throw ValidationError("gamma has the wrong length");
    for (double g : phys.gamma) {
      if (!(g >= phys.gamma0)) throw ValidationError("gamma must be >= gamma0 everywhere");
    }
    if (initial.phi0.size() != n || initial.w0.size() != n) {
      throw ValidationError("initial data has the wrong length");
    }
    for (double v : initial.phi0) {
      if (!(v > -1.0 && v < 1.0)) throw ValidationError("phi0 must lie strictly inside (-1, 1)");
    }
    for (double v : initial.w0) {
      if (!std::isfinite(v)) throw ValidationError("w0 must be finite");
    }
    if (targets.phi_Q.levels() != phys.n_steps + 1 || targets.phi_Q.cells() != n) {
      throw ValidationError("phi_Q must have n_steps + 1 levels of n_cells values");
    }
    if (targets.phi_Omega.size() != n) throw ValidationError("phi_Omega has the wrong length");
    weights.validate();
    bounds.validate(phys.n_steps, n);
  }
};

/// The default tracking instance used by examples, tests and acceptance.
inline ProblemSpec default_instance(std::size_t n_cells = 128, std::size_t n_steps = 256) {
  ProblemSpec spec;
  spec.grid = build_grid(1.0, n_cells);
  spec.potential = {1.0, 2.5};
  spec.phys.tau = 0.1;
  spec.phys.gamma = Field(n_cells, 0.5);
  spec.phys.gamma0 = 0.5;
  spec.phys.T = 0.5;
  spec.phys.n_steps = n_steps;

  const double pi = std::numbers::pi;
  spec.initial.phi0.resize(n_cells);
  spec.initial.w0.assign(n_cells, 0.0);
  Field target(n_cells);
  for (std::size_t i = 0; i < n_cells; ++i) {
    const double c = std::cos(pi * spec.grid.x(i) / spec.grid.length);
    spec.initial.phi0[i] = 0.2 * c;
    target[i] = 0.4 * c;
  }
  spec.targets.phi_Q = SpaceTimeField(n_steps + 1, n_cells);
  for (std::size_t k = 0; k <= n_steps; ++k) {
    std::copy(target.begin(), target.end(), spec.targets.phi_Q[k].begin());
  }
  spec.targets.phi_Omega = target;
  spec.weights = {1.0, 0.5, 1e-2, 0.0};
  spec.bounds = BoxBounds::uniform(n_steps, n_cells, -5.0, 5.0);
  return spec;
}

}  // namespace sparse_ch
