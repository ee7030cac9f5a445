// Forward solver for the viscous Cahn-Hilliard system with memory variable w:
//
//   phi_t - Lap mu = 0
//   tau phi_t - Lap phi + f'(phi) = mu + w
//   gamma w_t + w = u
//
// Time stepping is backward Euler in (phi, mu) and the exact exponential
// update in w. The control is piecewise constant: u[n] acts on [t_n, t_n+1)
// and the (phi, mu) step to level n+1 sees w[n+1].
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sparse_ch/core.hpp"
#include "sparse_ch/potential.hpp"
#include "sparse_ch/problem.hpp"

namespace sparse_ch {

class NewtonDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterate or regularized solution came within the boundary gap of +-1.
class SeparationBreach : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A step failure tagged with the time index of the step that failed.
class StepError : public std::runtime_error {
 public:
  StepError(std::size_t time_index, bool separation, const std::string& what)
      : std::runtime_error("step " + std::to_string(time_index) + ": " + what),
        time_index{time_index}, separation_breach{separation} {}
  std::size_t time_index;
  bool separation_breach;
};

struct SeparationReport {
  double phi_min = 0.0;
  double phi_max = 0.0;
  double margin = 0.0;  // min(phi_min + 1, 1 - phi_max)
  // Thresholds from the discrete maximum principle: with
  // c_star = max |mu + w - f2'(phi)| over levels >= 1,
  // every level satisfies r_minus <= phi <= r_plus.
  double c_star = 0.0;
  double r_minus = 0.0;
  double r_plus = 0.0;
};

struct StateTrajectory {
  SpaceTimeField phi;  // levels 0..n_steps
  SpaceTimeField mu;
  SpaceTimeField w;
  SeparationReport separation;
  double max_mass_drift = 0.0;  // max_k |mean(phi[k]) - mean(phi[0])|
  bool control_in_box = true;
  std::vector<int> newton_iterations;  // per step
  std::size_t regularized_steps = 0;   // steps that needed the Yosida fallback
};

/// Exact integrator of gamma w_t + w = u over one step with constant u.
inline Field step_w(std::span<const double> w_n, std::span<const double> u_n, double dt,
                    std::span<const double> gamma) {
  Field out(w_n.size());
  for (std::size_t i = 0; i < w_n.size(); ++i) {
    const double e = std::exp(-dt / gamma[i]);
    out[i] = e * w_n[i] + (1.0 - e) * u_n[i];
  }
  return out;
}

/// Jacobian of one backward Euler step with respect to (phi, mu):
///
///   J = [ I/dt   -Lap ]     A = (tau/dt) I - Lap + diag(fpp)
///       [ A      -I   ]
///
/// Eliminating the second block leaves M = I/dt - Lap A (pentadiagonal).
class StepJacobian {
 public:
  StepJacobian(const BandedMatrix& lap, double dt, double tau, std::span<const double> fpp)
      : lap_{lap}, dt_{dt}, a_{lap.shifted(-1.0, tau / dt)} {
    a_.add_diagonal(fpp);
  }

  std::size_t size() const { return lap_.size(); }
  const BandedMatrix& a_block() const { return a_; }

  /// Solves J [x; y] = [c; d] with one step of iterative refinement.
  void solve(std::span<const double> c, std::span<const double> d, std::span<double> x,
             std::span<double> y) const {
    const std::size_t n = size();
    if (!m_) m_.emplace(schur());
    solve_once(c, d, x, y);
    Field rc(n), rd(n), dx(n), dy(n);
    apply(x, y, rc, rd);
    for (std::size_t i = 0; i < n; ++i) {
      rc[i] = c[i] - rc[i];
      rd[i] = d[i] - rd[i];
    }
    solve_once(rc, rd, dx, dy);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += dx[i];
      y[i] += dy[i];
    }
  }

  /// Solves J^T [x; y] = [c; d] with one step of iterative refinement.
  void solve_transposed(std::span<const double> c, std::span<const double> d,
                        std::span<double> x, std::span<double> y) const {
    const std::size_t n = size();
    if (!mt_) {
      mt_.emplace(schur().transposed());
      at_ = a_.transposed();
      lapt_ = lap_.transposed();
    }
    solve_transposed_once(c, d, x, y);
    Field rc(n), rd(n), dx(n), dy(n);
    apply_transposed(x, y, rc, rd);
    for (std::size_t i = 0; i < n; ++i) {
      rc[i] = c[i] - rc[i];
      rd[i] = d[i] - rd[i];
    }
    solve_transposed_once(rc, rd, dx, dy);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += dx[i];
      y[i] += dy[i];
    }
  }

  /// [c; d] = J [x; y]
  void apply(std::span<const double> x, std::span<const double> y, std::span<double> c,
             std::span<double> d) const {
    const std::size_t n = size();
    lap_.apply(y, c);
    for (std::size_t i = 0; i < n; ++i) c[i] = x[i] / dt_ - c[i];
    a_.apply(x, d);
    for (std::size_t i = 0; i < n; ++i) d[i] -= y[i];
  }

 private:
  BandedMatrix schur() const {
    BandedMatrix m = lap_ * a_;
    return m.shifted(-1.0, 1.0 / dt_);
  }

  void solve_once(std::span<const double> c, std::span<const double> d, std::span<double> x,
                  std::span<double> y) const {
    const std::size_t n = size();
    Field rhs = lap_.apply(d);
    for (std::size_t i = 0; i < n; ++i) rhs[i] = c[i] - rhs[i];
    m_->solve_in_place(rhs);
    a_.apply(rhs, y);
    for (std::size_t i = 0; i < n; ++i) y[i] -= d[i];
    // Recover x from the first block row so that sum(x) = dt sum(c) holds
    // to rounding (the Laplacian has zero row sums).
    lap_.apply(y, x);
    for (std::size_t i = 0; i < n; ++i) x[i] = dt_ * (c[i] + x[i]);
  }

  // J^T = [ I/dt  A^T ; -Lap^T  -I ]  =>  y = -Lap^T x - d,
  // (I/dt - A^T Lap^T) x = c + A^T d.
  void solve_transposed_once(std::span<const double> c, std::span<const double> d,
                             std::span<double> x, std::span<double> y) const {
    const std::size_t n = size();
    Field rhs = at_.apply(d);
    for (std::size_t i = 0; i < n; ++i) rhs[i] += c[i];
    mt_->solve_in_place(rhs);
    std::copy(rhs.begin(), rhs.end(), x.begin());
    lapt_.apply(x, y);
    for (std::size_t i = 0; i < n; ++i) y[i] = -y[i] - d[i];
  }

  void apply_transposed(std::span<const double> x, std::span<const double> y,
                        std::span<double> c, std::span<double> d) const {
    const std::size_t n = size();
    at_.apply(y, c);
    for (std::size_t i = 0; i < n; ++i) c[i] += x[i] / dt_;
    lapt_.apply(x, d);
    for (std::size_t i = 0; i < n; ++i) d[i] = -d[i] - y[i];
  }

  BandedMatrix lap_;
  double dt_;
  BandedMatrix a_;
  mutable std::optional<BandedLU> m_;
  mutable std::optional<BandedLU> mt_;
  mutable BandedMatrix at_;
  mutable BandedMatrix lapt_;
};

namespace detail {

struct ExactConvexPart {
  const PotentialParams& p;
  double d1(double r) const { return f1_deriv(r, 1, p); }
  double d2(double r) const { return f1_deriv(r, 2, p); }
  static constexpr bool singular = true;
};

struct YosidaConvexPart {
  const PotentialParams& p;
  double eps;
  double d1(double r) const { return yosida_deriv(r, eps, p); }
  double d2(double r) const { return yosida_second(r, eps, p); }
  static constexpr bool singular = false;
};

struct StepData {
  std::span<const double> phi_n;
  std::span<const double> w_next;
  const BandedMatrix& lap;
  double dt;
  double tau;
  const PotentialParams& pot;
};

// dt-scaled residuals
//   s1 = phi - phi_n - dt Lap mu
//   s2 = tau (phi - phi_n) + dt (-Lap phi + f'(phi) - mu - w)
template <class Convex>
double step_residual(const StepData& s, const Convex& f1, std::span<const double> phi,
                     std::span<const double> mu, std::span<double> r1, std::span<double> r2) {
  const std::size_t n = phi.size();
  s.lap.apply(mu, r1);
  s.lap.apply(phi, r2);
  double res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dphi = phi[i] - s.phi_n[i];
    r1[i] = dphi - s.dt * r1[i];
    const double fp = f1.d1(phi[i]) + f2_deriv(phi[i], 1, s.pot);
    r2[i] = s.tau * dphi + s.dt * (-r2[i] + fp - mu[i] - s.w_next[i]);
    res = std::max({res, std::abs(r1[i]), std::abs(r2[i])});
  }
  return res;
}

inline double sum_sq(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (double v : a) m += v * v;
  for (double v : b) m += v * v;
  return m;
}

struct NewtonResult {
  int iterations = 0;
  double residual = 0.0;
};

// Damped Newton on (phi, mu) in place. Throws NewtonDiverged on failure.
template <class Convex>
NewtonResult newton_solve(const StepData& s, const Convex& f1, const NewtonOptions& opt,
                          Field& phi, Field& mu) {
  const std::size_t n = phi.size();
  Field r1(n), r2(n), c(n), d(n), x(n), y(n), fpp(n), tphi(n), tmu(n), t1(n), t2(n);
  const double lo = -1.0 + opt.boundary_gap;
  const double hi = 1.0 - opt.boundary_gap;
  double res = step_residual(s, f1, phi, mu, r1, r2);
  int polish = 0;

  for (int it = 0; it < opt.max_iters; ++it) {
    if (res <= opt.tol) {
      // Extra full steps drive the residual to rounding level so that
      // finite-difference probes of the solution map stay smooth.
      if (polish >= 2 || res <= 1e-14) return {it, res};
      ++polish;
    }
    for (std::size_t i = 0; i < n; ++i) {
      fpp[i] = f1.d2(phi[i]) + f2_deriv(phi[i], 2, s.pot);
      c[i] = -r1[i] / s.dt;
      d[i] = -r2[i] / s.dt;
    }
    StepJacobian jac(s.lap, s.dt, s.tau, fpp);
    jac.solve(c, d, x, y);

    double alpha = 1.0;
    if constexpr (Convex::singular) {
      double alpha_max = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        if (x[i] > 0.0) alpha_max = std::min(alpha_max, (hi - phi[i]) / x[i]);
        if (x[i] < 0.0) alpha_max = std::min(alpha_max, (lo - phi[i]) / x[i]);
      }
      if (alpha_max < 1.0) alpha = 0.99 * std::max(alpha_max, 0.0);
    }

    const double merit0 = 0.5 * sum_sq(r1, r2);
    bool accepted = false;
    for (int b = 0; b <= opt.max_backtracks; ++b) {
      for (std::size_t i = 0; i < n; ++i) {
        tphi[i] = phi[i] + alpha * x[i];
        tmu[i] = mu[i] + alpha * y[i];
      }
      const double tres = step_residual(s, f1, tphi, tmu, t1, t2);
      const double merit = 0.5 * sum_sq(t1, t2);
      const bool decrease = merit <= (1.0 - 2.0 * opt.armijo * alpha) * merit0;
      if (polish > 0 && !(tres < res)) return {it, res};
      if (decrease || (polish > 0 && tres < res)) {
        phi.swap(tphi);
        mu.swap(tmu);
        r1.swap(t1);
        r2.swap(t2);
        res = tres;
        accepted = true;
        break;
      }
      alpha *= opt.backtrack;
    }
    if (!accepted) {
      throw NewtonDiverged("line search failed (residual " + std::to_string(res) + ")");
    }
  }
  if (res <= opt.tol) return {opt.max_iters, res};
  throw NewtonDiverged("no convergence in " + std::to_string(opt.max_iters) +
                       " iterations (residual " + std::to_string(res) + ")");
}

}  // namespace detail

struct StepOutcome {
  Field phi;
  Field mu;
  int iterations = 0;
  double residual = 0.0;
  bool regularized = false;
};

/// One backward Euler step from phi_n, starting Newton at (phi_n, mu_guess).
inline StepOutcome step_state(std::span<const double> phi_n, std::span<const double> w_next,
                              std::span<const double> mu_guess, const ProblemSpec& spec,
                              const BandedMatrix& lap) {
  const NewtonOptions& opt = spec.newton;
  const detail::StepData data{phi_n, w_next, lap, spec.dt(), spec.phys.tau, spec.potential};
  for (double v : phi_n) {
    if (!(std::abs(v) < 1.0)) throw SeparationBreach("previous level is not inside (-1, 1)");
  }

  StepOutcome out;
  out.phi.assign(phi_n.begin(), phi_n.end());
  out.mu.assign(mu_guess.begin(), mu_guess.end());
  try {
    const auto r = detail::newton_solve(data, detail::ExactConvexPart{spec.potential}, opt,
                                        out.phi, out.mu);
    out.iterations = r.iterations;
    out.residual = r.residual;
    return out;
  } catch (const NewtonDiverged&) {
    if (!opt.allow_fallback) throw;
  }

  // Regularized solve (smooth everywhere), then polish with the exact f1'.
  out.phi.assign(phi_n.begin(), phi_n.end());
  out.mu.assign(mu_guess.begin(), mu_guess.end());
  const auto reg = detail::newton_solve(
      data, detail::YosidaConvexPart{spec.potential, opt.fallback_eps}, opt, out.phi, out.mu);
  for (double v : out.phi) {
    if (!(std::abs(v) <= 1.0 - opt.boundary_gap)) {
      throw SeparationBreach("regularized step reached the boundary gap of +-1");
    }
  }
  const auto r =
      detail::newton_solve(data, detail::ExactConvexPart{spec.potential}, opt, out.phi, out.mu);
  out.iterations = reg.iterations + r.iterations;
  out.residual = r.residual;
  out.regularized = true;
  return out;
}

inline StepOutcome step_state(std::span<const double> phi_n, std::span<const double> w_next,
                              const ProblemSpec& spec) {
  for (double v : phi_n) {
    if (!(std::abs(v) < 1.0)) throw SeparationBreach("previous level is not inside (-1, 1)");
  }
  const BandedMatrix lap = spec.laplacian();
  Field mu0 = lap.apply(phi_n);
  for (std::size_t i = 0; i < mu0.size(); ++i) {
    mu0[i] = f_deriv(phi_n[i], 1, spec.potential) - mu0[i] - w_next[i];
  }
  return step_state(phi_n, w_next, mu0, spec, lap);
}

inline SeparationReport separation_report(const StateTrajectory& st, const PotentialParams& pot) {
  SeparationReport rep;
  rep.phi_min = std::numeric_limits<double>::infinity();
  rep.phi_max = -std::numeric_limits<double>::infinity();
  for (double v : st.phi.flat()) {
    rep.phi_min = std::min(rep.phi_min, v);
    rep.phi_max = std::max(rep.phi_max, v);
  }
  rep.margin = std::min(rep.phi_min + 1.0, 1.0 - rep.phi_max);
  for (std::size_t k = 1; k < st.phi.levels(); ++k) {
    for (std::size_t i = 0; i < st.phi.cells(); ++i) {
      const double g = st.mu(k, i) + st.w(k, i) - f2_deriv(st.phi(k, i), 1, pot);
      rep.c_star = std::max(rep.c_star, std::abs(g));
    }
  }
  const double t = std::tanh(rep.c_star / (2.0 * pot.c1));
  auto phi0 = st.phi[0];
  rep.r_plus = std::max(t, *std::max_element(phi0.begin(), phi0.end()));
  rep.r_minus = std::min(-t, *std::min_element(phi0.begin(), phi0.end()));
  return rep;
}

/// Full forward solve for a control with n_steps levels. The box is not
/// enforced; `control_in_box` records whether u respected it.
inline StateTrajectory solve_state(const SpaceTimeField& u, const ProblemSpec& spec) {
  const std::size_t n = spec.n_cells();
  const std::size_t nt = spec.n_steps();
  if (u.levels() != nt || u.cells() != n) {
    throw std::invalid_argument("solve_state: control must have n_steps levels of n_cells values");
  }
  const BandedMatrix lap = spec.laplacian();
  const double dt = spec.dt();

  StateTrajectory st;
  st.phi = SpaceTimeField(nt + 1, n);
  st.mu = SpaceTimeField(nt + 1, n);
  st.w = SpaceTimeField(nt + 1, n);
  st.control_in_box = spec.bounds.lower.same_shape(u) ? spec.bounds.contains(u) : false;
  st.newton_iterations.reserve(nt);

  std::copy(spec.initial.phi0.begin(), spec.initial.phi0.end(), st.phi[0].begin());
  std::copy(spec.initial.w0.begin(), spec.initial.w0.end(), st.w[0].begin());
  {
    const Field lphi = lap.apply(st.phi[0]);
    for (std::size_t i = 0; i < n; ++i) {
      st.mu(0, i) = f_deriv(st.phi(0, i), 1, spec.potential) - lphi[i] - st.w(0, i);
    }
  }

  Field mu_guess(st.mu[0].begin(), st.mu[0].end());
  for (std::size_t k = 0; k < nt; ++k) {
    const Field w_next = step_w(st.w[k], u[k], dt, spec.phys.gamma);
    std::copy(w_next.begin(), w_next.end(), st.w[k + 1].begin());
    if (k == 0) {
      const Field lphi = lap.apply(st.phi[0]);
      for (std::size_t i = 0; i < n; ++i) {
        mu_guess[i] = f_deriv(st.phi(0, i), 1, spec.potential) - lphi[i] - w_next[i];
      }
    }
    StepOutcome step;
    try {
      step = step_state(st.phi[k], w_next, mu_guess, spec, lap);
    } catch (const SeparationBreach& e) {
      throw StepError(k, true, e.what());
    } catch (const NewtonDiverged& e) {
      throw StepError(k, false, e.what());
    } catch (const SingularSystemError& e) {
      throw StepError(k, false, e.what());
    }
    std::copy(step.phi.begin(), step.phi.end(), st.phi[k + 1].begin());
    std::copy(step.mu.begin(), step.mu.end(), st.mu[k + 1].begin());
    mu_guess = step.mu;
    st.newton_iterations.push_back(step.iterations);
    if (step.regularized) ++st.regularized_steps;
  }

  const double m0 = mean_value(st.phi[0], spec.grid);
  for (std::size_t k = 0; k <= nt; ++k) {
    st.max_mass_drift = std::max(st.max_mass_drift, std::abs(mean_value(st.phi[k], spec.grid) - m0));
  }
  st.separation = separation_report(st, spec.potential);
  return st;
}

}  // namespace sparse_ch
