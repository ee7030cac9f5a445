// Proximal gradient for the reduced problem, the kappa sweep driver and the
// sampled second-order checks at a computed stationary point.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sparse_ch/adjoint.hpp"
#include "sparse_ch/core.hpp"
#include "sparse_ch/fd_oracle.hpp"
#include "sparse_ch/objective.hpp"
#include "sparse_ch/problem.hpp"
#include "sparse_ch/sampling.hpp"
#include "sparse_ch/sensitivity.hpp"
#include "sparse_ch/state_solver.hpp"

namespace sparse_ch {

class OptimizerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OptimizerConfig {
  double alpha0 = 0.0;          // 0 selects 1 / b3
  double backtrack = 0.5;       // step reduction on rejection
  double sufficient = 1e-4;     // sufficient-decrease constant
  int max_iters = 3000;
  double stat_tol = 1e-8;       // on ||u - prox_{1/b3}(u)||_inf
  double alpha_min = 1e-12;
  double bb_min = 1e-10;
  bool barzilai_borwein = true;
  double tol_u = 1e-10;         // |u| <= tol_u counts as zero
  std::optional<SpaceTimeField> u_init;

  void validate() const {
    if (!(alpha0 >= 0.0)) throw ValidationError("optimizer alpha0 must be > 0 (or 0 for 1/b3)");
    if (!(backtrack > 0.0 && backtrack < 1.0)) throw ValidationError("optimizer backtrack must lie in (0, 1)");
    if (!(sufficient > 0.0 && sufficient < 1.0)) throw ValidationError("optimizer sufficient must lie in (0, 1)");
    if (!(stat_tol > 0.0)) throw ValidationError("optimizer stat_tol must be > 0");
    if (max_iters < 0) throw ValidationError("optimizer max_iters must be >= 0");
    if (!(alpha_min > 0.0) || !(bb_min > 0.0) || !(tol_u >= 0.0)) {
      throw ValidationError("optimizer tolerances must be positive");
    }
  }

  double initial_step(const CostWeights& w) const { return alpha0 > 0.0 ? alpha0 : 1.0 / w.b3; }
  double sparsity_delta(const CostWeights& w) const { return 10.0 * stat_tol / w.b3; }
};

struct IterationRecord {
  int iter = 0;
  double J_total = 0.0;
  double J_smooth = 0.0;
  double G = 0.0;
  double stationarity = 0.0;
  double alpha = 0.0;  // step that produced this iterate (0 for the start)
  int backtracks = 0;
  double zero_fraction = 0.0;
};

struct OptimizerReport {
  std::vector<IterationRecord> iterations;
  SpaceTimeField u;
  StateTrajectory state;
  AdjointTrajectory adjoint;
  SpaceTimeField r;  // control_gradient_part(adjoint)
  CostValue cost;
  SparsityReport sparsity;
  double stationarity = 0.0;
  bool converged = false;
  int forward_failures = 0;
  int noise_accepts = 0;
  std::string stop_reason;
};

/// ||u - prox_{1/b3}(u)||_inf, the distance to the projection formula.
inline double projection_residual(const SpaceTimeField& u, const SpaceTimeField& r,
                                  const CostWeights& w, const BoxBounds& bounds) {
  return stationarity_residual(u, reduced_gradient_from_r(u, r, w), 1.0 / w.b3, w, bounds);
}

inline double zero_fraction(const SpaceTimeField& u, double tol_u) {
  std::size_t z = 0;
  for (double v : u.flat()) z += std::abs(v) <= tol_u;
  return u.size() ? static_cast<double>(z) / static_cast<double>(u.size()) : 0.0;
}

namespace detail {

struct Point {
  SpaceTimeField u;
  StateTrajectory state;
  CostValue cost;
  AdjointTrajectory adjoint;
  SpaceTimeField r;
  SpaceTimeField g;
};

inline void attach_gradient(Point& p, const ProblemSpec& spec) {
  p.adjoint = solve_adjoint(p.state, spec.targets, spec.weights, spec);
  p.r = control_gradient_part(p.adjoint);
  p.g = reduced_gradient_from_r(p.u, p.r, spec.weights);
}

inline IterationRecord record(const Point& p, int iter, double stat, double alpha, int backtracks,
                              double tol_u) {
  return {iter, p.cost.J_total, p.cost.J_smooth, p.cost.G, stat, alpha, backtracks, zero_fraction(p.u, tol_u)};
}

}  // namespace detail

/// Proximal gradient with Barzilai-Borwein trial steps capped at 1/b3 and
/// monotone backtracking on the full objective J_smooth + kappa G.
inline OptimizerReport minimize(const ProblemSpec& spec, const OptimizerConfig& cfg) {
  spec.validate();
  cfg.validate();
  const CostWeights& w = spec.weights;
  const double hx = spec.grid.h, dt = spec.dt();
  const double alpha_cap = cfg.initial_step(w);
  const double stat_alpha = 1.0 / w.b3;

  OptimizerReport rep;
  detail::Point cur;
  cur.u = cfg.u_init ? spec.bounds.project(*cfg.u_init) : spec.zero_control();
  if (cur.u.levels() != spec.n_steps() || cur.u.cells() != spec.n_cells()) {
    throw ValidationError("initial control has the wrong shape");
  }
  cur.state = solve_state(cur.u, spec);
  cur.cost = evaluate_cost(cur.state, cur.u, spec.targets, w, spec.grid, dt);
  detail::attach_gradient(cur, spec);

  double alpha = alpha_cap;
  double last_alpha = 0.0;
  int last_backtracks = 0;
  for (int it = 0;; ++it) {
    const double stat = stationarity_residual(cur.u, cur.g, stat_alpha, w, spec.bounds);
    rep.iterations.push_back(detail::record(cur, it, stat, last_alpha, last_backtracks, cfg.tol_u));
    if (stat <= cfg.stat_tol && stat * w.b3 <= cfg.stat_tol) {
      rep.converged = true;
      rep.stop_reason = "stationary";
      break;
    }
    if (it >= cfg.max_iters) {
      rep.stop_reason = "iteration budget exhausted";
      break;
    }

    const double noise = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(cur.cost.J_total);
    detail::Point trial;
    int backtracks = 0;
    bool accepted = false, stalled = false;
    while (!accepted) {
      if (alpha < cfg.alpha_min) throw OptimizerError("proximal step length underflow");
      trial.u = prox_map(cur.u, cur.g, alpha, w, spec.bounds);
      const SpaceTimeField d = trial.u.axpy(-1.0, cur.u);
      const double model = cfg.sufficient / alpha * inner(d, d, hx, dt);
      try {
        trial.state = solve_state(trial.u, spec);
      } catch (const std::runtime_error&) {
        ++rep.forward_failures;
        alpha *= cfg.backtrack;
        ++backtracks;
        continue;
      }
      trial.cost = evaluate_cost(trial.state, trial.u, spec.targets, w, spec.grid, dt);
      const double f_new = trial.cost.J_total, f_old = cur.cost.J_total;
      if (f_new <= f_old - model) {
        accepted = true;
      } else if (model <= noise && f_new <= f_old + noise) {
        // Decrease model below the rounding level of J: the comparison
        // carries no information, accept within that level.
        accepted = true;
        ++rep.noise_accepts;
      } else if (model <= noise) {
        stalled = true;
        break;
      } else {
        alpha *= cfg.backtrack;
        ++backtracks;
      }
    }
    if (stalled) {
      rep.stop_reason = "stalled at the rounding level of the objective";
      break;
    }
    detail::attach_gradient(trial, spec);

    const double step = alpha;
    if (cfg.barzilai_borwein) {
      const SpaceTimeField s = trial.u.axpy(-1.0, cur.u);
      const SpaceTimeField y = trial.g.axpy(-1.0, cur.g);
      const double sy = inner(s, y, hx, dt);
      const double ss = inner(s, s, hx, dt);
      alpha = sy > 0.0 ? std::clamp(ss / sy, cfg.bb_min, alpha_cap) : alpha_cap;
    }
    cur = std::move(trial);
    last_alpha = step;
    last_backtracks = backtracks;
  }

  rep.stationarity = rep.iterations.back().stationarity;
  rep.u = std::move(cur.u);
  rep.state = std::move(cur.state);
  rep.adjoint = std::move(cur.adjoint);
  rep.r = std::move(cur.r);
  rep.cost = cur.cost;
  rep.sparsity = sparsity_report(rep.u, rep.r, w, spec.bounds, cfg.tol_u, cfg.sparsity_delta(w));
  return rep;
}

/// max |r| of the adjoint at u = 0; every kappa above it makes u = 0 stationary.
inline double zero_control_kappa_threshold(const ProblemSpec& spec) {
  const SpaceTimeField u = spec.zero_control();
  const StateTrajectory st = solve_state(u, spec);
  const AdjointTrajectory adj = solve_adjoint(st, spec.targets, spec.weights, spec);
  return max_abs(control_gradient_part(adj).flat());
}

struct SweepRow {
  double kappa = 0.0;
  bool converged = false;
  int iterations = 0;
  double J_total = 0.0;
  double norm_u_L1 = 0.0;
  double zero_fraction = 0.0;
  std::size_t violations_a = 0;
  std::size_t violations_b = 0;
  bool sparsity_skipped = false;
  double stationarity = 0.0;
  double max_abs_r = 0.0;
  bool all_zero = false;             // every entry <= tol_u
  bool zero_fraction_monotone = true;  // not below the previous row
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::optional<double> smallest_zero_kappa;
  std::vector<OptimizerReport> reports;
};

/// One optimizer run per kappa (ascending), warm-started from the previous
/// solution.
inline SweepResult kappa_sweep(const ProblemSpec& spec, const OptimizerConfig& cfg,
                               const std::vector<double>& kappas, bool keep_reports = false) {
  if (kappas.empty()) throw ValidationError("kappa sweep needs at least one value");
  for (std::size_t k = 0; k < kappas.size(); ++k) {
    if (!(kappas[k] >= 0.0)) throw ValidationError("kappa values must be >= 0");
    if (k > 0 && !(kappas[k] > kappas[k - 1])) throw ValidationError("kappa values must be ascending");
  }
  SweepResult out;
  ProblemSpec s = spec;
  OptimizerConfig c = cfg;
  for (double kappa : kappas) {
    s.weights.kappa = kappa;
    OptimizerReport rep = minimize(s, c);
    SweepRow row;
    row.kappa = kappa;
    row.converged = rep.converged;
    row.iterations = static_cast<int>(rep.iterations.size()) - 1;
    row.J_total = rep.cost.J_total;
    row.norm_u_L1 = rep.cost.G;
    row.zero_fraction = rep.sparsity.zero_fraction;
    row.violations_a = rep.sparsity.violations_a;
    row.violations_b = rep.sparsity.violations_b;
    row.sparsity_skipped = rep.sparsity.skipped;
    row.stationarity = rep.stationarity;
    row.max_abs_r = max_abs(rep.r.flat());
    row.all_zero = max_abs(rep.u.flat()) <= c.tol_u;
    if (!out.rows.empty()) row.zero_fraction_monotone = row.zero_fraction >= out.rows.back().zero_fraction;
    if (row.all_zero && !out.smallest_zero_kappa) out.smallest_zero_kappa = kappa;
    out.rows.push_back(row);
    c.u_init = rep.u;
    if (keep_reports) out.reports.push_back(std::move(rep));
  }
  return out;
}

/// Pointwise surrogate of the critical cone at a computed stationary point.
class CriticalCone {
 public:
  enum Kind : std::int8_t { Zero = 0, Free = 1, NonNegative = 2, NonPositive = 3 };

  CriticalCone(const SpaceTimeField& u, const SpaceTimeField& r, const CostWeights& w,
               const BoxBounds& bounds, double tol_u, double delta)
      : kind_(u.size(), Zero) {
    auto lo = bounds.lower.flat();
    auto up = bounds.upper.flat();
    for (std::size_t k = 0; k < u.size(); ++k) {
      const double uk = u.flat()[k];
      const double gk = r.flat()[k] + w.b3 * uk;
      if (std::abs(std::abs(gk) - w.kappa) > delta) continue;
      const bool at_lower = std::abs(uk - lo[k]) <= tol_u;
      const bool at_upper = std::abs(uk - up[k]) <= tol_u;
      const bool at_zero = w.kappa > 0.0 && std::abs(uk) <= tol_u;
      bool nonneg = at_lower, nonpos = at_upper;
      if (at_zero) {
        if (gk < 0.0) nonneg = true;
        if (gk > 0.0) nonpos = true;
      }
      if (nonneg && nonpos) {
        kind_[k] = Zero;
      } else if (nonneg) {
        kind_[k] = NonNegative;
      } else if (nonpos) {
        kind_[k] = NonPositive;
      } else {
        kind_[k] = Free;
      }
    }
  }

  SpaceTimeField project(const SpaceTimeField& v) const {
    SpaceTimeField out = v;
    auto o = out.flat();
    for (std::size_t k = 0; k < o.size(); ++k) {
      switch (kind_[k]) {
        case Zero: o[k] = 0.0; break;
        case NonNegative: o[k] = std::max(0.0, o[k]); break;
        case NonPositive: o[k] = std::min(0.0, o[k]); break;
        default: break;
      }
    }
    return out;
  }

  std::size_t count(Kind k) const { return static_cast<std::size_t>(std::count(kind_.begin(), kind_.end(), k)); }

 private:
  std::vector<std::int8_t> kind_;
};

struct DirectionCurvature {
  int index = 0;
  bool skipped = false;  // projected to zero
  double curvature = std::numeric_limits<double>::quiet_NaN();  // form(v, v), ||v|| = 1
  double fd2 = std::numeric_limits<double>::quiet_NaN();
  double fd2_rel_error = std::numeric_limits<double>::quiet_NaN();
};

struct SecondOrderResult {
  double min_curvature = std::numeric_limits<double>::quiet_NaN();
  std::size_t cone_free = 0, cone_nonneg = 0, cone_nonpos = 0, cone_zero = 0;
  std::size_t skipped = 0;
  bool degenerate = false;  // every direction projected to zero
  double max_fd2_rel_error = 0.0;
  std::uint64_t seed = 0;
  std::vector<DirectionCurvature> directions;
};

/// Samples random directions, projects them onto the critical-cone surrogate,
/// normalizes in L2(Q) and evaluates the quadratic form; the first fd_checks
/// non-skipped directions are compared against the second-difference oracle.
inline SecondOrderResult second_order_check(const ProblemSpec& spec, const OptimizerReport& opt,
                                            const OptimizerConfig& cfg, int n_dirs, std::uint64_t seed,
                                            int fd_checks = 3, const OracleConfig& oracle = {}) {
  const CostWeights& w = spec.weights;
  const CriticalCone cone(opt.u, opt.r, w, spec.bounds, cfg.tol_u, cfg.sparsity_delta(w));
  SecondOrderResult res;
  res.seed = seed;
  res.cone_free = cone.count(CriticalCone::Free);
  res.cone_nonneg = cone.count(CriticalCone::NonNegative);
  res.cone_nonpos = cone.count(CriticalCone::NonPositive);
  res.cone_zero = cone.count(CriticalCone::Zero);
  StepJacobians jac(opt.state, spec);
  const double hx = spec.grid.h, dt = spec.dt();
  int checked = 0;
  for (int d = 0; d < n_dirs; ++d) {
    DirectionCurvature rec;
    rec.index = d;
    SpaceTimeField v = cone.project(random_normal_field(spec.n_steps(), spec.n_cells(), seed + static_cast<std::uint64_t>(d)));
    const double norm = std::sqrt(inner(v, v, hx, dt));
    if (norm == 0.0) {
      rec.skipped = true;
      ++res.skipped;
      res.directions.push_back(rec);
      continue;
    }
    v *= 1.0 / norm;
    const LinearizedTrajectory lin = solve_linearized(v, spec, jac);
    rec.curvature = hessian_quadratic_form(v, v, lin, lin, opt.state, opt.adjoint, spec);
    if (checked < fd_checks) {
      rec.fd2 = fd_second_difference(opt.u, v, spec, oracle).value;
      rec.fd2_rel_error = std::abs(rec.fd2 - rec.curvature) / std::max(1.0, std::abs(rec.curvature));
      res.max_fd2_rel_error = std::max(res.max_fd2_rel_error, rec.fd2_rel_error);
      ++checked;
    }
    if (!(res.min_curvature <= rec.curvature)) res.min_curvature = rec.curvature;
    res.directions.push_back(rec);
  }
  res.degenerate = res.skipped == static_cast<std::size_t>(n_dirs);
  return res;
}

struct GrowthProbe {
  int direction = 0;
  double s = 0.0;
  double J_star = 0.0;
  double J_perturbed = 0.0;
  bool pass = false;
};

struct GrowthResult {
  std::vector<GrowthProbe> probes;
  bool all_pass = true;
  double tolerance = 0.0;
  std::uint64_t seed = 0;
};

/// Evaluates J_total at clip(u* + s v) for random directions with
/// ||v||_inf = 1 and checks J(u* + s v) >= J(u*) - tolerance.
inline GrowthResult quadratic_growth_probe(const ProblemSpec& spec, const OptimizerReport& opt, int n_dirs,
                                           const std::vector<double>& steps, std::uint64_t seed,
                                           double tolerance = 1e-12) {
  GrowthResult res;
  res.tolerance = tolerance;
  res.seed = seed;
  for (int d = 0; d < n_dirs; ++d) {
    SpaceTimeField v = random_normal_field(spec.n_steps(), spec.n_cells(), seed + static_cast<std::uint64_t>(d));
    v *= 1.0 / max_abs(v.flat());
    for (double s : steps) {
      const SpaceTimeField up = spec.bounds.project(opt.u.axpy(s, v));
      GrowthProbe p;
      p.direction = d;
      p.s = s;
      p.J_star = opt.cost.J_total;
      p.J_perturbed = evaluate(up, spec).cost.J_total;
      p.pass = p.J_perturbed >= p.J_star - tolerance;
      res.all_pass = res.all_pass && p.pass;
      res.probes.push_back(p);
    }
  }
  return res;
}

}  // namespace sparse_ch
