// sparse_ch: forward solve, optimization, kappa sweep and property checks
// driven by one JSON configuration.
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid configuration,
// 3 verification failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sparse_ch/config.hpp"
#include "sparse_ch/io.hpp"
#include "sparse_ch/optimizer.hpp"
#include "sparse_ch/verification.hpp"

namespace fs = std::filesystem;
using namespace sparse_ch;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kValidation = 2;
constexpr int kSuiteFailure = 3;

fs::path prepare_output(const RunConfig& rc) {
  const fs::path dir = rc.output.dir;
  fs::create_directories(dir);
  std::ofstream out(dir / "resolved_config.json");
  if (!out) throw IoError("cannot write " + (dir / "resolved_config.json").string());
  out << rc.resolved.dump(2) << '\n';
  return dir;
}

std::vector<double> cell_centers(const ProblemSpec& spec) {
  std::vector<double> x(spec.n_cells());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = spec.grid.x(i);
  return x;
}

void write_state_profiles(const fs::path& dir, const StateTrajectory& st, const ProblemSpec& spec) {
  const auto x = cell_centers(spec);
  auto level = [&](std::size_t k) {
    auto row = st.phi[k];
    return std::vector<double>(row.begin(), row.end());
  };
  write_profile(dir / "phi_0.dat", "x", "phi", x, level(0));
  write_profile(dir / "phi_T.dat", "x", "phi", x, level(spec.n_steps()));
  std::vector<double> t, m;
  for (std::size_t k = 0; k <= spec.n_steps(); ++k) {
    t.push_back(static_cast<double>(k) * spec.dt());
    m.push_back(mean_value(st.phi[k], spec.grid));
  }
  write_profile(dir / "mass.dat", "t", "mean_phi", t, m);
}

void print_separation(const StateTrajectory& st) {
  const SeparationReport& s = st.separation;
  std::printf("separation: phi in [%.6f, %.6f], margin %.6f, thresholds [%.6f, %.6f]\n", s.phi_min, s.phi_max,
              s.margin, s.r_minus, s.r_plus);
  std::printf("mass drift: %.3e, regularized steps: %zu\n", st.max_mass_drift, st.regularized_steps);
}

int cmd_solve(const RunConfig& rc) {
  const fs::path dir = prepare_output(rc);
  const StateTrajectory st = solve_state(rc.control, rc.spec);
  write_trajectory_csv(dir / "trajectory.csv", st, rc.spec, rc.output.snapshot_stride);
  write_separation_csv(dir / "separation.csv", st);
  if (rc.output.profiles) write_state_profiles(dir, st, rc.spec);
  const CostValue c = evaluate_cost(st, rc.control, rc.spec.targets, rc.spec.weights, rc.spec.grid, rc.spec.dt());
  print_separation(st);
  std::printf("J_total %.12g (smooth %.12g, L1 %.12g)\n", c.J_total, c.J_smooth, c.G);
  return kOk;
}

int cmd_optimize(const RunConfig& rc) {
  const fs::path dir = prepare_output(rc);
  const OptimizerReport rep = minimize(rc.spec, rc.optimizer);
  const std::size_t stride = rc.output.snapshot_stride;
  write_iterations_csv(dir / "iterations.csv", rep);
  write_control_csv(dir / "control.csv", rep.u, rc.spec);
  write_sparsity_csv(dir / "sparsity.csv", rep);
  write_adjoint_csv(dir / "adjoint.csv", rep.adjoint, rc.spec, stride);
  write_trajectory_csv(dir / "trajectory.csv", rep.state, rc.spec, stride);
  write_separation_csv(dir / "separation.csv", rep.state);
  if (rc.output.profiles) {
    write_state_profiles(dir, rep.state, rc.spec);
    std::vector<double> it, st, t, l1;
    for (const IterationRecord& r : rep.iterations) {
      it.push_back(r.iter);
      st.push_back(r.stationarity);
    }
    write_profile(dir / "convergence.dat", "iter", "stationarity", it, st);
    for (std::size_t m = 0; m < rep.u.levels(); ++m) {
      double s = 0.0;
      for (double v : rep.u[m]) s += std::abs(v);
      t.push_back(static_cast<double>(m) * rc.spec.dt());
      l1.push_back(s * rc.spec.grid.h);
    }
    write_profile(dir / "control_l1.dat", "t", "int_abs_u", t, l1);
  }
  std::printf("%s after %zu iterations (%s), stationarity %.3e\n", rep.converged ? "converged" : "NOT converged",
              rep.iterations.size() - 1, rep.stop_reason.c_str(), rep.stationarity);
  std::printf("J_total %.12g, ||u||_L1 %.12g, zero fraction %.6f\n", rep.cost.J_total, rep.cost.G,
              rep.sparsity.zero_fraction);
  if (rep.sparsity.skipped) {
    std::printf("sparsity check skipped (kappa = 0)\n");
  } else {
    std::printf("sparsity violations: %zu / %zu (delta %.3e)%s\n", rep.sparsity.violations_a,
                rep.sparsity.violations_b, rep.sparsity.delta,
                rep.sparsity.hypothesis_holds ? "" : ", bounds do not straddle zero");
  }
  if (rc.second_order.directions > 0) {
    const SecondOrderResult so = second_order_check(rc.spec, rep, rc.optimizer, rc.second_order.directions, rc.seed,
                                                    rc.second_order.fd_checks, rc.oracle);
    write_second_order_csv(dir / "second_order.csv", so);
    const GrowthResult g = quadratic_growth_probe(rc.spec, rep, rc.second_order.growth_directions,
                                                  rc.second_order.growth_steps, rc.seed + 1000,
                                                  rc.second_order.growth_tolerance);
    write_growth_csv(dir / "growth.csv", g);
    std::printf("critical cone: %zu free, %zu >= 0, %zu <= 0, %zu fixed; min curvature %.6e%s\n", so.cone_free,
                so.cone_nonneg, so.cone_nonpos, so.cone_zero, so.min_curvature, so.degenerate ? " (empty cone)" : "");
    std::printf("growth probes: %s\n", g.all_pass ? "all pass" : "FAILURES");
  }
  return rep.converged ? kOk : kRuntime;
}

int cmd_sweep(const RunConfig& rc) {
  const fs::path dir = prepare_output(rc);
  std::vector<double> kappas = rc.sweep.kappas;
  if (kappas.empty()) {
    const double k0 = zero_control_kappa_threshold(rc.spec);
    std::printf("max |r| at u = 0: %.12g\n", k0);
    for (double f : rc.sweep.fractions) kappas.push_back(f * k0);
    if (k0 == 0.0) kappas.resize(1);
  }
  const SweepResult sw = kappa_sweep(rc.spec, rc.optimizer, kappas);
  write_sweep_csv(dir / "sweep.csv", sw);
  if (rc.output.profiles) {
    std::vector<double> k, z, l1;
    for (const SweepRow& r : sw.rows) {
      k.push_back(r.kappa);
      z.push_back(r.zero_fraction);
      l1.push_back(r.norm_u_L1);
    }
    write_profile(dir / "sweep_zero_fraction.dat", "kappa", "zero_fraction", k, z);
    write_profile(dir / "sweep_l1.dat", "kappa", "norm_u_L1", k, l1);
  }
  bool all = true;
  for (const SweepRow& r : sw.rows) {
    std::printf("kappa %.6e: %s, ||u||_L1 %.6e, zero fraction %.6f, violations %zu/%zu%s\n", r.kappa,
                r.converged ? "converged" : "NOT converged", r.norm_u_L1, r.zero_fraction, r.violations_a,
                r.violations_b, r.zero_fraction_monotone ? "" : " (zero fraction decreased)");
    all = all && r.converged;
  }
  if (sw.smallest_zero_kappa) {
    std::printf("smallest swept kappa with u = 0: %.6e\n", *sw.smallest_zero_kappa);
  } else {
    std::printf("no swept kappa gives u = 0\n");
  }
  return all ? kOk : kRuntime;
}

int cmd_check(const RunConfig& rc) {
  const fs::path dir = prepare_output(rc);
  const SuiteReport rep = run_property_suites(rc.spec, rc.suite);
  write_suite_report_csv(dir / "suite_report.csv", rep);
  const std::string text = suite_report_text(rep);
  std::ofstream(dir / "suite_report.txt") << text;
  std::fputs(text.c_str(), stdout);
  return rep.all_pass() ? kOk : kSuiteFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse optimal control of the viscous Cahn-Hilliard system with logarithmic potential"};
  app.require_subcommand(1, 1);

  std::string config_path, out_dir, seed, stride;
  std::vector<std::string> sets;
  bool profiles = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON configuration file")->required();
    sub->add_option("--out", out_dir, "output directory (output.dir)");
    sub->add_option("--seed", seed, "random seed (seed)");
    sub->add_option("--set", sets, "override a config key: dotted.path=json_value")->take_all();
    sub->add_option("--snapshot-stride", stride, "write every N-th time level (output.snapshot_stride)");
    sub->add_flag("--profiles", profiles, "also write two-column .dat profiles");
  };
  CLI::App* solve = app.add_subcommand("solve", "forward solve for the configured control");
  CLI::App* optimize = app.add_subcommand("optimize", "proximal gradient optimization");
  CLI::App* sweep = app.add_subcommand("sweep", "kappa sweep with warm starts");
  CLI::App* check = app.add_subcommand("check", "run the verification suites");
  for (CLI::App* sub : {solve, optimize, sweep, check}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    std::vector<std::string> overrides = sets;
    if (!out_dir.empty()) overrides.push_back("output.dir=" + Json(out_dir).dump());
    if (!seed.empty()) overrides.push_back("seed=" + seed);
    if (!stride.empty()) overrides.push_back("output.snapshot_stride=" + stride);
    if (profiles) overrides.push_back("output.profiles=true");
    const RunConfig rc = load_config(config_path, overrides);
    if (solve->parsed()) return cmd_solve(rc);
    if (optimize->parsed()) return cmd_optimize(rc);
    if (sweep->parsed()) return cmd_sweep(rc);
    return cmd_check(rc);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return kValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntime;
  }
}
