// CSV and profile output. Every CSV starts with a "# sparse_ch <kind> v1"
// line followed by a column header; numbers use %.17g so a file read back
// reproduces the doubles exactly.
#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sparse_ch/optimizer.hpp"
#include "sparse_ch/state_solver.hpp"
#include "sparse_ch/verification.hpp"

namespace sparse_ch {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
inline std::string num(std::size_t v) { return std::to_string(v); }
inline std::string num(int v) { return std::to_string(v); }
inline std::string flag(bool b) { return b ? "1" : "0"; }

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& kind, const std::vector<std::string>& columns)
      : out_(path), columns_{columns.size()} {
    if (!out_) throw IoError("cannot write " + path.string());
    out_ << "# sparse_ch " << kind << " v1\n";
    row(columns);
  }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw std::logic_error("csv row has the wrong number of cells");
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (k) out_ << ',';
      out_ << cells[k];
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
  std::size_t columns_;
};

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

/// Levels 0, stride, 2 stride, ... plus the final level.
inline std::vector<std::size_t> snapshot_levels(std::size_t last, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("snapshot stride must be >= 1");
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k <= last; k += stride) out.push_back(k);
  if (out.back() != last) out.push_back(last);
  return out;
}

inline void write_trajectory_csv(const std::filesystem::path& path, const StateTrajectory& st,
                                 const ProblemSpec& spec, std::size_t stride) {
  CsvWriter w(path, "trajectory", {"level", "t", "cell", "x", "phi", "mu", "w"});
  for (std::size_t k : snapshot_levels(spec.n_steps(), stride)) {
    const double t = static_cast<double>(k) * spec.dt();
    for (std::size_t i = 0; i < spec.n_cells(); ++i) {
      w.row({num(k), num(t), num(i), num(spec.grid.x(i)), num(st.phi(k, i)), num(st.mu(k, i)), num(st.w(k, i))});
    }
  }
}

inline void write_separation_csv(const std::filesystem::path& path, const StateTrajectory& st) {
  CsvWriter w(path, "separation",
              {"phi_min", "phi_max", "margin", "c_star", "r_minus", "r_plus", "max_mass_drift", "regularized_steps"});
  const SeparationReport& s = st.separation;
  w.row({num(s.phi_min), num(s.phi_max), num(s.margin), num(s.c_star), num(s.r_minus), num(s.r_plus),
         num(st.max_mass_drift), num(st.regularized_steps)});
}

inline void write_control_csv(const std::filesystem::path& path, const SpaceTimeField& u, const ProblemSpec& spec) {
  CsvWriter w(path, "control", {"level", "t_start", "cell", "x", "u"});
  for (std::size_t m = 0; m < u.levels(); ++m) {
    for (std::size_t i = 0; i < u.cells(); ++i) {
      w.row({num(m), num(static_cast<double>(m) * spec.dt()), num(i), num(spec.grid.x(i)), num(u(m, i))});
    }
  }
}

/// Reads a control written by write_control_csv; every entry must be present.
inline SpaceTimeField read_control_csv(const std::filesystem::path& path, std::size_t levels, std::size_t cells) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read control file " + path.string());
  SpaceTimeField u(levels, cells);
  std::vector<char> seen(levels * cells, 0);
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line.rfind("level,", 0) != 0) throw IoError("control file lacks the column header");
      header = true;
      continue;
    }
    std::stringstream ss(line);
    std::string cell[5];
    for (auto& c : cell) {
      if (!std::getline(ss, c, ',')) throw IoError("control file line " + std::to_string(lineno) + ": too few columns");
    }
    try {
      const std::size_t m = std::stoul(cell[0]);
      const std::size_t i = std::stoul(cell[2]);
      if (m >= levels || i >= cells) throw IoError("control file line " + std::to_string(lineno) + ": index out of range");
      u(m, i) = std::stod(cell[4]);
      seen[m * cells + i] = 1;
    } catch (const std::logic_error&) {
      throw IoError("control file line " + std::to_string(lineno) + ": not a number");
    }
  }
  for (char s : seen) {
    if (!s) throw IoError("control file " + path.string() + " does not cover every level and cell");
  }
  return u;
}

inline void write_adjoint_csv(const std::filesystem::path& path, const AdjointTrajectory& adj,
                              const ProblemSpec& spec, std::size_t stride) {
  CsvWriter w(path, "adjoint", {"level", "cell", "x", "p", "q", "r"});
  for (std::size_t k : snapshot_levels(spec.n_steps(), stride)) {
    for (std::size_t i = 0; i < spec.n_cells(); ++i) {
      w.row({num(k), num(i), num(spec.grid.x(i)), num(adj.p(k, i)), num(adj.q(k, i)), num(adj.r(k, i))});
    }
  }
}

inline void write_iterations_csv(const std::filesystem::path& path, const OptimizerReport& rep) {
  CsvWriter w(path, "iterations",
              {"iter", "J_total", "J_smooth", "G", "stationarity", "alpha", "backtracks", "zero_fraction"});
  for (const IterationRecord& r : rep.iterations) {
    w.row({num(r.iter), num(r.J_total), num(r.J_smooth), num(r.G), num(r.stationarity), num(r.alpha),
           num(r.backtracks), num(r.zero_fraction)});
  }
}

inline const std::vector<std::string>& sparsity_columns() {
  static const std::vector<std::string> c{"kappa", "zero_fraction", "violations_a", "violations_b",
                                          "J_total", "norm_u_L1", "skipped", "converged"};
  return c;
}

inline std::vector<std::string> sparsity_row(const OptimizerReport& rep) {
  const SparsityReport& s = rep.sparsity;
  return {num(s.kappa), num(s.zero_fraction), num(s.violations_a), num(s.violations_b),
          num(rep.cost.J_total), num(rep.cost.G), flag(s.skipped), flag(rep.converged)};
}

inline void write_sparsity_csv(const std::filesystem::path& path, const OptimizerReport& rep) {
  CsvWriter w(path, "sparsity", sparsity_columns());
  w.row(sparsity_row(rep));
}

inline void write_sweep_csv(const std::filesystem::path& path, const SweepResult& sw) {
  CsvWriter w(path, "sweep",
              {"kappa", "converged", "iterations", "J_total", "norm_u_L1", "zero_fraction", "violations_a",
               "violations_b", "sparsity_skipped", "stationarity", "max_abs_r", "all_zero",
               "zero_fraction_monotone"});
  for (const SweepRow& r : sw.rows) {
    w.row({num(r.kappa), flag(r.converged), num(r.iterations), num(r.J_total), num(r.norm_u_L1),
           num(r.zero_fraction), num(r.violations_a), num(r.violations_b), flag(r.sparsity_skipped),
           num(r.stationarity), num(r.max_abs_r), flag(r.all_zero), flag(r.zero_fraction_monotone)});
  }
}

inline void write_second_order_csv(const std::filesystem::path& path, const SecondOrderResult& so) {
  CsvWriter w(path, "second_order", {"direction", "skipped", "curvature", "fd2", "fd2_rel_error"});
  for (const DirectionCurvature& d : so.directions) {
    w.row({num(d.index), flag(d.skipped), num(d.curvature), num(d.fd2), num(d.fd2_rel_error)});
  }
}

inline void write_growth_csv(const std::filesystem::path& path, const GrowthResult& g) {
  CsvWriter w(path, "growth", {"direction", "s", "J_star", "J_perturbed", "pass"});
  for (const GrowthProbe& p : g.probes) {
    w.row({num(p.direction), num(p.s), num(p.J_star), num(p.J_perturbed), flag(p.pass)});
  }
}

inline void write_suite_report_csv(const std::filesystem::path& path, const SuiteReport& rep) {
  CsvWriter w(path, "suite_report", {"suite", "check", "status", "value", "threshold", "seed", "detail"});
  for (const SuiteEntry& e : rep.entries) {
    w.row({e.suite, e.check, to_string(e.status), num(e.value), num(e.threshold), std::to_string(e.seed),
           csv_quote(e.detail)});
  }
}

inline std::string suite_report_text(const SuiteReport& rep) {
  std::ostringstream out;
  std::vector<std::string> order;
  for (const SuiteEntry& e : rep.entries) {
    if (std::find(order.begin(), order.end(), e.suite) == order.end()) order.push_back(e.suite);
  }
  for (const std::string& s : order) {
    std::size_t p = 0, f = 0, k = 0;
    for (const SuiteEntry& e : rep.entries) {
      if (e.suite != s) continue;
      p += e.status == CheckStatus::Pass;
      f += e.status == CheckStatus::Fail;
      k += e.status == CheckStatus::Skipped;
    }
    out << (f ? "FAIL " : "ok   ") << s << ": " << p << " pass, " << f << " fail, " << k << " skipped\n";
    for (const SuiteEntry& e : rep.entries) {
      if (e.suite != s || e.status == CheckStatus::Pass) continue;
      out << "     " << to_string(e.status) << ' ' << e.check << " value=" << num(e.value)
          << " threshold=" << num(e.threshold);
      if (!e.detail.empty()) out << " (" << e.detail << ')';
      out << '\n';
    }
  }
  out << (rep.all_pass() ? "all suites pass" : "verification FAILED") << " (" << rep.count(CheckStatus::Pass)
      << " pass, " << rep.count(CheckStatus::Fail) << " fail, " << rep.count(CheckStatus::Skipped) << " skipped)\n";
  return out.str();
}

/// Gnuplot-ready two-column file.
inline void write_profile(const std::filesystem::path& path, const std::string& xlabel, const std::string& ylabel,
                          const std::vector<double>& x, const std::vector<double>& y) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# " << xlabel << ' ' << ylabel << '\n';
  for (std::size_t k = 0; k < x.size(); ++k) out << num(x[k]) << ' ' << num(y[k]) << '\n';
}

}  // namespace sparse_ch
