#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sparse_ch/sampling.hpp"
#include "sparse_ch/sensitivity.hpp"

using namespace sparse_ch;

namespace {

SpaceTimeField random_field(const ProblemSpec& spec, double amplitude, std::uint64_t seed) {
  return random_uniform_control(spec, amplitude, seed);
}

double observed_order(const std::vector<double>& s, const std::vector<double>& err) {
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < s.size(); ++k) {
    worst = std::min(worst, std::log(err[k - 1] / err[k]) / std::log(s[k - 1] / s[k]));
  }
  return worst;
}

class SensitivityTest : public ::testing::Test {
 protected:
  ProblemSpec spec = default_instance(48, 64);
  SpaceTimeField u = random_field(spec, 2.0, 21);
  StateTrajectory base = solve_state(u, spec);
};

}  // namespace

TEST_F(SensitivityTest, ZeroIncrementGivesZero) {
  const LinearizedTrajectory lin = solve_linearized(spec.zero_control(), base, spec);
  for (double v : lin.xi.flat()) EXPECT_EQ(v, 0.0);
  for (double v : lin.eta.flat()) EXPECT_EQ(v, 0.0);
  for (double v : lin.v.flat()) EXPECT_EQ(v, 0.0);
  const BilinearizedTrajectory bil =
      solve_bilinearized(spec.zero_control(), random_field(spec, 1.0, 1), base, spec);
  for (double v : bil.psi.flat()) EXPECT_EQ(v, 0.0);
}

TEST_F(SensitivityTest, Superposition) {
  StepJacobians jac(base, spec);
  const SpaceTimeField h1 = random_field(spec, 1.0, 2);
  const SpaceTimeField h2 = random_field(spec, 1.0, 3);
  const double a = 0.7, b = -1.3;
  SpaceTimeField comb = h1;
  comb *= a;
  comb = comb.axpy(b, h2);
  const auto l1 = solve_linearized(h1, spec, jac);
  const auto l2 = solve_linearized(h2, spec, jac);
  const auto lc = solve_linearized(comb, spec, jac);
  const double scale = max_abs(lc.xi.flat()) + max_abs(l1.xi.flat()) + max_abs(l2.xi.flat());
  for (std::size_t k = 0; k < lc.xi.size(); ++k) {
    EXPECT_NEAR(lc.xi.flat()[k], a * l1.xi.flat()[k] + b * l2.xi.flat()[k], 1e-12 * scale);
  }
}

TEST_F(SensitivityTest, InitialLevelsAndMeanFree) {
  const auto lin = solve_linearized(random_field(spec, 1.0, 4), base, spec);
  for (std::size_t i = 0; i < spec.n_cells(); ++i) {
    EXPECT_EQ(lin.xi(0, i), 0.0);
    EXPECT_EQ(lin.v(0, i), 0.0);
  }
  for (std::size_t k = 0; k <= spec.n_steps(); ++k) {
    EXPECT_NEAR(mean_value(lin.xi[k], spec.grid), 0.0, 1e-12);
  }
  const auto bil = solve_bilinearized(random_field(spec, 1.0, 5), random_field(spec, 1.0, 6), base, spec);
  for (std::size_t k = 0; k <= spec.n_steps(); ++k) {
    EXPECT_NEAR(mean_value(bil.psi[k], spec.grid), 0.0, 1e-12);
  }
  for (double v : bil.z.flat()) EXPECT_EQ(v, 0.0);
}

TEST_F(SensitivityTest, BilinearSymmetry) {
  const SpaceTimeField h = random_field(spec, 1.0, 7);
  const SpaceTimeField k = random_field(spec, 1.0, 8);
  const auto a = solve_bilinearized(h, k, base, spec);
  const auto b = solve_bilinearized(k, h, base, spec);
  const double scale = std::max(1e-300, max_abs(a.psi.flat()));
  for (std::size_t i = 0; i < a.psi.size(); ++i) {
    EXPECT_NEAR(a.psi.flat()[i], b.psi.flat()[i], 1e-12 * scale);
  }
}

TEST_F(SensitivityTest, TaylorRemainders) {
  StepJacobians jac(base, spec);
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    SpaceTimeField h = random_smooth_direction(spec, 1.0, seed);
    h *= 1.0 / max_abs(solve_linearized(h, spec, jac).xi.flat());
    // Linear remainder with max |xi| = 0.05, quadratic remainder with 0.25:
    // the first stays asymptotic at s = 0.1, the second stays above rounding
    // at s = 1e-3.
    auto remainders = [&](double scale, bool second) {
      SpaceTimeField hs = h;
      hs *= scale;
      const auto lin = solve_linearized(hs, spec, jac);
      const auto bil = solve_bilinearized(lin, lin, spec, jac);
      std::vector<double> err;
      for (double s : {1e-1, 1e-2, 1e-3, 1e-4}) {
        const StateTrajectory pert = solve_state(u.axpy(s, hs), spec);
        double r = 0.0;
        for (std::size_t k = 0; k < pert.phi.size(); ++k) {
          double d = pert.phi.flat()[k] - base.phi.flat()[k] - s * lin.xi.flat()[k];
          if (second) d -= 0.5 * s * s * bil.psi.flat()[k];
          r = std::max(r, std::abs(d));
        }
        err.push_back(r);
      }
      return err;
    };
    const auto e1 = remainders(0.05, false);
    EXPECT_GE(observed_order({1e-1, 1e-2, 1e-3, 1e-4}, e1), 1.9)
        << e1[0] << " " << e1[1] << " " << e1[2] << " " << e1[3];
    // At s = 1e-4 the cubic remainder is at the rounding level of phi.
    const auto e2 = remainders(0.25, true);
    EXPECT_GE(observed_order({1e-1, 1e-2, 1e-3}, {e2[0], e2[1], e2[2]}), 2.7)
        << e2[0] << " " << e2[1] << " " << e2[2];
  }
}

TEST_F(SensitivityTest, LinearStepIsForwardJacobian) {
  SpaceTimeField h = random_smooth_direction(spec, 1.0, 14);
  h *= 1.0 / max_abs(solve_linearized(h, base, spec).xi.flat());
  const auto lin = solve_linearized(h, base, spec);  // max |xi| = 1
  const BandedMatrix lap = spec.laplacian();
  const std::size_t n = spec.n_cells();
  const double eps = 1e-7;
  Field r1p(n), r2p(n), r1m(n), r2m(n);
  for (std::size_t k : {0u, 10u, 63u}) {
    auto shifted = [&](double s, std::span<double> o1, std::span<double> o2) {
      Field phin(n), w(n), phi(n), mu(n);
      for (std::size_t i = 0; i < n; ++i) {
        phin[i] = base.phi(k, i) + s * lin.xi(k, i);
        w[i] = base.w(k + 1, i) + s * lin.v(k + 1, i);
        phi[i] = base.phi(k + 1, i) + s * lin.xi(k + 1, i);
        mu[i] = base.mu(k + 1, i) + s * lin.eta(k + 1, i);
      }
      const detail::StepData data{phin, w, lap, spec.dt(), spec.phys.tau, spec.potential};
      detail::step_residual(data, detail::ExactConvexPart{spec.potential}, phi, mu, o1, o2);
    };
    shifted(eps, r1p, r2p);
    shifted(-eps, r1m, r2m);
    // Size of the individual terms of the differentiated residuals, plus the
    // rounding floor of the difference quotient (terms of the base residual
    // times machine epsilon over the step).
    const Field lxi = lap.apply(lin.xi[k + 1]);
    const Field leta = lap.apply(lin.eta[k + 1]);
    const double dt = spec.dt();
    const double stencil = 4.0 / (spec.grid.h * spec.grid.h);
    const double floor1 = 1e-16 * (2.0 + dt * stencil * max_abs(base.mu[k + 1])) / eps;
    const double floor2 =
        1e-16 * (dt * stencil + dt * std::abs(f_deriv(base.separation.phi_max, 1, spec.potential)) +
                 dt * max_abs(base.mu[k + 1]) + dt * max_abs(base.w[k + 1])) / eps;
    const double scale1 = max_abs(lin.xi[k + 1]) + max_abs(lin.xi[k]) + dt * max_abs(leta);
    const double scale2 = spec.phys.tau * scale1 + dt * (max_abs(lxi) + max_abs(lin.eta[k + 1]) +
                                                         max_abs(lin.v[k + 1]));
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_LE(std::abs(r1p[i] - r1m[i]) / (2 * eps), 1e-6 * scale1 + floor1);
      EXPECT_LE(std::abs(r2p[i] - r2m[i]) / (2 * eps), 1e-6 * scale2 + floor2);
    }
  }
}
