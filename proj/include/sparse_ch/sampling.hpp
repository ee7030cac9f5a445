// Seeded random controls and directions used by checks and probes.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "sparse_ch/core.hpp"
#include "sparse_ch/problem.hpp"

namespace sparse_ch {

/// Independent uniform values in [-amplitude, amplitude] per control entry.
inline SpaceTimeField random_uniform_control(const ProblemSpec& spec, double amplitude,
                                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-amplitude, amplitude);
  SpaceTimeField u = spec.zero_control();
  for (double& v : u.flat()) v = d(rng);
  return u;
}

/// Smooth direction: cosine modes 1..modes in space with coefficients that
/// vary linearly in time, standard normal weights scaled by amplitude.
inline SpaceTimeField random_smooth_direction(const ProblemSpec& spec, double amplitude,
                                              std::uint64_t seed, int modes = 4) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  SpaceTimeField h = spec.zero_control();
  const double nt = static_cast<double>(h.levels());
  for (int j = 1; j <= modes; ++j) {
    const double a = d(rng);
    const double b = d(rng);
    for (std::size_t m = 0; m < h.levels(); ++m) {
      const double t = (static_cast<double>(m) + 0.5) / nt;
      for (std::size_t i = 0; i < h.cells(); ++i) {
        const double c = std::cos(j * std::numbers::pi * spec.grid.x(i) / spec.grid.length);
        h(m, i) += amplitude * (a + b * t) * c;
      }
    }
  }
  return h;
}

/// Standard normal entries; used for critical-cone sampling.
inline SpaceTimeField random_normal_field(std::size_t levels, std::size_t cells, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  SpaceTimeField f(levels, cells);
  for (double& v : f.flat()) v = d(rng);
  return f;
}

}  // namespace sparse_ch
