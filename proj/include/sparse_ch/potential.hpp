// Logarithmic double-well potential f = f1 + f2 with
//   f1(r) = c1 ((1+r) ln(1+r) + (1-r) ln(1-r)),   f2(r) = -c2 r^2,
// its derivatives through order three, and the Moreau-Yosida regularization
// of the convex singular part f1.
//
// The resolvent (I + eps f1')^{-1} is computed in the variable y = artanh(r),
// where the defining equation tanh(y) + 2 eps c1 y = s is smooth for every
// real s. This keeps the Yosida derivative f1_eps'(s) = f1'(R_eps(s)) = 2 c1 y
// accurate even when R_eps(s) is closer to +-1 than double precision resolves.
#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sparse_ch {

struct PotentialParams {
  double c1 = 1.0;  // entropy weight
  double c2 = 2.0;  // concave weight

  void validate() const {
    if (!(c1 > 0.0)) throw std::invalid_argument("potential: c1 must be positive");
    if (!(c2 > c1)) throw std::invalid_argument("potential: need c2 > c1 (nonconvex double well)");
  }
};

class ResolventError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void check_open_interval(double r) {
  if (!(std::abs(r) < 1.0)) {
    throw std::domain_error("potential derivative evaluated outside (-1, 1): r = " +
                            std::to_string(r));
  }
}

inline void check_eps(double eps) {
  if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("Yosida parameter must be in (0, 1]");
}

// f1 at r = tanh(y), y >= 0, without forming 1 - r.
inline double f1_of_artanh(double y, double c1) {
  const double e = std::exp(-2.0 * y);
  return c1 * (2.0 * std::numbers::ln2 - 2.0 * std::log1p(e) - 4.0 * y * e / (1.0 + e));
}

}  // namespace detail

/// Convex part f1, +inf outside [-1, 1].
inline double f1_value(double r, const PotentialParams& p) {
  if (std::abs(r) > 1.0) return std::numeric_limits<double>::infinity();
  if (std::abs(r) == 1.0) return 2.0 * p.c1 * std::numbers::ln2;
  return p.c1 * ((1.0 + r) * std::log1p(r) + (1.0 - r) * std::log1p(-r));
}

inline double f_value(double r, const PotentialParams& p) {
  const double f1 = f1_value(r, p);
  if (std::isinf(f1)) return f1;
  return f1 - p.c2 * r * r;
}

/// Derivative of order 1, 2 or 3 of f1 on (-1, 1).
inline double f1_deriv(double r, int order, const PotentialParams& p) {
  detail::check_open_interval(r);
  const double one_minus_sq = (1.0 - r) * (1.0 + r);
  switch (order) {
    case 1:
      return p.c1 * (std::log1p(r) - std::log1p(-r));
    case 2:
      return 2.0 * p.c1 / one_minus_sq;
    case 3:
      return 4.0 * p.c1 * r / (one_minus_sq * one_minus_sq);
    default:
      throw std::invalid_argument("f1_deriv: order must be 1, 2 or 3");
  }
}

inline double f2_deriv(double r, int order, const PotentialParams& p) {
  switch (order) {
    case 1:
      return -2.0 * p.c2 * r;
    case 2:
      return -2.0 * p.c2;
    case 3:
      return 0.0;
    default:
      throw std::invalid_argument("f2_deriv: order must be 1, 2 or 3");
  }
}

inline double f_deriv(double r, int order, const PotentialParams& p) {
  return f1_deriv(r, order, p) + f2_deriv(r, order, p);
}

/// Resolvent in artanh coordinates: the unique y with tanh(y) + 2 eps c1 y = s.
struct ResolventPoint {
  double r = 0.0;  // tanh(y); may round to +-1 for very large |s|
  double y = 0.0;  // artanh(r)
};

inline ResolventPoint resolvent_point(double s, double eps, const PotentialParams& p) {
  detail::check_eps(eps);
  if (s == 0.0) return {};
  const double sign = s < 0.0 ? -1.0 : 1.0;
  const double t = std::abs(s);
  const double k = 2.0 * eps * p.c1;

  // g(y) = tanh(y) + k y - t is strictly increasing with g(lo) <= 0 <= g(hi).
  double lo = std::max(0.0, (t - 1.0) / k);
  double hi = (t + 1.0) / k;
  double y = std::min(t / (1.0 + k), hi);  // slope of g at 0 is 1 + k
  if (y < lo) y = lo;
  const double tol = 1e-12 * (1.0 + t);

  for (int it = 0; it < 200; ++it) {
    const double th = std::tanh(y);
    const double g = th + k * y - t;
    if (std::abs(g) <= 0.25 * tol) return {sign * th, sign * y};
    if (g > 0.0) {
      hi = y;
    } else {
      lo = y;
    }
    const double slope = (1.0 - th) * (1.0 + th) + k;
    double next = y - g / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);  // bisection fallback
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) {
      return {sign * std::tanh(next), sign * next};
    }
    y = next;
  }
  throw ResolventError("resolvent iteration did not converge for s = " + std::to_string(s));
}

/// R_eps(s) = (I + eps f1')^{-1}(s), a point of [-1, 1].
inline double resolvent(double s, double eps, const PotentialParams& p) {
  return resolvent_point(s, eps, p).r;
}

/// Yosida approximation f1_eps'(s) = (s - R_eps(s)) / eps.
inline double yosida_deriv(double s, double eps, const PotentialParams& p) {
  return 2.0 * p.c1 * resolvent_point(s, eps, p).y;
}

/// Derivative of the Yosida approximation, f1''(R) / (1 + eps f1''(R)).
inline double yosida_second(double s, double eps, const PotentialParams& p) {
  const double y = resolvent_point(s, eps, p).y;
  const double ch = std::cosh(y);
  if (!std::isfinite(ch)) return 1.0 / eps;
  return 1.0 / (1.0 / (2.0 * p.c1 * ch * ch) + eps);
}

/// Moreau envelope f1_eps(s) = (1/2eps)|s - R_eps(s)|^2 + f1(R_eps(s)).
inline double yosida_value(double s, double eps, const PotentialParams& p) {
  const double y = std::abs(resolvent_point(s, eps, p).y);
  // s - R_eps(s) = eps f1'(R_eps(s)) = 2 eps c1 y
  return 2.0 * eps * p.c1 * p.c1 * y * y + detail::f1_of_artanh(y, p.c1);
}

}  // namespace sparse_ch
