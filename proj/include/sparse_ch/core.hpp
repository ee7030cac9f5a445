// Spatial grid, discrete fields, banded operators and direct banded solves.
//
// Everything lives on a uniform cell-centered 1D grid over (0, length).
// Homogeneous Neumann conditions are realized with mirror ghost cells, which
// makes every row of the discrete Laplacian sum to exactly zero.
#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sparse_ch {

/// One real value per grid cell.
using Field = std::vector<double>;

class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Grid {
  std::size_t n_cells = 0;
  double length = 0.0;
  double h = 0.0;

  /// Cell-center coordinate.
  double x(std::size_t i) const { return (static_cast<double>(i) + 0.5) * h; }
};

inline Grid build_grid(double length, std::size_t n_cells) {
  if (!(length > 0.0) || !std::isfinite(length)) {
    throw std::invalid_argument("grid length must be positive and finite");
  }
  if (n_cells < 4) {
    throw std::invalid_argument("grid needs at least 4 cells, got " + std::to_string(n_cells));
  }
  return Grid{n_cells, length, length / static_cast<double>(n_cells)};
}

inline double mean_value(std::span<const double> f, const Grid& grid) {
  assert(f.size() == grid.n_cells);
  double sum = 0.0;
  for (double v : f) sum += v * grid.h;
  return sum / grid.length;
}

/// Discrete L2(Omega) inner product (cell sums).
inline double inner(std::span<const double> a, std::span<const double> b, const Grid& grid) {
  assert(a.size() == b.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum * grid.h;
}

inline double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

/// Values indexed by (time level, cell). Used for controls (one level per time
/// interval) and for trajectories (one level per time node).
class SpaceTimeField {
 public:
  SpaceTimeField() = default;
  SpaceTimeField(std::size_t levels, std::size_t cells, double value = 0.0)
      : levels_{levels}, cells_{cells}, data_(levels * cells, value) {}

  std::size_t levels() const { return levels_; }
  std::size_t cells() const { return cells_; }
  std::size_t size() const { return data_.size(); }

  std::span<double> operator[](std::size_t level) {
    assert(level < levels_);
    return {data_.data() + level * cells_, cells_};
  }
  std::span<const double> operator[](std::size_t level) const {
    assert(level < levels_);
    return {data_.data() + level * cells_, cells_};
  }
  double& operator()(std::size_t level, std::size_t i) { return data_[level * cells_ + i]; }
  double operator()(std::size_t level, std::size_t i) const { return data_[level * cells_ + i]; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  bool same_shape(const SpaceTimeField& other) const {
    return levels_ == other.levels_ && cells_ == other.cells_;
  }

  void fill(double value) { std::fill(data_.begin(), data_.end(), value); }

  SpaceTimeField& operator+=(const SpaceTimeField& other) {
    assert(same_shape(other));
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
    return *this;
  }
  SpaceTimeField& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  /// this + s * other
  SpaceTimeField axpy(double s, const SpaceTimeField& other) const {
    assert(same_shape(other));
    SpaceTimeField out = *this;
    for (std::size_t k = 0; k < data_.size(); ++k) out.data_[k] += s * other.data_[k];
    return out;
  }

 private:
  std::size_t levels_ = 0;
  std::size_t cells_ = 0;
  std::vector<double> data_;
};

/// Space-time inner product with piecewise-constant quadrature (value * h * dt).
inline double inner(const SpaceTimeField& a, const SpaceTimeField& b, double h, double dt) {
  assert(a.same_shape(b));
  auto fa = a.flat();
  auto fb = b.flat();
  double sum = 0.0;
  for (std::size_t k = 0; k < fa.size(); ++k) sum += fa[k] * fb[k];
  return sum * h * dt;
}

/// Square matrix stored by diagonals: `lower` subdiagonals and `upper`
/// superdiagonals around the main diagonal.
class BandedMatrix {
 public:
  BandedMatrix() = default;
  BandedMatrix(std::size_t n, std::size_t lower, std::size_t upper)
      : n_{n}, lower_{lower}, upper_{upper}, data_(n * (lower + upper + 1), 0.0) {}

  std::size_t size() const { return n_; }
  std::size_t lower() const { return lower_; }
  std::size_t upper() const { return upper_; }

  bool in_band(std::size_t i, std::size_t j) const {
    return i < n_ && j < n_ && j + lower_ >= i && j <= i + upper_;
  }

  double operator()(std::size_t i, std::size_t j) const {
    return in_band(i, j) ? data_[index(i, j)] : 0.0;
  }
  double& at(std::size_t i, std::size_t j) {
    if (!in_band(i, j)) throw std::out_of_range("banded matrix entry outside band");
    return data_[index(i, j)];
  }

  std::size_t row_begin(std::size_t i) const { return i > lower_ ? i - lower_ : 0; }
  std::size_t row_end(std::size_t i) const { return std::min(n_, i + upper_ + 1); }

  void apply(std::span<const double> x, std::span<double> y) const {
    assert(x.size() == n_ && y.size() == n_);
    for (std::size_t i = 0; i < n_; ++i) {
      double sum = 0.0;
      for (std::size_t j = row_begin(i); j < row_end(i); ++j) sum += data_[index(i, j)] * x[j];
      y[i] = sum;
    }
  }
  Field apply(std::span<const double> x) const {
    Field y(n_);
    apply(x, y);
    return y;
  }

  BandedMatrix transposed() const {
    BandedMatrix t(n_, upper_, lower_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = row_begin(i); j < row_end(i); ++j) t.at(j, i) = (*this)(i, j);
    }
    return t;
  }

  /// shift * I + scale * this
  BandedMatrix shifted(double scale, double shift) const {
    BandedMatrix out = *this;
    for (double& v : out.data_) v *= scale;
    for (std::size_t i = 0; i < n_; ++i) out.at(i, i) += shift;
    return out;
  }

  void add_diagonal(std::span<const double> d) {
    assert(d.size() == n_);
    for (std::size_t i = 0; i < n_; ++i) at(i, i) += d[i];
  }

  Field row_sums() const {
    Field s(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = row_begin(i); j < row_end(i); ++j) s[i] += data_[index(i, j)];
    }
    return s;
  }

  double max_abs_entry() const { return max_abs(data_); }

  friend BandedMatrix operator*(const BandedMatrix& a, const BandedMatrix& b) {
    assert(a.n_ == b.n_);
    BandedMatrix c(a.n_, a.lower_ + b.lower_, a.upper_ + b.upper_);
    for (std::size_t i = 0; i < a.n_; ++i) {
      for (std::size_t k = a.row_begin(i); k < a.row_end(i); ++k) {
        const double aik = a(i, k);
        if (aik == 0.0) continue;
        for (std::size_t j = b.row_begin(k); j < b.row_end(k); ++j) c.at(i, j) += aik * b(k, j);
      }
    }
    return c;
  }

  friend BandedMatrix operator-(const BandedMatrix& a, const BandedMatrix& b) {
    assert(a.n_ == b.n_);
    BandedMatrix c(a.n_, std::max(a.lower_, b.lower_), std::max(a.upper_, b.upper_));
    for (std::size_t i = 0; i < a.n_; ++i) {
      for (std::size_t j = a.row_begin(i); j < a.row_end(i); ++j) c.at(i, j) += a(i, j);
      for (std::size_t j = b.row_begin(i); j < b.row_end(i); ++j) c.at(i, j) -= b(i, j);
    }
    return c;
  }

 private:
  std::size_t index(std::size_t i, std::size_t j) const {
    return i * (lower_ + upper_ + 1) + (j + lower_ - i);
  }

  std::size_t n_ = 0;
  std::size_t lower_ = 0;
  std::size_t upper_ = 0;
  std::vector<double> data_;
};

/// Cell-centered Neumann Laplacian: (1, -2, 1)/h^2 inside, (-1, 1)/h^2 at the
/// two boundary rows (mirror ghost cell).
inline BandedMatrix neumann_laplacian(const Grid& grid) {
  const std::size_t n = grid.n_cells;
  const double s = 1.0 / (grid.h * grid.h);
  BandedMatrix lap(n, 1, 1);
  for (std::size_t i = 0; i < n; ++i) {
    double diag = 0.0;
    if (i > 0) {
      lap.at(i, i - 1) = s;
      diag -= s;
    }
    if (i + 1 < n) {
      lap.at(i, i + 1) = s;
      diag -= s;
    }
    lap.at(i, i) = diag;
  }
  return lap;
}

/// LU factorization with partial pivoting of a banded matrix. Row exchanges
/// widen the upper band of U to lower + upper.
class BandedLU {
 public:
  BandedLU() = default;

  explicit BandedLU(const BandedMatrix& a)
      : n_{a.size()}, kl_{a.lower()}, ku_{a.lower() + a.upper()}, width_{kl_ + ku_ + 1},
        lu_(n_ * width_, 0.0), pivot_(n_, 0) {
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = a.row_begin(i); j < a.row_end(i); ++j) ref(i, j) = a(i, j);
    }
    const double tiny = 64.0 * std::numeric_limits<double>::epsilon() *
                        static_cast<double>(std::max<std::size_t>(n_, 1)) * a.max_abs_entry();
    for (std::size_t k = 0; k < n_; ++k) {
      const std::size_t last = std::min(n_ - 1, k + kl_);
      std::size_t p = k;
      for (std::size_t i = k + 1; i <= last; ++i) {
        if (std::abs(ref(i, k)) > std::abs(ref(p, k))) p = i;
      }
      pivot_[k] = p;
      if (!(std::abs(ref(p, k)) > tiny)) {
        throw SingularSystemError("banded matrix is singular to working precision (pivot " +
                                  std::to_string(k) + ")");
      }
      const std::size_t col_end = std::min(n_, k + ku_ + 1);
      if (p != k) {
        for (std::size_t j = k; j < col_end; ++j) std::swap(ref(k, j), ref(p, j));
      }
      const double inv = 1.0 / ref(k, k);
      for (std::size_t i = k + 1; i <= last; ++i) {
        const double m = ref(i, k) * inv;
        ref(i, k) = m;
        if (m == 0.0) continue;
        for (std::size_t j = k + 1; j < col_end; ++j) ref(i, j) -= m * ref(k, j);
      }
    }
  }

  std::size_t size() const { return n_; }

  void solve_in_place(std::span<double> b) const {
    assert(b.size() == n_);
    for (std::size_t k = 0; k < n_; ++k) {
      if (pivot_[k] != k) std::swap(b[k], b[pivot_[k]]);
      const std::size_t last = std::min(n_ - 1, k + kl_);
      for (std::size_t i = k + 1; i <= last; ++i) b[i] -= ref(i, k) * b[k];
    }
    for (std::size_t k = n_; k-- > 0;) {
      const std::size_t col_end = std::min(n_, k + ku_ + 1);
      double sum = b[k];
      for (std::size_t j = k + 1; j < col_end; ++j) sum -= ref(k, j) * b[j];
      b[k] = sum / ref(k, k);
    }
  }

  Field solve(std::span<const double> rhs) const {
    Field x(rhs.begin(), rhs.end());
    solve_in_place(x);
    return x;
  }

 private:
  // Row i holds columns [i - kl, i + ku].
  double& ref(std::size_t i, std::size_t j) { return lu_[i * width_ + (j + kl_ - i)]; }
  double ref(std::size_t i, std::size_t j) const { return lu_[i * width_ + (j + kl_ - i)]; }

  std::size_t n_ = 0;
  std::size_t kl_ = 0;
  std::size_t ku_ = 0;
  std::size_t width_ = 0;
  std::vector<double> lu_;
  std::vector<std::size_t> pivot_;
};

/// Solves (shift * I + scale * op) x = rhs. Throws SingularSystemError when
/// the shifted operator is singular, e.g. the pure Neumann Laplacian.
inline Field solve_banded(const BandedMatrix& op, double scale, double shift,
                          std::span<const double> rhs) {
  if (rhs.size() != op.size()) throw std::invalid_argument("solve_banded: size mismatch");
  return BandedLU(op.shifted(scale, shift)).solve(rhs);
}

}  // namespace sparse_ch
