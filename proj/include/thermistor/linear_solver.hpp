#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "thermistor/error.hpp"
#include "thermistor/grid.hpp"

namespace thermistor {

/// Symmetric five-point operator (A x)_k = sum_e c_e (x_k - x_nbr) on the free
/// nodes of a grid. Edge conductances to fixed nodes stay on the diagonal, so
/// vectors passed to apply() must vanish on fixed nodes.
///
/// east[k] couples node (i, j) with (i+1, j); north[k] couples (i, j) with (i, j+1).
class FivePointOperator {
 public:
  FivePointOperator(const DirichletMask& mask, std::vector<double> east, std::vector<double> north)
      : n_(mask.grid().nx()), free_(mask.data()), east_(std::move(east)), north_(std::move(north)) {
    for (auto& f : free_) f = f ? 0 : 1;
    diag_.assign(free_.size(), 0.0);
    for (int j = 0; j < n_; ++j) {
      for (int i = 0; i < n_; ++i) {
        const std::size_t k = idx(i, j);
        double d = 0.0;
        if (i + 1 < n_) d += east_[k];
        if (i > 0) d += east_[k - 1];
        if (j + 1 < n_) d += north_[k];
        if (j > 0) d += north_[k - n_];
        diag_[k] = d;
      }
    }
  }

  /// Unit conductances: h^2 times the negative five-point Laplacian.
  static FivePointOperator laplace(const DirichletMask& mask) {
    const std::size_t size = mask.grid().size();
    return FivePointOperator(mask, std::vector<double>(size, 1.0), std::vector<double>(size, 1.0));
  }

  int n() const { return n_; }
  std::size_t size() const { return free_.size(); }
  bool is_free(std::size_t k) const { return free_[k] != 0; }
  double diag(std::size_t k) const { return diag_[k]; }
  double east(std::size_t k) const { return east_[k]; }
  double north(std::size_t k) const { return north_[k]; }

  void apply(std::span<const double> x, std::span<double> y) const {
    for (int j = 0; j < n_; ++j) {
      for (int i = 0; i < n_; ++i) {
        const std::size_t k = idx(i, j);
        if (!free_[k]) {
          y[k] = 0.0;
          continue;
        }
        double s = diag_[k] * x[k];
        if (i + 1 < n_) s -= east_[k] * x[k + 1];
        if (i > 0) s -= east_[k - 1] * x[k - 1];
        if (j + 1 < n_) s -= north_[k] * x[k + n_];
        if (j > 0) s -= north_[k - n_] * x[k - n_];
        y[k] = s;
      }
    }
  }

 private:
  std::size_t idx(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(i);
  }

  int n_;
  std::vector<std::uint8_t> free_;
  std::vector<double> east_;
  std::vector<double> north_;
  std::vector<double> diag_;
};

/// Modified incomplete Cholesky, zero fill, in natural ordering. Dropped
/// fill-in is added back to the pivot with relaxation factor omega.
class MicPreconditioner {
 public:
  explicit MicPreconditioner(const FivePointOperator& a, double omega = 0.95) : a_(a) {
    const int n = a.n();
    pivot_.assign(a.size(), 1.0);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        const std::size_t k = static_cast<std::size_t>(j) * n + i;
        if (!a.is_free(k)) continue;
        double d = a.diag(k);
        if (i > 0 && a.is_free(k - 1)) {
          const std::size_t w = k - 1;
          const double c = a.east(w);
          const double fill = (j + 1 < n && a.is_free(w + n)) ? a.north(w) : 0.0;
          d -= c * (c + omega * fill) / pivot_[w];
        }
        if (j > 0 && a.is_free(k - n)) {
          const std::size_t s = k - n;
          const double c = a.north(s);
          const double fill = (i + 1 < n && a.is_free(s + 1)) ? a.east(s) : 0.0;
          d -= c * (c + omega * fill) / pivot_[s];
        }
        // A pivot collapse means the modification over-compensated; fall back
        // to the unmodified diagonal entry for this node.
        pivot_[k] = d > 1e-3 * a.diag(k) ? d : a.diag(k);
      }
    }
  }

  void apply(std::span<const double> r, std::span<double> z) const {
    const int n = a_.n();
    const std::size_t size = a_.size();
    for (std::size_t k = 0; k < size; ++k) {
      if (!a_.is_free(k)) {
        z[k] = 0.0;
        continue;
      }
      const int i = static_cast<int>(k % n);
      double s = r[k];
      if (i > 0 && a_.is_free(k - 1)) s += a_.east(k - 1) * z[k - 1];
      if (k >= static_cast<std::size_t>(n) && a_.is_free(k - n)) s += a_.north(k - n) * z[k - n];
      z[k] = s / pivot_[k];
    }
    for (std::size_t kk = size; kk-- > 0;) {
      if (!a_.is_free(kk)) continue;
      const int i = static_cast<int>(kk % n);
      double s = 0.0;
      if (i + 1 < n && a_.is_free(kk + 1)) s += a_.east(kk) * z[kk + 1];
      if (kk + n < size && a_.is_free(kk + n)) s += a_.north(kk) * z[kk + n];
      z[kk] += s / pivot_[kk];
    }
  }

 private:
  const FivePointOperator& a_;
  std::vector<double> pivot_;
};

struct CgResult {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Preconditioned conjugate gradients for A x = b, starting from the given x.
/// Stops when ||b - A x||_2 <= rel_tol * ||b||_2.
inline CgResult conjugate_gradient(const FivePointOperator& a, std::span<const double> b,
                                   std::span<double> x, double rel_tol, int max_iters) {
  const std::size_t size = a.size();
  std::vector<double> r(size), z(size), p(size), q(size);
  double bnorm2 = 0.0;
  for (std::size_t k = 0; k < size; ++k) {
    if (!a.is_free(k)) x[k] = 0.0;
    else bnorm2 += b[k] * b[k];
  }
  if (bnorm2 == 0.0) {
    for (std::size_t k = 0; k < size; ++k) x[k] = 0.0;
    return {0, 0.0, true};
  }
  a.apply(x, q);
  double rnorm2 = 0.0;
  for (std::size_t k = 0; k < size; ++k) {
    r[k] = a.is_free(k) ? b[k] - q[k] : 0.0;
    rnorm2 += r[k] * r[k];
  }
  const double target2 = rel_tol * rel_tol * bnorm2;
  if (rnorm2 <= target2) return {0, std::sqrt(rnorm2 / bnorm2), true};

  const MicPreconditioner precond(a);
  precond.apply(r, z);
  p = z;
  double rz = 0.0;
  for (std::size_t k = 0; k < size; ++k) rz += r[k] * z[k];

  for (int it = 1; it <= max_iters; ++it) {
    a.apply(p, q);
    double pq = 0.0;
    for (std::size_t k = 0; k < size; ++k) pq += p[k] * q[k];
    if (!(pq > 0.0)) {
      throw Error(Errc::InvalidArgument, "operator is not positive definite");
    }
    const double alpha = rz / pq;
    rnorm2 = 0.0;
    for (std::size_t k = 0; k < size; ++k) {
      x[k] += alpha * p[k];
      r[k] -= alpha * q[k];
      rnorm2 += r[k] * r[k];
    }
    if (rnorm2 <= target2) return {it, std::sqrt(rnorm2 / bnorm2), true};
    precond.apply(r, z);
    double rz_next = 0.0;
    for (std::size_t k = 0; k < size; ++k) rz_next += r[k] * z[k];
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t k = 0; k < size; ++k) p[k] = z[k] + beta * p[k];
  }
  return {max_iters, std::sqrt(rnorm2 / bnorm2), false};
}

}  // namespace thermistor
