#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "thermistor/error.hpp"

namespace thermistor {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double norm2() const { return x * x + y * y; }
  double norm() const { return std::hypot(x, y); }

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline Vec2 operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }

/// Symmetric 2x2 matrix stored by its three distinct entries.
struct Sym2 {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;

  double trace() const { return xx + yy; }
  double frobenius() const { return std::sqrt(xx * xx + 2.0 * xy * xy + yy * yy); }
  double quad(Vec2 v) const { return xx * v.x * v.x + 2.0 * xy * v.x * v.y + yy * v.y * v.y; }
  Vec2 apply(Vec2 v) const { return {xx * v.x + xy * v.y, xy * v.x + yy * v.y}; }

  friend Sym2 operator+(Sym2 a, Sym2 b) { return {a.xx + b.xx, a.xy + b.xy, a.yy + b.yy}; }
  friend Sym2 operator-(Sym2 a, Sym2 b) { return {a.xx - b.xx, a.xy - b.xy, a.yy - b.yy}; }
  friend bool operator==(const Sym2&, const Sym2&) = default;
};

/// Uniform square-cell node grid over [origin, origin + extent]^2.
///
/// Nodes are indexed (i, j) with i along x; storage is row-major with i
/// fastest, so index(i, j) = j * nx + i.
class Grid2D {
 public:
  static constexpr int kMinNodes = 17;

  explicit Grid2D(int n, double extent = 1.0, Point origin = {0.0, 0.0})
      : n_(n), extent_(extent), origin_(origin) {
    if (n < kMinNodes) {
      throw Error(Errc::InvalidGrid, "grid needs at least " + std::to_string(kMinNodes) +
                                         " nodes per side, got " + std::to_string(n));
    }
    if (!(extent > 0.0) || !std::isfinite(extent) || !std::isfinite(origin.x) ||
        !std::isfinite(origin.y)) {
      throw Error(Errc::InvalidGrid, "grid extent must be positive and finite");
    }
    h_ = extent / static_cast<double>(n - 1);
  }

  static Grid2D unit_square(int n) { return Grid2D(n); }

  int nx() const { return n_; }
  int ny() const { return n_; }
  double h() const { return h_; }
  double extent() const { return extent_; }
  Point origin() const { return origin_; }
  std::size_t size() const { return static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_); }

  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(i);
  }
  Point node(int i, int j) const { return {origin_.x + i * h_, origin_.y + j * h_}; }
  bool on_boundary(int i, int j) const { return i == 0 || j == 0 || i == n_ - 1 || j == n_ - 1; }

  /// Whether p lies in the closed grid square, with an absolute slack.
  bool contains(Point p, double slack = 0.0) const {
    return p.x >= origin_.x - slack && p.y >= origin_.y - slack &&
           p.x <= origin_.x + extent_ + slack && p.y <= origin_.y + extent_ + slack;
  }

  /// Nearest node indices to p (clamped to the grid).
  std::pair<int, int> nearest_node(Point p) const {
    auto snap = [&](double v, double o) {
      return std::clamp(static_cast<int>(std::lround((v - o) / h_)), 0, n_ - 1);
    };
    return {snap(p.x, origin_.x), snap(p.y, origin_.y)};
  }

  friend bool operator==(const Grid2D&, const Grid2D&) = default;

 private:
  int n_;
  double extent_;
  Point origin_;
  double h_ = 0.0;
};

/// Real value per node. Values are finite on construction.
class ScalarField {
 public:
  explicit ScalarField(Grid2D grid) : grid_(grid), values_(grid.size(), 0.0) {}

  ScalarField(Grid2D grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size()) {
      throw Error(Errc::InvalidArgument, "value count " + std::to_string(values_.size()) +
                                             " does not match grid size " +
                                             std::to_string(grid_.size()));
    }
    for (double v : values_) {
      if (!std::isfinite(v)) throw Error(Errc::NonfiniteValue, "field value is not finite");
    }
  }

  static ScalarField constant(Grid2D grid, double c) {
    return ScalarField(grid, std::vector<double>(grid.size(), c));
  }

  template <class F>
  static ScalarField from_function(Grid2D grid, F&& f) {
    std::vector<double> v(grid.size());
    for (int j = 0; j < grid.ny(); ++j) {
      for (int i = 0; i < grid.nx(); ++i) {
        const Point p = grid.node(i, j);
        v[grid.index(i, j)] = f(p.x, p.y);
      }
    }
    return ScalarField(grid, std::move(v));
  }

  const Grid2D& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  double operator()(int i, int j) const { return values_[grid_.index(i, j)]; }
  double& operator()(int i, int j) { return values_[grid_.index(i, j)]; }
  double operator[](std::size_t k) const { return values_[k]; }
  double& operator[](std::size_t k) { return values_[k]; }

  friend bool operator==(const ScalarField&, const ScalarField&) = default;

 private:
  Grid2D grid_;
  std::vector<double> values_;
};

/// Two components per node, stored as separate scalar fields.
class VectorField {
 public:
  explicit VectorField(Grid2D grid) : x_(grid), y_(grid) {}
  VectorField(ScalarField x, ScalarField y) : x_(std::move(x)), y_(std::move(y)) {
    if (!(x_.grid() == y_.grid())) {
      throw Error(Errc::InvalidArgument, "vector field components live on different grids");
    }
  }

  const Grid2D& grid() const { return x_.grid(); }
  const ScalarField& x() const { return x_; }
  const ScalarField& y() const { return y_; }
  ScalarField& x() { return x_; }
  ScalarField& y() { return y_; }
  Vec2 at(int i, int j) const { return {x_(i, j), y_(i, j)}; }

 private:
  ScalarField x_;
  ScalarField y_;
};

/// Nodes held at zero (homogeneous Dirichlet set). Always contains the grid
/// boundary.
class DirichletMask {
 public:
  static DirichletMask boundary(const Grid2D& grid) {
    DirichletMask m(grid);
    for (int j = 0; j < grid.ny(); ++j) {
      for (int i = 0; i < grid.nx(); ++i) {
        m.fixed_[grid.index(i, j)] = grid.on_boundary(i, j) ? 1 : 0;
      }
    }
    return m;
  }

  /// Boundary plus every node at distance >= radius from center.
  static DirichletMask outside_disk(const Grid2D& grid, Point center, double radius) {
    DirichletMask m = boundary(grid);
    const double tol = 1e-12 * grid.h();
    for (int j = 0; j < grid.ny(); ++j) {
      for (int i = 0; i < grid.nx(); ++i) {
        const Vec2 d = grid.node(i, j) - center;
        if (d.norm() >= radius - tol) m.fixed_[grid.index(i, j)] = 1;
      }
    }
    return m;
  }

  const Grid2D& grid() const { return grid_; }
  bool fixed(std::size_t k) const { return fixed_[k] != 0; }
  bool fixed(int i, int j) const { return fixed_[grid_.index(i, j)] != 0; }
  const std::vector<std::uint8_t>& data() const { return fixed_; }

 private:
  explicit DirichletMask(const Grid2D& grid) : grid_(grid), fixed_(grid.size(), 0) {}

  Grid2D grid_;
  std::vector<std::uint8_t> fixed_;
};

}  // namespace thermistor
