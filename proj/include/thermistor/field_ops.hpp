#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "thermistor/error.hpp"
#include "thermistor/grid.hpp"

namespace thermistor {

/// Second-order discrete gradient: centered differences inside, one-sided
/// three-point differences on the boundary.
inline VectorField gradient(const ScalarField& phi) {
  const Grid2D& g = phi.grid();
  const int n = g.nx();
  const double inv2h = 1.0 / (2.0 * g.h());
  VectorField out(g);
  auto diff = [&](auto at, int k) {
    if (k == 0) return (-3.0 * at(0) + 4.0 * at(1) - at(2)) * inv2h;
    if (k == n - 1) return (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) * inv2h;
    return (at(k + 1) - at(k - 1)) * inv2h;
  };
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      out.x()(i, j) = diff([&](int k) { return phi(k, j); }, i);
      out.y()(i, j) = diff([&](int k) { return phi(i, k); }, j);
    }
  }
  return out;
}

/// Five-point Laplacian at interior nodes; boundary entries are zero.
inline ScalarField laplacian(const ScalarField& phi) {
  const Grid2D& g = phi.grid();
  const int n = g.nx();
  const double inv_h2 = 1.0 / (g.h() * g.h());
  ScalarField out(g);
  for (int j = 1; j < n - 1; ++j) {
    for (int i = 1; i < n - 1; ++i) {
      out(i, j) = (phi(i + 1, j) + phi(i - 1, j) + phi(i, j + 1) + phi(i, j - 1) - 4.0 * phi(i, j)) *
                  inv_h2;
    }
  }
  return out;
}

/// Bilinear interpolation. The point must lie in the closed grid square.
inline double interpolate(const ScalarField& phi, Point p) {
  const Grid2D& g = phi.grid();
  const double h = g.h();
  const double sx = (p.x - g.origin().x) / h;
  const double sy = (p.y - g.origin().y) / h;
  const int i = std::clamp(static_cast<int>(std::floor(sx)), 0, g.nx() - 2);
  const int j = std::clamp(static_cast<int>(std::floor(sy)), 0, g.ny() - 2);
  const double tx = sx - i;
  const double ty = sy - j;
  return (1.0 - tx) * (1.0 - ty) * phi(i, j) + tx * (1.0 - ty) * phi(i + 1, j) +
         (1.0 - tx) * ty * phi(i, j + 1) + tx * ty * phi(i + 1, j + 1);
}

struct Sample {
  Point at;
  double value = 0.0;
};

/// Deterministic sample layout for the closed ball: the center plus concentric
/// rings, the outermost ring lying on the boundary circle. Ring k of R carries
/// roughly k/(R(R+1)/2) of the remaining points, all starting at angle 0.
inline std::vector<Point> ball_layout(Point center, double radius, int samples) {
  if (samples < 1) throw Error(Errc::InvalidArgument, "sample count must be positive");
  std::vector<Point> pts;
  pts.reserve(static_cast<std::size_t>(samples));
  pts.push_back(center);
  const int rest = samples - 1;
  if (rest == 0) return pts;
  int rings = std::max(1, static_cast<int>(std::lround(std::sqrt(rest / std::numbers::pi))));
  while (rings > 1 && rest < rings * (rings + 1) / 2) --rings;
  const double weight_sum = rings * (rings + 1) / 2.0;
  int placed = 0;
  for (int k = 1; k <= rings; ++k) {
    int count = static_cast<int>(std::floor(rest * (k / weight_sum)));
    if (k == rings) count = rest - placed;
    count = std::max(count, 0);
    const double r = radius * k / rings;
    for (int m = 0; m < count; ++m) {
      const double phi = 2.0 * std::numbers::pi * m / count;
      pts.push_back({center.x + r * std::cos(phi), center.y + r * std::sin(phi)});
    }
    placed += count;
  }
  return pts;
}

/// Interpolated values of phi at the deterministic ball layout.
inline std::vector<Sample> sample_ball(const ScalarField& phi, Point center, double radius,
                                       int samples) {
  const Grid2D& g = phi.grid();
  if (radius < 4.0 * g.h() * (1.0 - 1e-12)) {
    throw Error(Errc::RadiusBelowResolution,
                "radius " + std::to_string(radius) + " is below 4h = " + std::to_string(4.0 * g.h()));
  }
  const double slack = 1e-12 * g.extent();
  if (!g.contains({center.x - radius, center.y - radius}, slack) ||
      !g.contains({center.x + radius, center.y + radius}, slack)) {
    throw Error(Errc::BallOutOfDomain, "ball leaves the grid");
  }
  std::vector<Sample> out;
  for (Point p : ball_layout(center, radius, samples)) out.push_back({p, interpolate(phi, p)});
  return out;
}

inline double sup_norm(const ScalarField& phi) {
  double m = 0.0;
  for (double v : phi.values()) m = std::max(m, std::abs(v));
  return m;
}

inline double sup_norm(std::span<const Sample> samples) {
  if (samples.empty()) throw Error(Errc::EmptyInput, "sup_norm of an empty sample list");
  double m = 0.0;
  for (const Sample& s : samples) m = std::max(m, std::abs(s.value));
  return m;
}

inline double sup_norm(std::span<const double> values) {
  if (values.empty()) throw Error(Errc::EmptyInput, "sup_norm of an empty list");
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

/// a*x + b*y on a shared grid.
inline ScalarField combine(double a, const ScalarField& x, double b, const ScalarField& y) {
  if (!(x.grid() == y.grid())) throw Error(Errc::InvalidArgument, "fields on different grids");
  ScalarField out(x.grid());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = a * x[k] + b * y[k];
  return out;
}

inline double max_abs_diff(const ScalarField& x, const ScalarField& y) {
  if (!(x.grid() == y.grid())) throw Error(Errc::InvalidArgument, "fields on different grids");
  double m = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) m = std::max(m, std::abs(x[k] - y[k]));
  return m;
}

/// Square block of nodes [ic-m, ic+m] x [jc-m, jc+m] viewed as its own grid.
struct NodeBox {
  int ic = 0;
  int jc = 0;
  int m = 0;

  Grid2D grid_in(const Grid2D& parent) const {
    if (ic - m < 0 || jc - m < 0 || ic + m > parent.nx() - 1 || jc + m > parent.ny() - 1) {
      throw Error(Errc::BallOutOfDomain, "node box leaves the grid");
    }
    return Grid2D(2 * m + 1, 2.0 * m * parent.h(), parent.node(ic - m, jc - m));
  }
};

/// Smallest node box around the node nearest to center that contains the
/// closed ball B(center, radius).
inline NodeBox box_around(const Grid2D& g, Point center, double radius) {
  const auto [ic, jc] = g.nearest_node(center);
  const Vec2 off = center - g.node(ic, jc);
  const double reach = radius + std::max(std::abs(off.x), std::abs(off.y));
  const int m = static_cast<int>(std::ceil(reach / g.h() - 1e-9));
  return {ic, jc, std::max(m, (Grid2D::kMinNodes - 1) / 2)};
}

inline ScalarField restrict_to(const ScalarField& phi, const NodeBox& box) {
  const Grid2D sub = box.grid_in(phi.grid());
  ScalarField out(sub);
  for (int j = 0; j < sub.ny(); ++j) {
    for (int i = 0; i < sub.nx(); ++i) {
      out(i, j) = phi(box.ic - box.m + i, box.jc - box.m + j);
    }
  }
  return out;
}

}  // namespace thermistor
