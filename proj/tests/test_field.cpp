#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "thermistor/field_io.hpp"
#include "thermistor/field_ops.hpp"
#include "thermistor/grid.hpp"

using namespace thermistor;

namespace {

template <class F>
void expect_errc(Errc code, F&& f) {
  try {
    f();
    FAIL() << "expected " << errc_name(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(Grid, SpacingAndIndexing) {
  const Grid2D g(65);
  EXPECT_DOUBLE_EQ(g.h(), 1.0 / 64);
  EXPECT_EQ(g.size(), 65u * 65u);
  EXPECT_EQ(g.index(3, 2), 2u * 65u + 3u);
  EXPECT_DOUBLE_EQ(g.node(64, 32).x, 1.0);
  EXPECT_DOUBLE_EQ(g.node(64, 32).y, 0.5);
  EXPECT_TRUE(g.on_boundary(0, 5));
  EXPECT_FALSE(g.on_boundary(1, 5));
  const Grid2D shifted(33, 2.0, {-1.0, -1.0});
  EXPECT_DOUBLE_EQ(shifted.h(), 1.0 / 16);
  EXPECT_EQ(shifted.nearest_node({0.0, 0.0}), std::make_pair(16, 16));
}

TEST(Grid, RejectsDegenerateGrids) {
  expect_errc(Errc::InvalidGrid, [] { Grid2D g(16); });
  expect_errc(Errc::InvalidGrid, [] { Grid2D g(33, 0.0); });
  expect_errc(Errc::InvalidGrid, [] { Grid2D g(33, std::nan("")); });
}

TEST(ScalarField, RejectsNonfiniteAndWrongSize) {
  const Grid2D g(17);
  std::vector<double> v(g.size(), 0.0);
  v[7] = std::numeric_limits<double>::infinity();
  expect_errc(Errc::NonfiniteValue, [&] { ScalarField f(g, v); });
  expect_errc(Errc::InvalidArgument, [&] { ScalarField f(g, std::vector<double>(3)); });
}

TEST(FieldOps, GradientExactForQuadratics) {
  const Grid2D g(33);
  const auto phi = ScalarField::from_function(g, [](double x, double y) { return x * x - 3 * x * y + 2 * y; });
  const VectorField d = gradient(phi);
  for (int j = 0; j < g.ny(); j += 4) {
    for (int i = 0; i < g.nx(); i += 4) {
      const Point p = g.node(i, j);
      EXPECT_NEAR(d.at(i, j).x, 2 * p.x - 3 * p.y, 1e-12);
      EXPECT_NEAR(d.at(i, j).y, -3 * p.x + 2, 1e-12);
    }
  }
}

TEST(FieldOps, LaplacianExactForQuadratics) {
  const Grid2D g(33);
  const auto phi = ScalarField::from_function(g, [](double x, double y) { return 2 * x * x + y * y; });
  const ScalarField lap = laplacian(phi);
  EXPECT_NEAR(lap(10, 20), 6.0, 1e-9);
  EXPECT_EQ(lap(0, 20), 0.0);
}

TEST(FieldOps, BilinearInterpolationReproducesBilinear) {
  const Grid2D g(17);
  const auto phi = ScalarField::from_function(g, [](double x, double y) { return 1 + 2 * x - y + 3 * x * y; });
  for (Point p : {Point{0.123, 0.77}, Point{1.0, 1.0}, Point{0.0, 0.5}}) {
    EXPECT_NEAR(interpolate(phi, p), 1 + 2 * p.x - p.y + 3 * p.x * p.y, 1e-13);
  }
}

TEST(FieldOps, BallLayoutHasCenterAndBoundaryRing) {
  const auto pts = ball_layout({0.5, 0.5}, 0.25, 500);
  ASSERT_EQ(pts.size(), 500u);
  EXPECT_EQ(pts.front(), (Point{0.5, 0.5}));
  double rmax = 0;
  for (Point p : pts) rmax = std::max(rmax, std::hypot(p.x - 0.5, p.y - 0.5));
  EXPECT_NEAR(rmax, 0.25, 1e-15);
  EXPECT_EQ(ball_layout({0, 0}, 1.0, 1).size(), 1u);
}

TEST(FieldOps, SampleBallGuards) {
  const Grid2D g(65);
  const ScalarField phi(g);
  expect_errc(Errc::RadiusBelowResolution, [&] { sample_ball(phi, {0.5, 0.5}, 3 * g.h(), 10); });
  expect_errc(Errc::BallOutOfDomain, [&] { sample_ball(phi, {0.1, 0.5}, 0.2, 10); });
  EXPECT_EQ(sample_ball(phi, {0.5, 0.5}, 0.5, 10).size(), 10u);
}

TEST(FieldOps, SupNormOfEmptyInputThrows) {
  expect_errc(Errc::EmptyInput, [] { sup_norm(std::span<const double>{}); });
  const std::vector<double> v{1.0, -3.0, 2.0};
  EXPECT_EQ(sup_norm(std::span<const double>(v)), 3.0);
}

TEST(FieldOps, BoxAroundContainsBall) {
  const Grid2D g(129);
  const NodeBox b = box_around(g, {0.5, 0.5}, 0.25);
  EXPECT_EQ(b.ic, 64);
  EXPECT_EQ(b.m, 32);
  const Grid2D sub = b.grid_in(g);
  EXPECT_DOUBLE_EQ(sub.origin().x, 0.25);
  EXPECT_DOUBLE_EQ(sub.extent(), 0.5);
  EXPECT_EQ(box_around(g, {0.5, 0.5}, 0.01).m, 8);
  expect_errc(Errc::BallOutOfDomain, [&] { box_around(g, {0.1, 0.5}, 0.25).grid_in(g); });
}

TEST(FieldIo, CsvAndRawRoundTrip) {
  const Grid2D g(17, 2.0, {-1.0, 0.5});
  const auto phi = ScalarField::from_function(g, [](double x, double y) { return std::sin(x) * std::exp(y) / 3; });
  const auto dir = std::filesystem::temp_directory_path() / "thermistor_field_io";
  std::filesystem::create_directories(dir);
  io::write_field_csv(dir / "phi.csv", phi);
  const ScalarField back = io::read_field_csv(dir / "phi.csv");
  EXPECT_EQ(back.values(), phi.values());
  EXPECT_EQ(back.grid().nx(), 17);
  EXPECT_DOUBLE_EQ(back.grid().h(), g.h());
  io::write_field_raw(dir / "phi.f64", dir / "phi.json", phi);
  const ScalarField raw = io::read_field_raw(dir / "phi.f64", dir / "phi.json");
  EXPECT_EQ(raw.values(), phi.values());
  EXPECT_EQ(raw.grid(), g);
  EXPECT_EQ(std::filesystem::file_size(dir / "phi.f64"), g.size() * 8);
}

TEST(FieldIo, CsvHeaderIsChecked) {
  const auto path = std::filesystem::temp_directory_path() / "thermistor_bad.csv";
  io::write_text(path, "a,b,c\n");
  expect_errc(Errc::IoError, [&] { io::read_field_csv(path); });
}
