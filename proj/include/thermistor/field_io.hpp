#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "thermistor/error.hpp"
#include "thermistor/grid.hpp"

namespace thermistor::io {

/// Shortest round-trip decimal form used in every text output.
inline std::string num(double v) { return fmt::format("{:.17g}", v); }

inline std::string field_csv(const ScalarField& phi) {
  const Grid2D& g = phi.grid();
  std::string out = "x,y,value\n";
  out.reserve(out.size() + g.size() * 64);
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) {
      const Point p = g.node(i, j);
      out += fmt::format("{},{},{}\n", num(p.x), num(p.y), num(phi(i, j)));
    }
  }
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::IoError, "cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw Error(Errc::IoError, "write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_field_csv(const std::filesystem::path& path, const ScalarField& phi) {
  write_text(path, field_csv(phi));
}

/// Reads a field dump written by write_field_csv. The grid is recovered from
/// the node coordinates.
inline ScalarField read_field_csv(const std::filesystem::path& path) {
  std::istringstream is(read_text(path));
  std::string line;
  if (!std::getline(is, line) || line != "x,y,value") {
    throw Error(Errc::IoError, path.string() + ": expected header x,y,value");
  }
  std::vector<double> xs, ys, vs;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    double x = 0, y = 0, v = 0;
    char c1 = 0, c2 = 0;
    std::istringstream ls(line);
    if (!(ls >> x >> c1 >> y >> c2 >> v) || c1 != ',' || c2 != ',') {
      throw Error(Errc::IoError, path.string() + ": malformed row '" + line + "'");
    }
    xs.push_back(x);
    ys.push_back(y);
    vs.push_back(v);
  }
  const auto n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(vs.size()))));
  if (n < 2 || static_cast<std::size_t>(n) * static_cast<std::size_t>(n) != vs.size()) {
    throw Error(Errc::IoError, path.string() + ": row count is not a square");
  }
  const Point origin{xs.front(), ys.front()};
  const double extent = xs[static_cast<std::size_t>(n - 1)] - origin.x;
  return ScalarField(Grid2D(n, extent, origin), std::move(vs));
}

inline nlohmann::json grid_sidecar(const Grid2D& g) {
  return nlohmann::json{{"nx", g.nx()}, {"ny", g.ny()}, {"h", g.h()},
                        {"origin", {g.origin().x, g.origin().y}}, {"extent", g.extent()}};
}

/// Raw little-endian float64 row-major dump plus a JSON sidecar {nx, ny, h, origin}.
inline void write_field_raw(const std::filesystem::path& raw_path,
                            const std::filesystem::path& sidecar_path, const ScalarField& phi) {
  std::string bytes(phi.size() * sizeof(double), '\0');
  for (std::size_t k = 0; k < phi.size(); ++k) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(phi[k]);
    for (int b = 0; b < 8; ++b) bytes[k * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
  }
  write_text(raw_path, bytes);
  write_text(sidecar_path, grid_sidecar(phi.grid()).dump(2) + "\n");
}

inline ScalarField read_field_raw(const std::filesystem::path& raw_path,
                                  const std::filesystem::path& sidecar_path) {
  const auto meta = nlohmann::json::parse(read_text(sidecar_path));
  const int n = meta.at("nx").get<int>();
  const double h = meta.at("h").get<double>();
  const Point origin{meta.at("origin").at(0).get<double>(), meta.at("origin").at(1).get<double>()};
  const double extent = meta.contains("extent") ? meta.at("extent").get<double>() : h * (n - 1);
  const std::string bytes = read_text(raw_path);
  const Grid2D grid(n, extent, origin);
  if (bytes.size() != grid.size() * sizeof(double)) {
    throw Error(Errc::IoError, raw_path.string() + ": size does not match sidecar");
  }
  std::vector<double> v(grid.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[k * 8 + b])) << (8 * b);
    }
    v[k] = std::bit_cast<double>(bits);
  }
  return ScalarField(grid, std::move(v));
}

}  // namespace thermistor::io
