#pragma once

// Lattice geometries (chain, square, honeycomb) and the screened Coulomb matrix.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "rjr/common.hpp"

namespace rjr {

enum class Geometry { chain, square, honeycomb };
enum class Boundary { periodic, open };

inline std::string to_string(Geometry g) {
  switch (g) {
    case Geometry::chain: return "chain";
    case Geometry::square: return "square";
    case Geometry::honeycomb: return "honeycomb";
  }
  return "?";
}
inline std::string to_string(Boundary b) { return b == Boundary::periodic ? "periodic" : "open"; }

inline Geometry parse_geometry(const std::string& s) {
  if (s == "chain") return Geometry::chain;
  if (s == "square") return Geometry::square;
  if (s == "honeycomb") return Geometry::honeycomb;
  throw Error("unsupported geometry '" + s + "'");
}
inline Boundary parse_boundary(const std::string& s) {
  if (s == "periodic") return Boundary::periodic;
  if (s == "open") return Boundary::open;
  throw Error("unsupported boundary '" + s + "'");
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};
inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

/// Sites, positions (nm), Neel parity and nearest-neighbour bonds of a finite array.
///
/// Sites are indexed row-major on the square lattice (index = y*nx + x) and
/// unit-cell-major on the honeycomb lattice (A = 2*cell, B = 2*cell + 1).
/// `sublattice[i]` is the parity delta_i = +1 (A) or -1 (B); site 0 is always A.
/// Odd periodic extents cannot be two-coloured: those graphs keep the
/// index-parity labels and report `bipartite == false`.
struct LatticeGraph {
  Geometry geometry = Geometry::chain;
  Boundary boundary = Boundary::periodic;
  int nx = 0;
  int ny = 1;
  double a = 1.0;
  std::vector<Vec2> positions;
  std::vector<int> sublattice;
  std::vector<std::pair<int, int>> bonds;
  bool bipartite = true;
  // Supercell translation vectors used by the minimum-image convention.
  Vec2 period1{};
  Vec2 period2{};

  int size() const { return static_cast<int>(positions.size()); }
  int dimension() const { return geometry == Geometry::chain ? 1 : 2; }

  std::vector<int> degrees() const {
    std::vector<int> deg(positions.size(), 0);
    for (auto [i, j] : bonds) {
      ++deg[i];
      ++deg[j];
    }
    return deg;
  }

  /// Pair separation in nm; minimum image under periodic boundary.
  double distance(int i, int j) const {
    const Vec2 d = positions[j] - positions[i];
    if (boundary == Boundary::open) return norm(d);
    if (geometry == Geometry::chain) {
      const double L = period1.x;
      double dx = std::fmod(std::abs(d.x), L);
      return std::min(dx, L - dx);
    }
    double best = norm(d);
    for (int m1 = -2; m1 <= 2; ++m1)
      for (int m2 = -2; m2 <= 2; ++m2) {
        const Vec2 s = d + static_cast<double>(m1) * period1 + static_cast<double>(m2) * period2;
        best = std::min(best, norm(s));
      }
    return best;
  }

  /// Sites of the leftmost / rightmost column (smallest / largest x), used for probes.
  std::vector<int> column(bool leftmost) const {
    double target = leftmost ? 1e300 : -1e300;
    for (const auto& p : positions) target = leftmost ? std::min(target, p.x) : std::max(target, p.x);
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
      if (std::abs(positions[i].x - target) < 1e-9 * std::max(1.0, a)) out.push_back(i);
    return out;
  }
};

namespace detail {
inline void add_bond(std::vector<std::pair<int, int>>& bonds, int i, int j) {
  if (i == j) return;
  auto p = std::minmax(i, j);
  if (std::find(bonds.begin(), bonds.end(), std::pair<int, int>{p.first, p.second}) == bonds.end())
    bonds.emplace_back(p.first, p.second);
}
}  // namespace detail

/// Builds a chain (n_y must be 1), square, or honeycomb (n_x*n_y unit cells) array.
///
/// Extents of 2 under periodic boundary do not duplicate the wrap bond, so the
/// exact coordination numbers (2 / 4 / 3) hold for chain length >= 3 and square
/// extents >= 3.
inline LatticeGraph build_lattice(Geometry geometry, int nx, int ny, double a, Boundary boundary) {
  if (nx < 2) throw Error("build_lattice: n_x must be >= 2");
  if (ny < 1) throw Error("build_lattice: n_y must be >= 1");
  if (!(a > 0.0)) throw Error("build_lattice: lattice constant must be positive");

  LatticeGraph g;
  g.geometry = geometry;
  g.boundary = boundary;
  g.nx = nx;
  g.ny = ny;
  g.a = a;
  const bool pbc = boundary == Boundary::periodic;

  switch (geometry) {
    case Geometry::chain: {
      if (ny != 1) throw Error("build_lattice: a chain requires n_y = 1");
      for (int i = 0; i < nx; ++i) {
        g.positions.push_back({i * a, 0.0});
        g.sublattice.push_back(i % 2 == 0 ? 1 : -1);
      }
      for (int i = 0; i + 1 < nx; ++i) detail::add_bond(g.bonds, i, i + 1);
      if (pbc) detail::add_bond(g.bonds, nx - 1, 0);
      g.period1 = {nx * a, 0.0};
      g.bipartite = !(pbc && nx % 2 == 1);
      break;
    }
    case Geometry::square: {
      if (ny < 2) throw Error("build_lattice: square lattice requires n_y >= 2 (use chain for 1D)");
      auto idx = [nx](int x, int y) { return y * nx + x; };
      for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
          g.positions.push_back({x * a, y * a});
          g.sublattice.push_back((x + y) % 2 == 0 ? 1 : -1);
        }
      for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
          if (x + 1 < nx) detail::add_bond(g.bonds, idx(x, y), idx(x + 1, y));
          else if (pbc) detail::add_bond(g.bonds, idx(x, y), idx(0, y));
          if (y + 1 < ny) detail::add_bond(g.bonds, idx(x, y), idx(x, y + 1));
          else if (pbc) detail::add_bond(g.bonds, idx(x, y), idx(x, 0));
        }
      g.period1 = {nx * a, 0.0};
      g.period2 = {0.0, ny * a};
      g.bipartite = !(pbc && (nx % 2 == 1 || ny % 2 == 1));
      break;
    }
    case Geometry::honeycomb: {
      if (pbc && (nx < 2 || ny < 2))
        throw Error("build_lattice: periodic honeycomb needs at least 2 cells along each basis vector");
      const Vec2 a1 = (a / 2.0) * Vec2{3.0, std::sqrt(3.0)};
      const Vec2 a2 = (a / 2.0) * Vec2{3.0, -std::sqrt(3.0)};
      auto cell = [nx](int cx, int cy) { return cy * nx + cx; };
      for (int cy = 0; cy < ny; ++cy)
        for (int cx = 0; cx < nx; ++cx) {
          const Vec2 R = static_cast<double>(cx) * a1 + static_cast<double>(cy) * a2;
          g.positions.push_back(R);
          g.sublattice.push_back(1);
          g.positions.push_back(R + Vec2{a, 0.0});
          g.sublattice.push_back(-1);
        }
      for (int cy = 0; cy < ny; ++cy)
        for (int cx = 0; cx < nx; ++cx) {
          const int A = 2 * cell(cx, cy);
          detail::add_bond(g.bonds, A, A + 1);
          // A(R) also touches B(R - a1) and B(R - a2).
          const int xm = cx - 1, ym = cy - 1;
          if (xm >= 0) detail::add_bond(g.bonds, A, 2 * cell(xm, cy) + 1);
          else if (pbc) detail::add_bond(g.bonds, A, 2 * cell(nx - 1, cy) + 1);
          if (ym >= 0) detail::add_bond(g.bonds, A, 2 * cell(cx, ym) + 1);
          else if (pbc) detail::add_bond(g.bonds, A, 2 * cell(cx, ny - 1) + 1);
        }
      g.period1 = static_cast<double>(nx) * a1;
      g.period2 = static_cast<double>(ny) * a2;
      g.bipartite = true;
      break;
    }
  }
  return g;
}

/// Pairwise screened Coulomb matrix V_ij = V0 exp(-lambda d_ij) / d_ij in meV.
struct CoulombMatrix {
  Eigen::MatrixXd V;
  double V0 = 0.0;      // nm*meV
  double lambda = 0.0;  // 1/nm
};

inline CoulombMatrix coulomb_matrix(const LatticeGraph& g, double V0, double lambda) {
  if (V0 < 0.0) throw Error("coulomb_matrix: V0 must be non-negative");
  if (lambda < 0.0) throw Error("coulomb_matrix: screening must be non-negative");
  const int n = g.size();
  CoulombMatrix c;
  c.V0 = V0;
  c.lambda = lambda;
  c.V = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double d = g.distance(i, j);
      if (!(d > 1e-12)) throw Error("coulomb_matrix: coincident sites " + std::to_string(i) + "," + std::to_string(j));
      const double v = V0 == 0.0 ? 0.0 : V0 * std::exp(-lambda * d) / d;
      c.V(i, j) = c.V(j, i) = v;
    }
  return c;
}

inline nlohmann::json to_json(const LatticeGraph& g) {
  nlohmann::json j;
  j["geometry"] = to_string(g.geometry);
  j["boundary"] = to_string(g.boundary);
  j["nx"] = g.nx;
  j["ny"] = g.ny;
  j["a_nm"] = g.a;
  j["bipartite"] = g.bipartite;
  auto& pos = j["positions"] = nlohmann::json::array();
  for (auto p : g.positions) pos.push_back({p.x, p.y});
  j["sublattice"] = g.sublattice;
  auto& pairs = j["pairs"] = nlohmann::json::array();
  for (auto [a, b] : g.bonds) pairs.push_back({a, b});
  return j;
}

}  // namespace rjr
