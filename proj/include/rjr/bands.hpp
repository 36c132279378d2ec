#pragma once

// Tight-binding dispersions, nesting, the Neel-gapped square spectrum and the
// honeycomb Dirac bands.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <utility>
#include <vector>

#include "rjr/common.hpp"
#include "rjr/lattice.hpp"

namespace rjr {

struct KPoint {
  double kx = 0.0;  // 1/nm
  double ky = 0.0;
};

/// eps(k) = -2t [cos(kx a) + cos(ky a)].
inline double square_dispersion(KPoint k, double t, double a) {
  return -2.0 * t * (std::cos(k.kx * a) + std::cos(k.ky * a));
}

/// eps(k) = -2t cos(k a).
inline double chain_dispersion(double k, double t, double a) { return -2.0 * t * std::cos(k * a); }

/// Whether k + Q, Q = (pi/a, pi/a), lies on the Fermi surface when k does.
/// Throws if k itself is off the surface by more than `tol` (meV).
inline bool nesting_check(KPoint k, double t, double a, double tol = 1e-9) {
  if (std::abs(square_dispersion(k, t, a)) >= tol) throw Error("nesting_check: k is not on the Fermi surface");
  const double q = std::numbers::pi / a;
  return std::abs(square_dispersion({k.kx + q, k.ky + q}, t, a)) < tol;
}

/// Points on cos(kx a) + cos(ky a) = 0, i.e. |kx| + |ky| = pi/a, walked around the diamond.
inline std::vector<KPoint> fermi_surface_points(int count, double a) {
  std::vector<KPoint> out;
  const double pi = std::numbers::pi;
  for (int i = 0; i < count; ++i) {
    const double s = 4.0 * i / count;  // perimeter parameter in [0, 4)
    const int edge = static_cast<int>(s);
    const double u = (s - edge) * pi / a;
    switch (edge) {
      case 0: out.push_back({u, pi / a - u}); break;
      case 1: out.push_back({pi / a - u, -u}); break;
      case 2: out.push_back({-u, -(pi / a - u)}); break;
      default: out.push_back({-(pi / a - u), u}); break;
    }
  }
  return out;
}

/// (-e, +e) with e = sqrt((g S phi0)^2 + 16 t^2 cos^2(k+ a/sqrt2) cos^2(k- a/sqrt2)),
/// for k+- inside the reduced zone (-pi/(sqrt2 a), pi/(sqrt2 a)].
inline std::pair<double, double> gapped_square_spectrum(double kp, double km, double t, double g, double S, double phi0,
                                                        double a) {
  const double edge = std::numbers::pi / (std::sqrt(2.0) * a);
  const double slack = 1e-12 * edge;
  if (!(kp > -edge - slack && kp <= edge + slack && km > -edge - slack && km <= edge + slack))
    throw Error("gapped_square_spectrum: k outside the reduced zone");
  const double m = g * S * phi0;
  const double cp = std::cos(kp * a / std::sqrt(2.0)), cm = std::cos(km * a / std::sqrt(2.0));
  const double e = std::sqrt(m * m + 16.0 * t * t * cp * cp * cm * cm);
  return {-e, e};
}

/// Minimum of the upper gapped band over an n x n grid of the reduced zone
/// (grid includes the zone boundary).
inline double gapped_square_min(double t, double g, double S, double phi0, double a, int n) {
  const double edge = std::numbers::pi / (std::sqrt(2.0) * a);
  double best = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= n; ++j) {
      const double kp = -edge + 2.0 * edge * i / n, km = -edge + 2.0 * edge * j / n;
      best = std::min(best, gapped_square_spectrum(kp, km, t, g, S, phi0, a).second);
    }
  return best;
}

/// Honeycomb primitive vectors a1 = (a/2)(3, sqrt3), a2 = (a/2)(3, -sqrt3), as in build_lattice.
inline std::pair<Vec2, Vec2> honeycomb_primitive(double a) {
  return {(a / 2.0) * Vec2{3.0, std::sqrt(3.0)}, (a / 2.0) * Vec2{3.0, -std::sqrt(3.0)}};
}

/// Reciprocal vectors with b_i . a_j = 2 pi delta_ij.
inline std::pair<Vec2, Vec2> honeycomb_reciprocal(double a) {
  const double pi = std::numbers::pi;
  return {(2.0 * pi / (3.0 * a)) * Vec2{1.0, std::sqrt(3.0)}, (2.0 * pi / (3.0 * a)) * Vec2{1.0, -std::sqrt(3.0)}};
}

/// Dirac point K = (2 pi / 3a)(1, 1/sqrt3).
inline KPoint honeycomb_K(double a) {
  const double pi = std::numbers::pi;
  return {2.0 * pi / (3.0 * a), 2.0 * pi / (3.0 * a * std::sqrt(3.0))};
}

/// (-e, +e) with e = t |1 + exp(i k.a1) + exp(i k.a2)|.
inline std::pair<double, double> honeycomb_bands(KPoint k, double t, double a) {
  const auto [a1, a2] = honeycomb_primitive(a);
  const std::complex<double> f =
      1.0 + std::polar(1.0, k.kx * a1.x + k.ky * a1.y) + std::polar(1.0, k.kx * a2.x + k.ky * a2.y);
  const double e = t * std::abs(f);
  return {-e, e};
}

/// Central-difference slope of the upper honeycomb band away from K along angle theta.
inline double honeycomb_dirac_slope(double t, double a, double theta, double step) {
  const KPoint K = honeycomb_K(a);
  const KPoint kp{K.kx + step * std::cos(theta), K.ky + step * std::sin(theta)};
  const KPoint km{K.kx - step * std::cos(theta), K.ky - step * std::sin(theta)};
  // The cone is |k - K|-linear, so the symmetric pair averages the two sides.
  return (honeycomb_bands(kp, t, a).second + honeycomb_bands(km, t, a).second) / (2.0 * step);
}

/// Slope of the chain band at k_F = pi/(2a) by central differences.
inline double chain_fermi_slope(double t, double a, double step) {
  const double kf = std::numbers::pi / (2.0 * a);
  return (chain_dispersion(kf + step, t, a) - chain_dispersion(kf - step, t, a)) / (2.0 * step);
}

/// Band table on a uniform n x n grid covering [-pi/a, pi/a)^2 (square) or the
/// parallelogram spanned by the reciprocal vectors (honeycomb).
struct DispersionGrid {
  std::vector<KPoint> k;
  std::vector<double> lower;
  std::vector<double> upper;
};

inline DispersionGrid dispersion_grid(Geometry geometry, double t, double a, int n) {
  if (n < 1) throw Error("dispersion_grid: resolution must be positive");
  DispersionGrid out;
  const double pi = std::numbers::pi;
  const auto [b1, b2] = honeycomb_reciprocal(a);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double u = (i + 0.5) / n, v = (j + 0.5) / n;
      switch (geometry) {
        case Geometry::chain: {
          if (j > 0) continue;
          const KPoint k{-pi / a + 2.0 * pi / a * u, 0.0};
          const double e = chain_dispersion(k.kx, t, a);
          out.k.push_back(k);
          out.lower.push_back(e);
          out.upper.push_back(e);
          break;
        }
        case Geometry::square: {
          const KPoint k{-pi / a + 2.0 * pi / a * u, -pi / a + 2.0 * pi / a * v};
          const double e = square_dispersion(k, t, a);
          out.k.push_back(k);
          out.lower.push_back(e);
          out.upper.push_back(e);
          break;
        }
        case Geometry::honeycomb: {
          const KPoint k{u * b1.x + v * b2.x, u * b1.y + v * b2.y};
          const auto [lo, hi] = honeycomb_bands(k, t, a);
          out.k.push_back(k);
          out.lower.push_back(lo);
          out.upper.push_back(hi);
          break;
        }
      }
    }
  return out;
}

/// Single-particle energies of the real-space hopping matrix -t on the lattice bonds.
inline Eigen::VectorXd real_space_levels(const LatticeGraph& g, double t) {
  const int n = g.size();
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
  for (auto [i, j] : g.bonds) H(i, j) = H(j, i) = -t;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

}  // namespace rjr
