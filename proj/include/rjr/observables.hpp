#pragma once

// Diagnostics from mean-field states and ED ensembles: Neel order, pairing,
// correlators, CDW fits, static potentials and fractional charge.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <json.hpp>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "rjr/common.hpp"
#include "rjr/ed.hpp"
#include "rjr/lattice.hpp"
#include "rjr/meanfield.hpp"
#include "rjr/model.hpp"

namespace rjr {

/// n_z normalized so that a perfect Neel state gives |n_z| = 1, and the
/// unnormalized value `raw` = S * n_z.
struct NeelResult {
  double n_z = 0.0;
  double raw = 0.0;
};

/// n_z = -(1 / (N S^2)) sum_j delta_ref delta_j <I^z_ref I^z_j>, from the
/// correlators of a reference site with every site.
inline NeelResult neel_order_from_correlators(const std::vector<double>& zz_ref, const LatticeGraph& g, double S,
                                              int ref = 0) {
  const int N = g.size();
  if (static_cast<int>(zz_ref.size()) != N) throw Error("neel_order: correlator count does not match lattice");
  if (static_cast<int>(g.sublattice.size()) != N) throw Error("neel_order: lattice has no sublattice labels");
  double acc = 0.0;
  for (int j = 0; j < N; ++j) acc += g.sublattice[static_cast<std::size_t>(j)] * zz_ref[static_cast<std::size_t>(j)];
  acc *= g.sublattice[static_cast<std::size_t>(ref)];
  NeelResult r;
  r.n_z = -acc / (N * S * S);
  r.raw = S * r.n_z;
  return r;
}

/// Mean-field n_z with factorized correlators <I^z_ref><I^z_j>.
inline NeelResult neel_order(const SpinField& spins, const LatticeGraph& g, double S, int ref = 0) {
  std::vector<double> zz(static_cast<std::size_t>(spins.cols()));
  for (Eigen::Index j = 0; j < spins.cols(); ++j) zz[static_cast<std::size_t>(j)] = spins(2, ref) * spins(2, j);
  return neel_order_from_correlators(zz, g, S, ref);
}

/// ED n_z from true two-point correlators.
inline NeelResult neel_order(const EdSiteData& d, const LatticeGraph& g, double S, int ref = 0) {
  if (ref != 0) throw Error("neel_order: ED site data carries correlators of site 0 only");
  return neel_order_from_correlators(d.zz_ref, g, S, ref);
}

/// (1/N^2) sum_ij |K_ij|^2.
inline double pairing_average(const Eigen::MatrixXd& K) {
  if (K.rows() != K.cols()) throw Error("pairing_average: K must be square");
  if (K.rows() == 0) return 0.0;
  const double N = static_cast<double>(K.rows());
  return K.squaredNorm() / (N * N);
}

namespace detail {
inline int correlator_target(const LatticeGraph& g, int i0, int d) {
  const int N = g.size();
  if (g.boundary == Boundary::periodic) return ((i0 + d) % N + N) % N;
  return i0 + d;
}
inline void check_correlator_range(const LatticeGraph& g, int i0, int d_max) {
  const int N = g.size();
  if (i0 < 0 || i0 >= N || d_max < 0) throw Error("correlator_profile: index out of range");
  if (g.boundary == Boundary::open && i0 + d_max >= N) throw Error("correlator_profile: d_max runs past the open edge");
  if (g.boundary == Boundary::periodic && 2 * d_max > N) throw Error("correlator_profile: d_max exceeds N/2");
}
}  // namespace detail

/// <c_i0^dag c_(i0+d)> for d = 0..d_max from a mean-field rho (flattened indices).
inline std::vector<double> correlator_profile(const Eigen::MatrixXd& rho, const LatticeGraph& g, int i0, int d_max) {
  detail::check_correlator_range(g, i0, d_max);
  std::vector<double> out;
  for (int d = 0; d <= d_max; ++d) out.push_back(rho(detail::correlator_target(g, i0, d), i0));
  return out;
}

/// Same profile from an ED ensemble.
inline std::vector<double> correlator_profile(const ThermalEnsemble& ens, const LatticeGraph& g, int i0, int d_max) {
  detail::check_correlator_range(g, i0, d_max);
  std::vector<double> out;
  for (int d = 0; d <= d_max; ++d) out.push_back(ens.expectation(ops::hopping(i0, detail::correlator_target(g, i0, d))));
  return out;
}

struct LmResult {
  Eigen::VectorXd params;
  double mse = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Levenberg-Marquardt least squares for model(params, x) against (x, y), with a
/// central-difference Jacobian.
inline LmResult levenberg_marquardt(const std::function<double(const Eigen::VectorXd&, double)>& model,
                                    Eigen::VectorXd p, const std::vector<double>& x, const std::vector<double>& y,
                                    int max_iter = 300) {
  const int m = static_cast<int>(x.size()), n = static_cast<int>(p.size());
  auto residuals = [&](const Eigen::VectorXd& q) {
    Eigen::VectorXd r(m);
    for (int i = 0; i < m; ++i) r(i) = model(q, x[static_cast<std::size_t>(i)]) - y[static_cast<std::size_t>(i)];
    return r;
  };
  Eigen::VectorXd r = residuals(p);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  LmResult res;
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    Eigen::MatrixXd J(m, n);
    for (int k = 0; k < n; ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(p(k)));
      Eigen::VectorXd pp = p, pm = p;
      pp(k) += h;
      pm(k) -= h;
      J.col(k) = (residuals(pp) - residuals(pm)) / (2.0 * h);
    }
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    bool improved = false;
    for (int tries = 0; tries < 30 && !improved; ++tries) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal() += lambda * (JtJ.diagonal().array() + 1e-12).matrix();
      const Eigen::VectorXd step = A.ldlt().solve(-g);
      const Eigen::VectorXd pn = p + step;
      const Eigen::VectorXd rn = residuals(pn);
      const double cn = rn.squaredNorm();
      if (std::isfinite(cn) && cn < cost) {
        const double rel = (cost - cn) / std::max(cost, 1e-300);
        p = pn;
        r = rn;
        cost = cn;
        lambda = std::max(lambda / 3.0, 1e-12);
        improved = true;
        if (rel < 1e-14 || step.norm() < 1e-12 * (1.0 + p.norm())) res.converged = true;
      } else {
        lambda *= 4.0;
      }
    }
    if (!improved) {
      res.converged = true;  // no descent direction left: stationary point
      break;
    }
    if (res.converged) break;
  }
  res.params = p;
  res.mse = cost / std::max(1, m);
  return res;
}

/// Oscillatory family rho0 + A cos(B d + phi) / d^(1+delta) and exponential
/// family C exp(-gamma d), both fitted by least squares.
struct CdwFit {
  double rho0 = 0.0, A = 0.0, B = 0.0, delta = 0.0, phi = 0.0;
  double mse = 0.0;
  bool converged = false;
  double exp_C = 0.0, exp_gamma = 0.0, exp_mse = 0.0;
  bool exp_converged = false;
};

inline double cdw_model(double rho0, double A, double B, double delta, double phi, double d) {
  return rho0 + A * std::cos(B * d + phi) / std::pow(d, 1.0 + delta);
}

/// Fits correlator values `c` sampled at separations `d` (all >= 1).
inline CdwFit cdw_fit(const std::vector<double>& d, const std::vector<double>& c) {
  if (d.size() != c.size()) throw Error("cdw_fit: size mismatch");
  if (d.size() < 8) throw Error("cdw_fit: need at least 8 points");
  for (double x : d)
    if (x < 1.0) throw Error("cdw_fit: separations must be >= 1");
  const double pi = std::numbers::pi;
  auto osc = [](const Eigen::VectorXd& q, double x) { return cdw_model(q(0), q(1), q(2), q(3), q(4), x); };
  CdwFit out;
  double best = std::numeric_limits<double>::infinity();
  const double amp = std::max(1e-6, std::abs(c.front()) * d.front());
  for (int kb = 1; kb <= 16; ++kb)
    for (int kp = 0; kp < 4; ++kp) {
      Eigen::VectorXd q(5);
      q << 0.0, amp, pi * kb / 16.0, 0.0, -pi / 2 + kp * pi / 2;
      auto r = levenberg_marquardt(osc, q, d, c);
      if (std::isfinite(r.mse) && r.mse < best) {
        best = r.mse;
        out.rho0 = r.params(0);
        out.A = r.params(1);
        out.B = r.params(2);
        out.delta = r.params(3);
        out.phi = r.params(4);
        out.mse = r.mse;
        out.converged = r.converged;
      }
    }
  // Canonical branch: A >= 0, B in (0, pi], phi in (-pi, pi]; equivalent at integer d.
  if (out.A < 0.0) {
    out.A = -out.A;
    out.phi += pi;
  }
  out.B = std::fmod(out.B, 2.0 * pi);
  if (out.B < 0.0) out.B += 2.0 * pi;
  if (out.B > pi) {
    out.B = 2.0 * pi - out.B;
    out.phi = -out.phi;
  }
  out.phi = std::remainder(out.phi, 2.0 * pi);
  if (out.phi <= -pi) out.phi += 2.0 * pi;

  auto ex = [](const Eigen::VectorXd& q, double x) { return q(0) * std::exp(-q(1) * x); };
  double best_e = std::numeric_limits<double>::infinity();
  for (double g0 : {0.05, 0.3, 1.0, 3.0}) {
    Eigen::VectorXd q(2);
    q << c.front() * std::exp(g0 * d.front()), g0;
    auto r = levenberg_marquardt(ex, q, d, c);
    if (std::isfinite(r.mse) && r.mse < best_e) {
      best_e = r.mse;
      out.exp_C = r.params(0);
      out.exp_gamma = r.params(1);
      out.exp_mse = r.mse;
      out.exp_converged = r.converged;
    }
  }
  return out;
}

/// Spearman rank correlation (average ranks for ties).
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("spearman: need two equal-length series");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

struct StaticPotentialRow {
  int d = 0;
  double energy = 0.0;  // meV
  double V = 0.0;       // E(d) - E(d_max), meV
  bool converged = false;
  double n_z = 0.0;
  bool walls_formed = false;
  MeanFieldState state;
};

struct StaticPotentialConfig {
  double eps_over_t = 0.05;
  int start = 5;              // first reversed site
  int extra_electrons = 1;    // above N/2
};

struct PinnedState {
  MeanFieldState state;
  bool walls_formed = false;  // lowest state follows the reversed window
};

/// Zero-temperature HF state of a pinned chain at fixed particle number, the
/// lower-energy result of two seeds: spins following the pinning pattern and the
/// unreversed bulk pattern, each with the matching density modulation.
inline PinnedState pinned_ground_state(const LatticeGraph& g, const ModelParams& p, SolverConfig cfg,
                                       const PinningPattern& pin, int n_particles) {
  const int N = g.size();
  cfg.kind = SolverKind::hf;
  cfg.n_particles = n_particles;
  const auto pr = make_problem(g, p, pin);
  const auto field = pin.field(N);
  const double fill = static_cast<double>(n_particles) / N;
  PinnedState best;
  bool have = false;
  for (bool follow : {true, false}) {
    detail::Iterate x;
    x.rho = MatrixXd::Zero(N, N);
    x.K = MatrixXd::Zero(N, N);
    x.spins = SpinField::Zero(3, N);
    for (int i = 0; i < N; ++i) {
      const double sign = follow ? (field[static_cast<std::size_t>(i)] > 0 ? 1.0 : -1.0) : ((i + 1) % 2 == 0 ? 1.0 : -1.0);
      x.spins(2, i) = sign * p.S;
      x.rho(i, i) = std::clamp(fill + 0.4 * sign, 0.0, 1.0);
    }
    auto st = iterate_to_fixed_point(pr, cfg, x, n_particles);
    const bool better = !have || (st.converged && !best.state.converged) ||
                        (st.converged == best.state.converged && st.energy < best.state.energy);
    if (better) {
      best.state = std::move(st);
      best.walls_formed = follow;
      have = true;
    }
  }
  return best;
}

/// V(d) = E(d) - E(d_max) for the pinned chain, where d_max is the largest entry
/// of d_list. Every d runs at N/2 + extra electrons via pinned_ground_state.
inline std::vector<StaticPotentialRow> static_potential(const LatticeGraph& g, const ModelParams& p,
                                                        const SolverConfig& cfg, std::vector<int> d_list,
                                                        const StaticPotentialConfig& sc = {}) {
  if (g.geometry != Geometry::chain) throw Error("static_potential: chain geometry required");
  if (d_list.empty()) throw Error("static_potential: empty separation list");
  const int N = g.size();
  std::sort(d_list.begin(), d_list.end());
  std::vector<StaticPotentialRow> rows;
  for (int d : d_list) {
    const PinningPattern pin{sc.eps_over_t * p.t, sc.start, d};
    const auto ps = pinned_ground_state(g, p, cfg, pin, N / 2 + sc.extra_electrons);
    StaticPotentialRow row;
    row.d = d;
    row.energy = ps.state.energy;
    row.converged = ps.state.converged;
    row.n_z = neel_order(ps.state.spins, g, p.S).n_z;
    row.walls_formed = ps.walls_formed;
    row.state = ps.state;
    rows.push_back(std::move(row));
  }
  const double e_inf = rows.back().energy;
  for (auto& r : rows) r.V = r.energy - e_inf;
  return rows;
}

struct FractionalCharge {
  double q_left = 0.0;
  double q_right = 0.0;
  double remainder = 0.0;
  double total = 0.0;
};

/// Excess density of a pinned periodic chain over an unpinned background,
/// integrated around the domain walls at `start` and `start + d`. Each window
/// covers 2 * half_width + 1 sites centred on the wall site with half weight on
/// its two end sites; these weights cancel any period-2 density modulation, so
/// the result does not depend on which Neel domain the background occupies.
inline FractionalCharge fractional_density_check(const Eigen::MatrixXd& rho_pinned, const Eigen::MatrixXd& rho_background,
                                                 int start, int d, int half_width = 4) {
  const int N = static_cast<int>(rho_pinned.rows());
  if (rho_background.rows() != N) throw Error("fractional_density_check: size mismatch");
  if (half_width < 1 || 2 * half_width + 1 > N) throw Error("fractional_density_check: bad window half-width");
  if (start < 0 || d < 0 || start + d > N) throw Error("fractional_density_check: window does not fit the chain");
  const Eigen::VectorXd ex = rho_pinned.diagonal() - rho_background.diagonal();
  auto sum_around = [&](int wall) {
    double s = 0.0;
    for (int k = -half_width; k <= half_width; ++k) {
      const double w = std::abs(k) == half_width ? 0.5 : 1.0;
      s += w * ex((((wall + k) % N) + N) % N);
    }
    return s;
  };
  FractionalCharge q;
  q.total = ex.sum();
  q.q_left = sum_around(start);
  q.q_right = sum_around(start + d);
  q.remainder = q.total - q.q_left - q.q_right;
  return q;
}

/// Diagnostics of one solved point.
struct ObservableReport {
  double n_z = 0.0;
  double n_z_raw = 0.0;
  std::vector<double> site_density;
  std::vector<double> spin_z;
  double K_tilde = 0.0;
  double total_n = 0.0;
  double energy = 0.0;
  double omega = 0.0;
  nlohmann::json provenance;
};

inline ObservableReport report(const MeanFieldState& s, const LatticeGraph& g, double S) {
  ObservableReport r;
  const auto nz = neel_order(s.spins, g, S);
  r.n_z = nz.n_z;
  r.n_z_raw = nz.raw;
  for (Eigen::Index i = 0; i < s.rho.rows(); ++i) {
    r.site_density.push_back(s.rho(i, i));
    r.spin_z.push_back(s.spins(2, i));
  }
  r.K_tilde = pairing_average(s.K);
  r.total_n = s.total_n;
  r.energy = s.energy;
  r.omega = s.omega;
  r.provenance = {{"solver", "meanfield"}, {"guess", s.guess}, {"converged", s.converged}, {"iterations", s.iterations}};
  return r;
}

inline ObservableReport report(const EdSiteData& d, const LatticeGraph& g, double S) {
  ObservableReport r;
  const auto nz = neel_order(d, g, S);
  r.n_z = nz.n_z;
  r.n_z_raw = nz.raw;
  r.site_density = d.density;
  r.spin_z = d.spin_z;
  r.total_n = d.total_n;
  r.energy = d.energy;
  r.omega = d.energy;
  r.provenance = {{"solver", "ed"}};
  return r;
}

/// Scalar observables as (name, value) pairs for long-format output.
inline std::vector<std::pair<std::string, double>> scalar_rows(const ObservableReport& r) {
  return {{"n_z", r.n_z}, {"abs_n_z", std::abs(r.n_z)}, {"n_z_raw", r.n_z_raw}, {"K_tilde", r.K_tilde},
          {"total_n", r.total_n}, {"energy", r.energy}, {"omega", r.omega}};
}

inline nlohmann::json to_json(const ObservableReport& r) {
  return {{"n_z", r.n_z},       {"n_z_raw", r.n_z_raw}, {"site_density", r.site_density}, {"spin_z", r.spin_z},
          {"K_tilde", r.K_tilde}, {"total_n", r.total_n}, {"energy", r.energy},           {"omega", r.omega},
          {"provenance", r.provenance}};
}

}  // namespace rjr
