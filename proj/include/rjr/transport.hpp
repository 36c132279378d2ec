#pragma once

// Linear-response conductance of the island between two probes, from an ED
// spectrum with creation matrix elements on the probe sites.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "rjr/common.hpp"
#include "rjr/ed.hpp"
#include "rjr/lattice.hpp"
#include "rjr/model.hpp"

namespace rjr {

/// Probe geometry and temperatures. Gamma is the bare rate 2 pi C^2 (meV).
struct ProbeSetup {
  std::vector<int> left_sites;
  std::vector<int> right_sites;
  double Gamma = 1.0;
  double T_reservoir_mK = 10.0;
  double T_island_mK = 0.01;

  void validate() const {
    if (left_sites.empty() || right_sites.empty()) throw Error("probe: site lists must be non-empty");
    for (int i : left_sites)
      if (std::find(right_sites.begin(), right_sites.end(), i) != right_sites.end())
        throw Error("probe: left and right site lists must be disjoint");
    if (!(Gamma > 0.0)) throw Error("probe: Gamma must be positive");
    if (!(T_reservoir_mK > 0.0)) throw Error("probe: reservoir temperature must be positive");
    if (!(T_island_mK > 0.0)) throw Error("probe: island temperature must be positive");
  }
};

/// Probes on the leftmost and rightmost columns of the array.
inline ProbeSetup column_probes(const LatticeGraph& g, double Gamma, double T_reservoir_mK, double T_island_mK) {
  ProbeSetup p;
  p.left_sites = g.column(true);
  p.right_sites = g.column(false);
  p.Gamma = Gamma;
  p.T_reservoir_mK = T_reservoir_mK;
  p.T_island_mK = T_island_mK;
  p.validate();
  return p;
}

inline std::vector<int> probe_sites(const ProbeSetup& p) {
  std::vector<int> s = p.left_sites;
  s.insert(s.end(), p.right_sites.begin(), p.right_sites.end());
  return s;
}

/// Gamma^{L/R}[n](alpha, alpha') = Gamma sum_{i in probe} |<n,alpha| c_i^dag |n-1,alpha'>|^2.
struct RateTensors {
  std::map<int, Eigen::MatrixXd> left;
  std::map<int, Eigen::MatrixXd> right;
};

inline RateTensors tunneling_rates(const ManyBodySpectrum& spec, const ProbeSetup& probe) {
  probe.validate();
  RateTensors r;
  auto accumulate = [&](const std::vector<int>& sites, std::map<int, Eigen::MatrixXd>& out) {
    for (const auto& [n, sec] : spec.sectors) {
      if (!spec.sectors.count(n - 1)) continue;
      Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(sec.energies.size(), spec.sector(n - 1).energies.size());
      for (int i : sites) {
        auto site_it = spec.creation.find(i);
        if (site_it == spec.creation.end()) throw Error("tunneling_rates: no matrix elements for site " + std::to_string(i));
        auto n_it = site_it->second.find(n);
        if (n_it == site_it->second.end())
          throw Error("tunneling_rates: no matrix elements for site " + std::to_string(i) + ", n = " + std::to_string(n));
        acc += n_it->second.array().square().matrix();
      }
      out[n] = probe.Gamma * acc;
    }
  };
  accumulate(probe.left_sites, r.left);
  accumulate(probe.right_sites, r.right);
  return r;
}

/// P[n](alpha) proportional to exp(-beta (E - n mu)), normalized over all computed
/// states. Entries below 1e-14 of the largest are set to zero.
inline std::map<int, Eigen::VectorXd> stationary_weights(const ManyBodySpectrum& spec, double beta, double mu) {
  if (!(beta > 0.0)) throw Error("stationary_weights: beta must be positive");
  double emin = std::numeric_limits<double>::infinity();
  for (const auto& [n, s] : spec.sectors) emin = std::min(emin, s.energies.minCoeff() - mu * n);
  std::map<int, Eigen::VectorXd> P;
  double z = 0.0;
  for (const auto& [n, s] : spec.sectors) {
    Eigen::VectorXd w(s.energies.size());
    for (Eigen::Index a = 0; a < w.size(); ++a) {
      const double x = std::exp(-beta * (s.energies(a) - mu * n - emin));
      w(a) = x < 1e-14 ? 0.0 : x;
    }
    z += w.sum();
    P[n] = std::move(w);
  }
  for (auto& [n, w] : P) w /= z;
  return P;
}

/// Q = G_L G_R / (G_L + G_R), zero when both rates vanish.
inline double harmonic_rate(double gl, double gr) {
  const double s = gl + gr;
  return s > 0.0 ? gl * gr / s : 0.0;
}

/// sum Q P [1 - f(E^n_alpha - E^(n-1)_alpha' - mu)], i.e. G / G_{0,T} with
/// G_{0,T} = e^2 / (k_B T_r), in units of the bare rate.
inline double linear_conductance(const ManyBodySpectrum& spec, const RateTensors& rates, const ProbeSetup& probe, double mu) {
  const double beta_r = units::beta_from_mK(probe.T_reservoir_mK);
  const double beta_i = units::beta_from_mK(probe.T_island_mK);
  const auto P = stationary_weights(spec, beta_i, mu);
  double G = 0.0;
  for (const auto& [n, GL] : rates.left) {
    const auto& GR = rates.right.at(n);
    const Eigen::VectorXd& Pn = P.at(n);
    const Eigen::VectorXd& En = spec.sector(n).energies;
    const Eigen::VectorXd& Em = spec.sector(n - 1).energies;
    for (Eigen::Index a = 0; a < GL.rows(); ++a) {
      if (Pn(a) == 0.0) continue;
      for (Eigen::Index b = 0; b < GL.cols(); ++b) {
        const double q = harmonic_rate(GL(a, b), GR(a, b));
        if (q == 0.0) continue;
        G += q * Pn(a) * (1.0 - fermi(En(a) - Em(b) - mu, beta_r));
      }
    }
  }
  return G;
}

/// One conductance curve: raw G / G_{0,T} per mu, normalized to the curve maximum,
/// plus the peak positions and half-widths.
struct ConductanceCurve {
  double h_z = 0.0;
  std::vector<double> mu;
  std::vector<double> G_raw;
  std::vector<double> G_norm;
  std::vector<int> peaks;  // indices of local maxima above 1% of the maximum
  std::vector<double> half_widths;  // full extent above half the peak value, meV
  nlohmann::json metadata;
};

/// Local maxima above `threshold` times the global maximum; plateaus count once
/// at their first index.
inline std::vector<int> find_peaks(const std::vector<double>& y, double threshold = 0.01) {
  std::vector<int> out;
  if (y.empty()) return out;
  const double ymax = *std::max_element(y.begin(), y.end());
  if (!(ymax > 0.0)) return out;
  const int n = static_cast<int>(y.size());
  for (int i = 0; i < n; ++i) {
    if (y[static_cast<std::size_t>(i)] < threshold * ymax) continue;
    const double left = i > 0 ? y[static_cast<std::size_t>(i - 1)] : -1.0;
    if (left >= y[static_cast<std::size_t>(i)]) continue;
    int j = i;
    while (j + 1 < n && y[static_cast<std::size_t>(j + 1)] == y[static_cast<std::size_t>(i)]) ++j;
    const double right = j + 1 < n ? y[static_cast<std::size_t>(j + 1)] : -1.0;
    if (right < y[static_cast<std::size_t>(i)]) out.push_back(i);
    i = j;
  }
  return out;
}

/// Width of the region around peak index `p` where y stays above y[p] / 2.
inline double half_width(const std::vector<double>& x, const std::vector<double>& y, int p) {
  const double half = 0.5 * y[static_cast<std::size_t>(p)];
  int lo = p, hi = p;
  while (lo > 0 && y[static_cast<std::size_t>(lo - 1)] >= half) --lo;
  while (hi + 1 < static_cast<int>(y.size()) && y[static_cast<std::size_t>(hi + 1)] >= half) ++hi;
  return x[static_cast<std::size_t>(hi)] - x[static_cast<std::size_t>(lo)];
}

inline ConductanceCurve conductance_curve(const ManyBodySpectrum& spec, const ProbeSetup& probe,
                                          const std::vector<double>& mu_grid) {
  const auto rates = tunneling_rates(spec, probe);
  ConductanceCurve c;
  c.mu = mu_grid;
  for (double mu : mu_grid) c.G_raw.push_back(linear_conductance(spec, rates, probe, mu));
  double gmax = 0.0;
  for (double g : c.G_raw) gmax = std::max(gmax, g);
  for (double g : c.G_raw) c.G_norm.push_back(gmax > 0.0 ? g / gmax : 0.0);
  c.peaks = find_peaks(c.G_norm);
  for (int p : c.peaks) c.half_widths.push_back(half_width(c.mu, c.G_norm, p));
  c.metadata = {{"T_reservoir_mK", probe.T_reservoir_mK}, {"T_island_mK", probe.T_island_mK}, {"Gamma", probe.Gamma},
                {"G_max", gmax}};
  return c;
}

inline std::vector<double> peak_positions(const ConductanceCurve& c) {
  std::vector<double> out;
  for (int p : c.peaks) out.push_back(c.mu[static_cast<std::size_t>(p)]);
  return out;
}

/// Ground-state addition energies E0(n) - E0(n-1) for consecutive computed sectors.
inline std::vector<double> addition_energies(const ManyBodySpectrum& spec) {
  std::vector<double> out;
  for (const auto& [n, s] : spec.sectors)
    if (spec.sectors.count(n - 1)) out.push_back(s.energies(0) - spec.sector(n - 1).energies(0));
  return out;
}

/// Conductance curves for each h_z, with the island spectrum recomputed per field.
inline std::vector<ConductanceCurve> conductance_sweep(const LatticeGraph& g, const ModelParams& p,
                                                       const ProbeSetup& probe, const std::vector<double>& mu_grid,
                                                       const std::vector<double>& h_z_list, const EdOptions& opt = {}) {
  std::vector<ConductanceCurve> out;
  for (double hz : h_z_list) {
    ModelParams q = p;
    q.h_z = hz;
    const auto spec = compute_spectrum(g, q, std::nullopt, {}, probe_sites(probe), opt);
    auto c = conductance_curve(spec, probe, mu_grid);
    c.h_z = hz;
    c.metadata["h_z_meV"] = hz;
    c.metadata["g_ueV"] = q.g_ueV;
    c.metadata["peak_mu_meV"] = peak_positions(c);
    c.metadata["half_widths_meV"] = c.half_widths;
    out.push_back(std::move(c));
  }
  return out;
}

/// Whether two peak sets differ in count or in any position by more than `tol`.
inline bool peak_sets_differ(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  if (a.size() != b.size()) return true;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > tol) return true;
  return false;
}

}  // namespace rjr
