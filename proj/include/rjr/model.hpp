#pragma once

// Physical couplings, laboratory-knob conversions and per-site coefficients.

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rjr/common.hpp"
#include "rjr/lattice.hpp"

namespace rjr {

/// Couplings of the dopant-lattice Hamiltonian. Energies in meV except g (ueV).
///
/// The nuclear-spin field on site i is b_i = (h_x, 0, h_z + g n_i + eps_i); spins
/// lower their energy by aligning with it.
struct ModelParams {
  double t = 7.5;       // meV
  double g_ueV = 0.48;  // ueV
  double S = 0.5;
  double h_z = 0.0;  // meV
  double h_x = 0.0;  // meV
  double mu = 0.0;   // uniform chemical potential, meV
  std::vector<double> mu_site;  // optional per-site override, meV
  double V0 = 123.0;            // nm*meV
  double lambda = 0.0;          // 1/nm
  InverseTemperature beta;      // 1/meV
  double filling = 0.5;         // target fraction of N

  double g() const { return g_ueV * units::ueV_to_meV; }
  void set_g(double g_meV) { g_ueV = g_meV / units::ueV_to_meV; }

  int spin_dim() const { return static_cast<int>(std::lround(2.0 * S)) + 1; }

  void validate() const {
    if (!(t > 0.0)) throw Error("hopping t must be positive");
    const double twoS = 2.0 * S;
    if (!(S >= 0.5 && S <= 4.5) || std::abs(twoS - std::round(twoS)) > 1e-12)
      throw Error("spin S must be one of 1/2, 1, ..., 9/2");
    if (V0 < 0.0) throw Error("V0 must be non-negative");
    if (lambda < 0.0) throw Error("screening lambda must be non-negative");
    if (!(beta.value > 0.0)) throw Error("inverse temperature must be positive");
  }

  /// mu_i for site i: the per-site override when present, else the uniform value.
  double site_mu(int i) const { return mu_site.empty() ? mu : mu_site.at(static_cast<size_t>(i)); }
};

struct RegimeReport {
  double gS_over_t = 0.0;
  double hzS_over_t = 0.0;
  double hxS_over_t = 0.0;
  bool detuning_ok = false;
  bool neel_window_hint = false;
};

/// Hyperfine coupling under an applied electric field, quadratic Stark shift.
inline double stark_shifted_g(double g0_ueV, double E_field) {
  return g0_ueV * (1.0 + 2.8e-3 * E_field * E_field);
}

/// Calibrated exponential hopping profile t(a) = t_ref exp(-(a - a_ref)/xi).
struct TunnelingProfile {
  double t_ref = 7.5;  // meV
  double a_ref = 4.7;  // nm
  double xi = 2.5;     // nm

  double operator()(double a) const {
    if (!(xi > 0.0)) throw Error("tunneling profile: decay length must be positive");
    if (!(a > 0.0)) throw Error("tunneling profile: lattice constant must be positive");
    return t_ref * std::exp(-(a - a_ref) / xi);
  }

  /// Exponential through two (a, t) points.
  static TunnelingProfile fit_two_point(double a1, double t1, double a2, double t2) {
    if (!(t1 > 0.0 && t2 > 0.0)) throw Error("tunneling fit: hopping values must be positive");
    if (a1 == a2) throw Error("tunneling fit: separations must differ");
    const double xi = (a2 - a1) / std::log(t1 / t2);
    if (!(xi > 0.0) || !std::isfinite(xi)) throw Error("tunneling fit: data do not decay with separation");
    return {t1, a1, xi};
  }
};

inline double tunneling_profile(double a, const TunnelingProfile& profile) { return profile(a); }

/// Per-orientation calibrations from a JSON object {"name": {"t_ref":..,"a_ref":..,"xi":..}}.
inline std::map<std::string, TunnelingProfile> load_tunneling_calibrations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open tunneling calibration file " + path);
  const auto j = nlohmann::json::parse(in);
  std::map<std::string, TunnelingProfile> out;
  for (const auto& [name, v] : j.items()) {
    TunnelingProfile p;
    p.t_ref = v.at("t_ref").get<double>();
    p.a_ref = v.at("a_ref").get<double>();
    p.xi = v.at("xi").get<double>();
    if (!(p.xi > 0.0)) throw Error("tunneling calibration '" + name + "': xi must be positive");
    out.emplace(name, p);
  }
  return out;
}

inline RegimeReport dimensionless_regime(const ModelParams& p) {
  RegimeReport r;
  r.gS_over_t = p.g() * p.S / p.t;
  r.hzS_over_t = p.h_z * p.S / p.t;
  r.hxS_over_t = p.h_x * p.S / p.t;
  r.detuning_ok = std::abs(p.h_z) >= 10.0 * std::abs(p.h_x) && (p.h_z != 0.0 || p.h_x == 0.0);
  const double gz = std::abs(r.gS_over_t), hz = std::abs(r.hzS_over_t);
  const bool comparable = gz > 0.0 && hz > 0.0 && hz <= 10.0 * gz && gz <= 10.0 * hz;
  r.neel_window_hint = comparable && r.detuning_ok;
  return r;
}

/// Staggered pinning field with two reversed-parity domain walls.
///
/// Sites carry labels l = index + 1. Outside the window [start, start + d) the
/// field is eps (-1)^l, inside it is eps (-1)^(l+1); `start` is a 0-based index.
struct PinningPattern {
  double eps = 0.0;  // meV
  int start = 0;
  int d = 0;

  std::vector<double> field(int n_sites) const {
    if (start < 0 || d < 0 || start + d > n_sites) throw Error("pinning window does not fit the lattice");
    std::vector<double> f(static_cast<size_t>(n_sites));
    for (int k = 0; k < n_sites; ++k) {
      const int label = k + 1;
      const bool inside = k >= start && k < start + d;
      const int power = inside ? label + 1 : label;
      f[static_cast<size_t>(k)] = (power % 2 == 0) ? eps : -eps;
    }
    return f;
  }
};

struct SitePotentials {
  std::vector<double> mu;   // mu_i, meV
  std::vector<double> eps;  // pinning field eps_i, meV
};

inline SitePotentials site_potentials(const ModelParams& p, const LatticeGraph& g,
                                      const std::optional<PinningPattern>& pinning = std::nullopt) {
  const int n = g.size();
  if (!p.mu_site.empty() && static_cast<int>(p.mu_site.size()) != n)
    throw Error("per-site chemical potential length does not match the lattice");
  SitePotentials s;
  s.mu.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) s.mu[static_cast<size_t>(i)] = p.site_mu(i);
  s.eps.assign(static_cast<size_t>(n), 0.0);
  if (pinning) {
    if (g.geometry == Geometry::honeycomb) throw Error("pinning is defined only for chain and square arrays");
    s.eps = pinning->field(n);
  }
  return s;
}

inline nlohmann::json to_json(const ModelParams& p) {
  nlohmann::json j;
  j["t_meV"] = p.t;
  j["g_ueV"] = p.g_ueV;
  j["S"] = p.S;
  j["h_z_meV"] = p.h_z;
  j["h_x_meV"] = p.h_x;
  j["mu_meV"] = p.mu;
  if (!p.mu_site.empty()) j["mu_site_meV"] = p.mu_site;
  j["V0_nm_meV"] = p.V0;
  j["lambda_per_nm"] = p.lambda;
  j["beta_per_meV"] = p.beta.is_zero_temperature() ? nlohmann::json("inf") : nlohmann::json(p.beta.value);
  j["filling"] = p.filling;
  return j;
}

inline nlohmann::json to_json(const RegimeReport& r) {
  return {{"gS_over_t", r.gS_over_t},
          {"hzS_over_t", r.hzS_over_t},
          {"hxS_over_t", r.hxS_over_t},
          {"detuning_ok", r.detuning_ok},
          {"neel_window_hint", r.neel_window_hint}};
}

}  // namespace rjr
