#pragma once

// JSON run configuration: lattice, model, solver, sweep axes and per-command
// sections. Every error names the offending key.

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "rjr/common.hpp"
#include "rjr/ed.hpp"
#include "rjr/lattice.hpp"
#include "rjr/meanfield.hpp"
#include "rjr/model.hpp"
#include "rjr/observables.hpp"

namespace rjr {

struct LatticeSpec {
  Geometry geometry = Geometry::chain;
  int nx = 43;
  int ny = 1;
  double a = 4.7;  // nm
  Boundary boundary = Boundary::periodic;

  LatticeGraph build() const { return build_lattice(geometry, nx, ny, a, boundary); }
};

enum class Method { ed, hf, fthfb };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::ed: return "ed";
    case Method::hf: return "hf";
    case Method::fthfb: return "fthfb";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "ed") return Method::ed;
  if (s == "hf") return Method::hf;
  if (s == "fthfb") return Method::fthfb;
  throw ConfigError("solver.kind", "expected ed, hf or fthfb, got '" + s + "'");
}

enum class AxisScale { linear, log };

struct SweepAxis {
  std::string name;
  double min = 0.0;
  double max = 0.0;
  int points = 1;
  AxisScale scale = AxisScale::linear;

  std::vector<double> values() const {
    std::vector<double> v;
    for (int k = 0; k < points; ++k) {
      const double u = points == 1 ? 0.0 : static_cast<double>(k) / (points - 1);
      v.push_back(scale == AxisScale::linear ? min + u * (max - min)
                                              : std::exp(std::log(min) + u * (std::log(max) - std::log(min))));
    }
    return v;
  }
};

/// Names accepted on sweep axes and in the model section's dimensionless form.
inline const std::vector<std::string>& parameter_names() {
  static const std::vector<std::string> names{
      "t_meV",      "g_ueV",      "S",        "h_z_meV",       "h_x_meV",  "mu_meV",
      "V0_nm_meV",  "lambda_per_nm", "beta_per_meV", "T_mK",   "filling",  "gS_over_t",
      "hzS_over_t", "hxS_over_t", "hx_over_hz", "V0_over_at",  "mu_over_t"};
  return names;
}

inline bool known_parameter(const std::string& name) {
  for (const auto& n : parameter_names())
    if (n == name) return true;
  return false;
}

/// Sets one named parameter. Dimensionless forms use the current t, S and a,
/// so t and S must be fixed before them (axes apply in listed order).
inline void apply_parameter(ModelParams& p, double a, const std::string& name, double v) {
  if (name == "t_meV") p.t = v;
  else if (name == "g_ueV") p.g_ueV = v;
  else if (name == "S") p.S = v;
  else if (name == "h_z_meV") p.h_z = v;
  else if (name == "h_x_meV") p.h_x = v;
  else if (name == "mu_meV") p.mu = v;
  else if (name == "V0_nm_meV") p.V0 = v;
  else if (name == "lambda_per_nm") p.lambda = v;
  else if (name == "beta_per_meV") p.beta = v <= 0.0 || std::isinf(v) ? InverseTemperature{} : InverseTemperature::from_beta(v);
  else if (name == "T_mK") p.beta = v <= 0.0 ? InverseTemperature{} : InverseTemperature::from_mK(v);
  else if (name == "filling") p.filling = v;
  else if (name == "gS_over_t") p.set_g(v * p.t / p.S);
  else if (name == "hzS_over_t") p.h_z = v * p.t / p.S;
  else if (name == "hxS_over_t") p.h_x = v * p.t / p.S;
  else if (name == "hx_over_hz") p.h_x = v * std::abs(p.h_z);
  else if (name == "V0_over_at") p.V0 = v * a * p.t;
  else if (name == "mu_over_t") p.mu = v * p.t;
  else throw ConfigError(name, "unknown parameter name");
}

struct ConfinementSpec {
  std::vector<double> gS_over_t{0.7, 1.0};
  std::vector<int> d;  // empty: odd d from 3 to N/2 - 1
  StaticPotentialConfig fields;
};

struct ConductanceSpec {
  std::vector<double> T_reservoir_mK{10.0};
  double T_island_mK = 0.01;
  double Gamma = 1.0;
  std::vector<double> hzS_over_t;  // empty: the model h_z only
  double window_meV = 0.02;        // half-width around each addition energy
  double step_meV = 1e-4;
};

struct CorrelatorSpec {
  int i0 = -1;     // -1: N/2
  int d_max = -1;  // -1: largest allowed
};

struct BandsSpec {
  int resolution = 256;
  double phi0 = 1.0;
  int fermi_points = 200;
};

struct RunConfig {
  LatticeSpec lattice;
  ModelParams model;
  Method method = Method::hf;
  SolverConfig solver;
  bool tune_mu = false;  // fthfb: tune mu to filling * N at every point
  std::optional<double> hx_over_hz;  // keeps h_x tied to h_z when h_z is swept
  std::vector<SweepAxis> axes;
  bool warm_start = false;
  ConfinementSpec confinement;
  ConductanceSpec conductance;
  CorrelatorSpec correlators;
  BandsSpec bands;
  nlohmann::json source;  // resolved input
};

namespace detail {
template <class T>
T get_or(const nlohmann::json& j, const std::string& section, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(section.empty() ? key : section + "." + key, std::string("wrong type: ") + e.what());
  }
}

inline void reject_unknown(const nlohmann::json& j, const std::string& section, const std::vector<std::string>& allowed) {
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const auto& a : allowed) ok = ok || a == k;
    if (!ok) throw ConfigError(section + "." + k, "unknown key");
  }
}
}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
  using detail::get_or;
  RunConfig c;
  c.source = j;
  if (!j.is_object()) throw ConfigError("<root>", "expected a JSON object");
  detail::reject_unknown(j, "<root>", {"lattice", "model", "solver", "sweep", "confinement", "conductance", "correlators", "bands"});

  if (j.contains("lattice")) {
    const auto& l = j["lattice"];
    detail::reject_unknown(l, "lattice", {"geometry", "nx", "ny", "a_nm", "boundary"});
    try {
      c.lattice.geometry = parse_geometry(get_or<std::string>(l, "lattice", "geometry", "chain"));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError("lattice.geometry", e.what());
    }
    try {
      c.lattice.boundary = parse_boundary(get_or<std::string>(l, "lattice", "boundary", "periodic"));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError("lattice.boundary", e.what());
    }
    c.lattice.nx = get_or<int>(l, "lattice", "nx", c.lattice.nx);
    c.lattice.ny = get_or<int>(l, "lattice", "ny", c.lattice.geometry == Geometry::chain ? 1 : c.lattice.nx);
    c.lattice.a = get_or<double>(l, "lattice", "a_nm", c.lattice.a);
    if (c.lattice.nx < 2) throw ConfigError("lattice.nx", "must be >= 2");
    if (!(c.lattice.a > 0.0)) throw ConfigError("lattice.a_nm", "must be positive");
  }

  if (j.contains("model")) {
    const auto& m = j["model"];
    // Physical keys first, then dimensionless ones, which depend on t, S and a.
    static const std::vector<std::string> order{"t_meV",      "S",         "g_ueV",     "h_z_meV",   "h_x_meV",
                                                "mu_meV",     "V0_nm_meV", "lambda_per_nm", "beta_per_meV", "T_mK",
                                                "filling",    "gS_over_t", "hzS_over_t", "hxS_over_t", "hx_over_hz",
                                                "V0_over_at", "mu_over_t"};
    detail::reject_unknown(m, "model", [] {
      auto v = order;
      v.push_back("mu_site_meV");
      return v;
    }());
    for (const auto& key : order) {
      if (!m.contains(key)) continue;
      const auto& v = m[key];
      if (v.is_string() && v.get<std::string>() == "inf" && key == "beta_per_meV") {
        c.model.beta = InverseTemperature::zero_temperature();
        continue;
      }
      if (!v.is_number()) throw ConfigError("model." + key, "expected a number");
      if (key == "hx_over_hz") c.hx_over_hz = v.get<double>();
      try {
        apply_parameter(c.model, c.lattice.a, key, v.get<double>());
      } catch (const ConfigError&) {
        throw;
      } catch (const Error& e) {
        throw ConfigError("model." + key, e.what());
      }
    }
    c.model.mu_site = get_or<std::vector<double>>(m, "model", "mu_site_meV", {});
  }
  try {
    c.model.validate();
  } catch (const Error& e) {
    throw ConfigError("model", e.what());
  }

  if (j.contains("solver")) {
    const auto& s = j["solver"];
    detail::reject_unknown(s, "solver", {"kind", "alpha", "tolerance", "max_iterations", "restarts", "fock", "anderson_depth",
                                         "n_particles", "tune_mu", "guesses"});
    c.method = parse_method(get_or<std::string>(s, "solver", "kind", "hf"));
    c.solver.alpha = get_or<double>(s, "solver", "alpha", c.solver.alpha);
    c.solver.tolerance = get_or<double>(s, "solver", "tolerance", c.solver.tolerance);
    c.solver.max_iterations = get_or<int>(s, "solver", "max_iterations", c.solver.max_iterations);
    c.solver.restarts = get_or<int>(s, "solver", "restarts", c.solver.restarts);
    c.solver.fock = get_or<bool>(s, "solver", "fock", c.solver.fock);
    c.solver.anderson_depth = get_or<int>(s, "solver", "anderson_depth", c.solver.anderson_depth);
    if (s.contains("n_particles")) c.solver.n_particles = get_or<int>(s, "solver", "n_particles", 0);
    c.tune_mu = get_or<bool>(s, "solver", "tune_mu", false);
    if (s.contains("guesses")) {
      c.solver.guesses.clear();
      for (const auto& gname : get_or<std::vector<std::string>>(s, "solver", "guesses", {})) {
        try {
          c.solver.guesses.push_back(parse_initial_guess(gname));
        } catch (const Error& e) {
          throw ConfigError("solver.guesses", e.what());
        }
      }
    }
  }
  if (c.method == Method::fthfb) c.solver.kind = SolverKind::fthfb;
  if (c.method == Method::hf) c.solver.kind = SolverKind::hf;
  try {
    c.solver.validate();
  } catch (const Error& e) {
    throw ConfigError("solver", e.what());
  }

  if (j.contains("sweep")) {
    const auto& s = j["sweep"];
    detail::reject_unknown(s, "sweep", {"axes", "warm_start"});
    c.warm_start = get_or<bool>(s, "sweep", "warm_start", false);
    if (s.contains("axes")) {
      if (!s["axes"].is_array()) throw ConfigError("sweep.axes", "expected an array");
      for (std::size_t k = 0; k < s["axes"].size(); ++k) {
        const auto& a = s["axes"][k];
        const std::string key = "sweep.axes[" + std::to_string(k) + "]";
        detail::reject_unknown(a, key, {"name", "min", "max", "points", "scale"});
        SweepAxis ax;
        ax.name = get_or<std::string>(a, key, "name", "");
        if (!known_parameter(ax.name)) throw ConfigError(key + ".name", "unknown parameter '" + ax.name + "'");
        ax.min = get_or<double>(a, key, "min", 0.0);
        ax.max = get_or<double>(a, key, "max", ax.min);
        ax.points = get_or<int>(a, key, "points", 1);
        if (ax.points < 1) throw ConfigError(key + ".points", "must be >= 1");
        const auto scale = get_or<std::string>(a, key, "scale", "linear");
        if (scale == "linear") ax.scale = AxisScale::linear;
        else if (scale == "log") ax.scale = AxisScale::log;
        else throw ConfigError(key + ".scale", "expected linear or log");
        if (ax.scale == AxisScale::log && !(ax.min > 0.0 && ax.max > 0.0))
          throw ConfigError(key + ".min", "log axes need positive bounds");
        c.axes.push_back(ax);
      }
    }
  }

  if (j.contains("confinement")) {
    const auto& s = j["confinement"];
    detail::reject_unknown(s, "confinement", {"gS_over_t", "d", "eps_over_t", "start", "extra_electrons"});
    c.confinement.gS_over_t = get_or<std::vector<double>>(s, "confinement", "gS_over_t", c.confinement.gS_over_t);
    c.confinement.d = get_or<std::vector<int>>(s, "confinement", "d", {});
    c.confinement.fields.eps_over_t = get_or<double>(s, "confinement", "eps_over_t", 0.05);
    c.confinement.fields.start = get_or<int>(s, "confinement", "start", 5);
    c.confinement.fields.extra_electrons = get_or<int>(s, "confinement", "extra_electrons", 1);
  }

  if (j.contains("conductance")) {
    const auto& s = j["conductance"];
    detail::reject_unknown(s, "conductance",
                           {"T_reservoir_mK", "T_island_mK", "Gamma", "hzS_over_t", "window_meV", "step_meV"});
    c.conductance.T_reservoir_mK = get_or<std::vector<double>>(s, "conductance", "T_reservoir_mK", c.conductance.T_reservoir_mK);
    c.conductance.T_island_mK = get_or<double>(s, "conductance", "T_island_mK", c.conductance.T_island_mK);
    c.conductance.Gamma = get_or<double>(s, "conductance", "Gamma", c.conductance.Gamma);
    c.conductance.hzS_over_t = get_or<std::vector<double>>(s, "conductance", "hzS_over_t", {});
    c.conductance.window_meV = get_or<double>(s, "conductance", "window_meV", c.conductance.window_meV);
    c.conductance.step_meV = get_or<double>(s, "conductance", "step_meV", c.conductance.step_meV);
    if (!(c.conductance.step_meV > 0.0)) throw ConfigError("conductance.step_meV", "must be positive");
    for (double T : c.conductance.T_reservoir_mK)
      if (!(T > 0.0)) throw ConfigError("conductance.T_reservoir_mK", "temperatures must be positive");
    if (!(c.conductance.T_island_mK > 0.0)) throw ConfigError("conductance.T_island_mK", "must be positive");
    if (!(c.conductance.Gamma > 0.0)) throw ConfigError("conductance.Gamma", "must be positive");
  }

  if (j.contains("correlators")) {
    const auto& s = j["correlators"];
    detail::reject_unknown(s, "correlators", {"i0", "d_max"});
    c.correlators.i0 = get_or<int>(s, "correlators", "i0", -1);
    c.correlators.d_max = get_or<int>(s, "correlators", "d_max", -1);
  }

  if (j.contains("bands")) {
    const auto& s = j["bands"];
    detail::reject_unknown(s, "bands", {"resolution", "phi0", "fermi_points"});
    c.bands.resolution = get_or<int>(s, "bands", "resolution", 256);
    c.bands.phi0 = get_or<double>(s, "bands", "phi0", 1.0);
    c.bands.fermi_points = get_or<int>(s, "bands", "fermi_points", 200);
    if (c.bands.resolution < 1) throw ConfigError("bands.resolution", "must be >= 1");
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

/// Fully resolved configuration, for manifests.
inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["lattice"] = {{"geometry", to_string(c.lattice.geometry)}, {"nx", c.lattice.nx}, {"ny", c.lattice.ny},
                  {"a_nm", c.lattice.a}, {"boundary", to_string(c.lattice.boundary)}};
  j["model"] = to_json(c.model);
  j["regime"] = to_json(dimensionless_regime(c.model));
  nlohmann::json guesses = nlohmann::json::array();
  for (auto g : c.solver.guesses) guesses.push_back(to_string(g));
  j["solver"] = {{"kind", to_string(c.method)},
                 {"alpha", c.solver.alpha},
                 {"tolerance", c.solver.tolerance},
                 {"max_iterations", c.solver.max_iterations},
                 {"restarts", c.solver.restarts},
                 {"fock", c.solver.fock},
                 {"anderson_depth", c.solver.anderson_depth},
                 {"n_particles", c.solver.n_particles ? nlohmann::json(*c.solver.n_particles) : nlohmann::json(nullptr)},
                 {"tune_mu", c.tune_mu},
                 {"hx_over_hz", c.hx_over_hz ? nlohmann::json(*c.hx_over_hz) : nlohmann::json(nullptr)},
                 {"guesses", guesses},
                 {"seed", c.solver.seed}};
  nlohmann::json axes = nlohmann::json::array();
  for (const auto& a : c.axes)
    axes.push_back({{"name", a.name}, {"min", a.min}, {"max", a.max}, {"points", a.points},
                    {"scale", a.scale == AxisScale::linear ? "linear" : "log"}});
  j["sweep"] = {{"axes", axes}, {"warm_start", c.warm_start}};
  j["confinement"] = {{"gS_over_t", c.confinement.gS_over_t},
                      {"d", c.confinement.d},
                      {"eps_over_t", c.confinement.fields.eps_over_t},
                      {"start", c.confinement.fields.start},
                      {"extra_electrons", c.confinement.fields.extra_electrons}};
  j["conductance"] = {{"T_reservoir_mK", c.conductance.T_reservoir_mK}, {"T_island_mK", c.conductance.T_island_mK},
                      {"Gamma", c.conductance.Gamma},                   {"hzS_over_t", c.conductance.hzS_over_t},
                      {"window_meV", c.conductance.window_meV},         {"step_meV", c.conductance.step_meV}};
  j["correlators"] = {{"i0", c.correlators.i0}, {"d_max", c.correlators.d_max}};
  j["bands"] = {{"resolution", c.bands.resolution}, {"phi0", c.bands.phi0}, {"fermi_points", c.bands.fermi_points}};
  return j;
}

}  // namespace rjr
