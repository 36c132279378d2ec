#pragma once

// Subcommands behind the rjr command-line tool. Each writes its tables and a
// manifest into the output directory and returns the process exit code.

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rjr/bands.hpp"
#include "rjr/config.hpp"
#include "rjr/io.hpp"
#include "rjr/observables.hpp"
#include "rjr/sweep.hpp"
#include "rjr/transport.hpp"

namespace rjr {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int config_error = 1;
inline constexpr int not_converged = 2;
}  // namespace exit_code

/// Default separations for the static potential: odd d from 3 to N/2 - 1.
inline std::vector<int> default_separations(int N) {
  std::vector<int> d;
  for (int k = 3; k <= N / 2 - 1; k += 2) d.push_back(k);
  return d;
}

/// Monotonicity class of a V(d) curve from its Spearman coefficient.
inline std::string confinement_verdict(double rho) {
  if (rho > 0.9) return "confined";
  if (rho < -0.9) return "deconfined";
  return "undetermined";
}

struct ConfinementCurve {
  double gS_over_t = 0.0;
  std::vector<StaticPotentialRow> rows;
  double spearman = 0.0;
  std::string verdict;
};

inline std::vector<ConfinementCurve> run_confinement(const RunConfig& cfg) {
  const LatticeGraph g = cfg.lattice.build();
  const auto d = cfg.confinement.d.empty() ? default_separations(g.size()) : cfg.confinement.d;
  if (d.size() < 2) throw ConfigError("confinement.d", "need at least two separations");
  std::vector<ConfinementCurve> out;
  for (double gs : cfg.confinement.gS_over_t) {
    ModelParams p = cfg.model;
    p.set_g(gs * p.t / p.S);
    ConfinementCurve c;
    c.gS_over_t = gs;
    c.rows = static_potential(g, p, cfg.solver, d, cfg.confinement.fields);
    std::vector<double> x, y;
    for (const auto& r : c.rows) {
      x.push_back(r.d);
      y.push_back(r.V);
    }
    c.spearman = spearman(x, y);
    c.verdict = confinement_verdict(c.spearman);
    out.push_back(std::move(c));
  }
  return out;
}

/// mu grid: windows of +- half_width around each addition energy, merged and sorted.
inline std::vector<double> addition_windows(const std::vector<double>& addition, double half_width, double step) {
  std::vector<double> grid;
  const int k = static_cast<int>(std::ceil(half_width / step));
  for (double a : addition)
    for (int i = -k; i <= k; ++i) grid.push_back(a + i * step);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end(), [step](double x, double y) { return std::abs(x - y) < 1e-3 * step; }),
             grid.end());
  return grid;
}

struct ConductanceRun {
  double hzS_over_t = 0.0;
  double T_reservoir_mK = 0.0;
  std::vector<double> addition;
  ConductanceCurve curve;
};

/// Conductance curves for every (h_z, T_r) pair. Each h_z gets one spectrum and one
/// mu grid built from the addition energies of the first listed field, so curves of
/// different fields share the grid.
inline std::vector<ConductanceRun> run_conductance(const RunConfig& cfg) {
  const LatticeGraph g = cfg.lattice.build();
  const auto& cs = cfg.conductance;
  ProbeSetup probe = column_probes(g, cs.Gamma, cs.T_reservoir_mK.front(), cs.T_island_mK);
  std::vector<double> fields = cs.hzS_over_t;
  if (fields.empty()) fields.push_back(cfg.model.h_z * cfg.model.S / cfg.model.t);
  std::vector<double> grid;
  std::vector<ConductanceRun> out;
  for (double h : fields) {
    ModelParams p = cfg.model;
    p.h_z = h * p.t / p.S;
    if (cfg.hx_over_hz) p.h_x = *cfg.hx_over_hz * std::abs(p.h_z);
    const auto spec = compute_spectrum(g, p, std::nullopt, {}, probe_sites(probe));
    const auto add = addition_energies(spec);
    if (grid.empty()) {
      // Widen each window so shifted peaks of the other fields stay inside it.
      grid = addition_windows(add, cs.window_meV, cs.step_meV);
    }
    for (double T : cs.T_reservoir_mK) {
      probe.T_reservoir_mK = T;
      ConductanceRun r;
      r.hzS_over_t = h;
      r.T_reservoir_mK = T;
      r.addition = add;
      r.curve = conductance_curve(spec, probe, grid);
      r.curve.h_z = p.h_z;
      r.curve.metadata["hzS_over_t"] = h;
      r.curve.metadata["h_z_meV"] = p.h_z;
      r.curve.metadata["h_x_meV"] = p.h_x;
      r.curve.metadata["addition_energies_meV"] = add;
      r.curve.metadata["peak_mu_meV"] = peak_positions(r.curve);
      r.curve.metadata["half_widths_meV"] = r.curve.half_widths;
      out.push_back(std::move(r));
    }
  }
  return out;
}

struct CorrelatorRun {
  int i0 = 0;
  std::vector<double> values;  // d = 0..d_max
  std::optional<CdwFit> fit;
  ObservableReport report;
  bool converged = true;
};

inline CorrelatorRun run_correlators(const RunConfig& cfg) {
  const LatticeGraph g = cfg.lattice.build();
  const int N = g.size();
  CorrelatorRun r;
  r.i0 = cfg.correlators.i0 >= 0 ? cfg.correlators.i0 : N / 2;
  if (r.i0 >= N) throw ConfigError("correlators.i0", "outside the lattice");
  const int d_max = cfg.correlators.d_max >= 0
                        ? cfg.correlators.d_max
                        : (g.boundary == Boundary::periodic ? N / 2 : N - 1 - r.i0);
  if (cfg.method == Method::ed) {
    const auto spec = compute_spectrum(g, cfg.model);
    const auto ens = thermal_ensemble(spec, cfg.model.beta, 0.0);
    r.values = correlator_profile(ens, g, r.i0, d_max);
    r.report = report(ed_site_data(ens), g, cfg.model.S);
  } else {
    const auto st = solve(g, cfg.model, cfg.solver);
    r.values = correlator_profile(st.rho, g, r.i0, d_max);
    r.report = report(st, g, cfg.model.S);
    r.converged = st.converged;
  }
  if (d_max >= 8) {
    std::vector<double> d, c;
    for (int k = 1; k <= d_max; ++k) {
      d.push_back(k);
      c.push_back(r.values[static_cast<std::size_t>(k)]);
    }
    r.fit = cdw_fit(d, c);
  }
  return r;
}

namespace detail {
inline std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ";" : "") + format_double(v[k]);
  return s;
}
}  // namespace detail

/// Runs `command` with `cfg`; `log` receives a short human-readable summary.
inline int run_command(const std::string& command, RunConfig cfg, const RunOptions& opt, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.solver.seed = opt.seed;
  std::filesystem::create_directories(opt.out_dir);
  std::vector<std::string> outputs;
  bool all_converged = true;
  auto path = [&](const std::string& name) {
    outputs.push_back(name);
    return opt.out_dir / name;
  };

  if (command == "regime") {
    const auto r = dimensionless_regime(cfg.model);
    std::ostringstream line;
    line << "gS/t = " << format_double(r.gS_over_t) << ", h_zS/t = " << format_double(r.hzS_over_t)
         << ", h_xS/t = " << format_double(r.hxS_over_t) << ", detuning_ok = " << (r.detuning_ok ? "yes" : "no")
         << ", neel_window_hint = " << (r.neel_window_hint ? "yes" : "no");
    log << line.str() << "\n";
    write_json(path("regime.json"), to_json(r));
  } else if (command == "phase-diagram" || command == "charge-profile") {
    const auto s = run_sweep(cfg, opt.workers);
    const std::string stem = command == "phase-diagram" ? "phase_diagram" : "charge_profile";
    sweep_table(s).write(path(stem + ".csv"));
    write_json(path(stem + ".json"), sweep_json(s));
    std::size_t failed = 0;
    for (const auto& p : s.points) {
      all_converged = all_converged && p.ok && p.converged;
      failed += p.ok ? 0 : 1;
    }
    log << command << ": " << s.points.size() << " points, Neel area (|n_z| > 0.5) = " << format_double(neel_area(s))
        << ", failed = " << failed << "\n";
  } else if (command == "confinement") {
    const auto curves = run_confinement(cfg);
    CsvTable t({"gS_over_t", "d", "energy_meV", "V_meV", "converged", "walls_formed", "n_z"});
    nlohmann::json j = nlohmann::json::array();
    for (const auto& c : curves) {
      for (const auto& r : c.rows) {
        t.add({format_double(c.gS_over_t), std::to_string(r.d), format_double(r.energy), format_double(r.V),
               r.converged ? "1" : "0", r.walls_formed ? "1" : "0", format_double(r.n_z)});
        all_converged = all_converged && r.converged;
      }
      j.push_back({{"gS_over_t", c.gS_over_t}, {"spearman", c.spearman}, {"verdict", c.verdict}});
      log << "gS/t = " << format_double(c.gS_over_t) << ": Spearman " << format_double(c.spearman) << " -> " << c.verdict
          << "\n";
    }
    t.write(path("confinement.csv"));
    write_json(path("confinement.json"), j);
  } else if (command == "conductance") {
    const auto runs = run_conductance(cfg);
    CsvTable t({"hzS_over_t", "T_reservoir_mK", "mu_meV", "G_raw", "G_normalized", "peak"});
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : runs) {
      std::vector<bool> is_peak(r.curve.mu.size(), false);
      for (int p : r.curve.peaks) is_peak[static_cast<std::size_t>(p)] = true;
      for (std::size_t k = 0; k < r.curve.mu.size(); ++k)
        t.add({format_double(r.hzS_over_t), format_double(r.T_reservoir_mK), format_double(r.curve.mu[k]),
               format_double(r.curve.G_raw[k]), format_double(r.curve.G_norm[k]), is_peak[k] ? "1" : "0"});
      j.push_back(r.curve.metadata);
      log << "h_zS/t = " << format_double(r.hzS_over_t) << ", T_r = " << format_double(r.T_reservoir_mK)
          << " mK: peaks at " << detail::join(peak_positions(r.curve)) << " meV\n";
    }
    t.write(path("conductance.csv"));
    write_json(path("conductance.json"), j);
  } else if (command == "bands") {
    const double t = cfg.model.t, a = cfg.lattice.a;
    const auto grid = dispersion_grid(cfg.lattice.geometry, t, a, cfg.bands.resolution);
    CsvTable bt({"k_x", "k_y", "eps_lower", "eps_upper"});
    for (std::size_t k = 0; k < grid.k.size(); ++k)
      bt.add({format_double(grid.k[k].kx), format_double(grid.k[k].ky), format_double(grid.lower[k]),
              format_double(grid.upper[k])});
    bt.write(path("bands.csv"));
    CsvTable ft({"k_x", "k_y"});
    int nested = 0;
    const auto fs = fermi_surface_points(cfg.bands.fermi_points, a);
    for (const auto& k : fs) {
      ft.add({format_double(k.kx), format_double(k.ky)});
      nested += nesting_check(k, t, a, 1e-9 * t) ? 1 : 0;
    }
    ft.write(path("fermi_surface.csv"));
    const double vf_honeycomb = honeycomb_dirac_slope(t, a, 0.0, 1e-4 / a);
    const double gap = 2.0 * gapped_square_min(t, cfg.model.g(), cfg.model.S, cfg.bands.phi0, a, 500);
    nlohmann::json j{{"honeycomb_K_energy_meV", honeycomb_bands(honeycomb_K(a), t, a).second},
                     {"honeycomb_vF_numeric", vf_honeycomb},
                     {"honeycomb_vF_expected", 1.5 * t * a},
                     {"chain_vF_numeric", chain_fermi_slope(t, a, 1e-4 / a)},
                     {"chain_vF_expected", 2.0 * t * a},
                     {"square_gap_numeric_meV", gap},
                     {"square_gap_expected_meV", 2.0 * cfg.model.g() * cfg.model.S * std::abs(cfg.bands.phi0)},
                     {"nesting_points", fs.size()},
                     {"nesting_passed", nested}};
    write_json(path("bands.json"), j);
    log << "bands: " << grid.k.size() << " k-points, nesting " << nested << "/" << fs.size()
        << ", honeycomb v_F " << format_double(vf_honeycomb) << " (3ta/2 = " << format_double(1.5 * t * a) << ")\n";
  } else if (command == "correlators") {
    const auto r = run_correlators(cfg);
    all_converged = r.converged;
    CsvTable t({"d", "correlator"});
    for (std::size_t d = 0; d < r.values.size(); ++d) t.add({std::to_string(d), format_double(r.values[d])});
    t.write(path("correlators.csv"));
    nlohmann::json j{{"i0", r.i0}, {"observables", to_json(r.report)}};
    if (r.fit) {
      const auto& f = *r.fit;
      j["oscillatory_fit"] = {{"rho0", f.rho0}, {"A", f.A}, {"B", f.B}, {"delta", f.delta}, {"phi", f.phi},
                              {"mse", f.mse}, {"converged", f.converged}};
      j["exponential_fit"] = {{"C", f.exp_C}, {"gamma", f.exp_gamma}, {"mse", f.exp_mse}, {"converged", f.exp_converged}};
      log << "correlators: oscillatory mse " << format_double(f.mse) << ", exponential mse " << format_double(f.exp_mse)
          << "\n";
    }
    write_json(path("correlators.json"), j);
  } else {
    throw ConfigError("<command>", "unknown subcommand '" + command + "'");
  }

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json(opt.out_dir / "manifest.json", manifest(command, cfg, opt, wall, outputs));
  if (opt.strict && !all_converged) {
    log << "strict mode: at least one solve did not converge\n";
    return exit_code::not_converged;
  }
  return exit_code::ok;
}

}  // namespace rjr
