// Acceptance run: one PASS/FAIL line per criterion. Tolerances are fixed here.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dense_oracle.hpp"
#include "rjr/app.hpp"
#include "rjr/bands.hpp"
#include "rjr/ed.hpp"
#include "rjr/meanfield.hpp"
#include "rjr/observables.hpp"
#include "rjr/transport.hpp"

using namespace rjr;
using Eigen::MatrixXd;

namespace {

// Device defaults used throughout.
constexpr double kT = 7.5;   // meV
constexpr double kS = 0.5;
constexpr double kA = 4.7;   // nm

// Pinned tolerances.
constexpr double kRegimeRelTol = 0.01;
constexpr double kNeelThreshold = 0.5;
constexpr double kTrivialThreshold = 0.1;
constexpr double kSpearmanThreshold = 0.9;
constexpr double kPairingBound = 1e-6;
constexpr double kOracleTol = 1e-10;
constexpr double kAnticommutatorTol = 1e-12;
constexpr double kHfEdRelGap = 0.10;
constexpr double kBandZeroTol = 1e-12;
constexpr double kVelocityRelTol = 1e-3;
constexpr double kRhoSpectrumTol = 1e-8;
constexpr double kUnitarityTol = 1e-8;
constexpr double kOmegaNoise = 1e-12;
constexpr int kOmegaBurnIn = 5;

struct Outcome {
  bool pass = false;
  bool known_failure = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

ModelParams device(double gS_over_t, double hzS_over_t, double V0_over_at) {
  ModelParams p;
  p.t = kT;
  p.S = kS;
  p.set_g(gS_over_t * p.t / p.S);
  p.h_z = hzS_over_t * p.t / p.S;
  p.h_x = 0.01 * p.t / p.S;
  p.V0 = V0_over_at * kA * p.t;
  return p;
}

double abs_nz(const MeanFieldState& st, const LatticeGraph& g) { return std::abs(neel_order(st.spins, g, kS).n_z); }

// Invariant audit over every converged mean-field state.
struct InvariantAudit {
  int states = 0;
  int failures = 0;
  double worst_rho = 0.0;     // distance of rho eigenvalues outside [0, 1]
  double worst_unitarity = 0.0;
  int omega_increases = 0;
  double worst_idempotence_ratio = 0.0;  // gap / tolerance
  std::vector<std::string> failed;

  void check(const std::string& label, const MeanFieldState& st, const LatticeGraph& g, const ModelParams& p,
             const SolverConfig& cfg, const std::optional<PinningPattern>& pin = std::nullopt) {
    if (!st.converged) return;
    ++states;
    const int N = g.size();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(st.rho, Eigen::EigenvaluesOnly);
    const double below = std::max(0.0, -es.eigenvalues().minCoeff());
    const double above = std::max(0.0, es.eigenvalues().maxCoeff() - 1.0);
    const double rho_dev = std::max(below, above);
    const double unit = (st.U * st.U.transpose() + st.V * st.V.transpose() - MatrixXd::Identity(N, N)).cwiseAbs().maxCoeff();
    int increases = 0;
    for (std::size_t k = kOmegaBurnIn + 1; k < st.omega_trace.size(); ++k) {
      const double prev = st.omega_trace[k - 1];
      if (st.omega_trace[k] > prev + kOmegaNoise * std::max(1.0, std::abs(prev))) ++increases;
    }
    const double idem = idempotence_gap(st, make_problem(g, p, pin), cfg) / cfg.tolerance;
    worst_rho = std::max(worst_rho, rho_dev);
    worst_unitarity = std::max(worst_unitarity, unit);
    omega_increases += increases;
    worst_idempotence_ratio = std::max(worst_idempotence_ratio, idem);
    const bool ok = rho_dev <= kRhoSpectrumTol && unit <= kUnitarityTol && increases == 0 && idem <= 2.0;
    if (!ok) {
      ++failures;
      if (failed.size() < 5) failed.push_back(label);
    }
  }
};

InvariantAudit audit;

// True when the flagged entries form one contiguous run that touches neither end.
bool interior_window(const std::vector<bool>& neel) {
  const auto first = std::find(neel.begin(), neel.end(), true);
  if (first == neel.end()) return false;
  const auto last = std::find(neel.rbegin(), neel.rend(), true).base() - 1;
  if (first == neel.begin() || last == neel.end() - 1) return false;
  return std::all_of(first, last + 1, [](bool b) { return b; });
}

std::string row_text(const std::vector<double>& h, const std::vector<double>& nz) {
  std::string s;
  for (std::size_t k = 0; k < h.size(); ++k) s += (k ? " " : "") + fmt(h[k], 3) + ":" + fmt(nz[k], 2);
  return s;
}

Outcome criterion1() {
  ModelParams p;
  p.t = kT;
  p.S = kS;
  p.g_ueV = 0.48;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = dimensionless_regime(p);
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Outcome o;
  o.pass = std::abs(r.gS_over_t - 3.2e-5) <= kRegimeRelTol * 3.2e-5 && dt < 1.0;
  o.detail = "gS/t = " + fmt(r.gS_over_t) + " (target 3.2e-05 +- 1%), " + fmt(dt, 2) + " s";
  return o;
}

Outcome criterion2() {
  const auto g = build_lattice(Geometry::chain, 43, 1, kA, Boundary::periodic);
  SolverConfig cfg;
  cfg.kind = SolverKind::hf;
  std::vector<double> hs, nz;
  std::vector<bool> neel;
  bool all_converged = true;
  double nz_neel = 0.0, nz_low = 1.0, nz_high = 1.0;
  for (int k = 0; k <= 10; ++k) {
    const double h = -0.5 + 0.05 * k;
    const auto p = device(0.5, h, 1.1);
    const auto st = solve(g, p, cfg);
    audit.check("C2 h=" + fmt(h, 3), st, g, p, cfg);
    all_converged = all_converged && st.converged;
    const double v = abs_nz(st, g);
    hs.push_back(h);
    nz.push_back(v);
    neel.push_back(v > kNeelThreshold);
    if (k == 0) nz_low = v;
    if (k == 5) nz_neel = v;
    if (k == 10) nz_high = v;
  }
  Outcome o;
  o.pass = all_converged && nz_neel > kNeelThreshold && nz_low < kTrivialThreshold && nz_high < kTrivialThreshold &&
           interior_window(neel);
  o.detail = "43-site ring, gS/t = 0.5: |n_z| at h_zS/t " + row_text(hs, nz) +
             (interior_window(neel) ? "; one interior Neel window" : "; no single interior window");
  return o;
}

struct RowResult {
  std::vector<double> nz;
  bool ok = true;
  int unconverged = 0;
};

RowResult tuned_row(const LatticeGraph& g, const std::vector<double>& hs, double gS_over_t, double V0_over_at,
                    double beta, const std::string& label) {
  RowResult r;
  SolverConfig cfg;
  for (double h : hs) {
    auto p = device(gS_over_t, h, V0_over_at);
    p.beta = InverseTemperature::from_beta(beta);
    try {
      const auto res = tune_chemical_potential(g, p, cfg, g.size() / 2.0);
      p.mu = res.mu;
      SolverConfig used = cfg;
      used.kind = SolverKind::fthfb;
      audit.check(label + " h=" + fmt(h, 3), res.state, g, p, used);
      if (!res.state.converged) ++r.unconverged;
      r.nz.push_back(abs_nz(res.state, g));
    } catch (const Error&) {
      r.ok = false;
      r.nz.push_back(std::nan(""));
    }
  }
  return r;
}

Outcome criterion3() {
  const std::vector<double> hs{-0.5, -0.4, -0.3, -0.25, -0.2, -0.1, 0.0};
  Outcome o;
  o.pass = true;
  const auto t0 = std::chrono::steady_clock::now();
  for (auto [geo, L, name] : {std::tuple{Geometry::square, 10, "10x10 square"}, std::tuple{Geometry::honeycomb, 6, "72-site honeycomb"}}) {
    const auto g = build_lattice(geo, L, L, kA, Boundary::periodic);
    const auto r = tuned_row(g, hs, 0.5, 1.1, 1e3, std::string("C3 ") + name);
    std::vector<bool> neel;
    for (double v : r.nz) neel.push_back(v > kNeelThreshold);
    const bool ok = r.ok && r.unconverged == 0 && r.nz[3] > kNeelThreshold && r.nz.front() < kTrivialThreshold &&
                    r.nz.back() < kTrivialThreshold && interior_window(neel);
    o.pass = o.pass && ok;
    o.detail += std::string(o.detail.empty() ? "" : "; ") + name + " " + row_text(hs, r.nz);
    if (r.unconverged) o.detail += " (" + std::to_string(r.unconverged) + " unconverged)";
  }
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.pass = o.pass && dt < 3600.0;
  o.detail += "; beta = 1e3, " + fmt(dt, 3) + " s";
  return o;
}

Outcome criterion4() {
  const int N = 44;
  const auto g = build_lattice(Geometry::chain, N, 1, kA, Boundary::periodic);
  StaticPotentialConfig sc;
  sc.eps_over_t = 0.05;
  sc.start = 5;
  sc.extra_electrons = 1;
  const auto ds = default_separations(N);
  auto curve = [&](double gs, double v0) {
    const auto p = device(gs, -0.4, v0);
    SolverConfig cfg;
    const auto rows = static_potential(g, p, cfg, ds, sc);
    std::vector<double> x, y;
    for (const auto& r : rows) {
      x.push_back(r.d);
      y.push_back(r.V);
      SolverConfig used = cfg;
      used.kind = SolverKind::hf;
      used.n_particles = N / 2 + sc.extra_electrons;
      audit.check("C4 gS/t=" + fmt(gs) + " V0=" + fmt(v0) + " d=" + std::to_string(r.d), r.state, g, p, used,
                  PinningPattern{sc.eps_over_t * p.t, sc.start, r.d});
    }
    return spearman(x, y);
  };
  const double dec0 = curve(0.8, 0.0), con0 = curve(1.0, 0.0);
  const double dec1 = curve(0.8, 3.6), con1 = curve(1.0, 3.6);
  const bool bare = dec0 < -kSpearmanThreshold && con0 > kSpearmanThreshold;
  const bool coulomb = dec1 < -kSpearmanThreshold && con1 > kSpearmanThreshold;

  // Charge bound to one wall of a pinned pair, against the unpinned background.
  const auto p = device(1.0, -0.4, 0.0);
  SolverConfig bg_cfg;
  bg_cfg.kind = SolverKind::hf;
  bg_cfg.n_particles = N / 2;
  const auto bg = solve(g, p, bg_cfg);
  const auto ps = pinned_ground_state(g, p, SolverConfig{}, PinningPattern{0.05 * p.t, 5, 15}, N / 2 + 1);
  const auto q = fractional_density_check(ps.state.rho, bg.rho, 5, 15, 4);

  Outcome o;
  o.pass = bare && coulomb;
  o.known_failure = bare && !coulomb && dec1 < -kSpearmanThreshold;
  o.detail = "Spearman V0=0: gS/t 0.8 -> " + fmt(dec0) + ", 1.0 -> " + fmt(con0) + "; V0/(at)=3.6: 0.8 -> " +
             fmt(dec1) + ", 1.0 -> " + fmt(con1) + "; wall charge " + fmt(q.q_left, 3) + "/" + fmt(q.q_right, 3);
  if (o.known_failure) o.detail += " [known: no confined gS/t found with Coulomb]";
  return o;
}

double neel_area_grid(const LatticeGraph& g, double beta, double hxS_over_t, int& unconverged, const std::string& label) {
  int hit = 0, total = 0;
  SolverConfig cfg;
  cfg.tolerance = 1e-8;
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 11; ++j) {
      const double gs = 0.04 + 0.01 * i, h = -0.1 + 0.01 * j;
      auto p = device(gs, h, 1.1);
      p.h_x = hxS_over_t * p.t / p.S;
      p.beta = InverseTemperature::from_beta(beta);
      try {
        const auto res = tune_chemical_potential(g, p, cfg, g.size() / 2.0);
        p.mu = res.mu;
        SolverConfig used = cfg;
        used.kind = SolverKind::fthfb;
        audit.check(label + " gS/t=" + fmt(gs) + " h=" + fmt(h), res.state, g, p, used);
        if (!res.state.converged) ++unconverged;
        ++total;
        if (abs_nz(res.state, g) > kNeelThreshold) ++hit;
      } catch (const Error&) {
        ++unconverged;
      }
    }
  return total ? static_cast<double>(hit) / total : 0.0;
}

Outcome criterion5() {
  const auto g = build_lattice(Geometry::square, 6, 6, kA, Boundary::periodic);
  int u_cold = 0, u_hot = 0, u_hx = 0;
  const double cold = neel_area_grid(g, 1e3, 0.01, u_cold, "C5 beta=1e3");
  const double hot = neel_area_grid(g, 10.0, 0.01, u_hot, "C5 beta=10");
  const double strong_hx = neel_area_grid(g, 1e3, 0.05, u_hx, "C5 hx=0.05");
  Outcome o;
  o.pass = hot < cold && strong_hx < cold && u_cold + u_hot + u_hx == 0;
  o.detail = "6x6 square, 9x11 grid, Neel area: beta 1e3 " + fmt(cold) + " vs beta 10 " + fmt(hot) +
             "; h_xS/t 0.01 " + fmt(cold) + " vs 0.05 " + fmt(strong_hx) +
             "; unconverged " + std::to_string(u_cold + u_hot + u_hx);
  return o;
}

Outcome criterion6() {
  const auto g = build_lattice(Geometry::square, 10, 10, kA, Boundary::periodic);
  SolverConfig cfg;
  cfg.tolerance = 1e-8;
  cfg.pairing_seed = 1e-3;
  const std::vector<double> mus{-100.0, 0.0, 100.0, 250.0, 400.0};
  double worst = 0.0;
  int converged = 0, total = 0;
  bool every_beta = true;
  for (double beta : {1e3, 10.0}) {
    int here = 0;
    for (double mu : mus) {
      auto p = device(0.5, -0.25, 3.6);
      p.beta = InverseTemperature::from_beta(beta);
      p.mu = mu;
      const auto st = solve(g, p, cfg);
      ++total;
      audit.check("C6 beta=" + fmt(beta) + " mu=" + fmt(mu), st, g, p, cfg);
      if (!st.converged) continue;
      ++converged;
      ++here;
      worst = std::max(worst, pairing_average(st.K));
    }
    every_beta = every_beta && here > 0;
  }
  Outcome o;
  o.pass = every_beta && worst < kPairingBound;
  o.detail = "10x10 square, mu in {-100..400} meV, beta in {1e3, 10}: max K~ " + fmt(worst, 3) + " over " +
             std::to_string(converged) + "/" + std::to_string(total) + " converged points";
  return o;
}

Outcome criterion7() {
  const auto t0 = std::chrono::steady_clock::now();
  const double oracle = std::max(testing::max_oracle_deviation(1), testing::max_oracle_deviation(2));
  double anti = 0.0;
  for (int N = 1; N <= 3; ++N) anti = std::max(anti, testing::max_anticommutator_error(N));
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Outcome o;
  o.pass = oracle <= kOracleTol && anti <= kAnticommutatorTol && dt < 10.0;
  o.detail = "max |ED - dense| " + fmt(oracle, 3) + " (N <= 2), anticommutator error " + fmt(anti, 3) + " (N <= 3), " +
             fmt(dt, 2) + " s";
  return o;
}

Outcome criterion8() {
  const auto g = build_lattice(Geometry::chain, 4, 1, kA, Boundary::periodic);
  const auto p = device(0.5, -0.25, 1.1);
  SolverConfig cfg;
  cfg.kind = SolverKind::hf;
  cfg.n_particles = 2;
  const auto st = solve(g, p, cfg);
  const auto spec = compute_spectrum(g, p, std::nullopt, {2});
  const auto ens = thermal_ensemble(spec, InverseTemperature::zero_temperature(), 0.0);
  const double e_ed = ground_state(spec, 2).energy;
  bool signs = true;
  for (int j = 1; j < 4; ++j) {
    const double hf = st.spins(2, 0) * st.spins(2, j);
    const double ed = ens.expectation(ops::spin_zz(0, j));
    signs = signs && hf * ed > 0.0;
  }
  const double rel = (st.energy - e_ed) / std::abs(e_ed);
  Outcome o;
  o.pass = st.converged && signs && st.energy >= e_ed - 1e-9 * std::abs(e_ed) && rel < kHfEdRelGap;
  o.detail = "E_HF " + fmt(st.energy, 8) + " >= E_ED " + fmt(e_ed, 8) + ", relative gap " + fmt(rel, 3) +
             (signs ? ", staggered signs match" : ", staggered signs differ");
  return o;
}

Outcome criterion9() {
  const double t = kT, a = kA;
  const double eK = std::abs(honeycomb_bands(honeycomb_K(a), t, a).second);
  double vf_err = 0.0;
  for (double theta : {0.0, 0.5, 1.0})
    vf_err = std::max(vf_err, std::abs(honeycomb_dirac_slope(t, a, theta, 1e-4 / a) / (1.5 * t * a) - 1.0));
  const double chain_err = std::abs(chain_fermi_slope(t, a, 1e-4 / a) / (2.0 * t * a) - 1.0);
  const double g = 0.5 * t / kS, phi0 = 0.7;
  const int n = 500;
  const double gap = 2.0 * gapped_square_min(t, g, kS, phi0, a, n);
  const double expected = 2.0 * g * kS * phi0;
  // Largest rise of the gap function across one grid cell next to its minimum.
  const double cell = std::numbers::pi / n;
  const double resolution = 2.0 * (std::hypot(g * kS * phi0, 4.0 * t * std::sin(cell)) - g * kS * phi0);
  const auto fs = fermi_surface_points(200, a);
  int nested = 0;
  for (const auto& k : fs) nested += nesting_check(k, t, a, 1e-9 * t) ? 1 : 0;
  Outcome o;
  o.pass = eK < kBandZeroTol && vf_err < kVelocityRelTol && chain_err < kVelocityRelTol &&
           std::abs(gap - expected) <= resolution && nested == 200;
  o.detail = "|E(K)| " + fmt(eK, 3) + ", v_F rel err " + fmt(vf_err, 3) + " (honeycomb) " + fmt(chain_err, 3) +
             " (chain), gap " + fmt(gap, 8) + " vs 2gS|phi0| " + fmt(expected, 8) + " (resolution " +
             fmt(resolution, 3) + "), nesting " + std::to_string(nested) + "/200";
  return o;
}

Outcome criterion10() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto g = build_lattice(Geometry::square, 2, 2, kA, Boundary::open);
  auto params = [](double hzS_over_t) {
    ModelParams p;
    p.t = kT;
    p.S = kS;
    p.V0 = 123.0;
    p.set_g(4e-5 * p.t / p.S);
    p.h_z = hzS_over_t * p.t / p.S;
    p.h_x = 0.01 * std::abs(p.h_z);
    return p;
  };
  ProbeSetup probe = column_probes(g, 1.0, 10.0, 0.01);

  // Reservoir-temperature series.
  const double step15 = 1e-4;
  const auto spec = compute_spectrum(g, params(-1e-5), std::nullopt, {}, probe_sites(probe));
  const auto grid15 = addition_windows(addition_energies(spec), 0.03, step15);
  std::vector<std::vector<double>> positions, widths;
  bool nonneg = true;
  for (double T : {10.0, 30.0, 100.0}) {
    probe.T_reservoir_mK = T;
    const auto c = conductance_curve(spec, probe, grid15);
    for (std::size_t k = 0; k < c.mu.size(); ++k) nonneg = nonneg && c.G_raw[k] >= 0.0 && c.G_norm[k] >= 0.0;
    positions.push_back(peak_positions(c));
    widths.push_back(c.half_widths);
  }
  bool same_peaks = !positions[0].empty();
  bool widening = true;
  for (std::size_t s = 1; s < positions.size(); ++s) {
    same_peaks = same_peaks && !peak_sets_differ(positions[0], positions[s], 3.0 * step15);
    if (widths[s].size() != widths[s - 1].size()) widening = false;
    else
      for (std::size_t k = 0; k < widths[s].size(); ++k) widening = widening && widths[s][k] > widths[s - 1][k];
  }

  // Field series: one field inside the Neel window, two outside.
  probe.T_reservoir_mK = 10.0;
  const double step16 = 5e-5;
  const std::vector<double> fields{-6e-5, -2e-5, 1e-5};
  std::vector<ManyBodySpectrum> specs;
  std::vector<double> adds;
  for (double h : fields) {
    specs.push_back(compute_spectrum(g, params(h), std::nullopt, {}, probe_sites(probe)));
    for (double x : addition_energies(specs.back())) adds.push_back(x);
  }
  const auto grid16 = addition_windows(adds, 0.01, step16);
  std::vector<std::vector<double>> peaks16;
  for (const auto& s : specs) {
    const auto c = conductance_curve(s, probe, grid16);
    for (std::size_t k = 0; k < c.mu.size(); ++k) nonneg = nonneg && c.G_raw[k] >= 0.0;
    peaks16.push_back(peak_positions(c));
  }
  const bool differs = peak_sets_differ(peaks16[1], peaks16[0], 3.0 * step16) &&
                       peak_sets_differ(peaks16[1], peaks16[2], 3.0 * step16);
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Outcome o;
  o.pass = nonneg && same_peaks && widening && differs && dt < 300.0;
  std::string w;
  for (std::size_t s = 0; s < widths.size(); ++s) w += (s ? "/" : "") + (widths[s].empty() ? "-" : fmt(widths[s][0], 2));
  o.detail = std::to_string(positions[0].size()) + " peaks, T_r-independent " + (same_peaks ? "yes" : "no") +
             ", first half-width " + w + " meV at T_r 10/30/100 mK; in-window field differs from both out-of-window " +
             (differs ? "yes" : "no") + " (" + std::to_string(peaks16[0].size()) + "/" + std::to_string(peaks16[1].size()) +
             "/" + std::to_string(peaks16[2].size()) + " peaks), " + fmt(dt, 3) + " s";
  return o;
}

Outcome criterion11() {
  const auto g = build_lattice(Geometry::square, 2, 2, kA, Boundary::open);
  std::vector<double> gs, hs;
  for (int i = 1; i <= 8; ++i) gs.push_back(0.5 * i);
  for (int j = 0; j < 10; ++j) hs.push_back(-4.0 + 0.4 * j);
  hs.push_back(-0.05);
  const std::size_t ng = gs.size(), nh = hs.size();
  std::vector<int> plateau(ng * nh);
  std::vector<bool> neel(ng * nh);
  bool plateaus_clean = true;
  for (std::size_t i = 0; i < ng; ++i)
    for (std::size_t j = 0; j < nh; ++j) {
      ModelParams p;
      p.t = kT;
      p.S = kS;
      p.V0 = 123.0;
      p.set_g(gs[i] * p.t / p.S);
      p.h_z = hs[j] * p.t / p.S;
      p.h_x = 0.01 * std::abs(p.h_z);
      p.mu = 0.91 * p.t;
      const auto spec = compute_spectrum(g, p);
      const auto d = ed_site_data(thermal_ensemble(spec, InverseTemperature::from_mK(10.0), 0.0));
      const double nz = std::abs(neel_order(d, g, p.S).n_z);
      plateau[i * nh + j] = static_cast<int>(std::lround(d.total_n));
      plateaus_clean = plateaus_clean && std::abs(d.total_n - std::round(d.total_n)) < 0.05;
      neel[i * nh + j] = nz > kNeelThreshold;
    }
  // Neighbouring trivial and Neel points on different plateaus trace the separating plateau-boundary contour.
  // Class changes inside a plateau (the polarized state at small |h_z| on n = 2) are reported only.
  int boundary_pairs = 0, class_changes_inside_plateau = 0;
  for (std::size_t i = 0; i < ng; ++i)
    for (std::size_t j = 0; j < nh; ++j)
      for (auto [di, dj] : {std::pair{1, 0}, std::pair{0, 1}}) {
        const std::size_t i2 = i + di, j2 = j + dj;
        if (i2 >= ng || j2 >= nh) continue;
        const std::size_t a = i * nh + j, b = i2 * nh + j2;
        if (neel[a] == neel[b]) continue;
        if (plateau[a] != plateau[b]) ++boundary_pairs;
        else ++class_changes_inside_plateau;
      }
  std::vector<int> levels(plateau);
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  std::string lv;
  for (int n : levels) lv += (lv.empty() ? "" : ",") + std::to_string(n);
  Outcome o;
  o.pass = plateaus_clean && levels.size() >= 2 && boundary_pairs > 0;
  o.detail = "2x2 at 10 mK, mu/t = 0.91: plateaus n = {" + lv + "}, " + std::to_string(boundary_pairs) +
             " class changes on plateau boundaries, " + std::to_string(class_changes_inside_plateau) +
             " inside a plateau (not required)";
  return o;
}

Outcome criterion12() {
  Outcome o;
  o.pass = audit.states > 0 && audit.failures == 0;
  o.detail = std::to_string(audit.states) + " converged states: rho spectrum excess " + fmt(audit.worst_rho, 3) +
             ", |UU^T + VV^T - 1| " + fmt(audit.worst_unitarity, 3) + ", Omega increases " +
             std::to_string(audit.omega_increases) + ", idempotence/tolerance " + fmt(audit.worst_idempotence_ratio, 3);
  for (const auto& f : audit.failed) o.detail += "; failed " + f;
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"regime arithmetic", criterion1},       {"two phases, chain", criterion2},
      {"two phases, 2D", criterion3},          {"confinement classes", criterion4},
      {"thermal and transverse restoration", criterion5},
      {"pairing nullity", criterion6},         {"ED vs dense oracle", criterion7},
      {"HF vs ED", criterion8},                {"band structure", criterion9},
      {"conductance", criterion10},            {"charge profile", criterion11},
      {"mean-field invariants", criterion12}};
  int unexpected = 0, known = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) (o.known_failure ? known : unexpected) += 1;
    std::printf("%s %2zu %-36s %s [%.1f s]\n", o.pass ? "PASS" : (o.known_failure ? "FAIL (known)" : "FAIL"), k + 1,
                criteria[k].first.c_str(), o.detail.c_str(), dt);
    std::fflush(stdout);
  }
  std::printf("%zu criteria: %zu pass, %d known failure(s), %d unexpected failure(s)\n", criteria.size(),
              criteria.size() - known - unexpected, known, unexpected);
  return unexpected == 0 ? 0 : 1;
}
