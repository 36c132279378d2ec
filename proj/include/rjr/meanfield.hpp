#pragma once

// Hartree-Fock and finite-temperature Hartree-Fock-Bogoliubov solvers with
// classical nuclear-spin mean fields.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rjr/common.hpp"
#include "rjr/lattice.hpp"
#include "rjr/model.hpp"

namespace rjr {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using SpinField = Eigen::Matrix3Xd;  // column i = <I_i>

enum class SolverKind { hf, fthfb };
enum class InitialGuess { staggered, uniform, random };

inline std::string to_string(SolverKind k) { return k == SolverKind::hf ? "hf" : "fthfb"; }
inline std::string to_string(InitialGuess g) {
  switch (g) {
    case InitialGuess::staggered: return "staggered";
    case InitialGuess::uniform: return "uniform";
    case InitialGuess::random: return "random";
  }
  return "?";
}
inline InitialGuess parse_initial_guess(const std::string& s) {
  if (s == "staggered") return InitialGuess::staggered;
  if (s == "uniform") return InitialGuess::uniform;
  if (s == "random") return InitialGuess::random;
  throw Error("unknown initial guess '" + s + "'");
}

/// `hf` is the zero-temperature canonical solver at fixed particle number;
/// `fthfb` is grand canonical at the model's beta and mu, with pairing.
struct SolverConfig {
  SolverKind kind = SolverKind::fthfb;
  double alpha = 0.5;
  double tolerance = 1e-10;
  int max_iterations = 5000;
  int restarts = 3;
  std::uint64_t seed = 1;
  std::vector<InitialGuess> guesses{InitialGuess::staggered, InitialGuess::uniform, InitialGuess::random};
  bool fock = true;
  int anderson_depth = 6;           // 0 gives plain linear mixing
  double pairing_seed = 1e-3;       // initial |K| scale for fthfb
  std::optional<int> n_particles;   // hf; default round(filling * N)
  double stagger_eta = 0.1;
  double transverse_noise = 1e-3;   // in units of S

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("mixing alpha must lie in (0, 1]");
    if (!(tolerance > 0.0)) throw Error("solver tolerance must be positive");
    if (restarts < 1) throw Error("solver restarts must be >= 1");
    if (max_iterations < 1) throw Error("solver max iterations must be >= 1");
    if (guesses.empty()) throw Error("solver needs at least one initial guess style");
  }
};

struct MeanFieldState {
  MatrixXd rho;  // rho_ij = <c_j^dag c_i>
  MatrixXd K;    // K_ij = <c_j c_i>
  SpinField spins;
  MatrixXd U, V;  // a_k^dag = sum_j U_kj c_j^dag + V_kj c_j
  VectorXd E_qp;
  double omega = 0.0;
  double energy = 0.0;  // <H> including the spin terms
  double mu = 0.0;
  double total_n = 0.0;
  int iterations = 0;
  bool converged = false;
  double residual = std::numeric_limits<double>::infinity();
  bool zero_mode = false;          // a quasiparticle sat at zero energy
  bool shell_degenerate = false;   // canonical Fermi level was degenerate
  int omega_violations = 0;
  double final_alpha = 0.0;
  std::vector<double> omega_trace;  // accepted iterates
  std::string guess;
};

/// Precomputed one-body data for a lattice + couplings (+ optional pinning).
struct MeanFieldProblem {
  const LatticeGraph* graph = nullptr;
  ModelParams params;
  MatrixXd hop;  // -t on bonds
  MatrixXd V;    // Coulomb, zero diagonal
  VectorXd mu_site;
  VectorXd eps;

  int size() const { return static_cast<int>(hop.rows()); }
};

inline MeanFieldProblem make_problem(const LatticeGraph& g, const ModelParams& p,
                                     const std::optional<PinningPattern>& pinning = std::nullopt) {
  p.validate();
  MeanFieldProblem pr;
  pr.graph = &g;
  pr.params = p;
  const int N = g.size();
  pr.hop = MatrixXd::Zero(N, N);
  for (auto [i, j] : g.bonds) pr.hop(i, j) = pr.hop(j, i) = -p.t;
  pr.V = coulomb_matrix(g, p.V0, p.lambda).V;
  const SitePotentials sp = site_potentials(p, g, pinning);
  pr.mu_site = Eigen::Map<const VectorXd>(sp.mu.data(), N);
  pr.eps = Eigen::Map<const VectorXd>(sp.eps.data(), N);
  return pr;
}

struct MeanFields {
  MatrixXd Gamma;
  MatrixXd Delta;
  MatrixXd H;  // single-particle Hamiltonian including -mu
};

/// Coulomb vertex for the density-density term: Hartree Gamma_ii = sum_j V_ij rho_jj,
/// exchange Gamma_ij = -V_ij rho_ij, pairing Delta_ij = V_ij K_ij. The spin feedback
/// enters H as -g <I^z_i> on the diagonal.
inline MeanFields mean_fields(const MatrixXd& rho, const MatrixXd& K, const SpinField& spins, const MeanFieldProblem& pr,
                              bool fock = true) {
  const int N = pr.size();
  if (rho.rows() != N || rho.cols() != N || K.rows() != N || K.cols() != N || spins.cols() != N)
    throw Error("mean_fields: dimension mismatch");
  MeanFields mf;
  mf.Gamma = MatrixXd::Zero(N, N);
  const VectorXd dens = rho.diagonal();
  mf.Gamma.diagonal() = pr.V * dens;
  if (fock) mf.Gamma -= pr.V.cwiseProduct(rho);
  mf.Delta = pr.V.cwiseProduct(K);
  mf.H = pr.hop + mf.Gamma;
  const double g = pr.params.g();
  for (int i = 0; i < N; ++i) mf.H(i, i) += -pr.mu_site(i) - g * spins(2, i);
  return mf;
}

struct BogoliubovResult {
  MatrixXd U, V;
  VectorXd E;
  MatrixXd rho, K;
  bool zero_mode = false;
};

namespace detail {
inline double occupation(double E, const InverseTemperature& beta, bool& zero_mode) {
  if (beta.is_zero_temperature()) {
    if (std::abs(E) < 1e-12) {
      zero_mode = true;
      return 0.5;
    }
    return E < 0.0 ? 1.0 : 0.0;
  }
  return fermi(E, beta.value);
}
}  // namespace detail

/// Quasiparticle diagonalization of [[H, Delta], [-Delta, -H]]; positive branch.
/// When Delta vanishes identically only H is diagonalized.
inline BogoliubovResult bogoliubov_step(const MatrixXd& H, const MatrixXd& Delta, const InverseTemperature& beta) {
  const int N = static_cast<int>(H.rows());
  BogoliubovResult r;
  MatrixXd X(N, N), Y(N, N);
  r.E.resize(N);
  if (Delta.cwiseAbs().maxCoeff() == 0.0) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(H);
    if (es.info() != Eigen::Success) throw Error("bogoliubov_step: eigensolver failed");
    X.setZero();
    Y.setZero();
    for (int k = 0; k < N; ++k) {
      const double e = es.eigenvalues()(k);
      if (e >= 0.0) X.col(k) = es.eigenvectors().col(k);
      else Y.col(k) = es.eigenvectors().col(k);
      r.E(k) = std::abs(e);
    }
  } else {
    MatrixXd B(2 * N, 2 * N);
    B << H, Delta, -Delta, -H;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(B);
    if (es.info() != Eigen::Success) throw Error("bogoliubov_step: eigensolver failed");
    for (int k = 0; k < N; ++k) {
      const int c = N + k;
      r.E(k) = es.eigenvalues()(c);
      X.col(k) = es.eigenvectors().col(c).head(N);
      Y.col(k) = es.eigenvectors().col(c).tail(N);
    }
  }
  VectorXd f(N);
  for (int k = 0; k < N; ++k) f(k) = detail::occupation(r.E(k), beta, r.zero_mode);
  const VectorXd one_minus_f = VectorXd::Ones(N) - f;
  r.rho = X * f.asDiagonal() * X.transpose() + Y * one_minus_f.asDiagonal() * Y.transpose();
  r.K = Y * one_minus_f.asDiagonal() * X.transpose() + X * f.asDiagonal() * Y.transpose();
  r.rho = 0.5 * (r.rho + r.rho.transpose()).eval();
  r.K = 0.5 * (r.K - r.K.transpose()).eval();
  r.U = X.transpose();
  r.V = Y.transpose();
  return r;
}

/// Brillouin function B_S(x).
inline double brillouin(double S, double x) {
  if (std::abs(x) < 1e-4) return (S + 1.0) / (3.0 * S) * x;
  const double a = (2.0 * S + 1.0) / (2.0 * S), b = 1.0 / (2.0 * S);
  return a / std::tanh(a * x) - b / std::tanh(b * x);
}

/// Thermal magnetization length of a spin-S in field |b|: S B_S(beta S |b|), or S at T = 0.
inline double spin_length(double S, double beta_b, bool zero_temperature) {
  if (zero_temperature) return S;
  return S * brillouin(S, S * beta_b);
}

/// Entropy of a spin-S whose mean moment has length m, in units of k_B.
inline double spin_entropy(double m, double S) {
  m = std::abs(m);
  if (m >= S * (1.0 - 1e-14)) return 0.0;
  const double twoSp1 = 2.0 * S + 1.0;
  if (m == 0.0) return std::log(twoSp1);
  auto log_sinh = [](double x) { return x + std::log1p(-std::exp(-2.0 * x)) - std::log(2.0); };
  auto log_Z = [&](double y) {
    if (y < 1e-8) return std::log(twoSp1);
    return log_sinh(twoSp1 * y / 2.0) - log_sinh(y / 2.0);
  };
  // Solve S B_S(S y) = m for y = beta |b|.
  double lo = 0.0, hi = 1.0;
  while (spin_length(S, hi, false) < m && hi < 1e300) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (spin_length(S, mid, false) < m ? lo : hi) = mid;
    if (hi - lo <= 1e-15 * hi) break;
  }
  const double y = 0.5 * (lo + hi);
  return std::max(0.0, log_Z(y) - y * m);
}

/// Spins aligned with b_i = (h_x, 0, h_z + g rho_ii + eps_i). A vanishing field
/// keeps the previous spin.
inline SpinField spin_update(const MatrixXd& rho, const MeanFieldProblem& pr, const InverseTemperature& beta,
                             const SpinField& previous, bool* zero_field = nullptr) {
  const int N = pr.size();
  const auto& p = pr.params;
  SpinField out(3, N);
  for (int i = 0; i < N; ++i) {
    const Eigen::Vector3d b(p.h_x, 0.0, p.h_z + p.g() * rho(i, i) + pr.eps(i));
    const double nb = b.norm();
    if (nb < 1e-300) {
      out.col(i) = previous.col(i);
      if (zero_field) *zero_field = true;
      continue;
    }
    out.col(i) = spin_length(p.S, beta.is_zero_temperature() ? 0.0 : beta.value * nb, beta.is_zero_temperature()) / nb * b;
  }
  return out;
}

namespace detail {
inline double binary_entropy_sum(const VectorXd& occ) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < occ.size(); ++k) {
    const double x = std::clamp(occ(k), 0.0, 1.0);
    if (x > 0.0 && x < 1.0) s -= x * std::log(x) + (1.0 - x) * std::log(1.0 - x);
  }
  return s;
}
}  // namespace detail

/// Fermionic entropy of the quasi-free state (rho, K) in units of k_B.
inline double electron_entropy(const MatrixXd& rho, const MatrixXd& K) {
  const int N = static_cast<int>(rho.rows());
  if (K.cwiseAbs().maxCoeff() == 0.0) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(rho, Eigen::EigenvaluesOnly);
    return detail::binary_entropy_sum(es.eigenvalues());
  }
  MatrixXd R(2 * N, 2 * N);
  R << rho, K, -K, MatrixXd::Identity(N, N) - rho;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(R, Eigen::EigenvaluesOnly);
  // Eigenvalues come in pairs (r, 1 - r); each pair carries one mode's entropy.
  return 0.5 * detail::binary_entropy_sum(es.eigenvalues());
}

struct FunctionalTerms {
  double kinetic = 0.0;      // Tr[(T_hop - mu) rho]
  double interaction = 0.0;  // Coulomb, Hartree + Fock + pairing
  double spin = 0.0;         // -g sum rho_ii m_i^z - sum h . m_i - sum eps_i m_i^z
  double entropy = 0.0;      // electrons + spins, units of k_B
  double omega = 0.0;
  double mu_n = 0.0;         // sum mu_i rho_ii
};

/// Grand-potential functional at (rho, K, spins).
inline FunctionalTerms grand_potential(const MatrixXd& rho, const MatrixXd& K, const SpinField& spins,
                                       const MeanFieldProblem& pr, const InverseTemperature& beta, bool fock = true) {
  const int N = pr.size();
  const auto& p = pr.params;
  FunctionalTerms f;
  f.mu_n = pr.mu_site.dot(rho.diagonal());
  f.kinetic = (pr.hop.cwiseProduct(rho)).sum() - f.mu_n;
  double eint = 0.0;
  for (int i = 0; i < N; ++i)
    for (int j = i + 1; j < N; ++j) {
      const double v = pr.V(i, j);
      if (v == 0.0) continue;
      eint += v * (rho(i, i) * rho(j, j) + K(i, j) * K(i, j));
      if (fock) eint -= v * rho(i, j) * rho(j, i);
    }
  f.interaction = eint;
  double es = 0.0;
  for (int i = 0; i < N; ++i)
    es -= p.g() * rho(i, i) * spins(2, i) + p.h_x * spins(0, i) + (p.h_z + pr.eps(i)) * spins(2, i);
  f.spin = es;
  f.omega = f.kinetic + f.interaction + f.spin;
  if (!beta.is_zero_temperature()) {
    double s = electron_entropy(rho, K);
    for (int i = 0; i < N; ++i) s += spin_entropy(spins.col(i).norm(), p.S);
    f.entropy = s;
    f.omega -= s / beta.value;
  }
  return f;
}

namespace detail {

struct Iterate {
  MatrixXd rho, K;
  SpinField spins;
};

inline double max_diff(const Iterate& a, const Iterate& b) {
  double d = (a.rho - b.rho).cwiseAbs().maxCoeff();
  d = std::max(d, (a.K - b.K).cwiseAbs().maxCoeff());
  d = std::max(d, (a.spins - b.spins).cwiseAbs().maxCoeff());
  return d;
}

inline Iterate mix(const Iterate& x, const Iterate& F, double alpha) {
  return {x.rho + alpha * (F.rho - x.rho), x.K + alpha * (F.K - x.K), x.spins + alpha * (F.spins - x.spins)};
}

inline VectorXd pack(const Iterate& x) {
  const Eigen::Index n2 = x.rho.size();
  VectorXd v(2 * n2 + x.spins.size());
  v.head(n2) = Eigen::Map<const VectorXd>(x.rho.data(), n2);
  v.segment(n2, n2) = Eigen::Map<const VectorXd>(x.K.data(), n2);
  v.tail(x.spins.size()) = Eigen::Map<const VectorXd>(x.spins.data(), x.spins.size());
  return v;
}

inline Iterate unpack(const VectorXd& v, int N) {
  const Eigen::Index n2 = static_cast<Eigen::Index>(N) * N;
  Iterate x;
  x.rho = Eigen::Map<const MatrixXd>(v.data(), N, N);
  x.K = Eigen::Map<const MatrixXd>(v.data() + n2, N, N);
  x.spins = Eigen::Map<const SpinField>(v.data() + 2 * n2, 3, N);
  return x;
}

/// Quasi-free state check: generalized density eigenvalues in [0, 1], |<I_i>| <= S.
inline bool physical(const Iterate& x, double S, double tol = 1e-9) {
  for (Eigen::Index i = 0; i < x.spins.cols(); ++i)
    if (x.spins.col(i).norm() > S * (1.0 + tol)) return false;
  const Eigen::Index N = x.rho.rows();
  VectorXd ev;
  if (x.K.cwiseAbs().maxCoeff() == 0.0) {
    ev = Eigen::SelfAdjointEigenSolver<MatrixXd>(x.rho, Eigen::EigenvaluesOnly).eigenvalues();
  } else {
    MatrixXd R(2 * N, 2 * N);
    R << x.rho, x.K, -x.K, MatrixXd::Identity(N, N) - x.rho;
    ev = Eigen::SelfAdjointEigenSolver<MatrixXd>(R, Eigen::EigenvaluesOnly).eigenvalues();
  }
  return ev.minCoeff() >= -tol && ev.maxCoeff() <= 1.0 + tol;
}

/// Canonical zero-temperature filling of n orbitals of H. A degenerate Fermi shell
/// is filled with the shell directions that best overlap the previous rho.
inline BogoliubovResult aufbau(const MatrixXd& H, int n, const MatrixXd& rho_prev, bool& shell_degenerate) {
  const int N = static_cast<int>(H.rows());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(H);
  if (es.info() != Eigen::Success) throw Error("aufbau: eigensolver failed");
  const VectorXd& e = es.eigenvalues();
  MatrixXd phi = es.eigenvectors();
  shell_degenerate = false;
  if (n > 0 && n < N) {
    const double tol = 1e-10 * std::max(1.0, std::abs(e(n - 1)));
    if (std::abs(e(n) - e(n - 1)) < tol) {
      shell_degenerate = true;
      int lo = n - 1, hi = n;
      while (lo > 0 && std::abs(e(lo - 1) - e(n - 1)) < tol) --lo;
      while (hi + 1 < N && std::abs(e(hi + 1) - e(n)) < tol) ++hi;
      const int width = hi - lo + 1;
      const MatrixXd sh = phi.middleCols(lo, width);
      Eigen::SelfAdjointEigenSolver<MatrixXd> ps(sh.transpose() * rho_prev * sh);
      // Largest projected occupations first.
      MatrixXd rot(width, width);
      for (int k = 0; k < width; ++k) rot.col(k) = ps.eigenvectors().col(width - 1 - k);
      phi.middleCols(lo, width) = sh * rot;
    }
  }
  // Particle-hole quasiparticles: holes for the n lowest orbitals.
  const double eF = n > 0 && n < N ? 0.5 * (e(n - 1) + e(n)) : (n == 0 ? e(0) - 1.0 : e(N - 1) + 1.0);
  BogoliubovResult r;
  MatrixXd X = MatrixXd::Zero(N, N), Y = MatrixXd::Zero(N, N);
  r.E.resize(N);
  for (int k = 0; k < N; ++k) {
    if (k < n) Y.col(k) = phi.col(k);
    else X.col(k) = phi.col(k);
    r.E(k) = std::abs(e(k) - eF);
  }
  r.rho = Y * Y.transpose();
  r.rho = 0.5 * (r.rho + r.rho.transpose()).eval();
  r.K = MatrixXd::Zero(N, N);
  r.U = X.transpose();
  r.V = Y.transpose();
  return r;
}

}  // namespace detail

/// One self-consistency map F(x): fields from x, quasiparticles, spin update.
struct MapResult {
  detail::Iterate next;
  BogoliubovResult bdg;
  bool shell_degenerate = false;
};

inline MapResult scf_map(const detail::Iterate& x, const MeanFieldProblem& pr, const SolverConfig& cfg, int n_particles) {
  MapResult m;
  const auto& beta = pr.params.beta;
  const MeanFields mf = mean_fields(x.rho, x.K, x.spins, pr, cfg.fock);
  if (cfg.kind == SolverKind::hf) {
    m.bdg = detail::aufbau(mf.H, n_particles, x.rho, m.shell_degenerate);
    m.next.spins = spin_update(x.rho, pr, InverseTemperature::zero_temperature(), x.spins);
  } else {
    m.bdg = bogoliubov_step(mf.H, mf.Delta, beta);
    m.next.spins = spin_update(x.rho, pr, beta, x.spins);
  }
  m.next.rho = m.bdg.rho;
  m.next.K = m.bdg.K;
  return m;
}

namespace detail {

inline Iterate initial_iterate(const MeanFieldProblem& pr, const SolverConfig& cfg, InitialGuess style,
                               std::uint64_t seed, int n_particles) {
  const int N = pr.size();
  const double S = pr.params.S;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Iterate x;
  const double fill = cfg.kind == SolverKind::hf ? static_cast<double>(n_particles) / N : pr.params.filling;
  x.rho = fill * MatrixXd::Identity(N, N);
  x.K = MatrixXd::Zero(N, N);
  if (cfg.kind == SolverKind::fthfb && cfg.pairing_seed > 0.0) {
    for (int i = 0; i < N; ++i)
      for (int j = i + 1; j < N; ++j) {
        const double v = cfg.pairing_seed * u(rng);
        x.K(i, j) = v;
        x.K(j, i) = -v;
      }
  }
  x.spins = SpinField::Zero(3, N);
  for (int i = 0; i < N; ++i) {
    switch (style) {
      case InitialGuess::staggered: {
        const int delta = pr.graph->sublattice[static_cast<std::size_t>(i)];
        x.spins(0, i) = cfg.transverse_noise * S * u(rng);
        x.spins(1, i) = cfg.transverse_noise * S * u(rng);
        x.spins(2, i) = delta * S * (1.0 - cfg.stagger_eta);
        break;
      }
      case InitialGuess::uniform:
        x.spins(2, i) = S;
        break;
      case InitialGuess::random: {
        Eigen::Vector3d v(u(rng), u(rng), u(rng));
        if (v.norm() < 1e-12) v = Eigen::Vector3d::UnitZ();
        x.spins.col(i) = S * std::abs(u(rng)) * v.normalized();
        break;
      }
    }
  }
  return x;
}

}  // namespace detail

/// Runs the damped fixed-point iteration from a given iterate.
///
/// Each step first tries an Anderson extrapolation over the last
/// cfg.anderson_depth residuals, then falls back to linear mixing with weight
/// alpha. After the fifth iteration a step that raises Omega (or leaves the
/// physical domain) is rejected; a rejected linear step halves alpha, and ten
/// accepted steps let it double back towards cfg.alpha. Convergence means
/// max|F(x) - x| < tolerance.
inline MeanFieldState iterate_to_fixed_point(const MeanFieldProblem& pr, const SolverConfig& cfg, detail::Iterate x,
                                             int n_particles) {
  const auto& beta = pr.params.beta;
  const InverseTemperature beta_eff = cfg.kind == SolverKind::hf ? InverseTemperature::zero_temperature() : beta;
  const int N = pr.size();
  MeanFieldState st;
  double alpha = cfg.alpha;
  int streak = 0;
  auto omega_of = [&](const detail::Iterate& y) { return grand_potential(y.rho, y.K, y.spins, pr, beta_eff, cfg.fock).omega; };
  double omega_x = omega_of(x);
  st.omega_trace.push_back(omega_x);
  std::vector<VectorXd> hist_x, hist_r;
  MapResult m;
  int it = 0;
  for (; it < cfg.max_iterations; ++it) {
    m = scf_map(x, pr, cfg, n_particles);
    st.shell_degenerate = st.shell_degenerate || m.shell_degenerate;
    st.residual = detail::max_diff(m.next, x);
    if (st.residual < cfg.tolerance) {
      st.converged = true;
      break;
    }
    // Pairing below numerical noise is removed so the normal-state branch is exact.
    if (m.next.K.cwiseAbs().maxCoeff() < 1e-13 && x.K.cwiseAbs().maxCoeff() < 1e-13) {
      m.next.K.setZero();
      x.K.setZero();
    }
    const double noise = 1e-12 * std::max(1.0, std::abs(omega_x));
    const VectorXd xv = detail::pack(x), rv = detail::pack(m.next) - xv;
    bool accepted = false;
    if (cfg.anderson_depth > 0 && !hist_x.empty()) {
      const int k = static_cast<int>(hist_x.size());
      MatrixXd dX(xv.size(), k), dR(xv.size(), k);
      for (int j = 0; j < k; ++j) {
        dX.col(j) = xv - hist_x[static_cast<std::size_t>(j)];
        dR.col(j) = rv - hist_r[static_cast<std::size_t>(j)];
      }
      const VectorXd gamma = dR.colPivHouseholderQr().solve(rv);
      if (gamma.allFinite()) {
        const VectorXd cand = xv + alpha * rv - (dX + alpha * dR) * gamma;
        detail::Iterate y = detail::unpack(cand, N);
        if (detail::physical(y, pr.params.S)) {
          const double omega_y = omega_of(y);
          if (it < 5 || omega_y <= omega_x + noise) {
            x = std::move(y);
            omega_x = omega_y;
            accepted = true;
          }
        }
      }
    }
    hist_x.push_back(xv);
    hist_r.push_back(rv);
    if (static_cast<int>(hist_x.size()) > cfg.anderson_depth) {
      hist_x.erase(hist_x.begin());
      hist_r.erase(hist_r.begin());
    }
    while (!accepted) {
      detail::Iterate trial = detail::mix(x, m.next, alpha);
      const double omega_t = omega_of(trial);
      if (it >= 5 && omega_t > omega_x + noise) {
        ++st.omega_violations;
        alpha *= 0.5;
        streak = 0;
        hist_x.clear();
        hist_r.clear();
        if (alpha < 1e-8) break;
        continue;
      }
      x = std::move(trial);
      omega_x = omega_t;
      accepted = true;
    }
    if (!accepted) break;
    st.omega_trace.push_back(omega_x);
    if (++streak >= 10 && alpha < cfg.alpha) {
      alpha = std::min(cfg.alpha, 2.0 * alpha);
      streak = 0;
    }
  }
  st.iterations = it;
  st.final_alpha = alpha;
  st.rho = x.rho;
  st.K = x.K;
  st.spins = x.spins;
  st.U = m.bdg.U;
  st.V = m.bdg.V;
  st.E_qp = m.bdg.E;
  st.zero_mode = m.bdg.zero_mode;
  const FunctionalTerms f = grand_potential(x.rho, x.K, x.spins, pr, beta_eff, cfg.fock);
  st.omega = f.omega;
  st.energy = f.kinetic + f.mu_n + f.interaction + f.spin;
  st.mu = pr.params.mu;
  st.total_n = x.rho.trace();
  return st;
}

inline int default_particle_number(const MeanFieldProblem& pr, const SolverConfig& cfg) {
  const int N = pr.size();
  const int n = cfg.n_particles ? *cfg.n_particles : static_cast<int>(std::lround(pr.params.filling * N));
  if (n < 0 || n > N) throw Error("particle number outside [0, N]");
  return n;
}

/// Self-consistent solution; the lowest-Omega state over the restarts (or the
/// warm start alone, when given) is returned.
inline MeanFieldState solve(const MeanFieldProblem& pr, const SolverConfig& cfg,
                            const MeanFieldState* warm_start = nullptr) {
  cfg.validate();
  const int n = default_particle_number(pr, cfg);
  if (warm_start) {
    detail::Iterate x{warm_start->rho, warm_start->K, warm_start->spins};
    if (cfg.kind == SolverKind::hf) {
      const double tr = x.rho.trace();
      if (std::abs(tr - n) > 1e-9) x.rho *= (tr > 0 ? n / tr : 0.0);
      x.K.setZero();
    }
    auto st = iterate_to_fixed_point(pr, cfg, std::move(x), n);
    st.guess = "warm";
    return st;
  }
  MeanFieldState best;
  bool have = false;
  for (int r = 0; r < cfg.restarts; ++r) {
    const InitialGuess style = cfg.guesses[static_cast<std::size_t>(r) % cfg.guesses.size()];
    const std::uint64_t seed = cfg.seed * 1000003ULL + static_cast<std::uint64_t>(r);
    auto st = iterate_to_fixed_point(pr, cfg, detail::initial_iterate(pr, cfg, style, seed, n), n);
    st.guess = to_string(style);
    const bool better = !have || (st.converged && !best.converged) ||
                        (st.converged == best.converged && st.omega < best.omega - 1e-12 * std::max(1.0, std::abs(best.omega)));
    if (better) {
      best = std::move(st);
      have = true;
    }
  }
  return best;
}

inline MeanFieldState solve(const LatticeGraph& g, const ModelParams& p, const SolverConfig& cfg,
                            const std::optional<PinningPattern>& pinning = std::nullopt) {
  return solve(make_problem(g, p, pinning), cfg);
}

/// Residual of one further map application from a converged state.
inline double idempotence_gap(const MeanFieldState& st, const MeanFieldProblem& pr, const SolverConfig& cfg) {
  const detail::Iterate x{st.rho, st.K, st.spins};
  const auto m = scf_map(x, pr, cfg, default_particle_number(pr, cfg));
  return detail::max_diff(m.next, x);
}

struct ChemicalPotentialResult {
  double mu = 0.0;
  double n = 0.0;
  MeanFieldState state;
  std::vector<std::pair<double, double>> samples;  // (mu, <n>)
  bool monotone = true;
};

/// Bisection on mu for the grand-canonical solver until |Tr rho - target| < 0.5.
/// When the target sits on a charge plateau the plateau edges are refined and
/// its midpoint returned. Each solve warm-starts from the nearest sampled state.
inline ChemicalPotentialResult tune_chemical_potential(const LatticeGraph& g, ModelParams p, SolverConfig cfg,
                                                       double target_n, int refine_steps = 8) {
  const int N = g.size();
  if (!(target_n > 0.0 && target_n < N)) throw Error("tune_chemical_potential: target outside (0, N)");
  cfg.kind = SolverKind::fthfb;
  ChemicalPotentialResult res;
  std::vector<std::pair<double, MeanFieldState>> cache;
  auto eval = [&](double mu) -> const MeanFieldState& {
    p.mu = mu;
    const auto pr = make_problem(g, p);
    const MeanFieldState* warm = nullptr;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [m, s] : cache)
      if (std::abs(m - mu) < best) {
        best = std::abs(m - mu);
        warm = &s;
      }
    SolverConfig c = cfg;
    c.restarts = 1;
    c.guesses = {InitialGuess::staggered};
    c.tolerance = std::max(cfg.tolerance, 1e-6);
    c.max_iterations = std::min(cfg.max_iterations, 400);
    MeanFieldState st = warm ? solve(pr, c, warm) : solve(pr, c);
    res.samples.emplace_back(mu, st.total_n);
    cache.emplace_back(mu, std::move(st));
    return cache.back().second;
  };
  // Bracket around the Hartree estimate of the level at the target filling.
  const auto pr0 = make_problem(g, p);
  const double center = target_n / N * pr0.V.rowwise().sum().mean();
  double width = pr0.hop.cwiseAbs().rowwise().sum().maxCoeff() + std::abs(p.g()) * p.S + 1.0;
  double lo = center - width, hi = center + width;
  double n_lo = eval(lo).total_n, n_hi = eval(hi).total_n;
  for (int widen = 0; widen < 20 && !(n_lo < target_n && n_hi > target_n); ++widen) {
    width *= 2.0;
    if (n_lo >= target_n) n_lo = eval(lo = center - width).total_n;
    if (n_hi <= target_n) n_hi = eval(hi = center + width).total_n;
  }
  if (!(n_lo < target_n && n_hi > target_n)) {
    std::string curve;
    for (auto [m, n] : res.samples) curve += " (" + std::to_string(m) + "," + std::to_string(n) + ")";
    throw Error("tune_chemical_potential: could not bracket target; sampled <n>(mu):" + curve);
  }
  double mid = 0.5 * (lo + hi), n_mid = 0.0;
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    n_mid = eval(mid).total_n;
    if (std::abs(n_mid - target_n) < 0.5) break;
    (n_mid < target_n ? lo : hi) = mid;
  }
  // Plateau refinement around mid.
  double a = lo, b = mid;
  for (int k = 0; k < refine_steps; ++k) {
    const double c = 0.5 * (a + b);
    (std::abs(eval(c).total_n - target_n) < 0.5 ? b : a) = c;
  }
  const double left_edge = b;
  a = mid;
  b = hi;
  for (int k = 0; k < refine_steps; ++k) {
    const double c = 0.5 * (a + b);
    (std::abs(eval(c).total_n - target_n) < 0.5 ? a : b) = c;
  }
  const double right_edge = a;
  res.mu = 0.5 * (left_edge + right_edge);
  p.mu = res.mu;
  res.state = solve(make_problem(g, p), cfg);
  res.n = res.state.total_n;
  res.samples.emplace_back(res.mu, res.n);
  auto sorted = res.samples;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 1; k < sorted.size(); ++k)
    if (sorted[k].second < sorted[k - 1].second - 1e-6) res.monotone = false;
  return res;
}

inline nlohmann::json to_json(const MeanFieldState& s) {
  auto mat = [](const MatrixXd& M) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(M.cols()));
      for (Eigen::Index c = 0; c < M.cols(); ++c) row[static_cast<std::size_t>(c)] = M(r, c);
      rows.push_back(row);
    }
    return rows;
  };
  nlohmann::json j;
  j["rho"] = mat(s.rho);
  j["K"] = mat(s.K);
  j["spins"] = mat(s.spins.transpose());
  j["omega"] = s.omega;
  j["energy"] = s.energy;
  j["mu"] = s.mu;
  j["iterations"] = s.iterations;
  j["converged"] = s.converged;
  j["residual"] = s.residual;
  j["omega_trace"] = s.omega_trace;
  j["guess"] = s.guess;
  return j;
}

inline MeanFieldState state_from_json(const nlohmann::json& j) {
  auto mat = [](const nlohmann::json& rows) {
    const auto R = static_cast<Eigen::Index>(rows.size());
    const auto C = R ? static_cast<Eigen::Index>(rows[0].size()) : 0;
    MatrixXd M(R, C);
    for (Eigen::Index r = 0; r < R; ++r)
      for (Eigen::Index c = 0; c < C; ++c) M(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    return M;
  };
  MeanFieldState s;
  s.rho = mat(j.at("rho"));
  s.K = mat(j.at("K"));
  s.spins = mat(j.at("spins")).transpose();
  s.omega = j.value("omega", 0.0);
  s.energy = j.value("energy", 0.0);
  s.mu = j.value("mu", 0.0);
  s.iterations = j.value("iterations", 0);
  s.converged = j.value("converged", false);
  s.residual = j.value("residual", 0.0);
  s.omega_trace = j.value("omega_trace", std::vector<double>{});
  s.guess = j.value("guess", std::string{});
  s.total_n = s.rho.trace();
  return s;
}

}  // namespace rjr
