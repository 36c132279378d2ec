#pragma once

// Exact diagonalization of the fermion x nuclear-spin lattice Hamiltonian.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <bit>
#include <cstdint>
#include <functional>
#include <json.hpp>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "rjr/common.hpp"
#include "rjr/lattice.hpp"
#include "rjr/model.hpp"

namespace rjr {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

struct EdOptions {
  std::size_t sector_cap = 200000;
  std::size_t dense_max = 4000;
  int lanczos_states = 4;  // eigenpairs kept per sector above dense_max
  double degeneracy_tol = 1e-9;
};

/// Fixed-particle-number basis: occupation bitstrings x spin configurations.
///
/// A state index is occ_index * spin_states + spin_config. The spin digit of site
/// i in a configuration is k_i in [0, 2S], with I^z_i = -S + k_i. Fermion
/// operators are ordered by ascending site index.
struct SectorBasis {
  int n_sites = 0;
  int n_particles = 0;
  int spin_dim = 2;
  double S = 0.5;
  std::vector<std::uint64_t> occ;
  std::uint64_t spin_states = 1;
  std::vector<std::uint64_t> spin_stride;

  SectorBasis() = default;
  SectorBasis(int N, int n, double S_, std::size_t cap) : n_sites(N), n_particles(n), S(S_) {
    if (N < 1 || N > 62) throw Error("ED supports 1..62 sites");
    if (n < 0 || n > N) throw Error("particle number outside [0, N]");
    spin_dim = static_cast<int>(std::lround(2.0 * S)) + 1;
    spin_stride.resize(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
      spin_stride[static_cast<std::size_t>(i)] = spin_states;
      if (spin_states > std::numeric_limits<std::uint64_t>::max() / static_cast<std::uint64_t>(spin_dim))
        throw Error("ED: spin space too large");
      spin_states *= static_cast<std::uint64_t>(spin_dim);
    }
    const double fermion_dim = std::round(std::exp(std::lgamma(N + 1.0) - std::lgamma(n + 1.0) - std::lgamma(N - n + 1.0)));
    if (fermion_dim * static_cast<double>(spin_states) > static_cast<double>(cap))
      throw Error("ED: sector dimension " + std::to_string(fermion_dim * static_cast<double>(spin_states)) +
                  " exceeds cap " + std::to_string(cap));
    for (std::uint64_t m = 0; m < (std::uint64_t{1} << N); ++m)
      if (std::popcount(m) == n) occ.push_back(m);
  }

  std::size_t dim() const { return occ.size() * spin_states; }
  std::size_t index(std::size_t f, std::uint64_t s) const { return f * spin_states + s; }
  std::size_t occ_pos(std::uint64_t m) const {
    auto it = std::lower_bound(occ.begin(), occ.end(), m);
    return static_cast<std::size_t>(it - occ.begin());
  }
  int spin_digit(std::uint64_t s, int i) const {
    return static_cast<int>((s / spin_stride[static_cast<std::size_t>(i)]) % static_cast<std::uint64_t>(spin_dim));
  }
  double Iz(std::uint64_t s, int i) const { return -S + spin_digit(s, i); }
  std::uint64_t occupation(std::size_t state) const { return occ[state / spin_states]; }
  std::uint64_t spin_config(std::size_t state) const { return state % spin_states; }
};

/// (-1)^(number of occupied sites strictly below `site`).
inline double fermion_sign_below(std::uint64_t m, int site) {
  const std::uint64_t mask = (std::uint64_t{1} << site) - 1;
  return (std::popcount(m & mask) % 2) ? -1.0 : 1.0;
}

/// Matrix of c_i^dagger from `from` (n-1 particles) into `to` (n particles).
inline SparseMatrix creation_operator(const SectorBasis& to, const SectorBasis& from, int site) {
  if (to.n_particles != from.n_particles + 1) throw Error("creation_operator: sectors are not adjacent");
  std::vector<Triplet> trip;
  const std::uint64_t bit = std::uint64_t{1} << site;
  for (std::size_t f = 0; f < from.occ.size(); ++f) {
    const std::uint64_t m = from.occ[f];
    if (m & bit) continue;
    const double sign = fermion_sign_below(m, site);
    const std::size_t g = to.occ_pos(m | bit);
    for (std::uint64_t s = 0; s < from.spin_states; ++s)
      trip.emplace_back(static_cast<int>(to.index(g, s)), static_cast<int>(from.index(f, s)), sign);
  }
  SparseMatrix C(static_cast<Eigen::Index>(to.dim()), static_cast<Eigen::Index>(from.dim()));
  C.setFromTriplets(trip.begin(), trip.end());
  return C;
}

/// Sector Hamiltonian. The Coulomb term is counted once per unordered pair and the
/// hopping carries the ascending-order fermion sign.
inline SparseMatrix build_hamiltonian(const SectorBasis& b, const LatticeGraph& g, const ModelParams& p,
                                      const CoulombMatrix& V, const SitePotentials& sp) {
  const int N = g.size();
  if (b.n_sites != N) throw Error("build_hamiltonian: basis size does not match lattice");
  const double gg = p.g();
  std::vector<Triplet> trip;
  trip.reserve(b.dim() * (1 + 2 * g.bonds.size() / std::max(1, N) + 2 * static_cast<std::size_t>(N)));
  for (std::size_t f = 0; f < b.occ.size(); ++f) {
    const std::uint64_t m = b.occ[f];
    double fermion_diag = 0.0;
    for (int i = 0; i < N; ++i) {
      if (!((m >> i) & 1)) continue;
      fermion_diag -= sp.mu[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < N; ++j)
        if ((m >> j) & 1) fermion_diag += V.V(i, j);
    }
    // Hopping c_i^dag c_j for both orientations of each bond.
    std::vector<std::pair<std::size_t, double>> hops;
    for (auto [a, c] : g.bonds)
      for (int dir = 0; dir < 2; ++dir) {
        const int i = dir ? c : a, j = dir ? a : c;
        if (!((m >> j) & 1) || ((m >> i) & 1)) continue;
        const std::uint64_t m1 = m ^ (std::uint64_t{1} << j);
        const double sign = fermion_sign_below(m1, i) * fermion_sign_below(m, j);
        hops.emplace_back(b.occ_pos(m1 | (std::uint64_t{1} << i)), -p.t * sign);
      }
    for (std::uint64_t s = 0; s < b.spin_states; ++s) {
      const auto col = static_cast<int>(b.index(f, s));
      double diag = fermion_diag;
      for (int i = 0; i < N; ++i) {
        const double n_i = static_cast<double>((m >> i) & 1);
        diag -= (gg * n_i + p.h_z + sp.eps[static_cast<std::size_t>(i)]) * b.Iz(s, i);
      }
      trip.emplace_back(col, col, diag);
      for (auto [g2, amp] : hops) trip.emplace_back(static_cast<int>(b.index(g2, s)), col, amp);
      if (p.h_x != 0.0) {
        for (int i = 0; i < N; ++i) {
          const int k = b.spin_digit(s, i);
          const double mz = -b.S + k;
          if (k + 1 < b.spin_dim) {
            const double amp = -0.5 * p.h_x * std::sqrt(b.S * (b.S + 1) - mz * (mz + 1));
            trip.emplace_back(static_cast<int>(b.index(f, s + b.spin_stride[static_cast<std::size_t>(i)])), col, amp);
          }
          if (k > 0) {
            const double amp = -0.5 * p.h_x * std::sqrt(b.S * (b.S + 1) - mz * (mz - 1));
            trip.emplace_back(static_cast<int>(b.index(f, s - b.spin_stride[static_cast<std::size_t>(i)])), col, amp);
          }
        }
      }
    }
  }
  SparseMatrix H(static_cast<Eigen::Index>(b.dim()), static_cast<Eigen::Index>(b.dim()));
  H.setFromTriplets(trip.begin(), trip.end());
  return H;
}

inline double hermiticity_error(const SparseMatrix& H) {
  const SparseMatrix D = H - SparseMatrix(H.transpose());
  double err = 0.0;
  for (int k = 0; k < D.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(D, k); it; ++it) err = std::max(err, std::abs(it.value()));
  return err;
}

struct LanczosResult {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  double max_residual = 0.0;
};

/// Lowest eigenpairs of a symmetric sparse matrix by Lanczos with full
/// reorthogonalization. The Krylov space grows until every requested pair has
/// residual below `tol` or `max_steps` is reached.
inline LanczosResult lanczos_lowest(const SparseMatrix& H, int nev, double tol = 1e-10, int max_steps = 300,
                                    std::uint64_t seed = 12345) {
  const Eigen::Index n = H.rows();
  nev = static_cast<int>(std::min<Eigen::Index>(nev, n));
  max_steps = static_cast<int>(std::min<Eigen::Index>(max_steps, n));
  Eigen::MatrixXd Q(n, max_steps);
  std::vector<double> alpha, beta;
  Eigen::VectorXd v(n);
  std::uint64_t st = seed;
  for (Eigen::Index i = 0; i < n; ++i) {
    st = st * 6364136223846793005ULL + 1442695040888963407ULL;
    v(i) = static_cast<double>(st >> 11) / 9007199254740992.0 - 0.5;
  }
  v.normalize();
  LanczosResult res;
  for (int k = 0; k < max_steps; ++k) {
    Q.col(k) = v;
    Eigen::VectorXd w = H * v;
    const double a = v.dot(w);
    alpha.push_back(a);
    for (int pass = 0; pass < 2; ++pass) w -= Q.leftCols(k + 1) * (Q.leftCols(k + 1).transpose() * w);
    const double bnorm = w.norm();
    const int m = k + 1;
    const bool check = m >= nev && (m % 10 == 0 || m == max_steps || bnorm < 1e-13);
    if (check) {
      Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
      for (int i = 0; i < m; ++i) {
        T(i, i) = alpha[static_cast<std::size_t>(i)];
        if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[static_cast<std::size_t>(i)];
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
      double maxres = 0.0;
      for (int j = 0; j < nev; ++j) maxres = std::max(maxres, std::abs(bnorm * es.eigenvectors()(m - 1, j)));
      if (maxres < tol || m == max_steps || bnorm < 1e-13) {
        res.values = es.eigenvalues().head(nev);
        res.vectors = Q.leftCols(m) * es.eigenvectors().leftCols(nev);
        res.max_residual = 0.0;
        for (int j = 0; j < nev; ++j)
          res.max_residual = std::max(res.max_residual, (H * res.vectors.col(j) - res.values(j) * res.vectors.col(j)).norm());
        return res;
      }
    }
    beta.push_back(bnorm);
    v = w / bnorm;
  }
  return res;
}

struct Sector {
  SectorBasis basis;
  Eigen::VectorXd energies;  // ascending
  Eigen::MatrixXd vectors;   // columns
  bool complete = true;      // false when only the lowest eigenpairs are known
  double hermiticity_error = 0.0;
};

/// Eigen-decomposition of every requested particle-number sector, plus creation
/// matrix elements M_i[n](alpha, alpha') = <Psi_alpha^n| c_i^dag |Psi_alpha'^(n-1)>.
struct ManyBodySpectrum {
  int n_sites = 0;
  double S = 0.5;
  double degeneracy_tol = 1e-9;
  std::map<int, Sector> sectors;
  std::map<int, std::map<int, Eigen::MatrixXd>> creation;  // site -> n -> M

  const Sector& sector(int n) const {
    auto it = sectors.find(n);
    if (it == sectors.end()) throw Error("spectrum has no sector n = " + std::to_string(n));
    return it->second;
  }
  bool degenerate(double a, double b) const { return std::abs(a - b) <= degeneracy_tol * std::max(1.0, std::abs(a)); }
};

inline Sector diagonalize_sector(const LatticeGraph& g, const ModelParams& p, const CoulombMatrix& V,
                                 const SitePotentials& sp, int n, const EdOptions& opt) {
  Sector s;
  s.basis = SectorBasis(g.size(), n, p.S, opt.sector_cap);
  const SparseMatrix H = build_hamiltonian(s.basis, g, p, V, sp);
  s.hermiticity_error = hermiticity_error(H);
  if (s.hermiticity_error > 1e-12) throw Error("ED: assembled Hamiltonian is not Hermitian");
  if (s.basis.dim() <= opt.dense_max) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(H)};
    if (es.info() != Eigen::Success) throw Error("ED: dense eigensolver failed");
    s.energies = es.eigenvalues();
    s.vectors = es.eigenvectors();
    s.complete = true;
  } else {
    auto lr = lanczos_lowest(H, opt.lanczos_states);
    if (lr.max_residual > 1e-8) throw Error("ED: Lanczos did not converge");
    s.energies = lr.values;
    s.vectors = lr.vectors;
    s.complete = false;
  }
  return s;
}

/// Diagonalizes sectors n in `particle_numbers` (all 0..N when empty) and the
/// creation matrix elements for `edge_sites` between adjacent computed sectors.
inline ManyBodySpectrum compute_spectrum(const LatticeGraph& g, const ModelParams& p,
                                         const std::optional<PinningPattern>& pinning = std::nullopt,
                                         std::vector<int> particle_numbers = {}, const std::vector<int>& edge_sites = {},
                                         const EdOptions& opt = {}) {
  p.validate();
  const int N = g.size();
  if (particle_numbers.empty())
    for (int n = 0; n <= N; ++n) particle_numbers.push_back(n);
  const CoulombMatrix V = coulomb_matrix(g, p.V0, p.lambda);
  const SitePotentials sp = site_potentials(p, g, pinning);
  ManyBodySpectrum spec;
  spec.n_sites = N;
  spec.S = p.S;
  spec.degeneracy_tol = opt.degeneracy_tol;
  for (int n : particle_numbers) spec.sectors.emplace(n, diagonalize_sector(g, p, V, sp, n, opt));
  for (int site : edge_sites) {
    if (site < 0 || site >= N) throw Error("edge site out of range");
    for (auto& [n, sec] : spec.sectors) {
      auto prev = spec.sectors.find(n - 1);
      if (prev == spec.sectors.end()) continue;
      const SparseMatrix C = creation_operator(sec.basis, prev->second.basis, site);
      spec.creation[site][n] = sec.vectors.transpose() * (C * prev->second.vectors);
    }
  }
  return spec;
}

/// Lowest level of a sector with its degenerate partners.
struct GroundState {
  double energy = 0.0;
  std::vector<int> levels;
  bool degenerate = false;
};

inline GroundState ground_state(const ManyBodySpectrum& spec, int n) {
  const Sector& s = spec.sector(n);
  GroundState gs;
  gs.energy = s.energies(0);
  for (Eigen::Index a = 0; a < s.energies.size(); ++a)
    if (spec.degenerate(s.energies(a), gs.energy)) gs.levels.push_back(static_cast<int>(a));
  gs.degenerate = gs.levels.size() > 1;
  return gs;
}

/// Operator restricted to one particle-number sector.
using SectorOperator = std::function<SparseMatrix(const SectorBasis&)>;

/// Operator diagonal in the occupation x spin basis.
inline SectorOperator diagonal_operator(std::function<double(const SectorBasis&, std::uint64_t occ, std::uint64_t spin)> f) {
  return [f](const SectorBasis& b) {
    SparseMatrix O(static_cast<Eigen::Index>(b.dim()), static_cast<Eigen::Index>(b.dim()));
    std::vector<Triplet> trip;
    for (std::size_t k = 0; k < b.dim(); ++k) {
      const double v = f(b, b.occupation(k), b.spin_config(k));
      if (v != 0.0) trip.emplace_back(static_cast<int>(k), static_cast<int>(k), v);
    }
    O.setFromTriplets(trip.begin(), trip.end());
    return O;
  };
}

namespace ops {
inline SectorOperator identity() {
  return diagonal_operator([](const SectorBasis&, std::uint64_t, std::uint64_t) { return 1.0; });
}
inline SectorOperator number(int i) {
  return diagonal_operator([i](const SectorBasis&, std::uint64_t m, std::uint64_t) { return static_cast<double>((m >> i) & 1); });
}
inline SectorOperator total_number() {
  return diagonal_operator([](const SectorBasis&, std::uint64_t m, std::uint64_t) { return static_cast<double>(std::popcount(m)); });
}
inline SectorOperator spin_z(int i) {
  return diagonal_operator([i](const SectorBasis& b, std::uint64_t, std::uint64_t s) { return b.Iz(s, i); });
}
inline SectorOperator spin_zz(int i, int j) {
  return diagonal_operator([i, j](const SectorBasis& b, std::uint64_t, std::uint64_t s) { return b.Iz(s, i) * b.Iz(s, j); });
}
/// I^x_i.
inline SectorOperator spin_x(int i) {
  return [i](const SectorBasis& b) {
    std::vector<Triplet> trip;
    const std::uint64_t stride = b.spin_stride[static_cast<std::size_t>(i)];
    for (std::size_t f = 0; f < b.occ.size(); ++f)
      for (std::uint64_t s = 0; s < b.spin_states; ++s) {
        const int k = b.spin_digit(s, i);
        const double mz = -b.S + k;
        if (k + 1 < b.spin_dim) {
          const double amp = 0.5 * std::sqrt(b.S * (b.S + 1) - mz * (mz + 1));
          trip.emplace_back(static_cast<int>(b.index(f, s + stride)), static_cast<int>(b.index(f, s)), amp);
          trip.emplace_back(static_cast<int>(b.index(f, s)), static_cast<int>(b.index(f, s + stride)), amp);
        }
      }
    SparseMatrix O(static_cast<Eigen::Index>(b.dim()), static_cast<Eigen::Index>(b.dim()));
    O.setFromTriplets(trip.begin(), trip.end());
    return O;
  };
}
/// c_i^dag c_j within a sector.
inline SectorOperator hopping(int i, int j) {
  return [i, j](const SectorBasis& b) {
    std::vector<Triplet> trip;
    for (std::size_t f = 0; f < b.occ.size(); ++f) {
      const std::uint64_t m = b.occ[f];
      double sign = 0.0;
      std::uint64_t m2 = m;
      if (i == j) {
        if ((m >> i) & 1) sign = 1.0;
      } else if (((m >> j) & 1) && !((m >> i) & 1)) {
        const std::uint64_t m1 = m ^ (std::uint64_t{1} << j);
        sign = fermion_sign_below(m1, i) * fermion_sign_below(m, j);
        m2 = m1 | (std::uint64_t{1} << i);
      }
      if (sign == 0.0) continue;
      const std::size_t g2 = b.occ_pos(m2);
      for (std::uint64_t s = 0; s < b.spin_states; ++s)
        trip.emplace_back(static_cast<int>(b.index(g2, s)), static_cast<int>(b.index(f, s)), sign);
    }
    SparseMatrix O(static_cast<Eigen::Index>(b.dim()), static_cast<Eigen::Index>(b.dim()));
    O.setFromTriplets(trip.begin(), trip.end());
    return O;
  };
}
}  // namespace ops

/// Grand-canonical ensemble exp(-beta (H - mu n)) over the computed sectors. H already
/// holds the model chemical potential, so `mu` is an extra shift (0 for the model itself).
///
/// At the T = 0 sentinel the ensemble is the equal-weight mixture of the global
/// ground manifold of H - mu n. Weights below 1e-14 of the largest are dropped.
struct ThermalEnsemble {
  struct Member {
    int n;
    int level;
    double weight;
  };
  std::vector<Member> members;
  const ManyBodySpectrum* spec = nullptr;

  double expectation(const SectorOperator& O) const {
    double acc = 0.0;
    std::map<int, std::vector<const Member*>> by_sector;
    for (const auto& m : members) by_sector[m.n].push_back(&m);
    for (const auto& [n, list] : by_sector) {
      const Sector& s = spec->sector(n);
      const SparseMatrix op = O(s.basis);
      if (op.rows() != static_cast<Eigen::Index>(s.basis.dim()) || op.cols() != op.rows())
        throw Error("observable dimension does not match sector");
      for (const Member* m : list) {
        const auto v = s.vectors.col(m->level);
        acc += m->weight * v.dot(op * v);
      }
    }
    return acc;
  }
};

inline ThermalEnsemble thermal_ensemble(const ManyBodySpectrum& spec, InverseTemperature beta, double mu) {
  if (!(beta.value > 0.0)) throw Error("thermal_expectation: beta must be positive");
  ThermalEnsemble ens;
  ens.spec = &spec;
  double emin = std::numeric_limits<double>::infinity();
  for (const auto& [n, s] : spec.sectors) emin = std::min(emin, s.energies(0) - mu * n);
  if (beta.is_zero_temperature()) {
    for (const auto& [n, s] : spec.sectors)
      for (Eigen::Index a = 0; a < s.energies.size(); ++a)
        if (spec.degenerate(s.energies(a) - mu * n, emin)) ens.members.push_back({n, static_cast<int>(a), 1.0});
  } else {
    for (const auto& [n, s] : spec.sectors)
      for (Eigen::Index a = 0; a < s.energies.size(); ++a) {
        const double w = std::exp(-beta.value * (s.energies(a) - mu * n - emin));
        if (w < 1e-14) continue;
        if (!s.complete) throw Error("finite-temperature ensemble needs complete sector spectra");
        ens.members.push_back({n, static_cast<int>(a), w});
      }
  }
  double z = 0.0;
  for (const auto& m : ens.members) z += m.weight;
  for (auto& m : ens.members) m.weight /= z;
  return ens;
}

inline double thermal_expectation(const ManyBodySpectrum& spec, InverseTemperature beta, double mu, const SectorOperator& O) {
  return thermal_ensemble(spec, beta, mu).expectation(O);
}

/// Neel observables from an ED ensemble: <I^z_i>, <I^x_i>, <n_i> and <I^z_ref I^z_j>.
struct EdSiteData {
  std::vector<double> density, spin_z, spin_x;
  std::vector<double> zz_ref;  // <I^z_ref I^z_j>
  double total_n = 0.0;
  double energy = 0.0;  // <H>
};

inline EdSiteData ed_site_data(const ThermalEnsemble& ens, int ref = 0) {
  const int N = ens.spec->n_sites;
  EdSiteData d;
  for (int i = 0; i < N; ++i) {
    d.density.push_back(ens.expectation(ops::number(i)));
    d.spin_z.push_back(ens.expectation(ops::spin_z(i)));
    d.spin_x.push_back(ens.expectation(ops::spin_x(i)));
    d.zz_ref.push_back(ens.expectation(ops::spin_zz(ref, i)));
  }
  for (double x : d.density) d.total_n += x;
  for (const auto& m : ens.members) d.energy += m.weight * ens.spec->sector(m.n).energies(m.level);
  return d;
}

inline nlohmann::json to_json(const ManyBodySpectrum& spec) {
  nlohmann::json j;
  j["n_sites"] = spec.n_sites;
  j["S"] = spec.S;
  j["degeneracy_tol"] = spec.degeneracy_tol;
  auto& secs = j["sectors"] = nlohmann::json::array();
  for (const auto& [n, s] : spec.sectors) {
    std::vector<double> e(s.energies.data(), s.energies.data() + s.energies.size());
    secs.push_back({{"n", n}, {"dim", s.basis.dim()}, {"complete", s.complete}, {"energies", e}});
  }
  auto& cr = j["creation"] = nlohmann::json::object();
  for (const auto& [site, per_n] : spec.creation)
    for (const auto& [n, M] : per_n) {
      nlohmann::json rows = nlohmann::json::array();
      for (Eigen::Index r = 0; r < M.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(M.cols()));
        for (Eigen::Index c = 0; c < M.cols(); ++c) row[static_cast<std::size_t>(c)] = M(r, c);
        rows.push_back(row);
      }
      cr[std::to_string(site)][std::to_string(n)] = rows;
    }
  return j;
}

}  // namespace rjr
