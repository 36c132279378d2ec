#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "rjr/ed.hpp"
#include "rjr/meanfield.hpp"
#include "rjr/observables.hpp"

using namespace rjr;
using Eigen::MatrixXd;

namespace {

SpinField neel_spins(const LatticeGraph& g, double S) {
  SpinField s = SpinField::Zero(3, g.size());
  for (int i = 0; i < g.size(); ++i) s(2, i) = S * g.sublattice[static_cast<std::size_t>(i)];
  return s;
}

}  // namespace

TEST(NeelOrder, PerfectNeelForEveryS) {
  const auto g = build_lattice(Geometry::square, 4, 4, 4.7, Boundary::periodic);
  for (double S : {0.5, 1.0, 1.5, 4.5}) {
    const auto r = neel_order(neel_spins(g, S), g, S);
    EXPECT_NEAR(r.n_z, -1.0, 1e-14) << S;
    EXPECT_NEAR(r.raw, -S, 1e-14) << S;
    SpinField flipped = -neel_spins(g, S);
    EXPECT_NEAR(neel_order(flipped, g, S).n_z, -1.0, 1e-14);
  }
}

TEST(NeelOrder, AlignedAndSingleFlip) {
  const auto g = build_lattice(Geometry::chain, 10, 1, 4.7, Boundary::periodic);
  SpinField up = SpinField::Zero(3, 10);
  up.row(2).setConstant(0.5);
  EXPECT_NEAR(neel_order(up, g, 0.5).n_z, 0.0, 1e-14);
  SpinField s = neel_spins(g, 0.5);
  s(2, 3) = -s(2, 3);
  EXPECT_NEAR(neel_order(s, g, 0.5).n_z, -8.0 / 10.0, 1e-14);
  // Using the flipped site as reference reverses every factor.
  EXPECT_NEAR(neel_order(s, g, 0.5, 3).n_z, 8.0 / 10.0, 1e-14);
}

TEST(NeelOrder, RandomSpinsAverageToZero) {
  const int N = 10000;
  const auto g = build_lattice(Geometry::chain, N, 1, 4.7, Boundary::periodic);
  double mean_abs = 0.0;
  for (unsigned seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    SpinField s = SpinField::Zero(3, N);
    for (int i = 0; i < N; ++i) s(2, i) = 0.5 * u(rng);
    mean_abs += std::abs(neel_order(s, g, 0.5).n_z) / 100.0;
  }
  EXPECT_LT(mean_abs, 0.05);
}

TEST(NeelOrder, EdRequiresReferenceZero) {
  const auto g = build_lattice(Geometry::chain, 4, 1, 4.7, Boundary::periodic);
  EdSiteData d;
  d.zz_ref = {0.25, -0.25, 0.25, -0.25};
  EXPECT_NEAR(neel_order(d, g, 0.5).n_z, -1.0, 1e-14);
  EXPECT_THROW(neel_order(d, g, 0.5, 1), Error);
  d.zz_ref.pop_back();
  EXPECT_THROW(neel_order(d, g, 0.5), Error);
}

TEST(Pairing, Average) {
  EXPECT_EQ(pairing_average(MatrixXd::Zero(3, 3)), 0.0);
  EXPECT_EQ(pairing_average(MatrixXd(0, 0)), 0.0);
  MatrixXd K = MatrixXd::Zero(2, 2);
  K(0, 1) = 2.0;
  K(1, 0) = -2.0;
  EXPECT_NEAR(pairing_average(K), 2.0, 1e-15);
  EXPECT_THROW(pairing_average(MatrixXd::Zero(2, 3)), Error);
}

TEST(Correlator, FreeFermionHalfFilledChain) {
  const int N = 402;  // closed shell at N/2
  const auto g = build_lattice(Geometry::chain, N, 1, 4.7, Boundary::periodic);
  ModelParams p;
  p.set_g(0.0);
  p.V0 = 0.0;
  SolverConfig cfg;
  cfg.kind = SolverKind::hf;
  cfg.restarts = 1;
  const auto st = solve(g, p, cfg);
  ASSERT_TRUE(st.converged);
  const auto c = correlator_profile(st.rho, g, 7, 40);
  const double pi = std::numbers::pi;
  for (int d = 0; d <= 40; ++d) {
    double finite = 0.0;
    for (int m = -(N / 4); m <= N / 4; ++m) finite += std::cos(2.0 * pi * m * d / N) / N;
    EXPECT_NEAR(c[static_cast<std::size_t>(d)], finite, 1e-10) << d;
    const double infinite = d == 0 ? 0.5 : std::sin(pi * d / 2.0) / (pi * d);
    EXPECT_NEAR(c[static_cast<std::size_t>(d)], infinite, 2e-3) << d;
  }
}

TEST(Correlator, RangeChecks) {
  const auto ring = build_lattice(Geometry::chain, 10, 1, 4.7, Boundary::periodic);
  const auto open = build_lattice(Geometry::chain, 10, 1, 4.7, Boundary::open);
  const MatrixXd rho = MatrixXd::Identity(10, 10);
  EXPECT_NO_THROW(correlator_profile(rho, ring, 9, 5));
  EXPECT_THROW(correlator_profile(rho, ring, 0, 6), Error);
  EXPECT_THROW(correlator_profile(rho, open, 5, 5), Error);
  EXPECT_THROW(correlator_profile(rho, open, -1, 2), Error);
}

TEST(Correlator, EdProfileIsHermitian) {
  const auto g = build_lattice(Geometry::chain, 4, 1, 4.7, Boundary::open);
  ModelParams p;
  p.h_z = -0.3;
  p.h_x = 0.05;
  p.mu = 3.0;
  const auto spec = compute_spectrum(g, p);
  const auto ens = thermal_ensemble(spec, InverseTemperature::from_beta(0.5), 0.0);
  const auto fwd = correlator_profile(ens, g, 0, 3);
  for (int d = 1; d <= 3; ++d) {
    EXPECT_NEAR(fwd[static_cast<std::size_t>(d)], ens.expectation(ops::hopping(0, d)), 1e-13);
    EXPECT_NEAR(ens.expectation(ops::hopping(0, d)), ens.expectation(ops::hopping(d, 0)), 1e-12);
  }
  EXPECT_NEAR(fwd[0], ens.expectation(ops::number(0)), 1e-13);
}

TEST(CdwFit, RecoversSyntheticParameters) {
  const double rho0 = 0.01, A = 0.3, B = std::numbers::pi / 2, delta = 0.2, phi = 0.4;
  std::vector<double> d, c;
  for (int k = 1; k <= 20; ++k) {
    d.push_back(k);
    c.push_back(cdw_model(rho0, A, B, delta, phi, k));
  }
  const auto f = cdw_fit(d, c);
  EXPECT_NEAR(f.rho0, rho0, 0.05 * std::abs(rho0));
  EXPECT_NEAR(f.A, A, 0.05 * A);
  EXPECT_NEAR(f.B, B, 0.05 * B);
  EXPECT_NEAR(f.delta, delta, 0.05 * delta);
  EXPECT_NEAR(f.phi, phi, 0.05 * phi);
  EXPECT_LT(f.mse, 1e-12);
}

TEST(CdwFit, FreeFermionWavevector) {
  std::vector<double> d, c;
  for (int k = 1; k <= 20; ++k) {
    d.push_back(k);
    c.push_back(std::sin(std::numbers::pi * k / 2.0) / (std::numbers::pi * k));
  }
  const auto f = cdw_fit(d, c);
  EXPECT_NEAR(f.B, std::numbers::pi / 2, 1e-3);
  EXPECT_NEAR(f.delta, 0.0, 1e-3);
  EXPECT_NEAR(f.A, 1.0 / std::numbers::pi, 1e-3);
}

TEST(CdwFit, ExponentialFamilyWinsOnExponentialData) {
  std::vector<double> d, c;
  for (int k = 1; k <= 16; ++k) {
    d.push_back(k);
    c.push_back(0.5 * std::exp(-0.3 * k));
  }
  const auto f = cdw_fit(d, c);
  EXPECT_NEAR(f.exp_gamma, 0.3, 1e-6);
  EXPECT_NEAR(f.exp_C, 0.5, 1e-6);
  EXPECT_LE(f.exp_mse, f.mse);
}

TEST(CdwFit, RejectsBadInput) {
  EXPECT_THROW(cdw_fit({1, 2, 3}, {1, 2, 3}), Error);
  EXPECT_THROW(cdw_fit({0, 1, 2, 3, 4, 5, 6, 7}, std::vector<double>(8, 0.1)), Error);
  EXPECT_THROW(cdw_fit({1, 2}, {1.0}), Error);
}

TEST(Spearman, Values) {
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0, 1e-15);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0, 1e-15);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {1, 3, 2, 4}), 0.8, 1e-15);
  // Monotone transforms leave the rank correlation unchanged.
  EXPECT_NEAR(spearman({1, 2, 3, 4, 5}, {std::exp(1.0), std::exp(2.0), std::exp(3.0), std::exp(5.0), std::exp(4.0)}),
              spearman({1, 2, 3, 4, 5}, {1, 2, 3, 5, 4}), 1e-15);
  EXPECT_THROW(spearman({1}, {1}), Error);
}

TEST(StaticPotential, ReferencedToLargestSeparation) {
  const auto g = build_lattice(Geometry::chain, 20, 1, 4.7, Boundary::periodic);
  ModelParams p;
  p.set_g(0.8 * p.t / p.S);
  p.h_z = -0.4 * p.t / p.S;
  p.V0 = 0.0;
  const auto rows = static_potential(g, p, SolverConfig{}, {7, 3, 5});
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].d, 3);
  EXPECT_EQ(rows[2].d, 7);
  EXPECT_EQ(rows[2].V, 0.0);
  for (const auto& r : rows) {
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.V, r.energy - rows[2].energy, 1e-12);
    EXPECT_NEAR(r.state.total_n, 11.0, 1e-8);
  }
  EXPECT_THROW(static_potential(g, p, SolverConfig{}, {}), Error);
  const auto sq = build_lattice(Geometry::square, 4, 4, 4.7, Boundary::periodic);
  EXPECT_THROW(static_potential(sq, p, SolverConfig{}, {3}), Error);
}

TEST(FractionalCharge, SumRuleAndLocalization) {
  const int N = 30;
  MatrixXd bg = MatrixXd::Zero(N, N);
  for (int i = 0; i < N; ++i) bg(i, i) = 0.5 + 0.2 * (i % 2 ? 1.0 : -1.0);
  const auto none = fractional_density_check(bg, bg, 5, 11);
  EXPECT_EQ(none.total, 0.0);
  EXPECT_EQ(none.q_left, 0.0);
  EXPECT_EQ(none.q_right, 0.0);

  MatrixXd pinned = bg;
  pinned(5, 5) += 0.5;
  pinned(16, 16) += 0.5;
  // Swapping the Neel domain between the walls adds a period-2 pattern there.
  for (int i = 6; i < 16; ++i) pinned(i, i) -= 2.0 * 0.2 * (i % 2 ? 1.0 : -1.0);
  const auto q = fractional_density_check(pinned, bg, 5, 11);
  EXPECT_NEAR(q.total, q.q_left + q.q_right + q.remainder, 1e-14);
  EXPECT_NEAR(q.q_left + q.q_right, q.total, 0.5);
  EXPECT_THROW(fractional_density_check(pinned, bg, 5, 11, 0), Error);
  EXPECT_THROW(fractional_density_check(pinned, MatrixXd::Zero(3, 3), 5, 11), Error);
}

TEST(FractionalCharge, CancelsUniformStagger) {
  const int N = 30;
  MatrixXd bg = 0.5 * MatrixXd::Identity(N, N);
  MatrixXd pinned = bg;
  for (int i = 0; i < N; ++i) pinned(i, i) += 0.1 * (i % 2 ? 1.0 : -1.0);
  pinned(20, 20) += 0.5;
  const auto q = fractional_density_check(pinned, bg, 9, 11, 4);
  EXPECT_NEAR(q.q_left, 0.0, 1e-14);
  EXPECT_NEAR(q.q_right, 0.5, 1e-14);
  EXPECT_NEAR(q.total, 0.5, 1e-14);
}

TEST(Report, MatchesComponents) {
  const auto g = build_lattice(Geometry::chain, 6, 1, 4.7, Boundary::periodic);
  ModelParams p;
  p.set_g(0.5 * p.t / p.S);
  p.h_z = -0.25 * p.t / p.S;
  SolverConfig cfg;
  cfg.kind = SolverKind::hf;
  const auto st = solve(g, p, cfg);
  const auto r = report(st, g, p.S);
  EXPECT_EQ(r.n_z, neel_order(st.spins, g, p.S).n_z);
  EXPECT_EQ(r.site_density.size(), 6u);
  EXPECT_NEAR(r.total_n, 3.0, 1e-8);
  const auto rows = scalar_rows(r);
  EXPECT_EQ(rows.front().first, "n_z");
  EXPECT_EQ(to_json(r)["provenance"]["solver"], "meanfield");
}
