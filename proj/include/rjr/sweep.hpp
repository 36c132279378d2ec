#pragma once

// Grid sweeps over model parameters. Points run on a worker pool; results are
// stored by grid index, so the output does not depend on scheduling.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "rjr/config.hpp"
#include "rjr/ed.hpp"
#include "rjr/meanfield.hpp"
#include "rjr/observables.hpp"

namespace rjr {

struct PointResult {
  std::size_t index = 0;
  std::vector<double> coords;  // one value per axis
  ModelParams params;
  ObservableReport report;
  bool ok = false;
  bool converged = false;
  int iterations = 0;
  int omega_violations = 0;
  double mu = 0.0;
  std::string error;
};

struct SweepResult {
  std::vector<std::string> axis_names;
  std::vector<PointResult> points;
};

/// Cartesian grid; the last axis varies fastest. No axes gives one point.
inline std::vector<std::vector<double>> grid_points(const std::vector<SweepAxis>& axes) {
  std::vector<std::vector<double>> pts{{}};
  for (const auto& ax : axes) {
    std::vector<std::vector<double>> next;
    for (const auto& p : pts)
      for (double v : ax.values()) {
        auto q = p;
        q.push_back(v);
        next.push_back(std::move(q));
      }
    pts = std::move(next);
  }
  return pts;
}

inline ModelParams params_at(const RunConfig& cfg, const std::vector<SweepAxis>& axes, const std::vector<double>& coords) {
  ModelParams p = cfg.model;
  for (std::size_t k = 0; k < axes.size(); ++k) apply_parameter(p, cfg.lattice.a, axes[k].name, coords[k]);
  if (cfg.hx_over_hz) p.h_x = *cfg.hx_over_hz * std::abs(p.h_z);
  p.validate();
  return p;
}

/// Solves one point with the configured method. `warm` seeds mean-field runs and
/// receives the converged state.
inline PointResult evaluate_point(const RunConfig& cfg, const LatticeGraph& g, const ModelParams& p,
                                  std::optional<MeanFieldState>* warm = nullptr) {
  PointResult r;
  r.params = p;
  r.mu = p.mu;
  try {
    switch (cfg.method) {
      case Method::ed: {
        const auto spec = compute_spectrum(g, p);
        const auto ens = thermal_ensemble(spec, p.beta, 0.0);
        r.report = report(ed_site_data(ens), g, p.S);
        r.converged = true;
        break;
      }
      case Method::hf:
      case Method::fthfb: {
        MeanFieldState st;
        if (cfg.method == Method::fthfb && cfg.tune_mu) {
          auto res = tune_chemical_potential(g, p, cfg.solver, p.filling * g.size());
          st = std::move(res.state);
          r.mu = res.mu;
        } else {
          const auto pr = make_problem(g, p);
          const MeanFieldState* seed = warm && *warm ? &**warm : nullptr;
          st = solve(pr, cfg.solver, seed);
          if (seed && !st.converged) st = solve(pr, cfg.solver);
        }
        r.report = report(st, g, p.S);
        r.converged = st.converged;
        r.iterations = st.iterations;
        r.omega_violations = st.omega_violations;
        if (warm) *warm = std::move(st);
        break;
      }
    }
    r.ok = true;
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
  }
  return r;
}

/// Runs every grid point. With warm_start, each line along the first axis is one
/// sequential task seeded by its previous point; otherwise points are independent.
inline SweepResult run_sweep(const RunConfig& cfg, int workers = 1) {
  const LatticeGraph g = cfg.lattice.build();
  const auto pts = grid_points(cfg.axes);
  SweepResult out;
  for (const auto& ax : cfg.axes) out.axis_names.push_back(ax.name);
  out.points.resize(pts.size());

  const bool chain = cfg.warm_start && !cfg.axes.empty() && cfg.method != Method::ed;
  const std::size_t first_n = cfg.axes.empty() ? 1 : static_cast<std::size_t>(cfg.axes.front().points);
  const std::size_t stride = pts.size() / first_n;  // points per value of the first axis
  const std::size_t tasks = chain ? stride : pts.size();

  auto run_point = [&](std::size_t idx, std::optional<MeanFieldState>* warm) {
    PointResult r;
    try {
      r = evaluate_point(cfg, g, params_at(cfg, cfg.axes, pts[idx]), warm);
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }
    r.index = idx;
    r.coords = pts[idx];
    out.points[idx] = std::move(r);
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks; t = next++) {
      if (chain) {
        std::optional<MeanFieldState> warm;
        for (std::size_t k = 0; k < first_n; ++k) run_point(k * stride + t, &warm);
      } else {
        run_point(t, nullptr);
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(tasks)));
  std::vector<std::thread> pool;
  for (int w = 1; w < n_threads; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return out;
}

/// Fraction of successful points with |n_z| above `threshold`.
inline double neel_area(const SweepResult& s, double threshold = 0.5) {
  std::size_t n = 0, hit = 0;
  for (const auto& p : s.points) {
    if (!p.ok) continue;
    ++n;
    if (std::abs(p.report.n_z) > threshold) ++hit;
  }
  return n ? static_cast<double>(hit) / static_cast<double>(n) : 0.0;
}

}  // namespace rjr
