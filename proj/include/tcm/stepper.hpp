#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tcm/coeffs.hpp"
#include "tcm/diagnostics.hpp"
#include "tcm/elliptic.hpp"
#include "tcm/grid.hpp"
#include "tcm/ops.hpp"
#include "tcm/scheme.hpp"

namespace tcm {

/// dt = cfl * min(hx, hy) / max(max_x (|u| + |v|), floor), clamped to
/// [dt_min, dt_max].
inline double compute_dt(const State& s, const StepConfig& sc) {
  double speed = 0.0;
  for (std::size_t k = 0; k < s.theta.size(); ++k)
    speed = std::max(speed, std::hypot(s.u.x[k], s.u.y[k]) + std::hypot(s.v.x[k], s.v.y[k]));
  const Grid& g = s.grid();
  const double dt = sc.cfl_target * std::min(g.hx(), g.hy()) / std::max(speed, sc.speed_floor);
  return std::clamp(dt, sc.dt_min, sc.dt_max);
}

struct StepInfo {
  double dt = 0.0;
  SolveStats theta, vx, vy, ux, uy, projection;
};

/// One solver context per grid: caches the projection and the spectral
/// preconditioners so repeated steps do not rebuild them.
class Stepper {
 public:
  Stepper(const Grid& g, CoeffSet c, StepConfig sc)
      : grid_(g), coeffs_(std::move(c)), sc_(std::move(sc)) {
    sc_.validate();
  }

  const StepConfig& config() const { return sc_; }
  const CoeffSet& coeffs() const { return coeffs_; }

  double dt_for(const State& s) const {
    return sc_.policy == DtPolicy::fixed ? sc_.dt : compute_dt(s, sc_);
  }

  /// Advances by dt: theta, then v, then u* and the projection. All
  /// explicit terms and the diffusion coefficients use the old state.
  State step(const State& s, double dt, StepInfo* info = nullptr) const {
    if (!(dt > 0.0)) throw DomainError("time step must be positive");
    detail::check_same(grid_, s.grid());
    State next = s;
    next.t = s.t + dt;
    next.step = s.step + 1;
    const auto cf = eval_coeffs(coeffs_, s.theta);
    const auto terms = explicit_terms(s, sc_, next.t);
    if (!terms.n_theta.all_finite() || !terms.n_v.all_finite() || !terms.n_u.all_finite())
      throw Error("non-finite explicit terms at step " + std::to_string(next.step) +
                  " (t = " + std::to_string(next.t) + ")");
    StepInfo local;
    StepInfo& st = info ? *info : local;
    st.dt = dt;

    ScalarField rhs = s.theta;
    rhs.axpy(dt, terms.n_theta);
    auto r = implicit(cf.kappa, dt, rhs, s.theta);
    next.theta = std::move(r.f);
    st.theta = r.stats;

    if (!sc_.freeze_velocity) {
      for (int c = 0; c < 2; ++c) {
        const ScalarField& old = c == 0 ? s.v.x : s.v.y;
        rhs = old;
        rhs.axpy(dt, c == 0 ? terms.n_v.x : terms.n_v.y);
        r = implicit(cf.nu, dt, rhs, old);
        (c == 0 ? next.v.x : next.v.y) = std::move(r.f);
        (c == 0 ? st.vx : st.vy) = r.stats;
      }
      VectorField u_star = s.u;
      for (int c = 0; c < 2; ++c) {
        const ScalarField& old = c == 0 ? s.u.x : s.u.y;
        rhs = old;
        rhs.axpy(dt, c == 0 ? terms.n_u.x : terms.n_u.y);
        r = implicit(cf.mu, dt, rhs, old);
        (c == 0 ? u_star.x : u_star.y) = std::move(r.f);
        (c == 0 ? st.ux : st.uy) = r.stats;
      }
      ScalarField guess = s.p;
      guess *= dt;
      auto pr = projector()(u_star, sc_.projection_solver, &guess);
      next.u = std::move(pr.u);
      pr.phi *= 1.0 / dt;
      next.p = std::move(pr.phi);
      st.projection = pr.stats;
    }
    if (!next.all_finite())
      throw Error("non-finite state produced at step " + std::to_string(next.step) +
                  " (t = " + std::to_string(next.t) + ")");
    return next;
  }

 private:
  HelmholtzResult implicit(const ScalarField& a, double dt, const ScalarField& rhs,
                           const ScalarField& guess) const {
    double amax = 0.0;
    for (double v : a.values()) amax = std::max(amax, v);
    const double stiffness =
        dt * amax * (1.0 / (grid_.hx() * grid_.hx()) + 1.0 / (grid_.hy() * grid_.hy()));
    const SpectralSolver* pre = stiffness > 20.0 ? &spectral(rhs.bc()) : nullptr;
    return solve_helmholtz_var(a, dt, rhs, rhs.bc(), sc_.diffusion_solver, &guess, pre);
  }

  const SpectralSolver& spectral(Bc bc) const {
    auto& slot = bc == Bc::dirichlet ? fd_dirichlet_ : fd_neumann_;
    if (!slot) slot = std::make_shared<SpectralSolver>(grid_, SpectralSolver::Kind::compact, bc);
    return *slot;
  }

  const Projector& projector() const {
    if (!projector_) projector_ = std::make_shared<Projector>(grid_);
    return *projector_;
  }

  Grid grid_;
  CoeffSet coeffs_;
  StepConfig sc_;
  mutable std::shared_ptr<SpectralSolver> fd_dirichlet_, fd_neumann_;
  mutable std::shared_ptr<Projector> projector_;
};

inline State step(const State& s, const CoeffSet& c, const StepConfig& sc,
                  StepInfo* info = nullptr) {
  Stepper st(s.grid(), c, sc);
  return st.step(s, st.dt_for(s), info);
}

struct RunOptions {
  long record_interval = 1;
  long snapshot_interval = 0;  ///< 0 keeps only the first and last snapshot
  long max_steps = -1;         ///< stop early after this many steps (negative: no cap)
  std::function<void(const State& prev, const State& next, const EnergyRecord&)> on_step;
};

struct RunResult {
  State final;
  std::vector<EnergyRecord> records;  ///< initial, every record_interval, last
  std::vector<EnergyRecord> history;  ///< every step, initial included
  std::vector<Snapshot> snapshots;
  long steps = 0;
  bool reached_end = false;
  double max_energy_increase = 0.0;   ///< max over steps of max(dE, 0) / E_prev
  double max_ledger_residual = 0.0;
  double max_coupling_residual = 0.0;
  std::string error;                  ///< message of the step failure, if any
};

/// Steps from `init` until end_time (or max_steps). On a step failure the
/// partial result is handed to `on_abort` before the exception propagates.
inline RunResult run(const State& init, const CoeffSet& c, const StepConfig& sc,
                     const RunOptions& opt = {},
                     const std::function<void(const RunResult&)>& on_abort = {}) {
  if (opt.record_interval < 1) throw ConfigError("record_interval must be at least 1");
  if (opt.snapshot_interval < 0) throw ConfigError("snapshot_interval must be non-negative");
  const Stepper stepper(init.grid(), c, sc);
  RunResult res{init, {}, {}, {}, 0, false, 0.0, 0.0, 0.0, {}};
  res.records.push_back(state_record(init));
  res.history.push_back(res.records.back());
  res.snapshots.push_back({init.t, init.theta, init.v});
  const double t_end = sc.end_time;
  const double eps = 1e-12 * std::max(1.0, t_end);
  State cur = init;
  try {
    while (cur.t < t_end - eps && (opt.max_steps < 0 || res.steps < opt.max_steps)) {
      double dt = stepper.dt_for(cur);
      if (cur.t + dt > t_end - eps) dt = t_end - cur.t;
      State next = stepper.step(cur, dt);
      const auto rec = energy_ledger(cur, next, dt, c, sc);
      const double e0 = res.history.back().energy;
      if (e0 > 0.0) res.max_energy_increase = std::max(res.max_energy_increase, rec.d_energy / e0);
      res.max_ledger_residual = std::max(res.max_ledger_residual, rec.ledger_residual);
      res.max_coupling_residual = std::max(res.max_coupling_residual, rec.coupling_residual);
      res.history.push_back(rec);
      ++res.steps;
      const bool last = !(next.t < t_end - eps) || res.steps == opt.max_steps;
      if (next.step % opt.record_interval == 0 || last) res.records.push_back(rec);
      if ((opt.snapshot_interval > 0 && next.step % opt.snapshot_interval == 0) || last)
        if (res.snapshots.back().t != next.t) res.snapshots.push_back({next.t, next.theta, next.v});
      if (opt.on_step) opt.on_step(cur, next, rec);
      cur = std::move(next);
    }
  } catch (const std::exception& e) {
    res.final = cur;
    res.error = e.what();
    if (on_abort) on_abort(res);
    throw;
  }
  res.reached_end = !(cur.t < t_end - eps);
  res.final = std::move(cur);
  return res;
}

}  // namespace tcm
