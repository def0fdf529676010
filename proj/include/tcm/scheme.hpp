#pragma once

// Explicit right-hand sides of the semi-implicit scheme. Kept apart from the
// stepper so the energy ledger can rebuild exactly the terms a step used.

#include <cmath>
#include <functional>

#include "tcm/coeffs.hpp"
#include "tcm/elliptic.hpp"
#include "tcm/grid.hpp"
#include "tcm/ops.hpp"

namespace tcm {

/// Source terms evaluated at the new time level. Empty members mean zero.
struct Forcing {
  std::function<ScalarField(const Grid&, double)> theta;
  std::function<VectorField(const Grid&, double)> v;
  std::function<VectorField(const Grid&, double)> u;

  bool empty() const { return !theta && !v && !u; }
};

enum class DtPolicy { fixed, cfl };

struct StepConfig {
  DtPolicy policy = DtPolicy::fixed;
  double dt = 1e-3;
  double cfl_target = 0.5;
  double dt_min = 1e-8;
  double dt_max = 1e-2;
  double speed_floor = 1e-12;
  double end_time = 1.0;
  AdvectionForm advection = AdvectionForm::skew;
  bool transport = true;         ///< (u . grad) terms
  bool coupling = true;          ///< grad theta, div v, (v . grad) u, div(v (x) v)
  bool freeze_velocity = false;  ///< hold u and v fixed, advance theta only
  SolverSpec diffusion_solver{1e-12, 20000};
  SolverSpec projection_solver{1e-12, 200};
  Forcing forcing;

  void validate() const {
    if (!(cfl_target > 0.0 && cfl_target <= 1.0))
      throw ConfigError("cfl_target must lie in (0, 1]");
    if (!(end_time >= 0.0) || !std::isfinite(end_time))
      throw ConfigError("end_time must be finite and non-negative");
    if (policy == DtPolicy::fixed && !(dt > 0.0)) throw ConfigError("dt must be positive");
    if (!(dt_min > 0.0) || !(dt_max >= dt_min)) throw ConfigError("need 0 < dt_min <= dt_max");
    if (!(speed_floor > 0.0)) throw ConfigError("speed_floor must be positive");
    diffusion_solver.validate();
    projection_solver.validate();
  }
};

/// Explicit parts of the three updates. `n_*` include the forcing.
struct ExplicitTerms {
  ScalarField n_theta;
  VectorField n_v;
  VectorField n_u;
  ScalarField f_theta;
  VectorField f_v;
  VectorField f_u;
  double coupling = 0.0;        ///< sum of <transport/coupling part, old field>
  double coupling_scale = 0.0;  ///< sum of the absolute pairings (roundoff scale)
};

inline ExplicitTerms explicit_terms(const State& s, const StepConfig& sc, double t_force) {
  const Grid& g = s.grid();
  ExplicitTerms e{ScalarField(g, s.theta.bc()), VectorField(g, s.v.bc()),
                  VectorField(g, s.u.bc()), ScalarField(g, s.theta.bc()),
                  VectorField(g, s.v.bc()), VectorField(g, s.u.bc())};
  auto pair = [&](const auto& term, const auto& field) {
    e.coupling += inner(term, field);
    e.coupling_scale += abs_inner(term, field);
  };

  if (sc.transport) {
    const auto a = advect(s.u, s.theta, sc.advection);
    e.n_theta -= a;
    pair(-1.0 * a, s.theta);
  }
  if (sc.coupling) {
    const auto d = divergence(s.v, s.theta.bc());
    e.n_theta -= d;
    pair(-1.0 * d, s.theta);
  }
  if (!sc.freeze_velocity) {
    if (sc.transport) {
      const auto av = advect(s.u, s.v, sc.advection);
      const auto au = advect(s.u, s.u, sc.advection);
      e.n_v -= av;
      e.n_u -= au;
      pair(-1.0 * av, s.v);
      pair(-1.0 * au, s.u);
    }
    if (sc.coupling) {
      const auto gt = gradient(s.theta, s.v.bc());
      const auto cv = convect(s.v, s.u);
      const auto tv = tensor_div(s.v);
      e.n_v -= gt;
      e.n_v -= cv;
      e.n_u -= tv;
      pair(-1.0 * gt, s.v);
      pair(-1.0 * cv, s.v);
      pair(-1.0 * tv, s.u);
    }
  }
  if (sc.forcing.theta) {
    e.f_theta = sc.forcing.theta(g, t_force);
    e.n_theta += e.f_theta;
  }
  if (!sc.freeze_velocity) {
    if (sc.forcing.v) {
      e.f_v = sc.forcing.v(g, t_force);
      e.n_v += e.f_v;
    }
    if (sc.forcing.u) {
      e.f_u = sc.forcing.u(g, t_force);
      e.n_u += e.f_u;
    }
  }
  return e;
}

}  // namespace tcm
