#pragma once

// End-to-end checks: operator algebra, manufactured solutions, decay,
// perturbation stability, energy ledger closure, variable-viscosity Stokes.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "tcm/coeffs.hpp"
#include "tcm/diagnostics.hpp"
#include "tcm/elliptic.hpp"
#include "tcm/grid.hpp"
#include "tcm/ops.hpp"
#include "tcm/stepper.hpp"

namespace tcm {

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline double rel_pair(double a, double b, double scale) {
  return scale > 0.0 ? std::abs(a + b) / scale : 0.0;
}

}  // namespace detail

// ---------------------------------------------------------------- fixtures

/// Smooth small data used by the dissipation, variable-coefficient and
/// perturbation experiments. u is the discrete projection of a curl field.
inline State small_data_state(const Grid& g, double amp = 0.1) {
  const double a = std::numbers::pi / g.lx(), b = std::numbers::pi / g.ly();
  State s(g);
  s.theta = make_field(g, g.bc().theta, [&](double x, double y) {
    return amp * (std::sin(a * x) * std::sin(b * y) +
                  0.5 * std::sin(2 * a * x) * std::sin(3 * b * y));
  });
  s.v.x = make_field(g, g.bc().v, [&](double x, double y) {
    return amp * std::sin(a * x) * std::sin(2 * b * y);
  });
  s.v.y = make_field(g, g.bc().v, [&](double x, double y) {
    return -amp * std::sin(2 * a * x) * std::sin(b * y);
  });
  const VectorField w(make_field(g, Bc::dirichlet,
                                 [&](double x, double y) {
                                   return amp * std::pow(std::sin(a * x), 2) * std::sin(2 * b * y);
                                 }),
                      make_field(g, Bc::dirichlet, [&](double x, double y) {
                        return -amp * std::sin(2 * a * x) * std::pow(std::sin(b * y), 2);
                      }));
  s.u = project_div_free(w, SolverSpec{}, nullptr).u;
  return s;
}

/// Fixed-seed combination of smooth bumps under a sine window, for every
/// unknown, scaled to unit total energy ||U||^2 + ||V||^2 + ||Theta||^2 = 1.
inline State perturbation_field(const Grid& g, std::uint64_t seed = 20240611) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> centre(0.2, 0.8), width(0.08, 0.2), amp(-1.0, 1.0);
  const double a = std::numbers::pi / g.lx(), b = std::numbers::pi / g.ly();
  auto bumps = [&](Bc bc) {
    struct Bump {
      double cx, cy, w, a;
    };
    std::vector<Bump> list;
    for (int k = 0; k < 6; ++k) list.push_back({centre(rng), centre(rng), width(rng), amp(rng)});
    return make_field(g, bc, [&](double x, double y) {
      double s = 0.0;
      for (const auto& p : list) {
        const double dx = x / g.lx() - p.cx, dy = y / g.ly() - p.cy;
        s += p.a * std::exp(-(dx * dx + dy * dy) / (p.w * p.w));
      }
      return s * std::sin(a * x) * std::sin(b * y);
    });
  };
  State p(g);
  p.theta = bumps(g.bc().theta);
  p.v = VectorField(bumps(g.bc().v), bumps(g.bc().v));
  p.u = project_div_free(VectorField(bumps(Bc::dirichlet), bumps(Bc::dirichlet)), SolverSpec{},
                         nullptr)
            .u;
  const double e = std::sqrt(total_energy(p));
  p.u *= 1.0 / e;
  p.v *= 1.0 / e;
  p.theta *= 1.0 / e;
  return p;
}

// ------------------------------------------------------- operator algebra

struct OperatorSuiteReport {
  int pairs = 0;
  double duality = 0.0;       ///< <grad f, w> + <f, div w>
  double skew = 0.0;          ///< <adv(u, f), g> + <f, adv(u, g)>
  double skew_self = 0.0;     ///< <adv(u, f), f>
  double tensor_pair = 0.0;   ///< <div(v (x) v), u> + <(v . grad) u, v>
  double gradient_pair = 0.0; ///< <grad theta, v> + <div v, theta>
  double tol = 1e-12;
  double seconds = 0.0;
  bool passed = false;
};

/// Relative residuals (sum over |pairings| as the scale) on random
/// dirichlet field pairs; the advection form is a parameter so the
/// non-skew form can serve as a negative control.
inline OperatorSuiteReport operator_algebra_suite(int n = 64, int pairs = 100,
                                                  AdvectionForm form = AdvectionForm::skew,
                                                  std::uint64_t seed = 1, double tol = 1e-12) {
  const auto t0 = std::chrono::steady_clock::now();
  const Grid g(n, n, 1.0, 1.0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  auto rnd = [&] {
    ScalarField f(g, Bc::dirichlet);
    for (double& v : f.values()) v = d(rng);
    return f;
  };
  OperatorSuiteReport r;
  r.pairs = pairs;
  r.tol = tol;
  for (int k = 0; k < pairs; ++k) {
    const ScalarField f = rnd(), h = rnd();
    const VectorField w(rnd(), rnd()), u(rnd(), rnd()), v(rnd(), rnd());
    const auto gf = gradient(f);
    const auto dw = divergence(w);
    r.duality = std::max(r.duality, detail::rel_pair(inner(gf, w), inner(f, dw),
                                                     abs_inner(gf, w) + abs_inner(f, dw)));
    const auto af = advect(u, f, form), ah = advect(u, h, form);
    r.skew = std::max(r.skew, detail::rel_pair(inner(af, h), inner(f, ah),
                                               abs_inner(af, h) + abs_inner(f, ah)));
    r.skew_self = std::max(r.skew_self, detail::rel_pair(inner(af, f), 0.0, abs_inner(af, f)));
    const auto td = tensor_div(v);
    const auto cv = convect(v, u);
    r.tensor_pair = std::max(r.tensor_pair, detail::rel_pair(inner(td, u), inner(cv, v),
                                                             abs_inner(td, u) + abs_inner(cv, v)));
    const auto gt = gradient(f);
    const auto dv = divergence(v);
    r.gradient_pair = std::max(r.gradient_pair, detail::rel_pair(inner(gt, v), inner(dv, f),
                                                                 abs_inner(gt, v) + abs_inner(dv, f)));
  }
  r.passed = r.duality <= tol && r.skew <= tol && r.skew_self <= tol && r.tensor_pair <= tol &&
             r.gradient_pair <= tol;
  r.seconds = detail::seconds_since(t0);
  return r;
}

// ---------------------------------------------------- manufactured solutions

struct MmsCase {
  std::string name;
  CoeffSet coeffs;
  bool steady = false;            ///< time factor 1 instead of exp(-t)
  bool discrete_forcing = false;  ///< forcing from the discrete operators
};

/// Time-dependent case with analytic forcing and all three coefficients
/// temperature dependent.
inline MmsCase mms_default() {
  MmsCase c;
  c.name = "analytic";
  c.coeffs.kappa = CoeffFn::quadratic(1.0, 1.0);
  c.coeffs.mu = CoeffFn::quadratic(1.0, 0.5);
  c.coeffs.nu = CoeffFn::gauss(1.0, 0.5);
  return c;
}

/// Steady case whose forcing is the discrete residual of the sampled
/// fields, so the exact samples are a fixed point of the scheme.
inline MmsCase mms_fixture() {
  MmsCase c = mms_default();
  c.name = "operator-consistent";
  c.steady = true;
  c.discrete_forcing = true;
  return c;
}

namespace detail {

struct Jet {
  double f = 0.0, fx = 0.0, fy = 0.0, lap = 0.0;
};

/// Spatial profiles: theta, v1, v2, u1, u2 (u the curl of
/// sin^2(ax) sin^2(by), a = pi/lx, b = pi/ly).
struct MmsProfile {
  double a, b;

  Jet theta(double x, double y) const {
    const double sx = std::sin(a * x), cx = std::cos(a * x), sy = std::sin(b * y),
                 cy = std::cos(b * y);
    return {sx * sy, a * cx * sy, b * sx * cy, -(a * a + b * b) * sx * sy};
  }
  Jet v1(double x, double y) const {
    const double f = std::sin(a * x) * std::sin(2 * b * y);
    return {f, a * std::cos(a * x) * std::sin(2 * b * y), 2 * b * std::sin(a * x) * std::cos(2 * b * y),
            -(a * a + 4 * b * b) * f};
  }
  Jet v2(double x, double y) const {
    const double f = std::sin(2 * a * x) * std::sin(b * y);
    return {f, 2 * a * std::cos(2 * a * x) * std::sin(b * y), b * std::sin(2 * a * x) * std::cos(b * y),
            -(4 * a * a + b * b) * f};
  }
  Jet u1(double x, double y) const {
    const double s2 = std::pow(std::sin(a * x), 2);
    const double f = b * s2 * std::sin(2 * b * y);
    const double fx = a * b * std::sin(2 * a * x) * std::sin(2 * b * y);
    const double fy = 2 * b * b * s2 * std::cos(2 * b * y);
    const double lap = 2 * a * a * b * std::cos(2 * a * x) * std::sin(2 * b * y) -
                       4 * b * b * b * s2 * std::sin(2 * b * y);
    return {f, fx, fy, lap};
  }
  Jet u2(double x, double y) const {
    const double t2 = std::pow(std::sin(b * y), 2);
    const double f = -a * std::sin(2 * a * x) * t2;
    const double fx = -2 * a * a * std::cos(2 * a * x) * t2;
    const double fy = -a * b * std::sin(2 * a * x) * std::sin(2 * b * y);
    const double lap = 4 * a * a * a * std::sin(2 * a * x) * t2 -
                       2 * a * b * b * std::sin(2 * a * x) * std::cos(2 * b * y);
    return {f, fx, fy, lap};
  }
};

inline double mms_time_factor(const MmsCase& c, double t) { return c.steady ? 1.0 : std::exp(-t); }
inline double mms_time_deriv(const MmsCase& c, double t) { return c.steady ? 0.0 : -std::exp(-t); }

struct MmsForcingFields {
  ScalarField theta;
  VectorField v, u;
};

inline MmsForcingFields mms_analytic_forcing(const MmsCase& c, const Grid& g, double t) {
  const MmsProfile p{std::numbers::pi / g.lx(), std::numbers::pi / g.ly()};
  const double gt = mms_time_factor(c, t), dg = mms_time_deriv(c, t);
  const auto& k = c.coeffs.kappa;
  const auto& nu = c.coeffs.nu;
  const auto& mu = c.coeffs.mu;
  MmsForcingFields f{ScalarField(g, g.bc().theta), VectorField(g, g.bc().v),
                     VectorField(g, Bc::dirichlet)};
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const double x = g.x(i), y = g.y(j);
      const Jet th = p.theta(x, y), a1 = p.v1(x, y), a2 = p.v2(x, y), w1 = p.u1(x, y),
                w2 = p.u2(x, y);
      const double theta = gt * th.f;
      const double kap = k(theta), dk = k.deriv(theta);
      const double nuv = nu(theta), dnu = nu.deriv(theta);
      const double muv = mu(theta), dmu = mu.deriv(theta);
      auto transport = [&](const Jet& q) { return w1.f * q.fx + w2.f * q.fy; };
      auto diffusion = [&](double cval, double cder, const Jet& q) {
        return cval * gt * q.lap + cder * gt * gt * (th.fx * q.fx + th.fy * q.fy);
      };
      f.theta(i, j) = dg * th.f + gt * gt * transport(th) - diffusion(kap, dk, th) +
                      gt * (a1.fx + a2.fy);
      const double vgu1 = a1.f * w1.fx + a2.f * w1.fy;
      const double vgu2 = a1.f * w2.fx + a2.f * w2.fy;
      f.v.x(i, j) = dg * a1.f + gt * gt * transport(a1) - diffusion(nuv, dnu, a1) + gt * th.fx +
                    gt * gt * vgu1;
      f.v.y(i, j) = dg * a2.f + gt * gt * transport(a2) - diffusion(nuv, dnu, a2) + gt * th.fy +
                    gt * gt * vgu2;
      const double divv = a1.fx + a2.fy;
      const double td1 = divv * a1.f + a1.f * a1.fx + a2.f * a1.fy;
      const double td2 = divv * a2.f + a1.f * a2.fx + a2.f * a2.fy;
      f.u.x(i, j) = dg * w1.f + gt * gt * transport(w1) - diffusion(muv, dmu, w1) + gt * gt * td1;
      f.u.y(i, j) = dg * w2.f + gt * gt * transport(w2) - diffusion(muv, dmu, w2) + gt * gt * td2;
    }
  return f;
}

}  // namespace detail

/// Exact samples at time t. For the operator-consistent case u is the
/// discrete projection of the sampled curl field.
inline State mms_exact(const MmsCase& c, const Grid& g, double t, bool project_u = true) {
  const detail::MmsProfile p{std::numbers::pi / g.lx(), std::numbers::pi / g.ly()};
  const double gt = detail::mms_time_factor(c, t);
  State s(g);
  s.theta = make_field(g, g.bc().theta, [&](double x, double y) { return gt * p.theta(x, y).f; });
  s.v.x = make_field(g, g.bc().v, [&](double x, double y) { return gt * p.v1(x, y).f; });
  s.v.y = make_field(g, g.bc().v, [&](double x, double y) { return gt * p.v2(x, y).f; });
  s.u.x = make_field(g, Bc::dirichlet, [&](double x, double y) { return gt * p.u1(x, y).f; });
  s.u.y = make_field(g, Bc::dirichlet, [&](double x, double y) { return gt * p.u2(x, y).f; });
  if (project_u) s.u = project_div_free(s.u, SolverSpec{}, nullptr).u;
  s.t = t;
  return s;
}

inline Forcing mms_forcing(const MmsCase& c, AdvectionForm form = AdvectionForm::skew) {
  Forcing f;
  if (!c.discrete_forcing) {
    auto cache = std::make_shared<std::pair<double, std::unique_ptr<detail::MmsForcingFields>>>();
    auto get = [c, cache](const Grid& g, double t) -> const detail::MmsForcingFields& {
      if (!cache->second || cache->first != t || cache->second->theta.grid().nx() != g.nx() ||
          cache->second->theta.grid().ny() != g.ny()) {
        cache->second = std::make_unique<detail::MmsForcingFields>(detail::mms_analytic_forcing(c, g, t));
        cache->first = t;
      }
      return *cache->second;
    };
    f.theta = [get](const Grid& g, double t) { return get(g, t).theta; };
    f.v = [get](const Grid& g, double t) { return get(g, t).v; };
    f.u = [get](const Grid& g, double t) { return get(g, t).u; };
    return f;
  }
  // steady: residual of the scheme's spatial operator at the exact samples
  auto cache = std::make_shared<std::unique_ptr<detail::MmsForcingFields>>();
  auto get = [c, cache, form](const Grid& g) -> const detail::MmsForcingFields& {
    if (!*cache || (*cache)->theta.grid().nx() != g.nx() || (*cache)->theta.grid().ny() != g.ny()) {
      const State s = mms_exact(c, g, 0.0);
      const auto cf = eval_coeffs(c.coeffs, s.theta);
      detail::MmsForcingFields out{advect(s.u, s.theta, form), advect(s.u, s.v, form),
                                   advect(s.u, s.u, form)};
      out.theta += divergence(s.v, s.theta.bc());
      out.theta -= var_diffuse(cf.kappa, s.theta);
      out.v += gradient(s.theta, s.v.bc());
      out.v += convect(s.v, s.u);
      out.v -= var_diffuse(cf.nu, s.v);
      out.u += tensor_div(s.v);
      out.u -= var_diffuse(cf.mu, s.u);
      *cache = std::make_unique<detail::MmsForcingFields>(std::move(out));
    }
    return **cache;
  };
  f.theta = [get](const Grid& g, double) { return get(g).theta; };
  f.v = [get](const Grid& g, double) { return get(g).v; };
  f.u = [get](const Grid& g, double) { return get(g).u; };
  return f;
}

struct MmsErrors {
  int n = 0;  ///< interior nodes per direction
  double h = 0.0, dt = 0.0;
  long steps = 0;
  double u = 0.0, v = 0.0, theta = 0.0;  ///< L^2 errors at the final time
  double seconds = 0.0;
};

/// Runs the case on an n x n unit-square grid for `steps` steps of size
/// end_time / steps and measures L^2 errors against the exact samples.
inline MmsErrors mms_errors(const MmsCase& c, int n, long steps, double end_time,
                            const StepConfig& base = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const Grid g(n, n, 1.0, 1.0);
  StepConfig sc = base;
  sc.policy = DtPolicy::fixed;
  sc.dt = end_time / static_cast<double>(steps);
  sc.end_time = end_time;
  sc.forcing = mms_forcing(c, sc.advection);
  const State init = mms_exact(c, g, 0.0);
  const Stepper st(g, c.coeffs, sc);
  State s = init;
  for (long k = 0; k < steps; ++k) s = st.step(s, sc.dt);
  const State ex = mms_exact(c, g, s.t, c.discrete_forcing);
  MmsErrors e;
  e.n = n;
  e.h = g.hx();
  e.dt = sc.dt;
  e.steps = steps;
  e.u = norm(s.u - ex.u);
  e.v = norm(s.v - ex.v);
  e.theta = norm(s.theta - ex.theta);
  e.seconds = detail::seconds_since(t0);
  return e;
}

struct OrderTable {
  std::string kind;  ///< "space" or "time"
  std::vector<MmsErrors> rows;
  std::vector<std::array<double, 3>> orders;  ///< u, v, theta between consecutive rows
  bool floor = false;  ///< all errors at solver tolerance; orders meaningless
  double floor_level = 1e-9;

  double min_order() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& o : orders)
      for (double v : o) m = std::min(m, v);
    return m;
  }
};

namespace detail {

inline void fill_orders(OrderTable& t, bool by_dt) {
  double worst = 0.0;
  for (const auto& r : t.rows) worst = std::max({worst, r.u, r.v, r.theta});
  t.floor = worst <= t.floor_level;
  for (std::size_t k = 1; k < t.rows.size(); ++k) {
    const auto& a = t.rows[k - 1];
    const auto& b = t.rows[k];
    const double ratio = by_dt ? a.dt / b.dt : a.h / b.h;
    auto ord = [&](double ea, double eb) {
      return t.floor ? std::numeric_limits<double>::quiet_NaN() : std::log(ea / eb) / std::log(ratio);
    };
    t.orders.push_back({ord(a.u, b.u), ord(a.v, b.v), ord(a.theta, b.theta)});
  }
}

}  // namespace detail

/// Spatial refinement: interior sizes `n` (h = 1/(n+1) halving when n+1
/// doubles), with dt scaled like h^2 from `base_steps` on the coarsest grid
/// so the first-order time error does not mask the spatial order.
inline OrderTable mms_convergence(const MmsCase& c, const std::vector<int>& n, double end_time,
                                  long base_steps, const StepConfig& base = {}) {
  if (n.size() < 3) throw DomainError("convergence study needs at least three grids");
  OrderTable t;
  t.kind = "space";
  for (std::size_t k = 0; k < n.size(); ++k) {
    const double r = static_cast<double>(n[k] + 1) / (n[0] + 1);
    const long steps = std::lround(base_steps * r * r);
    t.rows.push_back(mms_errors(c, n[k], steps, end_time, base));
  }
  detail::fill_orders(t, false);
  return t;
}

/// Temporal refinement on a fixed grid.
inline OrderTable mms_temporal(const MmsCase& c, int n, double end_time,
                               const std::vector<long>& steps, const StepConfig& base = {}) {
  if (steps.size() < 2) throw DomainError("temporal study needs at least two step counts");
  OrderTable t;
  t.kind = "time";
  for (long s : steps) t.rows.push_back(mms_errors(c, n, s, end_time, base));
  detail::fill_orders(t, true);
  return t;
}

// ----------------------------------------------------------------- decay

struct DecayOptions {
  bool assert_decay = true;
  double monotone_tol = 1e-10;  ///< allowed relative per-step increase of E
  double bound_tol = 1e-10;     ///< relative slack on E(t) <= E(0) exp(-2 alpha t)
  double r2_min = 0.99;
  RunOptions run;
};

struct DecayExperiment {
  RunResult run;
  double c_star = 0.0;
  double alpha = 0.0;  ///< (C* sigma)^{-1}
  DecayReport energy, h1, h2;
  bool asserted = false;
  bool monotone_ok = false;
  bool bound_ok = false;
  double worst_ratio = 0.0;  ///< max over records of E(t) / (E(0) exp(-2 alpha t))
  double first_violation_t = std::numeric_limits<double>::quiet_NaN();
  bool h1_ok = false, h2_ok = false;
  bool passed = false;
  std::string message;
};

inline DecayExperiment decay_experiment(const State& init, const CoeffSet& c, const StepConfig& sc,
                                        const DecayOptions& opt = {}) {
  const Grid& g = init.grid();
  DecayExperiment d{run(init, c, sc, opt.run), 0.0, 0.0, {}, {}, {}, false, false, false, 0.0,
                    std::numeric_limits<double>::quiet_NaN(), false, false, false, {}};
  d.c_star = poincare_constant(g);
  d.alpha = 1.0 / (d.c_star * c.sigma);
  std::vector<double> t, e, h1, h2;
  for (const auto& r : d.run.records) {
    t.push_back(r.t);
    e.push_back(r.energy);
    h1.push_back(r.u_h1 * r.u_h1 + r.v_h1 * r.v_h1 + r.theta_h1 * r.theta_h1);
    h2.push_back(r.u_h2 * r.u_h2 + r.v_h2 * r.v_h2 + r.theta_h2 * r.theta_h2);
  }
  const bool neumann = g.bc().v == Bc::neumann || g.bc().theta == Bc::neumann;
  d.asserted = opt.assert_decay && !neumann;

  d.monotone_ok = d.run.max_energy_increase <= opt.monotone_tol;
  const double e0 = e.front();
  d.bound_ok = true;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double bound = e0 * std::exp(-2.0 * d.alpha * t[k]);
    if (bound > 0.0) d.worst_ratio = std::max(d.worst_ratio, e[k] / bound);
    if (e[k] > bound * (1.0 + opt.bound_tol) && d.bound_ok) {
      d.bound_ok = false;
      d.first_violation_t = t[k];
    }
  }
  auto fit = [&](const std::vector<double>& series, bool squared, double alpha) {
    try {
      return fit_decay_rate(t, series, std::nullopt, squared, alpha);
    } catch (const DomainError& ex) {
      DecayReport r;
      r.convention = ex.what();
      return r;
    }
  };
  d.energy = fit(e, true, d.alpha);
  d.h1 = fit(h1, true, d.alpha);
  d.h2 = fit(h2, true, d.alpha);
  d.h1_ok = d.h1.samples > 0 && d.h1.rate > 0.0 && d.h1.r2 >= opt.r2_min;
  d.h2_ok = d.h2.samples > 0 && d.h2.rate > 0.0 && d.h2.r2 >= opt.r2_min;

  if (!d.asserted) {
    d.passed = true;
    d.message = neumann ? "neumann conditions: decay rates reported only, not asserted"
                        : "decay assertions disabled";
    return d;
  }
  d.passed = d.monotone_ok && d.bound_ok && d.h1_ok && d.h2_ok;
  if (!d.monotone_ok)
    d.message += "energy increased by " + std::to_string(d.run.max_energy_increase) + " relative; ";
  if (!d.bound_ok)
    d.message += "E(t) <= E(0) exp(-2 alpha t) first violated at t = " +
                 std::to_string(d.first_violation_t) + "; ";
  if (!d.h1_ok) d.message += "H1 tail fit R2 = " + std::to_string(d.h1.r2) + "; ";
  if (!d.h2_ok) d.message += "H2 tail fit R2 = " + std::to_string(d.h2.r2) + "; ";
  if (d.passed) d.message = "ok";
  return d;
}

// ---------------------------------------------------- perturbation stability

struct PerturbationRun {
  double delta = 0.0;
  std::vector<double> t;
  std::vector<double> diff_sq;  ///< ||U||^2 + ||V||^2 + ||Theta||^2
  std::vector<double> du, dv, dtheta;
  double sup_diff_sq = 0.0;
  double k_factor = 0.0;  ///< sup diff_sq / delta^2
  bool tail_decays = false;
  bool bitwise_identical = false;
};

struct UniquenessOptions {
  std::vector<double> deltas{1e-6, 5e-7, 0.0};
  double k_max = 100.0;
  double linear_tol = 0.1;
  std::uint64_t seed = 20240611;
};

struct UniquenessReport {
  std::vector<PerturbationRun> runs;
  std::vector<double> scaling;  ///< (sup norm ratio) / (delta ratio) for consecutive positive deltas
  bool stable = false, tail_ok = false, linear_ok = false, zero_ok = false, passed = false;
  long steps = 0;
  double seconds = 0.0;
  std::string message;
};

/// Steps the base state and every perturbed copy in lockstep (all with the
/// base run's dt) and tracks the difference energies.
inline UniquenessReport uniqueness_experiment(const State& base, const CoeffSet& c,
                                              const StepConfig& sc,
                                              const UniquenessOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  for (double d : opt.deltas)
    if (!(d >= 0.0)) throw ConfigError("perturbation amplitudes must be non-negative");
  const Grid& g = base.grid();
  const State pert = perturbation_field(g, opt.seed);
  const Stepper stepper(g, c, sc);
  State ref = base;
  std::vector<State> states;
  UniquenessReport rep;
  for (double d : opt.deltas) {
    State s = base;
    if (d > 0.0) {
      s.u.axpy(d, pert.u);
      s.v.axpy(d, pert.v);
      s.theta.axpy(d, pert.theta);
    }
    states.push_back(std::move(s));
    PerturbationRun r;
    r.delta = d;
    rep.runs.push_back(r);
  }
  auto record = [&]() {
    for (std::size_t k = 0; k < states.size(); ++k) {
      auto& r = rep.runs[k];
      const double du = norm(states[k].u - ref.u), dv = norm(states[k].v - ref.v),
                   dth = norm(states[k].theta - ref.theta);
      r.t.push_back(ref.t);
      r.du.push_back(du);
      r.dv.push_back(dv);
      r.dtheta.push_back(dth);
      r.diff_sq.push_back(du * du + dv * dv + dth * dth);
    }
  };
  record();
  const double t_end = sc.end_time;
  const double eps = 1e-12 * std::max(1.0, t_end);
  while (ref.t < t_end - eps) {
    double dt = stepper.dt_for(ref);
    if (ref.t + dt > t_end - eps) dt = t_end - ref.t;
    ref = stepper.step(ref, dt);
    for (auto& s : states) s = stepper.step(s, dt);
    ++rep.steps;
    record();
  }
  rep.stable = rep.tail_ok = rep.zero_ok = true;
  for (std::size_t k = 0; k < states.size(); ++k) {
    auto& r = rep.runs[k];
    for (double v : r.diff_sq) r.sup_diff_sq = std::max(r.sup_diff_sq, v);
    if (r.delta == 0.0) {
      r.bitwise_identical = states[k] == ref && r.sup_diff_sq == 0.0;
      r.tail_decays = true;
      rep.zero_ok = rep.zero_ok && r.bitwise_identical;
      continue;
    }
    r.k_factor = r.sup_diff_sq / (r.delta * r.delta);
    const std::size_t mid = r.diff_sq.size() / 2;
    r.tail_decays = r.diff_sq.size() > 2 && r.diff_sq.back() < r.diff_sq[mid];
    for (std::size_t j = mid + 1; j < r.diff_sq.size(); ++j)
      if (r.diff_sq[j] > r.diff_sq[j - 1] * (1.0 + 1e-6)) r.tail_decays = false;
    rep.stable = rep.stable && r.k_factor <= opt.k_max;
    rep.tail_ok = rep.tail_ok && r.tail_decays;
  }
  rep.linear_ok = true;
  const PerturbationRun* prev = nullptr;
  for (const auto& r : rep.runs) {
    if (r.delta == 0.0) continue;
    if (prev) {
      const double s = std::sqrt(prev->sup_diff_sq / r.sup_diff_sq) / (prev->delta / r.delta);
      rep.scaling.push_back(s);
      if (std::abs(s - 1.0) > opt.linear_tol) rep.linear_ok = false;
    }
    prev = &r;
  }
  rep.passed = rep.stable && rep.tail_ok && rep.linear_ok && rep.zero_ok;
  if (!rep.stable) rep.message += "difference growth factor above " + std::to_string(opt.k_max) + "; ";
  if (!rep.tail_ok) rep.message += "difference does not decay over the tail; ";
  if (!rep.linear_ok) rep.message += "difference not linear in delta; ";
  if (!rep.zero_ok) rep.message += "zero perturbation changed the trajectory; ";
  if (rep.passed) rep.message = "ok";
  rep.seconds = detail::seconds_since(t0);
  return rep;
}

// ------------------------------------------------------- energy identities

struct EnergySuiteReport {
  long steps = 0;
  double max_ledger = 0.0;
  double max_coupling = 0.0;
  double min_dissipation_margin = std::numeric_limits<double>::infinity();  ///< min (D - floor) / floor
  long first_failure = -1;
  double ledger_tol = 1e-8, coupling_tol = 1e-10;
  bool passed = false;
  std::string message;
};

/// Per step: ledger closure, dissipation >= (1/sigma) sum ||grad||^2 and
/// energy-neutral explicit pairings.
inline EnergySuiteReport energy_identity_suite(const State& init, const CoeffSet& c,
                                               const StepConfig& sc, long steps,
                                               double ledger_tol = 1e-8,
                                               double coupling_tol = 1e-10) {
  EnergySuiteReport rep;
  rep.ledger_tol = ledger_tol;
  rep.coupling_tol = coupling_tol;
  const Stepper st(init.grid(), c, sc);
  State s = init;
  for (long k = 0; k < steps; ++k) {
    const double dt = st.dt_for(s);
    State n = st.step(s, dt);
    const auto r = energy_ledger(s, n, dt, c, sc);
    ++rep.steps;
    rep.max_ledger = std::max(rep.max_ledger, r.ledger_residual);
    rep.max_coupling = std::max(rep.max_coupling, r.coupling_residual);
    const bool dis_ok = r.dissipation >= r.dissipation_floor * (1.0 - 1e-10) - 1e-300;
    if (r.dissipation_floor > 0.0)
      rep.min_dissipation_margin =
          std::min(rep.min_dissipation_margin, (r.dissipation - r.dissipation_floor) / r.dissipation_floor);
    if (rep.first_failure < 0) {
      std::string why;
      if (!(r.ledger_residual <= ledger_tol)) why += "ledger residual " + std::to_string(r.ledger_residual) + "; ";
      if (!(r.coupling_residual <= coupling_tol))
        why += "coupling residual " + std::to_string(r.coupling_residual) + "; ";
      if (!dis_ok) why += "dissipation below the 1/sigma floor; ";
      if (!why.empty()) {
        rep.first_failure = n.step;
        rep.message = "step " + std::to_string(n.step) + ": " + why;
      }
    }
    s = std::move(n);
  }
  rep.passed = rep.first_failure < 0;
  if (rep.passed) rep.message = "ok";
  return rep;
}

// ---------------------------------------------- variable-coefficient run

struct VariableCoefficientReport {
  RunResult run;
  double max_ledger = 0.0;
  bool ledger_ok = false;
  bool comparison_ok = false;
  long comparison_checks = 0;
  double worst_lower_margin = std::numeric_limits<double>::infinity();  ///< min |grad K| - lower
  double worst_upper_margin = std::numeric_limits<double>::infinity();  ///< min upper - |grad K|
  double first_comparison_failure_t = std::numeric_limits<double>::quiet_NaN();
  bool passed = false;
};

/// Runs the configuration and checks, at every record, the comparison band
/// between grad theta and grad of the good unknown for q in {2, 4}.
inline VariableCoefficientReport variable_coefficient_experiment(
    const State& init, const CoeffSet& c, const StepConfig& sc, RunOptions opt = {},
    double ledger_tol = 1e-8, double slack = 1e-8) {
  bool ok = true;
  long checks = 0;
  double lo = std::numeric_limits<double>::infinity(), hi = lo;
  double fail_t = std::numeric_limits<double>::quiet_NaN();
  auto check = [&](const State& s) {
    const auto big = good_unknown(c, s.theta);
    for (double q : {2.0, 4.0}) {
      const auto r = check_comparison(c, s.theta, big, q, slack);
      ++checks;
      lo = std::min(lo, r.grad_bigtheta - r.lower);
      hi = std::min(hi, r.upper - r.grad_bigtheta);
      if (!r.pass && ok) {
        ok = false;
        fail_t = s.t;
      }
    }
  };
  check(init);
  const long interval = opt.record_interval;
  auto user = opt.on_step;
  opt.on_step = [&, user](const State& prev, const State& next, const EnergyRecord& rec) {
    if (next.step % interval == 0 || !(next.t < sc.end_time - 1e-12 * std::max(1.0, sc.end_time)))
      check(next);
    if (user) user(prev, next, rec);
  };
  VariableCoefficientReport rep{run(init, c, sc, opt)};
  rep.max_ledger = rep.run.max_ledger_residual;
  rep.ledger_ok = rep.max_ledger <= ledger_tol;
  rep.comparison_ok = ok;
  rep.comparison_checks = checks;
  rep.worst_lower_margin = lo;
  rep.worst_upper_margin = hi;
  rep.first_comparison_failure_t = fail_t;
  rep.passed = rep.ledger_ok && rep.comparison_ok;
  return rep;
}

// ------------------------------------------------ variable-viscosity Stokes

struct StokesCase {
  ScalarField mu;
  VectorField u;
  ScalarField p;
  VectorField f;
};

/// mu = 1 + 1/2 sin(pi x) sin(pi y), u the discrete curl of
/// sin^2(pi x) sin^2(pi y), p = sin(pi x) sin(pi y); f is the discrete
/// momentum residual, so (u, p - mean p) is the exact discrete solution.
inline StokesCase stokes_manufactured(const Grid& g, bool variable = true) {
  const double a = std::numbers::pi / g.lx(), b = std::numbers::pi / g.ly();
  StokesCase c{make_field(g, Bc::neumann,
                          [&](double x, double y) {
                            return variable ? 1.0 + 0.5 * std::sin(a * x) * std::sin(b * y) : 1.0;
                          }),
               curl(make_field(g, Bc::dirichlet,
                               [&](double x, double y) {
                                 return std::pow(std::sin(a * x) * std::sin(b * y), 2);
                               })),
               make_field(g, Bc::dirichlet,
                          [&](double x, double y) { return std::sin(a * x) * std::sin(b * y); }),
               VectorField(g, Bc::dirichlet)};
  c.f = gradient(c.p);
  c.f -= var_diffuse(c.mu, c.u);
  return c;
}

struct StokesCheck {
  int n = 0;
  StokesResult result;
  double u_error = 0.0;        ///< relative L^2 velocity error
  double p_error = 0.0;        ///< relative L^2 error of the mean-free pressure
  double energy_identity = 0.0;///< |<mu grad u, grad u> - <f, u>| / <f, u>
  double pressure_mean = 0.0;
  double seconds = 0.0;
  bool passed = false;
};

inline StokesCheck stokes_check(int n = 64, const SolverSpec& spec = {1e-11, 5000},
                                double tol = 1e-8) {
  const auto t0 = std::chrono::steady_clock::now();
  const Grid g(n, n, 1.0, 1.0);
  const auto c = stokes_manufactured(g, true);
  StokesCheck r{n, solve_stokes_var(c.mu, c.f, spec, 0.5)};
  r.u_error = norm(r.result.u - c.u) / norm(c.u);
  ScalarField p_ex = c.p;
  const double m = mean(p_ex);
  for (double& v : p_ex.values()) v -= m;
  r.p_error = norm(r.result.p - p_ex) / norm(p_ex);
  r.energy_identity = std::abs(r.result.dissipation - r.result.work) / std::abs(r.result.work);
  r.pressure_mean = mean(r.result.p);
  r.seconds = detail::seconds_since(t0);
  r.passed = r.result.momentum_residual <= tol && r.u_error <= tol && r.energy_identity <= tol &&
             std::abs(r.pressure_mean) <= 1e-12;
  return r;
}

}  // namespace tcm
