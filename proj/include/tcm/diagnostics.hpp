#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "tcm/coeffs.hpp"
#include "tcm/elliptic.hpp"
#include "tcm/grid.hpp"
#include "tcm/ops.hpp"
#include "tcm/scheme.hpp"

namespace tcm {

/// Quadrature-weighted discrete norms. h1 and h2 are the seminorms
/// ||grad_h f|| and ||lap_h f||.
struct NormBundle {
  double l2 = 0.0;
  double l4 = 0.0;
  double l6 = 0.0;
  double lr = 0.0;
  double r = 3.0;
  double linf = 0.0;
  double h1 = 0.0;
  double h2 = 0.0;
};

inline double lp_norm(std::span<const double> mag, double cell, double p) {
  if (std::isinf(p)) {
    double m = 0.0;
    for (double v : mag) m = std::max(m, std::abs(v));
    return m;
  }
  double s = 0.0;
  for (double v : mag) s += std::pow(std::abs(v), p);
  return std::pow(s * cell, 1.0 / p);
}

inline NormBundle norms(const ScalarField& f, double r = 3.0) {
  if (!f.all_finite()) throw DomainError("norms of a non-finite field");
  const double cell = f.grid().cell_area();
  NormBundle b;
  b.r = r;
  b.l2 = norm(f);
  b.l4 = lp_norm(f.values(), cell, 4.0);
  b.l6 = lp_norm(f.values(), cell, 6.0);
  b.lr = lp_norm(f.values(), cell, r);
  b.linf = lp_norm(f.values(), cell, std::numeric_limits<double>::infinity());
  b.h1 = std::sqrt(grad_norm_sq(f));
  b.h2 = norm(laplacian(f));
  return b;
}

inline NormBundle norms(const VectorField& f, double r = 3.0) {
  if (!f.all_finite()) throw DomainError("norms of a non-finite field");
  std::vector<double> mag(f.x.size());
  for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::hypot(f.x[k], f.y[k]);
  const double cell = f.grid().cell_area();
  NormBundle b;
  b.r = r;
  b.l2 = norm(f);
  b.l4 = lp_norm(mag, cell, 4.0);
  b.l6 = lp_norm(mag, cell, 6.0);
  b.lr = lp_norm(mag, cell, r);
  b.linf = lp_norm(mag, cell, std::numeric_limits<double>::infinity());
  b.h1 = std::sqrt(grad_norm_sq(f));
  b.h2 = norm(laplacian(f));
  return b;
}

/// One row of the energy ledger. Step quantities describe the step that
/// ended at `t` and are zero on the initial record.
struct EnergyRecord {
  long step = 0;
  double t = 0.0;
  double dt = 0.0;
  double u_l2 = 0.0, v_l2 = 0.0, theta_l2 = 0.0;
  double u_h1 = 0.0, v_h1 = 0.0, theta_h1 = 0.0;
  double u_h2 = 0.0, v_h2 = 0.0, theta_h2 = 0.0;
  double energy = 0.0;             ///< ||u||^2 + ||v||^2 + ||theta||^2
  double d_energy = 0.0;           ///< E(t) - E(t - dt)
  double dissipation = 0.0;        ///< sum over faces of a |grad z|^2 (lagged coefficients)
  double dissipation_floor = 0.0;  ///< (1/sigma) sum ||grad_h z||^2
  double explicit_work = 0.0;      ///< 2 dt sum <N, z>
  double damping = 0.0;            ///< sum ||z - x||^2 + ||grad phi||^2
  double forcing_work = 0.0;       ///< 2 dt sum <f, z>
  double ledger_residual = 0.0;    ///< |dE - (-2 dt D + explicit_work - damping)| / E_prev
  double coupling_residual = 0.0;  ///< |sum <transport + coupling, old>| / roundoff scale
  double sup_theta = 0.0;
  double v_l4 = 0.0, v_l6 = 0.0, theta_l4 = 0.0;
  double div_u = 0.0;

  bool all_finite() const {
    for (double x : {t, dt, energy, d_energy, dissipation, explicit_work, damping,
                     ledger_residual, coupling_residual, sup_theta, v_l4, v_l6, u_h2, v_h2,
                     theta_h2})
      if (!std::isfinite(x)) return false;
    return true;
  }
};

inline double total_energy(const State& s) {
  return inner(s.u, s.u) + inner(s.v, s.v) + inner(s.theta, s.theta);
}

/// Norm part of a record; step quantities left at zero.
inline EnergyRecord state_record(const State& s) {
  EnergyRecord r;
  r.step = s.step;
  r.t = s.t;
  const auto nu = norms(s.u), nv = norms(s.v), nt = norms(s.theta);
  r.u_l2 = nu.l2;
  r.v_l2 = nv.l2;
  r.theta_l2 = nt.l2;
  r.u_h1 = nu.h1;
  r.v_h1 = nv.h1;
  r.theta_h1 = nt.h1;
  r.u_h2 = nu.h2;
  r.v_h2 = nv.h2;
  r.theta_h2 = nt.h2;
  r.energy = nu.l2 * nu.l2 + nv.l2 * nv.l2 + nt.l2 * nt.l2;
  r.sup_theta = nt.linf;
  r.v_l4 = nv.l4;
  r.v_l6 = nv.l6;
  r.theta_l4 = nt.l4;
  r.div_u = norm(divergence(s.u));
  return r;
}

/// Discrete energy budget of one step prev -> next, rebuilt from the
/// scheme: each implicit unknown z solves z - dt L z = x + dt N, so
///   ||z||^2 - ||x||^2 = -2 dt D(z) + 2 dt <N, z> - ||z - x||^2
/// and the projection removes ||grad phi||^2 more. What is left over is
/// solver error only.
inline EnergyRecord energy_ledger(const State& prev, const State& next, double dt,
                                  const CoeffSet& c, const StepConfig& sc) {
  EnergyRecord r = state_record(next);
  r.dt = dt;
  const double e0 = total_energy(prev);
  r.d_energy = r.energy - e0;

  const auto cf = eval_coeffs(c, prev.theta);
  const auto terms = explicit_terms(prev, sc, next.t);
  r.coupling_residual =
      terms.coupling_scale > 0.0 ? std::abs(terms.coupling) / terms.coupling_scale : 0.0;

  double dis = 0.0, floor = 0.0, work = 0.0, fwork = 0.0, damp = 0.0;
  auto add_scalar = [&](const ScalarField& a, const ScalarField& x, const ScalarField& z,
                        const ScalarField& n, const ScalarField& f) {
    dis -= inner(var_diffuse(a, z), z);
    floor += c.lower_bound() * grad_norm_sq(z);
    work += inner(n, z);
    fwork += inner(f, z);
    const auto d = z - x;
    damp += inner(d, d);
  };
  add_scalar(cf.kappa, prev.theta, next.theta, terms.n_theta, terms.f_theta);
  if (!sc.freeze_velocity) {
    add_scalar(cf.nu, prev.v.x, next.v.x, terms.n_v.x, terms.f_v.x);
    add_scalar(cf.nu, prev.v.y, next.v.y, terms.n_v.y, terms.f_v.y);
    VectorField gphi = gradient(next.p);
    gphi *= dt;
    const VectorField z = next.u + gphi;
    add_scalar(cf.mu, prev.u.x, z.x, terms.n_u.x, terms.f_u.x);
    add_scalar(cf.mu, prev.u.y, z.y, terms.n_u.y, terms.f_u.y);
    damp += inner(gphi, gphi);
  }
  r.dissipation = dis;
  r.dissipation_floor = floor;
  r.explicit_work = 2.0 * dt * work;
  r.forcing_work = 2.0 * dt * fwork;
  r.damping = damp;
  const double predicted = -2.0 * dt * dis + r.explicit_work - damp;
  const double scale = std::max({e0, r.energy, std::numeric_limits<double>::min()});
  r.ledger_residual = e0 > 0.0 || r.energy > 0.0 ? std::abs(r.d_energy - predicted) / scale
                                                 : 0.0;
  return r;
}

/// C* = 1/lambda_1 of the dirichlet -lap_h, by inverse power iteration.
inline double poincare_constant(const Grid& g, const SolverSpec& spec = {},
                                int max_iter = 500, double tol = 1e-13) {
  const SpectralSolver fd(g, SpectralSolver::Kind::compact);
  ScalarField x(g, Bc::dirichlet);
  // positive start vector overlaps the positive ground state
  const double kx = std::numbers::pi / g.lx(), ky = std::numbers::pi / g.ly();
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) x(i, j) = std::sin(kx * g.x(i)) * std::sin(ky * g.y(j)) + 0.1;
  double lam = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    x *= 1.0 / norm(x);
    const double rq = -inner(laplacian(x), x);
    if (it > 0 && std::abs(rq - lam) <= tol * rq) return 1.0 / rq;
    lam = rq;
    x = solve_poisson_dirichlet(x, spec, &fd).f;
  }
  throw SolverError("inverse power iteration for the Poincare constant stagnated", lam);
}

/// Log-linear least-squares fit of a positive series, value ~ exp(-rate t).
struct DecayReport {
  double rate = 0.0;        ///< fitted exponent of the series itself
  double intercept = 0.0;   ///< log value at t = 0
  double t_begin = 0.0, t_end = 0.0;
  std::size_t samples = 0;
  double r2 = 0.0;
  bool squared = false;     ///< series is a squared norm
  double alpha_pred = 0.0;  ///< (C* sigma)^{-1}, zero when not supplied
  double ratio = 0.0;       ///< rate / (2 alpha_pred) for squared series, else rate / alpha_pred
  std::string convention;
};

struct FitWindow {
  double t_begin = -std::numeric_limits<double>::infinity();
  double t_end = std::numeric_limits<double>::infinity();
};

/// Tail half of the sampled time span.
inline FitWindow tail_window(const std::vector<double>& t) {
  if (t.empty()) return {};
  return {0.5 * (t.front() + t.back()), t.back()};
}

inline DecayReport fit_decay_rate(const std::vector<double>& t, const std::vector<double>& value,
                                  std::optional<FitWindow> window = std::nullopt,
                                  bool squared = false, double alpha_pred = 0.0) {
  if (t.size() != value.size()) throw DomainError("time and value series differ in length");
  const FitWindow w = window ? *window : tail_window(t);
  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] < w.t_begin || t[k] > w.t_end) continue;
    if (!(value[k] > 0.0) || !std::isfinite(value[k]))
      throw DomainError("decay fit needs positive values; got " + std::to_string(value[k]) +
                        " at t = " + std::to_string(t[k]));
    xs.push_back(t[k]);
    ys.push_back(std::log(value[k]));
  }
  if (xs.size() < 10)
    throw DomainError("decay fit needs at least 10 samples in the window, got " +
                      std::to_string(xs.size()));
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    mx += xs[k];
    my += ys[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxx += (xs[k] - mx) * (xs[k] - mx);
    sxy += (xs[k] - mx) * (ys[k] - my);
    syy += (ys[k] - my) * (ys[k] - my);
  }
  if (!(sxx > 0.0)) throw DomainError("decay fit window has no time spread");
  const double slope = sxy / sxx;
  DecayReport r;
  r.rate = -slope;
  r.intercept = my - slope * mx;
  r.t_begin = xs.front();
  r.t_end = xs.back();
  r.samples = xs.size();
  double ssr = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double e = ys[k] - (r.intercept + slope * xs[k]);
    ssr += e * e;
  }
  r.r2 = syy <= 1e-28 * std::max(1.0, my * my) * n ? 1.0 : std::clamp(1.0 - ssr / syy, 0.0, 1.0);
  r.squared = squared;
  r.alpha_pred = alpha_pred;
  if (alpha_pred > 0.0) r.ratio = r.rate / ((squared ? 2.0 : 1.0) * alpha_pred);
  r.convention = squared ? "value ~ exp(-rate t), value a squared norm; compared with 2 alpha"
                         : "value ~ exp(-rate t); compared with alpha";
  return r;
}

/// Stored fields of one trajectory time.
struct Snapshot {
  double t = 0.0;
  ScalarField theta;
  VectorField v;
};

namespace detail {

inline double trapezoid(const std::vector<double>& t, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t k = 1; k < t.size(); ++k) s += 0.5 * (t[k] - t[k - 1]) * (y[k] + y[k - 1]);
  return s;
}

inline ScalarField positive_part(const ScalarField& f, double level, double sign = 1.0) {
  ScalarField out(f.grid(), f.bc());
  for (std::size_t k = 0; k < f.size(); ++k) out[k] = std::max(sign * f[k] - level, 0.0);
  return out;
}

/// ||f||_{L^inf_t L^2}, ||grad f||_{L^2_t L^2}, ||f||_{L^4_t L^4} of a scalar history.
struct SpaceTime {
  double sup_l2 = 0.0, grad_l2l2 = 0.0, l4l4 = 0.0;
};

inline SpaceTime space_time(const std::vector<double>& t, const std::vector<ScalarField>& f) {
  std::vector<double> g2(f.size()), l4(f.size());
  SpaceTime s;
  for (std::size_t k = 0; k < f.size(); ++k) {
    s.sup_l2 = std::max(s.sup_l2, norm(f[k]));
    g2[k] = grad_norm_sq(f[k]);
    l4[k] = std::pow(lp_norm(f[k].values(), f[k].grid().cell_area(), 4.0), 4.0);
  }
  s.grad_l2l2 = std::sqrt(trapezoid(t, g2));
  s.l4l4 = std::pow(trapezoid(t, l4), 0.25);
  return s;
}

}  // namespace detail

/// Level-set energies of the De Giorgi truncations at levels
/// N_k = M (1 - 2^{-k-1}), for theta and for -theta.
struct DeGiorgiReport {
  double m = 0.0;
  std::vector<double> levels;
  std::vector<double> a_plus;   ///< from (theta - N_k)_+
  std::vector<double> a_minus;  ///< from (-theta - N_k)_+
  std::vector<double> a;        ///< elementwise max of the two
  double phi = 0.0;
  double phi_hat = 0.0;
  double c1 = 0.0, c2 = 0.0;
  double sup_theta = 0.0;  ///< max over snapshots of |theta|
  bool bounded = false;    ///< sup |theta| <= M
  bool monotone = false;   ///< levels increasing, a non-increasing
};

inline DeGiorgiReport degiorgi_monitor(const std::vector<Snapshot>& traj, double m, int k_max,
                                       double sigma) {
  if (traj.empty()) throw DomainError("De Giorgi monitor needs at least one snapshot");
  if (!(m > 0.0)) throw DomainError("level cap M must be positive");
  if (k_max < 0) throw DomainError("k_max must be non-negative");
  DeGiorgiReport r;
  r.m = m;
  std::vector<double> t;
  for (const auto& s : traj) {
    t.push_back(s.t);
    for (double v : s.theta.values()) r.sup_theta = std::max(r.sup_theta, std::abs(v));
  }
  std::vector<double> g(traj.size());
  for (int k = 0; k <= k_max; ++k) {
    const double level = m * (1.0 - std::ldexp(1.0, -k - 1));
    r.levels.push_back(level);
    double vals[2];
    for (int side = 0; side < 2; ++side) {
      double sup = 0.0;
      for (std::size_t n = 0; n < traj.size(); ++n) {
        const auto tr = detail::positive_part(traj[n].theta, level, side == 0 ? 1.0 : -1.0);
        sup = std::max(sup, inner(tr, tr));
        g[n] = grad_norm_sq(tr);
      }
      vals[side] = sup + detail::trapezoid(t, g) / sigma;
    }
    r.a_plus.push_back(vals[0]);
    r.a_minus.push_back(vals[1]);
    r.a.push_back(std::max(vals[0], vals[1]));
  }
  r.monotone = true;
  for (std::size_t k = 1; k < r.a.size(); ++k)
    if (!(r.levels[k] > r.levels[k - 1]) || r.a[k] > r.a[k - 1]) r.monotone = false;
  r.bounded = r.sup_theta <= m;
  return r;
}

/// Phi = ||v||_{L^inf_t L^4}^{2/3} ||grad v||_{L^2_t L^2}^{1/3}.
inline double degiorgi_phi(const std::vector<Snapshot>& traj) {
  std::vector<double> t, g2;
  double sup4 = 0.0;
  for (const auto& s : traj) {
    t.push_back(s.t);
    std::vector<double> mag(s.v.x.size());
    for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::hypot(s.v.x[k], s.v.y[k]);
    sup4 = std::max(sup4, lp_norm(mag, s.v.grid().cell_area(), 4.0));
    g2.push_back(grad_norm_sq(s.v));
  }
  return std::pow(sup4, 2.0 / 3.0) * std::pow(std::sqrt(detail::trapezoid(t, g2)), 1.0 / 3.0);
}

/// Phi_hat = ||theta||_{L^inf_t L^2}^{1/2} ||grad theta||_{L^2_t L^2}^{1/2}.
inline double degiorgi_phi_hat(const std::vector<Snapshot>& traj) {
  std::vector<double> t;
  std::vector<ScalarField> th;
  for (const auto& s : traj) {
    t.push_back(s.t);
    th.push_back(s.theta);
  }
  const auto st = detail::space_time(t, th);
  return std::sqrt(st.sup_l2) * std::sqrt(st.grad_l2l2);
}

/// M = max(16 C1^{9/32} C2^{3/32} Phi^{3/4} Phi_hat^{1/4}, 4 ||theta_0||_inf).
inline double degiorgi_bound(double phi, double phi_hat, double c1, double c2,
                             double theta0_sup = 0.0) {
  if (!(c1 > 0.0) || !(c2 > 0.0)) throw DomainError("C1 and C2 must be positive");
  const double formula = 16.0 * std::pow(c1, 9.0 / 32.0) * std::pow(c2, 3.0 / 32.0) *
                         std::pow(phi, 0.75) * std::pow(phi_hat, 0.25);
  return std::max(formula, 4.0 * theta0_sup);
}

inline double degiorgi_bound(const std::vector<Snapshot>& traj, double c1, double c2) {
  if (traj.empty()) throw DomainError("De Giorgi bound needs a non-empty trajectory");
  double sup0 = 0.0;
  for (double v : traj.front().theta.values()) sup0 = std::max(sup0, std::abs(v));
  return degiorgi_bound(degiorgi_phi(traj), degiorgi_phi_hat(traj), c1, c2, sup0);
}

/// Empirical interpolation constant: safety * max over the supplied
/// histories of (||f||_{L^4 L^4} / (||f||_{L^inf L^2}^{1/2} ||grad f||_{L^2 L^2}^{1/2}))^{8/3}.
inline double calibrate_constant(const std::vector<double>& t,
                                 const std::vector<std::vector<ScalarField>>& histories,
                                 double safety = 2.0) {
  double best = 0.0;
  for (const auto& h : histories) {
    const auto st = detail::space_time(t, h);
    const double den = std::sqrt(st.sup_l2) * std::sqrt(st.grad_l2l2);
    if (den > 0.0 && st.l4l4 > 0.0) best = std::max(best, std::pow(st.l4l4 / den, 8.0 / 3.0));
  }
  return best > 0.0 ? safety * best : safety;
}

struct Calibration {
  double c1 = 0.0, c2 = 0.0;
};

/// C2 from +theta and -theta; C1 from truncations (+-theta - c sup|theta|)_+
/// at fractions c in {0, 1/4, 1/2, 3/4}.
inline Calibration calibrate_degiorgi(const std::vector<Snapshot>& traj, double safety = 2.0) {
  std::vector<double> t;
  double sup = 0.0;
  for (const auto& s : traj) {
    t.push_back(s.t);
    for (double v : s.theta.values()) sup = std::max(sup, std::abs(v));
  }
  auto history = [&](double level, double sign) {
    std::vector<ScalarField> h;
    for (const auto& s : traj) h.push_back(detail::positive_part(s.theta, level, sign));
    return h;
  };
  Calibration c;
  std::vector<ScalarField> plus, minus;
  for (const auto& s : traj) {
    plus.push_back(s.theta);
    minus.push_back(-1.0 * s.theta);
  }
  c.c2 = calibrate_constant(t, {plus, minus}, safety);
  std::vector<std::vector<ScalarField>> trunc;
  for (double frac : {0.0, 0.25, 0.5, 0.75})
    for (double sign : {1.0, -1.0}) trunc.push_back(history(frac * sup, sign));
  c.c1 = calibrate_constant(t, trunc, safety);
  return c;
}

/// Full De Giorgi post-processing of a trajectory: calibrate, bound, monitor.
inline DeGiorgiReport degiorgi_analysis(const std::vector<Snapshot>& traj, double sigma,
                                        int k_max = 20, double safety = 2.0) {
  const auto cal = calibrate_degiorgi(traj, safety);
  const double phi = degiorgi_phi(traj), phi_hat = degiorgi_phi_hat(traj);
  double sup0 = 0.0;
  for (double v : traj.front().theta.values()) sup0 = std::max(sup0, std::abs(v));
  const double m = degiorgi_bound(phi, phi_hat, cal.c1, cal.c2, sup0);
  auto r = degiorgi_monitor(traj, m > 0.0 ? m : 1.0, k_max, sigma);
  r.m = m;
  r.bounded = r.sup_theta <= m;
  r.phi = phi;
  r.phi_hat = phi_hat;
  r.c1 = cal.c1;
  r.c2 = cal.c2;
  return r;
}

/// Equality iteration A_{k+1} = a b^k A_k^gamma with the smallness threshold
/// a^{-1/(gamma-1)} b^{-1/(gamma-1)^2}.
struct LevelRecursionReport {
  std::vector<double> a_k;
  double threshold = 0.0;
  bool below_threshold = false;
  bool converged = false;  ///< last iterate <= 1e-12 (or exactly zero)
  bool diverged = false;   ///< iterates grew without bound
};

inline LevelRecursionReport iterate_lemma22(double a, double b, double gamma, double a0, int k_max) {
  if (!(a > 0.0)) throw DomainError("recurrence needs a > 0");
  if (!(b > 1.0)) throw DomainError("recurrence needs b > 1");
  if (!(gamma > 1.0)) throw DomainError("recurrence needs gamma > 1");
  if (!(a0 >= 0.0)) throw DomainError("recurrence needs A0 >= 0");
  if (k_max < 0) throw DomainError("k_max must be non-negative");
  LevelRecursionReport r;
  r.threshold = std::pow(a, -1.0 / (gamma - 1.0)) * std::pow(b, -1.0 / ((gamma - 1.0) * (gamma - 1.0)));
  r.below_threshold = a0 <= r.threshold;
  r.a_k.push_back(a0);
  for (int k = 0; k < k_max; ++k) {
    const double next = a * std::pow(b, k) * std::pow(r.a_k.back(), gamma);
    r.a_k.push_back(next);
    if (!std::isfinite(next)) break;
  }
  const double last = r.a_k.back();
  r.converged = last <= 1e-12;
  r.diverged = !std::isfinite(last) || (r.a_k.size() > 2 && last > a0 && last > r.a_k[r.a_k.size() - 2]);
  return r;
}

}  // namespace tcm
