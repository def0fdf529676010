#pragma once

// Second-order collocated difference operators.
//
// Every operator pads its inputs with tag-implied ghosts and then applies a
// 5-point stencil. With that convention the centred gradient and divergence
// are exact negative adjoints for dirichlet data, the skew-symmetric
// advection is exactly energy-neutral, and the flux-form diffusion is
// symmetric negative semidefinite; all identities hold to roundoff.

#include <cmath>
#include <string>
#include <vector>

#include "tcm/grid.hpp"

namespace tcm {

enum class AdvectionForm { skew, convective };

inline double inner(const ScalarField& f, const ScalarField& g) {
  const auto a = f.values();
  const auto b = g.values();
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s * f.grid().cell_area();
}

inline double inner(const VectorField& f, const VectorField& g) {
  return inner(f.x, g.x) + inner(f.y, g.y);
}

inline double norm(const ScalarField& f) { return std::sqrt(inner(f, f)); }
inline double norm(const VectorField& f) { return std::sqrt(inner(f, f)); }

/// Quadrature of |f||g| - the roundoff scale of inner(f, g).
inline double abs_inner(const ScalarField& f, const ScalarField& g) {
  const auto a = f.values();
  const auto b = g.values();
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a[k] * b[k]);
  return s * f.grid().cell_area();
}
inline double abs_inner(const VectorField& f, const VectorField& g) {
  return abs_inner(f.x, g.x) + abs_inner(f.y, g.y);
}

namespace detail {

// Centred differences of a padded array onto interior nodes.
inline void ddx(const std::vector<double>& p, const Grid& g, ScalarField& out) {
  const int nx = g.nx(), ny = g.ny(), s = nx + 2;
  const double c = 0.5 / g.hx();
  auto o = out.values();
  for (int j = 0; j < ny; ++j) {
    const double* row = &p[(j + 1) * s + 1];
    double* dst = &o[j * nx];
    for (int i = 0; i < nx; ++i) dst[i] = c * (row[i + 1] - row[i - 1]);
  }
}

inline void ddy(const std::vector<double>& p, const Grid& g, ScalarField& out) {
  const int nx = g.nx(), ny = g.ny(), s = nx + 2;
  const double c = 0.5 / g.hy();
  auto o = out.values();
  for (int j = 0; j < ny; ++j) {
    const double* up = &p[(j + 2) * s + 1];
    const double* dn = &p[j * s + 1];
    double* dst = &o[j * nx];
    for (int i = 0; i < nx; ++i) dst[i] = c * (up[i] - dn[i]);
  }
}

inline void multiply(std::vector<double>& a, const std::vector<double>& b) {
  for (std::size_t k = 0; k < a.size(); ++k) a[k] *= b[k];
}

inline void check_same(const Grid& a, const Grid& b) {
  if (!a.same_shape(b)) throw DomainError("fields live on different grids");
}

}  // namespace detail

/// Centred gradient. The result carries `out_bc` (dirichlet by default, the
/// tag under which it is the negative adjoint of `divergence`).
inline VectorField gradient(const ScalarField& f, Bc out_bc = Bc::dirichlet) {
  std::vector<double> p;
  pad(f, p);
  VectorField g(f.grid(), out_bc);
  detail::ddx(p, f.grid(), g.x);
  detail::ddy(p, f.grid(), g.y);
  return g;
}

inline ScalarField divergence(const VectorField& w, Bc out_bc = Bc::dirichlet) {
  const Grid& g = w.grid();
  std::vector<double> p;
  ScalarField d(g, out_bc), tmp(g, out_bc);
  pad(w.x, p);
  detail::ddx(p, g, d);
  pad(w.y, p);
  detail::ddy(p, g, tmp);
  d += tmp;
  return d;
}

/// Discrete curl (d/dy psi, -d/dx psi) of a stream function; lies in the
/// kernel of `divergence` when psi is dirichlet.
inline VectorField curl(const ScalarField& psi, Bc out_bc = Bc::dirichlet) {
  VectorField g = gradient(psi, out_bc);
  ScalarField gx = g.x;
  g.x = g.y;
  g.y = gx;
  g.y *= -1.0;
  return g;
}

/// Transport term (u . grad) f. The skew form 1/2 [u . grad f + div(u f)]
/// satisfies <advect(u, f), f> = 0 to roundoff for any dirichlet u; the
/// convective form exists only as a negative control.
inline ScalarField advect(const VectorField& u, const ScalarField& f,
                          AdvectionForm form = AdvectionForm::skew) {
  const Grid& g = f.grid();
  detail::check_same(g, u.grid());
  std::vector<double> pf, pu;
  pad(f, pf);
  ScalarField fx(g, f.bc()), fy(g, f.bc());
  detail::ddx(pf, g, fx);
  detail::ddy(pf, g, fy);
  ScalarField out(g, f.bc());
  auto o = out.values();
  const std::span<const double> ux = u.x.values(), uy = u.y.values(), gx = fx.values(),
                                gy = fy.values();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = ux[k] * gx[k] + uy[k] * gy[k];
  if (form == AdvectionForm::convective) return out;

  // div(u f) with ghost products, so dirichlet u kills the boundary flux
  pad(u.x, pu);
  detail::multiply(pu, pf);
  detail::ddx(pu, g, fx);
  pad(u.y, pu);
  detail::multiply(pu, pf);
  detail::ddy(pu, g, fy);
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = 0.5 * (o[k] + gx[k] + gy[k]);
  return out;
}

inline VectorField advect(const VectorField& u, const VectorField& f,
                          AdvectionForm form = AdvectionForm::skew) {
  return VectorField(advect(u, f.x, form), advect(u, f.y, form));
}

/// Plain convective (w . grad) f componentwise; the -(v . grad) u coupling.
inline VectorField convect(const VectorField& w, const VectorField& f) {
  return advect(w, f, AdvectionForm::convective);
}

/// div(v (x) v): component i is sum_j d_j (v_i v_j). Paired with `convect`
/// it gives <tensor_div(v), u> + <convect(v, u), v> = 0 for dirichlet data.
inline VectorField tensor_div(const VectorField& v) {
  const Grid& g = v.grid();
  std::vector<double> px, py, prod;
  pad(v.x, px);
  pad(v.y, py);
  VectorField out(g, v.bc());
  ScalarField tmp(g, v.bc());

  prod = px;
  detail::multiply(prod, px);
  detail::ddx(prod, g, out.x);
  prod = px;
  detail::multiply(prod, py);
  detail::ddy(prod, g, tmp);
  out.x += tmp;
  detail::ddx(prod, g, out.y);
  prod = py;
  detail::multiply(prod, py);
  detail::ddy(prod, g, tmp);
  out.y += tmp;
  return out;
}

/// Flux-form div(a grad f) with arithmetic face averages. Faces on the
/// boundary take the coefficient of their interior node. Throws if any
/// coefficient is below `min_coeff`.
inline ScalarField var_diffuse(const ScalarField& a, const ScalarField& f,
                               double min_coeff = 0.0) {
  const Grid& g = f.grid();
  detail::check_same(g, a.grid());
  for (double v : a.values())
    if (!(v >= min_coeff) || !(v > 0.0))
      throw ConfigError("diffusion coefficient " + std::to_string(v) +
                        " below the admissible lower bound " + std::to_string(min_coeff));
  const int nx = g.nx(), ny = g.ny(), s = nx + 2;
  std::vector<double> pf;
  pad(f, pf);
  const double ix2 = 1.0 / (g.hx() * g.hx()), iy2 = 1.0 / (g.hy() * g.hy());
  ScalarField out(g, f.bc());
  auto o = out.values();
  const auto av = a.values();
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const std::size_t k = j * nx + i;
      const double c = av[k];
      const double aw = i > 0 ? 0.5 * (c + av[k - 1]) : c;
      const double ae = i < nx - 1 ? 0.5 * (c + av[k + 1]) : c;
      const double as = j > 0 ? 0.5 * (c + av[k - nx]) : c;
      const double an = j < ny - 1 ? 0.5 * (c + av[k + nx]) : c;
      const std::size_t q = (j + 1) * s + i + 1;
      const double fc = pf[q];
      o[k] = ix2 * (ae * (pf[q + 1] - fc) - aw * (fc - pf[q - 1])) +
             iy2 * (an * (pf[q + s] - fc) - as * (fc - pf[q - s]));
    }
  return out;
}

inline VectorField var_diffuse(const ScalarField& a, const VectorField& f,
                               double min_coeff = 0.0) {
  return VectorField(var_diffuse(a, f.x, min_coeff), var_diffuse(a, f.y, min_coeff));
}

/// Compact 5-point Laplacian with tag-implied ghosts.
inline ScalarField laplacian(const ScalarField& f) {
  ScalarField one(f.grid(), Bc::neumann);
  one.fill(1.0);
  return var_diffuse(one, f);
}
inline VectorField laplacian(const VectorField& f) {
  return VectorField(laplacian(f.x), laplacian(f.y));
}

/// ||grad_h f||^2 summed over every cell face, boundary faces included;
/// equals -<laplacian(f), f>.
inline double grad_norm_sq(const ScalarField& f) {
  const Grid& g = f.grid();
  const int nx = g.nx(), ny = g.ny(), s = nx + 2;
  std::vector<double> p;
  pad(f, p);
  double sx = 0.0, sy = 0.0;
  for (int j = 1; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) {
      const double d = p[j * s + i + 1] - p[j * s + i];
      sx += d * d;
    }
  for (int j = 0; j <= ny; ++j)
    for (int i = 1; i <= nx; ++i) {
      const double d = p[(j + 1) * s + i] - p[j * s + i];
      sy += d * d;
    }
  return g.cell_area() * (sx / (g.hx() * g.hx()) + sy / (g.hy() * g.hy()));
}
inline double grad_norm_sq(const VectorField& f) {
  return grad_norm_sq(f.x) + grad_norm_sq(f.y);
}

}  // namespace tcm
