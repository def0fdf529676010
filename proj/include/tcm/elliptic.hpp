#pragma once

#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tcm/error.hpp"
#include "tcm/grid.hpp"
#include "tcm/ops.hpp"

namespace tcm {

/// Diagonally preconditioned conjugate gradient settings.
struct SolverSpec {
  double rel_tol = 1e-12;
  int max_iter = 20000;

  void validate() const {
    if (!(rel_tol > 0.0 && rel_tol <= 1e-4))
      throw ConfigError("solver rel_tol must lie in (0, 1e-4]");
    if (max_iter < 10) throw ConfigError("solver max_iter must be at least 10");
  }
  bool operator==(const SolverSpec&) const = default;
};

struct SolveStats {
  int iterations = 0;
  double rel_residual = 0.0;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline void remove_component(std::span<double> x, std::span<const double> unit) {
  if (unit.empty()) return;
  const double c = dot(x, unit);
  for (std::size_t k = 0; k < x.size(); ++k) x[k] -= c * unit[k];
}

}  // namespace detail

/// Preconditioned CG for a symmetric positive (semi)definite operator.
/// `apply(x, y)` computes y = A x and `precond(r, z)` applies z = M^{-1} r.
/// A unit null vector may be supplied for consistent singular systems.
/// The true residual is re-evaluated on convergence and CG restarted if the
/// recurrence drifted. Throws SolverError when the cap is exceeded.
template <class Apply, class Precond>
SolveStats conjugate_gradient(Apply&& apply, Precond&& precond, std::span<const double> b_in,
                              std::span<double> x, const SolverSpec& spec,
                              std::string_view what, std::span<const double> null_unit = {}) {
  const std::size_t n = b_in.size();
  std::vector<double> b(b_in.begin(), b_in.end());
  detail::remove_component(b, null_unit);
  detail::remove_component(x, null_unit);
  const double bnorm = std::sqrt(detail::dot(b, b));
  SolveStats st;
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    return st;
  }
  const double target = spec.rel_tol * bnorm;
  std::vector<double> r(n), z(n), p(n), q(n);
  auto true_residual = [&] {
    apply(std::span<const double>(x), std::span<double>(q));
    for (std::size_t k = 0; k < n; ++k) r[k] = b[k] - q[k];
    detail::remove_component(r, null_unit);
    return std::sqrt(detail::dot(r, r));
  };
  for (int restart = 0; restart < 4; ++restart) {
    double rnorm = true_residual();
    st.rel_residual = rnorm / bnorm;
    if (rnorm <= target) return st;
    precond(std::span<const double>(r), std::span<double>(z));
    detail::remove_component(z, null_unit);
    p = z;
    double rz = detail::dot(r, z);
    while (st.iterations < spec.max_iter) {
      apply(std::span<const double>(p), std::span<double>(q));
      const double pq = detail::dot(p, q);
      if (!(pq > 0.0)) break;
      const double alpha = rz / pq;
      for (std::size_t k = 0; k < n; ++k) {
        x[k] += alpha * p[k];
        r[k] -= alpha * q[k];
      }
      ++st.iterations;
      rnorm = std::sqrt(detail::dot(r, r));
      if (rnorm <= target) break;
      precond(std::span<const double>(r), std::span<double>(z));
      detail::remove_component(z, null_unit);
      const double rz_new = detail::dot(r, z);
      const double beta = rz_new / rz;
      rz = rz_new;
      for (std::size_t k = 0; k < n; ++k) p[k] = z[k] + beta * p[k];
    }
    detail::remove_component(x, null_unit);
    if (st.iterations >= spec.max_iter) break;
  }
  st.rel_residual = true_residual() / bnorm;
  if (st.rel_residual <= spec.rel_tol) return st;
  throw SolverError(std::string(what) + ": CG stopped after " + std::to_string(st.iterations) +
                        " iterations at relative residual " + std::to_string(st.rel_residual),
                    st.rel_residual);
}

/// Jacobi preconditioner over a stored inverse diagonal.
inline auto jacobi(std::span<const double> inv_diag) {
  return [inv_diag](std::span<const double> r, std::span<double> z) {
    for (std::size_t k = 0; k < r.size(); ++k) z[k] = inv_diag[k] * r[k];
  };
}

/// Fast diagonalisation of a separable operator T = Tx (x) I + I (x) Ty on
/// the interior nodes, using dense 1D eigendecompositions. `compact` is the
/// 5-point -lap_h under the given tag; `wide` is -div grad with dirichlet
/// ghosts on both factors. solve() applies the pseudo-inverse of
/// shift + scale*T (zero eigenvalues are skipped).
class SpectralSolver {
 public:
  enum class Kind { compact, wide };

  SpectralSolver(const Grid& g, Kind kind, Bc bc = Bc::dirichlet) : nx_(g.nx()), ny_(g.ny()) {
    if (kind == Kind::wide && bc != Bc::dirichlet)
      throw DomainError("the wide operator is only defined for dirichlet data");
    decompose(operator_1d(nx_, g.hx(), kind, bc), qx_, lx_);
    decompose(operator_1d(ny_, g.hy(), kind, bc), qy_, ly_);
    const double top = lx_.cwiseAbs().maxCoeff() + ly_.cwiseAbs().maxCoeff();
    zero_cut_ = 1e-10 * top;
  }

  void solve(std::span<const double> b, std::span<double> x, double shift, double scale) const {
    Eigen::Map<const Eigen::MatrixXd> bm(b.data(), nx_, ny_);
    Eigen::Map<Eigen::MatrixXd> xm(x.data(), nx_, ny_);
    hat_.noalias() = qx_.transpose() * bm * qy_;
    for (int j = 0; j < ny_; ++j)
      for (int i = 0; i < nx_; ++i) {
        const double lam = shift + scale * (lx_[i] + ly_[j]);
        hat_(i, j) = std::abs(lam) > zero_cut_ * std::max(1.0, std::abs(scale)) ? hat_(i, j) / lam
                                                                              : 0.0;
      }
    xm.noalias() = qx_ * hat_ * qy_.transpose();
  }

  double min_eigenvalue() const { return lx_.minCoeff() + ly_.minCoeff(); }

  static Eigen::MatrixXd operator_1d(int n, double h, Kind kind, Bc bc) {
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n);
    if (kind == Kind::compact) {
      const double c = 1.0 / (h * h);
      for (int i = 0; i < n; ++i) {
        t(i, i) = 2.0 * c;
        if (i > 0) t(i, i - 1) = -c;
        if (i < n - 1) t(i, i + 1) = -c;
      }
      if (bc == Bc::neumann) {
        t(0, 0) = c;
        t(n - 1, n - 1) = c;
      }
    } else {
      Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
      for (int i = 0; i < n; ++i) {
        if (i > 0) d(i, i - 1) = -0.5 / h;
        if (i < n - 1) d(i, i + 1) = 0.5 / h;
      }
      t = d.transpose() * d;
    }
    return t;
  }

 private:
  static void decompose(const Eigen::MatrixXd& t, Eigen::MatrixXd& q, Eigen::VectorXd& lam) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    if (es.info() != Eigen::Success) throw SolverError("1D eigendecomposition failed", 0.0);
    q = es.eigenvectors();
    lam = es.eigenvalues();
  }

  int nx_, ny_;
  Eigen::MatrixXd qx_, qy_;
  Eigen::VectorXd lx_, ly_;
  double zero_cut_ = 0.0;
  mutable Eigen::MatrixXd hat_;
};

/// Matrix-free shift * x - scale * div(a grad x) with the face rule of
/// `var_diffuse`. SPD for dirichlet tags, or for any tag when shift > 0.
class DiffusionOperator {
 public:
  DiffusionOperator(const ScalarField& a, double shift, double scale, Bc bc)
      : g_(a.grid()), shift_(shift), scale_(scale), bc_(bc) {
    const int nx = g_.nx(), ny = g_.ny();
    const auto av = a.values();
    ax_.assign(static_cast<std::size_t>(nx + 1) * ny, 0.0);
    ay_.assign(static_cast<std::size_t>(nx) * (ny + 1), 0.0);
    const double ix2 = scale / (g_.hx() * g_.hx()), iy2 = scale / (g_.hy() * g_.hy());
    const bool open = bc == Bc::dirichlet;
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i <= nx; ++i) {
        double c;
        if (i == 0)
          c = open ? av[j * nx] : 0.0;
        else if (i == nx)
          c = open ? av[j * nx + nx - 1] : 0.0;
        else
          c = 0.5 * (av[j * nx + i - 1] + av[j * nx + i]);
        ax_[j * (nx + 1) + i] = ix2 * c;
      }
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i < nx; ++i) {
        double c;
        if (j == 0)
          c = open ? av[i] : 0.0;
        else if (j == ny)
          c = open ? av[(ny - 1) * nx + i] : 0.0;
        else
          c = 0.5 * (av[(j - 1) * nx + i] + av[j * nx + i]);
        ay_[j * nx + i] = iy2 * c;
      }
    inv_diag_.resize(g_.size());
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const double d = shift + ax_[j * (nx + 1) + i] + ax_[j * (nx + 1) + i + 1] +
                         ay_[j * nx + i] + ay_[(j + 1) * nx + i];
        inv_diag_[j * nx + i] = 1.0 / d;
      }
  }

  void operator()(std::span<const double> x, std::span<double> y) const {
    const int nx = g_.nx(), ny = g_.ny();
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const std::size_t k = j * nx + i;
        const double xc = x[k];
        const double aw = ax_[j * (nx + 1) + i], ae = ax_[j * (nx + 1) + i + 1];
        const double as = ay_[j * nx + i], an = ay_[(j + 1) * nx + i];
        // dirichlet ghosts are zero; neumann boundary faces carry no flux
        const double xw = i > 0 ? x[k - 1] : 0.0, xe = i < nx - 1 ? x[k + 1] : 0.0;
        const double xs = j > 0 ? x[k - nx] : 0.0, xn = j < ny - 1 ? x[k + nx] : 0.0;
        y[k] = (shift_ + aw + ae + as + an) * xc - aw * xw - ae * xe - as * xs - an * xn;
      }
  }

  std::span<const double> inv_diag() const { return inv_diag_; }
  Bc bc() const { return bc_; }

 private:
  Grid g_;
  double shift_, scale_;
  Bc bc_;
  std::vector<double> ax_, ay_, inv_diag_;
};

/// -div(grad phi) built from the centred pair used everywhere else, with
/// dirichlet ghosts on both phi and grad phi. Its range is exactly the
/// range of `divergence`, so projecting with it leaves a velocity whose
/// discrete divergence vanishes to solver tolerance.
class ProjectionOperator {
 public:
  explicit ProjectionOperator(const Grid& g) : g_(g) {
    const int nx = g.nx(), ny = g.ny();
    inv_diag_.resize(g.size());
    const double cx = 0.25 / (g.hx() * g.hx()), cy = 0.25 / (g.hy() * g.hy());
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const int nbx = (i > 0) + (i < nx - 1), nby = (j > 0) + (j < ny - 1);
        inv_diag_[j * nx + i] = 1.0 / (cx * nbx + cy * nby);
      }
    // both counts odd: phi = 1 on nodes with odd 1-based indices is in the kernel
    if (nx % 2 == 1 && ny % 2 == 1) {
      null_.assign(g.size(), 0.0);
      double c = 0.0;
      for (int j = 0; j < ny; j += 2)
        for (int i = 0; i < nx; i += 2) {
          null_[j * nx + i] = 1.0;
          c += 1.0;
        }
      for (double& v : null_) v /= std::sqrt(c);
    }
    gx_.resize(g.size());
    gy_.resize(g.size());
  }

  void operator()(std::span<const double> x, std::span<double> y) const {
    const int nx = g_.nx(), ny = g_.ny();
    const double cx = 0.5 / g_.hx(), cy = 0.5 / g_.hy();
    auto& gx = gx_;
    auto& gy = gy_;
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const std::size_t k = j * nx + i;
        gx[k] = cx * ((i < nx - 1 ? x[k + 1] : 0.0) - (i > 0 ? x[k - 1] : 0.0));
        gy[k] = cy * ((j < ny - 1 ? x[k + nx] : 0.0) - (j > 0 ? x[k - nx] : 0.0));
      }
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const std::size_t k = j * nx + i;
        y[k] = -cx * ((i < nx - 1 ? gx[k + 1] : 0.0) - (i > 0 ? gx[k - 1] : 0.0)) -
               cy * ((j < ny - 1 ? gy[k + nx] : 0.0) - (j > 0 ? gy[k - nx] : 0.0));
      }
  }

  std::span<const double> inv_diag() const { return inv_diag_; }
  std::span<const double> null_unit() const { return null_; }

 private:
  Grid g_;
  std::vector<double> inv_diag_, null_;
  mutable std::vector<double> gx_, gy_;
};

struct PoissonResult {
  ScalarField f;
  SolveStats stats;
  double regularity_ratio = 0.0;  ///< ||f||_{H^2_h} / ||g||_{L^2}, observed only
};

inline double h2_norm(const ScalarField& f) {
  const double l = norm(laplacian(f));
  return std::sqrt(inner(f, f) + grad_norm_sq(f) + l * l);
}

inline double mean_value(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// -lap_h f = g with f = 0 on the boundary (compact 5-point stencil).
inline PoissonResult solve_poisson_dirichlet(const ScalarField& g, const SolverSpec& spec,
                                             const SpectralSolver* fd = nullptr) {
  spec.validate();
  if (!g.all_finite()) throw DomainError("non-finite Poisson source");
  std::optional<SpectralSolver> own;
  if (!fd) fd = &own.emplace(g.grid(), SpectralSolver::Kind::compact);
  ScalarField one(g.grid(), Bc::neumann);
  one.fill(1.0);
  DiffusionOperator op(one, 0.0, 1.0, Bc::dirichlet);
  PoissonResult res{ScalarField(g.grid(), Bc::dirichlet), {}, 0.0};
  res.stats = conjugate_gradient(
      op, [&](std::span<const double> r, std::span<double> z) { fd->solve(r, z, 0.0, 1.0); },
      g.values(), res.f.values(), spec, "poisson");
  const double gn = norm(g);
  res.regularity_ratio = gn > 0.0 ? h2_norm(res.f) / gn : 0.0;
  return res;
}

struct HelmholtzResult {
  ScalarField f;
  SolveStats stats;
};

/// (I - lam div(a grad)) f = rhs with boundary tag `bc`. An optional
/// compact spectral solver for the same tag is used as a constant-coefficient
/// preconditioner; otherwise Jacobi.
inline HelmholtzResult solve_helmholtz_var(const ScalarField& a, double lam,
                                           const ScalarField& rhs, Bc bc,
                                           const SolverSpec& spec,
                                           const ScalarField* guess = nullptr,
                                           const SpectralSolver* fd = nullptr) {
  spec.validate();
  if (!(lam > 0.0)) throw DomainError("Helmholtz parameter must be positive");
  for (double v : a.values())
    if (!(v > 0.0)) throw DomainError("Helmholtz coefficient must be positive");
  if (!rhs.all_finite()) throw DomainError("non-finite Helmholtz right-hand side");
  DiffusionOperator op(a, 1.0, lam, bc);
  HelmholtzResult res{ScalarField(rhs.grid(), bc), {}};
  const auto init = guess ? guess->values() : rhs.values();
  std::copy(init.begin(), init.end(), res.f.values().begin());
  if (fd) {
    const double abar = mean_value(a.values());
    res.stats = conjugate_gradient(
        op, [&](std::span<const double> r, std::span<double> z) { fd->solve(r, z, 1.0, lam * abar); },
        rhs.values(), res.f.values(), spec, "helmholtz");
  } else {
    res.stats = conjugate_gradient(op, jacobi(op.inv_diag()), rhs.values(), res.f.values(), spec,
                                   "helmholtz");
  }
  return res;
}

struct Projection {
  VectorField u;
  ScalarField phi;
  SolveStats stats;
};

/// Discrete Leray projection on a fixed grid: u = u_star - grad phi with
/// -div grad phi = -div u_star. u keeps a zero dirichlet trace and div(u)
/// vanishes to the solver tolerance. The wide operator is diagonalised
/// exactly, so CG finishes in one or two sweeps.
class Projector {
 public:
  explicit Projector(const Grid& g) : grid_(g), op_(g), fd_(g, SpectralSolver::Kind::wide) {}

  Projection operator()(const VectorField& u_star, const SolverSpec& spec,
                        const ScalarField* guess = nullptr) const {
    spec.validate();
    if (!u_star.all_finite()) throw DomainError("non-finite velocity in projection");
    detail::check_same(grid_, u_star.grid());
    ScalarField rhs = divergence(u_star);
    rhs *= -1.0;
    Projection pr{u_star, ScalarField(grid_, Bc::dirichlet), {}};
    if (guess)
      std::copy(guess->values().begin(), guess->values().end(), pr.phi.values().begin());
    pr.stats = conjugate_gradient(
        op_, [&](std::span<const double> r, std::span<double> z) { fd_.solve(r, z, 0.0, 1.0); },
        rhs.values(), pr.phi.values(), spec, "projection", op_.null_unit());
    pr.u -= gradient(pr.phi);
    return pr;
  }

  const ProjectionOperator& op() const { return op_; }

 private:
  Grid grid_;
  ProjectionOperator op_;
  SpectralSolver fd_;
};

inline Projection project_div_free(const VectorField& u_star, const SolverSpec& spec,
                                   const ScalarField* guess = nullptr) {
  return Projector(u_star.grid())(u_star, spec, guess);
}

/// sqrt(<f, (-lap_h)^{-1} f>), the computable stand-in for ||f||_{H^{-1}}.
inline double hminus1_proxy(const ScalarField& f, const SolverSpec& spec,
                            const SpectralSolver* fd = nullptr) {
  const auto s = solve_poisson_dirichlet(f, spec, fd);
  return std::sqrt(std::max(0.0, inner(f, s.f)));
}
inline double hminus1_proxy(const VectorField& f, const SolverSpec& spec) {
  const double a = hminus1_proxy(f.x, spec), b = hminus1_proxy(f.y, spec);
  return std::sqrt(a * a + b * b);
}

inline double mean(const ScalarField& f) { return mean_value(f.values()); }

/// Pressure gradient for a field stored with mean zero and a constant wall
/// value: grad(p - p_wall) with dirichlet ghosts.
inline VectorField pressure_gradient(const ScalarField& p, double p_wall) {
  ScalarField shifted = p;
  for (double& v : shifted.values()) v -= p_wall;
  return gradient(shifted);
}

struct StokesResult {
  VectorField u;
  ScalarField p;        ///< interior pressure, mean zero
  double p_wall = 0.0;  ///< constant boundary value of the pressure
  int outer_iterations = 0;
  double momentum_residual = 0.0;  ///< ||-div(mu grad u) + grad p - f|| / ||f||
  double div_residual = 0.0;       ///< ||div u|| / ||u||_{H^1}
  double dissipation = 0.0;        ///< <mu grad u, grad u>
  double work = 0.0;               ///< <f, u>
  double energy_ratio = 0.0;       ///< (||u||_{H^1} + ||p||) / ||f||_{H^-1 proxy}
  double h2_ratio = 0.0;           ///< (||lap u|| + ||grad p||) / (||f|| + ||u||_{H^1} + ||p||)
  double h3_ratio = 0.0;           ///< (||grad lap u|| + ||lap p||) / (||f||_{H^1} + ||u||_{H^2} + ||p||_{H^1})
  std::vector<double> history;     ///< outer relative residuals
};

/// Steady -div(mu grad u) + grad p = f, div u = 0, u = 0 on the boundary,
/// mean(p) = 0. Uzawa iteration accelerated by CG on the pressure Schur
/// complement, with diffusion solves inside and a 1/mu-scaled
/// preconditioner. Throws SolverError with the residual history on
/// stagnation.
inline StokesResult solve_stokes_var(const ScalarField& mu, const VectorField& f,
                                     const SolverSpec& spec, double c_min = 0.0) {
  spec.validate();
  const Grid& g = f.grid();
  for (double v : mu.values())
    if (!(v > 0.0) || v < c_min) throw DomainError("Stokes viscosity below its lower bound");
  if (!f.all_finite()) throw DomainError("non-finite Stokes forcing");

  DiffusionOperator visc(mu, 0.0, 1.0, Bc::dirichlet);
  ProjectionOperator proj(g);
  const SpectralSolver fd(g, SpectralSolver::Kind::compact);
  const double mubar = mean_value(mu.values());
  auto visc_pre = [&](std::span<const double> r, std::span<double> z) {
    fd.solve(r, z, 0.0, mubar);
  };
  SolverSpec inner_spec{std::max(1e-14, std::min(1e-12, spec.rel_tol * 1e-2)), spec.max_iter};

  auto solve_visc = [&](const VectorField& rhs, VectorField& out) {
    conjugate_gradient(visc, visc_pre, rhs.x.values(), out.x.values(), inner_spec,
                       "stokes velocity");
    conjugate_gradient(visc, visc_pre, rhs.y.values(), out.y.values(), inner_spec,
                       "stokes velocity");
  };
  // S p = -div A^{-1} grad p
  auto schur = [&](const ScalarField& p, ScalarField& out) {
    VectorField w(g, Bc::dirichlet);
    solve_visc(gradient(p), w);
    out = divergence(w);
    out *= -1.0;
  };

  const std::size_t n = g.size();
  StokesResult res{VectorField(g, Bc::dirichlet), ScalarField(g, Bc::dirichlet), 0.0, 0, 0.0,
                   0.0, 0.0, 0.0, 0.0, 0.0, 0.0, {}};
  VectorField af(g, Bc::dirichlet);
  solve_visc(f, af);
  ScalarField b = divergence(af);
  b *= -1.0;
  detail::remove_component(b.values(), proj.null_unit());
  const double bnorm = norm(b);

  ScalarField p(g, Bc::dirichlet), r = b, z(g, Bc::dirichlet), d(g, Bc::dirichlet),
      q(g, Bc::dirichlet);
  const auto mv = mu.values();
  auto precondition = [&](const ScalarField& in, ScalarField& out) {
    for (std::size_t k = 0; k < n; ++k) out[k] = mv[k] * in[k];
    detail::remove_component(out.values(), proj.null_unit());
  };
  if (bnorm > 0.0) {
    precondition(r, z);
    d = z;
    double rz = inner(r, z);
    const double target = spec.rel_tol * bnorm;
    int stalled = 0;
    double best = norm(r);
    while (true) {
      schur(d, q);
      const double alpha = rz / inner(d, q);
      p.axpy(alpha, d);
      r.axpy(-alpha, q);
      detail::remove_component(r.values(), proj.null_unit());
      const double rn = norm(r);
      res.history.push_back(rn / bnorm);
      ++res.outer_iterations;
      if (rn <= target) break;
      stalled = rn < 0.9 * best ? 0 : stalled + 1;
      best = std::min(best, rn);
      if (res.outer_iterations >= spec.max_iter || stalled > 200) {
        std::string h;
        for (std::size_t k = res.history.size() > 5 ? res.history.size() - 5 : 0;
             k < res.history.size(); ++k)
        {
          char buf[32];
          std::snprintf(buf, sizeof buf, " %.3e", res.history[k]);
          h += buf;
        }
        throw SolverError("Stokes Uzawa iteration stagnated; last residuals:" + h,
                          rn / bnorm);
      }
      precondition(r, z);
      const double rz_new = inner(r, z);
      d *= rz_new / rz;
      d += z;
      rz = rz_new;
    }
  }

  VectorField rhs = f;
  rhs -= gradient(p);
  res.u = af;  // warm start
  solve_visc(rhs, res.u);

  const double pm = mean(p);
  res.p = p;
  for (double& v : res.p.values()) v -= pm;
  res.p_wall = -pm;

  const VectorField gp = pressure_gradient(res.p, res.p_wall);
  VectorField mom = var_diffuse(mu, res.u);
  mom *= -1.0;
  mom += gp;
  mom -= f;
  const double fn = norm(f);
  res.momentum_residual = fn > 0.0 ? norm(mom) / fn : norm(mom);
  const double h1 = std::sqrt(inner(res.u, res.u) + grad_norm_sq(res.u));
  res.div_residual = h1 > 0.0 ? norm(divergence(res.u)) / h1 : norm(divergence(res.u));
  res.dissipation = -inner(var_diffuse(mu, res.u), res.u);
  res.work = inner(f, res.u);
  const double pn = norm(res.p);
  const double fm1 = fn > 0.0 ? hminus1_proxy(f, spec) : 0.0;
  res.energy_ratio = fm1 > 0.0 ? (h1 + pn) / fm1 : 0.0;
  const VectorField lap_u = laplacian(res.u);
  const double den2 = fn + h1 + pn;
  res.h2_ratio = den2 > 0.0 ? (norm(lap_u) + norm(gp)) / den2 : 0.0;
  ScalarField p_shift = res.p;
  for (double& v : p_shift.values()) v -= res.p_wall;
  const double gl = std::sqrt(grad_norm_sq(lap_u.x) + grad_norm_sq(lap_u.y));
  const double f_h1 = std::sqrt(fn * fn + grad_norm_sq(f));
  const double u_h2 = std::sqrt(h1 * h1 + norm(lap_u) * norm(lap_u));
  const double p_h1 = std::sqrt(pn * pn + inner(gp, gp));
  const double den3 = f_h1 + u_h2 + p_h1;
  res.h3_ratio = den3 > 0.0 ? (gl + norm(laplacian(p_shift))) / den3 : 0.0;
  return res;
}

}  // namespace tcm
