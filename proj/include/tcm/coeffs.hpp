#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "tcm/error.hpp"
#include "tcm/grid.hpp"
#include "tcm/ops.hpp"

namespace tcm {

/// A temperature-dependent coefficient c(theta) from a small closed set of
/// built-ins, each with closed-form derivatives and antiderivative, plus a
/// `custom` escape hatch whose antiderivative falls back to quadrature.
class CoeffFn {
 public:
  enum class Kind { constant, quadratic, gauss, affine_clamped, custom };

  static CoeffFn constant(double c) { return CoeffFn(Kind::constant, {c, 0, 0, 0}); }
  /// a + b theta^2
  static CoeffFn quadratic(double a, double b) { return CoeffFn(Kind::quadratic, {a, b, 0, 0}); }
  /// a + b exp(-theta^2)
  static CoeffFn gauss(double a, double b) { return CoeffFn(Kind::gauss, {a, b, 0, 0}); }
  /// clamp(a + b theta, lo, hi)
  static CoeffFn affine_clamped(double a, double b, double lo, double hi) {
    if (!(lo <= hi)) throw ConfigError("affine_clamped needs lo <= hi");
    return CoeffFn(Kind::affine_clamped, {a, b, lo, hi});
  }
  static CoeffFn custom(std::function<double(double)> f, std::string name = "custom") {
    CoeffFn c(Kind::custom, {0, 0, 0, 0});
    c.fn_ = std::move(f);
    c.name_ = std::move(name);
    return c;
  }

  /// Parses the textual form written by `to_string`, e.g. "quadratic 1 1",
  /// or the short form "quad:1,1" (aliases const, quad, gauss, clamp).
  static CoeffFn parse(const std::string& text) {
    std::string norm_text = text;
    std::replace(norm_text.begin(), norm_text.end(), ':', ' ');
    std::replace(norm_text.begin(), norm_text.end(), ',', ' ');
    std::istringstream in(norm_text);
    std::string kind;
    in >> kind;
    if (kind == "const") kind = "constant";
    if (kind == "quad") kind = "quadratic";
    if (kind == "clamp") kind = "affine_clamped";
    std::vector<double> p;
    for (double v; in >> v;) p.push_back(v);
    if (!in.eof()) throw ConfigError("malformed coefficient '" + text + "'");
    auto need = [&](std::size_t n) {
      if (p.size() != n)
        throw ConfigError("coefficient '" + kind + "' takes " + std::to_string(n) +
                          " parameters, got " + std::to_string(p.size()));
    };
    if (kind == "constant") return need(1), constant(p[0]);
    if (kind == "quadratic") return need(2), quadratic(p[0], p[1]);
    if (kind == "gauss") return need(2), gauss(p[0], p[1]);
    if (kind == "affine_clamped") return need(4), affine_clamped(p[0], p[1], p[2], p[3]);
    throw ConfigError("unknown coefficient function '" + kind + "'");
  }

  std::string to_string() const {
    std::ostringstream out;
    out.precision(17);
    switch (kind_) {
      case Kind::constant: out << "constant " << p_[0]; break;
      case Kind::quadratic: out << "quadratic " << p_[0] << ' ' << p_[1]; break;
      case Kind::gauss: out << "gauss " << p_[0] << ' ' << p_[1]; break;
      case Kind::affine_clamped:
        out << "affine_clamped " << p_[0] << ' ' << p_[1] << ' ' << p_[2] << ' ' << p_[3];
        break;
      case Kind::custom: out << name_; break;
    }
    return out.str();
  }

  Kind kind() const { return kind_; }
  bool has_antiderivative() const { return kind_ != Kind::custom; }

  double operator()(double th) const {
    switch (kind_) {
      case Kind::constant: return p_[0];
      case Kind::quadratic: return p_[0] + p_[1] * th * th;
      case Kind::gauss: return p_[0] + p_[1] * std::exp(-th * th);
      case Kind::affine_clamped: return std::clamp(p_[0] + p_[1] * th, p_[2], p_[3]);
      case Kind::custom: return fn_(th);
    }
    return 0.0;
  }

  double deriv(double th) const {
    switch (kind_) {
      case Kind::constant: return 0.0;
      case Kind::quadratic: return 2.0 * p_[1] * th;
      case Kind::gauss: return -2.0 * p_[1] * th * std::exp(-th * th);
      case Kind::affine_clamped: {
        const double lin = p_[0] + p_[1] * th;
        return (lin > p_[2] && lin < p_[3]) ? p_[1] : 0.0;
      }
      case Kind::custom: {
        const double h = 1e-5 * std::max(1.0, std::abs(th));
        return (fn_(th + h) - fn_(th - h)) / (2 * h);
      }
    }
    return 0.0;
  }

  double deriv2(double th) const {
    switch (kind_) {
      case Kind::constant: return 0.0;
      case Kind::quadratic: return 2.0 * p_[1];
      case Kind::gauss: return p_[1] * (4.0 * th * th - 2.0) * std::exp(-th * th);
      case Kind::affine_clamped: return 0.0;
      case Kind::custom: {
        const double h = 1e-4 * std::max(1.0, std::abs(th));
        return (fn_(th + h) - 2 * fn_(th) + fn_(th - h)) / (h * h);
      }
    }
    return 0.0;
  }

  /// int_0^th c(z) dz.
  double antiderivative(double th) const {
    switch (kind_) {
      case Kind::constant: return p_[0] * th;
      case Kind::quadratic: return p_[0] * th + p_[1] * th * th * th / 3.0;
      case Kind::gauss:
        return p_[0] * th + p_[1] * 0.5 * std::sqrt(std::numbers::pi) * std::erf(th);
      case Kind::affine_clamped: return clamped_integral(th);
      case Kind::custom: return quadrature(th);
    }
    return 0.0;
  }

  /// Adaptive Gauss-Kronrod integral of c over [0, th].
  double quadrature(double th) const {
    if (th == 0.0) return 0.0;
    double err = 0.0;
    const double r = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        [this](double z) { return (*this)(z); }, 0.0, th, 15, 1e-13, &err);
    if (!std::isfinite(r) || err > 1e-7 * std::max(1.0, std::abs(r)))
      throw SolverError("quadrature of coefficient failed at theta=" + std::to_string(th), err);
    return r;
  }

 private:
  CoeffFn(Kind k, std::array<double, 4> p) : kind_(k), p_(p) {}

  double clamped_integral(double th) const {
    // integrate the piecewise-linear clamp exactly between its breakpoints
    const double a = p_[0], b = p_[1], lo = p_[2], hi = p_[3];
    std::vector<double> pts{0.0, th};
    if (b != 0.0)
      for (double c : {(lo - a) / b, (hi - a) / b})
        if ((c > 0.0 && c < th) || (c < 0.0 && c > th)) pts.push_back(c);
    std::sort(pts.begin(), pts.end());
    double s = 0.0;
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
      const double m = 0.5 * (pts[k] + pts[k + 1]);
      const double lin = a + b * m;
      const double l = pts[k], r = pts[k + 1];
      if (lin <= lo)
        s += lo * (r - l);
      else if (lin >= hi)
        s += hi * (r - l);
      else
        s += a * (r - l) + 0.5 * b * (r * r - l * l);
    }
    return th >= 0.0 ? s : -s;
  }

  Kind kind_;
  std::array<double, 4> p_;
  std::function<double(double)> fn_;
  std::string name_;
};

/// mu, nu, kappa with the common lower bound 1/sigma.
struct CoeffSet {
  CoeffFn mu = CoeffFn::constant(1.0);
  CoeffFn nu = CoeffFn::constant(1.0);
  CoeffFn kappa = CoeffFn::constant(1.0);
  double sigma = 1.0;

  double lower_bound() const { return 1.0 / sigma; }

  /// Dense-sample sup over [-range, range] of |c|, |c'|, |c''| for c in
  /// {kappa, mu, nu}; never below 1/sigma.
  double m_tilde(double range, int samples = 4001) const {
    double m = lower_bound();
    for (int k = 0; k < samples; ++k) {
      const double th = samples == 1 ? 0.0 : -range + 2.0 * range * k / (samples - 1);
      for (const CoeffFn* c : {&kappa, &mu, &nu})
        m = std::max({m, std::abs((*c)(th)), std::abs(c->deriv(th)), std::abs(c->deriv2(th))});
    }
    return m;
  }

  /// Checks every coefficient stays >= 1/sigma on a dense sample of
  /// [-range, range]; throws ConfigError naming the first violation.
  void validate(double range, int samples = 4001) const {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
      throw ConfigError("sigma must be positive and finite");
    const char* names[] = {"mu", "nu", "kappa"};
    const CoeffFn* fns[] = {&mu, &nu, &kappa};
    for (int k = 0; k < samples; ++k) {
      const double th = samples == 1 ? 0.0 : -range + 2.0 * range * k / (samples - 1);
      for (int c = 0; c < 3; ++c) {
        const double v = (*fns[c])(th);
        if (!(v >= lower_bound()))
          throw ConfigError(std::string(names[c]) + "(" + std::to_string(th) + ") = " +
                            std::to_string(v) + " is below 1/sigma = " +
                            std::to_string(lower_bound()));
      }
    }
  }
};

inline ScalarField apply_coeff(const CoeffFn& c, const ScalarField& theta, double lower,
                               const char* name) {
  ScalarField out(theta.grid(), Bc::neumann);
  auto o = out.values();
  const auto th = theta.values();
  for (std::size_t k = 0; k < o.size(); ++k) {
    o[k] = c(th[k]);
    if (!(o[k] >= lower))
      throw ConfigError(std::string(name) + "(" + std::to_string(th[k]) + ") = " +
                        std::to_string(o[k]) + " violates the lower bound 1/sigma = " +
                        std::to_string(lower));
  }
  return out;
}

struct CoeffFields {
  ScalarField mu, nu, kappa;
};

/// Pointwise mu(theta), nu(theta), kappa(theta); throws ConfigError if any
/// value drops below 1/sigma.
inline CoeffFields eval_coeffs(const CoeffSet& c, const ScalarField& theta) {
  if (!theta.all_finite()) throw DomainError("non-finite temperature field");
  const double lb = c.lower_bound();
  return {apply_coeff(c.mu, theta, lb, "mu"), apply_coeff(c.nu, theta, lb, "nu"),
          apply_coeff(c.kappa, theta, lb, "kappa")};
}

/// Kirchhoff transform int_0^theta kappa(z) dz, node by node. Keeps the
/// boundary tag, so a zero dirichlet trace stays zero.
inline ScalarField good_unknown(const CoeffSet& c, const ScalarField& theta) {
  ScalarField out(theta.grid(), theta.bc());
  auto o = out.values();
  const auto th = theta.values();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = c.kappa.antiderivative(th[k]);
  return out;
}

/// Inverse of the Kirchhoff transform by bracketed TOMS 748 root finding.
/// Since kappa >= 1/sigma, |theta| <= sigma |K(theta)| brackets the root.
inline double inverse_good_unknown(const CoeffSet& c, double target, int max_iter = 200) {
  if (target == 0.0) return 0.0;
  const double bound = c.sigma * std::abs(target) * (1.0 + 1e-12) + 1e-300;
  auto f = [&](double th) { return c.kappa.antiderivative(th) - target; };
  double lo = -bound, hi = bound;
  double flo = f(lo), fhi = f(hi);
  if (flo > 0.0 || fhi < 0.0)
    throw SolverError("good unknown " + std::to_string(target) +
                          " is outside the range of the transform",
                      std::min(std::abs(flo), std::abs(fhi)));
  std::uintmax_t it = static_cast<std::uintmax_t>(max_iter);
  const auto r = boost::math::tools::toms748_solve(
      f, lo, hi, flo, fhi, boost::math::tools::eps_tolerance<double>(52), it);
  if (it >= static_cast<std::uintmax_t>(max_iter))
    throw SolverError("inverse good unknown did not converge for " + std::to_string(target),
                      std::abs(r.second - r.first));
  return 0.5 * (r.first + r.second);
}

inline ScalarField inverse_good_unknown(const CoeffSet& c, const ScalarField& bigtheta) {
  ScalarField out(bigtheta.grid(), bigtheta.bc());
  auto o = out.values();
  const auto b = bigtheta.values();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = inverse_good_unknown(c, b[k]);
  return out;
}

namespace detail {
/// Discrete L^q norm (q = infinity allowed) of the pointwise magnitude of w.
inline double vector_lq(const VectorField& w, double q) {
  const auto x = w.x.values(), y = w.y.values();
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double m = std::hypot(x[k], y[k]);
    s = std::isinf(q) ? std::max(s, m) : s + std::pow(m, q);
  }
  return std::isinf(q) ? s : std::pow(s * w.grid().cell_area(), 1.0 / q);
}
}  // namespace detail

struct ComparisonReport {
  double q = 2.0;
  double grad_theta = 0.0;     ///< ||grad theta||_q
  double grad_bigtheta = 0.0;  ///< ||grad K(theta)||_q
  double lower = 0.0;          ///< (1/sigma) ||grad theta||_q
  double upper = 0.0;          ///< M~ ||grad theta||_q
  double m_tilde = 0.0;
  bool pass = false;
};

/// Checks (1/sigma)|grad theta|_q <= |grad K(theta)|_q <= M~ |grad theta|_q
/// with centred gradients; M~ is sampled over the observed range of theta.
inline ComparisonReport check_comparison(const CoeffSet& c, const ScalarField& theta,
                                         const ScalarField& bigtheta, double q,
                                         double rel_slack = 1e-8) {
  if (!(q == 2.0 || q == 4.0 || std::isinf(q)))
    throw DomainError("comparison exponent must be 2, 4 or infinity");
  double sup = 0.0;
  for (double v : theta.values()) sup = std::max(sup, std::abs(v));
  ComparisonReport r;
  r.q = q;
  r.m_tilde = c.m_tilde(sup);
  r.grad_theta = detail::vector_lq(gradient(theta), q);
  r.grad_bigtheta = detail::vector_lq(gradient(bigtheta), q);
  r.lower = c.lower_bound() * r.grad_theta;
  r.upper = r.m_tilde * r.grad_theta;
  const double slack = rel_slack * std::max(r.grad_bigtheta, r.upper);
  r.pass = r.lower <= r.grad_bigtheta + slack && r.grad_bigtheta <= r.upper + slack;
  return r;
}

}  // namespace tcm
