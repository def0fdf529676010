#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <iostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tcm/error.hpp"

namespace tcm {

enum class Bc { dirichlet, neumann };

inline std::string_view to_string(Bc bc) {
  return bc == Bc::dirichlet ? "dirichlet" : "neumann";
}

/// Boundary tag of every unknown. The barotropic velocity is always no-slip.
struct BcSet {
  Bc u = Bc::dirichlet;
  Bc v = Bc::dirichlet;
  Bc theta = Bc::dirichlet;

  bool all_dirichlet() const {
    return u == Bc::dirichlet && v == Bc::dirichlet && theta == Bc::dirichlet;
  }
  bool operator==(const BcSet&) const = default;
};

/// Warnings (not errors) are routed here; tests swap the sink to capture them.
inline std::function<void(std::string_view)>& warning_sink() {
  static std::function<void(std::string_view)> sink = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

inline void warn(std::string_view msg) {
  if (warning_sink()) warning_sink()(msg);
}

/// Uniform node-centred discretisation of [0,lx]x[0,ly].
///
/// Unknowns live at the nx*ny interior nodes x_i = (i+1)*hx, i = 0..nx-1
/// (likewise in y); the boundary nodes i = -1 and i = nx are ghosts whose
/// values follow from the boundary tag of the field being evaluated.
class Grid {
 public:
  Grid(int nx, int ny, double lx, double ly, BcSet bc = {})
      : nx_(nx), ny_(ny), lx_(lx), ly_(ly), bc_(bc) {
    if (nx < 3 || ny < 3)
      throw DomainError("grid needs at least 3 interior nodes per direction, got " +
                        std::to_string(nx) + "x" + std::to_string(ny));
    if (!(lx > 0.0) || !(ly > 0.0) || !std::isfinite(lx) || !std::isfinite(ly))
      throw DomainError("domain lengths must be positive and finite");
    if (bc.u != Bc::dirichlet)
      throw DomainError("the barotropic velocity u only supports dirichlet conditions");
    hx_ = lx / (nx + 1);
    hy_ = ly / (ny + 1);
  }

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double lx() const { return lx_; }
  double ly() const { return ly_; }
  double hx() const { return hx_; }
  double hy() const { return hy_; }
  const BcSet& bc() const { return bc_; }
  std::size_t size() const { return static_cast<std::size_t>(nx_) * ny_; }
  double cell_area() const { return hx_ * hy_; }
  double x(int i) const { return (i + 1) * hx_; }
  double y(int j) const { return (j + 1) * hy_; }
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * nx_ + i;
  }

  bool same_shape(const Grid& o) const {
    return nx_ == o.nx_ && ny_ == o.ny_ && lx_ == o.lx_ && ly_ == o.ly_;
  }
  bool operator==(const Grid& o) const { return same_shape(o) && bc_ == o.bc_; }

 private:
  int nx_, ny_;
  double lx_, ly_;
  double hx_ = 0.0, hy_ = 0.0;
  BcSet bc_;
};

inline Grid make_grid(int nx, int ny, double lx, double ly, BcSet bc = {}) {
  return Grid(nx, ny, lx, ly, bc);
}

/// Nodal scalar with an attached boundary tag. Ghost values are implied:
/// zero for dirichlet, a mirror of the adjacent interior node for neumann.
class ScalarField {
 public:
  ScalarField(const Grid& g, Bc bc) : grid_(g), bc_(bc), data_(g.size(), 0.0) {}

  const Grid& grid() const { return grid_; }
  Bc bc() const { return bc_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(int i, int j) { return data_[grid_.index(i, j)]; }
  double operator()(int i, int j) const { return data_[grid_.index(i, j)]; }
  double& operator[](std::size_t k) { return data_[k]; }
  double operator[](std::size_t k) const { return data_[k]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  /// Value at node (i, j) with i in [-1, nx], j in [-1, ny].
  double at(int i, int j) const {
    const int nx = grid_.nx(), ny = grid_.ny();
    const bool gx = i < 0 || i >= nx, gy = j < 0 || j >= ny;
    if (!gx && !gy) return (*this)(i, j);
    if (bc_ == Bc::dirichlet) return 0.0;
    return (*this)(gx ? (i < 0 ? 0 : nx - 1) : i, gy ? (j < 0 ? 0 : ny - 1) : j);
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  ScalarField& operator+=(const ScalarField& o) {
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  ScalarField& operator-=(const ScalarField& o) {
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  ScalarField& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }
  /// this += s * o
  ScalarField& axpy(double s, const ScalarField& o) {
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += s * o.data_[k];
    return *this;
  }
  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const ScalarField& o) const {
    return grid_.same_shape(o.grid_) && bc_ == o.bc_ && data_ == o.data_;
  }

 private:
  Grid grid_;
  Bc bc_;
  std::vector<double> data_;
};

inline ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
inline ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
inline ScalarField operator*(double s, ScalarField a) { return a *= s; }

/// Collocated two-component field; both components share one tag.
struct VectorField {
  ScalarField x;
  ScalarField y;

  VectorField(const Grid& g, Bc bc) : x(g, bc), y(g, bc) {}
  VectorField(ScalarField fx, ScalarField fy) : x(std::move(fx)), y(std::move(fy)) {}

  const Grid& grid() const { return x.grid(); }
  Bc bc() const { return x.bc(); }
  bool all_finite() const { return x.all_finite() && y.all_finite(); }

  VectorField& operator+=(const VectorField& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  VectorField& operator-=(const VectorField& o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  VectorField& operator*=(double s) {
    x *= s;
    y *= s;
    return *this;
  }
  VectorField& axpy(double s, const VectorField& o) {
    x.axpy(s, o.x);
    y.axpy(s, o.y);
    return *this;
  }
  bool operator==(const VectorField&) const = default;
};

inline VectorField operator+(VectorField a, const VectorField& b) { return a += b; }
inline VectorField operator-(VectorField a, const VectorField& b) { return a -= b; }
inline VectorField operator*(double s, VectorField a) { return a *= s; }

/// Full solution snapshot. `p` is the pressure measured relative to its
/// (constant) wall value, which is how the projection pins the gauge.
struct State {
  VectorField u;
  VectorField v;
  ScalarField theta;
  ScalarField p;
  double t = 0.0;
  long step = 0;

  explicit State(const Grid& g)
      : u(g, g.bc().u), v(g, g.bc().v), theta(g, g.bc().theta), p(g, Bc::dirichlet) {}

  const Grid& grid() const { return theta.grid(); }
  bool all_finite() const {
    return u.all_finite() && v.all_finite() && theta.all_finite() && p.all_finite();
  }
  bool operator==(const State&) const = default;
};

/// Samples `init` at the interior nodes. A dirichlet field whose data does
/// not vanish on the boundary is accepted with a warning (the discrete
/// trace is zero regardless).
template <class F>
ScalarField make_field(const Grid& g, Bc bc, F&& init) {
  ScalarField f(g, bc);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const double v = init(g.x(i), g.y(j));
      if (!std::isfinite(v))
        throw DomainError("non-finite initial sample at node (" + std::to_string(i + 1) +
                          "," + std::to_string(j + 1) + ")");
      f(i, j) = v;
    }
  if (bc == Bc::dirichlet) {
    double trace = 0.0;
    for (int i = -1; i <= g.nx(); ++i) {
      const double x = (i + 1) * g.hx();
      trace = std::max({trace, std::abs(init(x, 0.0)), std::abs(init(x, g.ly()))});
    }
    for (int j = -1; j <= g.ny(); ++j) {
      const double y = (j + 1) * g.hy();
      trace = std::max({trace, std::abs(init(0.0, y)), std::abs(init(g.lx(), y))});
    }
    if (trace > 1e-12)
      warn("initial data does not vanish on the boundary (max |trace| = " +
           std::to_string(trace) + "); dirichlet trace forced to 0");
  }
  return f;
}

/// Copy of `f` on the (nx+2)x(ny+2) node lattice including ghosts, row-major
/// with stride nx+2. Corners are never read by the 5-point stencils.
inline void pad(const ScalarField& f, std::vector<double>& out) {
  const Grid& g = f.grid();
  const int nx = g.nx(), ny = g.ny(), s = nx + 2;
  out.assign(static_cast<std::size_t>(s) * (ny + 2), 0.0);
  const auto v = f.values();
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) out[(j + 1) * s + i + 1] = v[j * nx + i];
  if (f.bc() == Bc::neumann) {
    for (int j = 1; j <= ny; ++j) {
      out[j * s] = out[j * s + 1];
      out[j * s + nx + 1] = out[j * s + nx];
    }
    for (int i = 1; i <= nx; ++i) {
      out[i] = out[s + i];
      out[(ny + 1) * s + i] = out[ny * s + i];
    }
  }
}

}  // namespace tcm
