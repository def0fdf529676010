#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tcm/diagnostics.hpp"
#include "tcm/error.hpp"
#include "tcm/grid.hpp"

namespace tcm {

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void ensure_parent(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

}  // namespace detail

/// Column order of the ledger CSV.
inline const std::vector<std::string>& ledger_columns() {
  static const std::vector<std::string> cols{
      "step", "t", "dt", "u_L2", "v_L2", "theta_L2", "grad_u_L2", "grad_v_L2",
      "grad_theta_L2", "lap_u_L2", "lap_v_L2", "lap_theta_L2", "E", "dE", "dissipation",
      "dissipation_floor", "explicit_work", "damping", "forcing_work", "ledger_residual",
      "coupling_residual", "theta_Linf", "v_L4", "v_L6", "theta_L4", "div_u_L2"};
  return cols;
}

inline std::vector<double> ledger_row(const EnergyRecord& r) {
  return {static_cast<double>(r.step), r.t, r.dt, r.u_l2, r.v_l2, r.theta_l2, r.u_h1, r.v_h1,
          r.theta_h1, r.u_h2, r.v_h2, r.theta_h2, r.energy, r.d_energy, r.dissipation,
          r.dissipation_floor, r.explicit_work, r.damping, r.forcing_work, r.ledger_residual,
          r.coupling_residual, r.sup_theta, r.v_l4, r.v_l6, r.theta_l4, r.div_u};
}

inline EnergyRecord ledger_from_row(const std::vector<double>& v) {
  if (v.size() != ledger_columns().size()) throw DomainError("ledger row has wrong width");
  EnergyRecord r;
  std::size_t k = 0;
  r.step = static_cast<long>(v[k++]);
  for (double* f : {&r.t, &r.dt, &r.u_l2, &r.v_l2, &r.theta_l2, &r.u_h1, &r.v_h1, &r.theta_h1,
                    &r.u_h2, &r.v_h2, &r.theta_h2, &r.energy, &r.d_energy, &r.dissipation,
                    &r.dissipation_floor, &r.explicit_work, &r.damping, &r.forcing_work,
                    &r.ledger_residual, &r.coupling_residual, &r.sup_theta, &r.v_l4, &r.v_l6,
                    &r.theta_l4, &r.div_u})
    *f = v[k++];
  return r;
}

inline void write_ledger_csv(const std::filesystem::path& path,
                             const std::vector<EnergyRecord>& records) {
  detail::ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const auto& cols = ledger_columns();
  for (std::size_t k = 0; k < cols.size(); ++k) out << (k ? "," : "") << cols[k];
  out << '\n';
  for (const auto& r : records) {
    const auto row = ledger_row(r);
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << detail::fmt17(row[k]);
    out << '\n';
  }
}

inline std::vector<EnergyRecord> read_ledger_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) header.push_back(c);
  }
  if (header != ledger_columns()) throw DomainError(path.string() + ": unexpected ledger header");
  std::vector<EnergyRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) {
      try {
        row.push_back(std::stod(c));
      } catch (const std::exception&) {
        throw DomainError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + c + "'");
      }
    }
    out.push_back(ledger_from_row(row));
  }
  return out;
}

/// Header "# nx ny lx ly t", then "i,j,value" rows (0-based interior
/// indices, row-major).
inline void write_snapshot_csv(const std::filesystem::path& path, const ScalarField& f, double t) {
  detail::ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const Grid& g = f.grid();
  out << "# " << g.nx() << ' ' << g.ny() << ' ' << detail::fmt17(g.lx()) << ' '
      << detail::fmt17(g.ly()) << ' ' << detail::fmt17(t) << '\n';
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) out << i << ',' << j << ',' << detail::fmt17(f(i, j)) << '\n';
}

struct SnapshotFile {
  int nx = 0, ny = 0;
  double lx = 0.0, ly = 0.0, t = 0.0;
  std::vector<double> values;

  ScalarField field(const Grid& g, Bc bc) const {
    if (g.nx() != nx || g.ny() != ny) throw DomainError("snapshot does not match the grid");
    ScalarField f(g, bc);
    std::copy(values.begin(), values.end(), f.values().begin());
    return f;
  }
};

inline SnapshotFile read_snapshot_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  SnapshotFile s;
  std::string hash;
  in >> hash >> s.nx >> s.ny >> s.lx >> s.ly >> s.t;
  if (hash != "#" || !in || s.nx < 1 || s.ny < 1)
    throw DomainError(path.string() + ": malformed snapshot header");
  s.values.assign(static_cast<std::size_t>(s.nx) * s.ny, 0.0);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    int i = 0, j = 0;
    double v = 0.0;
    if (std::sscanf(line.c_str(), "%d,%d,%lf", &i, &j, &v) != 3 || i < 0 || i >= s.nx || j < 0 ||
        j >= s.ny)
      throw DomainError(path.string() + ": malformed snapshot row '" + line + "'");
    s.values[static_cast<std::size_t>(j) * s.nx + i] = v;
  }
  return s;
}

/// Writes theta, v1, v2 snapshot files named <stem>_<field>_<index>.csv.
inline void write_snapshot_set(const std::filesystem::path& dir, const std::vector<Snapshot>& snaps) {
  for (std::size_t k = 0; k < snaps.size(); ++k) {
    char idx[16];
    std::snprintf(idx, sizeof idx, "%05zu", k);
    write_snapshot_csv(dir / ("theta_" + std::string(idx) + ".csv"), snaps[k].theta, snaps[k].t);
    write_snapshot_csv(dir / ("v1_" + std::string(idx) + ".csv"), snaps[k].v.x, snaps[k].t);
    write_snapshot_csv(dir / ("v2_" + std::string(idx) + ".csv"), snaps[k].v.y, snaps[k].t);
  }
}

inline std::vector<Snapshot> read_snapshot_set(const std::filesystem::path& dir, const Grid& g) {
  std::vector<Snapshot> out;
  for (std::size_t k = 0;; ++k) {
    char idx[16];
    std::snprintf(idx, sizeof idx, "%05zu", k);
    const auto th = dir / ("theta_" + std::string(idx) + ".csv");
    if (!std::filesystem::exists(th)) break;
    const auto a = read_snapshot_csv(th);
    const auto b = read_snapshot_csv(dir / ("v1_" + std::string(idx) + ".csv"));
    const auto c = read_snapshot_csv(dir / ("v2_" + std::string(idx) + ".csv"));
    out.push_back({a.t, a.field(g, g.bc().theta),
                   VectorField(b.field(g, g.bc().v), c.field(g, g.bc().v))});
  }
  return out;
}

/// Text header, raw little-endian doubles (u1 u2 v1 v2 theta p, row-major),
/// then the effective-config echo.
inline void write_checkpoint(const std::filesystem::path& path, const State& s,
                             const std::string& config_echo) {
  detail::ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const Grid& g = s.grid();
  char t_hex[64];
  std::snprintf(t_hex, sizeof t_hex, "%a", s.t);
  char lx[64], ly[64];
  std::snprintf(lx, sizeof lx, "%a", g.lx());
  std::snprintf(ly, sizeof ly, "%a", g.ly());
  out << "tcm-checkpoint 1\n"
      << "grid " << g.nx() << ' ' << g.ny() << ' ' << lx << ' ' << ly << '\n'
      << "bc " << to_string(g.bc().u) << ' ' << to_string(g.bc().v) << ' '
      << to_string(g.bc().theta) << '\n'
      << "time " << t_hex << ' ' << s.step << '\n'
      << "data " << 6 * g.size() * sizeof(double) << '\n';
  for (const ScalarField* f : {&s.u.x, &s.u.y, &s.v.x, &s.v.y, &s.theta, &s.p})
    out.write(reinterpret_cast<const char*>(f->values().data()),
              static_cast<std::streamsize>(f->size() * sizeof(double)));
  out << "\nconfig\n" << config_echo;
  if (!out) throw Error("failed while writing " + path.string());
}

struct Checkpoint {
  State state;
  std::string config_echo;
};

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  auto bad = [&](const std::string& why) {
    return DomainError(path.string() + ": malformed checkpoint (" + why + ")");
  };
  std::string line, word;
  std::getline(in, line);
  if (line != "tcm-checkpoint 1") throw bad("magic");
  int nx = 0, ny = 0;
  std::string lx, ly, bu, bv, bt, th;
  long step = 0;
  std::size_t bytes = 0;
  in >> word >> nx >> ny >> lx >> ly;
  if (word != "grid") throw bad("grid line");
  in >> word >> bu >> bv >> bt;
  if (word != "bc") throw bad("bc line");
  in >> word >> th >> step;
  if (word != "time") throw bad("time line");
  in >> word >> bytes;
  if (word != "data" || !in) throw bad("data line");
  in.get();
  auto tag = [&](const std::string& s) {
    if (s == "dirichlet") return Bc::dirichlet;
    if (s == "neumann") return Bc::neumann;
    throw bad("boundary tag " + s);
  };
  const Grid g(nx, ny, std::strtod(lx.c_str(), nullptr), std::strtod(ly.c_str(), nullptr),
               BcSet{tag(bu), tag(bv), tag(bt)});
  if (bytes != 6 * g.size() * sizeof(double)) throw bad("data size");
  Checkpoint c{State(g), {}};
  c.state.t = std::strtod(th.c_str(), nullptr);
  c.state.step = step;
  for (ScalarField* f : {&c.state.u.x, &c.state.u.y, &c.state.v.x, &c.state.v.y, &c.state.theta,
                         &c.state.p})
    in.read(reinterpret_cast<char*>(f->values().data()),
            static_cast<std::streamsize>(f->size() * sizeof(double)));
  if (!in) throw bad("truncated data");
  std::getline(in, line);
  std::getline(in, line);
  if (line != "config") throw bad("config marker");
  std::stringstream rest;
  rest << in.rdbuf();
  c.config_echo = rest.str();
  return c;
}

}  // namespace tcm
