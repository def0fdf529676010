#pragma once

// Sectioned key = value run configuration:
//   [grid] [bc] [coeffs] [init] [stepping] [output] [experiment]
// '#' and ';' start comments. Unknown sections or keys, duplicate keys and
// malformed values are rejected with the offending line number.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tcm/coeffs.hpp"
#include "tcm/elliptic.hpp"
#include "tcm/error.hpp"
#include "tcm/grid.hpp"
#include "tcm/scheme.hpp"
#include "tcm/stepper.hpp"
#include "tcm/verify.hpp"

namespace tcm {

struct Config {
  struct GridBlock {
    int nx = 0, ny = 0;
    double lx = 1.0, ly = 1.0;
    bool operator==(const GridBlock&) const = default;
  } grid;
  struct BcBlock {
    Bc u = Bc::dirichlet, v = Bc::dirichlet, theta = Bc::dirichlet;
    bool operator==(const BcBlock&) const = default;
  } bc;
  struct CoeffBlock {
    double sigma = 1.0;
    std::string mu = "constant 1", nu = "constant 1", kappa = "constant 1";
    double check_range = 10.0;  ///< coefficients are checked >= 1/sigma on [-r, r]
    bool operator==(const CoeffBlock&) const = default;
  } coeffs;
  struct InitBlock {
    std::string profile = "small_data";  ///< zero | small_data | heat_mode | random
    double amplitude = 0.1;
    std::uint64_t seed = 1;
    bool operator==(const InitBlock&) const = default;
  } init;
  struct SteppingBlock {
    std::string policy = "fixed";  ///< fixed | cfl
    double dt = 1e-3, cfl = 0.5, dt_min = 1e-8, dt_max = 1e-2;
    double end_time = 0.0;
    std::string advection = "skew";  ///< skew | convective
    bool transport = true, coupling = true, freeze_velocity = false;
    double diffusion_tol = 1e-12;
    int diffusion_max_iter = 20000;
    double projection_tol = 1e-12;
    int projection_max_iter = 200;
    bool operator==(const SteppingBlock&) const = default;
  } stepping;
  struct OutputBlock {
    std::string dir = "out";
    long record_interval = 1, snapshot_interval = 0;
    bool checkpoint = true;
    bool operator==(const OutputBlock&) const = default;
  } output;
  struct ExperimentBlock {
    std::vector<std::string> suites;  ///< operators mms energy decay uniqueness stokes all
    bool assert_decay = false;
    double delta = 1e-6;
    double k_max = 100.0;
    double linear_tol = 0.1;
    std::uint64_t seed = 20240611;
    long energy_steps = 50;
    double ledger_tol = 1e-8;
    double coupling_tol = 1e-10;
    bool operator==(const ExperimentBlock&) const = default;
  } experiment;

  bool operator==(const Config&) const = default;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class ConfigReader {
 public:
  ConfigReader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(int line, const std::string& msg) const {
    throw ConfigError(source_ + ":" + std::to_string(line) + ": " + msg);
  }

  template <class T>
  T number(int line, const std::string& key, const std::string& text) const {
    T v{};
    if constexpr (std::is_floating_point_v<T>) {
      char* end = nullptr;
      v = std::strtod(text.c_str(), &end);
      if (text.empty() || *end != '\0' || !std::isfinite(v))
        fail(line, key + ": expected a finite number, got '" + text + "'");
    } else {
      const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
      if (text.empty() || r.ec != std::errc() || r.ptr != text.data() + text.size())
        fail(line, key + ": expected an integer, got '" + text + "'");
    }
    return v;
  }

  bool boolean(int line, const std::string& key, const std::string& text) const {
    if (text == "true" || text == "yes" || text == "on" || text == "1") return true;
    if (text == "false" || text == "no" || text == "off" || text == "0") return false;
    fail(line, key + ": expected true or false, got '" + text + "'");
  }

  Bc bc(int line, const std::string& key, const std::string& text) const {
    if (text == "dirichlet") return Bc::dirichlet;
    if (text == "neumann") return Bc::neumann;
    fail(line, key + ": expected dirichlet or neumann, got '" + text + "'");
  }

  std::string choice(int line, const std::string& key, const std::string& text,
                     std::initializer_list<const char*> allowed) const {
    std::string list;
    for (const char* a : allowed) {
      if (text == a) return text;
      list += std::string(list.empty() ? "" : ", ") + a;
    }
    fail(line, key + ": '" + text + "' is not one of " + list);
  }

  std::string source_;
};

}  // namespace detail

/// Parses configuration text. `source` names the input in error messages.
inline Config parse_config_text(const std::string& text, const std::string& source = "<config>") {
  detail::ConfigReader rd(source);
  Config c;
  std::map<std::string, int> seen;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto cut = raw.find_first_of("#;");
    std::string s = detail::trim(cut == std::string::npos ? raw : raw.substr(0, cut));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') rd.fail(line, "malformed section header '" + s + "'");
      section = detail::trim(s.substr(1, s.size() - 2));
      static const char* known[] = {"grid", "bc", "coeffs", "init", "stepping", "output", "experiment"};
      if (std::find(std::begin(known), std::end(known), section) == std::end(known))
        rd.fail(line, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) rd.fail(line, "expected 'key = value', got '" + s + "'");
    if (section.empty()) rd.fail(line, "key outside of any section");
    const std::string key = detail::trim(s.substr(0, eq));
    const std::string val = detail::trim(s.substr(eq + 1));
    const std::string full = section + "." + key;
    if (auto it = seen.find(full); it != seen.end())
      rd.fail(line, "duplicate key " + full + " (first set on line " + std::to_string(it->second) + ")");
    seen[full] = line;

    auto num = [&](auto& field) { field = rd.number<std::decay_t<decltype(field)>>(line, full, val); };
    auto flag = [&](bool& field) { field = rd.boolean(line, full, val); };
    auto coeff = [&](std::string& field) {
      try {
        field = CoeffFn::parse(val).to_string();
      } catch (const Error& e) {
        rd.fail(line, full + ": " + e.what());
      }
    };
    bool known = true;
    if (section == "grid") {
      if (key == "nx") num(c.grid.nx);
      else if (key == "ny") num(c.grid.ny);
      else if (key == "lx") num(c.grid.lx);
      else if (key == "ly") num(c.grid.ly);
      else known = false;
    } else if (section == "bc") {
      if (key == "u") c.bc.u = rd.bc(line, full, val);
      else if (key == "v") c.bc.v = rd.bc(line, full, val);
      else if (key == "theta") c.bc.theta = rd.bc(line, full, val);
      else known = false;
    } else if (section == "coeffs") {
      if (key == "sigma") num(c.coeffs.sigma);
      else if (key == "mu") coeff(c.coeffs.mu);
      else if (key == "nu") coeff(c.coeffs.nu);
      else if (key == "kappa") coeff(c.coeffs.kappa);
      else if (key == "check_range") num(c.coeffs.check_range);
      else known = false;
    } else if (section == "init") {
      if (key == "profile")
        c.init.profile = rd.choice(line, full, val, {"zero", "small_data", "heat_mode", "random"});
      else if (key == "amplitude") num(c.init.amplitude);
      else if (key == "seed") num(c.init.seed);
      else known = false;
    } else if (section == "stepping") {
      if (key == "policy") c.stepping.policy = rd.choice(line, full, val, {"fixed", "cfl"});
      else if (key == "dt") num(c.stepping.dt);
      else if (key == "cfl") num(c.stepping.cfl);
      else if (key == "dt_min") num(c.stepping.dt_min);
      else if (key == "dt_max") num(c.stepping.dt_max);
      else if (key == "end_time") num(c.stepping.end_time);
      else if (key == "advection") c.stepping.advection = rd.choice(line, full, val, {"skew", "convective"});
      else if (key == "transport") flag(c.stepping.transport);
      else if (key == "coupling") flag(c.stepping.coupling);
      else if (key == "freeze_velocity") flag(c.stepping.freeze_velocity);
      else if (key == "diffusion_tol") num(c.stepping.diffusion_tol);
      else if (key == "diffusion_max_iter") num(c.stepping.diffusion_max_iter);
      else if (key == "projection_tol") num(c.stepping.projection_tol);
      else if (key == "projection_max_iter") num(c.stepping.projection_max_iter);
      else known = false;
    } else if (section == "output") {
      if (key == "dir") {
        if (val.empty()) rd.fail(line, full + ": empty directory");
        c.output.dir = val;
      } else if (key == "record_interval") num(c.output.record_interval);
      else if (key == "snapshot_interval") num(c.output.snapshot_interval);
      else if (key == "checkpoint") flag(c.output.checkpoint);
      else known = false;
    } else if (section == "experiment") {
      if (key == "suites") {
        c.experiment.suites.clear();
        std::string v = val;
        std::replace(v.begin(), v.end(), ',', ' ');
        std::istringstream ss(v);
        for (std::string w; ss >> w;)
          c.experiment.suites.push_back(rd.choice(
              line, full, w, {"operators", "mms", "energy", "decay", "uniqueness", "stokes", "all"}));
      } else if (key == "assert_decay") flag(c.experiment.assert_decay);
      else if (key == "delta") num(c.experiment.delta);
      else if (key == "k_max") num(c.experiment.k_max);
      else if (key == "linear_tol") num(c.experiment.linear_tol);
      else if (key == "seed") num(c.experiment.seed);
      else if (key == "energy_steps") num(c.experiment.energy_steps);
      else if (key == "ledger_tol") num(c.experiment.ledger_tol);
      else if (key == "coupling_tol") num(c.experiment.coupling_tol);
      else known = false;
    }
    if (!known) rd.fail(line, "unknown key '" + key + "' in [" + section + "]");
  }

  auto line_of = [&](const std::string& k) {
    const auto it = seen.find(k);
    return it == seen.end() ? 0 : it->second;
  };
  auto require = [&](const std::string& k) {
    if (!seen.count(k)) rd.fail(line, "missing required key " + k);
  };
  auto check = [&](bool ok, const std::string& k, const std::string& msg) {
    if (!ok) rd.fail(line_of(k), k + ": " + msg);
  };
  require("grid.nx");
  require("grid.ny");
  require("stepping.end_time");
  check(c.grid.nx >= 3, "grid.nx", "needs at least 3 interior nodes");
  check(c.grid.ny >= 3, "grid.ny", "needs at least 3 interior nodes");
  check(c.grid.lx > 0.0, "grid.lx", "must be positive");
  check(c.grid.ly > 0.0, "grid.ly", "must be positive");
  check(c.bc.u == Bc::dirichlet, "bc.u", "the barotropic velocity only supports dirichlet");
  check(c.coeffs.sigma > 0.0, "coeffs.sigma", "must be positive");
  check(c.coeffs.check_range >= 0.0, "coeffs.check_range", "must be non-negative");
  check(c.init.amplitude >= 0.0, "init.amplitude", "must be non-negative");
  check(c.stepping.end_time >= 0.0, "stepping.end_time", "must be non-negative");
  check(c.stepping.dt > 0.0, "stepping.dt", "must be positive");
  check(c.stepping.cfl > 0.0 && c.stepping.cfl <= 1.0, "stepping.cfl", "must lie in (0, 1]");
  check(c.stepping.dt_min > 0.0, "stepping.dt_min", "must be positive");
  check(c.stepping.dt_max >= c.stepping.dt_min, "stepping.dt_max", "must be >= dt_min");
  check(c.stepping.diffusion_tol > 0.0 && c.stepping.diffusion_tol <= 1e-4,
        "stepping.diffusion_tol", "must lie in (0, 1e-4]");
  check(c.stepping.projection_tol > 0.0 && c.stepping.projection_tol <= 1e-4,
        "stepping.projection_tol", "must lie in (0, 1e-4]");
  check(c.stepping.diffusion_max_iter >= 10, "stepping.diffusion_max_iter", "must be at least 10");
  check(c.stepping.projection_max_iter >= 10, "stepping.projection_max_iter", "must be at least 10");
  check(c.output.record_interval >= 1, "output.record_interval", "must be at least 1");
  check(c.output.snapshot_interval >= 0, "output.snapshot_interval", "must be non-negative");
  check(c.experiment.delta >= 0.0, "experiment.delta", "must be non-negative");
  check(c.experiment.k_max > 0.0, "experiment.k_max", "must be positive");
  check(c.experiment.linear_tol > 0.0, "experiment.linear_tol", "must be positive");
  check(c.experiment.energy_steps >= 1, "experiment.energy_steps", "must be at least 1");
  check(c.experiment.ledger_tol > 0.0, "experiment.ledger_tol", "must be positive");
  check(c.experiment.coupling_tol > 0.0, "experiment.coupling_tol", "must be positive");
  if (c.experiment.assert_decay && (c.bc.theta == Bc::neumann || c.bc.v == Bc::neumann)) {
    const std::string k = c.bc.theta == Bc::neumann ? "bc.theta" : "bc.v";
    rd.fail(std::max(line_of(k), line_of("experiment.assert_decay")),
            "decay assertions are invalid with neumann conditions on " + k.substr(3) +
                ": the decay estimates only hold with dirichlet conditions on v and theta");
  }

  CoeffSet cs;
  cs.sigma = c.coeffs.sigma;
  cs.mu = CoeffFn::parse(c.coeffs.mu);
  cs.nu = CoeffFn::parse(c.coeffs.nu);
  cs.kappa = CoeffFn::parse(c.coeffs.kappa);
  try {
    cs.validate(c.coeffs.check_range);
  } catch (const ConfigError& e) {
    int l = line_of("coeffs.sigma");
    for (const char* k : {"coeffs.mu", "coeffs.nu", "coeffs.kappa"}) l = std::max(l, line_of(k));
    rd.fail(l, e.what());
  }
  for (const char* k : {"coeffs.sigma", "coeffs.mu", "coeffs.nu", "coeffs.kappa"})
    if (!seen.count(k))
      warn(std::string("config: ") + k + " not set, using the default " +
           (std::string(k) == "coeffs.sigma" ? detail::fmt_double(c.coeffs.sigma)
                                             : std::string("constant 1")));
  return c;
}

inline Config parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

/// Effective configuration with every key spelled out; parses back to an
/// identical Config.
inline std::string echo(const Config& c) {
  std::ostringstream o;
  auto d = [](double v) { return detail::fmt_double(v); };
  auto b = [](bool v) { return v ? "true" : "false"; };
  o << "[grid]\nnx = " << c.grid.nx << "\nny = " << c.grid.ny << "\nlx = " << d(c.grid.lx)
    << "\nly = " << d(c.grid.ly) << "\n\n";
  o << "[bc]\nu = " << to_string(c.bc.u) << "\nv = " << to_string(c.bc.v)
    << "\ntheta = " << to_string(c.bc.theta) << "\n\n";
  o << "[coeffs]\nsigma = " << d(c.coeffs.sigma) << "\nmu = " << c.coeffs.mu
    << "\nnu = " << c.coeffs.nu << "\nkappa = " << c.coeffs.kappa
    << "\ncheck_range = " << d(c.coeffs.check_range) << "\n\n";
  o << "[init]\nprofile = " << c.init.profile << "\namplitude = " << d(c.init.amplitude)
    << "\nseed = " << c.init.seed << "\n\n";
  const auto& s = c.stepping;
  o << "[stepping]\npolicy = " << s.policy << "\ndt = " << d(s.dt) << "\ncfl = " << d(s.cfl)
    << "\ndt_min = " << d(s.dt_min) << "\ndt_max = " << d(s.dt_max)
    << "\nend_time = " << d(s.end_time) << "\nadvection = " << s.advection
    << "\ntransport = " << b(s.transport) << "\ncoupling = " << b(s.coupling)
    << "\nfreeze_velocity = " << b(s.freeze_velocity)
    << "\ndiffusion_tol = " << d(s.diffusion_tol)
    << "\ndiffusion_max_iter = " << s.diffusion_max_iter
    << "\nprojection_tol = " << d(s.projection_tol)
    << "\nprojection_max_iter = " << s.projection_max_iter << "\n\n";
  o << "[output]\ndir = " << c.output.dir << "\nrecord_interval = " << c.output.record_interval
    << "\nsnapshot_interval = " << c.output.snapshot_interval
    << "\ncheckpoint = " << b(c.output.checkpoint) << "\n\n";
  const auto& e = c.experiment;
  o << "[experiment]\n";
  if (!e.suites.empty()) {
    o << "suites =";
    for (const auto& w : e.suites) o << ' ' << w;
    o << '\n';
  }
  o << "assert_decay = " << b(e.assert_decay) << "\ndelta = " << d(e.delta)
    << "\nk_max = " << d(e.k_max) << "\nlinear_tol = " << d(e.linear_tol)
    << "\nseed = " << e.seed << "\nenergy_steps = " << e.energy_steps
    << "\nledger_tol = " << d(e.ledger_tol) << "\ncoupling_tol = " << d(e.coupling_tol) << '\n';
  return o.str();
}

inline Grid make_grid(const Config& c) {
  return Grid(c.grid.nx, c.grid.ny, c.grid.lx, c.grid.ly, BcSet{c.bc.u, c.bc.v, c.bc.theta});
}

inline CoeffSet make_coeffs(const Config& c) {
  CoeffSet cs;
  cs.sigma = c.coeffs.sigma;
  cs.mu = CoeffFn::parse(c.coeffs.mu);
  cs.nu = CoeffFn::parse(c.coeffs.nu);
  cs.kappa = CoeffFn::parse(c.coeffs.kappa);
  return cs;
}

inline StepConfig make_step_config(const Config& c) {
  StepConfig sc;
  const auto& s = c.stepping;
  sc.policy = s.policy == "cfl" ? DtPolicy::cfl : DtPolicy::fixed;
  sc.dt = s.dt;
  sc.cfl_target = s.cfl;
  sc.dt_min = s.dt_min;
  sc.dt_max = s.dt_max;
  sc.end_time = s.end_time;
  sc.advection = s.advection == "convective" ? AdvectionForm::convective : AdvectionForm::skew;
  sc.transport = s.transport;
  sc.coupling = s.coupling;
  sc.freeze_velocity = s.freeze_velocity;
  sc.diffusion_solver = {s.diffusion_tol, s.diffusion_max_iter};
  sc.projection_solver = {s.projection_tol, s.projection_max_iter};
  sc.validate();
  return sc;
}

inline RunOptions make_run_options(const Config& c) {
  RunOptions o;
  o.record_interval = c.output.record_interval;
  o.snapshot_interval = c.output.snapshot_interval;
  return o;
}

inline State make_initial_state(const Config& c) {
  const Grid g = make_grid(c);
  const double amp = c.init.amplitude;
  if (c.init.profile == "small_data") return small_data_state(g, amp);
  State s(g);
  if (c.init.profile == "heat_mode") {
    const double a = std::numbers::pi / g.lx(), b = std::numbers::pi / g.ly();
    s.theta = make_field(g, g.bc().theta, [&](double x, double y) {
      return amp * std::sin(a * x) * std::sin(b * y);
    });
  } else if (c.init.profile == "random") {
    std::mt19937_64 rng(c.init.seed);
    std::uniform_real_distribution<double> d(-amp, amp);
    auto rnd = [&](Bc bc) {
      ScalarField f(g, bc);
      for (double& v : f.values()) v = d(rng);
      return f;
    };
    s.theta = rnd(g.bc().theta);
    s.v = VectorField(rnd(g.bc().v), rnd(g.bc().v));
    s.u = project_div_free(VectorField(rnd(Bc::dirichlet), rnd(Bc::dirichlet)), SolverSpec{},
                           nullptr)
              .u;
  }
  return s;
}

/// Built-in configurations, also shipped under configs/.
inline std::string config_fixture(const std::string& name) {
  if (name == "default")
    return "[grid]\nnx = 32\nny = 32\n\n[coeffs]\nsigma = 1\nmu = constant 1\nnu = constant 1\n"
           "kappa = constant 1\n\n[init]\nprofile = small_data\namplitude = 0.1\n\n"
           "[stepping]\ndt = 1e-3\nend_time = 0.1\n\n[output]\ndir = default\n\n"
           "[experiment]\nsuites = all\nassert_decay = true\nenergy_steps = 50\n";
  if (name == "dissipation")
    return "[grid]\nnx = 64\nny = 64\n\n[coeffs]\nsigma = 1\nmu = constant 1\nnu = constant 1\n"
           "kappa = constant 1\n\n[init]\nprofile = small_data\namplitude = 0.1\n\n"
           "[stepping]\ndt = 2.5e-4\nend_time = 0.5\n\n[output]\ndir = dissipation\n\n"
           "[experiment]\nsuites = decay uniqueness\nassert_decay = true\ndelta = 1e-6\n";
  if (name == "variable")
    return "[grid]\nnx = 64\nny = 64\n\n[coeffs]\nsigma = 1\nmu = constant 1\nnu = constant 1\n"
           "kappa = quadratic 1 1\n\n[init]\nprofile = small_data\namplitude = 0.1\n\n"
           "[stepping]\ndt = 2.5e-4\nend_time = 0.5\n\n[output]\ndir = variable\n"
           "snapshot_interval = 10\n\n[experiment]\nsuites = energy\n";
  if (name == "heat_mode")
    return "[grid]\nnx = 127\nny = 127\n\n[coeffs]\nsigma = 1\nmu = constant 1\nnu = constant 1\n"
           "kappa = constant 1\n\n[init]\nprofile = heat_mode\namplitude = 1\n\n"
           "[stepping]\ndt = 1e-4\nend_time = 0.05\ntransport = false\ncoupling = false\n"
           "freeze_velocity = true\n\n[output]\ndir = heat_mode\n\n"
           "[experiment]\nsuites = decay\nassert_decay = false\n";
  throw ConfigError("unknown built-in configuration '" + name + "'");
}

inline std::vector<std::string> config_fixture_names() {
  return {"default", "dissipation", "variable", "heat_mode"};
}

}  // namespace tcm
