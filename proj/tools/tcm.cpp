#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tcm/config.hpp"
#include "tcm/diagnostics.hpp"
#include "tcm/io.hpp"
#include "tcm/stepper.hpp"
#include "tcm/verify.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace tcm;

namespace {

constexpr int kOk = 0;
constexpr int kFail = 1;
constexpr int kUsage = 2;

fs::path output_root() {
  const char* env = std::getenv("TCM_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::current_path();
}

void emit(const json& j) { std::cout << j.dump() << std::endl; }

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

Config load_config(const std::string& path) {
  if (path.empty()) return parse_config_text(config_fixture("default"), "<built-in default>");
  if (path.rfind("builtin:", 0) == 0) {
    const auto name = path.substr(8);
    return parse_config_text(config_fixture(name), "<built-in " + name + ">");
  }
  return parse_config(path);
}

json record_json(const EnergyRecord& r) {
  return {{"step", r.step}, {"t", num(r.t)}, {"E", num(r.energy)},
          {"ledger_residual", num(r.ledger_residual)}, {"theta_Linf", num(r.sup_theta)}};
}

void write_outputs(const fs::path& dir, const Config& cfg, const RunResult& r) {
  write_ledger_csv(dir / "ledger.csv", r.records);
  write_snapshot_set(dir / "snapshots", r.snapshots);
  if (cfg.output.checkpoint) write_checkpoint(dir / "checkpoint.bin", r.final, echo(cfg));
}

int cmd_run(const std::string& config_path, const std::string& restart) {
  const Config cfg = load_config(config_path);
  const fs::path dir = output_root() / cfg.output.dir;
  fs::create_directories(dir);
  std::ofstream(dir / "config.cfg") << echo(cfg);
  State init = make_initial_state(cfg);
  if (!restart.empty()) {
    auto ck = read_checkpoint(restart);
    const Grid& a = ck.state.grid();
    const Grid b = make_grid(cfg);
    if (a.nx() != b.nx() || a.ny() != b.ny() || a.lx() != b.lx() || a.ly() != b.ly() ||
        !(a.bc() == b.bc()))
      throw ConfigError("checkpoint " + restart + " does not match the configured grid");
    init = std::move(ck.state);
  }
  const CoeffSet coeffs = make_coeffs(cfg);
  const StepConfig sc = make_step_config(cfg);
  try {
    const auto r = run(init, coeffs, sc, make_run_options(cfg),
                       [&](const RunResult& partial) { write_outputs(dir, cfg, partial); });
    write_outputs(dir, cfg, r);
    json j{{"command", "run"},
           {"status", "ok"},
           {"output", dir.string()},
           {"steps", r.steps},
           {"t", num(r.final.t)},
           {"records", r.records.size()},
           {"max_energy_increase", num(r.max_energy_increase)},
           {"max_ledger_residual", num(r.max_ledger_residual)},
           {"max_coupling_residual", num(r.max_coupling_residual)},
           {"final", record_json(r.records.back())}};
    std::ofstream(dir / "summary.json") << j.dump(2) << '\n';
    emit(j);
    return kOk;
  } catch (const std::exception& e) {
    emit({{"command", "run"}, {"status", "failed"}, {"output", dir.string()}, {"error", e.what()}});
    return kFail;
  }
}

json suite_operators(const Config& cfg) {
  const auto r = operator_algebra_suite(std::max(cfg.grid.nx, 8), 100,
                                        cfg.stepping.advection == "convective"
                                            ? AdvectionForm::convective
                                            : AdvectionForm::skew);
  return {{"suite", "operators"}, {"passed", r.passed}, {"pairs", r.pairs},
          {"duality", num(r.duality)}, {"skew", num(r.skew)}, {"skew_self", num(r.skew_self)},
          {"tensor_pair", num(r.tensor_pair)}, {"gradient_pair", num(r.gradient_pair)},
          {"tol", r.tol}, {"seconds", r.seconds}};
}

json order_json(const OrderTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"n", r.n}, {"h", r.h}, {"dt", r.dt}, {"steps", r.steps}, {"err_u", num(r.u)},
                    {"err_v", num(r.v)}, {"err_theta", num(r.theta)}});
  json orders = json::array();
  for (const auto& o : t.orders) orders.push_back({num(o[0]), num(o[1]), num(o[2])});
  return {{"kind", t.kind}, {"rows", rows}, {"orders", orders}, {"floor", t.floor}};
}

json suite_mms(const Config& cfg) {
  StepConfig base = make_step_config(cfg);
  base.forcing = {};
  const auto fixture = mms_convergence(mms_fixture(), {15, 31, 63}, 0.05, 5, base);
  const auto space = mms_convergence(mms_default(), {31, 63, 127}, 0.02, 8, base);
  const auto time = mms_temporal(mms_default(), 127, 0.5, {10, 20, 40}, base);
  const bool ok = fixture.floor && space.min_order() >= 1.9 && time.min_order() >= 0.9;
  return {{"suite", "mms"}, {"passed", ok}, {"fixture", order_json(fixture)},
          {"space", order_json(space)}, {"time", order_json(time)},
          {"min_space_order", num(space.min_order())}, {"min_time_order", num(time.min_order())}};
}

json suite_energy(const Config& cfg) {
  const auto r = energy_identity_suite(make_initial_state(cfg), make_coeffs(cfg),
                                       make_step_config(cfg), cfg.experiment.energy_steps,
                                       cfg.experiment.ledger_tol, cfg.experiment.coupling_tol);
  return {{"suite", "energy"}, {"passed", r.passed}, {"steps", r.steps},
          {"max_ledger_residual", num(r.max_ledger)}, {"max_coupling_residual", num(r.max_coupling)},
          {"min_dissipation_margin", num(r.min_dissipation_margin)},
          {"first_failure", r.first_failure}, {"message", r.message}};
}

json decay_json(const DecayReport& r) {
  return {{"rate", num(r.rate)}, {"r2", num(r.r2)}, {"t_begin", num(r.t_begin)},
          {"t_end", num(r.t_end)}, {"samples", r.samples}, {"alpha_pred", num(r.alpha_pred)},
          {"ratio", num(r.ratio)}, {"convention", r.convention}};
}

json suite_decay(const Config& cfg) {
  DecayOptions opt;
  opt.assert_decay = cfg.experiment.assert_decay;
  opt.run = make_run_options(cfg);
  const auto d = decay_experiment(make_initial_state(cfg), make_coeffs(cfg), make_step_config(cfg), opt);
  return {{"suite", "decay"}, {"passed", d.passed}, {"asserted", d.asserted},
          {"c_star", num(d.c_star)}, {"alpha", num(d.alpha)}, {"monotone", d.monotone_ok},
          {"max_energy_increase", num(d.run.max_energy_increase)}, {"bound", d.bound_ok},
          {"worst_ratio", num(d.worst_ratio)}, {"first_violation_t", num(d.first_violation_t)},
          {"energy", decay_json(d.energy)}, {"h1", decay_json(d.h1)}, {"h2", decay_json(d.h2)},
          {"message", d.message}};
}

json suite_uniqueness(const Config& cfg) {
  UniquenessOptions opt;
  opt.deltas = {cfg.experiment.delta, 0.5 * cfg.experiment.delta, 0.0};
  opt.k_max = cfg.experiment.k_max;
  opt.linear_tol = cfg.experiment.linear_tol;
  opt.seed = cfg.experiment.seed;
  const auto r = uniqueness_experiment(make_initial_state(cfg), make_coeffs(cfg),
                                       make_step_config(cfg), opt);
  json runs = json::array();
  for (const auto& p : r.runs)
    runs.push_back({{"delta", p.delta}, {"sup_diff_sq", num(p.sup_diff_sq)}, {"k_factor", num(p.k_factor)},
                    {"tail_decays", p.tail_decays}, {"bitwise_identical", p.bitwise_identical}});
  return {{"suite", "uniqueness"}, {"passed", r.passed}, {"steps", r.steps}, {"runs", runs},
          {"scaling", r.scaling}, {"message", r.message}, {"seconds", r.seconds}};
}

json stokes_json(const StokesCheck& s) {
  return {{"n", s.n}, {"passed", s.passed},
          {"outer_iterations", s.result.outer_iterations},
          {"momentum_residual", num(s.result.momentum_residual)},
          {"div_residual", num(s.result.div_residual)}, {"u_error", num(s.u_error)},
          {"p_error", num(s.p_error)}, {"energy_identity", num(s.energy_identity)},
          {"pressure_mean", num(s.pressure_mean)}, {"energy_ratio", num(s.result.energy_ratio)},
          {"h2_ratio", num(s.result.h2_ratio)}, {"h3_ratio", num(s.result.h3_ratio)},
          {"seconds", s.seconds}};
}

json suite_stokes(const Config&) {
  auto j = stokes_json(stokes_check(64));
  j["suite"] = "stokes";
  return j;
}

int cmd_verify(const std::string& suite, const std::string& config_path) {
  const Config cfg = load_config(config_path);
  std::vector<std::string> names;
  if (suite == "all")
    names = {"operators", "mms", "energy", "decay", "uniqueness", "stokes"};
  else
    names = {suite};
  bool ok = true;
  for (const auto& n : names) {
    json j;
    try {
      if (n == "operators") j = suite_operators(cfg);
      else if (n == "mms") j = suite_mms(cfg);
      else if (n == "energy") j = suite_energy(cfg);
      else if (n == "decay") j = suite_decay(cfg);
      else if (n == "uniqueness") j = suite_uniqueness(cfg);
      else if (n == "stokes") j = suite_stokes(cfg);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      j = {{"suite", n}, {"passed", false}, {"error", e.what()}};
    }
    ok = ok && j.value("passed", false);
    emit(j);
  }
  return ok ? kOk : kFail;
}

int cmd_decay(const std::string& ledger, const std::string& config_path, bool assert_bound,
              std::optional<double> t_begin, std::optional<double> t_end) {
  const Config cfg = load_config(config_path);
  const auto recs = read_ledger_csv(ledger);
  if (recs.empty()) throw ConfigError(ledger + ": empty ledger");
  const Grid g = make_grid(cfg);
  const double c_star = poincare_constant(g);
  const double alpha = 1.0 / (c_star * cfg.coeffs.sigma);
  std::vector<double> t, e, h1, h2;
  for (const auto& r : recs) {
    t.push_back(r.t);
    e.push_back(r.energy);
    h1.push_back(r.u_h1 * r.u_h1 + r.v_h1 * r.v_h1 + r.theta_h1 * r.theta_h1);
    h2.push_back(r.u_h2 * r.u_h2 + r.v_h2 * r.v_h2 + r.theta_h2 * r.theta_h2);
  }
  std::optional<FitWindow> w;
  if (t_begin || t_end) {
    FitWindow fw;
    if (t_begin) fw.t_begin = *t_begin;
    if (t_end) fw.t_end = *t_end;
    w = fw;
  }
  const auto fe = fit_decay_rate(t, e, w, true, alpha);
  const auto f1 = fit_decay_rate(t, h1, w, true, alpha);
  const auto f2 = fit_decay_rate(t, h2, w, true, alpha);
  bool bound = true;
  double first = std::numeric_limits<double>::quiet_NaN(), worst = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double b = e.front() * std::exp(-2.0 * alpha * (t[k] - t.front()));
    if (b > 0.0) worst = std::max(worst, e[k] / b);
    if (e[k] > b * (1.0 + 1e-10) && bound) {
      bound = false;
      first = t[k];
    }
  }
  const bool neumann = g.bc().v == Bc::neumann || g.bc().theta == Bc::neumann;
  const bool asserted = assert_bound && !neumann;
  const bool ok = !asserted || bound;
  emit({{"command", "decay"}, {"passed", ok}, {"asserted", asserted}, {"c_star", c_star},
        {"alpha", alpha}, {"bound", bound}, {"worst_ratio", num(worst)},
        {"first_violation_t", num(first)}, {"energy", decay_json(fe)}, {"h1", decay_json(f1)},
        {"h2", decay_json(f2)}});
  return ok ? kOk : kFail;
}

int cmd_degiorgi(const std::string& snapshots, const std::string& config_path, int k_max,
                 double safety) {
  const Config cfg = load_config(config_path);
  const auto traj = read_snapshot_set(snapshots, make_grid(cfg));
  if (traj.empty()) throw ConfigError(snapshots + ": no snapshots found");
  const auto r = degiorgi_analysis(traj, cfg.coeffs.sigma, k_max, safety);
  const bool ok = r.bounded && r.monotone && r.a.back() < 1e-8;
  emit({{"command", "degiorgi"}, {"passed", ok}, {"snapshots", traj.size()}, {"M", num(r.m)},
        {"sup_theta", num(r.sup_theta)}, {"bounded", r.bounded}, {"monotone", r.monotone},
        {"phi", num(r.phi)}, {"phi_hat", num(r.phi_hat)}, {"c1", num(r.c1)}, {"c2", num(r.c2)},
        {"levels", r.levels}, {"A", r.a}});
  return ok ? kOk : kFail;
}

int cmd_stokes(int n, double tol) {
  auto j = stokes_json(stokes_check(n, SolverSpec{1e-11, 5000}, tol));
  j["command"] = "stokes";
  emit(j);
  return j["passed"].get<bool>() ? kOk : kFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temperature-dependent tropical climate model simulator"};
  app.require_subcommand(1);

  std::string config, restart, suite = "all", ledger, snapshots;
  bool assert_bound = false;
  std::optional<double> t_begin, t_end;
  int k_max = 20, n = 64;
  double safety = 2.0, tol = 1e-8;

  auto* run_cmd = app.add_subcommand("run", "integrate a configuration");
  run_cmd->add_option("--config", config, "configuration file (or builtin:<name>)")->required();
  run_cmd->add_option("--restart", restart, "checkpoint to resume from");

  auto* verify_cmd = app.add_subcommand("verify", "run verification suites");
  verify_cmd->add_option("--suite", suite, "suite to run")
      ->check(CLI::IsMember({"operators", "mms", "energy", "decay", "uniqueness", "stokes", "all"}));
  verify_cmd->add_option("--config", config, "configuration file (default: built-in fixture)");

  auto* decay_cmd = app.add_subcommand("decay", "fit decay rates of a stored ledger");
  decay_cmd->add_option("--ledger", ledger, "ledger CSV")->required();
  decay_cmd->add_option("--config", config, "configuration the ledger came from")->required();
  decay_cmd->add_flag("--assert", assert_bound, "fail if E(t) exceeds E(0) exp(-2 alpha t)");
  decay_cmd->add_option("--t-begin", t_begin, "fit window start");
  decay_cmd->add_option("--t-end", t_end, "fit window end");

  auto* dg_cmd = app.add_subcommand("degiorgi", "level-set analysis of stored snapshots");
  dg_cmd->add_option("--snapshots", snapshots, "snapshot directory")->required();
  dg_cmd->add_option("--config", config, "configuration the snapshots came from")->required();
  dg_cmd->add_option("--k-max", k_max, "number of levels")->check(CLI::NonNegativeNumber);
  dg_cmd->add_option("--safety", safety, "calibration safety factor")->check(CLI::PositiveNumber);

  auto* stokes_cmd = app.add_subcommand("stokes", "manufactured variable-viscosity Stokes check");
  stokes_cmd->add_option("--n", n, "interior nodes per direction")->check(CLI::Range(8, 512));
  stokes_cmd->add_option("--tol", tol, "pass threshold")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*run_cmd) return cmd_run(config, restart);
    if (*verify_cmd) return cmd_verify(suite, config);
    if (*decay_cmd) return cmd_decay(ledger, config, assert_bound, t_begin, t_end);
    if (*dg_cmd) return cmd_degiorgi(snapshots, config, k_max, safety);
    if (*stokes_cmd) return cmd_stokes(n, tol);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFail;
  }
  return kUsage;
}
