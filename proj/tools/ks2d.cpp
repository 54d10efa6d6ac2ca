// ks2d: command-line driver for the controlled 2D Kuramoto-Sivashinsky
// experiments. Every subcommand reads an optional INI-style config file,
// applies --set overrides, and writes its outputs plus the verbatim config
// into --out.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ks2d/experiments.hpp"
#include "ks2d/proportional.hpp"
#include "ks2d/random.hpp"
#include "run_config.hpp"

#ifndef KS2D_VERSION
#define KS2D_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace ks2d;
using ks2d::cli::RunConfig;

namespace {

enum Exit { ok = 0, failure = 1, config_error = 2, diverged = 3 };

struct Common {
  std::optional<fs::path> config;
  std::vector<std::string> overrides;
  fs::path out = "out";
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "INI-style config file")->check(CLI::ExistingFile);
  app->add_option("-s,--set", c.overrides, "override, section.key=value (repeatable)");
  app->add_option("-o,--out", c.out, "output directory")->capture_default_str();
}

RunConfig prepare(const Common& c) {
  RunConfig cfg = RunConfig::load(c.config, c.overrides);
  cli::echo_provenance(c.out, cfg, KS2D_VERSION);
  return cfg;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

int cmd_simulate(const Common& common) {
  const RunConfig cfg = prepare(common);
  const SimulationConfig sim = cli::simulation_from(cfg);
  const double every = cfg.get_double("output.snapshot_every", 0.0);
  SampleHook hook;
  if (every > 0.0) {
    fs::create_directories(common.out / "snapshots");
    hook = [&](double t, const SpectralField& eta, const SpectralField&) {
      const double r = t / every;
      if (std::abs(r - std::round(r)) > 1e-9 * std::max(1.0, r)) return;
      char name[64];
      std::snprintf(name, sizeof name, "t%010.4f.ks2d", t);
      write_snapshot(common.out / "snapshots" / name, eta);
    };
  }
  const SimulationResult r = run_simulation(sim, hook);
  write_costs(common.out / "costs.csv", r.costs);
  if (sim.projection_window) write_projection(common.out / "projection.csv", r.projection);
  if (cfg.get_bool("output.final_snapshot", true)) write_snapshot(common.out / "final.ks2d", r.final_state);

  std::ostringstream s;
  s << "status " << (r.status == RunStatus::completed ? "completed" : "diverged") << "\n";
  s << "end_time " << num(r.end_time) << "\n";
  if (!r.costs.empty()) s << "final_C1 " << num(r.costs.back().C1) << "\n";
  for (double t : cfg.get_list("output.report", {})) {
    for (const auto& c : r.costs) {
      if (std::abs(c.t - t) < 1e-9 * std::max(1.0, t)) s << "C1(" << num(t) << ") " << num(c.C1) << "\n";
    }
  }
  if (sim.control.kind != ControlKind::none && r.status == RunStatus::completed) {
    const RegimeLabel label = classify_regime(r, sim.control.onset);
    s << "regime " << to_string(label.regime) << " lambda " << num(label.lambda) << " r2 " << num(label.r2) << "\n";
  }
  write_file_atomic(common.out / "summary.txt", s.str());
  std::cout << s.str();
  return r.status == RunStatus::completed ? ok : diverged;
}

int cmd_sweep(const Common& common) {
  const RunConfig cfg = prepare(common);
  SimulationConfig base = cli::simulation_from(cfg);
  base.control.kind = ControlKind::proportional;
  const ActuatorSet grid = cli::actuators_from(cfg, base.domain);
  write_actuators(common.out / "actuators.csv", grid);
  const std::vector<double> alphas = cfg.get_list("sweep.alphas", {0, 1.5, 5, 15, 55, 150});
  std::vector<std::size_t> nctrls;
  for (double v : cfg.get_list("sweep.nctrls", {0, 20, 50, 100, 110})) {
    if (v < 0 || v != std::floor(v)) throw ConfigError("sweep.nctrls must hold nonnegative integers");
    nctrls.push_back(static_cast<std::size_t>(v));
  }
  SweepOptions opt;
  opt.out_dir = common.out;
  opt.workers = static_cast<unsigned>(std::max(1L, cfg.get_int("run.workers", 1)));
  opt.thresholds.lambda_min = cfg.get_double("sweep.lambda_min", opt.thresholds.lambda_min);
  opt.thresholds.r2_min = cfg.get_double("sweep.r2_min", opt.thresholds.r2_min);
  opt.thresholds.transient = cfg.get_double("sweep.transient", opt.thresholds.transient);
  {
    // Delta forcing is explicit: keep alpha dt / (dx dy) below the cap, on a
    // step that divides the cost stride.
    const double cap = cfg.get_double("sweep.dt_cap", 0.25);
    const double dt0 = base.integrator.dt;
    const double cell = base.domain.dx() * base.domain.dy();
    const double stride = base.stride;
    opt.dt_rule = [=](double alpha, std::size_t nctrl) {
      double dt = dt0;
      if (alpha > 0.0 && nctrl > 0) dt = std::min(dt0, cap * cell / alpha);
      const double k = std::ceil(stride / dt - 1e-9);
      return stride / k;
    };
  }
  const auto cells = sweep_alpha_nctrl(base, grid, alphas, nctrls, opt);
  std::size_t failed = 0;
  for (const auto& c : cells) {
    if (!c.error.empty()) ++failed;
  }
  std::cout << "cells " << cells.size() << " failed " << failed << "\n";
  std::cout << "map " << (common.out / "regimes.csv").string() << "\n";
  return ok;
}

std::string spacing_text(const SpacingReport& r) {
  std::ostringstream s;
  s << "A1 " << num(r.A1) << "\nA2 " << num(r.A2) << "\nA3 " << num(r.A3) << "\n";
  s << "A1E " << num(r.A1E) << "\nA2E " << num(r.A2E) << "\nA3E " << num(r.A3E) << "\n";
  return s.str();
}

int cmd_grids(const Common& common) {
  const RunConfig cfg = prepare(common);
  if (!cfg.get_bool("grids.study", false)) {
    const DomainSpec domain = cli::domain_from(cfg);
    const ActuatorSet set = cli::actuators_from(cfg, domain);
    write_actuators(common.out / "actuators.csv", set);
    std::string text = "n " + std::to_string(set.size()) + "\n";
    if (set.size() >= 2) text += spacing_text(spacing_areas(set));
    write_file_atomic(common.out / "spacing.txt", text);
    std::cout << text;
    return ok;
  }

  GridStudyConfig sc;
  sc.kappa = cfg.get_double("physics.kappa", sc.kappa);
  sc.alpha = cfg.get_double("control.alpha", sc.alpha);
  sc.onset = cfg.get_double("control.onset", sc.onset);
  sc.control_time = cfg.get_double("grids.control_time", sc.control_time);
  sc.warmup_dt = cfg.get_double("integrator.warmup_dt", sc.warmup_dt);
  sc.dt = cfg.get_double("integrator.dt", sc.dt);
  sc.modes_per_length = cfg.get_double("grids.modes_per_length", sc.modes_per_length);
  sc.halton_start = cfg.get_u64("actuators.halton_start", sc.halton_start);
  sc.ic_seed = derive_seed(cli::master_seed(cfg), "ic");
  sc.workers = static_cast<unsigned>(std::max(1L, cfg.get_int("run.workers", 1)));
  const double sigma = cfg.get_double("actuators.sigma", 0.5);
  const long seeds = cfg.get_int("grids.seeds", 5);

  std::vector<GridStudyCase> cases;
  for (double L : cfg.get_list("grids.Ls", {21, 24, 27, 30, 33, 36, 39, 42, 45})) {
    const auto n = static_cast<std::size_t>(std::lround(L * L / 9.0));
    for (const auto& family : cfg.get_words("grids.families", {"equidistant", "perturbed", "halton", "random"})) {
      const bool seeded = family == "perturbed" || family == "random";
      for (long k = 0; k < (seeded ? seeds : 1); ++k) {
        const std::string purpose = (family == "random" ? "grid/" : "perturb/") + num(L) + "/" + std::to_string(k);
        cases.push_back({family, L, n, seeded ? derive_seed(cli::master_seed(cfg), purpose) : 0, sigma});
      }
    }
  }
  const auto records = grid_comparison_study(cases, sc);
  write_grid_records(common.out / "scatter.csv", records);

  const auto fit_Ls = cfg.get_list("grids.fit_Ls", {39, 42, 45});
  std::vector<double> A2, A3, lambda;
  for (const auto& r : records) {
    if (!r.error.empty()) continue;
    if (std::find(fit_Ls.begin(), fit_Ls.end(), r.L) == fit_Ls.end()) continue;
    A2.push_back(r.A2);
    A3.push_back(r.A3);
    lambda.push_back(r.lambda);
  }
  std::ostringstream s;
  s << "records " << records.size() << "\n";
  for (const auto& [name, A] : {std::pair{"A2", &A2}, std::pair{"A3", &A3}}) {
    try {
      const ThresholdFit f = fit_threshold_model(*A, lambda);
      s << name << " a " << num(f.a) << " Ac " << num(f.Ac) << " residual " << num(f.residual) << "\n";
    } catch (const ConfigError& e) {
      s << name << " no fit: " << e.what() << "\n";
    }
  }
  write_file_atomic(common.out / "threshold.txt", s.str());
  std::cout << s.str();
  return ok;
}

int cmd_waves(const Common& common) {
  const RunConfig cfg = prepare(common);
  WaveProblem wp;
  wp.kappa = cfg.get_double("physics.kappa", -0.5);
  wp.L1 = cfg.get_double("domain.L1", 18.0);
  wp.modes = static_cast<int>(cfg.get_int("waves.modes", wp.modes));
  wp.tolerance = cfg.get_double("waves.tolerance", wp.tolerance);
  const std::string kind = cfg.get_string("waves.kind", "steady");
  if (kind != "steady" && kind != "travelling") {
    throw ConfigError("config field 'waves.kind': expected steady or travelling, got '" + kind + "'");
  }
  const auto waves = search_waves(wp, kind == "travelling");
  std::ostringstream s;
  if (waves.empty()) s << "only the trivial branch was found\n";
  for (std::size_t i = 0; i < waves.size(); ++i) {
    const std::string name = "wave_" + std::to_string(i) + ".csv";
    write_profile(common.out / name, waves[i]);
    s << name << " c " << num(waves[i].speed) << " inf_x " << num(waves[i].inf_derivative()) << " residual "
      << num(wave_residual_norm(waves[i])) << "\n";
  }
  write_file_atomic(common.out / "summary.txt", s.str());
  std::cout << s.str();
  return ok;
}

int cmd_gain(const Common& common) {
  const RunConfig cfg = prepare(common);
  const DomainSpec domain = cli::domain_from(cfg);
  const PhysicsParams physics = cli::physics_from(cfg);
  const ActuatorSet acts = cli::actuators_from(cfg, domain);
  const TargetState target = cli::target_from(cfg, domain);
  if (target.kind == TargetState::Kind::orbit) throw ConfigError("gain synthesis needs a zero, steady or travelling target");
  SynthesisOptions opt;
  opt.jitter = cfg.get_bool("gain.jitter", false);
  opt.seed = cfg.has("gain.seed") ? cfg.get_u64("gain.seed", 0) : derive_seed(cli::master_seed(cfg), "jitter");
  opt.max_gain = cfg.get_double("gain.max_gain", opt.max_gain);
  const GainMethod method = parse_gain_method(cfg.get_string("gain.method", "gomes"));
  const int n = static_cast<int>(cfg.get_int("gain.n", 19));
  const double threshold = cfg.get_double("gain.threshold", -0.1);
  const GainMatrix g = synthesize_gain(method, target.field, n, threshold, acts, physics, opt);
  write_gain(common.out / "gain.bin", g);
  write_actuators(common.out / "actuators.csv", acts);
  double top = -INFINITY;
  for (const auto& z : g.achieved_spectrum) top = std::max(top, z.real());
  std::ostringstream s;
  s << "method " << to_string(g.method) << "\nn " << g.n << "\nnctrl " << g.nctrl() << "\n";
  s << "threshold " << num(threshold) << "\nmoved " << g.moved << "\nmax_entry " << num(g.max_entry) << "\n";
  s << "max_real_eigenvalue " << num(top) << "\nmax_relative_error " << num(g.max_relative_error) << "\n";
  s << "inf_target_x " << num(g.inf_target_x) << "\n";
  write_file_atomic(common.out / "report.txt", s.str());
  std::cout << s.str();
  return ok;
}

int cmd_sync(const Common& common) {
  const RunConfig cfg = prepare(common);
  SyncConfig sc;
  sc.kappa = cfg.get_double("sync.kappa", sc.kappa);
  sc.L = cfg.get_double("sync.L", sc.L);
  sc.M = static_cast<int>(cfg.get_int("sync.M", sc.M));
  sc.d = cfg.get_double("sync.d", sc.d);
  sc.alpha = cfg.get_double("sync.alpha", sc.alpha);
  sc.onset = cfg.get_double("sync.onset", sc.onset);
  sc.horizon = cfg.get_double("sync.horizon", sc.horizon);
  sc.dt = cfg.get_double("sync.dt", sc.dt);
  sc.stride = cfg.get_double("sync.stride", sc.stride);
  sc.projection_window = {cfg.get_double("sync.window_from", sc.projection_window.first),
                          cfg.get_double("sync.window_to", sc.projection_window.second)};
  const SimulationResult r = synchronization_experiment(sc);
  write_costs(common.out / "costs.csv", r.costs);
  write_projection(common.out / "projection.csv", r.projection);
  std::ostringstream s;
  s << "status " << (r.status == RunStatus::completed ? "completed" : "diverged") << "\n";
  if (r.status == RunStatus::completed) {
    const double t0 = std::min(sc.onset + 10.0, sc.horizon);
    try {
      const DecayFit f = fit_decay_rate(r.costs, t0, sc.horizon);
      s << "lambda " << num(f.lambda) << " r2 " << num(f.r2) << " window " << num(t0) << " " << num(sc.horizon) << "\n";
    } catch (const ConfigError& e) {
      s << "no fit: " << e.what() << "\n";
    }
  }
  write_file_atomic(common.out / "summary.txt", s.str());
  std::cout << s.str();
  return r.status == RunStatus::completed ? ok : diverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Controlled 2D Kuramoto-Sivashinsky experiments"};
  app.set_version_flag("--version", std::string("ks2d ") + KS2D_VERSION);
  app.require_subcommand(1);

  Common common;
  struct Entry {
    const char* name;
    const char* help;
    int (*run)(const Common&);
  };
  const Entry entries[] = {
      {"simulate", "run one simulation and record its costs", cmd_simulate},
      {"sweep", "regime map over control gains and actuator counts", cmd_sweep},
      {"grids", "generate an actuator grid with spacing metrics, or run the grid study", cmd_grids},
      {"waves", "compute steady or travelling 1D waves", cmd_waves},
      {"gain", "synthesize a feedback gain matrix", cmd_gain},
      {"sync", "synchronize onto a chaotic orbit", cmd_sync},
  };
  std::vector<std::pair<CLI::App*, int (*)(const Common&)>> subs;
  for (const auto& e : entries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    add_common(sub, common);
    subs.emplace_back(sub, e.run);
  }
  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& [sub, run] : subs) {
      if (sub->parsed()) return run(common);
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return config_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return failure;
  }
  return failure;
}
