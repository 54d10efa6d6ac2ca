#include "ks2d/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "ks2d/proportional.hpp"
#include "ks2d/random.hpp"

namespace ks2d {

namespace {

long steps_for(double duration, double dt, const char* what) {
  const double ratio = duration / dt;
  const long n = std::lround(ratio);
  if (std::abs(ratio - static_cast<double>(n)) > 1e-6 * std::max(1.0, ratio)) {
    std::ostringstream os;
    os << what << " (" << duration << ") is not a multiple of the time step " << dt;
    throw ConfigError(os.str());
  }
  return n;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Sample times are multiples of the stride up to rounding noise.
std::string fmt_time(double t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", t);
  return buf;
}

// Evaluates the control law; returns false while controls are off.
class Controller {
 public:
  explicit Controller(const SimulationConfig& cfg) : cfg_(cfg), law_(cfg.control) {
    const bool needs_actuators = law_.kind == ControlKind::proportional || law_.kind == ControlKind::feedback;
    if (needs_actuators) {
      spectrum_ = ActuatorSpectrum(cfg.actuators, cfg.domain);
      phi_.resize(cfg.actuators.size());
    }
    if (law_.kind == ControlKind::feedback) {
      if (!law_.gain) throw ConfigError("feedback control needs a gain matrix");
      if (law_.gain->nctrl() != cfg.actuators.size()) {
        throw ConfigError("gain has " + std::to_string(law_.gain->nctrl()) + " rows but there are " +
                          std::to_string(cfg.actuators.size()) + " actuators");
      }
      trunc_.emplace(law_.gain->n);
    }
    if (law_.kind == ControlKind::proportional && !(law_.alpha >= 0.0)) {
      throw ConfigError("proportional gain must be nonnegative");
    }
  }

  bool active(double t, double dt) const { return law_.kind != ControlKind::none && t >= law_.onset - 1e-9 * dt; }

  // zeta must be zero on entry. Returns C2.
  double evaluate(double t, double dt, const SpectralField& w, SpectralField& zeta) {
    if (!active(t, dt)) return 0.0;
    switch (law_.kind) {
      case ControlKind::proportional:
        spectrum_.observe(w, phi_);
        for (double& v : phi_) v *= -law_.alpha;
        spectrum_.assemble(phi_, zeta);
        break;
      case ControlKind::feedback:
        apply_gain(*law_.gain, *trunc_, w, phi_);
        spectrum_.assemble(phi_, zeta);
        break;
      case ControlKind::full_field: {
        zeta = w;
        zeta *= -law_.alpha;
        const RealGrid g = to_physical(zeta);
        double s = 0.0;
        for (double v : g.values) s += std::abs(v);
        return s / static_cast<double>(g.values.size());
      }
      case ControlKind::none:
        return 0.0;
    }
    double s = 0.0;
    for (double v : phi_) s += std::abs(v);
    return s / cfg_.domain.area();
  }

 private:
  const SimulationConfig& cfg_;
  const ControlLaw& law_;
  ActuatorSpectrum spectrum_;
  std::optional<Truncation> trunc_;
  std::vector<double> phi_;
};

}  // namespace

SimulationResult run_simulation(const SimulationConfig& cfg, const SampleHook& hook) {
  cfg.domain.validate();
  cfg.integrator.validate();
  if (!(cfg.horizon >= 0.0)) throw ConfigError("horizon must be nonnegative");
  if (!(cfg.stride > 0.0)) throw ConfigError("cost stride must be positive");
  if (!(cfg.initial.domain() == cfg.domain)) throw ShapeError("initial condition lives on a different domain");
  const bool orbit = cfg.target.kind == TargetState::Kind::orbit;
  if (orbit && !(cfg.orbit_initial.domain() == cfg.domain)) throw ShapeError("orbit target needs an initial state");
  if (!orbit && !(cfg.target.field.domain() == cfg.domain)) throw ShapeError("target lives on a different domain");

  Controller controller(cfg);
  Controller sampler(cfg);

  SimulationResult result;

  auto target_at = [&](double t, const FieldSet& u) { return orbit ? u[1] : advance_target(cfg.target, t); };

  double current_dt = cfg.integrator.dt;
  Forcing forcing = [&](double t, const FieldSet& u, FieldSet& zeta) {
    if (!controller.active(t, current_dt)) return;
    const SpectralField w = u[0] - target_at(t, u);
    controller.evaluate(t, current_dt, w, zeta[0]);
  };

  bool diverged = false;
  FieldSet latest;
  auto sample = [&](double t, const FieldSet& u) {
    const SpectralField tgt = target_at(t, u);
    const SpectralField w = u[0] - tgt;
    CostSample s;
    s.t = t;
    s.C1 = l2_norm(w);
    SpectralField zeta(cfg.domain);
    s.C2 = sampler.evaluate(t, current_dt, w, zeta);
    result.costs.push_back(s);
    if (cfg.projection_window && t >= cfg.projection_window->first - 1e-9 &&
        t <= cfg.projection_window->second + 1e-9) {
      result.projection.push_back({t, u[0].at(1, 0).real(), u[0].at(1, 1).real(), u[0].at(7, 0).real()});
    }
    if (hook) hook(t, u[0], tgt);
    if (!std::isfinite(s.C1) || s.C1 > cfg.integrator.divergence_threshold) {
      diverged = true;
      result.end_time = t;
    }
    latest = u;
  };

  FieldSet u{cfg.initial};
  if (orbit) u.push_back(cfg.orbit_initial);
  for (auto& f : u) require_real(f);
  sample(0.0, u);
  result.end_time = 0.0;

  struct Phase {
    double t0, t1, dt;
  };
  std::vector<Phase> phases;
  const double onset = cfg.control.kind == ControlKind::none ? cfg.horizon : cfg.control.onset;
  if (cfg.warmup_dt && *cfg.warmup_dt != cfg.integrator.dt && onset > 0.0) {
    const double t_switch = std::min(onset, cfg.horizon);
    phases.push_back({0.0, t_switch, *cfg.warmup_dt});
    if (cfg.horizon > t_switch) phases.push_back({t_switch, cfg.horizon, cfg.integrator.dt});
  } else if (cfg.horizon > 0.0) {
    phases.push_back({0.0, cfg.horizon, cfg.integrator.dt});
  }

  try {
    for (const auto& ph : phases) {
      if (diverged) break;
      current_dt = ph.dt;
      IntegratorConfig icfg = cfg.integrator;
      icfg.dt = ph.dt;
      KseStepper stepper(cfg.domain, cfg.physics, icfg);
      const long total = steps_for(ph.t1 - ph.t0, ph.dt, "phase length");
      const long stride_steps = steps_for(cfg.stride, ph.dt, "cost stride");
      if (total == 0) continue;
      if (ph.t0 > 0.0) steps_for(ph.t0, cfg.stride, "phase start");
      SimState state = stepper.bootstrap(u, ph.t0, forcing);
      if (state.steps > total) throw ConfigError("phase shorter than the multistep start-up");
      if (state.steps > 0 && state.steps % stride_steps == 0) sample(state.time(), state.current());
      while (state.steps < total && !diverged) {
        stepper.step(state, forcing);
        if (state.steps % stride_steps == 0) sample(state.time(), state.current());
      }
      if (diverged) break;
      u = state.current();
      result.end_time = state.time();
    }
  } catch (const DivergenceError& e) {
    diverged = true;
    result.end_time = e.time;
  }

  result.status = diverged ? RunStatus::diverged : RunStatus::completed;
  if (diverged) u = latest;
  result.final_state = u[0];
  result.final_target = target_at(result.end_time, u);
  return result;
}

// ---------------------------------------------------------------------------

DecayFit fit_decay_rate(const CostSeries& series, double t0, double t1, bool use_c2) {
  double st = 0, sy = 0, stt = 0, sty = 0, syy = 0;
  std::size_t n = 0;
  for (const auto& s : series) {
    if (s.t < t0 - 1e-9 || s.t > t1 + 1e-9) continue;
    const double c = use_c2 ? s.C2 : s.C1;
    if (!(c > 0.0)) throw ConfigError("decay fit needs positive costs in the window");
    const double y = std::log(c);
    st += s.t;
    sy += y;
    stt += s.t * s.t;
    sty += s.t * y;
    syy += y * y;
    ++n;
  }
  if (n < 3) throw ConfigError("decay fit needs at least 3 samples in the window");
  const double dn = static_cast<double>(n);
  const double vt = stt - st * st / dn;
  const double vy = syy - sy * sy / dn;
  const double cty = sty - st * sy / dn;
  DecayFit fit;
  fit.samples = n;
  const double slope = cty / vt;
  fit.lambda = -slope;
  fit.r2 = vy > 0.0 ? (cty * cty) / (vt * vy) : 0.0;
  return fit;
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::unbounded: return "unbounded";
    case Regime::bounded_nontrivial: return "bounded_nontrivial";
    case Regime::exponential: return "exponential";
  }
  return "?";
}

std::pair<double, double> fit_window(const CostSeries& series, double onset, double transient) {
  std::vector<double> ts;
  for (const auto& s : series) {
    if (s.t >= onset + transient - 1e-9) ts.push_back(s.t);
  }
  if (ts.empty()) return {onset + transient, onset + transient};
  return {ts[ts.size() / 2], ts.back()};
}

RegimeLabel classify_regime(const SimulationResult& result, double onset, const RegimeThresholds& th) {
  RegimeLabel label;
  if (result.status == RunStatus::diverged) {
    label.regime = Regime::unbounded;
    return label;
  }
  const auto [t0, t1] = fit_window(result.costs, onset, th.transient);
  std::size_t zeros = 0, count = 0;
  for (const auto& s : result.costs) {
    if (s.t < t0 - 1e-9 || s.t > t1 + 1e-9) continue;
    ++count;
    if (!(s.C1 > 0.0)) ++zeros;
  }
  if (count >= 3 && zeros == count) {
    label.regime = Regime::exponential;
    label.lambda = std::numeric_limits<double>::infinity();
    label.r2 = 1.0;
    return label;
  }
  DecayFit fit;
  try {
    fit = fit_decay_rate(result.costs, t0, t1);
  } catch (const ConfigError&) {
    label.regime = Regime::bounded_nontrivial;
    return label;
  }
  label.lambda = fit.lambda;
  label.r2 = fit.r2;
  if (fit.r2 >= th.r2_min && fit.lambda < -th.lambda_min) {
    label.regime = Regime::unbounded;
  } else if (fit.r2 >= th.r2_min && fit.lambda > th.lambda_min) {
    label.regime = Regime::exponential;
  } else {
    label.regime = Regime::bounded_nontrivial;
  }
  return label;
}

// ---------------------------------------------------------------------------

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << contents;
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

std::string cell_row(const SweepCell& c) {
  std::string err = c.error;
  std::replace(err.begin(), err.end(), ',', ';');
  std::replace(err.begin(), err.end(), '\n', ' ');
  return fmt(c.alpha) + "," + std::to_string(c.nctrl) + "," + to_string(c.label.regime) + "," + fmt(c.label.lambda) +
         "," + fmt(c.label.r2) + "," + err;
}

std::optional<SweepCell> read_cell(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::string header, row;
  if (!std::getline(in, header) || !std::getline(in, row)) return std::nullopt;
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : row) {
    if (ch == ',') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  parts.push_back(cur);
  if (parts.size() != 6) return std::nullopt;
  SweepCell c;
  try {
    c.alpha = std::stod(parts[0]);
    c.nctrl = static_cast<std::size_t>(std::stoul(parts[1]));
    if (parts[2] == "unbounded") {
      c.label.regime = Regime::unbounded;
    } else if (parts[2] == "exponential") {
      c.label.regime = Regime::exponential;
    } else if (parts[2] == "bounded_nontrivial") {
      c.label.regime = Regime::bounded_nontrivial;
    } else {
      return std::nullopt;
    }
    c.label.lambda = std::stod(parts[3]);
    c.label.r2 = std::stod(parts[4]);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  c.error = parts[5];
  return c;
}

template <class F>
void run_pool(std::size_t count, unsigned workers, F&& task) {
  const unsigned n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  std::atomic<std::size_t> next{0};
  auto loop = [&]() {
    for (std::size_t i = next++; i < count; i = next++) task(i);
  };
  if (n == 1) {
    loop();
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(n);
  for (unsigned i = 0; i < n; ++i) threads.emplace_back(loop);
  for (auto& t : threads) t.join();
}

std::string regimes_header() { return "alpha,nctrl,label,lambda,r2,error\n"; }

}  // namespace

std::vector<SweepCell> sweep_alpha_nctrl(const SimulationConfig& base, const ActuatorSet& grid,
                                         const std::vector<double>& alphas, const std::vector<std::size_t>& nctrls,
                                         const SweepOptions& options) {
  if (options.out_dir.empty()) throw ConfigError("sweep needs an output directory");
  const auto cells_dir = options.out_dir / "cells";
  std::filesystem::create_directories(cells_dir);
  for (std::size_t n : nctrls) {
    if (n > grid.size()) throw ConfigError("nctrl " + std::to_string(n) + " exceeds the grid size");
  }

  std::vector<SweepCell> cells;
  for (double a : alphas) {
    for (std::size_t n : nctrls) cells.push_back({a, n, {}, {}});
  }
  auto cell_path = [&](const SweepCell& c) {
    char name[96];
    std::snprintf(name, sizeof name, "a%.10g_n%zu.csv", c.alpha, c.nctrl);
    return cells_dir / name;
  };

  std::mutex io;
  run_pool(cells.size(), options.workers, [&](std::size_t i) {
    SweepCell& cell = cells[i];
    const auto path = cell_path(cell);
    if (auto done = read_cell(path)) {
      if (done->nctrl == cell.nctrl && done->alpha == cell.alpha) {
        cell = *done;
        return;
      }
    }
    try {
      SimulationConfig cfg = base;
      cfg.actuators = grid.prefix(cell.nctrl);
      cfg.control.kind = (cell.alpha > 0.0 && cell.nctrl > 0) ? ControlKind::proportional : ControlKind::none;
      cfg.control.alpha = cell.alpha;
      if (options.dt_rule) cfg.integrator.dt = options.dt_rule(cell.alpha, cell.nctrl);
      const SimulationResult r = run_simulation(cfg);
      cell.label = classify_regime(r, base.control.onset, options.thresholds);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    const std::string contents = regimes_header() + cell_row(cell) + "\n";
    std::lock_guard<std::mutex> lock(io);
    write_file_atomic(path, contents);
  });

  std::sort(cells.begin(), cells.end(), [](const SweepCell& a, const SweepCell& b) {
    return a.alpha != b.alpha ? a.alpha < b.alpha : a.nctrl < b.nctrl;
  });
  write_regimes(options.out_dir / "regimes.csv", cells);
  return cells;
}

// ---------------------------------------------------------------------------

double threshold_model(const ThresholdFit& fit, double A) {
  return A <= fit.Ac ? fit.a * (A - fit.Ac) * (A - fit.Ac) : 0.0;
}

ThresholdFit fit_threshold_model(const std::vector<double>& A, const std::vector<double>& lambda) {
  if (A.size() != lambda.size() || A.empty()) throw ConfigError("threshold fit needs matching, nonempty data");
  if (std::all_of(lambda.begin(), lambda.end(), [](double v) { return v == 0.0; })) {
    throw ConfigError("threshold fit is degenerate: every decay rate is zero");
  }
  // For fixed Ac the model is linear in a.
  auto solve = [&](double Ac) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < A.size(); ++i) {
      const double g = A[i] <= Ac ? (A[i] - Ac) * (A[i] - Ac) : 0.0;
      num += lambda[i] * g;
      den += g * g;
    }
    ThresholdFit f;
    f.Ac = Ac;
    f.a = den > 0.0 ? std::max(0.0, num / den) : 0.0;
    double r = 0.0;
    for (std::size_t i = 0; i < A.size(); ++i) {
      const double e = lambda[i] - threshold_model(f, A[i]);
      r += e * e;
    }
    f.residual = r;
    return f;
  };
  const auto [lo_it, hi_it] = std::minmax_element(A.begin(), A.end());
  const double span = std::max(*hi_it - *lo_it, 1e-12);
  const double lo = *lo_it;
  const double hi = *hi_it + 2.0 * span;
  const int scan = 2000;
  ThresholdFit best = solve(lo);
  int best_i = 0;
  for (int i = 1; i <= scan; ++i) {
    const ThresholdFit f = solve(lo + (hi - lo) * i / scan);
    if (f.residual < best.residual) {
      best = f;
      best_i = i;
    }
  }
  // Golden-section refinement around the best scan point.
  double a = lo + (hi - lo) * std::max(0, best_i - 1) / scan;
  double b = lo + (hi - lo) * std::min(scan, best_i + 1) / scan;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  ThresholdFit fc = solve(c), fd = solve(d);
  for (int it = 0; it < 100 && b - a > 1e-12 * std::max(1.0, std::abs(b)); ++it) {
    if (fc.residual < fd.residual) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = solve(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = solve(d);
    }
  }
  const ThresholdFit refined = fc.residual < fd.residual ? fc : fd;
  if (refined.residual < best.residual) best = refined;
  if (!(best.a > 0.0)) throw ConfigError("threshold fit is degenerate: no positive coefficient fits the data");
  return best;
}

// ---------------------------------------------------------------------------

ActuatorSet study_grid(const GridStudyCase& c, const DomainSpec& domain, std::uint64_t halton_start) {
  const double d = domain.L1 / std::round(std::sqrt(static_cast<double>(c.nctrl)));
  if (c.family == "equidistant") return grid_equidistant(domain, d, d);
  if (c.family == "perturbed") return grid_perturbed(domain, d, d, c.sigma, c.seed);
  if (c.family == "halton") return grid_halton(domain, c.nctrl, halton_start);
  if (c.family == "random") return grid_random(domain, c.nctrl, c.seed);
  throw ConfigError("unknown grid family '" + c.family + "'");
}

std::vector<GridRecord> grid_comparison_study(const std::vector<GridStudyCase>& cases, const GridStudyConfig& cfg) {
  std::vector<GridRecord> records(cases.size());
  run_pool(cases.size(), cfg.workers, [&](std::size_t i) {
    const GridStudyCase& c = cases[i];
    GridRecord& rec = records[i];
    rec.family = c.family;
    rec.L = c.L;
    rec.seed = c.seed;
    try {
      DomainSpec dom{c.L, c.L, 0, 0};
      dom.M = static_cast<int>(std::lround(cfg.modes_per_length * c.L / 2.0));
      dom.N = dom.M;
      const ActuatorSet grid = study_grid(c, dom, cfg.halton_start);
      const SpacingReport rep = spacing_areas(grid);
      rec.A1dev = std::abs(rep.A1 - rep.A1E);
      rec.A2 = rep.A2;
      rec.A3 = rep.A3;

      SimulationConfig sim;
      sim.domain = dom;
      sim.physics.kappa = cfg.kappa;
      sim.integrator.dt = cfg.dt;
      sim.warmup_dt = cfg.warmup_dt;
      sim.horizon = cfg.onset + cfg.control_time;
      sim.control.kind = ControlKind::proportional;
      sim.control.alpha = cfg.alpha;
      sim.control.onset = cfg.onset;
      sim.actuators = grid;
      sim.target = zero_target(dom);
      sim.initial = random_initial_condition(dom, derive_seed(cfg.ic_seed, "grid-study-ic-L" + fmt(c.L)));
      const SimulationResult r = run_simulation(sim);
      const RegimeLabel label = classify_regime(r, cfg.onset);
      rec.lambda = label.regime == Regime::exponential ? label.lambda : 0.0;
    } catch (const std::exception& e) {
      rec.error = e.what();
    }
  });
  return records;
}

SimulationResult synchronization_experiment(const SyncConfig& cfg) {
  SimulationConfig sim;
  sim.domain = DomainSpec{cfg.L, cfg.L, cfg.M, cfg.M};
  sim.physics.kappa = cfg.kappa;
  sim.integrator.dt = cfg.dt;
  sim.horizon = cfg.horizon;
  sim.stride = cfg.stride;
  sim.control.kind = ControlKind::proportional;
  sim.control.alpha = cfg.alpha;
  sim.control.onset = cfg.onset;
  sim.actuators = grid_equidistant(sim.domain, cfg.d, cfg.d);
  sim.target.kind = TargetState::Kind::orbit;
  sim.initial = fixed_initial_condition(sim.domain);
  sim.orbit_initial = 2.0 * sim.initial;
  sim.projection_window = cfg.projection_window;
  return run_simulation(sim);
}

// ---------------------------------------------------------------------------

void write_costs(const std::filesystem::path& path, const CostSeries& costs) {
  std::string s = "t,C1,C2\n";
  for (const auto& c : costs) s += fmt_time(c.t) + "," + fmt(c.C1) + "," + fmt(c.C2) + "\n";
  write_file_atomic(path, s);
}

void write_projection(const std::filesystem::path& path, const std::vector<ProjectionSample>& samples) {
  std::string s = "t,re10,re11,re70\n";
  for (const auto& p : samples) s += fmt_time(p.t) + "," + fmt(p.re10) + "," + fmt(p.re11) + "," + fmt(p.re70) + "\n";
  write_file_atomic(path, s);
}

void write_regimes(const std::filesystem::path& path, const std::vector<SweepCell>& cells) {
  std::string s = regimes_header();
  for (const auto& c : cells) s += cell_row(c) + "\n";
  write_file_atomic(path, s);
}

void write_grid_records(const std::filesystem::path& path, const std::vector<GridRecord>& records) {
  std::string s = "family,L,seed,A1dev,A2,A3,lambda,error\n";
  for (const auto& r : records) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    s += r.family + "," + fmt(r.L) + "," + std::to_string(r.seed) + "," + fmt(r.A1dev) + "," + fmt(r.A2) + "," +
         fmt(r.A3) + "," + fmt(r.lambda) + "," + err + "\n";
  }
  write_file_atomic(path, s);
}

}  // namespace ks2d
