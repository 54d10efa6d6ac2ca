#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ks2d/actuation.hpp"
#include "ks2d/dynamics.hpp"
#include "ks2d/feedback.hpp"
#include "ks2d/reference.hpp"

namespace ks2d {

struct CostSample {
  double t = 0.0;
  double C1 = 0.0;  ///< ||eta - target||
  double C2 = 0.0;  ///< (1/|Q|) sum_j |phi_j|
};

struct ProjectionSample {
  double t = 0.0;
  double re10 = 0.0;
  double re11 = 0.0;
  double re70 = 0.0;
};

using CostSeries = std::vector<CostSample>;

enum class ControlKind { none, proportional, feedback, full_field };

struct ControlLaw {
  ControlKind kind = ControlKind::none;
  double alpha = 0.0;                  ///< proportional / full_field
  std::optional<GainMatrix> gain;      ///< feedback
  double onset = 0.0;                  ///< controls act for t >= onset
};

struct SimulationConfig {
  DomainSpec domain;
  PhysicsParams physics;
  IntegratorConfig integrator;
  /// Time step before the control onset; unset means integrator.dt. When it
  /// differs, the multistep history is rebuilt at the onset.
  std::optional<double> warmup_dt;
  double horizon = 1.0;
  double stride = 0.1;  ///< cost sampling interval
  ControlLaw control;
  ActuatorSet actuators;
  TargetState target;
  /// Initial state of the orbit target (kind orbit only).
  SpectralField orbit_initial;
  SpectralField initial;
  /// Projection samples are recorded for t in [lo, hi] when set.
  std::optional<std::pair<double, double>> projection_window;
};

enum class RunStatus { completed, diverged };

struct SimulationResult {
  RunStatus status = RunStatus::completed;
  double end_time = 0.0;
  CostSeries costs;
  std::vector<ProjectionSample> projection;
  SpectralField final_state;
  SpectralField final_target;
};

/// Observer for every recorded sample (state, target, time).
using SampleHook = std::function<void(double t, const SpectralField& eta, const SpectralField& target)>;

SimulationResult run_simulation(const SimulationConfig& cfg, const SampleHook& hook = {});

struct DecayFit {
  double lambda = 0.0;  ///< negated slope of log C vs t
  double r2 = 0.0;
  std::size_t samples = 0;
};

/// Least-squares fit of log C1 (or C2) over t in [t0, t1]. Throws
/// ConfigError for fewer than 3 samples or nonpositive costs in the window.
DecayFit fit_decay_rate(const CostSeries& series, double t0, double t1, bool use_c2 = false);

enum class Regime { unbounded, bounded_nontrivial, exponential };
std::string to_string(Regime r);

struct RegimeLabel {
  Regime regime = Regime::bounded_nontrivial;
  double lambda = 0.0;
  double r2 = 0.0;
};

struct RegimeThresholds {
  double lambda_min = 1e-3;
  double r2_min = 0.99;
  double transient = 5.0;
};

/// [t0, t1] used for decay fits: the last half of the post-onset samples,
/// skipping the first `transient` time units after the onset.
std::pair<double, double> fit_window(const CostSeries& series, double onset, double transient);

/// unbounded: divergence, or a clean exponential growth fit (lambda <
/// -lambda_min with R^2 >= r2_min) on the fit window; exponential: lambda >
/// lambda_min with R^2 >= r2_min; otherwise bounded_nontrivial.
RegimeLabel classify_regime(const SimulationResult& result, double onset, const RegimeThresholds& th = {});

struct SweepCell {
  double alpha = 0.0;
  std::size_t nctrl = 0;
  RegimeLabel label;
  std::string error;  ///< non-empty when the cell failed
};

struct SweepOptions {
  std::filesystem::path out_dir;  ///< per-cell files live in out_dir/cells
  unsigned workers = 1;
  RegimeThresholds thresholds;
  /// Per-cell time step; unset means base.integrator.dt.
  std::function<double(double alpha, std::size_t nctrl)> dt_rule;
};

/// Proportional-control regime map over alphas x nctrls, switching on the
/// first nctrl actuators of `grid`. Cells already on disk are reused, so an
/// interrupted sweep resumes. Writes out_dir/regimes.csv sorted by
/// (alpha, nctrl).
std::vector<SweepCell> sweep_alpha_nctrl(const SimulationConfig& base, const ActuatorSet& grid,
                                         const std::vector<double>& alphas, const std::vector<std::size_t>& nctrls,
                                         const SweepOptions& options);

struct ThresholdFit {
  double a = 0.0;
  double Ac = 0.0;
  double residual = 0.0;  ///< sum of squared errors
};

/// Least squares for lambda = a (A - Ac)^2 for A <= Ac, 0 otherwise. Throws
/// ConfigError when every lambda is zero.
ThresholdFit fit_threshold_model(const std::vector<double>& A, const std::vector<double>& lambda);
double threshold_model(const ThresholdFit& fit, double A);

struct GridRecord {
  std::string family;
  double L = 0.0;
  std::uint64_t seed = 0;
  double A1dev = 0.0;  ///< |A1 - A1E|
  double A2 = 0.0;
  double A3 = 0.0;
  double lambda = 0.0;  ///< 0 when not exponential
  std::string error;
};

struct GridStudyCase {
  std::string family;  ///< equidistant | perturbed | halton | random
  double L = 21.0;
  std::size_t nctrl = 49;
  std::uint64_t seed = 0;
  double sigma = 0.5;  ///< perturbed only
};

struct GridStudyConfig {
  double kappa = 0.25;
  double alpha = 150.0;
  double onset = 200.0;
  double control_time = 40.0;  ///< horizon = onset + control_time
  double warmup_dt = 0.01;
  double dt = 1e-3;
  double modes_per_length = 2.0 * 28.0 / 21.0;  ///< 2M / L
  std::uint64_t halton_start = 0;
  std::uint64_t ic_seed = 0;
  unsigned workers = 1;
};

/// One controlled run per case; lambda is the C1 decay rate when the regime
/// is exponential and 0 otherwise.
std::vector<GridRecord> grid_comparison_study(const std::vector<GridStudyCase>& cases, const GridStudyConfig& cfg);

/// Actuator set for a study case.
ActuatorSet study_grid(const GridStudyCase& c, const DomainSpec& domain, std::uint64_t halton_start);

struct SyncConfig {
  double kappa = 0.25;
  double L = 45.0;
  int M = 60;
  double d = 3.0;  ///< equidistant spacing
  double alpha = 5.0;
  double onset = 100.0;
  double horizon = 150.0;
  double dt = 5e-3;
  double stride = 0.1;
  std::pair<double, double> projection_window{50.0, 150.0};
};

/// Drives eta (from the fixed initial condition) onto the uncontrolled orbit
/// started from twice that condition.
SimulationResult synchronization_experiment(const SyncConfig& cfg);

/// CSV writers (header line, then rows; %.17g precision).
void write_costs(const std::filesystem::path& path, const CostSeries& costs);
void write_projection(const std::filesystem::path& path, const std::vector<ProjectionSample>& samples);
void write_regimes(const std::filesystem::path& path, const std::vector<SweepCell>& cells);
void write_grid_records(const std::filesystem::path& path, const std::vector<GridRecord>& records);

/// Writes via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace ks2d
