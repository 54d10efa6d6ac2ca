#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include "ks2d/spectral.hpp"

namespace ks2d {

/// Inclination parameter of eta_t + eta eta_x + (1-kappa) eta_xx - kappa eta_yy
/// + Laplacian^2 eta = zeta. kappa < 0 hanging film, 0 < kappa < 1 overlying,
/// kappa >= 1 linearly stable.
struct PhysicsParams {
  double kappa = 0.0;
};

/// A_kk = (1-kappa) kx^2 - kappa ky^2 - |k|^4, the uncontrolled growth rate.
double linear_symbol(const WaveVector& k, const PhysicsParams& params);

/// Growth rate s(k) = A_kk - alpha under full-field damping zeta = -alpha eta.
double dispersion(const WaveVector& k, const PhysicsParams& params, double alpha);

/// Number of resolved k != 0 with s(k) > 0 at alpha = 0.
int count_unstable_modes(const DomainSpec& domain, const PhysicsParams& params);

/// Fourier coefficients of -eta eta_x, computed as -(i kx / 2) (eta^2)_k with
/// eta^2 formed in physical space. With dealias set, the 2/3 rule is applied
/// to both the input and the result.
SpectralField nonlinear_term(const SpectralField& eta, bool dealias = false);

/// eta0 = (1/10)[cos(x') + cos(x' + y') + sin(2x' + y') + sin(y') + sin(2y')]
/// with x' = 2 pi x / L1, y' = 2 pi y / L2.
SpectralField fixed_initial_condition(const DomainSpec& domain);

/// sum over 1 <= |k|_inf <= 20 (one representative per +-k pair) of
/// a_k cos(k.x) + b_k sin(k.x), a, b ~ Unif(-0.05, 0.05). Modes the domain
/// cannot resolve are skipped (their draws are still consumed) and a warning
/// is printed.
SpectralField random_initial_condition(const DomainSpec& domain, std::uint64_t seed);

/// How the multistep history is primed.
enum class StartMethod {
  /// Starting values from polynomially extrapolated IMEX Euler
  /// (harmonic step sequence 1..order), accurate to O(dt^order).
  extrapolation,
  /// BDF1, BDF2, ... with the full step; only first-order accurate start.
  ramp,
};

struct IntegratorConfig {
  int order = 4;  ///< BDF order 1..6
  double dt = 1e-3;
  /// Shift c of the implicit operator; default max(0, max_k A_kk) + 1.
  std::optional<double> shift;
  bool dealias = false;
  /// Switch off -eta eta_x (linear experiments and tests).
  bool nonlinear = true;
  StartMethod start = StartMethod::extrapolation;
  /// Blow-up is declared when the norm of any component exceeds this value or
  /// a coefficient is not finite.
  double divergence_threshold = 1e4;

  void validate() const;
};

/// A set of fields advanced together (the controlled state and, for
/// synchronization, its co-integrated target orbit).
using FieldSet = std::vector<SpectralField>;

/// Explicit forcing zeta for every component, evaluated at stage time t from
/// the stage states. An empty function means zeta = 0.
using Forcing = std::function<void(double t, const FieldSet& u, FieldSet& zeta)>;

/// Multistep state: newest entries first. `explicit_terms[j]` is B evaluated
/// at `history[j]`, with B(u) = -u u_x + zeta + c u.
struct SimState {
  double t0 = 0.0;
  long steps = 0;
  double dt = 0.0;
  std::deque<FieldSet> history;
  std::deque<FieldSet> explicit_terms;

  double time() const { return t0 + static_cast<double>(steps) * dt; }
  const FieldSet& current() const { return history.front(); }
  int active_order() const { return static_cast<int>(history.size()); }
};

/// Linearly implicit BDF integrator for the controlled 2D KSE:
///   sum_j a_j u^{n+1-j} / dt + (c - A) u^{n+1} = sum_j b_j B(u^{n-j}),
/// where the implicit part is diagonal in Fourier space.
class KseStepper {
 public:
  KseStepper(const DomainSpec& domain, const PhysicsParams& params, const IntegratorConfig& cfg);

  const DomainSpec& domain() const { return domain_; }
  const IntegratorConfig& config() const { return cfg_; }
  double shift() const { return shift_; }

  /// Builds the history for the configured order starting from u0 at t0; on
  /// return the state sits at t0 + (order-1) dt with a full history.
  SimState bootstrap(FieldSet u0, double t0, const Forcing& forcing = {});
  SimState bootstrap(const SpectralField& u0, double t0, const Forcing& forcing = {});

  /// One step. Throws DivergenceError on blow-up.
  void step(SimState& state, const Forcing& forcing = {});

  /// -u u_x using this stepper's buffers and dealiasing setting.
  void nonlinear_term(const SpectralField& u, SpectralField& out);

 private:
  void explicit_term(double t, const FieldSet& u, FieldSet& out, const Forcing& forcing);
  void check(const FieldSet& u, double t) const;
  FieldSet euler_substeps(const FieldSet& u, const FieldSet& b0, double t, int substeps, const Forcing& forcing);

  DomainSpec domain_;
  PhysicsParams params_;
  IntegratorConfig cfg_;
  double shift_ = 0.0;
  std::vector<double> symbol_;  ///< A_kk in SpectralField layout
  std::vector<double> inverse_;  ///< 1 / (a_0/dt + c - A_kk) for inverse_lead_ = a_0/dt
  double inverse_lead_ = 0.0;
  std::vector<double> kx_;      ///< kx in SpectralField layout
  std::vector<unsigned char> keep_;  ///< dealiasing mask
  FourierTransform fft_;
  std::vector<double> physical_;
  FieldSet zeta_;
};

/// Coefficients of the implicit BDF part, a_0..a_q, for order q.
std::vector<double> bdf_coefficients(int order);
/// Coefficients of the explicit extrapolation, b_0..b_{q-1}.
std::vector<double> extrapolation_coefficients(int order);

}  // namespace ks2d
