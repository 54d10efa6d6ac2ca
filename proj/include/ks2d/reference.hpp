#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "ks2d/dynamics.hpp"
#include "ks2d/spectral.hpp"

namespace ks2d {

/// y-independent solution eta(x,t) = P(x - c t) of the uncontrolled equation,
/// stored as coeffs[k] = P_k for k = 0..m (P_{-k} = conj(P_k), P_0 = 0).
struct Profile {
  double kappa = 0.0;
  double L1 = 0.0;
  double speed = 0.0;
  std::vector<Complex> coeffs;

  int modes() const { return static_cast<int>(coeffs.size()) - 1; }
  double kx(int k) const;
  /// inf over x of P'(x), on a dense grid.
  double inf_derivative() const;
  double value(double x) const;
};

struct WaveProblem {
  double kappa = -0.5;
  double L1 = 18.0;
  int modes = 48;  ///< truncation m
  double tolerance = 1e-12;
  int max_iterations = 60;
};

/// R_k = i k c P_k - (i k / 2) (P^2)_k + ((1-kappa) k^2 - k^4) P_k, k = 1..m,
/// i.e. the Fourier coefficients of c P' - P P' - (1-kappa) P'' - P''''.
std::vector<Complex> wave_residual(const Profile& p);
double wave_residual_norm(const Profile& p);

struct NewtonReport {
  int iterations = 0;
  std::vector<double> residuals;  ///< residual norm before each iteration and at exit
  bool converged = false;
};

/// Steady solution (c = 0) by Gauss-Newton with Im P_1 = 0 fixing the phase.
/// Throws Error when the iteration fails to converge.
Profile solve_steady_1d(const WaveProblem& problem, const Profile& guess, NewtonReport* report = nullptr);
/// Travelling solution with unknown speed (starting from guess.speed).
Profile solve_travelling_1d(const WaveProblem& problem, const Profile& guess, NewtonReport* report = nullptr);

/// Nontrivial solutions found by amplitude continuation from the linearly
/// unstable 1D modes (travelling: from mixed two-mode seeds with a speed
/// guess), distinct up to translation. Empty when only the trivial branch exists.
std::vector<Profile> search_waves(const WaveProblem& problem, bool travelling);

/// Profile shifted by s in x: P_k -> P_k e^{-i k s}.
Profile shift_profile(const Profile& p, double s);

/// Places the profile on the k2 = 0 row. Throws ShapeError when modes beyond
/// M-1 carry more than 1e-12.
SpectralField extend_to_2d(const Profile& p, const DomainSpec& domain);

struct TargetState {
  enum class Kind { zero, steady, travelling, orbit };
  Kind kind = Kind::zero;
  SpectralField field;  ///< state at t = 0
  double speed = 0.0;
};

TargetState zero_target(const DomainSpec& domain);
TargetState profile_target(const Profile& p, const DomainSpec& domain);

/// Analytic targets at time t: travelling waves move by the phase factor
/// e^{-i kx c t}. Orbit targets are co-integrated by the simulation driver
/// and are rejected here.
SpectralField advance_target(const TargetState& target, double t);

/// CSV with a "# kappa=..,L1=..,c=.." line, a "k,re,im" header, rows k = 0..m.
void write_profile(const std::filesystem::path& path, const Profile& p);
Profile read_profile(const std::filesystem::path& path);

}  // namespace ks2d
