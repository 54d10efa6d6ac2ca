#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ks2d/spectral.hpp"

namespace ks2d {

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

/// Ordered actuator/observer locations in [0,L1) x [0,L2). The order matters:
/// prefix(p) is the "first p switched on" subset used by the sweeps.
class ActuatorSet {
 public:
  ActuatorSet() = default;
  /// Throws ConfigError for points outside Q or exact duplicates.
  ActuatorSet(const DomainSpec& domain, std::vector<Point> points);

  const DomainSpec& domain() const { return domain_; }
  const std::vector<Point>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Point& operator[](std::size_t j) const { return points_[j]; }

  ActuatorSet prefix(std::size_t count) const;

 private:
  DomainSpec domain_;
  std::vector<Point> points_;
};

/// Lattice (i d1, j d2); L1/d1 and L2/d2 must be positive integers.
ActuatorSet grid_equidistant(const DomainSpec& domain, double d1, double d2);
/// Lattice points shifted by N(0, sigma^2) per axis. Shifts are reflected back
/// into (-d/2, d/2] so each lattice cell keeps exactly one actuator.
ActuatorSet grid_perturbed(const DomainSpec& domain, double d1, double d2, double sigma, std::uint64_t seed);
/// n uniform points; exact duplicates are redrawn.
ActuatorSet grid_random(const DomainSpec& domain, std::size_t n, std::uint64_t seed);
/// Halton points start..start+n-1 with bases (2,3), scaled to (L1,L2). Index 0
/// is the origin; MATLAB-style generators start there.
ActuatorSet grid_halton(const DomainSpec& domain, std::size_t n, std::uint64_t start = 1);

double radical_inverse(std::uint64_t index, unsigned base);

/// Delta-actuator Fourier data b^j_k = exp(-i k.x_j) / |Q| over the resolved
/// modes of a field domain, stored in separable form
/// b^j_k = ex(j,k1) ey(j,k2) / |Q|.
///
/// observe() and assemble() use per-instance scratch; give each simulation
/// its own copy.
class ActuatorSpectrum {
 public:
  ActuatorSpectrum() = default;
  ActuatorSpectrum(const ActuatorSet& set, const DomainSpec& field_domain);

  const ActuatorSet& actuators() const { return set_; }
  const DomainSpec& domain() const { return domain_; }
  std::size_t size() const { return set_.size(); }
  /// True when every actuator sits on a collocation node.
  bool on_grid() const { return on_grid_; }

  Complex entry(int k1, int k2, std::size_t j) const;

  /// out[j] = f(x_j), by spectral evaluation. Throws MalformedField when
  /// the imaginary residue exceeds 1e-10 of the coefficient scale.
  void observe(const SpectralField& f, std::span<double> out);
  /// zeta_k = sum_j phi_j b^j_k.
  void assemble(std::span<const double> phi, SpectralField& zeta);

  /// Disables the collocation-node shortcut (tests compare both paths).
  void set_use_grid_path(bool enabled) { use_grid_path_ = enabled && on_grid_; }

 private:
  ActuatorSet set_;
  DomainSpec domain_;
  Eigen::MatrixXcd ex_;  ///< nctrl x (2M-1), exp(-i kx x_j)
  Eigen::MatrixXcd ey_;  ///< nctrl x (2N-1), exp(-i ky y_j)
  bool on_grid_ = false;
  bool use_grid_path_ = false;
  std::vector<std::size_t> node_;  ///< flat grid index per actuator when on_grid_
  // Copies start without a transform so that copies never share scratch.
  struct LazyTransform {
    std::unique_ptr<FourierTransform> ptr;
    LazyTransform() = default;
    LazyTransform(const LazyTransform&) {}
    LazyTransform(LazyTransform&&) noexcept = default;
    LazyTransform& operator=(const LazyTransform&) { ptr.reset(); return *this; }
    LazyTransform& operator=(LazyTransform&&) noexcept = default;
  };
  FourierTransform& transform();

  LazyTransform fft_;
  std::vector<double> samples_;
  using RowMajorC = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::MatrixXcd work_;
  RowMajorC field_;
};

struct SpacingReport {
  double A1 = 0.0;  ///< pi * (largest nearest-neighbour distance)^2
  double A2 = 0.0;  ///< largest Voronoi cell area
  double A3 = 0.0;  ///< largest empty circle area
  /// Closed forms for the square equidistant grid of the same density,
  /// d = sqrt(|Q| / n).
  double A1E = 0.0;
  double A2E = 0.0;
  double A3E = 0.0;
  /// Voronoi cell areas in actuator order; they partition the torus.
  std::vector<double> cell_areas;
};

/// Spacing metrics with the periodic (torus) metric. Throws ConfigError for
/// fewer than 2 actuators.
SpacingReport spacing_areas(const ActuatorSet& set);

double equidistant_A1(double d1, double d2);
double equidistant_A2(double d1, double d2);
double equidistant_A3(double d1, double d2);

/// CSV with a "# L1=..,L2=.." comment line, an "x,y" header, one point per line.
void write_actuators(const std::filesystem::path& path, const ActuatorSet& set);
/// Reads the format above; the domain's L1, L2 must match the header.
ActuatorSet read_actuators(const std::filesystem::path& path, const DomainSpec& domain);

}  // namespace ks2d
