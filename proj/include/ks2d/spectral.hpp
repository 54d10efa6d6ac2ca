#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <numbers>
#include <span>
#include <vector>

#include "ks2d/error.hpp"

namespace ks2d {

using Complex = std::complex<double>;

/// Periodic rectangle Q = [0,L1) x [0,L2) sampled on 2M x 2N collocation
/// points. Resolved Fourier modes are |k1| <= M-1 and |k2| <= N-1; the
/// Nyquist rows are never part of a field.
struct DomainSpec {
  double L1 = 2.0 * std::numbers::pi;
  double L2 = 2.0 * std::numbers::pi;
  int M = 16;
  int N = 16;

  /// Throws ConfigError unless L1, L2 > 0 and M, N >= 2.
  void validate() const;

  double area() const { return L1 * L2; }
  double kx(int k1) const { return 2.0 * std::numbers::pi * k1 / L1; }
  double ky(int k2) const { return 2.0 * std::numbers::pi * k2 / L2; }
  int grid_x() const { return 2 * M; }
  int grid_y() const { return 2 * N; }
  int modes_x() const { return 2 * M - 1; }
  int modes_y() const { return 2 * N - 1; }
  double dx() const { return L1 / grid_x(); }
  double dy() const { return L2 / grid_y(); }

  bool operator==(const DomainSpec&) const = default;
};

struct WaveVector {
  int k1 = 0;
  int k2 = 0;
  double kx = 0.0;
  double ky = 0.0;

  static WaveVector of(const DomainSpec& domain, int k1, int k2) {
    return {k1, k2, domain.kx(k1), domain.ky(k2)};
  }
  double norm2() const { return kx * kx + ky * ky; }
};

/// Real periodic field stored as the full square of resolved complex Fourier
/// coefficients, coeff(k1,k2) for |k1| <= M-1, |k2| <= N-1.
///
/// The field is real-valued, so coeff(-k) == conj(coeff(k)). Operations that
/// can break the symmetry numerically call symmetrize() afterwards.
class SpectralField {
 public:
  SpectralField() = default;
  explicit SpectralField(const DomainSpec& domain);

  const DomainSpec& domain() const { return domain_; }
  bool empty() const { return coeffs_.empty(); }

  bool resolves(int k1, int k2) const {
    return k1 > -domain_.M && k1 < domain_.M && k2 > -domain_.N && k2 < domain_.N;
  }
  std::size_t index(int k1, int k2) const {
    return static_cast<std::size_t>(k1 + domain_.M - 1) * domain_.modes_y() +
           static_cast<std::size_t>(k2 + domain_.N - 1);
  }

  Complex& operator()(int k1, int k2) { return coeffs_[index(k1, k2)]; }
  const Complex& operator()(int k1, int k2) const { return coeffs_[index(k1, k2)]; }

  /// Coefficient or zero when (k1,k2) is not resolved.
  Complex at(int k1, int k2) const { return resolves(k1, k2) ? (*this)(k1, k2) : Complex{}; }

  /// Sets coeff(k) and coeff(-k) consistently.
  void set_pair(int k1, int k2, Complex value);

  std::span<Complex> coeffs() { return coeffs_; }
  std::span<const Complex> coeffs() const { return coeffs_; }

  /// Largest |coeff(-k) - conj(coeff(k))|.
  double symmetry_defect() const;
  /// Replaces each pair by its conjugate-symmetric average.
  void symmetrize();
  void set_zero();

  SpectralField& operator+=(const SpectralField& other);
  SpectralField& operator-=(const SpectralField& other);
  SpectralField& operator*=(double s);
  /// this += s * other
  SpectralField& axpy(double s, const SpectralField& other);

  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(double s, SpectralField a) { return a *= s; }

 private:
  void require_same_domain(const SpectralField& other) const;

  DomainSpec domain_;
  std::vector<Complex> coeffs_;
};

/// Physical samples, row-major with x as the slow index:
/// value(i,j) = f(i*L1/(2M), j*L2/(2N)).
struct RealGrid {
  int nx = 0;
  int ny = 0;
  std::vector<double> values;

  double& operator()(int i, int j) { return values[static_cast<std::size_t>(i) * ny + j]; }
  double operator()(int i, int j) const { return values[static_cast<std::size_t>(i) * ny + j]; }
};

/// Reusable 2D real FFT pair for one domain. Owns its scratch buffers, so an
/// instance must not be shared between threads; distinct instances may run
/// concurrently.
class FourierTransform {
 public:
  explicit FourierTransform(const DomainSpec& domain);
  ~FourierTransform();
  FourierTransform(FourierTransform&&) noexcept;
  FourierTransform& operator=(FourierTransform&&) noexcept;
  FourierTransform(const FourierTransform&) = delete;
  FourierTransform& operator=(const FourierTransform&) = delete;

  const DomainSpec& domain() const { return domain_; }

  /// No symmetry check; out must hold 2M*2N doubles.
  void to_physical(const SpectralField& f, std::span<double> out);
  /// out must share this transform's domain.
  void to_spectral(std::span<const double> samples, SpectralField& out);

 private:
  struct Impl;
  DomainSpec domain_;
  std::unique_ptr<Impl> impl_;
};

/// Tolerance on the conjugate-symmetry defect, relative to the largest
/// coefficient, above which a field is rejected as non-real.
inline constexpr double kSymmetryTolerance = 1e-12;

/// Throws MalformedField when f is not conjugate symmetric to tolerance.
void require_real(const SpectralField& f);

RealGrid to_physical(const SpectralField& f);
SpectralField to_spectral(const RealGrid& samples, const DomainSpec& domain);

/// (sum_k |f_k|^2)^{1/2}: the L2 norm normalized by |Q|.
double l2_norm(const SpectralField& f);
double mean(const SpectralField& f);

/// Point evaluation of the Fourier series; throws MalformedField when the
/// imaginary residue exceeds 1e-10 relative to the coefficient scale.
double evaluate(const SpectralField& f, double x, double y);

/// Copies coefficients between resolutions (zero-padding or truncation).
SpectralField resample(const SpectralField& f, const DomainSpec& target);

/// Field snapshot: "KS2D", u32 version, f64 L1, f64 L2, u32 M, u32 N, then the
/// 2M x 2N real grid, all little-endian, grid row-major.
void write_snapshot(const std::filesystem::path& path, const SpectralField& f);
SpectralField read_snapshot(const std::filesystem::path& path);

}  // namespace ks2d
