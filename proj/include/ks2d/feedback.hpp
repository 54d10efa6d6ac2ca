#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ks2d/actuation.hpp"
#include "ks2d/dynamics.hpp"
#include "ks2d/spectral.hpp"

namespace ks2d {

/// Modes |k1|, |k2| <= n and a real trigonometric basis of dimension (2n+1)^2.
///
/// Complex index: (k1+n)(2n+1) + (k2+n).
/// Real index 0 is the constant; the half set H (k1 = 0, k2 = 1..n, then
/// k1 = 1..n, k2 = -n..n) is enumerated in that order and the h-th element
/// owns the cosine coordinate 1+2h and the sine coordinate 2+2h:
///   a_k = w_k + w_{-k},  b_k = i (w_k - w_{-k}),  w_k = (a_k - i b_k)/2.
class Truncation {
 public:
  explicit Truncation(int n);

  int n() const { return n_; }
  int dim() const { return (2 * n_ + 1) * (2 * n_ + 1); }
  int complex_index(int k1, int k2) const { return (k1 + n_) * (2 * n_ + 1) + (k2 + n_); }
  /// Half-set element for real indices 1+2h and 2+2h.
  std::pair<int, int> half_mode(int h) const { return half_[static_cast<std::size_t>(h)]; }
  int half_size() const { return static_cast<int>(half_.size()); }

  /// Real coordinates of the truncated field; f must resolve n.
  Eigen::VectorXd to_real(const SpectralField& f) const;
  /// Writes the truncated field into out (other modes are zeroed).
  void to_complex(const Eigen::VectorXd& r, SpectralField& out) const;

  /// Complex coefficient vector (complex index order) to real coordinates
  /// and back, for arbitrary (not necessarily symmetric) vectors.
  Eigen::VectorXcd complex_to_real(const Eigen::VectorXcd& c) const;
  Eigen::VectorXcd real_to_complex(const Eigen::VectorXcd& r) const;

  /// Dense change-of-basis matrices T (complex -> real) and its inverse.
  Eigen::MatrixXcd forward_matrix() const;
  Eigen::MatrixXcd inverse_matrix() const;

 private:
  int n_;
  std::vector<std::pair<int, int>> half_;
};

/// J_{k,l} = -i kx(k1) target_{k-l} over the truncation (complex index order).
/// The target must resolve 2n unless it is identically zero.
Eigen::MatrixXcd build_J(const SpectralField& target, int n);

struct LinearizedSystem {
  Eigen::VectorXd Areal;  ///< diagonal of A in the real basis
  Eigen::MatrixXd Jreal;
  Eigen::MatrixXd Breal;  ///< dim x nctrl
  double J_imag_residue = 0.0;  ///< largest |Im| dropped from the real-basis J
};

/// Areal, Jreal (when with_J), Breal for the truncation on the target's domain.
LinearizedSystem linearize(const SpectralField& target, const Truncation& trunc, const PhysicsParams& params,
                           const ActuatorSet& actuators, bool with_J);

struct PlacementReport {
  std::vector<Complex> achieved;
  double max_relative_error = 0.0;
  int iterations = 0;
  bool closed_form = false;
};

/// Real K with eig(A + B K) equal to `desired` (conjugate closed). Uses the
/// minimum-norm closed form when B has full row rank, otherwise a KNV0-style
/// eigenvector iteration. Throws ConfigError on multiplicity > rank(B) or a
/// non-conjugate-closed request, and Error when the result misses the request
/// by more than 1e-6 relative.
Eigen::MatrixXd place_poles(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const std::vector<Complex>& desired,
                            PlacementReport* report = nullptr);

/// Eigenvalues of a dense real matrix (LAPACK dgeev).
std::vector<Complex> eigenvalues(const Eigen::MatrixXd& A);

/// Greedy nearest matching; max |a - d| / max(1, |d|).
double spectrum_mismatch(const std::vector<Complex>& achieved, const std::vector<Complex>& desired);

/// Eigenvalues with Re < threshold are kept; the rest get real part threshold
/// (or threshold - 0.1 U, U ~ Unif(0,1) shared by conjugate partners, when
/// jitter is set) and keep their imaginary part.
std::vector<Complex> desired_spectrum(const std::vector<Complex>& open_loop, double threshold, bool jitter,
                                      std::uint64_t seed);

enum class GainMethod { morris, gomes };
std::string to_string(GainMethod m);
GainMethod parse_gain_method(const std::string& s);

struct GainMatrix {
  int n = 0;
  GainMethod method = GainMethod::gomes;
  double threshold = 0.0;
  Eigen::MatrixXd K;  ///< nctrl x (2n+1)^2
  std::vector<Complex> placed_spectrum;    ///< requested closed-loop spectrum
  std::vector<Complex> achieved_spectrum;  ///< dense eigensolver on Asys + B K
  int moved = 0;  ///< number of eigenvalues reassigned
  double max_entry = 0.0;
  double max_relative_error = 0.0;
  double inf_target_x = 0.0;  ///< inf of d(target)/dx

  std::size_t nctrl() const { return static_cast<std::size_t>(K.rows()); }
};

struct SynthesisOptions {
  bool jitter = false;
  std::uint64_t seed = 0;
  /// Gains with max|K| above this are rejected.
  double max_gain = 1e8;
  /// Verify with a dense eigensolver on the full closed loop.
  bool verify = true;
};

/// inf over Q of d(field)/dx, evaluated on a 4x refined grid.
double inf_x_derivative(const SpectralField& f);

/// Feedback gain about `target`: morris places the spectrum of J + A + B K,
/// gomes that of A + B K and requires -threshold + inf(target_x)/2 > 0.
GainMatrix synthesize_gain(GainMethod method, const SpectralField& target, int n, double threshold,
                           const ActuatorSet& actuators, const PhysicsParams& params,
                           const SynthesisOptions& options = {});

/// phi = K [w truncated to n, in real coordinates].
void apply_gain(const GainMatrix& gain, const Truncation& trunc, const SpectralField& w, std::span<double> phi);

/// "KS2G", u32 version, u32 n, u32 nctrl, u32 method, f64 threshold, then K
/// row-major, little-endian.
void write_gain(const std::filesystem::path& path, const GainMatrix& gain);
GainMatrix read_gain(const std::filesystem::path& path);

}  // namespace ks2d
