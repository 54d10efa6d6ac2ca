#include "ks2d/feedback.hpp"

#include <lapacke.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "ks2d/random.hpp"

namespace ks2d {

Truncation::Truncation(int n) : n_(n) {
  if (n < 0) throw ConfigError("truncation n must be nonnegative");
  for (int k2 = 1; k2 <= n; ++k2) half_.emplace_back(0, k2);
  for (int k1 = 1; k1 <= n; ++k1) {
    for (int k2 = -n; k2 <= n; ++k2) half_.emplace_back(k1, k2);
  }
}

Eigen::VectorXd Truncation::to_real(const SpectralField& f) const {
  if (!f.resolves(n_, n_)) throw ShapeError("field does not resolve the feedback truncation");
  Eigen::VectorXd r(dim());
  r(0) = f(0, 0).real();
  for (int h = 0; h < half_size(); ++h) {
    const auto [k1, k2] = half_[static_cast<std::size_t>(h)];
    const Complex w = f(k1, k2);
    r(1 + 2 * h) = 2.0 * w.real();
    r(2 + 2 * h) = -2.0 * w.imag();
  }
  return r;
}

void Truncation::to_complex(const Eigen::VectorXd& r, SpectralField& out) const {
  if (r.size() != dim()) throw ShapeError("real coordinate vector has the wrong length");
  if (!out.resolves(n_, n_)) throw ShapeError("field does not resolve the feedback truncation");
  out.set_zero();
  out(0, 0) = r(0);
  for (int h = 0; h < half_size(); ++h) {
    const auto [k1, k2] = half_[static_cast<std::size_t>(h)];
    out.set_pair(k1, k2, Complex(0.5 * r(1 + 2 * h), -0.5 * r(2 + 2 * h)));
  }
}

Eigen::VectorXcd Truncation::complex_to_real(const Eigen::VectorXcd& c) const {
  const Complex I(0.0, 1.0);
  Eigen::VectorXcd r(dim());
  r(0) = c(complex_index(0, 0));
  for (int h = 0; h < half_size(); ++h) {
    const auto [k1, k2] = half_[static_cast<std::size_t>(h)];
    const Complex p = c(complex_index(k1, k2));
    const Complex m = c(complex_index(-k1, -k2));
    r(1 + 2 * h) = p + m;
    r(2 + 2 * h) = I * (p - m);
  }
  return r;
}

Eigen::VectorXcd Truncation::real_to_complex(const Eigen::VectorXcd& r) const {
  const Complex I(0.0, 1.0);
  Eigen::VectorXcd c(dim());
  c(complex_index(0, 0)) = r(0);
  for (int h = 0; h < half_size(); ++h) {
    const auto [k1, k2] = half_[static_cast<std::size_t>(h)];
    const Complex a = r(1 + 2 * h);
    const Complex b = r(2 + 2 * h);
    c(complex_index(k1, k2)) = 0.5 * (a - I * b);
    c(complex_index(-k1, -k2)) = 0.5 * (a + I * b);
  }
  return c;
}

Eigen::MatrixXcd Truncation::forward_matrix() const {
  Eigen::MatrixXcd T(dim(), dim());
  Eigen::VectorXcd e = Eigen::VectorXcd::Zero(dim());
  for (int j = 0; j < dim(); ++j) {
    e(j) = 1.0;
    T.col(j) = complex_to_real(e);
    e(j) = 0.0;
  }
  return T;
}

Eigen::MatrixXcd Truncation::inverse_matrix() const {
  Eigen::MatrixXcd T(dim(), dim());
  Eigen::VectorXcd e = Eigen::VectorXcd::Zero(dim());
  for (int j = 0; j < dim(); ++j) {
    e(j) = 1.0;
    T.col(j) = real_to_complex(e);
    e(j) = 0.0;
  }
  return T;
}

Eigen::MatrixXcd build_J(const SpectralField& target, int n) {
  const Truncation trunc(n);
  bool zero = true;
  for (const auto& c : target.coeffs()) {
    if (c != Complex{}) {
      zero = false;
      break;
    }
  }
  if (!zero && !target.resolves(2 * n, 2 * n)) {
    throw ShapeError("target must resolve modes up to 2n = " + std::to_string(2 * n) + " to build J");
  }
  const DomainSpec& dom = target.domain();
  Eigen::MatrixXcd J = Eigen::MatrixXcd::Zero(trunc.dim(), trunc.dim());
  if (zero) return J;
  for (int k1 = -n; k1 <= n; ++k1) {
    const Complex f(0.0, -dom.kx(k1));
    if (k1 == 0) continue;
    for (int k2 = -n; k2 <= n; ++k2) {
      const int row = trunc.complex_index(k1, k2);
      for (int l1 = -n; l1 <= n; ++l1) {
        for (int l2 = -n; l2 <= n; ++l2) {
          J(row, trunc.complex_index(l1, l2)) = f * target.at(k1 - l1, k2 - l2);
        }
      }
    }
  }
  return J;
}

LinearizedSystem linearize(const SpectralField& target, const Truncation& trunc, const PhysicsParams& params,
                           const ActuatorSet& actuators, bool with_J) {
  const DomainSpec& dom = target.domain();
  if (!target.resolves(trunc.n(), trunc.n())) throw ShapeError("target domain does not resolve the truncation");
  const int dim = trunc.dim();
  LinearizedSystem sys;
  sys.Areal = Eigen::VectorXd::Zero(dim);
  for (int h = 0; h < trunc.half_size(); ++h) {
    const auto [k1, k2] = trunc.half_mode(h);
    const double a = linear_symbol(WaveVector::of(dom, k1, k2), params);
    sys.Areal(1 + 2 * h) = a;
    sys.Areal(2 + 2 * h) = a;
  }

  const auto nctrl = static_cast<Eigen::Index>(actuators.size());
  sys.Breal.resize(dim, nctrl);
  const double q = dom.area();
  for (Eigen::Index j = 0; j < nctrl; ++j) {
    const Point& p = actuators[static_cast<std::size_t>(j)];
    sys.Breal(0, j) = 1.0 / q;
    for (int h = 0; h < trunc.half_size(); ++h) {
      const auto [k1, k2] = trunc.half_mode(h);
      const double ph = dom.kx(k1) * p.x + dom.ky(k2) * p.y;
      sys.Breal(1 + 2 * h, j) = 2.0 * std::cos(ph) / q;
      sys.Breal(2 + 2 * h, j) = 2.0 * std::sin(ph) / q;
    }
  }

  if (with_J) {
    const Eigen::MatrixXcd J = build_J(target, trunc.n());
    sys.Jreal.resize(dim, dim);
    Eigen::VectorXcd e = Eigen::VectorXcd::Zero(dim);
    for (int m = 0; m < dim; ++m) {
      e(m) = 1.0;
      const Eigen::VectorXcd c = trunc.real_to_complex(e);
      e(m) = 0.0;
      Eigen::VectorXcd y = Eigen::VectorXcd::Zero(dim);
      for (int i = 0; i < dim; ++i) {
        if (c(i) != Complex{}) y += c(i) * J.col(i);
      }
      const Eigen::VectorXcd r = trunc.complex_to_real(y);
      sys.Jreal.col(m) = r.real();
      sys.J_imag_residue = std::max(sys.J_imag_residue, r.imag().cwiseAbs().maxCoeff());
    }
  }
  return sys;
}

// ---------------------------------------------------------------------------

std::vector<Complex> eigenvalues(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols()) throw ShapeError("eigenvalues need a square matrix");
  const auto n = static_cast<lapack_int>(A.rows());
  if (n == 0) return {};
  Eigen::MatrixXd a = A;
  std::vector<double> wr(static_cast<std::size_t>(n)), wi(static_cast<std::size_t>(n));
  const lapack_int info = LAPACKE_dgeev(LAPACK_COL_MAJOR, 'N', 'N', n, a.data(), n, wr.data(), wi.data(), nullptr, 1,
                                        nullptr, 1);
  if (info != 0) throw Error("dgeev failed with info " + std::to_string(info));
  std::vector<Complex> out(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = Complex(wr[i], wi[i]);
  return out;
}

double spectrum_mismatch(const std::vector<Complex>& achieved, const std::vector<Complex>& desired) {
  if (achieved.size() != desired.size()) return std::numeric_limits<double>::infinity();
  std::vector<Complex> want = desired;
  std::sort(want.begin(), want.end(), [](Complex a, Complex b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  std::vector<bool> used(achieved.size(), false);
  double worst = 0.0;
  for (const Complex d : want) {
    std::size_t best = achieved.size();
    double dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < achieved.size(); ++i) {
      if (used[i]) continue;
      const double e = std::abs(achieved[i] - d);
      if (e < dist) {
        dist = e;
        best = i;
      }
    }
    used[best] = true;
    worst = std::max(worst, dist / std::max(1.0, std::abs(d)));
  }
  return worst;
}

std::vector<Complex> desired_spectrum(const std::vector<Complex>& open_loop, double threshold, bool jitter,
                                      std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Complex> out = open_loop;
  std::vector<bool> done(out.size(), false);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (done[i] || out[i].real() < threshold) continue;
    double re = threshold;
    if (jitter) re = threshold - 0.1 * uniform_open(rng, 0.0, 1.0);
    const Complex v = out[i];
    out[i] = Complex(re, v.imag());
    done[i] = true;
    if (v.imag() != 0.0) {
      // Give the conjugate partner the same draw.
      for (std::size_t j = i + 1; j < out.size(); ++j) {
        if (!done[j] && std::abs(out[j] - std::conj(v)) <= 1e-12 * std::max(1.0, std::abs(v))) {
          out[j] = std::conj(out[i]);
          done[j] = true;
          break;
        }
      }
    }
  }
  return out;
}

namespace {

// Real matrix with the given (conjugate-closed) spectrum: 2x2 rotation blocks
// for complex pairs.
Eigen::MatrixXd block_diagonal(const std::vector<Complex>& poles) {
  const auto n = static_cast<Eigen::Index>(poles.size());
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
  std::vector<bool> done(poles.size(), false);
  Eigen::Index pos = 0;
  std::vector<Complex> order;
  for (std::size_t i = 0; i < poles.size(); ++i) {
    if (done[i]) continue;
    done[i] = true;
    if (poles[i].imag() == 0.0) {
      D(pos, pos) = poles[i].real();
      ++pos;
      continue;
    }
    for (std::size_t j = i + 1; j < poles.size(); ++j) {
      if (!done[j] && poles[j] == std::conj(poles[i])) {
        done[j] = true;
        break;
      }
    }
    const double s = poles[i].real();
    const double w = poles[i].imag();
    D(pos, pos) = s;
    D(pos + 1, pos + 1) = s;
    D(pos, pos + 1) = w;
    D(pos + 1, pos) = -w;
    pos += 2;
  }
  return D;
}

// Pairs each complex value with its exact conjugate. Values with tiny
// imaginary parts are snapped to the real axis first.
std::vector<Complex> canonical_poles(const std::vector<Complex>& desired) {
  std::vector<Complex> poles = desired;
  for (auto& p : poles) {
    if (std::abs(p.imag()) <= 1e-14 * std::max(1.0, std::abs(p))) p = Complex(p.real(), 0.0);
  }
  std::vector<bool> matched(poles.size(), false);
  for (std::size_t i = 0; i < poles.size(); ++i) {
    if (matched[i] || poles[i].imag() == 0.0) continue;
    bool found = false;
    for (std::size_t j = 0; j < poles.size(); ++j) {
      if (j == i || matched[j]) continue;
      if (std::abs(poles[j] - std::conj(poles[i])) <= 1e-10 * std::max(1.0, std::abs(poles[i]))) {
        poles[j] = std::conj(poles[i]);
        matched[i] = matched[j] = true;
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("desired spectrum is not closed under conjugation");
  }
  return poles;
}

int numeric_rank(const Eigen::MatrixXd& B, Eigen::JacobiSVD<Eigen::MatrixXd>* svd_out = nullptr) {
  if (B.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(B, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double tol = std::max(B.rows(), B.cols()) * std::numeric_limits<double>::epsilon() * s(0) * 10.0;
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > tol) ++r;
  }
  if (svd_out) *svd_out = svd;
  return r;
}

// Orthonormal basis of the null space of G.
Eigen::MatrixXcd null_space(const Eigen::MatrixXcd& G, Eigen::Index cols) {
  if (G.rows() == 0) return Eigen::MatrixXcd::Identity(cols, cols);
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(G, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double tol = std::max(G.rows(), G.cols()) * std::numeric_limits<double>::epsilon() *
                     std::max(1.0, s.size() ? s(0) : 0.0) * 100.0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > tol) ++rank;
  }
  return svd.matrixV().rightCols(cols - rank);
}

Eigen::VectorXcd project_real(const Eigen::MatrixXcd& S, const Eigen::VectorXcd& y) {
  // S spans a real subspace (real pole); rotate the coefficients so that the
  // projection is as close to real as possible and drop the rest.
  const Eigen::VectorXcd z = S.adjoint() * y;
  Complex sq = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) sq += z(i) * z(i);
  const double theta = 0.5 * std::arg(sq);
  Eigen::VectorXcd x = S * (std::polar(1.0, -theta) * z);
  x = x.real().cast<Complex>();
  if (x.norm() < 1e-300) x = S.col(0).real().cast<Complex>();
  return x / x.norm();
}

}  // namespace

Eigen::MatrixXd place_poles(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const std::vector<Complex>& desired,
                            PlacementReport* report) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || B.rows() != n) throw ShapeError("place_poles: A must be square and B must have as many rows");
  if (static_cast<Eigen::Index>(desired.size()) != n) {
    throw ShapeError("place_poles: need exactly one desired eigenvalue per state");
  }
  const Eigen::Index m = B.cols();
  if (n == 0) return Eigen::MatrixXd::Zero(m, 0);
  const std::vector<Complex> poles = canonical_poles(desired);

  Eigen::JacobiSVD<Eigen::MatrixXd> bsvd;
  const int rank = numeric_rank(B, &bsvd);
  if (rank == 0) throw ConfigError("place_poles: B has rank 0");
  for (std::size_t i = 0; i < poles.size(); ++i) {
    int mult = 0;
    for (const auto& q : poles) {
      if (std::abs(q - poles[i]) <= 1e-12 * std::max(1.0, std::abs(q))) ++mult;
    }
    if (mult > rank) {
      std::ostringstream os;
      os << "place_poles: eigenvalue " << poles[i] << " requested " << mult << " times but rank(B) = " << rank;
      throw ConfigError(os.str());
    }
  }

  PlacementReport rep;
  Eigen::MatrixXd K;
  if (rank == n) {
    // Any real matrix with the requested spectrum is reachable.
    rep.closed_form = true;
    K = B.completeOrthogonalDecomposition().solve(block_diagonal(poles) - A);
  } else {
    const Eigen::MatrixXd Vr = bsvd.matrixV().leftCols(rank);
    const Eigen::MatrixXd Bc = bsvd.matrixU().leftCols(rank) * bsvd.singularValues().head(rank).asDiagonal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(Bc);
    const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd U0 = Q.leftCols(rank);
    const Eigen::MatrixXd U1 = Q.rightCols(n - rank);
    const Eigen::MatrixXd Z = qr.matrixQR().topLeftCorner(rank, rank).triangularView<Eigen::Upper>();

    // Slots: a real pole or the first member of a conjugate pair.
    std::vector<int> partner(poles.size(), -1);
    std::vector<bool> seen(poles.size(), false);
    for (std::size_t i = 0; i < poles.size(); ++i) {
      if (seen[i] || poles[i].imag() == 0.0) continue;
      for (std::size_t j = i + 1; j < poles.size(); ++j) {
        if (!seen[j] && poles[j] == std::conj(poles[i])) {
          partner[i] = static_cast<int>(j);
          partner[j] = static_cast<int>(i);
          seen[i] = seen[j] = true;
          break;
        }
      }
    }

    std::vector<Eigen::MatrixXcd> S(poles.size());
    const Eigen::MatrixXcd U1c = U1.cast<Complex>();
    for (std::size_t j = 0; j < poles.size(); ++j) {
      if (poles[j].imag() != 0.0 && partner[j] < static_cast<int>(j)) continue;
      Eigen::MatrixXcd shifted = A.cast<Complex>();
      shifted.diagonal().array() -= poles[j];
      S[j] = null_space(U1c.adjoint() * shifted, n);
      if (S[j].cols() == 0) throw Error("place_poles: empty eigenvector subspace");
    }

    Eigen::MatrixXcd X(n, n);
    for (std::size_t j = 0; j < poles.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      if (poles[j].imag() == 0.0) {
        Eigen::VectorXcd y = Eigen::VectorXcd::Zero(n);
        y(jj % n) = 1.0;
        y += S[j].rowwise().sum() / static_cast<double>(n);
        X.col(jj) = project_real(S[j], y);
      } else if (partner[j] > static_cast<int>(j)) {
        Eigen::VectorXcd x = S[j].rowwise().sum();
        x /= x.norm();
        X.col(jj) = x;
        X.col(partner[j]) = x.conjugate();
      }
    }

    auto det_abs = [&]() { return std::abs(X.partialPivLu().determinant()); };
    double det_prev = det_abs();
    const int max_sweeps = 30;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      for (std::size_t j = 0; j < poles.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const bool pair = poles[j].imag() != 0.0;
        if (pair && partner[j] < static_cast<int>(j)) continue;
        Eigen::MatrixXcd others(n, pair ? n - 2 : n - 1);
        Eigen::Index c = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (i == jj || (pair && i == partner[j])) continue;
          others.col(c++) = X.col(i);
        }
        Eigen::HouseholderQR<Eigen::MatrixXcd> oq(others);
        const Eigen::MatrixXcd Qo = oq.householderQ() * Eigen::MatrixXcd::Identity(n, n);
        if (!pair) {
          X.col(jj) = project_real(S[j], Qo.col(n - 1));
        } else {
          const Complex I(0.0, 1.0);
          Eigen::VectorXcd y = Qo.col(n - 2) + I * Qo.col(n - 1);
          Eigen::VectorXcd x = S[j] * (S[j].adjoint() * y);
          if (x.norm() < 1e-300) x = S[j].col(0);
          x /= x.norm();
          X.col(jj) = x;
          X.col(partner[j]) = x.conjugate();
        }
      }
      rep.iterations = sweep + 1;
      const double d = det_abs();
      if (std::abs(d - det_prev) <= 1e-6 * std::max(d, 1e-300)) break;
      det_prev = d;
    }

    Eigen::VectorXcd lambda(n);
    for (Eigen::Index i = 0; i < n; ++i) lambda(i) = poles[static_cast<std::size_t>(i)];
    const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(X);
    const Eigen::MatrixXcd Mc = (X * lambda.asDiagonal()) * lu.inverse();
    const Eigen::MatrixXd Mr = Mc.real();
    const Eigen::MatrixXd Kc = Z.triangularView<Eigen::Upper>().solve(U0.transpose() * (Mr - A));
    K = Vr * Kc;
  }

  rep.achieved = eigenvalues(A + B * K);
  rep.max_relative_error = spectrum_mismatch(rep.achieved, poles);
  if (report) *report = rep;
  if (!(rep.max_relative_error <= 1e-6)) {
    std::ostringstream os;
    os << "place_poles: achieved spectrum misses the request by " << rep.max_relative_error << " (relative)";
    throw Error(os.str());
  }
  return K;
}

// ---------------------------------------------------------------------------

std::string to_string(GainMethod m) { return m == GainMethod::morris ? "morris" : "gomes"; }

GainMethod parse_gain_method(const std::string& s) {
  if (s == "morris") return GainMethod::morris;
  if (s == "gomes") return GainMethod::gomes;
  throw ConfigError("unknown gain method '" + s + "' (expected morris or gomes)");
}

double inf_x_derivative(const SpectralField& f) {
  const DomainSpec& dom = f.domain();
  SpectralField dx(dom);
  for (int k1 = -(dom.M - 1); k1 < dom.M; ++k1) {
    for (int k2 = -(dom.N - 1); k2 < dom.N; ++k2) dx(k1, k2) = Complex(0.0, dom.kx(k1)) * f(k1, k2);
  }
  DomainSpec fine = dom;
  fine.M = dom.M * std::max(1, std::min(4, 1024 / dom.M));
  fine.N = dom.N * std::max(1, std::min(4, 1024 / dom.N));
  const RealGrid g = to_physical(resample(dx, fine));
  return *std::min_element(g.values.begin(), g.values.end());
}

namespace {

thread_local double g_select_threshold = 0.0;

lapack_logical select_kept(const double* wr, const double* /*wi*/) { return *wr < g_select_threshold; }

}  // namespace

GainMatrix synthesize_gain(GainMethod method, const SpectralField& target, int n, double threshold,
                           const ActuatorSet& actuators, const PhysicsParams& params, const SynthesisOptions& options) {
  if (!(threshold < 0.0)) throw ConfigError("feedback threshold must be negative");
  if (actuators.empty()) throw ConfigError("feedback needs at least one actuator");
  const Truncation trunc(n);
  GainMatrix gain;
  gain.n = n;
  gain.method = method;
  gain.threshold = threshold;
  gain.inf_target_x = inf_x_derivative(target);
  if (method == GainMethod::gomes && !(-threshold + 0.5 * gain.inf_target_x > 0.0)) {
    std::ostringstream os;
    os << "threshold " << threshold << " violates the lambda-stability bound: need -threshold + inf(target_x)/2 > 0, "
       << "inf(target_x) = " << gain.inf_target_x;
    throw ConfigError(os.str());
  }

  const LinearizedSystem sys = linearize(target, trunc, params, actuators, method == GainMethod::morris);
  const int dim = trunc.dim();
  Eigen::MatrixXd Asys = Eigen::MatrixXd(sys.Areal.asDiagonal());
  if (method == GainMethod::morris) Asys += sys.Jreal;

  // Ordered real Schur form: eigenvalues kept in place lead, the ones to be
  // moved trail, A Q = Q T.
  Eigen::MatrixXd T = Asys;
  Eigen::MatrixXd Q(dim, dim);
  std::vector<double> wr(static_cast<std::size_t>(dim)), wi(static_cast<std::size_t>(dim));
  lapack_int sdim = 0;
  g_select_threshold = threshold;
  const lapack_int info = LAPACKE_dgees(LAPACK_COL_MAJOR, 'V', 'S', select_kept, dim, T.data(), dim, &sdim, wr.data(),
                                        wi.data(), Q.data(), dim);
  if (info != 0) throw Error("dgees failed with info " + std::to_string(info));

  std::vector<Complex> open_loop(static_cast<std::size_t>(dim));
  for (std::size_t i = 0; i < open_loop.size(); ++i) open_loop[i] = Complex(wr[i], wi[i]);
  const std::vector<Complex> target_spectrum = desired_spectrum(open_loop, threshold, options.jitter, options.seed);
  gain.placed_spectrum = target_spectrum;

  const Eigen::Index p = dim - sdim;
  gain.moved = static_cast<int>(p);
  const auto nctrl = static_cast<Eigen::Index>(actuators.size());
  gain.K = Eigen::MatrixXd::Zero(nctrl, dim);
  if (p > 0) {
    const Eigen::MatrixXd W = Q.rightCols(p).transpose();
    const Eigen::MatrixXd T22 = T.bottomRightCorner(p, p);
    const Eigen::MatrixXd Bp = W * sys.Breal;
    const std::vector<Complex> moved(target_spectrum.begin() + sdim, target_spectrum.end());
    const Eigen::MatrixXd F = place_poles(T22, Bp, moved);
    gain.K = F * W;
  }

  gain.max_entry = gain.K.cwiseAbs().maxCoeff();
  if (options.verify) {
    gain.achieved_spectrum = eigenvalues(Asys + sys.Breal * gain.K);
  } else {
    const Eigen::MatrixXd closed = T + Q.transpose() * sys.Breal * gain.K * Q;
    gain.achieved_spectrum = eigenvalues(closed);
  }
  gain.max_relative_error = spectrum_mismatch(gain.achieved_spectrum, gain.placed_spectrum);
  if (!(gain.max_relative_error <= 1e-6)) {
    std::ostringstream os;
    os << "closed-loop spectrum misses the request by " << gain.max_relative_error << " (relative)";
    throw Error(os.str());
  }
  if (gain.max_entry > options.max_gain) {
    std::ostringstream os;
    os << "gain rejected: max|K| = " << gain.max_entry << " exceeds the cap " << options.max_gain << " (n = " << n
       << ")";
    throw ConfigError(os.str());
  }
  return gain;
}

void apply_gain(const GainMatrix& gain, const Truncation& trunc, const SpectralField& w, std::span<double> phi) {
  if (trunc.n() != gain.n) throw ShapeError("truncation does not match the gain");
  if (phi.size() != gain.nctrl()) throw ShapeError("amplitude vector has the wrong length");
  const Eigen::VectorXd r = trunc.to_real(w);
  const Eigen::VectorXd out = gain.K * r;
  std::copy(out.data(), out.data() + out.size(), phi.begin());
}

// ---------------------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError(path.string() + ": truncated gain file");
  return v;
}

}  // namespace

void write_gain(const std::filesystem::path& path, const GainMatrix& gain) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write("KS2G", 4);
  put<std::uint32_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(gain.n));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(gain.K.rows()));
  put<std::uint32_t>(out, gain.method == GainMethod::morris ? 0u : 1u);
  put<double>(out, gain.threshold);
  for (Eigen::Index i = 0; i < gain.K.rows(); ++i) {
    for (Eigen::Index j = 0; j < gain.K.cols(); ++j) put<double>(out, gain.K(i, j));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

GainMatrix read_gain(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "KS2G", 4) != 0) throw IoError(path.string() + ": not a gain file");
  if (get<std::uint32_t>(in, path) != 1) throw IoError(path.string() + ": unsupported gain file version");
  GainMatrix g;
  g.n = static_cast<int>(get<std::uint32_t>(in, path));
  const auto rows = static_cast<Eigen::Index>(get<std::uint32_t>(in, path));
  const auto method = get<std::uint32_t>(in, path);
  if (method > 1) throw IoError(path.string() + ": unknown gain method code");
  g.method = method == 0 ? GainMethod::morris : GainMethod::gomes;
  g.threshold = get<double>(in, path);
  const Eigen::Index cols = (2 * g.n + 1) * (2 * g.n + 1);
  g.K.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) g.K(i, j) = get<double>(in, path);
  }
  g.max_entry = rows > 0 ? g.K.cwiseAbs().maxCoeff() : 0.0;
  return g;
}

}  // namespace ks2d
