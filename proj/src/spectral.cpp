#include "ks2d/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <utility>

namespace ks2d {

static_assert(std::endian::native == std::endian::little,
              "snapshot and gain files assume a little-endian host");

void DomainSpec::validate() const {
  if (!(L1 > 0.0) || !(L2 > 0.0) || !std::isfinite(L1) || !std::isfinite(L2)) {
    throw ConfigError("domain lengths must be positive and finite");
  }
  if (M < 2 || N < 2) {
    throw ConfigError("domain resolution requires M >= 2 and N >= 2");
  }
}

SpectralField::SpectralField(const DomainSpec& domain) : domain_(domain) {
  domain_.validate();
  coeffs_.assign(static_cast<std::size_t>(domain_.modes_x()) * domain_.modes_y(), Complex{});
}

void SpectralField::set_pair(int k1, int k2, Complex value) {
  if (!resolves(k1, k2)) {
    throw ShapeError("mode (" + std::to_string(k1) + "," + std::to_string(k2) +
                     ") is not resolved");
  }
  if (k1 == 0 && k2 == 0) {
    (*this)(0, 0) = Complex(value.real(), 0.0);
    return;
  }
  (*this)(k1, k2) = value;
  (*this)(-k1, -k2) = std::conj(value);
}

double SpectralField::symmetry_defect() const {
  double defect = 0.0;
  const int M = domain_.M;
  const int N = domain_.N;
  for (int k1 = 0; k1 < M; ++k1) {
    for (int k2 = -(N - 1); k2 < N; ++k2) {
      if (k1 == 0 && k2 < 0) continue;
      defect = std::max(defect, std::abs((*this)(-k1, -k2) - std::conj((*this)(k1, k2))));
    }
  }
  return defect;
}

void SpectralField::symmetrize() {
  const int M = domain_.M;
  const int N = domain_.N;
  for (int k1 = 0; k1 < M; ++k1) {
    for (int k2 = -(N - 1); k2 < N; ++k2) {
      if (k1 == 0 && k2 < 0) continue;
      if (k1 == 0 && k2 == 0) {
        (*this)(0, 0) = Complex((*this)(0, 0).real(), 0.0);
        continue;
      }
      const Complex avg = 0.5 * ((*this)(k1, k2) + std::conj((*this)(-k1, -k2)));
      (*this)(k1, k2) = avg;
      (*this)(-k1, -k2) = std::conj(avg);
    }
  }
}

void SpectralField::set_zero() { std::fill(coeffs_.begin(), coeffs_.end(), Complex{}); }

void SpectralField::require_same_domain(const SpectralField& other) const {
  if (!(domain_ == other.domain_)) {
    throw ShapeError("fields live on different domains");
  }
}

SpectralField& SpectralField::operator+=(const SpectralField& other) {
  require_same_domain(other);
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += other.coeffs_[i];
  return *this;
}

SpectralField& SpectralField::operator-=(const SpectralField& other) {
  require_same_domain(other);
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= other.coeffs_[i];
  return *this;
}

SpectralField& SpectralField::operator*=(double s) {
  for (auto& c : coeffs_) c *= s;
  return *this;
}

SpectralField& SpectralField::axpy(double s, const SpectralField& other) {
  require_same_domain(other);
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += s * other.coeffs_[i];
  return *this;
}

// ---------------------------------------------------------------------------
// FFT plumbing

namespace {

struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

// FFTW planning is not thread safe; plans are created once per grid shape and
// executed afterwards through the new-array interface, which is.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

PlanPair plans_for(int nx, int ny) {
  static std::map<std::pair<int, int>, PlanPair> cache;
  std::lock_guard lock(plan_mutex());
  auto it = cache.find({nx, ny});
  if (it != cache.end()) return it->second;
  const std::size_t nreal = static_cast<std::size_t>(nx) * ny;
  const std::size_t ncplx = static_cast<std::size_t>(nx) * (ny / 2 + 1);
  double* in = fftw_alloc_real(nreal);
  fftw_complex* out = fftw_alloc_complex(ncplx);
  PlanPair p;
  p.forward = fftw_plan_dft_r2c_2d(nx, ny, in, out, FFTW_ESTIMATE);
  p.inverse = fftw_plan_dft_c2r_2d(nx, ny, out, in, FFTW_ESTIMATE);
  fftw_free(in);
  fftw_free(out);
  cache.emplace(std::make_pair(nx, ny), p);
  return p;
}

}  // namespace

struct FourierTransform::Impl {
  PlanPair plans;
  double* real = nullptr;
  fftw_complex* half = nullptr;

  ~Impl() {
    fftw_free(real);
    fftw_free(half);
  }
};

FourierTransform::FourierTransform(const DomainSpec& domain)
    : domain_(domain), impl_(std::make_unique<Impl>()) {
  domain_.validate();
  const int nx = domain_.grid_x();
  const int ny = domain_.grid_y();
  impl_->plans = plans_for(nx, ny);
  impl_->real = fftw_alloc_real(static_cast<std::size_t>(nx) * ny);
  impl_->half = fftw_alloc_complex(static_cast<std::size_t>(nx) * (ny / 2 + 1));
}

FourierTransform::~FourierTransform() = default;
FourierTransform::FourierTransform(FourierTransform&&) noexcept = default;
FourierTransform& FourierTransform::operator=(FourierTransform&&) noexcept = default;

void FourierTransform::to_physical(const SpectralField& f, std::span<double> out) {
  const int nx = domain_.grid_x();
  const int ny = domain_.grid_y();
  const int hy = ny / 2 + 1;
  if (out.size() != static_cast<std::size_t>(nx) * ny) throw ShapeError("to_physical: bad output size");
  if (!(f.domain() == domain_)) throw ShapeError("to_physical: field/transform domain mismatch");
  fftw_complex* half = impl_->half;
  std::memset(half, 0, sizeof(fftw_complex) * static_cast<std::size_t>(nx) * hy);
  const int M = domain_.M;
  const int N = domain_.N;
  for (int k1 = -(M - 1); k1 < M; ++k1) {
    const int i = (k1 + nx) % nx;
    for (int k2 = 0; k2 < N; ++k2) {
      const Complex c = f(k1, k2);
      half[static_cast<std::size_t>(i) * hy + k2][0] = c.real();
      half[static_cast<std::size_t>(i) * hy + k2][1] = c.imag();
    }
  }
  fftw_execute_dft_c2r(impl_->plans.inverse, half, impl_->real);
  std::copy(impl_->real, impl_->real + out.size(), out.begin());
}

void FourierTransform::to_spectral(std::span<const double> samples, SpectralField& out) {
  const int nx = domain_.grid_x();
  const int ny = domain_.grid_y();
  const int hy = ny / 2 + 1;
  if (samples.size() != static_cast<std::size_t>(nx) * ny) {
    throw ShapeError("to_spectral: expected a " + std::to_string(nx) + "x" + std::to_string(ny) + " grid");
  }
  if (!(out.domain() == domain_)) throw ShapeError("to_spectral: field/transform domain mismatch");
  std::copy(samples.begin(), samples.end(), impl_->real);
  fftw_execute_dft_r2c(impl_->plans.forward, impl_->real, impl_->half);
  const double scale = 1.0 / (static_cast<double>(nx) * ny);
  const fftw_complex* half = impl_->half;
  const int M = domain_.M;
  const int N = domain_.N;
  for (int k1 = -(M - 1); k1 < M; ++k1) {
    const int i = (k1 + nx) % nx;
    const int im = (nx - i) % nx;
    for (int k2 = 0; k2 < N; ++k2) {
      const auto& h = half[static_cast<std::size_t>(i) * hy + k2];
      out(k1, k2) = Complex(h[0] * scale, h[1] * scale);
      if (k2 > 0) {
        // coeff(k1,-k2) = conj(coeff(-k1,k2))
        const auto& hm = half[static_cast<std::size_t>(im) * hy + k2];
        out(k1, -k2) = Complex(hm[0] * scale, -hm[1] * scale);
      }
    }
  }
  // The k2 = 0 column of an r2c transform is symmetric up to rounding only.
  for (int k1 = 1; k1 < M; ++k1) {
    const Complex avg = 0.5 * (out(k1, 0) + std::conj(out(-k1, 0)));
    out(k1, 0) = avg;
    out(-k1, 0) = std::conj(avg);
  }
  out(0, 0) = Complex(out(0, 0).real(), 0.0);
}

// ---------------------------------------------------------------------------

void require_real(const SpectralField& f) {
  double scale = 0.0;
  for (const auto& c : f.coeffs()) scale = std::max(scale, std::abs(c));
  const double defect = f.symmetry_defect();
  if (defect > kSymmetryTolerance * std::max(scale, 1.0)) {
    throw MalformedField("field is not conjugate symmetric (defect " + std::to_string(defect) + ")");
  }
}

RealGrid to_physical(const SpectralField& f) {
  require_real(f);
  FourierTransform fft(f.domain());
  RealGrid grid{f.domain().grid_x(), f.domain().grid_y(), {}};
  grid.values.resize(static_cast<std::size_t>(grid.nx) * grid.ny);
  fft.to_physical(f, grid.values);
  return grid;
}

SpectralField to_spectral(const RealGrid& samples, const DomainSpec& domain) {
  domain.validate();
  if (samples.nx != domain.grid_x() || samples.ny != domain.grid_y() ||
      samples.values.size() != static_cast<std::size_t>(samples.nx) * samples.ny) {
    throw ShapeError("to_spectral: grid shape does not match 2M x 2N");
  }
  FourierTransform fft(domain);
  SpectralField out(domain);
  fft.to_spectral(samples.values, out);
  return out;
}

double l2_norm(const SpectralField& f) {
  double s = 0.0;
  for (const auto& c : f.coeffs()) s += std::norm(c);
  return std::sqrt(s);
}

double mean(const SpectralField& f) { return f(0, 0).real(); }

double evaluate(const SpectralField& f, double x, double y) {
  const auto& d = f.domain();
  const int M = d.M;
  const int N = d.N;
  std::vector<Complex> ey(static_cast<std::size_t>(d.modes_y()));
  for (int k2 = -(N - 1); k2 < N; ++k2) ey[k2 + N - 1] = std::polar(1.0, d.ky(k2) * y);
  Complex sum{};
  double scale = 0.0;
  for (int k1 = -(M - 1); k1 < M; ++k1) {
    Complex row{};
    for (int k2 = -(N - 1); k2 < N; ++k2) {
      row += f(k1, k2) * ey[k2 + N - 1];
      scale += std::abs(f(k1, k2));
    }
    sum += row * std::polar(1.0, d.kx(k1) * x);
  }
  if (std::abs(sum.imag()) > 1e-10 * std::max(scale, 1.0)) {
    throw MalformedField("point evaluation has a non-negligible imaginary part");
  }
  return sum.real();
}

SpectralField resample(const SpectralField& f, const DomainSpec& target) {
  SpectralField out(target);
  const int M = std::min(f.domain().M, target.M);
  const int N = std::min(f.domain().N, target.N);
  for (int k1 = -(M - 1); k1 < M; ++k1) {
    for (int k2 = -(N - 1); k2 < N; ++k2) out(k1, k2) = f(k1, k2);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Snapshot files

namespace {

constexpr char kSnapshotMagic[4] = {'K', 'S', '2', 'D'};
constexpr std::uint32_t kSnapshotVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("snapshot: unexpected end of file");
  return v;
}

}  // namespace

void write_snapshot(const std::filesystem::path& path, const SpectralField& f) {
  const RealGrid grid = to_physical(f);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kSnapshotMagic, 4);
  put<std::uint32_t>(os, kSnapshotVersion);
  put<double>(os, f.domain().L1);
  put<double>(os, f.domain().L2);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(f.domain().M));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(f.domain().N));
  os.write(reinterpret_cast<const char*>(grid.values.data()),
           static_cast<std::streamsize>(grid.values.size() * sizeof(double)));
  if (!os) throw IoError("failed writing " + path.string());
}

SpectralField read_snapshot(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kSnapshotMagic, 4) != 0) throw IoError(path.string() + " is not a KS2D snapshot");
  const auto version = get<std::uint32_t>(is);
  if (version != kSnapshotVersion) throw IoError("unsupported snapshot version " + std::to_string(version));
  DomainSpec d;
  d.L1 = get<double>(is);
  d.L2 = get<double>(is);
  d.M = static_cast<int>(get<std::uint32_t>(is));
  d.N = static_cast<int>(get<std::uint32_t>(is));
  d.validate();
  RealGrid grid{d.grid_x(), d.grid_y(), {}};
  grid.values.resize(static_cast<std::size_t>(grid.nx) * grid.ny);
  is.read(reinterpret_cast<char*>(grid.values.data()),
          static_cast<std::streamsize>(grid.values.size() * sizeof(double)));
  if (!is) throw IoError("snapshot " + path.string() + " is truncated");
  return to_spectral(grid, d);
}

}  // namespace ks2d
