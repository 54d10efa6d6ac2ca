#include "ks2d/actuation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "ks2d/random.hpp"

namespace ks2d {

namespace {

bool is_multiple(double length, double d, int& count) {
  if (!(d > 0.0)) return false;
  const double ratio = length / d;
  count = static_cast<int>(std::lround(ratio));
  return count >= 1 && std::abs(ratio - count) < 1e-9 * std::max(1.0, ratio);
}

double wrap(double v, double length) {
  double w = std::fmod(v, length);
  if (w < 0.0) w += length;
  if (w >= length) w -= length;
  return w;
}

double periodic_delta(double d, double length) { return d - length * std::round(d / length); }

// Reflects s into [-h, h].
double reflect(double s, double h) {
  const double period = 4.0 * h;
  double u = std::fmod(s + h, period);
  if (u < 0.0) u += period;
  if (u > 2.0 * h) u = period - u;
  return u - h;
}

}  // namespace

ActuatorSet::ActuatorSet(const DomainSpec& domain, std::vector<Point> points)
    : domain_(domain), points_(std::move(points)) {
  domain_.validate();
  std::set<std::pair<double, double>> seen;
  for (const auto& p : points_) {
    if (!(p.x >= 0.0 && p.x < domain_.L1 && p.y >= 0.0 && p.y < domain_.L2)) {
      std::ostringstream os;
      os << "actuator (" << p.x << ", " << p.y << ") lies outside [0," << domain_.L1 << ")x[0," << domain_.L2 << ")";
      throw ConfigError(os.str());
    }
    if (!seen.emplace(p.x, p.y).second) {
      std::ostringstream os;
      os << "duplicate actuator at (" << p.x << ", " << p.y << ")";
      throw ConfigError(os.str());
    }
  }
}

ActuatorSet ActuatorSet::prefix(std::size_t count) const {
  if (count > points_.size()) {
    throw ConfigError("requested " + std::to_string(count) + " actuators from a set of " +
                      std::to_string(points_.size()));
  }
  return ActuatorSet(domain_, std::vector<Point>(points_.begin(), points_.begin() + static_cast<std::ptrdiff_t>(count)));
}

ActuatorSet grid_equidistant(const DomainSpec& domain, double d1, double d2) {
  domain.validate();
  int n1 = 0, n2 = 0;
  if (!is_multiple(domain.L1, d1, n1) || !is_multiple(domain.L2, d2, n2)) {
    std::ostringstream os;
    os << "equidistant spacing (" << d1 << ", " << d2 << ") does not divide (" << domain.L1 << ", " << domain.L2 << ")";
    throw ConfigError(os.str());
  }
  std::vector<Point> pts;
  pts.reserve(static_cast<std::size_t>(n1) * n2);
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) pts.push_back({i * domain.L1 / n1, j * domain.L2 / n2});
  }
  return ActuatorSet(domain, std::move(pts));
}

ActuatorSet grid_perturbed(const DomainSpec& domain, double d1, double d2, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ConfigError("perturbation sigma must be nonnegative");
  const ActuatorSet base = grid_equidistant(domain, d1, d2);
  if (sigma == 0.0) return base;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  std::vector<Point> pts;
  pts.reserve(base.size());
  for (const auto& p : base.points()) {
    const double sx = reflect(normal(rng), 0.5 * d1);
    const double sy = reflect(normal(rng), 0.5 * d2);
    pts.push_back({wrap(p.x + sx, domain.L1), wrap(p.y + sy, domain.L2)});
  }
  return ActuatorSet(domain, std::move(pts));
}

ActuatorSet grid_random(const DomainSpec& domain, std::size_t n, std::uint64_t seed) {
  domain.validate();
  Rng rng(seed);
  std::set<std::pair<double, double>> seen;
  std::vector<Point> pts;
  pts.reserve(n);
  while (pts.size() < n) {
    const double x = uniform_open(rng, 0.0, domain.L1);
    const double y = uniform_open(rng, 0.0, domain.L2);
    if (seen.emplace(x, y).second) pts.push_back({x, y});
  }
  return ActuatorSet(domain, std::move(pts));
}

double radical_inverse(std::uint64_t index, unsigned base) {
  double result = 0.0;
  double f = 1.0 / base;
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= base;
  }
  return result;
}

ActuatorSet grid_halton(const DomainSpec& domain, std::size_t n, std::uint64_t start) {
  domain.validate();
  std::vector<Point> pts;
  pts.reserve(n);
  for (std::uint64_t i = start; i < start + n; ++i) {
    pts.push_back({domain.L1 * radical_inverse(i, 2), domain.L2 * radical_inverse(i, 3)});
  }
  return ActuatorSet(domain, std::move(pts));
}

// ---------------------------------------------------------------------------

ActuatorSpectrum::ActuatorSpectrum(const ActuatorSet& set, const DomainSpec& field_domain)
    : set_(set), domain_(field_domain) {
  domain_.validate();
  if (!(set.domain().L1 == domain_.L1 && set.domain().L2 == domain_.L2)) {
    throw ShapeError("actuator set and field live on different domains");
  }
  const auto n = static_cast<Eigen::Index>(set_.size());
  const int mx = domain_.modes_x();
  const int my = domain_.modes_y();
  ex_.resize(n, mx);
  ey_.resize(n, my);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Point& p = set_[static_cast<std::size_t>(j)];
    for (int k1 = -(domain_.M - 1); k1 < domain_.M; ++k1) {
      const double ph = domain_.kx(k1) * p.x;
      ex_(j, k1 + domain_.M - 1) = Complex(std::cos(ph), -std::sin(ph));
    }
    for (int k2 = -(domain_.N - 1); k2 < domain_.N; ++k2) {
      const double ph = domain_.ky(k2) * p.y;
      ey_(j, k2 + domain_.N - 1) = Complex(std::cos(ph), -std::sin(ph));
    }
  }
  on_grid_ = true;
  node_.clear();
  for (const auto& p : set_.points()) {
    const double fi = p.x / domain_.dx();
    const double fj = p.y / domain_.dy();
    const double ri = std::round(fi);
    const double rj = std::round(fj);
    if (std::abs(fi - ri) > 1e-12 * std::max(1.0, fi) || std::abs(fj - rj) > 1e-12 * std::max(1.0, fj)) {
      on_grid_ = false;
      node_.clear();
      break;
    }
    const auto i = static_cast<std::size_t>(ri) % static_cast<std::size_t>(domain_.grid_x());
    const auto jj = static_cast<std::size_t>(rj) % static_cast<std::size_t>(domain_.grid_y());
    node_.push_back(i * static_cast<std::size_t>(domain_.grid_y()) + jj);
  }
  use_grid_path_ = on_grid_;
}

FourierTransform& ActuatorSpectrum::transform() {
  if (!fft_.ptr) fft_.ptr = std::make_unique<FourierTransform>(domain_);
  return *fft_.ptr;
}

Complex ActuatorSpectrum::entry(int k1, int k2, std::size_t j) const {
  const auto jj = static_cast<Eigen::Index>(j);
  return ex_(jj, k1 + domain_.M - 1) * ey_(jj, k2 + domain_.N - 1) / domain_.area();
}

void ActuatorSpectrum::observe(const SpectralField& f, std::span<double> out) {
  if (!(f.domain() == domain_)) throw ShapeError("observed field domain differs from the actuator spectrum domain");
  if (out.size() != set_.size()) throw ShapeError("observation buffer has the wrong length");
  if (set_.empty()) return;
  if (use_grid_path_) {
    samples_.resize(static_cast<std::size_t>(domain_.grid_x()) * domain_.grid_y());
    transform().to_physical(f, samples_);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = samples_[node_[j]];
    return;
  }
  const int M = domain_.M;
  const int my = domain_.modes_y();
  double scale = 0.0;
  for (const auto& c : f.coeffs()) scale += std::abs(c);
  if (f.symmetry_defect() > 1e-10 * std::max(scale, 1e-300)) {
    throw MalformedField("observed field is not the transform of a real field");
  }
  // Eigen's kernels round differently depending on the alignment of mapped
  // memory, so fields pass through an owned buffer to keep runs reproducible.
  // The field is real, so the k1 >= 0 half determines every value.
  field_ = Eigen::Map<const RowMajorC>(f.coeffs().data() + static_cast<std::size_t>(M - 1) * my, M, my);
  // eta(x_j) = Re[ sum_k1>=0 c(k1) conj(ex)(j,k1) sum_k2 w(k1,k2) conj(ey)(j,k2) ], c = 1 or 2
  work_.noalias() = field_ * ey_.conjugate().transpose();
  const auto ex = ex_.rightCols(M);
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(out.size()); ++j) {
    const Complex rest = ex.row(j).tail(M - 1).transpose().dot(work_.col(j).tail(M - 1));
    out[static_cast<std::size_t>(j)] = (std::conj(ex(j, 0)) * work_(0, j)).real() + 2.0 * rest.real();
  }
}

void ActuatorSpectrum::assemble(std::span<const double> phi, SpectralField& zeta) {
  if (!(zeta.domain() == domain_)) throw ShapeError("forcing field domain differs from the actuator spectrum domain");
  if (phi.size() != set_.size()) throw ShapeError("amplitude vector has the wrong length");
  if (set_.empty()) {
    zeta.set_zero();
    return;
  }
  if (use_grid_path_) {
    samples_.assign(static_cast<std::size_t>(domain_.grid_x()) * domain_.grid_y(), 0.0);
    // A spike of height phi/(dx dy) at a node has coefficients phi e^{-ik.x}/|Q|
    // on every resolved mode.
    const double cell = domain_.dx() * domain_.dy();
    for (std::size_t j = 0; j < phi.size(); ++j) samples_[node_[j]] += phi[j] / cell;
    transform().to_spectral(samples_, zeta);
    return;
  }
  const int M = domain_.M;
  const int N = domain_.N;
  const int my = domain_.modes_y();
  const Eigen::VectorXd p = Eigen::Map<const Eigen::VectorXd>(phi.data(), static_cast<Eigen::Index>(phi.size()));
  const Eigen::MatrixXcd weighted = p.cast<Complex>().asDiagonal() * ey_;
  // Rows k1 >= 0; the rest follow from conjugate symmetry.
  field_.noalias() = ex_.rightCols(M).transpose() * weighted;
  field_ /= domain_.area();
  Eigen::Map<RowMajorC>(zeta.coeffs().data() + static_cast<std::size_t>(M - 1) * my, M, my) = field_;
  for (int k1 = 1; k1 < M; ++k1) {
    for (int k2 = -(N - 1); k2 < N; ++k2) zeta(-k1, -k2) = std::conj(zeta(k1, k2));
  }
  zeta.symmetrize();
}

// ---------------------------------------------------------------------------

double equidistant_A1(double d1, double d2) {
  const double d = std::min(d1, d2);
  return std::numbers::pi * d * d;
}
double equidistant_A2(double d1, double d2) { return d1 * d2; }
double equidistant_A3(double d1, double d2) { return std::numbers::pi * (d1 * d1 + d2 * d2) / 4.0; }

namespace {

using Polygon = std::vector<Point>;

// Keeps the part of poly with (z - m).n <= 0.
Polygon clip(const Polygon& poly, Point m, Point n) {
  Polygon out;
  out.reserve(poly.size() + 1);
  const auto side = [&](const Point& z) { return (z.x - m.x) * n.x + (z.y - m.y) * n.y; };
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % poly.size()];
    const double sa = side(a);
    const double sb = side(b);
    if (sa <= 0.0) out.push_back(a);
    if ((sa < 0.0 && sb > 0.0) || (sa > 0.0 && sb < 0.0)) {
      const double t = sa / (sa - sb);
      out.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
    }
  }
  return out;
}

double polygon_area(const Polygon& poly) {
  double s = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % poly.size()];
    s += a.x * b.y - b.x * a.y;
  }
  return 0.5 * std::abs(s);
}

}  // namespace

SpacingReport spacing_areas(const ActuatorSet& set) {
  if (set.size() < 2) throw ConfigError("spacing areas need at least 2 actuators");
  const DomainSpec& dom = set.domain();
  const double L1 = dom.L1;
  const double L2 = dom.L2;
  const double diag = std::hypot(L1, L2);
  const int r1 = static_cast<int>(std::ceil(diag / L1));
  const int r2 = static_cast<int>(std::ceil(diag / L2));
  const auto& pts = set.points();

  SpacingReport rep;
  rep.cell_areas.resize(pts.size());
  double nn_max = 0.0;
  double empty_max = 0.0;
  double cell_max = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Point p = pts[i];
    Polygon cell{{p.x - L1 / 2, p.y - L2 / 2}, {p.x + L1 / 2, p.y - L2 / 2},
                 {p.x + L1 / 2, p.y + L2 / 2}, {p.x - L1 / 2, p.y + L2 / 2}};
    double nn = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j == i) continue;
      const double dx0 = periodic_delta(pts[j].x - p.x, L1);
      const double dy0 = periodic_delta(pts[j].y - p.y, L2);
      nn = std::min(nn, std::hypot(dx0, dy0));
      for (int a = -r1; a <= r1; ++a) {
        for (int b = -r2; b <= r2; ++b) {
          const double dx = dx0 + a * L1;
          const double dy = dy0 + b * L2;
          if (std::hypot(dx, dy) >= diag) continue;
          cell = clip(cell, {p.x + dx / 2, p.y + dy / 2}, {dx, dy});
        }
      }
    }
    const double area = polygon_area(cell);
    rep.cell_areas[i] = area;
    cell_max = std::max(cell_max, area);
    nn_max = std::max(nn_max, nn);
    for (const auto& v : cell) empty_max = std::max(empty_max, (v.x - p.x) * (v.x - p.x) + (v.y - p.y) * (v.y - p.y));
  }
  rep.A1 = std::numbers::pi * nn_max * nn_max;
  rep.A2 = cell_max;
  rep.A3 = std::numbers::pi * empty_max;
  const double d = std::sqrt(dom.area() / static_cast<double>(pts.size()));
  rep.A1E = equidistant_A1(d, d);
  rep.A2E = equidistant_A2(d, d);
  rep.A3E = equidistant_A3(d, d);
  return rep;
}

// ---------------------------------------------------------------------------

void write_actuators(const std::filesystem::path& path, const ActuatorSet& set) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  out << "# L1=" << set.domain().L1 << ",L2=" << set.domain().L2 << "\n";
  out << "x,y\n";
  for (const auto& p : set.points()) out << p.x << ',' << p.y << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

ActuatorSet read_actuators(const std::filesystem::path& path, const DomainSpec& domain) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::vector<Point> pts;
  int lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      double l1 = 0.0, l2 = 0.0;
      if (std::sscanf(line.c_str(), "# L1=%lf,L2=%lf", &l1, &l2) == 2) {
        if (std::abs(l1 - domain.L1) > 1e-12 * domain.L1 || std::abs(l2 - domain.L2) > 1e-12 * domain.L2) {
          throw ConfigError(path.string() + ": actuator file domain does not match the run domain");
        }
      }
      continue;
    }
    if (!header_seen && line.rfind("x,y", 0) == 0) {
      header_seen = true;
      continue;
    }
    std::istringstream is(line);
    Point p;
    char comma = 0;
    if (!(is >> p.x >> comma >> p.y) || comma != ',') {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 'x,y'");
    }
    pts.push_back(p);
  }
  return ActuatorSet(domain, std::move(pts));
}

}  // namespace ks2d
