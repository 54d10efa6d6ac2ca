#include "ks2d/reference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <Eigen/Dense>

namespace ks2d {

double Profile::kx(int k) const { return 2.0 * std::numbers::pi * k / L1; }

double Profile::value(double x) const {
  double v = coeffs.empty() ? 0.0 : coeffs[0].real();
  for (int k = 1; k <= modes(); ++k) {
    v += 2.0 * (coeffs[static_cast<std::size_t>(k)] * std::polar(1.0, kx(k) * x)).real();
  }
  return v;
}

double Profile::inf_derivative() const {
  // Dense sampling, then a few Newton steps on P'' = 0 around the minimum.
  const int samples = 8192;
  auto deriv = [&](double x, int order) {
    double v = 0.0;
    for (int k = 1; k <= modes(); ++k) {
      const Complex ik(0.0, kx(k));
      Complex f = coeffs[static_cast<std::size_t>(k)] * std::polar(1.0, kx(k) * x);
      for (int o = 0; o < order; ++o) f *= ik;
      v += 2.0 * f.real();
    }
    return v;
  };
  double best_x = 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < samples; ++i) {
    const double x = L1 * i / samples;
    const double v = deriv(x, 1);
    if (v < best) {
      best = v;
      best_x = x;
    }
  }
  double x = best_x;
  for (int it = 0; it < 20; ++it) {
    const double d3 = deriv(x, 3);
    if (d3 == 0.0) break;
    const double step = deriv(x, 2) / d3;
    if (std::abs(step) > L1 / samples) break;
    x -= step;
    if (std::abs(step) < 1e-15 * L1) break;
  }
  return std::min(best, deriv(x, 1));
}

namespace {

Complex coeff(const std::vector<Complex>& c, int k) {
  const int m = static_cast<int>(c.size()) - 1;
  if (k > m || k < -m) return {};
  return k >= 0 ? c[static_cast<std::size_t>(k)] : std::conj(c[static_cast<std::size_t>(-k)]);
}

Complex square_coeff(const std::vector<Complex>& c, int k) {
  const int m = static_cast<int>(c.size()) - 1;
  Complex s{};
  for (int l = std::max(-m, k - m); l <= std::min(m, k + m); ++l) s += coeff(c, l) * coeff(c, k - l);
  return s;
}

double linear_part(const Profile& p, int k) {
  const double q = p.kx(k);
  return (1.0 - p.kappa) * q * q - q * q * q * q;
}

Eigen::VectorXd real_residual(const Profile& p) {
  const int m = p.modes();
  Eigen::VectorXd r(2 * m);
  const auto res = wave_residual(p);
  for (int k = 1; k <= m; ++k) {
    r(2 * (k - 1)) = res[static_cast<std::size_t>(k - 1)].real();
    r(2 * (k - 1) + 1) = res[static_cast<std::size_t>(k - 1)].imag();
  }
  return r;
}

// Columns: a_1, a_2, b_2, a_3, b_3, ..., a_m, b_m, then c when travelling.
Eigen::MatrixXd jacobian(const Profile& p, bool travelling) {
  const int m = p.modes();
  const int cols = 2 * m - 1 + (travelling ? 1 : 0);
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * m, cols);
  const Complex I(0.0, 1.0);
  auto column = [](int l, bool sine) { return sine ? 2 * (l - 1) : (l == 1 ? 0 : 2 * (l - 1) - 1); };
  for (int k = 1; k <= m; ++k) {
    const double q = p.kx(k);
    const Complex lin = I * q * p.speed + linear_part(p, k);
    for (int l = 1; l <= m; ++l) {
      const Complex lo = coeff(p.coeffs, k - l);
      const Complex hi = coeff(p.coeffs, k + l);
      Complex da = -(I * q / 2.0) * (lo + hi);
      Complex db = -(I * q / 2.0) * (-I * lo + I * hi);
      if (k == l) {
        da += lin / 2.0;
        db += -I * lin / 2.0;
      }
      const int ca = column(l, false);
      J(2 * (k - 1), ca) = da.real();
      J(2 * (k - 1) + 1, ca) = da.imag();
      if (l > 1) {
        const int cb = column(l, true);
        J(2 * (k - 1), cb) = db.real();
        J(2 * (k - 1) + 1, cb) = db.imag();
      }
    }
    if (travelling) {
      const Complex dc = I * q * p.coeffs[static_cast<std::size_t>(k)];
      J(2 * (k - 1), cols - 1) = dc.real();
      J(2 * (k - 1) + 1, cols - 1) = dc.imag();
    }
  }
  return J;
}

void apply_update(Profile& p, const Eigen::VectorXd& delta, double step, bool travelling) {
  const int m = p.modes();
  for (int l = 1; l <= m; ++l) {
    Complex& c = p.coeffs[static_cast<std::size_t>(l)];
    double a = 2.0 * c.real();
    double b = -2.0 * c.imag();
    a += step * delta(l == 1 ? 0 : 2 * (l - 1) - 1);
    if (l > 1) b += step * delta(2 * (l - 1));
    c = Complex(0.5 * a, -0.5 * b);
  }
  if (travelling) p.speed += step * delta(delta.size() - 1);
}

Profile newton(const WaveProblem& problem, Profile p, bool travelling, NewtonReport* report) {
  if (problem.modes < 2) throw ConfigError("wave truncation must be at least 2 modes");
  p.kappa = problem.kappa;
  p.L1 = problem.L1;
  p.coeffs.resize(static_cast<std::size_t>(problem.modes) + 1);
  p.coeffs[0] = 0.0;
  if (!travelling) p.speed = 0.0;
  // Phase condition: Im P_1 = 0 (rotate the guess accordingly).
  if (std::abs(p.coeffs[1]) > 0.0) {
    const double theta = std::arg(p.coeffs[1]);
    p = shift_profile(p, theta / p.kx(1));
  }
  p.coeffs[1] = Complex(p.coeffs[1].real(), 0.0);

  NewtonReport rep;
  double r = real_residual(p).norm();
  rep.residuals.push_back(r);
  for (int it = 0; it < problem.max_iterations; ++it) {
    if (!std::isfinite(r)) break;
    if (r < problem.tolerance) {
      rep.converged = true;
      break;
    }
    const Eigen::MatrixXd J = jacobian(p, travelling);
    const Eigen::VectorXd delta = J.completeOrthogonalDecomposition().solve(-real_residual(p));
    double step = 1.0;
    Profile trial = p;
    double rt = r;
    for (int h = 0; h < 30; ++h) {
      trial = p;
      apply_update(trial, delta, step, travelling);
      rt = real_residual(trial).norm();
      if (rt < r) break;
      step *= 0.5;
    }
    rep.iterations = it + 1;
    if (!(rt < r)) {
      // No decrease: accept the floor when it is already tiny.
      rep.converged = r < 1e-10;
      break;
    }
    p = std::move(trial);
    r = rt;
    rep.residuals.push_back(r);
  }
  if (!rep.converged && r < problem.tolerance) rep.converged = true;
  if (report) *report = rep;
  if (!rep.converged) {
    std::ostringstream os;
    os << "Newton iteration did not converge (residual " << r << " after " << rep.iterations << " iterations)";
    throw Error(os.str());
  }
  return p;
}

double profile_norm(const Profile& p) {
  double s = 0.0;
  for (const auto& c : p.coeffs) s += std::norm(c);
  return std::sqrt(2.0 * s);
}

bool same_branch(const Profile& a, const Profile& b) {
  if (std::abs(std::abs(a.speed) - std::abs(b.speed)) > 1e-6) return false;
  for (std::size_t k = 0; k < std::min(a.coeffs.size(), b.coeffs.size()); ++k) {
    if (std::abs(std::abs(a.coeffs[k]) - std::abs(b.coeffs[k])) > 1e-7) return false;
  }
  return true;
}

}  // namespace

std::vector<Complex> wave_residual(const Profile& p) {
  const int m = p.modes();
  std::vector<Complex> r(static_cast<std::size_t>(std::max(m, 0)));
  const Complex I(0.0, 1.0);
  for (int k = 1; k <= m; ++k) {
    const double q = p.kx(k);
    const Complex pk = p.coeffs[static_cast<std::size_t>(k)];
    r[static_cast<std::size_t>(k - 1)] =
        I * q * p.speed * pk - (I * q / 2.0) * square_coeff(p.coeffs, k) + linear_part(p, k) * pk;
  }
  return r;
}

double wave_residual_norm(const Profile& p) { return real_residual(p).norm(); }

Profile solve_steady_1d(const WaveProblem& problem, const Profile& guess, NewtonReport* report) {
  return newton(problem, guess, false, report);
}

Profile solve_travelling_1d(const WaveProblem& problem, const Profile& guess, NewtonReport* report) {
  Profile p = newton(problem, guess, true, report);
  return p;
}

Profile shift_profile(const Profile& p, double s) {
  Profile q = p;
  for (int k = 1; k <= q.modes(); ++k) q.coeffs[static_cast<std::size_t>(k)] *= std::polar(1.0, -q.kx(k) * s);
  return q;
}

std::vector<Profile> search_waves(const WaveProblem& problem, bool travelling) {
  Profile base;
  base.kappa = problem.kappa;
  base.L1 = problem.L1;
  base.coeffs.assign(static_cast<std::size_t>(problem.modes) + 1, Complex{});

  std::vector<std::pair<double, int>> unstable;
  for (int k = 1; k <= problem.modes; ++k) {
    const double s = linear_part(base, k);
    if (s > 0.0) unstable.emplace_back(-s, k);
  }
  std::sort(unstable.begin(), unstable.end());

  std::vector<Profile> found;
  auto keep = [&](Profile p) {
    if (profile_norm(p) < 1e-6) return;
    if (travelling) {
      if (std::abs(p.speed) < 1e-6) return;
      if (p.speed < 0.0) {
        // x -> -x, eta -> -eta maps speed c to -c.
        for (auto& c : p.coeffs) c = -std::conj(c);
        p.speed = -p.speed;
        p = newton(problem, p, true, nullptr);
      }
    }
    for (const auto& q : found) {
      if (same_branch(p, q)) return;
    }
    found.push_back(std::move(p));
  };

  const double amplitudes[] = {0.25, 0.5, 1.0, 2.0, 4.0};
  if (!travelling) {
    for (const auto& [neg, k] : unstable) {
      for (double a : amplitudes) {
        Profile g = base;
        g.coeffs[static_cast<std::size_t>(k)] = a / 2.0;
        try {
          keep(newton(problem, g, false, nullptr));
        } catch (const Error&) {
        }
      }
    }
    return found;
  }

  const double speeds[] = {0.5, 1.0, 1.5, 2.0};
  for (const auto& [neg1, k1] : unstable) {
    for (const auto& [neg2, k2] : unstable) {
      if (k1 == k2) continue;
      for (double a : amplitudes) {
        for (double c : speeds) {
          Profile g = base;
          g.coeffs[static_cast<std::size_t>(k1)] = a / 2.0;
          g.coeffs[static_cast<std::size_t>(k2)] += Complex(0.0, -a / 4.0);
          g.speed = c;
          try {
            keep(newton(problem, g, true, nullptr));
          } catch (const Error&) {
          }
        }
      }
    }
  }
  return found;
}

SpectralField extend_to_2d(const Profile& p, const DomainSpec& domain) {
  if (std::abs(p.L1 - domain.L1) > 1e-12 * domain.L1) throw ShapeError("profile period differs from L1");
  SpectralField f(domain);
  for (int k = 1; k <= p.modes(); ++k) {
    const Complex c = p.coeffs[static_cast<std::size_t>(k)];
    if (k < domain.M) {
      f.set_pair(k, 0, c);
    } else if (std::abs(c) > 1e-12) {
      throw ShapeError("profile mode " + std::to_string(k) + " is not resolved by M = " + std::to_string(domain.M));
    }
  }
  return f;
}

TargetState zero_target(const DomainSpec& domain) {
  TargetState t;
  t.kind = TargetState::Kind::zero;
  t.field = SpectralField(domain);
  return t;
}

TargetState profile_target(const Profile& p, const DomainSpec& domain) {
  TargetState t;
  t.kind = p.speed == 0.0 ? TargetState::Kind::steady : TargetState::Kind::travelling;
  t.field = extend_to_2d(p, domain);
  t.speed = p.speed;
  return t;
}

SpectralField advance_target(const TargetState& target, double t) {
  switch (target.kind) {
    case TargetState::Kind::zero:
    case TargetState::Kind::steady:
      return target.field;
    case TargetState::Kind::travelling: {
      SpectralField f = target.field;
      const DomainSpec& dom = f.domain();
      for (int k1 = -(dom.M - 1); k1 < dom.M; ++k1) {
        const Complex phase = std::polar(1.0, -dom.kx(k1) * target.speed * t);
        for (int k2 = -(dom.N - 1); k2 < dom.N; ++k2) f(k1, k2) *= phase;
      }
      return f;
    }
    case TargetState::Kind::orbit:
      break;
  }
  throw ConfigError("orbit targets are advanced by co-integration, not analytically");
}

void write_profile(const std::filesystem::path& path, const Profile& p) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  out << "# kappa=" << p.kappa << ",L1=" << p.L1 << ",c=" << p.speed << "\n";
  out << "k,re,im\n";
  for (int k = 0; k <= p.modes(); ++k) {
    out << k << ',' << p.coeffs[static_cast<std::size_t>(k)].real() << ',' << p.coeffs[static_cast<std::size_t>(k)].imag()
        << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Profile read_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Profile p;
  std::string line;
  bool header = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (std::sscanf(line.c_str(), "# kappa=%lf,L1=%lf,c=%lf", &p.kappa, &p.L1, &p.speed) == 3) header = true;
      continue;
    }
    if (line.rfind("k,", 0) == 0) continue;
    std::istringstream is(line);
    int k = 0;
    double re = 0.0, im = 0.0;
    char c1 = 0, c2 = 0;
    if (!(is >> k >> c1 >> re >> c2 >> im) || c1 != ',' || c2 != ',') {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 'k,re,im'");
    }
    if (k != static_cast<int>(p.coeffs.size())) throw IoError(path.string() + ": modes must be listed in order from 0");
    p.coeffs.emplace_back(re, im);
  }
  if (!header) throw IoError(path.string() + ": missing '# kappa=..,L1=..,c=..' header");
  if (!(p.L1 > 0.0)) throw IoError(path.string() + ": L1 must be positive");
  return p;
}

}  // namespace ks2d
