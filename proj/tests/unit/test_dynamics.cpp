#include <algorithm>
#include <cmath>
#include <numbers>

#include <doctest.h>

#include "helpers.hpp"
#include "ks2d/dynamics.hpp"

using namespace ks2d;
using std::numbers::pi;

namespace {

// -(i kx / 2) sum_m eta_{k-m} eta_m over resolved modes.
SpectralField convolution_oracle(const SpectralField& eta) {
  const DomainSpec& d = eta.domain();
  SpectralField out(d);
  for (int k1 = -(d.M - 1); k1 < d.M; ++k1) {
    for (int k2 = -(d.N - 1); k2 < d.N; ++k2) {
      Complex s = 0;
      for (int m1 = -(d.M - 1); m1 < d.M; ++m1) {
        for (int m2 = -(d.N - 1); m2 < d.N; ++m2) s += eta.at(k1 - m1, k2 - m2) * eta(m1, m2);
      }
      out(k1, k2) = -Complex(0, d.kx(k1) / 2) * s;
    }
  }
  return out;
}

double max_diff(const SpectralField& a, const SpectralField& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.coeffs().size(); ++i) m = std::max(m, std::abs(a.coeffs()[i] - b.coeffs()[i]));
  return m;
}

SpectralField integrate(const SpectralField& u0, const PhysicsParams& p, IntegratorConfig cfg, double T) {
  KseStepper stepper(u0.domain(), p, cfg);
  SimState s = stepper.bootstrap(u0, 0.0);
  const long n = std::lround(T / cfg.dt);
  while (s.steps < n) stepper.step(s);
  return s.current()[0];
}

}  // namespace

TEST_CASE("dispersion examples") {
  const DomainSpec d{18.0, 18.0, 8, 8};
  CHECK(dispersion(WaveVector::of(d, 0, 0), {-0.5}, 0.0) == 0.0);
  const double q = 2 * pi / 18;
  CHECK(dispersion(WaveVector::of(d, 1, 0), {-0.5}, 0.0) == doctest::Approx(1.5 * q * q - std::pow(q, 4)));
  CHECK(dispersion(WaveVector::of(d, 1, 0), {-0.5}, 0.0) == doctest::Approx(0.16792).epsilon(1e-4));
  CHECK(dispersion(WaveVector::of(d, 2, 3), {0.25}, 0.7) ==
        doctest::Approx(linear_symbol(WaveVector::of(d, 2, 3), {0.25}) - 0.7));

  // Continuous maximum over kx with ky = 0: golden-section search.
  auto s = [](double k) { return 0.75 * k * k - k * k * k * k; };
  double a = 0, b = 2;
  for (int i = 0; i < 200; ++i) {
    const double c = b - (b - a) * 0.618, e = a + (b - a) * 0.618;
    (s(c) > s(e) ? b : a) = (s(c) > s(e) ? e : c);
  }
  CHECK(s(a) == doctest::Approx(0.140625).epsilon(1e-10));
  WaveVector k{0, 0, a, 0.0};
  CHECK(linear_symbol(k, {0.25}) == doctest::Approx(0.140625).epsilon(1e-10));
}

TEST_CASE("unstable mode counts") {
  CHECK(count_unstable_modes(DomainSpec{18.0, 18.0, 16, 16}, {-0.5}) == 30);
  CHECK(count_unstable_modes(DomainSpec{45.0, 45.0, 32, 32}, {0.25}) == 52);
  CHECK(count_unstable_modes(DomainSpec{45.0, 45.0, 32, 32}, {2.0}) == 0);
  CHECK(count_unstable_modes(DomainSpec{7.0, 3.0, 8, 8}, {2.0}) == 0);
}

TEST_CASE("nonlinear term") {
  const DomainSpec d{9.0, 7.0, 5, 5};
  CHECK(max_diff(nonlinear_term(SpectralField(d)), SpectralField(d)) == 0.0);

  SpectralField fy(d);
  fy.set_pair(0, 1, {0.3, -0.2});
  fy.set_pair(0, 3, 0.7);
  CHECK(max_diff(nonlinear_term(fy), SpectralField(d)) < 1e-15);

  SpectralField c(d);
  c.set_pair(1, 0, 0.5);
  CHECK(max_diff(nonlinear_term(c), convolution_oracle(c)) < 1e-14);

  // Modes up to (M-1)/2 keep the product resolved, so no aliasing.
  SpectralField r(d);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int k1 = 0; k1 <= 2; ++k1) {
    for (int k2 = -2; k2 <= 2; ++k2) {
      if (k1 == 0 && k2 <= 0) continue;
      r.set_pair(k1, k2, {g(rng), g(rng)});
    }
  }
  CHECK(max_diff(nonlinear_term(r), convolution_oracle(r)) < 1e-13);
  CHECK(nonlinear_term(r).symmetry_defect() < 1e-14);
}

TEST_CASE("fixed initial condition") {
  const DomainSpec d{21.0, 21.0, 8, 8};
  const SpectralField f = fixed_initial_condition(d);
  int nonzero = 0;
  for (const auto& c : f.coeffs()) {
    if (std::abs(c) > 0) {
      ++nonzero;
      CHECK(std::abs(c) == doctest::Approx(0.05).epsilon(1e-15));
    }
  }
  CHECK(nonzero == 10);
  CHECK(mean(f) == 0.0);
  CHECK(l2_norm(f) == doctest::Approx(std::sqrt(1.0 / 40.0)).epsilon(1e-15));
  const double x = 3.3, y = 17.1, xp = 2 * pi * x / 21, yp = 2 * pi * y / 21;
  const double direct =
      0.1 * (std::cos(xp) + std::cos(xp + yp) + std::sin(2 * xp + yp) + std::sin(yp) + std::sin(2 * yp));
  CHECK(evaluate(f, x, y) == doctest::Approx(direct).epsilon(1e-13));
}

TEST_CASE("random initial condition") {
  const DomainSpec d{21.0, 21.0, 21, 21};
  const SpectralField a = random_initial_condition(d, 7);
  const SpectralField b = random_initial_condition(d, 7);
  CHECK(max_diff(a, b) == 0.0);
  CHECK(max_diff(a, random_initial_condition(d, 8)) > 0.0);
  CHECK(mean(a) == 0.0);

  // a_k = 2 Re P_k and b_k = -2 Im P_k should be Unif(-0.05, 0.05):
  // Kolmogorov-Smirnov statistic against the 1% critical value.
  std::vector<double> draws;
  for (std::uint64_t seed = 0; draws.size() < 10000; ++seed) {
    const SpectralField f = random_initial_condition(d, seed);
    for (int k1 = 0; k1 <= 20; ++k1) {
      for (int k2 = -20; k2 <= 20; ++k2) {
        if (k1 == 0 && k2 <= 0) continue;
        draws.push_back(2 * f(k1, k2).real());
        draws.push_back(-2 * f(k1, k2).imag());
      }
    }
  }
  std::sort(draws.begin(), draws.end());
  const double n = static_cast<double>(draws.size());
  double D = 0;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    CHECK_FALSE(std::abs(draws[i]) >= 0.05);
    const double F = (draws[i] + 0.05) / 0.1;
    D = std::max({D, F - i / n, (i + 1) / n - F});
  }
  CHECK(D < 1.628 / std::sqrt(n));
}

TEST_CASE("multistep coefficients") {
  const auto a1 = bdf_coefficients(1), a2 = bdf_coefficients(2), a3 = bdf_coefficients(3);
  CHECK(a1[0] == doctest::Approx(1.0));
  CHECK(a1[1] == doctest::Approx(-1.0));
  CHECK(a2[0] == doctest::Approx(1.5));
  CHECK(a2[1] == doctest::Approx(-2.0));
  CHECK(a2[2] == doctest::Approx(0.5));
  CHECK(a3[0] == doctest::Approx(11.0 / 6));
  CHECK(a3[3] == doctest::Approx(-1.0 / 3));
  const auto b3 = extrapolation_coefficients(3);
  CHECK(b3[0] == doctest::Approx(3.0));
  CHECK(b3[1] == doctest::Approx(-3.0));
  CHECK(b3[2] == doctest::Approx(1.0));
  for (int q = 1; q <= 6; ++q) {
    double sa = 0, sb = 0;
    for (double v : bdf_coefficients(q)) sa += v;
    for (double v : extrapolation_coefficients(q)) sb += v;
    CHECK(std::abs(sa) < 1e-12);
    CHECK(sb == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(bdf_coefficients(7), ConfigError);
}

TEST_CASE("integrator configuration") {
  IntegratorConfig c;
  CHECK_NOTHROW(c.validate());
  c.order = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.order = 4;
  c.dt = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("bootstrap history length") {
  const DomainSpec d{10.0, 10.0, 6, 6};
  const SpectralField u0 = fixed_initial_condition(d);
  for (int q : {1, 2, 4}) {
    IntegratorConfig cfg;
    cfg.order = q;
    cfg.dt = 0.01;
    KseStepper st(d, {0.25}, cfg);
    const SimState s = st.bootstrap(u0, 0.0);
    CHECK(s.active_order() == q);
    CHECK(s.steps == q - 1);
    CHECK(s.time() == doctest::Approx(0.01 * (q - 1)));
  }
}

TEST_CASE("pure dissipation decays monotonically") {
  const DomainSpec d{10.0, 10.0, 6, 6};
  SpectralField u(d);
  u.set_pair(2, 1, 0.3);
  IntegratorConfig cfg;
  cfg.dt = 0.01;
  KseStepper st(d, {2.0}, cfg);
  SimState s = st.bootstrap(u, 0.0);
  double prev = std::abs(s.current()[0](2, 1));
  for (int i = 0; i < 100; ++i) {
    st.step(s);
    const double now = std::abs(s.current()[0](2, 1));
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("linear mode evolution matches the scalar solution") {
  const DomainSpec d{18.0, 18.0, 6, 6};
  const PhysicsParams p{-0.5};
  SpectralField u(d);
  u.set_pair(1, 0, {0.2, 0.1});
  u.set_pair(2, 1, 0.1);
  IntegratorConfig cfg;
  cfg.nonlinear = false;
  cfg.dt = 1e-3;
  const double T = 1.0;
  const SpectralField v = integrate(u, p, cfg, T);
  for (auto [k1, k2] : {std::pair{1, 0}, std::pair{2, 1}}) {
    const double s = linear_symbol(WaveVector::of(d, k1, k2), p);
    CHECK(std::abs(v(k1, k2) - u(k1, k2) * std::exp(s * T)) < 1e-11);
  }
}

TEST_CASE("energy identity for the linear equation") {
  const DomainSpec d{21.0, 21.0, 8, 8};
  const PhysicsParams p{0.25};
  IntegratorConfig cfg;
  cfg.nonlinear = false;
  cfg.dt = 1e-4;
  KseStepper st(d, p, cfg);
  SimState s = st.bootstrap(fixed_initial_condition(d), 0.0);
  for (int i = 0; i < 100; ++i) st.step(s);
  const SpectralField mid = s.current()[0];
  const double e0 = std::pow(l2_norm(s.history[1][0]), 2);
  st.step(s);
  const double e1 = std::pow(l2_norm(s.current()[0]), 2);
  double rhs = 0;
  for (int k1 = -(d.M - 1); k1 < d.M; ++k1) {
    for (int k2 = -(d.N - 1); k2 < d.N; ++k2) {
      rhs += 2 * linear_symbol(WaveVector::of(d, k1, k2), p) * std::norm(mid(k1, k2));
    }
  }
  CHECK((e1 - e0) / (2 * cfg.dt) == doctest::Approx(rhs).epsilon(0.01));
}

TEST_CASE("temporal convergence order") {
  const DomainSpec d{10.0, 10.0, 8, 8};
  const PhysicsParams p{0.25};
  const SpectralField u0 = fixed_initial_condition(d);
  const double T = 1.0;
  for (int q : {2, 3, 4}) {
    IntegratorConfig cfg;
    cfg.order = q;
    cfg.dt = 0.1 / 2048;
    const SpectralField ref = integrate(u0, p, cfg, T);
    std::vector<double> err;
    for (double dt : {0.05, 0.025, 0.0125}) {
      cfg.dt = dt;
      err.push_back(l2_norm(integrate(u0, p, cfg, T) - ref));
    }
    const double rate = std::log2(err[1] / err[2]);
    CAPTURE(q);
    CAPTURE(err[0]);
    CAPTURE(err[1]);
    CAPTURE(err[2]);
    CHECK(std::abs(rate - q) < 0.3);
  }
}

TEST_CASE("ramp start is at least second order") {
  const DomainSpec d{10.0, 10.0, 8, 8};
  const PhysicsParams p{0.25};
  const SpectralField u0 = 4.0 * fixed_initial_condition(d);
  IntegratorConfig cfg;
  cfg.dt = 0.05 / 64;
  const SpectralField ref = integrate(u0, p, cfg, 0.5);
  cfg.start = StartMethod::ramp;
  cfg.dt = 0.025;
  const double e1 = l2_norm(integrate(u0, p, cfg, 0.5) - ref);
  cfg.dt = 0.0125;
  const double e2 = l2_norm(integrate(u0, p, cfg, 0.5) - ref);
  CHECK(std::log2(e1 / e2) > 1.7);
}

TEST_CASE("zero mean is preserved without forcing") {
  const DomainSpec d{21.0, 21.0, 16, 16};
  IntegratorConfig cfg;
  cfg.dt = 0.01;
  KseStepper st(d, {0.25}, cfg);
  SimState s = st.bootstrap(random_initial_condition(d, 3), 0.0);
  for (int i = 0; i < 300; ++i) {
    st.step(s);
    REQUIRE(std::abs(s.current()[0](0, 0)) < 1e-12);
  }
}

TEST_CASE("forcing enters the step") {
  const DomainSpec d{10.0, 10.0, 6, 6};
  IntegratorConfig cfg;
  cfg.dt = 0.01;
  cfg.nonlinear = false;
  KseStepper st(d, {0.25}, cfg);
  // Constant forcing of the mean: eta_00 grows linearly.
  Forcing f = [](double, const FieldSet&, FieldSet& z) { z[0](0, 0) = 2.0; };
  SimState s = st.bootstrap(SpectralField(d), 0.0, f);
  while (s.steps < 100) st.step(s, f);
  CHECK(s.current()[0](0, 0).real() == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("blow-up is reported") {
  const DomainSpec d{18.0, 18.0, 16, 16};
  IntegratorConfig cfg;
  cfg.dt = 0.01;
  cfg.divergence_threshold = 1.0;
  KseStepper st(d, {-0.5}, cfg);
  SimState s = st.bootstrap(random_initial_condition(d, 1), 0.0);
  CHECK_THROWS_AS(
      {
        while (s.time() < 500) st.step(s);
      },
      DivergenceError);
}
