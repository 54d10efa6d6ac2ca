#include <algorithm>
#include <cmath>
#include <numbers>

#include <doctest.h>

#include "helpers.hpp"
#include "ks2d/experiments.hpp"
#include "ks2d/feedback.hpp"
#include "ks2d/proportional.hpp"

using namespace ks2d;
using std::numbers::pi;

namespace {

std::vector<Complex> sorted(std::vector<Complex> v) {
  std::sort(v.begin(), v.end(), [](Complex a, Complex b) { return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag(); });
  return v;
}

double max_abs(const SpectralField& f) {
  double m = 0;
  for (const auto& c : f.coeffs()) m = std::max(m, std::abs(c));
  return m;
}

}  // namespace

TEST_CASE("point observation") {
  const DomainSpec d{21.0, 21.0, 8, 8};
  CHECK(observe(SpectralField(d), {3.0, 4.0}) == 0.0);
  SpectralField c(d);
  c.set_pair(1, 0, 0.5);
  CHECK(observe(c, {0.0, 13.0}) == doctest::Approx(1.0).epsilon(1e-15));
  const SpectralField f = testing::random_field(d, 1);
  CHECK(observe(f, {4 * d.dx(), 9 * d.dy()}) == doctest::Approx(to_physical(f)(4, 9)).epsilon(1e-10));
}

TEST_CASE("critical gain") {
  CHECK(critical_gain(1.0) == 0.0);
  CHECK(critical_gain(2.0) == 0.0);
  CHECK(critical_gain(0.25) == 0.140625);
  CHECK(critical_gain(-0.5) == 0.5625);
}

TEST_CASE("proportional forcing") {
  const DomainSpec d{21.0, 18.0, 8, 8};
  const SpectralField eta = testing::random_field(d, 2);
  ActuatorSpectrum b(grid_random(d, 12, 3), d);
  CHECK(max_abs(proportional_forcing(eta, eta, 150.0, b)) == 0.0);
  CHECK(max_abs(proportional_forcing(eta, SpectralField(d), 0.0, b)) == 0.0);

  SpectralField one(d);
  one(0, 0) = 1.0;
  ActuatorSpectrum origin(ActuatorSet(d, {{0, 0}}), d);
  const SpectralField z = proportional_forcing(one, SpectralField(d), 1.0, origin);
  for (const auto& c : z.coeffs()) CHECK(std::abs(c - (-1.0 / d.area())) < 1e-16);

  // linear in alpha and in the mismatch
  const SpectralField target = testing::random_field(d, 4);
  std::vector<double> phi;
  const SpectralField z1 = proportional_forcing(eta, target, 2.0, b, &phi);
  const SpectralField z3 = proportional_forcing(eta, target, 6.0, b);
  CHECK(max_abs(z3 - 3.0 * z1) < 1e-13);
  const SpectralField eta2 = target + 2.0 * (eta - target);
  CHECK(max_abs(proportional_forcing(eta2, target, 2.0, b) - 2.0 * z1) < 1e-13);
  for (std::size_t j = 0; j < phi.size(); ++j) {
    const Point p = b.actuators()[j];
    CHECK(phi[j] == doctest::Approx(-2.0 * (evaluate(eta, p.x, p.y) - evaluate(target, p.x, p.y))).epsilon(1e-12));
  }
}

TEST_CASE("full-field damping") {
  const DomainSpec d{21.0, 21.0, 8, 8};
  const SpectralField eta = testing::random_field(d, 5), tgt = testing::random_field(d, 6);
  CHECK(max_abs(full_field_damping(eta, eta, 3.0)) == 0.0);
  CHECK(max_abs(full_field_damping(eta, tgt, 3.0) + 3.0 * (eta - tgt)) < 1e-15);
  const double ac = critical_gain(0.25);
  for (int k1 = -(d.M - 1); k1 < d.M; ++k1) {
    for (int k2 = -(d.N - 1); k2 < d.N; ++k2) CHECK(dispersion(WaveVector::of(d, k1, k2), {0.25}, ac + 0.01) < 0);
  }
}

TEST_CASE("real basis") {
  const Truncation t(3);
  CHECK(t.dim() == 49);
  CHECK(t.half_size() == 24);
  CHECK(t.half_mode(0) == std::pair{0, 1});
  CHECK(t.half_mode(3) == std::pair{1, -3});

  const DomainSpec d{21.0, 21.0, 5, 5};
  SpectralField c(d);
  c(0, 0) = 0.7;
  Eigen::VectorXd r = t.to_real(c);
  CHECK(r(0) == 0.7);
  CHECK(r.tail(r.size() - 1).norm() == 0.0);

  SpectralField pair(d);
  pair.set_pair(1, 2, 0.5);
  r = t.to_real(pair);
  int h = 0;
  while (t.half_mode(h) != std::pair{1, 2}) ++h;
  CHECK(r(1 + 2 * h) == doctest::Approx(1.0));
  CHECK(r(2 + 2 * h) == doctest::Approx(0.0));
  CHECK(r.norm() == doctest::Approx(1.0));

  const SpectralField f = testing::random_field(DomainSpec{21.0, 21.0, 4, 4}, 8);
  SpectralField back(f.domain());
  t.to_complex(t.to_real(f), back);
  double err = 0;
  for (std::size_t i = 0; i < f.coeffs().size(); ++i) err = std::max(err, std::abs(back.coeffs()[i] - f.coeffs()[i]));
  CHECK(err < 1e-13);

  const Eigen::VectorXcd v = Eigen::VectorXcd::Random(t.dim());
  CHECK((t.real_to_complex(t.complex_to_real(v)) - v).norm() < 1e-13);
  CHECK((t.inverse_matrix() * t.forward_matrix() - Eigen::MatrixXcd::Identity(t.dim(), t.dim())).norm() < 1e-13);
}

TEST_CASE("advection matrix") {
  const int n = 2;
  const Truncation t(n);
  const DomainSpec d{21.0, 18.0, 6, 6};
  CHECK(build_J(SpectralField(d), n).norm() == 0.0);

  SpectralField c(d);
  c(0, 0) = 1.3;
  const Eigen::MatrixXcd Jc = build_J(c, n);
  for (int k1 = -n; k1 <= n; ++k1) {
    for (int k2 = -n; k2 <= n; ++k2) {
      const int i = t.complex_index(k1, k2);
      CHECK(std::abs(Jc(i, i) - Complex(0, -d.kx(k1) * 1.3)) < 1e-15);
      CHECK(Jc.row(i).norm() == doctest::Approx(std::abs(d.kx(k1)) * 1.3));
    }
  }

  const SpectralField g = testing::random_field(d, 3);
  const Eigen::MatrixXcd J = build_J(g, n);
  for (int k1 = -n; k1 <= n; ++k1) {
    for (int k2 = -n; k2 <= n; ++k2) {
      for (int l1 = -n; l1 <= n; ++l1) {
        for (int l2 = -n; l2 <= n; ++l2) {
          const Complex e = Complex(0, -d.kx(k1)) * g(k1 - l1, k2 - l2);
          CHECK(std::abs(J(t.complex_index(k1, k2), t.complex_index(l1, l2)) - e) < 1e-14);
        }
      }
      if (k1 == 0) CHECK(J.row(t.complex_index(k1, k2)).norm() == 0.0);
    }
  }
  CHECK_THROWS(build_J(g, 3));
}

TEST_CASE("pole placement") {
  Eigen::MatrixXd A(2, 2), B(2, 1);
  A << 1, 0, 0, -1;
  B << 1, 0;
  const Eigen::MatrixXd K = place_poles(A, B, {-2.0, -1.0});
  CHECK(K(0, 0) == doctest::Approx(-3.0));
  CHECK(std::abs(K(0, 1)) < 1e-12);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd A6(6, 6), B6(6, 3);
    for (int i = 0; i < 36; ++i) A6.data()[i] = g(rng);
    for (int i = 0; i < 18; ++i) B6.data()[i] = g(rng);
    A6 -= 4.0 * Eigen::MatrixXd::Identity(6, 6);
    std::vector<Complex> want{-1.0, -2.0, -3.5, Complex(-1, 2), Complex(-1, -2), -0.5};
    PlacementReport rep;
    const Eigen::MatrixXd K6 = place_poles(A6, B6, want, &rep);
    CHECK(spectrum_mismatch(eigenvalues(A6 + B6 * K6), want) < 1e-6);
    CHECK(rep.max_relative_error < 1e-6);

    // unchanged spectrum: zero gain is admissible
    const auto own = eigenvalues(A6);
    const Eigen::MatrixXd K0 = place_poles(A6, B6, own);
    CHECK(spectrum_mismatch(eigenvalues(A6 + B6 * K0), own) < 1e-6);
  }

  Eigen::MatrixXd A4 = Eigen::MatrixXd::Zero(4, 4), B1(4, 1);
  A4 << 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 1, 2, 3, 4;
  B1 << 0, 0, 0, 1;
  const Eigen::MatrixXd K4 = place_poles(A4, B1, {-1.0, -2.0, -3.0, -4.0});
  CHECK(spectrum_mismatch(eigenvalues(A4 + B1 * K4), {-1.0, -2.0, -3.0, -4.0}) < 1e-6);
  CHECK_THROWS_AS(place_poles(A4, B1, {-1.0, -1.0, -3.0, -4.0}), ConfigError);
  CHECK_THROWS_AS(place_poles(A4, B1, {Complex(-1, 1), -1.0, -3.0, -4.0}), ConfigError);
}

TEST_CASE("desired spectrum") {
  const std::vector<Complex> low{-0.5, -2.0, Complex(-1, 1), Complex(-1, -1)};
  CHECK(desired_spectrum(low, -0.1, false, 0) == low);
  const auto d = desired_spectrum({0.5, -0.2, -5.0}, -0.1, false, 0);
  CHECK(d == std::vector<Complex>{-0.1, -0.2, -5.0});

  const std::vector<Complex> open{0.5, 0.3, Complex(0.2, 1), Complex(0.2, -1), -7.0};
  const auto j = desired_spectrum(open, -2.5, true, 11);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(j[i].real() <= -2.5);
    CHECK(j[i].real() > -2.6);
    CHECK(j[i].imag() == open[i].imag());
  }
  CHECK(j[2] == std::conj(j[3]));
  CHECK(j[0] != j[1]);
  CHECK(j[4] == -7.0);
  CHECK(desired_spectrum(open, -2.5, true, 11) == j);
}

TEST_CASE("gain synthesis about zero") {
  const DomainSpec d{21.0, 21.0, 8, 8};
  const ActuatorSet acts = grid_random(d, 30, 5);
  const SpectralField zero(d);
  const GainMatrix gm = synthesize_gain(GainMethod::morris, zero, 3, -0.1, acts, {0.25});
  const GainMatrix gg = synthesize_gain(GainMethod::gomes, zero, 3, -0.1, acts, {0.25});
  CHECK(gm.max_relative_error < 1e-6);
  int above = 0;
  for (int k1 = -3; k1 <= 3; ++k1) {
    for (int k2 = -3; k2 <= 3; ++k2) above += linear_symbol(WaveVector::of(d, k1, k2), {0.25}) >= -0.1;
  }
  CHECK(gm.moved == above);
  const auto a = sorted(gm.achieved_spectrum), b = sorted(gg.achieved_spectrum);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-8);
  double top = -1e300;
  for (const auto& z : gm.achieved_spectrum) top = std::max(top, z.real());
  CHECK(top == doctest::Approx(-0.1).epsilon(1e-6));

  const Truncation t(3);
  std::vector<double> phi(acts.size()), phi2(acts.size());
  apply_gain(gm, t, zero, phi);
  for (double v : phi) CHECK(v == 0.0);
  const SpectralField w = testing::random_field(d, 2);
  apply_gain(gm, t, w, phi);
  apply_gain(gm, t, 2.5 * w, phi2);
  for (std::size_t j = 0; j < phi.size(); ++j) CHECK(phi2[j] == doctest::Approx(2.5 * phi[j]).epsilon(1e-12));

  SynthesisOptions cap;
  cap.max_gain = 1e-6;
  CHECK_THROWS_AS(synthesize_gain(GainMethod::gomes, zero, 3, -0.1, acts, {0.25}, cap), ConfigError);
  CHECK_THROWS_AS(synthesize_gain(GainMethod::gomes, zero, 3, 0.1, acts, {0.25}), ConfigError);
}

TEST_CASE("gomes bound rejects thresholds above half the steepest descent") {
  const DomainSpec d{21.0, 21.0, 8, 8};
  SpectralField target(d);
  target.set_pair(1, 0, 0.5);  // cos(2 pi x / L): inf of the x-derivative is -2 pi / L
  CHECK(inf_x_derivative(target) == doctest::Approx(-2 * pi / 21).epsilon(1e-9));
  const ActuatorSet acts = grid_random(d, 30, 5);
  try {
    synthesize_gain(GainMethod::gomes, target, 2, -0.1, acts, {0.25});
    FAIL("expected a configuration error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("inf(target_x)") != std::string::npos);
  }
  CHECK_NOTHROW(synthesize_gain(GainMethod::gomes, target, 2, -0.2, acts, {0.25}));
}

TEST_CASE("gain file round trip") {
  testing::TempDir tmp("gain");
  const DomainSpec d{21.0, 21.0, 8, 8};
  SynthesisOptions opt;
  opt.jitter = true;
  const GainMatrix g =
      synthesize_gain(GainMethod::gomes, SpectralField(d), 2, -0.3, grid_random(d, 10, 1), {0.25}, opt);
  write_gain(tmp.path() / "k.bin", g);
  const GainMatrix r = read_gain(tmp.path() / "k.bin");
  CHECK(r.n == 2);
  CHECK(r.method == GainMethod::gomes);
  CHECK(r.threshold == -0.3);
  CHECK(r.K == g.K);
  CHECK(parse_gain_method("morris") == GainMethod::morris);
  CHECK_THROWS_AS(parse_gain_method("lqr"), ConfigError);
  CHECK_THROWS_AS(read_gain(tmp.path() / "none.bin"), IoError);
}

TEST_CASE("closed-loop linear decay follows the placed spectrum") {
  const DomainSpec d{10.0, 10.0, 8, 8};
  const PhysicsParams p{0.25};
  const ActuatorSet acts = grid_random(d, 30, 7);
  SimulationConfig cfg;
  cfg.domain = d;
  cfg.physics = p;
  cfg.integrator.dt = 0.01;
  cfg.integrator.nonlinear = false;
  cfg.horizon = 60;
  cfg.actuators = acts;
  cfg.control.kind = ControlKind::feedback;
  cfg.control.gain = synthesize_gain(GainMethod::gomes, SpectralField(d), 2, -0.1, acts, p);
  cfg.target = zero_target(d);
  cfg.initial = fixed_initial_condition(d);
  const SimulationResult r = run_simulation(cfg);
  REQUIRE(r.status == RunStatus::completed);
  const DecayFit f = fit_decay_rate(r.costs, 30, 60);
  CHECK(f.lambda == doctest::Approx(0.1).epsilon(1e-2));
  CHECK(std::abs(f.lambda - 0.1) < 1e-3);
}
