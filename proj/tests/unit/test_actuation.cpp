#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <doctest.h>

#include "helpers.hpp"
#include "ks2d/actuation.hpp"

using namespace ks2d;
using std::numbers::pi;

namespace {

double torus_dist2(Point a, Point b, double L1, double L2) {
  double dx = a.x - b.x, dy = a.y - b.y;
  dx -= L1 * std::round(dx / L1);
  dy -= L2 * std::round(dy / L2);
  return dx * dx + dy * dy;
}

// Largest empty circle by dense grid search.
double brute_A3(const ActuatorSet& s, int res) {
  const auto& d = s.domain();
  double best = 0;
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j) {
      const Point q{(i + 0.5) * d.L1 / res, (j + 0.5) * d.L2 / res};
      double m = 1e300;
      for (const auto& p : s.points()) m = std::min(m, torus_dist2(p, q, d.L1, d.L2));
      best = std::max(best, m);
    }
  }
  return pi * best;
}

}  // namespace

TEST_CASE("actuator set validation") {
  const DomainSpec d{21.0, 21.0, 8, 8};
  CHECK_THROWS_AS(ActuatorSet(d, {{21.0, 1.0}}), ConfigError);
  CHECK_THROWS_AS(ActuatorSet(d, {{-0.1, 1.0}}), ConfigError);
  CHECK_THROWS_AS(ActuatorSet(d, {{1.0, 1.0}, {1.0, 1.0}}), ConfigError);
  const ActuatorSet s(d, {{1, 1}, {2, 2}, {3, 3}});
  CHECK(s.prefix(2).size() == 2);
  CHECK(s.prefix(2)[1] == Point{2, 2});
  CHECK_THROWS_AS(s.prefix(4), ConfigError);
}

TEST_CASE("equidistant grids") {
  CHECK(grid_equidistant(DomainSpec{21.0, 21.0, 8, 8}, 3.0, 3.0).size() == 49);
  CHECK(grid_equidistant(DomainSpec{30.0, 30.0, 8, 8}, 3.0, 3.0).size() == 100);
  const auto one = grid_equidistant(DomainSpec{21.0, 18.0, 8, 8}, 21.0, 18.0);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == Point{0, 0});
  CHECK_THROWS_AS(grid_equidistant(DomainSpec{21.0, 21.0, 8, 8}, 4.0, 3.0), ConfigError);
}

TEST_CASE("perturbed grids") {
  const DomainSpec d{21.0, 21.0, 8, 8};
  const auto eq = grid_equidistant(d, 3, 3);
  CHECK(grid_perturbed(d, 3, 3, 0.0, 1).points() == eq.points());

  const auto p = grid_perturbed(d, 3, 3, 2.0, 5);
  REQUIRE(p.size() == eq.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    // within the d x d cell centred on its lattice point
    CHECK(torus_dist2(Point{p[j].x, eq[j].y}, eq[j], d.L1, d.L2) <= 1.5 * 1.5 + 1e-12);
    CHECK(torus_dist2(Point{eq[j].x, p[j].y}, eq[j], d.L1, d.L2) <= 1.5 * 1.5 + 1e-12);
  }

  const DomainSpec big{300.0, 300.0, 8, 8};
  const double sigma = 0.5;
  const auto q = grid_perturbed(big, 3, 3, sigma, 17);
  const auto base = grid_equidistant(big, 3, 3);
  double mx = 0, my = 0;
  for (std::size_t j = 0; j < q.size(); ++j) {
    double dx = q[j].x - base[j].x, dy = q[j].y - base[j].y;
    dx -= 300 * std::round(dx / 300);
    dy -= 300 * std::round(dy / 300);
    mx += dx;
    my += dy;
  }
  mx /= static_cast<double>(q.size());
  my /= static_cast<double>(q.size());
  CHECK(std::abs(mx) < 3 * sigma / 100);
  CHECK(std::abs(my) < 3 * sigma / 100);
}

TEST_CASE("random grids") {
  const DomainSpec d{21.0, 15.0, 8, 8};
  CHECK(grid_random(d, 0, 1).empty());
  CHECK(grid_random(d, 30, 4).points() == grid_random(d, 30, 4).points());
  CHECK(grid_random(d, 30, 4).points() != grid_random(d, 30, 5).points());

  const auto r = grid_random(d, 10000, 9);
  for (bool use_x : {true, false}) {
    std::vector<double> v;
    for (const auto& p : r.points()) v.push_back(use_x ? p.x / d.L1 : p.y / d.L2);
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double D = 0;
    for (std::size_t i = 0; i < v.size(); ++i) D = std::max({D, v[i] - i / n, (i + 1) / n - v[i]});
    CHECK(D < 1.628 / std::sqrt(n));
  }
}

TEST_CASE("Halton points") {
  CHECK(radical_inverse(1, 2) == 0.5);
  CHECK(radical_inverse(1, 3) == doctest::Approx(1.0 / 3));
  CHECK(radical_inverse(2, 2) == 0.25);
  CHECK(radical_inverse(2, 3) == doctest::Approx(2.0 / 3));
  CHECK(radical_inverse(6, 2) == 0.375);
  const DomainSpec d{21.0, 21.0, 8, 8};
  const auto h = grid_halton(d, 49);
  CHECK(h[0].x == doctest::Approx(10.5));
  CHECK(h[0].y == doctest::Approx(7.0));
  CHECK(h[1].x == doctest::Approx(21.0 / 4));
  CHECK(h[1].y == doctest::Approx(14.0));
  const auto h0 = grid_halton(d, 49, 0);
  CHECK(h0[0] == Point{0, 0});
  CHECK(h0[1] == h[0]);
  auto pts = h.points();
  std::sort(pts.begin(), pts.end(), [](Point a, Point b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });
  CHECK(std::adjacent_find(pts.begin(), pts.end()) == pts.end());
}

TEST_CASE("actuator spectrum entries") {
  const DomainSpec d{21.0, 18.0, 8, 6};
  const ActuatorSet s(d, {{0, 0}, {3.3, 7.1}});
  const ActuatorSpectrum b(s, d);
  for (int k1 = -(d.M - 1); k1 < d.M; ++k1) {
    for (int k2 = -(d.N - 1); k2 < d.N; ++k2) {
      CHECK(std::abs(b.entry(k1, k2, 0) - 1.0 / d.area()) < 1e-16);
      const Complex e = std::exp(Complex(0, -(d.kx(k1) * 3.3 + d.ky(k2) * 7.1))) / d.area();
      CHECK(std::abs(b.entry(k1, k2, 1) - e) < 1e-15);
    }
  }
  CHECK(std::abs(b.entry(0, 0, 1) - 1.0 / d.area()) < 1e-16);
}

TEST_CASE("truncated delta has unit integral") {
  const DomainSpec d{21.0, 21.0, 16, 16};
  for (Point p : {Point{3 * d.dx(), 5 * d.dy()}, Point{2.345, 17.2}}) {
    ActuatorSpectrum b(ActuatorSet(d, {p}), d);
    SpectralField z(d);
    const std::vector<double> phi{1.0};
    b.assemble(phi, z);
    const RealGrid g = to_physical(z);
    double s = 0;
    for (double v : g.values) s += v;
    CHECK(s * d.dx() * d.dy() == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("observe and assemble agree with direct sums") {
  const DomainSpec d{21.0, 21.0, 10, 10};
  const SpectralField f = testing::random_field(d, 6);
  for (const ActuatorSet& s : {grid_random(d, 20, 2), grid_equidistant(d, 3, 3)}) {
    ActuatorSpectrum b(s, d);
    std::vector<double> obs(s.size());
    b.observe(f, obs);
    for (std::size_t j = 0; j < s.size(); ++j) CHECK(obs[j] == doctest::Approx(evaluate(f, s[j].x, s[j].y)).epsilon(1e-12));

    std::vector<double> phi(s.size());
    for (std::size_t j = 0; j < s.size(); ++j) phi[j] = std::sin(1.0 + j);
    SpectralField z(d);
    b.assemble(phi, z);
    double err = 0;
    for (int k1 = -(d.M - 1); k1 < d.M; ++k1) {
      for (int k2 = -(d.N - 1); k2 < d.N; ++k2) {
        Complex e = 0;
        for (std::size_t j = 0; j < s.size(); ++j) e += phi[j] * b.entry(k1, k2, j);
        err = std::max(err, std::abs(z(k1, k2) - e));
      }
    }
    CHECK(err < 1e-15);
    CHECK(z.symmetry_defect() < 1e-15);
  }
}

TEST_CASE("collocation shortcut matches the spectral path") {
  const DomainSpec d{21.0, 21.0, 14, 14};
  const ActuatorSet s = grid_equidistant(d, 3, 3);
  ActuatorSpectrum fast(s, d), slow(s, d);
  REQUIRE(fast.on_grid());
  slow.set_use_grid_path(false);
  const SpectralField f = testing::random_field(d, 12);
  std::vector<double> a(s.size()), b(s.size());
  fast.observe(f, a);
  slow.observe(f, b);
  for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-12));
  SpectralField za(d), zb(d);
  fast.assemble(a, za);
  slow.assemble(a, zb);
  double err = 0;
  for (std::size_t i = 0; i < za.coeffs().size(); ++i) err = std::max(err, std::abs(za.coeffs()[i] - zb.coeffs()[i]));
  CHECK(err < 1e-14);
  ActuatorSpectrum copy = fast;
  std::vector<double> c(s.size());
  copy.observe(f, c);
  CHECK(c == a);
}

TEST_CASE("spacing areas of equidistant grids") {
  const DomainSpec d{21.0, 21.0, 8, 8};
  const SpacingReport r = spacing_areas(grid_equidistant(d, 3, 3));
  CHECK(std::abs(r.A1 - 9 * pi) < 1e-9);
  CHECK(std::abs(r.A2 - 9) < 1e-9);
  CHECK(std::abs(r.A3 - 4.5 * pi) < 1e-9);
  CHECK(std::abs(r.A1E - 9 * pi) < 1e-9);
  CHECK(std::abs(r.A2E - 9) < 1e-9);
  CHECK(std::abs(r.A3E - 4.5 * pi) < 1e-9);

  const DomainSpec rect{21.0, 20.0, 8, 8};
  const SpacingReport q = spacing_areas(grid_equidistant(rect, 3, 2));
  CHECK(std::abs(q.A1 - equidistant_A1(3, 2)) < 1e-9);
  CHECK(std::abs(q.A2 - equidistant_A2(3, 2)) < 1e-9);
  CHECK(std::abs(q.A3 - equidistant_A3(3, 2)) < 1e-9);
  CHECK(equidistant_A1(3, 2) == doctest::Approx(4 * pi));
  CHECK(equidistant_A2(3, 2) == doctest::Approx(6));
  CHECK(equidistant_A3(3, 2) == doctest::Approx(13 * pi / 4));
}

TEST_CASE("spacing areas on the torus") {
  const double L = 10.0;
  const DomainSpec d{L, L, 8, 8};
  CHECK(spacing_areas(ActuatorSet(d, {{0, 0}, {L / 2, 0}})).A1 == doctest::Approx(pi * 25).epsilon(1e-12));
  CHECK_THROWS_AS(spacing_areas(ActuatorSet(d, {{1, 1}})), ConfigError);

  const DomainSpec q{21.0, 21.0, 8, 8};
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const ActuatorSet s = grid_random(q, 49, seed);
    const SpacingReport r = spacing_areas(s);
    double total = 0;
    for (double a : r.cell_areas) total += a;
    CHECK(std::abs(total - q.area()) < 1e-9);
    CHECK(r.A3 == doctest::Approx(brute_A3(s, 1000)).epsilon(0.02));

    std::vector<Point> moved;
    for (const auto& p : s.points()) moved.push_back({std::fmod(p.x + 7.3, 21.0), std::fmod(p.y + 15.9, 21.0)});
    const SpacingReport m = spacing_areas(ActuatorSet(q, moved));
    CHECK(std::abs(m.A1 - r.A1) < 1e-9);
    CHECK(std::abs(m.A2 - r.A2) < 1e-9);
    CHECK(std::abs(m.A3 - r.A3) < 1e-9);
  }
}

TEST_CASE("equidistant spacing beats random sets") {
  const DomainSpec d{21.0, 21.0, 8, 8};
  const SpacingReport e = spacing_areas(grid_equidistant(d, 3, 3));
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const SpacingReport r = spacing_areas(grid_random(d, 49, 1000 + seed));
    CHECK(e.A2 <= r.A2 + 1e-12);
    CHECK(e.A3 <= r.A3 + 1e-12);
  }
}

TEST_CASE("actuator file round trip") {
  testing::TempDir tmp("act");
  const DomainSpec d{21.0, 18.0, 8, 8};
  const ActuatorSet s = grid_random(d, 13, 3);
  write_actuators(tmp.path() / "a.csv", s);
  CHECK(read_actuators(tmp.path() / "a.csv", d).points() == s.points());
  CHECK_THROWS_AS(read_actuators(tmp.path() / "a.csv", DomainSpec{20.0, 18.0, 8, 8}), ConfigError);
  std::ofstream(tmp.path() / "bad.csv") << "# L1=21,L2=18\nx,y\n1,zz\n";
  CHECK_THROWS(read_actuators(tmp.path() / "bad.csv", d));
}
