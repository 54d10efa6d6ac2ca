#include "ks2d/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>

#include "ks2d/random.hpp"

namespace ks2d {

double linear_symbol(const WaveVector& k, const PhysicsParams& params) {
  const double kx2 = k.kx * k.kx;
  const double ky2 = k.ky * k.ky;
  const double mod2 = kx2 + ky2;
  return (1.0 - params.kappa) * kx2 - params.kappa * ky2 - mod2 * mod2;
}

double dispersion(const WaveVector& k, const PhysicsParams& params, double alpha) {
  return linear_symbol(k, params) - alpha;
}

int count_unstable_modes(const DomainSpec& domain, const PhysicsParams& params) {
  domain.validate();
  int count = 0;
  for (int k1 = -(domain.M - 1); k1 < domain.M; ++k1) {
    for (int k2 = -(domain.N - 1); k2 < domain.N; ++k2) {
      if (k1 == 0 && k2 == 0) continue;
      if (dispersion(WaveVector::of(domain, k1, k2), params, 0.0) > 0.0) ++count;
    }
  }
  return count;
}

SpectralField nonlinear_term(const SpectralField& eta, bool dealias) {
  IntegratorConfig cfg;
  cfg.order = 1;
  cfg.dealias = dealias;
  KseStepper stepper(eta.domain(), PhysicsParams{}, cfg);
  SpectralField out(eta.domain());
  stepper.nonlinear_term(eta, out);
  return out;
}

SpectralField fixed_initial_condition(const DomainSpec& domain) {
  SpectralField f(domain);
  const Complex half(0.05, 0.0);
  const Complex sine(0.0, -0.05);  // sin(t) = (e^{it} - e^{-it}) / 2i
  f.set_pair(1, 0, half);
  f.set_pair(1, 1, half);
  f.set_pair(2, 1, sine);
  f.set_pair(0, 1, sine);
  f.set_pair(0, 2, sine);
  return f;
}

SpectralField random_initial_condition(const DomainSpec& domain, std::uint64_t seed) {
  constexpr int kMaxMode = 20;
  SpectralField f(domain);
  Rng rng(seed);
  bool truncated = false;
  for (int k1 = 0; k1 <= kMaxMode; ++k1) {
    for (int k2 = -kMaxMode; k2 <= kMaxMode; ++k2) {
      if (k1 == 0 && k2 <= 0) continue;
      const double a = uniform_open(rng, -0.05, 0.05);
      const double b = uniform_open(rng, -0.05, 0.05);
      if (!f.resolves(k1, k2)) {
        truncated = true;
        continue;
      }
      f.set_pair(k1, k2, Complex(0.5 * a, -0.5 * b));
    }
  }
  if (truncated) {
    std::cerr << "warning: random initial condition truncated to the resolved modes (M="
              << domain.M << ", N=" << domain.N << ")\n";
  }
  return f;
}

// ---------------------------------------------------------------------------

std::vector<double> bdf_coefficients(int order) {
  switch (order) {
    case 1: return {1.0, -1.0};
    case 2: return {1.5, -2.0, 0.5};
    case 3: return {11.0 / 6.0, -3.0, 1.5, -1.0 / 3.0};
    case 4: return {25.0 / 12.0, -4.0, 3.0, -4.0 / 3.0, 0.25};
    case 5: return {137.0 / 60.0, -5.0, 5.0, -10.0 / 3.0, 1.25, -0.2};
    case 6: return {49.0 / 20.0, -6.0, 7.5, -20.0 / 3.0, 3.75, -1.2, 1.0 / 6.0};
    default: throw ConfigError("BDF order must be in 1..6");
  }
}

std::vector<double> extrapolation_coefficients(int order) {
  if (order < 1 || order > 6) throw ConfigError("BDF order must be in 1..6");
  // b_j = (-1)^j binom(q, j+1)
  std::vector<double> b(static_cast<std::size_t>(order));
  double binom = order;  // binom(q, 1)
  for (int j = 0; j < order; ++j) {
    b[static_cast<std::size_t>(j)] = (j % 2 == 0 ? 1.0 : -1.0) * binom;
    binom = binom * (order - j - 1) / (j + 2);
  }
  return b;
}

void IntegratorConfig::validate() const {
  if (order < 1 || order > 6) throw ConfigError("BDF order must be in 1..6");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("time step must be positive");
  if (shift && !(*shift >= 0.0)) throw ConfigError("implicit shift must be nonnegative");
  if (!(divergence_threshold > 0.0)) throw ConfigError("divergence threshold must be positive");
}

KseStepper::KseStepper(const DomainSpec& domain, const PhysicsParams& params, const IntegratorConfig& cfg)
    : domain_(domain), params_(params), cfg_(cfg), fft_(domain) {
  cfg_.validate();
  const std::size_t n = static_cast<std::size_t>(domain_.modes_x()) * domain_.modes_y();
  symbol_.resize(n);
  kx_.resize(n);
  keep_.assign(n, 1);
  const SpectralField layout(domain_);
  double max_symbol = 0.0;
  const int cut_x = (2 * domain_.M) / 3;
  const int cut_y = (2 * domain_.N) / 3;
  for (int k1 = -(domain_.M - 1); k1 < domain_.M; ++k1) {
    for (int k2 = -(domain_.N - 1); k2 < domain_.N; ++k2) {
      const std::size_t i = layout.index(k1, k2);
      symbol_[i] = linear_symbol(WaveVector::of(domain_, k1, k2), params_);
      kx_[i] = domain_.kx(k1);
      max_symbol = std::max(max_symbol, symbol_[i]);
      if (cfg_.dealias && (std::abs(k1) > cut_x || std::abs(k2) > cut_y)) keep_[i] = 0;
    }
  }
  shift_ = cfg_.shift.value_or(max_symbol + 1.0);
  if (shift_ <= max_symbol) {
    throw ConfigError("implicit shift " + std::to_string(shift_) +
                      " does not make the implicit operator positive definite (max A_kk = " +
                      std::to_string(max_symbol) + ")");
  }
  physical_.resize(static_cast<std::size_t>(domain_.grid_x()) * domain_.grid_y());
}

void KseStepper::nonlinear_term(const SpectralField& u, SpectralField& out) {
  if (cfg_.dealias) {
    SpectralField filtered = u;
    auto c = filtered.coeffs();
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (!keep_[i]) c[i] = Complex{};
    }
    fft_.to_physical(filtered, physical_);
  } else {
    fft_.to_physical(u, physical_);
  }
  for (double& v : physical_) v *= v;
  fft_.to_spectral(physical_, out);
  auto c = out.coeffs();
  for (std::size_t i = 0; i < c.size(); ++i) {
    // -(i kx / 2) * (u^2)_k
    const double s = -0.5 * kx_[i];
    c[i] = keep_[i] ? Complex(-s * c[i].imag(), s * c[i].real()) : Complex{};
  }
}

void KseStepper::explicit_term(double t, const FieldSet& u, FieldSet& out, const Forcing& forcing) {
  out.resize(u.size());
  if (forcing) {
    zeta_.resize(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (zeta_[i].empty() || !(zeta_[i].domain() == domain_)) zeta_[i] = SpectralField(domain_);
      zeta_[i].set_zero();
    }
    forcing(t, u, zeta_);
  }
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (out[i].empty()) out[i] = SpectralField(domain_);
    if (cfg_.nonlinear) {
      nonlinear_term(u[i], out[i]);
    } else {
      out[i].set_zero();
    }
    auto o = out[i].coeffs();
    auto v = u[i].coeffs();
    for (std::size_t k = 0; k < o.size(); ++k) o[k] += shift_ * v[k];
    if (forcing) {
      auto z = zeta_[i].coeffs();
      for (std::size_t k = 0; k < o.size(); ++k) o[k] += z[k];
    }
  }
}

void KseStepper::check(const FieldSet& u, double t) const {
  for (const auto& f : u) {
    double s = 0.0;
    for (const auto& c : f.coeffs()) s += std::norm(c);
    const double norm = std::sqrt(s);
    if (!std::isfinite(norm) || norm > cfg_.divergence_threshold) throw DivergenceError(t, norm);
  }
}

FieldSet KseStepper::euler_substeps(const FieldSet& u, const FieldSet& b0, double t, int substeps,
                                    const Forcing& forcing) {
  const double h = cfg_.dt / substeps;
  FieldSet v = u;
  FieldSet b;
  for (int s = 0; s < substeps; ++s) {
    if (s > 0) explicit_term(t + s * h, v, b, forcing);
    const FieldSet& use = (s == 0) ? b0 : b;
    for (std::size_t i = 0; i < v.size(); ++i) {
      auto c = v[i].coeffs();
      auto e = use[i].coeffs();
      for (std::size_t k = 0; k < c.size(); ++k) {
        c[k] = (c[k] / h + e[k]) / (1.0 / h + shift_ - symbol_[k]);
      }
    }
  }
  return v;
}

SimState KseStepper::bootstrap(const SpectralField& u0, double t0, const Forcing& forcing) {
  return bootstrap(FieldSet{u0}, t0, forcing);
}

SimState KseStepper::bootstrap(FieldSet u0, double t0, const Forcing& forcing) {
  if (u0.empty()) throw ConfigError("bootstrap needs at least one field");
  for (auto& f : u0) {
    if (!(f.domain() == domain_)) throw ShapeError("initial field domain differs from the integrator domain");
    require_real(f);
    f.symmetrize();
  }
  SimState state;
  state.t0 = t0;
  state.dt = cfg_.dt;
  FieldSet b;
  explicit_term(t0, u0, b, forcing);
  state.history.push_front(std::move(u0));
  state.explicit_terms.push_front(std::move(b));

  const int q = cfg_.order;
  if (cfg_.start == StartMethod::ramp) {
    for (int s = 1; s < q; ++s) step(state, forcing);
    return state;
  }

  // Aitken-Neville extrapolation of IMEX Euler with n_i = i substeps; the
  // error expansion is in powers of h, giving order q from q sequences.
  for (int s = 1; s < q; ++s) {
    const double t = state.time();
    const FieldSet& base = state.history.front();
    const FieldSet& b0 = state.explicit_terms.front();
    std::vector<FieldSet> table;
    table.reserve(static_cast<std::size_t>(q));
    for (int i = 0; i < q; ++i) table.push_back(euler_substeps(base, b0, t, i + 1, forcing));
    for (int j = 1; j < q; ++j) {
      for (int i = q - 1; i >= j; --i) {
        const double ratio = static_cast<double>(i + 1) / static_cast<double>(i - j + 1) - 1.0;
        for (std::size_t c = 0; c < table[static_cast<std::size_t>(i)].size(); ++c) {
          auto hi = table[static_cast<std::size_t>(i)][c].coeffs();
          auto lo = table[static_cast<std::size_t>(i - 1)][c].coeffs();
          for (std::size_t k = 0; k < hi.size(); ++k) hi[k] += (hi[k] - lo[k]) / ratio;
        }
      }
    }
    FieldSet next = std::move(table.back());
    for (auto& f : next) f.symmetrize();
    ++state.steps;
    check(next, state.time());
    FieldSet bn;
    explicit_term(state.time(), next, bn, forcing);
    state.history.push_front(std::move(next));
    state.explicit_terms.push_front(std::move(bn));
  }
  return state;
}

void KseStepper::step(SimState& state, const Forcing& forcing) {
  if (state.history.empty()) throw ConfigError("step called on an unprimed state");
  const int q = std::min(cfg_.order, state.active_order());
  const auto a = bdf_coefficients(q);
  const auto b = extrapolation_coefficients(q);
  const double dt = cfg_.dt;
  const std::size_t ncomp = state.history.front().size();

  // When the history is full the oldest buffer is overwritten in place; each
  // mode reads its own old entry before writing it.
  const bool recycle = state.active_order() >= cfg_.order;
  FieldSet fresh;
  if (!recycle) fresh = state.history.front();
  FieldSet& target = recycle ? state.history.back() : fresh;

  const double lead = a[0] / dt;
  if (inverse_lead_ != lead) {
    inverse_.resize(symbol_.size());
    for (std::size_t k = 0; k < symbol_.size(); ++k) inverse_[k] = 1.0 / (lead + shift_ - symbol_[k]);
    inverse_lead_ = lead;
  }
  std::vector<const Complex*> hist(static_cast<std::size_t>(q)), expl(static_cast<std::size_t>(q));
  std::vector<double> ha(static_cast<std::size_t>(q));
  for (int j = 0; j < q; ++j) ha[static_cast<std::size_t>(j)] = -a[static_cast<std::size_t>(j + 1)] / dt;
  for (std::size_t c = 0; c < ncomp; ++c) {
    for (int j = 0; j < q; ++j) {
      hist[static_cast<std::size_t>(j)] = state.history[static_cast<std::size_t>(j)][c].coeffs().data();
      expl[static_cast<std::size_t>(j)] = state.explicit_terms[static_cast<std::size_t>(j)][c].coeffs().data();
    }
    Complex* out = target[c].coeffs().data();
    const std::size_t n = target[c].coeffs().size();
    for (std::size_t k = 0; k < n; ++k) {
      Complex rhs{};
      for (int j = 0; j < q; ++j) rhs += ha[static_cast<std::size_t>(j)] * hist[static_cast<std::size_t>(j)][k];
      for (int j = 0; j < q; ++j) rhs += b[static_cast<std::size_t>(j)] * expl[static_cast<std::size_t>(j)][k];
      out[k] = rhs * inverse_[k];
    }
    target[c].symmetrize();
  }
  FieldSet next;
  FieldSet next_b;
  if (recycle) {
    next = std::move(state.history.back());
    next_b = std::move(state.explicit_terms.back());
    state.history.pop_back();
    state.explicit_terms.pop_back();
  } else {
    next = std::move(fresh);
  }
  ++state.steps;
  check(next, state.time());
  explicit_term(state.time(), next, next_b, forcing);
  state.history.push_front(std::move(next));
  state.explicit_terms.push_front(std::move(next_b));
  while (state.active_order() > cfg_.order) {
    state.history.pop_back();
    state.explicit_terms.pop_back();
  }
}

}  // namespace ks2d
