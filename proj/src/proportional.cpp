#include "ks2d/proportional.hpp"

namespace ks2d {

double observe(const SpectralField& eta, Point x) { return evaluate(eta, x.x, x.y); }

double critical_gain(double kappa) {
  if (kappa > 1.0) return 0.0;
  return (1.0 - kappa) * (1.0 - kappa) / 4.0;
}

SpectralField full_field_damping(const SpectralField& eta, const SpectralField& target, double alpha) {
  SpectralField zeta = eta - target;
  zeta *= -alpha;
  return zeta;
}

void proportional_amplitudes(const SpectralField& eta, const SpectralField& target, double alpha,
                             ActuatorSpectrum& spectrum, std::span<double> phi) {
  if (!(alpha >= 0.0)) throw ConfigError("proportional gain must be nonnegative");
  const SpectralField w = eta - target;
  spectrum.observe(w, phi);
  for (double& v : phi) v *= -alpha;
}

SpectralField proportional_forcing(const SpectralField& eta, const SpectralField& target, double alpha,
                                   ActuatorSpectrum& spectrum, std::vector<double>* phi_out) {
  std::vector<double> phi(spectrum.size());
  proportional_amplitudes(eta, target, alpha, spectrum, phi);
  SpectralField zeta(eta.domain());
  spectrum.assemble(phi, zeta);
  if (phi_out) *phi_out = std::move(phi);
  return zeta;
}

}  // namespace ks2d
