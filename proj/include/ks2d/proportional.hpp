#pragma once

#include <span>
#include <vector>

#include "ks2d/actuation.hpp"
#include "ks2d/spectral.hpp"

namespace ks2d {

/// Point observation eta(x) by Fourier-series evaluation.
double observe(const SpectralField& eta, Point x);

/// alpha_c = (1-kappa)^2/4 for kappa <= 1, else 0: the smallest full-field
/// damping that makes every mode decay.
double critical_gain(double kappa);

/// zeta = -alpha (eta - target).
SpectralField full_field_damping(const SpectralField& eta, const SpectralField& target, double alpha);

/// Pinning amplitudes phi_j = -alpha [eta(x_j) - target(x_j)].
void proportional_amplitudes(const SpectralField& eta, const SpectralField& target, double alpha,
                             ActuatorSpectrum& spectrum, std::span<double> phi);

/// zeta = sum_j phi_j b^j with the pinning amplitudes; phi is returned through
/// phi_out when given.
SpectralField proportional_forcing(const SpectralField& eta, const SpectralField& target, double alpha,
                                   ActuatorSpectrum& spectrum, std::vector<double>* phi_out = nullptr);

}  // namespace ks2d
