// units.hpp — unit conversions and physical constants.
//
// Sign convention used throughout: quantities stored in dB are signed
// transmissions, so a lossy element carries a negative number and
// linear factors come out of db_to_linear() in (0, 1].
#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fmflink {

// CODATA 2018 exact values.
inline constexpr double kPlanck = 6.62607015e-34;        // J s
inline constexpr double kSpeedOfLight = 299792458.0;     // m / s

/// dB -> linear power ratio. -inf dB maps to exactly 0.
inline double db_to_linear(double db) {
  return std::pow(10.0, db / 10.0);
}

/// Linear power ratio -> dB. Requires ratio > 0.
inline double linear_to_db(double ratio) {
  if (!(ratio > 0.0))
    throw std::domain_error("linear_to_db: ratio must be positive");
  return 10.0 * std::log10(ratio);
}

/// Energy of one photon at the given vacuum wavelength [J].
inline double photon_energy(double wavelength_nm) {
  if (!(wavelength_nm > 0.0))
    throw std::domain_error("photon_energy: wavelength must be positive");
  return kPlanck * kSpeedOfLight / (wavelength_nm * 1e-9);
}

/// Fibre attenuation figure [dB/km] -> power attenuation coefficient [1/m].
inline double attenuation_coefficient(double db_per_km) {
  return db_per_km * std::log(10.0) / 10.0 / 1000.0;
}

inline constexpr double kInfDb = std::numeric_limits<double>::infinity();

}  // namespace fmflink
