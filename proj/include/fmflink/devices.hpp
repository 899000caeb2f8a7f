// devices.hpp — passive device models: mode (de)multiplexers, bandpass
// filters and single-photon detectors.
#pragma once

#include <utility>

#include <Eigen/Dense>

#include "fmflink/specs.hpp"

namespace fmflink {

/// Linear power transfer of a passive device. t(out, in) is the power
/// fraction routed from input channel `in` to output `out`; every
/// column therefore sums to at most 1.
struct TransferMatrix {
  Eigen::MatrixXd t;
  std::pair<double, double> wavelength_validity_nm{0.0, 1e9};

  int channel_count() const { return static_cast<int>(t.rows()); }

  bool covers(double wavelength_nm) const {
    return wavelength_nm >= wavelength_validity_nm.first &&
           wavelength_nm <= wavelength_validity_nm.second;
  }

  /// Throws std::invalid_argument on negative entries or column sums
  /// beyond 1 (within rounding).
  void validate() const;
};

/// Builds the transfer matrix implied by bench measurements: insertion
/// loss fixes each column's total transmission, crosstalk entries fix
/// the off-diagonal leaks, and the through term absorbs the remainder.
/// Throws InfeasibleDevice when the measured leaks already exceed the
/// measured total (no passive device can do that).
TransferMatrix mux_from_measurements(const MuxDemuxSpec& spec);

/// Applies the device to a vector of per-channel powers (or photon
/// rates; the model is linear so units pass through).
Eigen::VectorXd apply_transfer(const TransferMatrix& device,
                               const Eigen::VectorXd& input);

/// Power leaving a bandpass filter for light of the given wavelength:
/// passband loss inside the band, extinction outside.
double apply_wdm_filter(const WdmFilterSpec& filter, double wavelength_nm,
                        double power_w);

/// Expected click-rate decomposition of a detector looking at a port.
struct DetectorResponse {
  double signal_hz = 0.0;   // detected share of the incident photons
  double leakage_hz = 0.0;  // detected share of background photons
  double dark_hz = 0.0;     // detector-intrinsic counts
  double total_hz = 0.0;
};

/// Incident and background photon rates -> expected click rates.
DetectorResponse detect(const DetectorSpec& detector, double incident_hz,
                        double background_hz = 0.0);

}  // namespace fmflink
