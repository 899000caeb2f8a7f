#include "fmflink/devices.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fmflink/errors.hpp"
#include "fmflink/units.hpp"

namespace fmflink {

void TransferMatrix::validate() const {
  if (t.rows() != t.cols())
    throw std::invalid_argument("TransferMatrix: matrix must be square");
  if (!t.allFinite())
    throw std::invalid_argument("TransferMatrix: entries must be finite");
  if (t.size() > 0 && t.minCoeff() < 0.0)
    throw std::invalid_argument("TransferMatrix: entries must be >= 0");
  for (int c = 0; c < t.cols(); ++c)
    if (t.col(c).sum() > 1.0 + 1e-12)
      throw std::invalid_argument(
          "TransferMatrix: column " + std::to_string(c + 1) +
          " sums to more than 1; the device would create power");
}

TransferMatrix mux_from_measurements(const MuxDemuxSpec& spec) {
  std::vector<ValidationIssue> issues;
  spec.append_issues(issues, "device");
  if (!issues.empty())
    throw std::invalid_argument("mux_from_measurements: " + issues.front().message);

  const int m = spec.channel_count();
  TransferMatrix device;
  device.wavelength_validity_nm = spec.wavelength_validity_nm;
  device.t = Eigen::MatrixXd::Zero(m, m);

  for (int in = 0; in < m; ++in) {
    const double total = db_to_linear(spec.insertion_loss_db(in));
    double leaked = 0.0;
    for (int out = 0; out < m; ++out) {
      if (out == in) continue;
      const double xt = spec.crosstalk_db(in, out);
      const double leak = std::isinf(xt) ? 0.0 : db_to_linear(xt);
      device.t(out, in) = leak;
      leaked += leak;
    }
    const double through = total - leaked;
    if (through <= 0.0)
      throw InfeasibleDevice(
          "mux_from_measurements: channel " + std::to_string(in + 1) +
          " leaks " + std::to_string(leaked) + " of its input but only " +
          std::to_string(total) +
          " arrives in total; crosstalk and insertion loss are inconsistent");
    device.t(in, in) = through;
  }
  device.validate();
  return device;
}

Eigen::VectorXd apply_transfer(const TransferMatrix& device,
                               const Eigen::VectorXd& input) {
  if (input.size() != device.t.cols())
    throw std::invalid_argument("apply_transfer: input has " +
                                std::to_string(input.size()) + " channels, device has " +
                                std::to_string(device.t.cols()));
  return device.t * input;
}

double apply_wdm_filter(const WdmFilterSpec& filter, double wavelength_nm,
                        double power_w) {
  if (!(power_w >= 0.0))
    throw std::invalid_argument("apply_wdm_filter: power must be >= 0");
  const double gain_db = filter.in_band(wavelength_nm)
                             ? filter.passband_loss_db
                             : filter.passband_loss_db - filter.extinction_db;
  return power_w * db_to_linear(gain_db);
}

DetectorResponse detect(const DetectorSpec& detector, double incident_hz,
                        double background_hz) {
  if (!(incident_hz >= 0.0) || !(background_hz >= 0.0))
    throw std::invalid_argument("detect: rates must be >= 0");
  DetectorResponse response;
  response.signal_hz = detector.efficiency * incident_hz;
  response.leakage_hz = detector.efficiency * background_hz;
  response.dark_hz = detector.dark_rate_hz;
  response.total_hz = response.signal_hz + response.leakage_hz + response.dark_hz;
  return response;
}

}  // namespace fmflink
