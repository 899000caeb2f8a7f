// calibration.hpp — fitting inter-group coupling rates to measured
// group-to-group crosstalk.
//
// The forward model maps a candidate set of coupling rates D to the
// matrix of group transfer fractions over the fibre (optionally wrapped
// in the mux/demux transfer), expressed in dB. A derivative-free
// coordinate search over log10(D) brackets the optimum; a damped
// Gauss-Newton pass then polishes it. Everything is deterministic.
#pragma once

#include <vector>

#include <Eigen/Dense>

#include "fmflink/devices.hpp"
#include "fmflink/errors.hpp"
#include "fmflink/specs.hpp"

namespace fmflink {

/// How measured dB cells are referenced.
enum class XtNormalization {
  Absolute,              // 10 log10(P_out_group / P_launched)
  RelativeToInputGroup,  // 10 log10(P_out_group / P_same_group)
};

/// Which inter-group rates get their own parameter.
enum class DParameterization {
  AllPairs,      // one rate per unordered group pair
  AdjacentOnly,  // one rate per neighbouring pair, others fixed at 0
  AdjacentTied,  // a single rate shared by all neighbouring pairs
};

struct CalibrationOptions {
  DParameterization parameterization = DParameterization::AllPairs;
  XtNormalization normalization = XtNormalization::Absolute;

  /// When set, the forward model is demux * fibre * mux instead of the
  /// bare fibre (targets measured through the full link).
  const TransferMatrix* mux = nullptr;
  const TransferMatrix* demux = nullptr;

  int max_iterations = 100;      // Gauss-Newton iteration cap
  int grid_points = 25;          // coarse scan per coordinate
  int golden_iterations = 40;    // bracket refinement per coordinate
  int coordinate_sweeps = 2;
};

struct CalibrationResult {
  Eigen::MatrixXd inter_group_d;  // fitted Q x Q rate matrix [1/m]
  double rms_residual_db = 0.0;   // over unmasked cells
  int iterations = 0;             // Gauss-Newton iterations spent
  long evaluations = 0;           // forward-model evaluations
  bool converged = false;
};

/// Optimiser stalled before meeting its convergence criteria; `best`
/// holds the best point found so far.
class CalibrationError : public Error {
public:
  CalibrationError(std::string msg, CalibrationResult best)
      : Error(std::move(msg)), best(std::move(best)) {}
  CalibrationResult best;
};

/// Fits inter-group coupling rates so the modelled group crosstalk
/// matches `targets_db` (Q x Q). Cells that are NaN or -inf are masked
/// out of the fit. Rates are searched within [fiber.d_min, fiber.d_max];
/// cells that carry no information settle at the lower bound. The
/// fibre's own inter_group_d is ignored.
CalibrationResult calibrate_coupling(const Eigen::MatrixXd& targets_db,
                                     const FiberSpec& fiber,
                                     const CalibrationOptions& options = {});

/// Forward model used by the fit: group-to-group transfer in dB for the
/// given fibre (with its inter_group_d), normalised per `options`.
Eigen::MatrixXd modelled_group_crosstalk_db(const FiberSpec& fiber,
                                            const CalibrationOptions& options = {});

}  // namespace fmflink
