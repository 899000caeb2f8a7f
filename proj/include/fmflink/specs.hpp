// specs.hpp — value types describing the physical link under study.
//
// These are plain aggregates filled either programmatically (tests,
// toys) or by the scenario loader. Each spec can append its own
// violations to an issue list; scenario validation collects the lot
// instead of stopping at the first problem.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fmflink/modes.hpp"

namespace fmflink {

struct ValidationIssue {
  std::string code;     // stable machine-readable tag, e.g. "fiber.length"
  std::string message;  // human-readable explanation

  friend bool operator==(const ValidationIssue&, const ValidationIssue&) = default;
};

/// Few-mode fibre described at the level of the power-flow model:
/// mode groups, intra/inter-group coupling rates and attenuation.
struct FiberSpec {
  double length_m = 0.0;

  /// Group membership per flat mode index (1-based group ids, size M).
  std::vector<int> group_of;

  /// Coupling rate shared by every mode pair inside one group [1/m].
  double intra_group_rate = 1.0;

  /// Symmetric Q x Q matrix of inter-group coupling rates D [1/m].
  /// The diagonal is ignored (intra coupling is set separately).
  Eigen::MatrixXd inter_group_d;

  /// Per-mode power attenuation coefficient [1/m], size M.
  Eigen::VectorXd attenuation;

  /// Admissible magnitude range for nonzero inter-group rates; also the
  /// search interval used when fitting D to measured data.
  double d_min = 1e-7;
  double d_max = 1e-2;

  int mode_count() const { return static_cast<int>(group_of.size()); }
  int group_count() const;

  void append_issues(std::vector<ValidationIssue>& issues,
                     const std::string& prefix = "fiber") const;

  /// Fibre with the default HG mode table, uniform attenuation and a
  /// zero inter-group matrix (fill in afterwards).
  static FiberSpec standard(double length_m, double attenuation_per_m = 0.0,
                            const ModeTable& table = default_mode_table());
};

/// Mode multiplexer / demultiplexer described by bench measurements.
struct MuxDemuxSpec {
  /// Signed per-channel insertion loss as dB transmission (<= 0), size M.
  Eigen::VectorXd insertion_loss_db;

  /// crosstalk_db(p_in, p_out): power leaking from input channel p_in to
  /// output p_out, in absolute dB relative to the input power. Entries
  /// of -inf mean "no measurable leak". The diagonal is ignored (it is
  /// fixed by the insertion loss).
  Eigen::MatrixXd crosstalk_db;

  /// Wavelength interval [nm] over which the measurements hold.
  std::pair<double, double> wavelength_validity_nm{0.0, 1e9};

  std::string label;

  int channel_count() const { return static_cast<int>(insertion_loss_db.size()); }

  void append_issues(std::vector<ValidationIssue>& issues,
                     const std::string& prefix) const;

  /// M channels, uniform insertion loss, no crosstalk.
  static MuxDemuxSpec uniform(int channels, double insertion_loss_db);
};

/// Single-photon detector reduced to efficiency plus dark counts.
struct DetectorSpec {
  std::string label;
  double efficiency = 1.0;     // in [0, 1]
  double dark_rate_hz = 0.0;   // >= 0

  void append_issues(std::vector<ValidationIssue>& issues,
                     const std::string& prefix) const;
};

/// Bandpass filter used to separate the quantum and classical bands.
struct WdmFilterSpec {
  std::string label;
  double center_nm = 1550.0;
  double bandwidth_nm = 1.0;       // full width of the passband
  double passband_loss_db = 0.0;   // signed transmission in band (<= 0)
  double extinction_db = 100.0;    // out-of-band suppression (> 0)

  bool in_band(double wavelength_nm) const {
    return wavelength_nm >= center_nm - bandwidth_nm / 2.0 &&
           wavelength_nm <= center_nm + bandwidth_nm / 2.0;
  }

  void append_issues(std::vector<ValidationIssue>& issues,
                     const std::string& prefix) const;
};

/// One transmitted channel: a mode/wavelength slot carrying either
/// heralded single photons or classical light.
struct Channel {
  enum class Kind { Quantum, Classical };

  Kind kind = Kind::Quantum;
  ModeId mode;
  double wavelength_nm = 1550.0;

  // Quantum channels: heralded pair rate referred to the link input.
  double pair_rate_hz = 0.0;
  // Classical channels: optical power at the link input [W].
  double power_w = 0.0;

  // Labels resolved against the scenario's filter/detector lists.
  std::string filter;
  std::string detector;
};

struct ChannelPlan {
  std::vector<Channel> channels;

  std::vector<const Channel*> quantum() const;
  std::vector<const Channel*> classical() const;

  /// Total heralded pair rate at the input [Hz].
  double total_pair_rate_hz() const;
};

}  // namespace fmflink
