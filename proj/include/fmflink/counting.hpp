// counting.hpp — photon event streams, coincidence counting and the
// derived link estimators.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fmflink/rng.hpp"

namespace fmflink {

/// Time-tagged detection events within one acquisition window.
struct EventStream {
  std::vector<double> timestamps;  // seconds, ascending
  double duration_s = 0.0;         // acquisition window [0, duration)
  std::string label;

  std::size_t size() const { return timestamps.size(); }
  double rate_hz() const {
    return duration_s > 0.0 ? static_cast<double>(timestamps.size()) / duration_s
                            : 0.0;
  }
  bool is_sorted() const;
  /// Throws std::invalid_argument if unsorted or outside [0, duration).
  void validate() const;
};

/// Homogeneous Poisson arrivals over [0, duration).
EventStream poisson_stream(double rate_hz, double duration_s, RandomStream& rng);

/// Keeps each event with probability `survival` (independent draws).
EventStream thin_stream(const EventStream& stream, double survival,
                        RandomStream& rng);

/// Routes each event into one of `shares.size()` output streams (or
/// drops it when the shares sum to less than 1). Shares must be
/// nonnegative with a total <= 1 + rounding.
std::vector<EventStream> split_stream(const EventStream& stream,
                                      const std::vector<double>& shares,
                                      RandomStream& rng);

/// Merges two streams defined over the same acquisition window.
EventStream merge_streams(const EventStream& a, const EventStream& b);

/// Adds an independent Poisson background of the given rate.
EventStream add_background(const EventStream& stream, double rate_hz,
                           RandomStream& rng);

struct CountingConfig {
  double pair_rate_in_hz = 0.0;  // heralded pairs per second at the input
  double window_s = 4e-9;        // coincidence window t_c
  double acquisition_s = 3.0;    // acquisition time per repetition
  int repetitions = 1;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on nonpositive window/acquisition,
  /// negative rate or repetitions < 1.
  void validate() const;
};

/// Perfectly correlated signal/herald pair streams at the input.
std::pair<EventStream, EventStream> simulate_pair_stream(const CountingConfig& config,
                                                         RandomStream& rng);

struct CoincidenceCount {
  std::size_t count = 0;
  double rate_hz = 0.0;
};

/// Counts coincidences |t_a - t_b| <= window. The default pairs each
/// event with at most one partner (greedy in time order); all_pairs
/// counts every pair within the window instead.
CoincidenceCount count_coincidences(const EventStream& a, const EventStream& b,
                                    double window_s, bool all_pairs = false);

/// Expected accidental coincidence rate 2 R1 R2 t_c of two independent
/// streams.
double accidental_rate(double r1_hz, double r2_hz, double window_s);

struct OutputRatio {
  double l_p = 0.0;    // (R_cp - R_ap) / R_in
  double eps_hz = 0.0; // accidental-driven uncertainty R_ap / R_in
};

/// Per-port output ratio with its accidental correction.
/// Throws std::domain_error when r_in is not positive.
OutputRatio output_ratio(double rc_hz, double ra_hz, double r_in_hz);

struct FqpResult {
  Eigen::VectorXd fqp;        // fractions, sums to exactly 1
  Eigen::VectorXd fqp_error;  // propagated accidental uncertainty
  Eigen::VectorXd weights;    // loss-compensated net rates before normalising
  std::vector<bool> clamped;  // true where a negative net rate was clamped to 0
};

/// Fractional distribution of the transmitted quantum power across the
/// output ports: net coincidence rates, compensated for each port's
/// reference insertion loss (signed dB), normalised to unit total. The
/// total is adjusted onto 1.0 exactly (largest element absorbs the
/// rounding residue). Throws NoSignalError when every net rate is <= 0.
FqpResult fractional_quantum_power(const Eigen::VectorXd& rc_hz,
                                   const Eigen::VectorXd& ra_hz, double r_in_hz,
                                   const Eigen::VectorXd& insertion_loss_db);

/// Sums per-port fractions into per-group fractions.
Eigen::VectorXd group_fractions(const Eigen::VectorXd& per_port,
                                const std::vector<int>& group_of);

struct SnrResult {
  bool finite = true;      // false: no measurable crosstalk noise
  double exact_db = 0.0;   // 10 log10((Rc0 - Ra) / (RcP - Rc0))
  double approx_db = 0.0;  // 10 log10(Rc0 / (RcP - Rc0))
};

/// In-band signal-to-noise ratio of a quantum channel against the extra
/// coincidences driven by classical power. `rc_off_hz` and `rc_on_hz`
/// are the coincidence rates with the classical channels off and on.
SnrResult snr(double rc_off_hz, double rc_on_hz, double ra_hz);

}  // namespace fmflink
