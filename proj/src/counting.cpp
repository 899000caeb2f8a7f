#include "fmflink/counting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fmflink/errors.hpp"
#include "fmflink/units.hpp"

namespace fmflink {

bool EventStream::is_sorted() const {
  return std::is_sorted(timestamps.begin(), timestamps.end());
}

void EventStream::validate() const {
  if (!is_sorted())
    throw std::invalid_argument("EventStream '" + label + "' is not time-ordered");
  if (!timestamps.empty() &&
      (timestamps.front() < 0.0 || timestamps.back() >= duration_s))
    throw std::invalid_argument("EventStream '" + label +
                                "' has events outside the acquisition window");
}

EventStream poisson_stream(double rate_hz, double duration_s, RandomStream& rng) {
  if (!(rate_hz >= 0.0))
    throw std::invalid_argument("poisson_stream: rate must be >= 0");
  if (!(duration_s > 0.0))
    throw std::invalid_argument("poisson_stream: duration must be > 0");

  EventStream stream;
  stream.duration_s = duration_s;
  if (rate_hz == 0.0) return stream;

  const double expected = rate_hz * duration_s;
  stream.timestamps.reserve(static_cast<std::size_t>(
      expected + 5.0 * std::sqrt(expected) + 16.0));
  double t = rng.exponential(rate_hz);
  while (t < duration_s) {
    stream.timestamps.push_back(t);
    t += rng.exponential(rate_hz);
  }
  return stream;
}

EventStream thin_stream(const EventStream& stream, double survival,
                        RandomStream& rng) {
  if (survival < 0.0 || survival > 1.0)
    throw std::invalid_argument("thin_stream: survival must lie in [0, 1]");
  EventStream out;
  out.duration_s = stream.duration_s;
  out.label = stream.label;
  if (survival == 0.0) return out;
  out.timestamps.reserve(static_cast<std::size_t>(
      static_cast<double>(stream.size()) * survival + 16.0));
  for (double t : stream.timestamps)
    if (rng.bernoulli(survival)) out.timestamps.push_back(t);
  return out;
}

std::vector<EventStream> split_stream(const EventStream& stream,
                                      const std::vector<double>& shares,
                                      RandomStream& rng) {
  double total = 0.0;
  for (double s : shares) {
    if (!(s >= 0.0))
      throw std::invalid_argument("split_stream: shares must be >= 0");
    total += s;
  }
  if (total > 1.0 + 1e-12)
    throw std::invalid_argument("split_stream: shares sum to more than 1");

  std::vector<double> cumulative(shares.size());
  std::partial_sum(shares.begin(), shares.end(), cumulative.begin());

  std::vector<EventStream> out(shares.size());
  for (auto& s : out) s.duration_s = stream.duration_s;
  for (double t : stream.timestamps) {
    const std::size_t bucket = rng.categorical(cumulative);
    if (bucket < out.size()) out[bucket].timestamps.push_back(t);
    // beyond the last boundary: the event is lost
  }
  return out;
}

EventStream merge_streams(const EventStream& a, const EventStream& b) {
  if (a.duration_s != b.duration_s)
    throw std::invalid_argument("merge_streams: acquisition windows differ");
  EventStream out;
  out.duration_s = a.duration_s;
  out.label = a.label;
  out.timestamps.resize(a.size() + b.size());
  std::merge(a.timestamps.begin(), a.timestamps.end(), b.timestamps.begin(),
             b.timestamps.end(), out.timestamps.begin());
  return out;
}

EventStream add_background(const EventStream& stream, double rate_hz,
                           RandomStream& rng) {
  if (rate_hz == 0.0) return stream;
  return merge_streams(stream, poisson_stream(rate_hz, stream.duration_s, rng));
}

void CountingConfig::validate() const {
  if (!(pair_rate_in_hz >= 0.0))
    throw std::invalid_argument("CountingConfig: pair rate must be >= 0");
  if (!(window_s > 0.0))
    throw std::invalid_argument("CountingConfig: coincidence window must be > 0");
  if (!(acquisition_s > 0.0))
    throw std::invalid_argument("CountingConfig: acquisition time must be > 0");
  if (repetitions < 1)
    throw std::invalid_argument("CountingConfig: repetitions must be >= 1");
}

std::pair<EventStream, EventStream> simulate_pair_stream(const CountingConfig& config,
                                                         RandomStream& rng) {
  config.validate();
  EventStream signal = poisson_stream(config.pair_rate_in_hz, config.acquisition_s, rng);
  signal.label = "signal";
  EventStream herald = signal;
  herald.label = "herald";
  return {std::move(signal), std::move(herald)};
}

CoincidenceCount count_coincidences(const EventStream& a, const EventStream& b,
                                    double window_s, bool all_pairs) {
  if (!(window_s >= 0.0))
    throw std::invalid_argument("count_coincidences: window must be >= 0");
  a.validate();
  b.validate();
  if (a.duration_s != b.duration_s)
    throw std::invalid_argument("count_coincidences: acquisition windows differ");

  CoincidenceCount result;
  const auto& ta = a.timestamps;
  const auto& tb = b.timestamps;

  if (all_pairs) {
    // Every (i, j) with |ta_i - tb_j| <= window counts.
    std::size_t lo = 0, hi = 0;
    for (double t : ta) {
      while (lo < tb.size() && tb[lo] < t - window_s) ++lo;
      if (hi < lo) hi = lo;
      while (hi < tb.size() && tb[hi] <= t + window_s) ++hi;
      result.count += hi - lo;
    }
  } else {
    // Greedy one-to-one pairing in time order: each event closes at
    // most one coincidence, the standard counter behaviour.
    std::size_t i = 0, j = 0;
    while (i < ta.size() && j < tb.size()) {
      const double dt = ta[i] - tb[j];
      if (std::abs(dt) <= window_s) {
        ++result.count;
        ++i;
        ++j;
      } else if (dt > 0.0) {
        ++j;
      } else {
        ++i;
      }
    }
  }

  result.rate_hz = a.duration_s > 0.0
                       ? static_cast<double>(result.count) / a.duration_s
                       : 0.0;
  return result;
}

double accidental_rate(double r1_hz, double r2_hz, double window_s) {
  if (!(r1_hz >= 0.0) || !(r2_hz >= 0.0) || !(window_s >= 0.0))
    throw std::invalid_argument("accidental_rate: arguments must be >= 0");
  return 2.0 * r1_hz * r2_hz * window_s;
}

OutputRatio output_ratio(double rc_hz, double ra_hz, double r_in_hz) {
  if (!(r_in_hz > 0.0))
    throw std::domain_error("output_ratio: input pair rate must be positive");
  OutputRatio out;
  out.l_p = (rc_hz - ra_hz) / r_in_hz;
  out.eps_hz = ra_hz / r_in_hz;
  return out;
}

FqpResult fractional_quantum_power(const Eigen::VectorXd& rc_hz,
                                   const Eigen::VectorXd& ra_hz, double r_in_hz,
                                   const Eigen::VectorXd& insertion_loss_db) {
  const auto n = rc_hz.size();
  if (ra_hz.size() != n || insertion_loss_db.size() != n)
    throw std::invalid_argument("fractional_quantum_power: size mismatch");
  if (!(r_in_hz > 0.0))
    throw std::domain_error("fractional_quantum_power: input rate must be positive");

  FqpResult result;
  result.weights = Eigen::VectorXd::Zero(n);
  result.fqp_error = Eigen::VectorXd::Zero(n);
  result.clamped.assign(static_cast<std::size_t>(n), false);

  // Loss-compensated net pair fraction per port; the compensation
  // divides by the port's reference transmission 10^(IL/10).
  Eigen::VectorXd error_weights(n);
  for (Eigen::Index p = 0; p < n; ++p) {
    const double transmission = db_to_linear(insertion_loss_db(p));
    const double net = (rc_hz(p) - ra_hz(p)) / (r_in_hz * transmission);
    error_weights(p) = ra_hz(p) / (r_in_hz * transmission);
    if (net < 0.0) {
      result.clamped[static_cast<std::size_t>(p)] = true;
      result.weights(p) = 0.0;
    } else {
      result.weights(p) = net;
    }
  }

  const double total = result.weights.sum();
  if (!(total > 0.0))
    throw NoSignalError(
        "fractional_quantum_power: no port carries a positive net rate");

  result.fqp = result.weights / total;
  result.fqp_error = error_weights / total;

  // The unit-sum contract is checked against Eigen's own reduction
  // (whose packet order differs from a scalar loop), so the fold drives
  // that reduction to 1.0. Coarse residue corrections into the largest
  // fraction land within a few ulps; single-ulp walks finish the job.
  // A walk on one element can still hop over 1.0 when the step flips an
  // intermediate rounding, so further elements are tried in turn — each
  // feeds a different point of the reduction chain. Clamped (exact 0)
  // entries are never touched.
  Eigen::Index argmax = 0;
  result.fqp.maxCoeff(&argmax);
  for (int attempt = 0; attempt < 4; ++attempt) {
    const double sum = result.fqp.sum();
    if (sum == 1.0) break;
    result.fqp(argmax) += 1.0 - sum;
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return result.fqp(a) > result.fqp(b);
  });
  for (const Eigen::Index p : order) {
    if (result.fqp.sum() == 1.0) break;
    if (!(result.fqp(p) > 0.0)) continue;
    const double start = result.fqp(p);
    for (int attempt = 0; attempt < 256; ++attempt) {
      const double sum = result.fqp.sum();
      if (sum == 1.0) break;
      result.fqp(p) = std::nextafter(result.fqp(p), sum < 1.0 ? 2.0 : -2.0);
    }
    // A miss leaves a one-ulp oscillation; restore and try the next
    // element rather than keeping the perturbed value.
    if (result.fqp.sum() != 1.0) result.fqp(p) = start;
  }
  return result;
}

Eigen::VectorXd group_fractions(const Eigen::VectorXd& per_port,
                                const std::vector<int>& group_of) {
  if (per_port.size() != static_cast<Eigen::Index>(group_of.size()))
    throw std::invalid_argument("group_fractions: size mismatch");
  int q = 0;
  for (int g : group_of) q = std::max(q, g);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(q);
  for (Eigen::Index p = 0; p < per_port.size(); ++p)
    out(group_of[static_cast<std::size_t>(p)] - 1) += per_port(p);
  return out;
}

SnrResult snr(double rc_off_hz, double rc_on_hz, double ra_hz) {
  if (!(rc_off_hz >= 0.0) || !(rc_on_hz >= 0.0) || !(ra_hz >= 0.0))
    throw std::invalid_argument("snr: rates must be >= 0");

  SnrResult result;
  const double noise = rc_on_hz - rc_off_hz;
  const double signal = rc_off_hz - ra_hz;
  if (!(noise > 0.0)) {
    // The classical channel adds no measurable coincidences.
    result.finite = false;
    result.exact_db = std::numeric_limits<double>::infinity();
    result.approx_db = std::numeric_limits<double>::infinity();
    return result;
  }
  if (!(signal > 0.0))
    throw NoSignalError("snr: coincidence rate does not exceed the accidentals");
  result.exact_db = 10.0 * std::log10(signal / noise);
  result.approx_db = 10.0 * std::log10(rc_off_hz / noise);
  return result;
}

}  // namespace fmflink
