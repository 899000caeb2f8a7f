// power_flow.hpp — coupled power-flow model of random mode coupling.
//
// The average power P_p(z) carried by mode p obeys the linear system
//
//   dP_p/dz = -alpha_p P_p + sum_q d_pq (P_q - P_p)
//
// with a symmetric coupling-rate matrix d. Collecting the right-hand
// side into a generator G, the system is linear and autonomous, so a
// fixed-step RK4 integrator reduces to repeated application of one
// precomputed step operator (the degree-4 Taylor polynomial of exp(hG)).
// That keeps long hauls cheap and lets many launch vectors share one
// propagation pass.
#pragma once

#include <vector>

#include <Eigen/Dense>

#include "fmflink/specs.hpp"

namespace fmflink {

/// Symmetric per-mode coupling-rate matrix d_pq [1/m], zero diagonal.
struct CouplingMatrix {
  Eigen::MatrixXd d;

  int mode_count() const { return static_cast<int>(d.rows()); }

  /// Throws std::invalid_argument on asymmetry, negative rates or a
  /// nonzero diagonal.
  void validate() const;
};

/// Expands a FiberSpec into the full M x M coupling-rate matrix:
/// intra_group_rate inside each group, inter_group_d(g, g') across.
CouplingMatrix build_coupling_matrix(const FiberSpec& fiber);

/// Generator G of dP/dz = G P: off-diagonal d_pq, diagonal
/// -(sum_q d_pq + alpha_p). Columns of G sum to -alpha, so total power
/// is conserved exactly when alpha == 0.
template <typename DerivedD, typename DerivedA>
Eigen::Matrix<typename DerivedD::Scalar, Eigen::Dynamic, Eigen::Dynamic>
flow_generator(const Eigen::MatrixBase<DerivedD>& d,
               const Eigen::MatrixBase<DerivedA>& alpha) {
  using Scalar = typename DerivedD::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Mat g = d;
  g.diagonal().setZero();
  const Vec rowsum = g.rowwise().sum();
  g.diagonal() = -rowsum - alpha;
  return g;
}

/// One-step RK4 map S(h) = I + hG + (hG)^2/2 + (hG)^3/6 + (hG)^4/24,
/// evaluated in Horner form. Applying S once advances any state vector
/// of the linear system by h; this is exactly what classical RK4 does
/// for an autonomous linear right-hand side.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
rk4_step_operator(const Eigen::MatrixBase<Derived>& gen,
                  typename Derived::Scalar h) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const auto n = gen.rows();
  const Mat hg = h * gen;
  Mat s = Mat::Identity(n, n) + hg / Scalar(4);
  s = Mat::Identity(n, n) + (hg / Scalar(3)) * s;
  s = Mat::Identity(n, n) + (hg / Scalar(2)) * s;
  s = Mat::Identity(n, n) + hg * s;
  return s;
}

/// Default step choice: h = min(0.1 / max_row_sum(d + diag(alpha)),
/// length / 100). The first term keeps the fastest local rate well
/// inside the RK4 stability region; the second guarantees resolution
/// on short spans. Rate-free systems fall back to length / 100.
double auto_step(const CouplingMatrix& coupling, const Eigen::VectorXd& alpha,
                 double length_m);

struct PropagationOptions {
  /// Step width [m]; 0 requests auto_step(). The actual width is
  /// length / N for the smallest integer N that does not exceed it.
  double step_m = 0.0;
  /// If > 0, record approximately this many intermediate states.
  int trace_samples = 0;
};

struct PropagationResult {
  Eigen::VectorXd final;        // per-mode powers at z = length
  double length_m = 0.0;
  double step_m = 0.0;          // step actually used
  std::vector<double> trace_z;  // sample positions (includes 0 and length)
  std::vector<Eigen::VectorXd> trace;
};

/// Integrates the power-flow system from z = 0 to z = length.
/// Throws InstabilityError if the state turns non-finite or develops
/// negative entries beyond rounding noise (oversized step).
PropagationResult propagate_power(const CouplingMatrix& coupling,
                                  const Eigen::VectorXd& alpha,
                                  const Eigen::VectorXd& p0, double length_m,
                                  const PropagationOptions& options = {});

/// Propagates every column of p0 in one pass; same stepping and
/// stability checks as propagate_power.
Eigen::MatrixXd propagate_power_batch(const CouplingMatrix& coupling,
                                      const Eigen::VectorXd& alpha,
                                      const Eigen::MatrixXd& p0,
                                      double length_m, double step_m = 0.0);

/// M x M power transfer matrix of the bare fibre over the given length,
/// obtained by propagating the identity (column p = response to unit
/// launch in mode p).
Eigen::MatrixXd fiber_transfer(const FiberSpec& fiber, double step_m = 0.0);

/// Q x Q matrix of power fractions: entry (g_in, g_out) is the share of
/// power launched uniformly into group g_in that exits in group g_out.
/// Lossless fibres produce rows summing to 1.
Eigen::MatrixXd group_transfer_fractions(const FiberSpec& fiber,
                                         double step_m = 0.0);

/// Exact transfer matrix exp(G * length) via eigendecomposition of the
/// symmetric generator. Used where many transfer evaluations are needed
/// (calibration inner loops); agrees with the RK4 route to the step
/// truncation error.
Eigen::MatrixXd flow_exponential(const CouplingMatrix& coupling,
                                 const Eigen::VectorXd& alpha, double length_m);

/// Asymptotic mode distribution (unit total power) reached for z -> inf,
/// computed by power iteration on the one-metre transfer operator with
/// operator squaring when convergence is slow. Throws
/// NonUniqueSteadyState if the coupling graph is disconnected.
Eigen::VectorXd steady_state_distribution(const CouplingMatrix& coupling,
                                          const Eigen::VectorXd& alpha);

}  // namespace fmflink
