#include "fmflink/power_flow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fmflink/errors.hpp"

namespace fmflink {

namespace {

// Negative excursions larger than this fraction of the launched total
// are treated as numerical blow-up rather than rounding noise.
constexpr double kNegativityTolerance = 1e-9;

long step_count(double length_m, double step_m) {
  // Smallest N with length / N <= requested step.
  const long n = static_cast<long>(std::ceil(length_m / step_m - 1e-12));
  return std::max<long>(n, 1);
}

void check_state(const Eigen::MatrixXd& state, double scale, std::size_t step_index,
                 double z, double h) {
  if (!state.allFinite())
    throw InstabilityError(
        "power-flow integration diverged (non-finite state) at z = " +
            std::to_string(z) + " m with step " + std::to_string(h) +
            " m; reduce the step width",
        step_index, z, h);
  if (state.minCoeff() < -kNegativityTolerance * scale)
    throw InstabilityError(
        "power-flow integration produced negative mode powers at z = " +
            std::to_string(z) + " m with step " + std::to_string(h) +
            " m; reduce the step width",
        step_index, z, h);
}

// Shared fixed-step driver: advances `state` (one column per launch
// vector) through n steps of the precomputed RK4 operator, checking
// stability as it goes. `on_sample` is invoked after selected steps.
template <typename SampleFn>
void run_steps(const Eigen::MatrixXd& step_op, Eigen::MatrixXd& state,
               long n_steps, double h, double scale, SampleFn&& on_sample) {
  for (long k = 1; k <= n_steps; ++k) {
    state = step_op * state;
    check_state(state, scale, static_cast<std::size_t>(k), k * h, h);
    on_sample(k);
  }
}

}  // namespace

void CouplingMatrix::validate() const {
  if (d.rows() != d.cols())
    throw std::invalid_argument("CouplingMatrix: matrix must be square");
  if (!d.allFinite())
    throw std::invalid_argument("CouplingMatrix: rates must be finite");
  for (int i = 0; i < d.rows(); ++i) {
    if (d(i, i) != 0.0)
      throw std::invalid_argument("CouplingMatrix: diagonal must be zero");
    for (int j = i + 1; j < d.cols(); ++j) {
      if (d(i, j) < 0.0)
        throw std::invalid_argument("CouplingMatrix: rates must be >= 0");
      if (d(i, j) != d(j, i))
        throw std::invalid_argument("CouplingMatrix: matrix must be symmetric");
    }
  }
}

CouplingMatrix build_coupling_matrix(const FiberSpec& fiber) {
  const int m = fiber.mode_count();
  const int q = fiber.group_count();
  if (fiber.inter_group_d.rows() != q || fiber.inter_group_d.cols() != q)
    throw std::invalid_argument(
        "build_coupling_matrix: inter-group matrix must be QxQ");

  CouplingMatrix cm;
  cm.d = Eigen::MatrixXd::Zero(m, m);
  for (int p = 0; p < m; ++p) {
    for (int r = p + 1; r < m; ++r) {
      const int gp = fiber.group_of[static_cast<std::size_t>(p)];
      const int gr = fiber.group_of[static_cast<std::size_t>(r)];
      const double rate = (gp == gr) ? fiber.intra_group_rate
                                     : fiber.inter_group_d(gp - 1, gr - 1);
      cm.d(p, r) = rate;
      cm.d(r, p) = rate;
    }
  }
  cm.validate();
  return cm;
}

double auto_step(const CouplingMatrix& coupling, const Eigen::VectorXd& alpha,
                 double length_m) {
  const Eigen::VectorXd row_rates = coupling.d.rowwise().sum() + alpha;
  const double max_rate = row_rates.size() > 0 ? row_rates.maxCoeff() : 0.0;
  const double resolution = length_m / 100.0;
  if (max_rate <= 0.0) return resolution;
  return std::min(0.1 / max_rate, resolution);
}

PropagationResult propagate_power(const CouplingMatrix& coupling,
                                  const Eigen::VectorXd& alpha,
                                  const Eigen::VectorXd& p0, double length_m,
                                  const PropagationOptions& options) {
  coupling.validate();
  const int m = coupling.mode_count();
  if (alpha.size() != m || p0.size() != m)
    throw std::invalid_argument("propagate_power: dimension mismatch");
  if (!(length_m >= 0.0))
    throw std::invalid_argument("propagate_power: length must be >= 0");
  if (p0.minCoeff() < 0.0)
    throw std::invalid_argument("propagate_power: launch powers must be >= 0");

  PropagationResult result;
  result.length_m = length_m;

  if (length_m == 0.0) {
    result.final = p0;
    result.step_m = 0.0;
    if (options.trace_samples > 0) {
      result.trace_z = {0.0};
      result.trace = {p0};
    }
    return result;
  }

  const double requested =
      options.step_m > 0.0 ? options.step_m : auto_step(coupling, alpha, length_m);
  const long n = step_count(length_m, requested);
  const double h = length_m / static_cast<double>(n);
  result.step_m = h;

  const Eigen::MatrixXd gen = flow_generator(coupling.d, alpha);
  const Eigen::MatrixXd step_op = rk4_step_operator(gen, h);

  const double scale = std::max(p0.sum(), 1e-300);
  Eigen::MatrixXd state = p0;

  long sample_every = 0;
  if (options.trace_samples > 0) {
    sample_every = std::max<long>(1, n / options.trace_samples);
    result.trace_z.push_back(0.0);
    result.trace.push_back(p0);
  }

  run_steps(step_op, state, n, h, scale, [&](long k) {
    if (sample_every > 0 && (k % sample_every == 0 || k == n)) {
      result.trace_z.push_back(k * h);
      result.trace.push_back(state.col(0));
    }
  });

  result.final = state.col(0);
  return result;
}

Eigen::MatrixXd propagate_power_batch(const CouplingMatrix& coupling,
                                      const Eigen::VectorXd& alpha,
                                      const Eigen::MatrixXd& p0,
                                      double length_m, double step_m) {
  coupling.validate();
  const int m = coupling.mode_count();
  if (alpha.size() != m || p0.rows() != m)
    throw std::invalid_argument("propagate_power_batch: dimension mismatch");
  if (!(length_m >= 0.0))
    throw std::invalid_argument("propagate_power_batch: length must be >= 0");
  if (p0.size() > 0 && p0.minCoeff() < 0.0)
    throw std::invalid_argument("propagate_power_batch: launch powers must be >= 0");
  if (length_m == 0.0 || p0.cols() == 0) return p0;

  const double requested =
      step_m > 0.0 ? step_m : auto_step(coupling, alpha, length_m);
  const long n = step_count(length_m, requested);
  const double h = length_m / static_cast<double>(n);

  const Eigen::MatrixXd gen = flow_generator(coupling.d, alpha);
  const Eigen::MatrixXd step_op = rk4_step_operator(gen, h);

  const double scale = std::max(p0.sum(), 1e-300);
  Eigen::MatrixXd state = p0;
  run_steps(step_op, state, n, h, scale, [](long) {});
  return state;
}

Eigen::MatrixXd fiber_transfer(const FiberSpec& fiber, double step_m) {
  const CouplingMatrix cm = build_coupling_matrix(fiber);
  const Eigen::MatrixXd unit = Eigen::MatrixXd::Identity(fiber.mode_count(),
                                                         fiber.mode_count());
  return propagate_power_batch(cm, fiber.attenuation, unit, fiber.length_m, step_m);
}

Eigen::MatrixXd group_transfer_fractions(const FiberSpec& fiber, double step_m) {
  const int q = fiber.group_count();
  const int m = fiber.mode_count();

  Eigen::MatrixXd injection = Eigen::MatrixXd::Zero(m, q);
  Eigen::MatrixXd aggregation = Eigen::MatrixXd::Zero(q, m);
  Eigen::VectorXd members = Eigen::VectorXd::Zero(q);
  for (int p = 0; p < m; ++p) {
    const int g = fiber.group_of[static_cast<std::size_t>(p)] - 1;
    members(g) += 1.0;
    aggregation(g, p) = 1.0;
  }
  for (int p = 0; p < m; ++p) {
    const int g = fiber.group_of[static_cast<std::size_t>(p)] - 1;
    injection(p, g) = 1.0 / members(g);
  }

  const CouplingMatrix cm = build_coupling_matrix(fiber);
  const Eigen::MatrixXd out =
      propagate_power_batch(cm, fiber.attenuation, injection, fiber.length_m, step_m);
  // Row g_in = fractions observed across output groups.
  return (aggregation * out).transpose();
}

Eigen::MatrixXd flow_exponential(const CouplingMatrix& coupling,
                                 const Eigen::VectorXd& alpha, double length_m) {
  coupling.validate();
  if (alpha.size() != coupling.mode_count())
    throw std::invalid_argument("flow_exponential: dimension mismatch");
  const Eigen::MatrixXd gen = flow_generator(coupling.d, alpha);
  // The generator is symmetric (coupling symmetric, diagonal shift), so
  // the exponential follows from a self-adjoint eigendecomposition.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gen);
  if (es.info() != Eigen::Success)
    throw Error("flow_exponential: eigendecomposition failed");
  const Eigen::VectorXd exp_scaled =
      (es.eigenvalues().array() * length_m).exp().matrix();
  Eigen::MatrixXd transfer = es.eigenvectors() * exp_scaled.asDiagonal() *
                             es.eigenvectors().transpose();
  // Entries are nonnegative up to rounding; clamp the rounding part.
  return transfer.cwiseMax(0.0);
}

Eigen::VectorXd steady_state_distribution(const CouplingMatrix& coupling,
                                          const Eigen::VectorXd& alpha) {
  coupling.validate();
  const int m = coupling.mode_count();
  if (alpha.size() != m)
    throw std::invalid_argument("steady_state_distribution: dimension mismatch");

  // Connectivity of the coupling graph decides uniqueness: power
  // launched into one component can never reach another, so the
  // asymptotic shape would depend on the launch split.
  std::vector<int> component(static_cast<std::size_t>(m), -1);
  std::vector<int> stack{0};
  component[0] = 0;
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    for (int j = 0; j < m; ++j)
      if (coupling.d(i, j) > 0.0 && component[static_cast<std::size_t>(j)] < 0) {
        component[static_cast<std::size_t>(j)] = 0;
        stack.push_back(j);
      }
  }
  if (std::any_of(component.begin(), component.end(), [](int c) { return c < 0; }))
    throw NonUniqueSteadyState(
        "steady_state_distribution: coupling graph is disconnected, the "
        "asymptotic distribution depends on the launch condition");

  if (m == 1) return Eigen::VectorXd::Ones(1);

  // Transfer operator over one metre, built from the stable RK4 step.
  const double h = auto_step(coupling, alpha, 1.0);
  const long n = step_count(1.0, h);
  const Eigen::MatrixXd gen = flow_generator(coupling.d, alpha);
  Eigen::MatrixXd transfer =
      rk4_step_operator(gen, 1.0 / static_cast<double>(n));
  {
    // transfer^n by binary powering; rescale to keep entries O(1).
    Eigen::MatrixXd base = transfer;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Identity(m, m);
    long e = n;
    while (e > 0) {
      if (e & 1) {
        acc = acc * base;
        acc /= acc.cwiseAbs().maxCoeff();
      }
      base = base * base;
      base /= base.cwiseAbs().maxCoeff();
      e >>= 1;
    }
    transfer = acc;
  }

  constexpr double kTolerance = 1e-12;
  Eigen::VectorXd v = Eigen::VectorXd::Constant(m, 1.0 / m);
  // Power iteration; if the spectral gap over one metre is too small,
  // square the operator to double the effective length and retry.
  for (int level = 0; level < 64; ++level) {
    for (int it = 0; it < 128; ++it) {
      Eigen::VectorXd w = transfer * v;
      const double total = w.sum();
      if (!(total > 0.0) || !w.allFinite())
        throw Error("steady_state_distribution: power iteration broke down");
      w /= total;
      const double delta = (w - v).cwiseAbs().maxCoeff();
      v = w;
      if (delta < kTolerance) return v;
    }
    transfer = transfer * transfer;
    transfer /= transfer.cwiseAbs().maxCoeff();
  }
  throw Error("steady_state_distribution: power iteration did not converge");
}

}  // namespace fmflink
