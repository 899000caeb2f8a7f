#include "fmflink/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include "fmflink/power_flow.hpp"
#include "fmflink/units.hpp"

namespace fmflink {

namespace {

struct PairIndex {
  int a;  // 0-based group indices, a < b
  int b;
};

std::vector<PairIndex> free_pairs(int q, DParameterization parameterization) {
  std::vector<PairIndex> pairs;
  switch (parameterization) {
    case DParameterization::AllPairs:
      for (int a = 0; a < q; ++a)
        for (int b = a + 1; b < q; ++b) pairs.push_back({a, b});
      break;
    case DParameterization::AdjacentOnly:
      for (int a = 0; a + 1 < q; ++a) pairs.push_back({a, a + 1});
      break;
    case DParameterization::AdjacentTied:
      // A single parameter; the expansion below applies it to every
      // neighbouring pair.
      pairs.push_back({0, 1});
      break;
  }
  return pairs;
}

Eigen::MatrixXd expand_parameters(const Eigen::VectorXd& log10_d, int q,
                                  DParameterization parameterization) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(q, q);
  const auto pairs = free_pairs(q, parameterization);
  if (parameterization == DParameterization::AdjacentTied) {
    const double rate = std::pow(10.0, log10_d(0));
    for (int a = 0; a + 1 < q; ++a) {
      d(a, a + 1) = rate;
      d(a + 1, a) = rate;
    }
    return d;
  }
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const double rate = std::pow(10.0, log10_d(static_cast<int>(k)));
    d(pairs[k].a, pairs[k].b) = rate;
    d(pairs[k].b, pairs[k].a) = rate;
  }
  return d;
}

// Group aggregation/injection for an arbitrary group_of map.
void group_operators(const std::vector<int>& group_of, Eigen::MatrixXd& aggregation,
                     Eigen::MatrixXd& injection) {
  const int m = static_cast<int>(group_of.size());
  int q = 0;
  for (int g : group_of) q = std::max(q, g);
  aggregation = Eigen::MatrixXd::Zero(q, m);
  injection = Eigen::MatrixXd::Zero(m, q);
  Eigen::VectorXd members = Eigen::VectorXd::Zero(q);
  for (int p = 0; p < m; ++p) {
    aggregation(group_of[static_cast<std::size_t>(p)] - 1, p) = 1.0;
    members(group_of[static_cast<std::size_t>(p)] - 1) += 1.0;
  }
  for (int p = 0; p < m; ++p) {
    const int g = group_of[static_cast<std::size_t>(p)] - 1;
    injection(p, g) = 1.0 / members(g);
  }
}

class ForwardModel {
public:
  ForwardModel(const FiberSpec& fiber, const CalibrationOptions& options)
      : fiber_(fiber), options_(options) {
    group_operators(fiber.group_of, aggregation_, injection_);
    if ((options.mux == nullptr) != (options.demux == nullptr))
      throw std::invalid_argument(
          "calibrate_coupling: composite fits need both mux and demux");
    if (options.mux != nullptr) {
      if (options.mux->channel_count() != fiber.mode_count() ||
          options.demux->channel_count() != fiber.mode_count())
        throw std::invalid_argument(
            "calibrate_coupling: device channel count must match the fibre");
    }
  }

  /// Group crosstalk matrix [dB] for the given inter-group rates.
  Eigen::MatrixXd group_db(const Eigen::MatrixXd& inter_group_d) const {
    ++evaluations_;
    FiberSpec fiber = fiber_;
    fiber.inter_group_d = inter_group_d;
    const CouplingMatrix coupling = build_coupling_matrix(fiber);
    Eigen::MatrixXd transfer =
        flow_exponential(coupling, fiber.attenuation, fiber.length_m);
    if (options_.mux != nullptr)
      transfer = options_.demux->t * transfer * options_.mux->t;

    // fractions(g_in, g_out), launches uniform within each input group
    const Eigen::MatrixXd fractions =
        (aggregation_ * transfer * injection_).transpose();

    const int q = static_cast<int>(fractions.rows());
    Eigen::MatrixXd db(q, q);
    for (int a = 0; a < q; ++a) {
      const double reference =
          options_.normalization == XtNormalization::RelativeToInputGroup
              ? std::max(fractions(a, a), 1e-300)
              : 1.0;
      for (int b = 0; b < q; ++b)
        db(a, b) = 10.0 * std::log10(std::max(fractions(a, b), 1e-300) / reference);
    }
    return db;
  }

  long evaluations() const { return evaluations_; }

private:
  const FiberSpec& fiber_;
  const CalibrationOptions& options_;
  Eigen::MatrixXd aggregation_;
  Eigen::MatrixXd injection_;
  mutable long evaluations_ = 0;
};

}  // namespace

Eigen::MatrixXd modelled_group_crosstalk_db(const FiberSpec& fiber,
                                            const CalibrationOptions& options) {
  return ForwardModel(fiber, options).group_db(fiber.inter_group_d);
}

CalibrationResult calibrate_coupling(const Eigen::MatrixXd& targets_db,
                                     const FiberSpec& fiber,
                                     const CalibrationOptions& options) {
  const int q = fiber.group_count();
  if (targets_db.rows() != q || targets_db.cols() != q)
    throw std::invalid_argument("calibrate_coupling: targets must be " +
                                std::to_string(q) + "x" + std::to_string(q));
  if (!(fiber.length_m > 0.0))
    throw std::invalid_argument("calibrate_coupling: fibre length must be positive");

  const ForwardModel model(fiber, options);
  const auto pairs = free_pairs(q, options.parameterization);
  const int n_params = static_cast<int>(pairs.size());
  const double lo = std::log10(fiber.d_min);
  const double hi = std::log10(fiber.d_max);

  // Unmasked cells drive the fit; NaN and -inf cells carry no usable
  // dB level and are skipped.
  std::vector<std::pair<int, int>> cells;
  for (int a = 0; a < q; ++a)
    for (int b = 0; b < q; ++b)
      if (std::isfinite(targets_db(a, b))) cells.emplace_back(a, b);

  auto finish = [&](const Eigen::VectorXd& theta, int iterations,
                    bool converged) {
    CalibrationResult result;
    result.inter_group_d = expand_parameters(theta, q, options.parameterization);
    if (cells.empty()) {
      result.rms_residual_db = 0.0;
    } else {
      const Eigen::MatrixXd db = model.group_db(result.inter_group_d);
      double ss = 0.0;
      for (const auto& [a, b] : cells) {
        const double r = db(a, b) - targets_db(a, b);
        ss += r * r;
      }
      result.rms_residual_db = std::sqrt(ss / static_cast<double>(cells.size()));
    }
    result.iterations = iterations;
    result.evaluations = model.evaluations();
    result.converged = converged;
    return result;
  };

  Eigen::VectorXd theta = Eigen::VectorXd::Constant(n_params, lo);
  if (cells.empty() || n_params == 0)
    // Nothing to fit: every rate settles at the lower bound.
    return finish(theta, 0, true);

  auto residuals = [&](const Eigen::VectorXd& point) {
    const Eigen::MatrixXd db =
        model.group_db(expand_parameters(point, q, options.parameterization));
    Eigen::VectorXd r(static_cast<int>(cells.size()));
    for (std::size_t i = 0; i < cells.size(); ++i)
      r(static_cast<int>(i)) =
          db(cells[i].first, cells[i].second) -
          targets_db(cells[i].first, cells[i].second);
    return r;
  };
  auto loss = [&](const Eigen::VectorXd& point) {
    return residuals(point).squaredNorm();
  };

  // Stage 1: cyclic coordinate search. A coarse grid (including both
  // endpoints, scanned from the lower one so ties settle low) brackets
  // the minimum, golden-section refines it.
  constexpr double kGolden = 0.6180339887498949;
  double best_loss = loss(theta);
  for (int sweep = 0; sweep < options.coordinate_sweeps; ++sweep) {
    for (int k = 0; k < n_params; ++k) {
      auto loss_at = [&](double value) {
        Eigen::VectorXd point = theta;
        point(k) = value;
        return loss(point);
      };

      const int grid = std::max(options.grid_points, 3);
      int best_idx = 0;
      double best_grid_loss = std::numeric_limits<double>::infinity();
      std::vector<double> grid_values(static_cast<std::size_t>(grid));
      for (int i = 0; i < grid; ++i) {
        const double v = lo + (hi - lo) * i / static_cast<double>(grid - 1);
        grid_values[static_cast<std::size_t>(i)] = v;
        const double l = loss_at(v);
        if (l < best_grid_loss) {
          best_grid_loss = l;
          best_idx = i;
        }
      }

      double a = grid_values[static_cast<std::size_t>(std::max(best_idx - 1, 0))];
      double b = grid_values[static_cast<std::size_t>(std::min(best_idx + 1, grid - 1))];
      double x1 = b - kGolden * (b - a);
      double x2 = a + kGolden * (b - a);
      double f1 = loss_at(x1);
      double f2 = loss_at(x2);
      for (int it = 0; it < options.golden_iterations; ++it) {
        if (f1 <= f2) {
          b = x2;
          x2 = x1;
          f2 = f1;
          x1 = b - kGolden * (b - a);
          f1 = loss_at(x1);
        } else {
          a = x1;
          x1 = x2;
          f1 = f2;
          x2 = a + kGolden * (b - a);
          f2 = loss_at(x2);
        }
      }
      const double refined = f1 <= f2 ? x1 : x2;
      const double refined_loss = std::min(f1, f2);
      // Keep whichever of {grid best, refined} wins; the grid best also
      // covers the endpoints.
      const double candidate =
          refined_loss < best_grid_loss ? refined : grid_values[static_cast<std::size_t>(best_idx)];
      const double candidate_loss = std::min(refined_loss, best_grid_loss);
      if (candidate_loss <= best_loss) {
        theta(k) = candidate;
        best_loss = candidate_loss;
      }
    }
  }

  // Stage 2: damped Gauss-Newton (Levenberg-Marquardt) polish in
  // log10(D), projected onto the admissible box.
  const double kStepTolerance = 1e-10;
  double lambda = 1e-3;
  int iterations = 0;
  bool converged = false;
  Eigen::VectorXd r = residuals(theta);
  double current = r.squaredNorm();
  for (; iterations < options.max_iterations; ++iterations) {
    // Central-difference Jacobian.
    Eigen::MatrixXd jac(r.size(), n_params);
    const double fd = 1e-6;
    for (int k = 0; k < n_params; ++k) {
      Eigen::VectorXd plus = theta, minus = theta;
      plus(k) = std::min(theta(k) + fd, hi);
      minus(k) = std::max(theta(k) - fd, lo);
      const double width = plus(k) - minus(k);
      jac.col(k) = width > 0.0
                       ? ((residuals(plus) - residuals(minus)) / width).eval()
                       : Eigen::VectorXd::Zero(r.size()).eval();
    }

    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;
    bool stepped = false;
    for (int attempt = 0; attempt < 20; ++attempt) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal().array() += lambda;
      const Eigen::VectorXd delta = damped.ldlt().solve(-jtr);
      Eigen::VectorXd trial = (theta + delta).cwiseMax(lo).cwiseMin(hi);
      const Eigen::VectorXd trial_r = residuals(trial);
      const double trial_loss = trial_r.squaredNorm();
      if (trial_loss <= current) {
        const double step_size = (trial - theta).cwiseAbs().maxCoeff();
        theta = trial;
        r = trial_r;
        current = trial_loss;
        lambda = std::max(lambda * 0.3, 1e-12);
        stepped = true;
        if (step_size < kStepTolerance) converged = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!stepped) {
      // No downhill direction left at any damping: stationary.
      converged = true;
    }
    if (converged) break;
  }

  if (!converged)
    throw CalibrationError(
        "calibrate_coupling: no convergence after " +
            std::to_string(options.max_iterations) + " iterations",
        finish(theta, iterations, false));
  return finish(theta, iterations, true);
}

}  // namespace fmflink
