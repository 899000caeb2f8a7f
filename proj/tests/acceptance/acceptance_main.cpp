// Acceptance suite: the headline correctness criteria of the toolkit,
// one PASS/FAIL line each. Tolerances are pinned here, next to each
// check, so a regression cannot be hidden by loosening a config file.
//
// Environment: FMFLINK_SCENARIOS must point at the shipped scenario
// directory; FMFLINK_BIN at the CLI binary (used by the determinism
// criterion). Exit code = number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "fmflink/calibration.hpp"
#include "fmflink/counting.hpp"
#include "fmflink/csv.hpp"
#include "fmflink/pipeline.hpp"
#include "fmflink/power_flow.hpp"
#include "fmflink/rng.hpp"
#include "fmflink/scenario.hpp"
#include "fmflink/units.hpp"

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Criterion {
  bool pass = false;
  std::string detail;
};

std::string fmt(double value, int digits = 4) {
  std::ostringstream out;
  out.precision(digits);
  out << value;
  return out.str();
}

fs::path scenario_path(const char* name) {
  const char* dir = std::getenv("FMFLINK_SCENARIOS");
  if (!dir) throw std::runtime_error("FMFLINK_SCENARIOS is not set");
  return fs::path(dir) / name;
}

fmflink::ValidatedScenario load(const char* name) {
  auto validated =
      fmflink::validate_scenario(fmflink::load_scenario(scenario_path(name)));
  validated.require_ok();
  return validated;
}

// ---------------------------------------------------------------- C1

Criterion budget_formula() {
  // 20 nW at 1565 nm paying 20 photons per symbol affords
  // P / (N h c / lambda) = 7878392428.20434 Bd. Tolerance: 1e-12 rel.
  const auto budget = fmflink::max_baud_rate(20e-9, 1565.0, 20.0);
  const double expected = 7878392428.20434;
  const double rel = std::abs(budget.max_baud_hz - expected) / expected;
  return {rel <= 1e-12,
          "B = " + fmt(budget.max_baud_hz, 15) + " Hz, rel err " + fmt(rel, 2)};
}

// ---------------------------------------------------------------- C2

Criterion accidental_statistics() {
  // Formula: 2 R1 R2 tc, pinned at 2600 x 1000 Hz, 4 ns -> 0.0208 Hz.
  const double formula = fmflink::accidental_rate(2600.0, 1000.0, 4e-9);
  if (std::abs(formula - 0.0208) > 1e-15)
    return {false, "formula gave " + fmt(formula, 10) + " Hz, want 0.0208"};

  // Sampling: two independent 1e5 Hz streams in a 4 ns window make
  // 80 accidentals/s. 30 seeds; the sample mean must sit within 3
  // standard errors of 80.
  const int seeds = 30;
  std::vector<double> rates;
  rates.reserve(seeds);
  for (int k = 0; k < seeds; ++k) {
    fmflink::RandomStream root(5000 + static_cast<std::uint64_t>(k));
    auto rng_a = root.derive({1});
    auto rng_b = root.derive({2});
    const auto a = fmflink::poisson_stream(1e5, 1.0, rng_a);
    const auto b = fmflink::poisson_stream(1e5, 1.0, rng_b);
    rates.push_back(fmflink::count_coincidences(a, b, 4e-9).rate_hz);
  }
  double mean = 0.0;
  for (double r : rates) mean += r;
  mean /= seeds;
  double var = 0.0;
  for (double r : rates) var += (r - mean) * (r - mean);
  var /= (seeds - 1);
  const double se = std::sqrt(var / seeds);
  const bool pass = std::abs(mean - 80.0) <= 3.0 * se;
  return {pass, "mean " + fmt(mean) + " Hz over 30 seeds, expected 80 +- " +
                    fmt(3.0 * se) + " (3 SE)"};
}

// ---------------------------------------------------------------- C3

Criterion lossless_conservation() {
  // 8 km, lossless, adjacent coupling + intra-group mixing: every
  // launch must conserve total power to 1e-9 (relative).
  fmflink::FiberSpec fiber = fmflink::FiberSpec::standard(8000.0);
  for (int g = 0; g + 1 < 5; ++g) {
    fiber.inter_group_d(g, g + 1) = 1e-4;
    fiber.inter_group_d(g + 1, g) = 1e-4;
  }
  const auto coupling = fmflink::build_coupling_matrix(fiber);

  fmflink::RandomStream rng(31);
  Eigen::MatrixXd launches(15, 100);
  for (int c = 0; c < 100; ++c)
    for (int p = 0; p < 15; ++p) launches(p, c) = rng.uniform();

  const Eigen::MatrixXd out = fmflink::propagate_power_batch(
      coupling, fiber.attenuation, launches, fiber.length_m);
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const double in_sum = launches.col(c).sum();
    worst = std::max(worst, std::abs(out.col(c).sum() - in_sum) / in_sum);
  }
  return {worst <= 1e-9,
          "worst relative power drift " + fmt(worst, 3) + " over 100 launches"};
}

// ---------------------------------------------------------------- C4

Criterion group_equipartition() {
  // 40 m with intra-group mixing only: power launched into one mode of
  // a group spreads uniformly across that group (spread <= 1%).
  fmflink::FiberSpec fiber = fmflink::FiberSpec::standard(40.0);
  fiber.intra_group_rate = 1.0;
  const auto coupling = fmflink::build_coupling_matrix(fiber);
  const fmflink::ModeTable& table = fmflink::default_mode_table();

  double worst = 0.0;
  for (int g = 2; g <= 5; ++g) {
    const auto members = table.members(g);
    Eigen::VectorXd p0 = Eigen::VectorXd::Zero(15);
    p0(members.front() - 1) = 1.0;
    const auto result =
        fmflink::propagate_power(coupling, fiber.attenuation, p0, 40.0);
    double lo = 1.0, hi = 0.0;
    for (int p : members) {
      lo = std::min(lo, result.final(p - 1));
      hi = std::max(hi, result.final(p - 1));
    }
    const double mean = 1.0 / static_cast<double>(members.size());
    worst = std::max(worst, (hi - lo) / mean);
  }
  return {worst <= 0.01,
          "worst in-group spread " + fmt(100.0 * worst) + "% (cap 1%)"};
}

// ---------------------------------------------------------------- C5

Criterion solver_order() {
  // Two-mode closed form: halving the step must cut the error by ~2^4.
  // Each successive ratio is required to land in [8, 32].
  fmflink::FiberSpec fiber;
  fiber.length_m = 10.0;
  fiber.group_of = {1, 1};
  fiber.intra_group_rate = 0.2;
  fiber.inter_group_d = Eigen::MatrixXd::Zero(1, 1);
  fiber.attenuation = Eigen::VectorXd::Zero(2);
  const auto coupling = fmflink::build_coupling_matrix(fiber);
  Eigen::VectorXd p0(2);
  p0 << 1.0, 0.0;
  const double exact = 0.5 + 0.5 * std::exp(-2.0 * 0.2 * 10.0);

  std::vector<double> errors;
  for (double step : {2.5, 1.25, 0.625, 0.3125}) {
    fmflink::PropagationOptions options;
    options.step_m = step;
    const auto result = fmflink::propagate_power(coupling, fiber.attenuation,
                                                 p0, 10.0, options);
    errors.push_back(std::abs(result.final(0) - exact));
  }
  bool pass = true;
  std::string ratios;
  for (std::size_t i = 0; i + 1 < errors.size(); ++i) {
    const double ratio = errors[i] / errors[i + 1];
    pass = pass && ratio >= 8.0 && ratio <= 32.0;
    if (!ratios.empty()) ratios += ", ";
    ratios += fmt(ratio);
  }
  return {pass, "error ratios per step halving: " + ratios + " (want ~16)"};
}

// ---------------------------------------------------------------- C6

Criterion calibration_round_trip() {
  // 20 random rate sets on a 40 m spool: fitting the model to its own
  // crosstalk table must recover every pair within 5% (or push the
  // residual under 0.01 dB), inside 60 s.
  const auto t0 = Clock::now();
  fmflink::RandomStream rng(606);
  int failures = 0;
  double worst_rel = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    fmflink::FiberSpec fiber = fmflink::FiberSpec::standard(40.0);
    Eigen::MatrixXd truth = Eigen::MatrixXd::Zero(5, 5);
    auto trial_rng = rng.derive({static_cast<std::uint64_t>(trial)});
    for (int a = 0; a < 5; ++a)
      for (int b = a + 1; b < 5; ++b) {
        const double value = std::pow(10.0, -5.0 + 2.0 * trial_rng.uniform());
        truth(a, b) = truth(b, a) = value;  // log-uniform in [1e-5, 1e-3]
      }
    fiber.inter_group_d = truth;
    const Eigen::MatrixXd targets = fmflink::modelled_group_crosstalk_db(fiber);

    try {
      const auto fit = fmflink::calibrate_coupling(targets, fiber);
      double rel = 0.0;
      for (int a = 0; a < 5; ++a)
        for (int b = a + 1; b < 5; ++b)
          rel = std::max(rel, std::abs(fit.inter_group_d(a, b) - truth(a, b)) /
                                  truth(a, b));
      worst_rel = std::max(worst_rel, rel);
      if (rel > 0.05 && fit.rms_residual_db > 0.01) ++failures;
    } catch (const fmflink::CalibrationError&) {
      ++failures;
    }
  }
  const double seconds =
      std::chrono::duration<double>(Clock::now() - t0).count();
  const bool pass = failures == 0 && seconds < 60.0;
  return {pass, std::to_string(20 - failures) +
                    "/20 round-trips recovered (worst pair err " +
                    fmt(100.0 * worst_rel) + "%), " + fmt(seconds) + " s"};
}

// ---------------------------------------------------------------- C7

Criterion group_fraction_pattern() {
  // Fit the adjacent coupling rate to the two anchor fractions, then
  // check the full five-group pattern of the 8 km link:
  //   g2 = 5.2 +- 1.5 %, g4 = 9.8 +- 2.0 %, g1/g3/g5 in [20, 38] %
  //   with at least 80% of the power in groups 1, 3, 5 combined.
  const auto validated = load("link_8km.json");
  const double fitted = fmflink::fit_adjacent_coupling_to_group_fractions(
      validated, {{2, 0.052}, {4, 0.098}});

  fmflink::Scenario tuned = validated.scenario;
  for (int g = 0; g + 1 < 5; ++g) {
    tuned.fiber.inter_group_d(g, g + 1) = fitted;
    tuned.fiber.inter_group_d(g + 1, g) = fitted;
  }
  auto revalidated = fmflink::validate_scenario(tuned);
  revalidated.require_ok();
  const auto result = fmflink::run_scenario(revalidated);
  const Eigen::VectorXd f = result.bands.at(0).group_fqp;

  const bool pass = std::abs(f(1) - 0.052) <= 0.015 &&
                    std::abs(f(3) - 0.098) <= 0.020 &&
                    f(0) >= 0.20 && f(0) <= 0.38 &&
                    f(2) >= 0.20 && f(2) <= 0.38 &&
                    f(4) >= 0.20 && f(4) <= 0.38 &&
                    (f(0) + f(2) + f(4)) >= 0.80;
  std::string detail = "D_fit = " + fmt(fitted, 6) + " /m; fractions %:";
  for (int g = 0; g < 5; ++g)
    detail += " g" + std::to_string(g + 1) + "=" + fmt(100.0 * f(g), 3);
  return {pass, detail};
}

// ---------------------------------------------------------------- C8

Criterion coexistence_snr() {
  // At 20 nW of co-propagating classical power every quantum channel
  // must keep an exact SNR of at least 10 dB, and a decade more power
  // must cost 10 +- 0.1 dB.
  const auto validated = load("link_8km_coexistence.json");
  const auto sweep =
      fmflink::snr_vs_power_sweep(validated, {20e-9, 200e-9});
  if (sweep.size() != 2 || sweep[0].entries.empty())
    return {false, "sweep produced no SNR entries"};

  double min_snr = 1e9;
  double worst_slope_err = 0.0;
  for (std::size_t c = 0; c < sweep[0].entries.size(); ++c) {
    const auto& low = sweep[0].entries[c].value;
    const auto& high = sweep[1].entries[c].value;
    if (!low.finite || !high.finite)
      return {false, "SNR unexpectedly unbounded (no classical noise?)"};
    min_snr = std::min(min_snr, low.exact_db);
    worst_slope_err = std::max(
        worst_slope_err, std::abs((low.exact_db - high.exact_db) - 10.0));
  }
  const bool pass = min_snr >= 10.0 && worst_slope_err <= 0.1;
  return {pass, "min SNR @20 nW = " + fmt(min_snr) + " dB (floor 10); slope err " +
                    fmt(worst_slope_err, 3) + " dB (cap 0.1)"};
}

// ---------------------------------------------------------------- C9

Criterion fqp_unit_sum() {
  // 1000 random cases: the reported fractions must sum to exactly 1.0
  // (bitwise) and be invariant under a common rescale of all rates.
  fmflink::RandomStream rng(909);
  int exact = 0, invariant = 0;
  const int cases = 1000;
  for (int k = 0; k < cases; ++k) {
    auto case_rng = rng.derive({static_cast<std::uint64_t>(k)});
    const int n = 2 + static_cast<int>(case_rng.uniform() * 15.0);
    Eigen::VectorXd rc(n), ra(n), il(n);
    for (int p = 0; p < n; ++p) {
      rc(p) = 50.0 * case_rng.uniform();
      ra(p) = 0.5 * case_rng.uniform();
      il(p) = -10.0 * case_rng.uniform();
    }
    rc(0) += 10.0;  // guarantee at least one positive net rate

    const auto result = fmflink::fractional_quantum_power(rc, ra, 2600.0, il);
    if (result.fqp.sum() == 1.0) ++exact;

    const auto scaled =
        fmflink::fractional_quantum_power(7.3 * rc, 7.3 * ra, 7.3 * 2600.0, il);
    if ((result.fqp - scaled.fqp).cwiseAbs().maxCoeff() <= 1e-12) ++invariant;
  }
  const bool pass = exact == cases && invariant == cases;
  return {pass, std::to_string(exact) + "/1000 exact unit sums, " +
                    std::to_string(invariant) + "/1000 rescale-invariant"};
}

// ---------------------------------------------------------------- C10

Criterion monte_carlo_vs_analytic() {
  // Three-mode toy link, 30 independent seeds: the sampled coincidence
  // rate of every port must sit within 3 standard errors of the
  // analytic rate in at least 95% of the port-checks.
  const char* toy = R"({
    "name": "acceptance-toy",
    "fiber": {
      "length_m": 50.0,
      "group_of": [1, 2, 2],
      "intra_group_rate_per_m": 0.05,
      "inter_group_d_per_m": {"kind": "adjacent", "value": 2e-3},
      "attenuation_db_per_km": 0.0
    },
    "mux": {"label": "mux", "insertion_loss_db": -1.0},
    "demux": {"label": "demux", "insertion_loss_db": -1.0},
    "detectors": [{"label": "det", "efficiency": 0.7, "dark_rate_hz": 50.0}],
    "channels": [
      {"kind": "quantum", "mode": "p1", "wavelength_nm": 1540.0,
       "pair_rate_hz": 20000.0, "detector": "det"}
    ],
    "counting": {
      "window_s": 4e-9, "acquisition_s": 1.0, "repetitions": 8, "seed": 0,
      "herald": {"detector": "det", "survival": 0.9}
    }
  })";
  auto validated = fmflink::validate_scenario(fmflink::parse_scenario(toy));
  validated.require_ok();
  const auto analytic = fmflink::run_scenario(validated);

  int checks = 0, within = 0;
  for (int seed = 1; seed <= 30; ++seed) {
    fmflink::RunOptions options;
    options.mode = fmflink::RunMode::MonteCarlo;
    options.seed = static_cast<std::uint64_t>(seed);
    const auto sampled = fmflink::run_scenario(validated, options);
    for (std::size_t p = 0; p < 3; ++p) {
      const double expect = analytic.bands[0].ports[p].rc_hz;
      const double got = sampled.bands[0].ports[p].rc_hz;
      // Mean of 8 repetitions of 1 s: SE = sqrt(Rc / 8).
      const double se = std::sqrt(std::max(expect, 1.0) / 8.0);
      ++checks;
      if (std::abs(got - expect) <= 3.0 * se) ++within;
    }
  }
  const double share = static_cast<double>(within) / checks;
  return {share >= 0.95, std::to_string(within) + "/" + std::to_string(checks) +
                             " port rates within 3 SE (" +
                             fmt(100.0 * share) + "%, floor 95%)"};
}

// ---------------------------------------------------------------- C11

Criterion cli_determinism() {
  // The same seed must produce byte-identical result bundles through
  // the CLI, independent of the worker-thread count.
  const char* binary = std::getenv("FMFLINK_BIN");
  if (!binary) return {false, "FMFLINK_BIN is not set"};
  const fs::path scenario = scenario_path("link_8km.json");

  const fs::path root =
      fs::temp_directory_path() / ("fmflink-acceptance-" +
                                   std::to_string(::getpid()));
  std::error_code ec;
  fs::remove_all(root, ec);
  const fs::path out_a = root / "a";
  const fs::path out_b = root / "b";

  const std::string base = std::string(binary) + " simulate " +
                           scenario.string() +
                           " --mode monte-carlo --seed 42 >/dev/null 2>&1";
  const int rc_a =
      std::system((base + " --jobs 1 --output-dir " + out_a.string()).c_str());
  const int rc_b =
      std::system((base + " --jobs 4 --output-dir " + out_b.string()).c_str());
  if (rc_a != 0 || rc_b != 0) {
    fs::remove_all(root, ec);
    return {false, "CLI simulate exited nonzero"};
  }

  // Compare every file in the two bundles byte for byte.
  std::vector<std::string> names;
  for (const auto& entry : fs::recursive_directory_iterator(out_a))
    if (entry.is_regular_file())
      names.push_back(fs::relative(entry.path(), out_a).string());
  std::sort(names.begin(), names.end());

  std::size_t compared = 0;
  bool identical = !names.empty();
  std::string first_diff;
  for (const auto& name : names) {
    std::ifstream fa(out_a / name, std::ios::binary);
    std::ifstream fb(out_b / name, std::ios::binary);
    if (!fb) {
      identical = false;
      first_diff = name + " missing in second run";
      break;
    }
    const std::string ca((std::istreambuf_iterator<char>(fa)),
                         std::istreambuf_iterator<char>());
    const std::string cb((std::istreambuf_iterator<char>(fb)),
                         std::istreambuf_iterator<char>());
    ++compared;
    if (ca != cb) {
      identical = false;
      first_diff = name;
      break;
    }
  }
  fs::remove_all(root, ec);
  if (!identical)
    return {false, "bundles differ at " +
                       (first_diff.empty() ? "(empty bundle)" : first_diff)};
  return {true, std::to_string(compared) +
                    " files byte-identical across jobs=1 and jobs=4"};
}

// ------------------------------------------------------------------

struct Entry {
  const char* tag;
  std::function<Criterion()> run;
  double budget_s;  // generous wall-clock cap, enforced
};

}  // namespace

int main() {
  const std::vector<Entry> entries{
      {"C01 photon-budget-formula", budget_formula, 1.0},
      {"C02 accidental-statistics", accidental_statistics, 30.0},
      {"C03 lossless-conservation", lossless_conservation, 10.0},
      {"C04 group-equipartition", group_equipartition, 10.0},
      {"C05 solver-order", solver_order, 10.0},
      {"C06 calibration-round-trip", calibration_round_trip, 60.0},
      {"C07 group-fraction-pattern", group_fraction_pattern, 60.0},
      {"C08 coexistence-snr", coexistence_snr, 60.0},
      {"C09 fqp-unit-sum", fqp_unit_sum, 10.0},
      {"C10 monte-carlo-vs-analytic", monte_carlo_vs_analytic, 120.0},
      {"C11 cli-determinism", cli_determinism, 300.0},
  };

  int failures = 0;
  for (const auto& entry : entries) {
    Criterion result;
    const auto t0 = Clock::now();
    try {
      result = entry.run();
    } catch (const std::exception& error) {
      result = {false, std::string("exception: ") + error.what()};
    }
    const double seconds =
        std::chrono::duration<double>(Clock::now() - t0).count();
    if (seconds > entry.budget_s) {
      result.pass = false;
      result.detail += " [exceeded " + fmt(entry.budget_s, 3) + " s budget]";
    }
    if (!result.pass) ++failures;
    std::printf("[%s] %s: %s (%.2f s)\n", result.pass ? "PASS" : "FAIL",
                entry.tag, result.detail.c_str(), seconds);
    std::fflush(stdout);
  }
  std::printf("acceptance: %d/11 criteria passed\n", 11 - failures);
  return failures;
}
