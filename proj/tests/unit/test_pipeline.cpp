#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

#include "fmflink/pipeline.hpp"
#include "fmflink/scenario.hpp"
#include "fmflink/units.hpp"

namespace {

namespace fs = std::filesystem;

// Small coexistence link used throughout: 15 modes, quantum HG00 at
// 1540 nm, classical HG10 at 1565 nm.
const char* kLinkText = R"({
  "name": "pipeline-test-link",
  "fiber": {
    "length_m": 40.0,
    "groups": 5,
    "intra_group_rate_per_m": 1.0,
    "inter_group_d_per_m": {"kind": "adjacent", "value": 5.5e-6},
    "attenuation_db_per_km": 0.5
  },
  "mux": {"label": "mux", "insertion_loss_db": -4.2},
  "demux": {"label": "demux", "insertion_loss_db": -4.2},
  "wdm_filters": [
    {"label": "qband", "center_nm": 1540.0, "bandwidth_nm": 1.0,
     "passband_loss_db": -0.6, "extinction_db": 50.0}
  ],
  "detectors": [
    {"label": "snspd", "efficiency": 0.8, "dark_rate_hz": 100.0}
  ],
  "channels": [
    {"kind": "quantum", "mode": "HG00", "wavelength_nm": 1540.0,
     "pair_rate_hz": 2600.0, "filter": "qband", "detector": "snspd"},
    {"kind": "classical", "mode": "HG10", "wavelength_nm": 1565.0,
     "power_w": 2e-8}
  ],
  "counting": {
    "window_s": 4e-9, "acquisition_s": 3.0, "repetitions": 4, "seed": 42,
    "herald": {"detector": "snspd", "survival": 0.9}
  }
})";

// Tiny three-mode link for Monte Carlo cross-checks: cheap to sample.
const char* kToyText = R"({
  "name": "toy-link",
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
    "window_s": 4e-9, "acquisition_s": 1.0, "repetitions": 8, "seed": 7,
    "herald": {"detector": "det", "survival": 0.9}
  }
})";

fmflink::ValidatedScenario make(const char* text) {
  auto validated = fmflink::validate_scenario(fmflink::parse_scenario(text));
  validated.require_ok();
  return validated;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const char* tag) {
    path = fs::temp_directory_path() /
           (std::string("fmflink-") + tag + "-" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& file) {
  std::ifstream in(file);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("compiled link is passive end to end") {
  const auto link = fmflink::compile_link(make(kLinkText));
  REQUIRE(link.composite.rows() == 15);
  for (int c = 0; c < 15; ++c) {
    CHECK(link.composite.col(c).sum() <= 1.0 + 1e-12);
    CHECK(link.composite.col(c).minCoeff() >= 0.0);
    CHECK(link.back_to_back.col(c).sum() <= 1.0 + 1e-12);
  }
  // Uniform 4.2 dB devices: the back-to-back through path is -8.4 dB.
  for (int c = 0; c < 15; ++c)
    CHECK(link.il_ref_db(c) == doctest::Approx(-8.4).epsilon(1e-9));
}

TEST_CASE("analytic run reproduces the composite transfer in its ratios") {
  const auto validated = make(kLinkText);
  const auto link = fmflink::compile_link(validated);
  const auto result = fmflink::run_scenario(validated);

  REQUIRE(result.bands.size() == 1);
  const auto& band = result.bands[0];
  CHECK(band.wavelength_nm == 1540.0);
  CHECK(band.r_in_hz == doctest::Approx(2600.0));
  REQUIRE(band.ports.size() == 15);

  // The accidental-corrected output ratio of port p is the composite
  // transfer entry times the in-band chain (filter passband; detector
  // efficiencies cancel out of neither Rc nor the ratio).
  const double chain = fmflink::db_to_linear(-0.6) * 0.8;  // filter * det
  const double herald = 0.9 * 0.8;                         // survival * det
  for (int p = 0; p < 15; ++p) {
    const double expected = link.composite(p, 0) * chain * herald;
    CHECK(band.ports[static_cast<std::size_t>(p)].l_p ==
          doctest::Approx(expected).epsilon(1e-9));
  }

  // Launched mode keeps the dominant share.
  CHECK(band.fqp.fqp(0) == doctest::Approx(band.fqp.fqp.maxCoeff()));
  CHECK(band.fqp.fqp.sum() == 1.0);

  // One classical stage table at the classical wavelength.
  REQUIRE(result.classical_stages.size() == 1);
  const auto& stages = result.classical_stages[0];
  CHECK(stages.wavelength_nm == 1565.0);
  CHECK(stages.input_w.sum() == doctest::Approx(2e-8));
  // Monotone power budget along the chain.
  CHECK(stages.after_mux_w.sum() < stages.input_w.sum());
  CHECK(stages.after_fiber_w.sum() < stages.after_mux_w.sum());
  CHECK(stages.after_demux_w.sum() < stages.after_fiber_w.sum());
}

TEST_CASE("classical power raises coincidences and bounds the SNR") {
  const auto validated = make(kLinkText);
  const auto result = fmflink::run_scenario(validated);
  const auto& band = result.bands[0];

  for (const auto& port : band.ports) {
    CHECK(port.rc_hz >= port.rc_off_hz);  // leakage only ever adds counts
    CHECK(port.ra_hz >= port.ra_off_hz);
  }
  REQUIRE_FALSE(band.snr_entries.empty());
  for (const auto& entry : band.snr_entries) {
    CHECK(entry.value.finite);
    CHECK(entry.value.exact_db < entry.value.approx_db);
  }
}

TEST_CASE("monte carlo agrees with the analytic rates on a toy link") {
  const auto validated = make(kToyText);
  const auto analytic = fmflink::run_scenario(validated);

  fmflink::RunOptions options;
  options.mode = fmflink::RunMode::MonteCarlo;
  const auto sampled = fmflink::run_scenario(validated, options);

  REQUIRE(analytic.bands.size() == 1);
  REQUIRE(sampled.bands.size() == 1);
  for (std::size_t p = 0; p < 3; ++p) {
    const auto& expect = analytic.bands[0].ports[p];
    const auto& got = sampled.bands[0].ports[p];
    // Coincidence rates: Poisson counting over repetitions gives
    // SE ~ sqrt(Rc / (reps * T)).
    const double se =
        std::sqrt(std::max(expect.rc_hz, 1.0) / (8.0 * 1.0)) + 1e-9;
    CHECK(std::abs(got.rc_hz - expect.rc_hz) <= 4.0 * se);
    // Singles agree too (larger counts, tighter bound).
    const double se1 = std::sqrt(std::max(expect.r2_hz, 1.0) / 8.0) + 1e-9;
    CHECK(std::abs(got.r2_hz - expect.r2_hz) <= 4.0 * se1);
    CHECK(got.rc_samples.size() == 8);
  }
}

TEST_CASE("monte carlo runs are seed-deterministic and thread-invariant") {
  const auto validated = make(kToyText);
  fmflink::RunOptions one;
  one.mode = fmflink::RunMode::MonteCarlo;
  one.jobs = 1;
  fmflink::RunOptions four = one;
  four.jobs = 4;

  const auto a = fmflink::run_scenario(validated, one);
  const auto b = fmflink::run_scenario(validated, one);
  const auto c = fmflink::run_scenario(validated, four);

  for (std::size_t p = 0; p < 3; ++p) {
    // Bitwise equality: same seed, same path-addressed streams.
    CHECK(a.bands[0].ports[p].rc_hz == b.bands[0].ports[p].rc_hz);
    CHECK(a.bands[0].ports[p].rc_hz == c.bands[0].ports[p].rc_hz);
    CHECK(a.bands[0].ports[p].r2_hz == c.bands[0].ports[p].r2_hz);
  }

  // A different seed changes the draw.
  fmflink::RunOptions reseeded = one;
  reseeded.seed = 1234;
  const auto d = fmflink::run_scenario(validated, reseeded);
  CHECK(d.seed == 1234);
  bool any_diff = false;
  for (std::size_t p = 0; p < 3; ++p)
    any_diff = any_diff || (a.bands[0].ports[p].rc_hz != d.bands[0].ports[p].rc_hz);
  CHECK(any_diff);
}

TEST_CASE("baud budget: 20 nW at 1565 nm affords ~7.88 GBd at 20 photons") {
  const auto budget = fmflink::max_baud_rate(20e-9, 1565.0, 20.0);
  CHECK(budget.max_baud_hz == doctest::Approx(7878392428.20434).epsilon(1e-12));
  CHECK(budget.photon_energy_j ==
        doctest::Approx(fmflink::photon_energy(1565.0)).epsilon(1e-15));
  // Halving the photon budget doubles the rate.
  const auto half = fmflink::max_baud_rate(20e-9, 1565.0, 10.0);
  CHECK(half.max_baud_hz == doctest::Approx(2.0 * budget.max_baud_hz));
}

TEST_CASE("snr sweep references powers to the demux output") {
  const auto validated = make(kLinkText);
  const auto link = fmflink::compile_link(validated);
  const std::vector<double> powers{2e-8, 2e-7};
  const auto sweep = fmflink::snr_vs_power_sweep(validated, powers);
  REQUIRE(sweep.size() == 2);

  for (std::size_t i = 0; i < sweep.size(); ++i) {
    CHECK(sweep[i].power_out_w == doctest::Approx(powers[i]));
    // Input = output / through-transmission of the classical mode (p=2).
    const double through = link.composite(1, 1);
    CHECK(sweep[i].power_in_w == doctest::Approx(powers[i] / through));
    REQUIRE_FALSE(sweep[i].entries.empty());
    CHECK(sweep[i].entries[0].value.finite);
  }
  // A decade more classical power costs ~10 dB of SNR.
  const double drop =
      sweep[0].entries[0].value.exact_db - sweep[1].entries[0].value.exact_db;
  CHECK(drop == doctest::Approx(10.0).epsilon(0.02));
}

TEST_CASE("result bundles are deterministic on disk") {
  const auto validated = make(kToyText);
  fmflink::RunOptions options;
  options.mode = fmflink::RunMode::MonteCarlo;
  const auto result = fmflink::run_scenario(validated, options);

  TempDir dir("bundle");
  const fs::path first = dir.path / "run1";
  const fs::path second = dir.path / "run2";
  fmflink::write_result_bundle(result, first);
  fmflink::write_result_bundle(fmflink::run_scenario(validated, options),
                               second);

  for (const char* name :
       {"summary.json", "tables/port_stats.csv", "tables/group_fqp.csv",
        "tables/classical_stages.csv", "plotdata/fqp_modes.csv",
        "plotdata/rc_samples.csv"}) {
    CAPTURE(name);
    CHECK(slurp(first / name) == slurp(second / name));
  }

  // snr table exists whenever classical channels are present; the toy
  // has none, so it records the header only.
  CHECK(slurp(first / "tables" / "snr.csv") ==
        slurp(second / "tables" / "snr.csv"));
}

TEST_CASE("fitting the adjacent rate reproduces the requested fractions") {
  const auto validated = make(kLinkText);
  // Ask for the fractions the scenario's own rate produces: the fit
  // must return (approximately) that rate.
  const auto reference = fmflink::run_scenario(validated);
  const Eigen::VectorXd& fractions = reference.bands[0].group_fqp;
  const std::vector<std::pair<int, double>> anchors{{2, fractions(1)},
                                                    {4, fractions(3)}};
  const double fitted =
      fmflink::fit_adjacent_coupling_to_group_fractions(validated, anchors);
  CHECK(fitted == doctest::Approx(5.5e-6).epsilon(0.02));
}

TEST_CASE("fitting the filter extinction hits the requested SNR") {
  const auto validated = make(kLinkText);
  const double target_db = 15.0;
  const double extinction = fmflink::fit_filter_extinction_to_snr(
      validated, 2e-8, target_db, 1);

  // Verify by rebuilding the scenario with the fitted extinction.
  fmflink::Scenario adjusted = validated.scenario;
  adjusted.wdm_filters[0].extinction_db = extinction;
  const auto revalidated = fmflink::validate_scenario(adjusted);
  const auto sweep = fmflink::snr_vs_power_sweep(revalidated, {2e-8});
  REQUIRE(sweep.size() == 1);
  CHECK(sweep[0].entries[0].value.exact_db ==
        doctest::Approx(target_db).epsilon(1e-6));
}

TEST_SUITE_END();
