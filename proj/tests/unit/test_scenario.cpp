#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "fmflink/scenario.hpp"
#include "fmflink/units.hpp"

namespace {

const char* kScenarioText = R"({
  // A 40 m test link with one quantum and one classical channel.
  "name": "unit-test-link",
  "fiber": {
    "length_m": 40.0,
    "groups": 5,
    "intra_group_rate_per_m": 1.0,
    "inter_group_d_per_m": {"kind": "adjacent", "value": 5.5e-6},
    "attenuation_db_per_km": 0.5,
    "admissible_d_per_m": [1e-7, 1e-2]
  },
  "mux": {
    "label": "mux-a",
    "insertion_loss_db": 4.2,         // entered as positive loss
    "loss_convention": "loss",
    "wavelength_validity_nm": [1530, 1570]
  },
  "demux": {
    "label": "demux-a",
    "insertion_loss_db": -4.2         // entered as signed transmission
  },
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
    "window_s": 4e-9, "acquisition_s": 3.0, "repetitions": 2, "seed": 42,
    "herald": {"detector": "snspd", "survival": 0.9}
  }
})";

bool has_issue(const std::vector<fmflink::ValidationIssue>& issues,
               const std::string& code) {
  return std::any_of(issues.begin(), issues.end(), [&](const auto& issue) {
    return issue.code == code;
  });
}

}  // namespace

TEST_SUITE_BEGIN("scenario");

TEST_CASE("annotated JSON parses into the expected model") {
  const fmflink::Scenario scenario = fmflink::parse_scenario(kScenarioText);
  CHECK(scenario.name == "unit-test-link");
  CHECK(scenario.fiber.length_m == 40.0);
  CHECK(scenario.fiber.mode_count() == 15);
  CHECK(scenario.fiber.group_count() == 5);
  // Adjacent coupling only.
  CHECK(scenario.fiber.inter_group_d(0, 1) == doctest::Approx(5.5e-6));
  CHECK(scenario.fiber.inter_group_d(1, 0) == doctest::Approx(5.5e-6));
  CHECK(scenario.fiber.inter_group_d(0, 2) == 0.0);
  // 0.5 dB/km as a per-metre coefficient.
  CHECK(scenario.fiber.attenuation(0) ==
        doctest::Approx(fmflink::attenuation_coefficient(0.5)));

  // Both loss conventions land on the same signed representation.
  CHECK(scenario.mux.insertion_loss_db(0) == doctest::Approx(-4.2));
  CHECK(scenario.demux.insertion_loss_db(0) == doctest::Approx(-4.2));
  CHECK(scenario.mux.wavelength_validity_nm.first == 1530.0);

  REQUIRE(scenario.plan.channels.size() == 2);
  CHECK(scenario.plan.channels[0].mode.p == 1);
  CHECK(scenario.plan.channels[1].mode.p == 2);
  CHECK(scenario.plan.channels[1].kind == fmflink::Channel::Kind::Classical);
  CHECK(scenario.counting.seed == 42);
  CHECK(scenario.counting.herald.survival == doctest::Approx(0.9));
}

TEST_CASE("a well-formed scenario validates cleanly") {
  const auto validated =
      fmflink::validate_scenario(fmflink::parse_scenario(kScenarioText));
  CHECK(validated.ok());
  CHECK(validated.issues.empty());
  // Cross-references resolved to indices.
  REQUIRE(validated.channel_filter.size() == 2);
  CHECK(validated.channel_filter[0] == 0);
  CHECK(validated.channel_detector[0] == 0);
  CHECK(validated.channel_filter[1] == -1);  // classical channel: none
  CHECK(validated.herald_detector == 0);
}

TEST_CASE("validation collects every violation instead of stopping early") {
  fmflink::Scenario scenario = fmflink::parse_scenario(kScenarioText);
  scenario.fiber.length_m = -1.0;
  scenario.plan.channels[0].detector = "missing-detector";
  scenario.plan.channels.push_back(scenario.plan.channels[1]);  // duplicate slot
  scenario.counting.window_s = 0.0;

  const auto validated = fmflink::validate_scenario(scenario);
  CHECK_FALSE(validated.ok());
  CHECK(validated.issues.size() >= 4);
  CHECK(has_issue(validated.issues, "fiber.length"));
  CHECK(has_issue(validated.issues, "channels[0].detector"));
  CHECK(has_issue(validated.issues, "plan.duplicate"));
  CHECK(has_issue(validated.issues, "counting.window"));
  CHECK_THROWS_AS(validated.require_ok(), fmflink::ScenarioError);
}

TEST_CASE("wavelengths outside a device's validity are flagged") {
  fmflink::Scenario scenario = fmflink::parse_scenario(kScenarioText);
  scenario.plan.channels[1].wavelength_nm = 1600.0;  // mux covers 1530–1570
  const auto validated = fmflink::validate_scenario(scenario);
  CHECK(has_issue(validated.issues, "channels[1].wavelength"));
}

TEST_CASE("quantum channels sharing a band must share the monitoring chain") {
  fmflink::Scenario scenario = fmflink::parse_scenario(kScenarioText);
  fmflink::Channel second = scenario.plan.channels[0];
  second.mode = fmflink::parse_mode(scenario.fiber, "HG11");
  second.detector = "";  // different chain on the same wavelength
  scenario.plan.channels.push_back(second);
  const auto validated = fmflink::validate_scenario(scenario);
  CHECK(has_issue(validated.issues, "plan.band_monitor"));
}

TEST_CASE("serialisation round-trips bit-exactly and hashes stably") {
  const fmflink::Scenario scenario =
      fmflink::validate_scenario(fmflink::parse_scenario(kScenarioText)).scenario;
  const std::string first = fmflink::serialize_scenario(scenario);
  const fmflink::Scenario reparsed = fmflink::parse_scenario(first);
  const std::string second = fmflink::serialize_scenario(reparsed);
  CHECK(first == second);
  CHECK(fmflink::scenario_hash(scenario) == fmflink::scenario_hash(reparsed));

  const std::string hex = fmflink::scenario_hash_hex(scenario);
  CHECK(hex.size() == 16);
  CHECK(hex.find_first_not_of("0123456789abcdef") == std::string::npos);

  // Any change to the effective configuration changes the hash.
  fmflink::Scenario changed = scenario;
  changed.fiber.length_m = 41.0;
  CHECK(fmflink::scenario_hash(changed) != fmflink::scenario_hash(scenario));
}

TEST_CASE("malformed input is rejected with a parse issue") {
  CHECK_THROWS_AS(fmflink::parse_scenario("{ not json"), fmflink::ScenarioError);
  CHECK_THROWS_AS(fmflink::parse_scenario("[1, 2, 3]"), fmflink::ScenarioError);
  try {
    fmflink::parse_scenario("{\"fiber\": {}}");
    FAIL("missing length_m must throw");
  } catch (const fmflink::ScenarioError& error) {
    REQUIRE_FALSE(error.issues.empty());
    CHECK(error.issues[0].code == "fiber.length_m");
  }
  CHECK_THROWS_AS(fmflink::load_scenario("/nonexistent/path.json"),
                  fmflink::ScenarioError);
}

TEST_CASE("mode names resolve against the fibre's own mode set") {
  const fmflink::Scenario scenario = fmflink::parse_scenario(kScenarioText);
  CHECK(fmflink::mode_label(scenario.fiber, 8) == "HG21");
  CHECK(fmflink::parse_mode(scenario.fiber, "HG21").p == 8);
  CHECK(fmflink::parse_mode(scenario.fiber, "p8").p == 8);
  CHECK(fmflink::parse_mode(scenario.fiber, "8").p == 8);
  CHECK_THROWS_AS(fmflink::parse_mode(scenario.fiber, "HG77"),
                  fmflink::ScenarioError);

  // A fibre without the triangular group structure falls back to flat
  // indices.
  fmflink::FiberSpec custom;
  custom.length_m = 1.0;
  custom.group_of = {1, 1, 2, 2};
  custom.inter_group_d = Eigen::MatrixXd::Zero(2, 2);
  custom.attenuation = Eigen::VectorXd::Zero(4);
  CHECK(fmflink::mode_label(custom, 3) == "p3");
  CHECK(fmflink::parse_mode(custom, "p3").p == 3);
  CHECK(fmflink::parse_mode(custom, "3").g == 2);
  CHECK_THROWS_AS(fmflink::parse_mode(custom, "HG10"), fmflink::ScenarioError);
}

TEST_CASE("group-level crosstalk expands to per-mode entries") {
  // -22.9 dB aggregate leak from each input into every other group,
  // referenced to the input power, split uniformly over the receiving
  // group's modes. mux-a declares the "loss" convention, so the level
  // is written as a positive magnitude like its insertion loss.
  std::string text(kScenarioText);
  const std::string needle = "\"label\": \"mux-a\",";
  text.replace(text.find(needle), needle.size(),
               "\"label\": \"mux-a\",\n    \"crosstalk\": {\"kind\": "
               "\"group_uniform\", \"level_db\": 22.9, \"reference\": "
               "\"input\"},");
  const fmflink::Scenario scenario = fmflink::parse_scenario(text);

  // Input HG00 (group 1) -> each of the two group-2 modes gets
  // -22.9 - 10 log10(2) dB.
  CHECK(scenario.mux.crosstalk_db(0, 1) ==
        doctest::Approx(-22.9 - 10.0 * std::log10(2.0)).epsilon(1e-12));
  // -> each of the five group-5 modes gets -22.9 - 10 log10(5) dB.
  CHECK(scenario.mux.crosstalk_db(0, 14) ==
        doctest::Approx(-22.9 - 10.0 * std::log10(5.0)).epsilon(1e-12));
  // In-group leaks are not declared by group_uniform.
  CHECK(scenario.mux.crosstalk_db(1, 2) == -fmflink::kInfDb);
  // Summed over a target group, the aggregate leak is back at -22.9 dB.
  double aggregate = 0.0;
  for (int out = 10; out < 15; ++out)
    aggregate += fmflink::db_to_linear(scenario.mux.crosstalk_db(0, out));
  CHECK(10.0 * std::log10(aggregate) == doctest::Approx(-22.9).epsilon(1e-9));
}

TEST_CASE("channel-referenced crosstalk adds the input's insertion loss") {
  std::string text(kScenarioText);
  const std::string needle = "\"label\": \"mux-a\",";
  text.replace(text.find(needle), needle.size(),
               "\"label\": \"mux-a\",\n    \"crosstalk\": {\"kind\": "
               "\"group_uniform\", \"level_db\": 22.9, \"reference\": "
               "\"channel\"},");
  const fmflink::Scenario scenario = fmflink::parse_scenario(text);
  // Referenced to the surviving channel power: 4.2 dB lower in absolute
  // terms (the mux's own insertion loss).
  CHECK(scenario.mux.crosstalk_db(0, 1) ==
        doctest::Approx(-22.9 - 4.2 - 10.0 * std::log10(2.0)).epsilon(1e-12));
}

TEST_SUITE_END();
