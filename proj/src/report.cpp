#include "fmflink/report.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "fmflink/csv.hpp"
#include "fmflink/units.hpp"
#include "fmflink/version.hpp"

namespace fmflink {

namespace {

using nlohmann::json;

std::string percent(double fraction) {
  return format_number(fraction * 100.0) + "%";
}

const BandResult& single_band(const SimulationResult& result,
                              const std::string& scenario) {
  if (result.bands.size() != 1)
    throw Error("reproduce: scenario " + scenario +
                " should expose exactly one quantum band");
  return result.bands.front();
}

}  // namespace

ReproduceReport reproduce_report(const std::filesystem::path& scenario_dir,
                                 const std::filesystem::path& output_dir,
                                 const RunOptions& options) {
  ReproduceReport report;

  const auto load = [&](const char* file) {
    const auto path = scenario_dir / file;
    const ValidatedScenario validated = validate_scenario(load_scenario(path));
    validated.require_ok();
    return validated;
  };

  const ValidatedScenario back_to_back = load("back_to_back_40m.json");
  const ValidatedScenario link = load("link_8km.json");
  const ValidatedScenario coexistence = load("link_8km_coexistence.json");

  const SimulationResult btb_result = run_scenario(back_to_back, options);
  const SimulationResult link_result = run_scenario(link, options);
  const SimulationResult coop_result = run_scenario(coexistence, options);

  write_result_bundle(btb_result, output_dir / "back_to_back_40m");
  write_result_bundle(link_result, output_dir / "link_8km");
  write_result_bundle(coop_result, output_dir / "link_8km_coexistence");
  report.scenario_hashes = {btb_result.scenario_hash, link_result.scenario_hash,
                            coop_result.scenario_hash};

  // Check 1: photon budget of a 20 nW classical transmitter at 1565 nm
  // with 20 photons per symbol lands in the designed band.
  {
    const BaudBudget budget = max_baud_rate(20e-9, 1565.0, 20.0);
    const bool pass =
        budget.max_baud_hz >= 7.72e9 && budget.max_baud_hz <= 7.96e9;
    report.checks.push_back(
        {"baud-budget", pass,
         "max baud " + format_number(budget.max_baud_hz) + " Hz, design band "
         "[7.72e9, 7.96e9]"});
  }

  // Check 2: device-chain reference losses of the shipped devices.
  // Design values: 8.4 dB average back-to-back loss, and an extra
  // 4.0 dB of fibre attenuation over the 8 km span.
  {
    const double btb_avg = btb_result.il_ref_db.mean();
    const CompiledLink compiled = compile_link(link);
    double through_avg = 0.0;
    for (Eigen::Index p = 0; p < compiled.composite.rows(); ++p)
      through_avg += 10.0 * std::log10(compiled.composite.col(p).sum());
    through_avg /= static_cast<double>(compiled.composite.rows());
    const bool pass = std::abs(btb_avg + 8.4) <= 0.3 &&
                      std::abs(through_avg + 12.4) <= 0.5;
    report.checks.push_back(
        {"insertion-loss", pass,
         "back-to-back average " + format_number(btb_avg) +
             " dB (design -8.4), 8 km chain average " +
             format_number(through_avg) + " dB (design -12.4)"});
  }

  // Check 3: group power fractions after 8 km. Design targets: 5.2%
  // in group 2, 9.8% in group 4, the launched groups 1/3/5 each in
  // [20%, 38%] and jointly at least 80%.
  {
    const BandResult& band = single_band(link_result, "link_8km");
    const Eigen::VectorXd& groups = band.group_fqp;
    const double g2 = groups(1), g4 = groups(3);
    const double launched = groups(0) + groups(2) + groups(4);
    bool pass = std::abs(g2 - 0.052) <= 0.015 && std::abs(g4 - 0.098) <= 0.020 &&
                launched >= 0.80;
    for (int g : {0, 2, 4})
      pass = pass && groups(g) >= 0.20 && groups(g) <= 0.38;
    std::ostringstream detail;
    detail << "group fractions";
    for (Eigen::Index g = 0; g < groups.size(); ++g)
      detail << " g" << g + 1 << "=" << percent(groups(g));
    report.checks.push_back({"group-fractions", pass, detail.str()});
  }

  // Check 4: coexistence SNR. At 20 nW received classical power every
  // quantum channel clears 10 dB, and the SNR falls by 10 dB per
  // decade of classical power (linear noise within 0.1 dB).
  {
    const std::vector<double> powers{20e-9, 200e-9};
    const auto sweep = snr_vs_power_sweep(coexistence, powers, options);
    double min_snr = std::numeric_limits<double>::infinity();
    for (const SnrEntry& entry : sweep.front().entries)
      min_snr = std::min(min_snr, entry.value.exact_db);
    double worst_slope_error = 0.0;
    for (std::size_t k = 0; k < sweep.front().entries.size(); ++k) {
      const double slope = sweep.back().entries[k].value.exact_db -
                           sweep.front().entries[k].value.exact_db;
      worst_slope_error = std::max(worst_slope_error, std::abs(slope + 10.0));
    }
    const bool pass = min_snr >= 10.0 && worst_slope_error <= 0.1;
    report.checks.push_back(
        {"coexistence-snr", pass,
         "min SNR at 20 nW " + format_number(min_snr) +
             " dB (design >= 10), slope error per decade " +
             format_number(worst_slope_error) + " dB (design <= 0.1)"});
  }

  // Summary file.
  {
    json summary;
    summary["version"] = kVersion;
    json hashes = json::array();
    for (const auto& hash : report.scenario_hashes) hashes.push_back(hash);
    summary["scenario_hashes"] = std::move(hashes);
    json checks = json::array();
    for (const CheckResult& check : report.checks)
      checks.push_back(
          {{"tag", check.tag}, {"pass", check.pass}, {"detail", check.detail}});
    summary["checks"] = std::move(checks);
    summary["all_pass"] = report.all_pass();
    write_file_atomic(output_dir / "reproduce_summary.json",
                      summary.dump(2) + "\n");
  }
  return report;
}

}  // namespace fmflink
