// fmflink — command-line front end: validate scenarios, run simulations,
// calibrate coupling rates, sweep SNR curves and reproduce the shipped
// reference results.
//
// Exit codes: 0 success, 1 domain error (validation, calibration,
// estimator failures, failed reproduction checks), 2 I/O or usage error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fmflink/calibration.hpp"
#include "fmflink/csv.hpp"
#include "fmflink/pipeline.hpp"
#include "fmflink/report.hpp"
#include "fmflink/scenario.hpp"
#include "fmflink/units.hpp"
#include "fmflink/version.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitSuccess = 0;
constexpr int kExitDomainError = 1;
constexpr int kExitIoError = 2;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------- overrides

// Parses "a.b.2.c" into JSON pointer steps and sets the leaf. Values
// are parsed as JSON when possible, otherwise taken as strings.
void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw IoError("--set expects key.path=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string value_text = assignment.substr(eq + 1);

  json value;
  try {
    value = json::parse(value_text);
  } catch (const json::parse_error&) {
    value = value_text;  // plain string
  }

  json* node = &root;
  std::stringstream keys(path);
  std::string key;
  std::vector<std::string> steps;
  while (std::getline(keys, key, '.')) steps.push_back(key);
  if (steps.empty()) throw IoError("--set path is empty");

  for (std::size_t i = 0; i + 1 < steps.size(); ++i) {
    const std::string& step = steps[i];
    const bool is_index = !step.empty() &&
                          step.find_first_not_of("0123456789") == std::string::npos;
    if (is_index) {
      if (!node->is_array())
        throw IoError("--set: '" + step + "' indexes a non-array in " + path);
      const std::size_t index = std::stoul(step);
      if (index >= node->size())
        throw IoError("--set: index " + step + " out of range in " + path);
      node = &(*node)[index];
    } else {
      node = &(*node)[step];
    }
  }
  const std::string& leaf = steps.back();
  const bool leaf_index = !leaf.empty() &&
                          leaf.find_first_not_of("0123456789") == std::string::npos;
  if (leaf_index && node->is_array()) {
    const std::size_t index = std::stoul(leaf);
    if (index >= node->size())
      throw IoError("--set: index " + leaf + " out of range in " + path);
    (*node)[index] = value;
  } else {
    (*node)[leaf] = value;
  }
}

// ------------------------------------------------------------ loading

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

fmflink::Scenario load_with_overrides(const fs::path& path,
                                      const std::vector<std::string>& overrides,
                                      std::optional<std::uint64_t> seed) {
  const std::string text = read_text_file(path);
  if (overrides.empty() && !seed) {
    fmflink::Scenario scenario = fmflink::parse_scenario(text, path.string());
    return scenario;
  }
  json root;
  try {
    root = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& error) {
    throw fmflink::ScenarioError("failed to parse scenario " + path.string() +
                                     ": " + error.what(),
                                 {{"json.parse", error.what()}});
  }
  for (const std::string& assignment : overrides) apply_override(root, assignment);
  if (seed) root["counting"]["seed"] = *seed;
  return fmflink::parse_scenario(root.dump(), path.string());
}

// -------------------------------------------------------------- shared

struct CommonOptions {
  std::string scenario_path;
  std::string output_dir;
  std::string mode = "analytic";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

std::string default_output_dir() {
  if (const char* env = std::getenv("FMFLINK_OUT")) return env;
  return "out";
}

void add_common(CLI::App* cmd, CommonOptions& options, bool with_scenario = true) {
  if (with_scenario)
    cmd->add_option("scenario", options.scenario_path,
                    "Scenario JSON file (// comments allowed)")
        ->required();
  cmd->add_option("--output-dir", options.output_dir,
                  "Result bundle root (default: $FMFLINK_OUT or ./out)");
  cmd->add_option("--set", options.overrides,
                  "Override a scenario field, e.g. --set fiber.length_m=100");
  cmd->add_option("--seed", options.seed,
                  "Override the scenario's counting.seed");
  cmd->add_option("--jobs", options.jobs, "Worker threads for Monte Carlo runs")
      ->check(CLI::PositiveNumber);
}

fmflink::RunOptions run_options(const CommonOptions& options) {
  fmflink::RunOptions run;
  if (options.mode == "analytic")
    run.mode = fmflink::RunMode::Analytic;
  else if (options.mode == "monte-carlo")
    run.mode = fmflink::RunMode::MonteCarlo;
  else
    throw IoError("--mode must be 'analytic' or 'monte-carlo'");
  run.seed = options.seed;
  run.jobs = options.jobs;
  return run;
}

fs::path bundle_dir(const CommonOptions& options, const fmflink::Scenario& scenario,
                    const std::string& command, bool mode_subdir = false) {
  const fs::path root =
      options.output_dir.empty() ? default_output_dir() : options.output_dir;
  fs::path dir = root / fmflink::scenario_hash_hex(scenario) / command;
  if (mode_subdir) dir /= options.mode;
  return dir;
}

void echo_effective_scenario(const fmflink::Scenario& scenario, const fs::path& dir) {
  fmflink::write_file_atomic(dir / "effective_scenario.json",
                             fmflink::serialize_scenario(scenario) + "\n");
}

int print_issues(const std::vector<fmflink::ValidationIssue>& issues) {
  for (const auto& issue : issues)
    std::cerr << "  [" << issue.code << "] " << issue.message << "\n";
  return kExitDomainError;
}

// ------------------------------------------------------------ commands

int cmd_validate(const CommonOptions& options) {
  const fmflink::Scenario scenario =
      load_with_overrides(options.scenario_path, options.overrides, options.seed);
  const fmflink::ValidatedScenario validated = fmflink::validate_scenario(scenario);
  if (!validated.ok()) {
    std::cerr << "scenario " << options.scenario_path << " has "
              << validated.issues.size() << " issue(s):\n";
    return print_issues(validated.issues);
  }
  std::cout << "scenario ok: " << options.scenario_path << "\n"
            << "  hash " << fmflink::scenario_hash_hex(validated.scenario) << ", "
            << validated.scenario.fiber.mode_count() << " modes, "
            << validated.scenario.plan.channels.size() << " channel(s)\n";
  return kExitSuccess;
}

int cmd_simulate(const CommonOptions& options) {
  const fmflink::Scenario scenario =
      load_with_overrides(options.scenario_path, options.overrides, options.seed);
  const fmflink::ValidatedScenario validated = fmflink::validate_scenario(scenario);
  if (!validated.ok()) {
    std::cerr << "scenario " << options.scenario_path << " has "
              << validated.issues.size() << " issue(s):\n";
    return print_issues(validated.issues);
  }

  const fmflink::SimulationResult result =
      fmflink::run_scenario(validated, run_options(options));
  const fs::path dir = bundle_dir(options, validated.scenario, "simulate", true);
  fmflink::write_result_bundle(result, dir);
  echo_effective_scenario(validated.scenario, dir);

  std::cout << "simulate (" << options.mode << ") -> " << dir.string() << "\n";
  for (const auto& band : result.bands) {
    std::cout << "  band " << fmflink::format_number(band.wavelength_nm)
              << " nm: group fractions";
    for (Eigen::Index g = 0; g < band.group_fqp.size(); ++g)
      std::cout << " g" << g + 1 << "="
                << fmflink::format_number(band.group_fqp(g) * 100.0) << "%";
    std::cout << "\n";
    for (const auto& entry : band.snr_entries) {
      std::cout << "  SNR " << entry.channel << ": ";
      if (entry.value.finite)
        std::cout << fmflink::format_number(entry.value.exact_db) << " dB\n";
      else
        std::cout << "no classical noise (unbounded)\n";
    }
  }
  return kExitSuccess;
}

int cmd_calibrate(const CommonOptions& options, const std::string& targets_path,
                  const std::string& parameterization,
                  const std::string& normalization, bool composite,
                  const std::string& emit_scenario) {
  const fmflink::Scenario scenario =
      load_with_overrides(options.scenario_path, options.overrides, options.seed);
  const fmflink::ValidatedScenario validated = fmflink::validate_scenario(scenario);
  if (!validated.ok()) {
    std::cerr << "scenario " << options.scenario_path << " has "
              << validated.issues.size() << " issue(s):\n";
    return print_issues(validated.issues);
  }

  Eigen::MatrixXd targets;
  try {
    targets = fmflink::read_csv_matrix(targets_path);
  } catch (const std::runtime_error& error) {
    throw IoError(error.what());
  }

  fmflink::CalibrationOptions calibration;
  if (parameterization == "pairs")
    calibration.parameterization = fmflink::DParameterization::AllPairs;
  else if (parameterization == "adjacent")
    calibration.parameterization = fmflink::DParameterization::AdjacentOnly;
  else if (parameterization == "adjacent-tied")
    calibration.parameterization = fmflink::DParameterization::AdjacentTied;
  else
    throw IoError("--parameterization must be pairs, adjacent or adjacent-tied");
  if (normalization == "absolute")
    calibration.normalization = fmflink::XtNormalization::Absolute;
  else if (normalization == "relative")
    calibration.normalization = fmflink::XtNormalization::RelativeToInputGroup;
  else
    throw IoError("--normalization must be absolute or relative");

  fmflink::TransferMatrix mux, demux;
  if (composite) {
    mux = fmflink::mux_from_measurements(validated.scenario.mux);
    demux = fmflink::mux_from_measurements(validated.scenario.demux);
    calibration.mux = &mux;
    calibration.demux = &demux;
  }

  const fmflink::CalibrationResult fit = fmflink::calibrate_coupling(
      targets, validated.scenario.fiber, calibration);

  const fs::path dir = bundle_dir(options, validated.scenario, "calibrate");
  fmflink::write_csv_matrix(dir / "tables" / "fitted_d_per_m.csv",
                            fit.inter_group_d);
  json summary;
  summary["version"] = fmflink::kVersion;
  summary["scenario_hash"] = fmflink::scenario_hash_hex(validated.scenario);
  summary["rms_residual_db"] = fit.rms_residual_db;
  summary["iterations"] = fit.iterations;
  summary["evaluations"] = fit.evaluations;
  summary["converged"] = fit.converged;
  fmflink::write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
  echo_effective_scenario(validated.scenario, dir);

  if (!emit_scenario.empty()) {
    fmflink::Scenario fitted = validated.scenario;
    fitted.fiber.inter_group_d = fit.inter_group_d;
    fmflink::write_file_atomic(emit_scenario,
                               fmflink::serialize_scenario(fitted) + "\n");
  }

  std::cout << "calibrate -> " << dir.string() << "\n  rms residual "
            << fmflink::format_number(fit.rms_residual_db) << " dB after "
            << fit.iterations << " iteration(s), " << fit.evaluations
            << " model evaluation(s)\n";
  for (Eigen::Index a = 0; a < fit.inter_group_d.rows(); ++a)
    for (Eigen::Index b = a + 1; b < fit.inter_group_d.cols(); ++b)
      std::cout << "  D(" << a + 1 << "," << b + 1 << ") = "
                << fmflink::format_number(fit.inter_group_d(a, b)) << " 1/m\n";
  return kExitSuccess;
}

int cmd_sweep(const CommonOptions& options, std::vector<double> powers_nw,
              double min_nw, double max_nw, int points) {
  const fmflink::Scenario scenario =
      load_with_overrides(options.scenario_path, options.overrides, options.seed);
  const fmflink::ValidatedScenario validated = fmflink::validate_scenario(scenario);
  if (!validated.ok()) {
    std::cerr << "scenario " << options.scenario_path << " has "
              << validated.issues.size() << " issue(s):\n";
    return print_issues(validated.issues);
  }

  if (powers_nw.empty()) {
    if (!(min_nw > 0.0) || !(max_nw > min_nw) || points < 2)
      throw IoError("sweep needs --powers-nw or a valid --min-nw/--max-nw/--points");
    for (int i = 0; i < points; ++i)
      powers_nw.push_back(min_nw * std::pow(max_nw / min_nw,
                                            static_cast<double>(i) / (points - 1)));
  }
  std::vector<double> powers_w;
  powers_w.reserve(powers_nw.size());
  for (double p : powers_nw) powers_w.push_back(p * 1e-9);

  const auto sweep =
      fmflink::snr_vs_power_sweep(validated, powers_w, run_options(options));
  const fmflink::SimulationResult reference =
      fmflink::run_scenario(validated, run_options(options));
  const fs::path dir = bundle_dir(options, validated.scenario, "sweep", true);
  fmflink::write_sweep_bundle(sweep, reference, dir);
  echo_effective_scenario(validated.scenario, dir);

  std::cout << "sweep (" << options.mode << ") -> " << dir.string() << "\n";
  for (const auto& point : sweep) {
    std::cout << "  P_out " << fmflink::format_number(point.power_out_w * 1e9)
              << " nW:";
    for (const auto& entry : point.entries) {
      std::cout << "  " << entry.channel << " ";
      if (entry.value.finite)
        std::cout << fmflink::format_number(entry.value.exact_db) << " dB";
      else
        std::cout << "unbounded";
    }
    std::cout << "\n";
  }
  return kExitSuccess;
}

int cmd_budget(double power_nw, double wavelength_nm, double photons,
               const std::string& output_dir) {
  const fmflink::BaudBudget budget =
      fmflink::max_baud_rate(power_nw * 1e-9, wavelength_nm, photons);
  json out;
  out["power_w"] = budget.power_w;
  out["wavelength_nm"] = budget.wavelength_nm;
  out["photons_per_pulse"] = budget.photons_per_pulse;
  out["photon_energy_j"] = budget.photon_energy_j;
  out["max_baud_hz"] = budget.max_baud_hz;
  std::cout << out.dump(2) << "\n";
  if (!output_dir.empty())
    fmflink::write_file_atomic(fs::path(output_dir) / "budget.json",
                               out.dump(2) + "\n");
  return kExitSuccess;
}

int cmd_reproduce(const CommonOptions& options, const std::string& scenario_dir) {
  const fs::path out_root =
      (options.output_dir.empty() ? fs::path(default_output_dir())
                                  : fs::path(options.output_dir)) /
      "reproduce";
  const fmflink::ReproduceReport report =
      fmflink::reproduce_report(scenario_dir, out_root, run_options(options));
  std::cout << "reproduce -> " << out_root.string() << "\n";
  for (const auto& check : report.checks)
    std::cout << "  " << (check.pass ? "PASS" : "FAIL") << "  " << check.tag
              << ": " << check.detail << "\n";
  return report.all_pass() ? kExitSuccess : kExitDomainError;
}

// Flag inventory as JSON, for the help self-inspection test.
json flag_inventory(const CLI::App& app) {
  json commands = json::array();
  for (const CLI::App* sub : app.get_subcommands({})) {
    json entry;
    entry["name"] = sub->get_name();
    json flags = json::array();
    for (const CLI::Option* option : sub->get_options())
      flags.push_back(option->get_name(false, true));
    entry["options"] = std::move(flags);
    commands.push_back(std::move(entry));
  }
  return commands;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "fmflink — mode-multiplexed quantum/classical link simulator.\n"
      "Propagates heralded single photons and classical carriers through a\n"
      "few-mode fibre with random mode coupling, counts coincidences and\n"
      "derives link budgets. FMFLINK_OUT sets the default output root."};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Print help for every subcommand");

  CommonOptions validate_opts, simulate_opts, calibrate_opts, sweep_opts,
      reproduce_opts;

  CLI::App* validate = app.add_subcommand(
      "validate", "Check a scenario file and list every violation");
  add_common(validate, validate_opts);

  CLI::App* simulate = app.add_subcommand(
      "simulate", "Run the full pipeline and write a result bundle");
  add_common(simulate, simulate_opts);
  simulate->add_option("--mode", simulate_opts.mode,
                       "analytic (closed form) or monte-carlo (time-tag sampling)")
      ->check(CLI::IsMember({"analytic", "monte-carlo"}));

  CLI::App* calibrate = app.add_subcommand(
      "calibrate", "Fit inter-group coupling rates to measured crosstalk");
  add_common(calibrate, calibrate_opts);
  std::string targets_path;
  std::string parameterization = "pairs";
  std::string normalization = "absolute";
  bool composite = false;
  std::string emit_scenario;
  calibrate->add_option("--targets", targets_path,
                        "CSV of group-to-group crosstalk targets in dB "
                        "(empty cells = unmeasured)")
      ->required();
  calibrate->add_option("--parameterization", parameterization,
                        "pairs, adjacent or adjacent-tied")
      ->check(CLI::IsMember({"pairs", "adjacent", "adjacent-tied"}));
  calibrate->add_option("--normalization", normalization,
                        "absolute or relative (to the input group's through power)")
      ->check(CLI::IsMember({"absolute", "relative"}));
  calibrate->add_flag("--composite", composite,
                      "Fit through the mux/demux chain instead of the bare fibre");
  calibrate->add_option("--emit-scenario", emit_scenario,
                        "Write a copy of the scenario with the fitted rates");

  CLI::App* sweep = app.add_subcommand(
      "sweep", "SNR of each quantum channel versus classical output power");
  add_common(sweep, sweep_opts);
  sweep->add_option("--mode", sweep_opts.mode,
                    "analytic (closed form) or monte-carlo (time-tag sampling)")
      ->check(CLI::IsMember({"analytic", "monte-carlo"}));
  std::vector<double> powers_nw;
  double min_nw = 1.0, max_nw = 200.0;
  int points = 9;
  sweep->add_option("--powers-nw", powers_nw,
                    "Explicit classical output powers [nW]")
      ->delimiter(',');
  sweep->add_option("--min-nw", min_nw, "Sweep start [nW] (log spacing)");
  sweep->add_option("--max-nw", max_nw, "Sweep end [nW]");
  sweep->add_option("--points", points, "Number of sweep points");

  CLI::App* budget = app.add_subcommand(
      "budget", "Photon budget: highest baud rate for a classical power");
  double power_nw = 20.0, wavelength_nm = 1565.0, photons = 20.0;
  std::string budget_output;
  budget->add_option("--power-nw", power_nw, "Classical power [nW]")->required();
  budget->add_option("--wavelength-nm", wavelength_nm, "Carrier wavelength [nm]");
  budget->add_option("--photons", photons, "Photons spent per symbol");
  budget->add_option("--output-dir", budget_output,
                     "Also write budget.json below this directory");

  CLI::App* reproduce = app.add_subcommand(
      "reproduce", "Run the shipped reference scenarios and their checks");
  std::string scenario_dir = "scenarios";
  reproduce->add_option("--scenario-dir", scenario_dir,
                        "Directory holding the three reference scenarios");
  reproduce->add_option("--output-dir", reproduce_opts.output_dir,
                        "Result bundle root (default: $FMFLINK_OUT or ./out)");
  reproduce->add_option("--mode", reproduce_opts.mode,
                        "analytic (closed form) or monte-carlo (time-tag sampling)")
      ->check(CLI::IsMember({"analytic", "monte-carlo"}));
  reproduce->add_option("--jobs", reproduce_opts.jobs,
                        "Worker threads for Monte Carlo runs")
      ->check(CLI::PositiveNumber);

  CLI::App* flags = app.add_subcommand(
      "flags", "Print the full option inventory as JSON (self-inspection)");

  CLI::App* version = app.add_subcommand("version", "Print the tool version");

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return cmd_validate(validate_opts);
    if (simulate->parsed()) return cmd_simulate(simulate_opts);
    if (calibrate->parsed())
      return cmd_calibrate(calibrate_opts, targets_path, parameterization,
                           normalization, composite, emit_scenario);
    if (sweep->parsed())
      return cmd_sweep(sweep_opts, powers_nw, min_nw, max_nw, points);
    if (budget->parsed())
      return cmd_budget(power_nw, wavelength_nm, photons, budget_output);
    if (reproduce->parsed()) return cmd_reproduce(reproduce_opts, scenario_dir);
    if (flags->parsed()) {
      std::cout << flag_inventory(app).dump(2) << "\n";
      return kExitSuccess;
    }
    if (version->parsed()) {
      std::cout << "fmflink " << fmflink::kVersion << "\n";
      return kExitSuccess;
    }
  } catch (const IoError& error) {
    std::cerr << "error: " << error.what() << "\n";
    return kExitIoError;
  } catch (const fmflink::ScenarioError& error) {
    std::cerr << "error: " << error.what() << "\n";
    // Unreadable/unparsable files are I/O problems; semantic violations
    // inside a well-formed file are domain errors.
    for (const auto& issue : error.issues)
      if (issue.code.rfind("io.", 0) == 0 || issue.code.rfind("json.", 0) == 0)
        return kExitIoError;
    return kExitDomainError;
  } catch (const fmflink::CalibrationError& error) {
    std::cerr << "error: " << error.what() << "\n";
    return kExitDomainError;
  } catch (const fmflink::Error& error) {
    std::cerr << "error: " << error.what() << "\n";
    return kExitDomainError;
  } catch (const std::invalid_argument& error) {
    std::cerr << "error: " << error.what() << "\n";
    return kExitDomainError;
  } catch (const std::domain_error& error) {
    std::cerr << "error: " << error.what() << "\n";
    return kExitDomainError;
  } catch (const std::filesystem::filesystem_error& error) {
    std::cerr << "error: " << error.what() << "\n";
    return kExitIoError;
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << "\n";
    return kExitIoError;
  }
  return kExitSuccess;
}
