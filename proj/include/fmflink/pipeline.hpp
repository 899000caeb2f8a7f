// pipeline.hpp — end-to-end simulation of a scenario: source, mux,
// fibre, demux, filters, detectors, coincidence counting and the
// derived estimators, in closed form or by Monte Carlo.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fmflink/counting.hpp"
#include "fmflink/devices.hpp"
#include "fmflink/scenario.hpp"

namespace fmflink {

enum class RunMode { Analytic, MonteCarlo };

/// Scenario compiled to linear-algebra form, shared by every run mode.
struct CompiledLink {
  TransferMatrix mux;
  TransferMatrix demux;
  Eigen::MatrixXd fiber;         // M x M fibre power transfer (solver route)
  Eigen::MatrixXd composite;     // demux * fiber * mux
  Eigen::MatrixXd back_to_back;  // demux * mux (no fibre)
  Eigen::VectorXd il_ref_db;     // through-path reference loss per port [dB]
};

/// Builds the transfer matrices for a validated scenario.
CompiledLink compile_link(const ValidatedScenario& scenario);

/// Per-output-port counting statistics for one quantum band.
struct PortStats {
  int port = 0;        // 1-based flat mode index
  std::string mode;    // label, e.g. "HG21"
  int group = 0;
  double r1_hz = 0.0;  // herald singles
  double r2_hz = 0.0;  // port singles (classical on)
  double r2_off_hz = 0.0;  // port singles with classical channels off
  double rc_hz = 0.0;  // coincidences (classical on)
  double ra_hz = 0.0;  // accidentals 2 R1 R2 t_c
  double rc_off_hz = 0.0;  // coincidences with classical channels off
  double ra_off_hz = 0.0;
  double l_p = 0.0;        // (Rc - Ra) / R_in
  double eps_l = 0.0;      // Ra / R_in
  std::vector<double> rc_samples;  // per-repetition rates (Monte Carlo)
};

/// SNR of one quantum channel against classical-induced noise.
struct SnrEntry {
  std::string channel;  // mode label
  int port = 0;
  SnrResult value;
};

/// Results for one quantum wavelength band.
struct BandResult {
  double wavelength_nm = 0.0;
  double r_in_hz = 0.0;  // total input pair rate of the band
  std::string filter;
  std::string detector;
  std::vector<PortStats> ports;
  FqpResult fqp;
  Eigen::VectorXd group_fqp;
  std::vector<SnrEntry> snr_entries;
};

/// Classical power bookkeeping across the link stages [W].
struct StageTable {
  double wavelength_nm = 0.0;
  std::vector<std::string> mode;  // port labels
  Eigen::VectorXd input_w;
  Eigen::VectorXd after_mux_w;
  Eigen::VectorXd after_fiber_w;
  Eigen::VectorXd after_demux_w;
};

struct SimulationResult {
  RunMode mode = RunMode::Analytic;
  std::uint64_t seed = 0;
  std::string scenario_hash;
  std::string scenario_name;
  std::string version;
  Eigen::VectorXd il_ref_db;
  std::vector<BandResult> bands;
  std::vector<StageTable> classical_stages;
};

struct RunOptions {
  RunMode mode = RunMode::Analytic;
  std::optional<std::uint64_t> seed;  // overrides the scenario seed
  int jobs = 1;                       // worker threads for Monte Carlo
};

/// Runs the full pipeline. The scenario must validate cleanly
/// (require_ok is invoked on entry).
SimulationResult run_scenario(const ValidatedScenario& scenario,
                              const RunOptions& options = {});

/// One point of an SNR-versus-power sweep.
struct SweepPoint {
  double power_out_w = 0.0;  // classical power at the demux output
  double power_in_w = 0.0;   // back-computed input power
  std::vector<SnrEntry> entries;
};

/// Sweeps the classical channels' power and reports each quantum
/// channel's SNR. Powers are referred to the demux output of the
/// classical channels' own modes; inputs are back-computed through the
/// link, scaling every classical channel by a common factor.
std::vector<SweepPoint> snr_vs_power_sweep(const ValidatedScenario& scenario,
                                           const std::vector<double>& powers_out_w,
                                           const RunOptions& options = {});

/// Photon budget of a classical transmitter: the highest symbol rate
/// at which `power_w` still spends at least `photons_per_pulse` photons
/// per symbol.
struct BaudBudget {
  double power_w = 0.0;
  double wavelength_nm = 0.0;
  double photons_per_pulse = 0.0;
  double photon_energy_j = 0.0;
  double max_baud_hz = 0.0;
};

BaudBudget max_baud_rate(double power_w, double wavelength_nm,
                         double photons_per_pulse = 20.0);

/// Fits the single adjacent-pair coupling rate of the scenario's fibre
/// so the analytic group power fractions match `group_targets`
/// (group id -> target fraction). Returns the fitted rate [1/m].
double fit_adjacent_coupling_to_group_fractions(
    const ValidatedScenario& scenario,
    const std::vector<std::pair<int, double>>& group_targets);

/// Fits the out-of-band extinction of the quantum band's filter so the
/// analytic exact SNR of `channel_port` equals `target_snr_db` when the
/// classical channels run at `power_out_w` (demux output referred).
double fit_filter_extinction_to_snr(const ValidatedScenario& scenario,
                                    double power_out_w, double target_snr_db,
                                    int channel_port);

/// Writes the result bundle under `dir`: summary.json, tables/ and
/// plotdata/. All writes are atomic; reruns with the same inputs
/// produce byte-identical files.
void write_result_bundle(const SimulationResult& result,
                         const std::filesystem::path& dir);

/// Writes an SNR sweep bundle under `dir`.
void write_sweep_bundle(const std::vector<SweepPoint>& sweep,
                        const SimulationResult& reference,
                        const std::filesystem::path& dir);

}  // namespace fmflink
