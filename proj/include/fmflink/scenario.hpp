// scenario.hpp — a complete experiment description: fibre, devices,
// channel plan and counting setup, loadable from an annotated JSON file.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fmflink/errors.hpp"
#include "fmflink/modes.hpp"
#include "fmflink/specs.hpp"

namespace fmflink {

struct HeraldPlan {
  std::string detector;    // label into Scenario::detectors; empty = ideal
  double survival = 1.0;   // herald-arm transmission (source to detector)
};

struct CountingPlan {
  double window_s = 4e-9;
  double acquisition_s = 3.0;
  int repetitions = 1;
  std::uint64_t seed = 0;
  HeraldPlan herald;
};

struct Scenario {
  std::string name;
  FiberSpec fiber;
  MuxDemuxSpec mux;
  MuxDemuxSpec demux;
  std::vector<WdmFilterSpec> wdm_filters;
  std::vector<DetectorSpec> detectors;
  ChannelPlan plan;
  CountingPlan counting;

  std::string source_path;  // where this scenario was loaded from, if any
};

/// Mode label for output tables: "HG21" when the fibre's group map
/// follows the standard table, "p8" otherwise.
std::string mode_label(const FiberSpec& fiber, int p);

/// Parses "HG21", "p8" or a bare flat index against the fibre's mode
/// set. Throws ScenarioError when the name does not resolve.
ModeId parse_mode(const FiberSpec& fiber, const std::string& name);

/// Scenario file could not be read or parsed into a Scenario at all
/// (I/O failure, malformed JSON, unknown mode names, wrong types).
class ScenarioError : public Error {
public:
  ScenarioError(std::string msg, std::vector<ValidationIssue> issues = {})
      : Error(std::move(msg)), issues(std::move(issues)) {}
  std::vector<ValidationIssue> issues;
};

/// Outcome of semantic validation: a normalized scenario plus the
/// complete list of violations found (empty = usable).
struct ValidatedScenario {
  Scenario scenario;
  std::vector<ValidationIssue> issues;

  // Cross-references resolved to indices (-1 where unresolved).
  std::vector<int> channel_filter;
  std::vector<int> channel_detector;
  int herald_detector = -1;  // -1 = ideal herald detector

  bool ok() const { return issues.empty(); }
  /// Throws ScenarioError listing every violation unless ok().
  void require_ok() const;
};

/// Validates and normalises a scenario. Never throws on semantic
/// violations; they all land in `issues`. Idempotent: validating the
/// returned scenario yields the same scenario and the same issues.
ValidatedScenario validate_scenario(const Scenario& scenario);

/// Reads a scenario from JSON (// comments allowed). Throws
/// ScenarioError on structural problems; semantic checks are left to
/// validate_scenario.
Scenario load_scenario(const std::filesystem::path& path);

/// Parses a scenario from a JSON string (same contract as load_scenario).
Scenario parse_scenario(const std::string& text, const std::string& origin = "<string>");

/// Canonical JSON serialisation of the effective (normalized) scenario.
/// Deterministic: object keys are sorted, numbers round-trip exactly.
std::string serialize_scenario(const Scenario& scenario);

/// FNV-1a hash of the canonical serialisation; identifies the effective
/// configuration in output bundles and file names.
std::uint64_t scenario_hash(const Scenario& scenario);

/// Hash rendered as 16 hex digits.
std::string scenario_hash_hex(const Scenario& scenario);

}  // namespace fmflink
