// report.hpp — one-shot reproduction of the shipped reference scenarios
// with their design-target checks.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fmflink/pipeline.hpp"

namespace fmflink {

struct CheckResult {
  std::string tag;     // stable identifier, e.g. "group-fractions"
  bool pass = false;
  std::string detail;  // numbers behind the verdict
};

struct ReproduceReport {
  std::vector<CheckResult> checks;
  std::vector<std::string> scenario_hashes;

  bool all_pass() const {
    for (const auto& check : checks)
      if (!check.pass) return false;
    return true;
  }
};

/// Runs the three reference scenarios found in `scenario_dir`
/// (back_to_back_40m.json, link_8km.json, link_8km_coexistence.json),
/// writes their result bundles under `output_dir` and evaluates the
/// design-target checks recorded in the scenario annotations.
ReproduceReport reproduce_report(const std::filesystem::path& scenario_dir,
                                 const std::filesystem::path& output_dir,
                                 const RunOptions& options = {});

}  // namespace fmflink
