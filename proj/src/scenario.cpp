#include "fmflink/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fmflink/units.hpp"

namespace fmflink {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& code, const std::string& message) {
  throw ScenarioError(message, {ValidationIssue{code, message}});
}

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key))
    fail(where + "." + key,
         "missing required field '" + std::string(key) + "' in " + where);
  return obj.at(key);
}

double as_number(const json& value, const std::string& where) {
  if (!value.is_number())
    fail(where, "field " + where + " must be a number");
  return value.get<double>();
}

double number(const json& obj, const char* key, const std::string& where) {
  return as_number(require(obj, key, where), where + "." + key);
}

double number_or(const json& obj, const char* key, double fallback,
                 const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) return fallback;
  return as_number(obj.at(key), where + "." + key);
}

std::string text_or(const json& obj, const char* key, const std::string& fallback,
                    const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) return fallback;
  const json& value = obj.at(key);
  if (!value.is_string())
    fail(where + "." + key, "field " + where + "." + key + " must be a string");
  return value.get<std::string>();
}

/// dB figure honouring the device's loss convention: "transmission"
/// stores signed dB, "loss" stores positive magnitudes.
double signed_db(double value, bool positive_loss) {
  return positive_loss ? -value : value;
}

bool positive_loss_convention(const json& obj, const std::string& where) {
  const std::string convention =
      text_or(obj, "loss_convention", "transmission", where);
  if (convention == "loss") return true;
  if (convention == "transmission") return false;
  fail(where + ".loss_convention",
       "loss_convention must be 'transmission' or 'loss', got '" + convention + "'");
}

// Triangular HG table matching this fibre's group map, if any.
std::optional<ModeTable> hg_table(const FiberSpec& fiber) {
  const int m = fiber.mode_count();
  const int q = fiber.group_count();
  if (q < 1 || m != q * (q + 1) / 2) return std::nullopt;
  ModeTable table(q);
  if (table.group_map() != fiber.group_of) return std::nullopt;
  return table;
}

// ---------------------------------------------------------------- fibre

FiberSpec load_fiber(const json& obj) {
  FiberSpec fiber;
  const std::string where = "fiber";
  fiber.length_m = number(obj, "length_m", where);
  fiber.intra_group_rate = number_or(obj, "intra_group_rate_per_m", 1.0, where);

  if (obj.contains("group_of")) {
    const json& groups = obj.at("group_of");
    if (!groups.is_array() || groups.empty())
      fail(where + ".group_of", "fiber.group_of must be a nonempty array");
    for (const auto& g : groups) {
      if (!g.is_number_integer())
        fail(where + ".group_of", "fiber.group_of entries must be integers");
      fiber.group_of.push_back(g.get<int>());
    }
  } else {
    const double groups = number_or(obj, "groups", 5.0, where);
    if (groups < 1.0 || groups != std::floor(groups))
      fail(where + ".groups", "fiber.groups must be a positive integer");
    fiber.group_of = ModeTable(static_cast<int>(groups)).group_map();
  }
  const int m = fiber.mode_count();
  const int q = fiber.group_count();

  // Attenuation: normalized per-metre vector wins over the dB/km forms.
  if (obj.contains("attenuation_per_m")) {
    const json& a = obj.at("attenuation_per_m");
    if (!a.is_array() || static_cast<int>(a.size()) != m)
      fail(where + ".attenuation_per_m",
           "fiber.attenuation_per_m must list one value per mode");
    fiber.attenuation.resize(m);
    for (int p = 0; p < m; ++p)
      fiber.attenuation(p) = as_number(a.at(static_cast<std::size_t>(p)),
                                       where + ".attenuation_per_m");
  } else if (obj.contains("attenuation_db_per_km") &&
             obj.at("attenuation_db_per_km").is_array()) {
    const json& a = obj.at("attenuation_db_per_km");
    if (static_cast<int>(a.size()) != m)
      fail(where + ".attenuation_db_per_km",
           "fiber.attenuation_db_per_km must list one value per mode");
    fiber.attenuation.resize(m);
    for (int p = 0; p < m; ++p)
      fiber.attenuation(p) = attenuation_coefficient(
          as_number(a.at(static_cast<std::size_t>(p)), where + ".attenuation_db_per_km"));
  } else {
    const double db_per_km = number_or(obj, "attenuation_db_per_km", 0.0, where);
    fiber.attenuation = Eigen::VectorXd::Constant(m, attenuation_coefficient(db_per_km));
  }

  fiber.inter_group_d = Eigen::MatrixXd::Zero(q, q);
  if (obj.contains("inter_group_d_per_m")) {
    const json& d = obj.at("inter_group_d_per_m");
    const std::string dwhere = where + ".inter_group_d_per_m";
    const std::string kind = text_or(d, "kind", "", dwhere);
    if (kind == "adjacent" || kind == "uniform") {
      const double value = number(d, "value", dwhere);
      for (int a = 0; a < q; ++a)
        for (int b = a + 1; b < q; ++b)
          if (kind == "uniform" || b == a + 1) {
            fiber.inter_group_d(a, b) = value;
            fiber.inter_group_d(b, a) = value;
          }
    } else if (kind == "pairs") {
      const json& entries = require(d, "entries", dwhere);
      if (!entries.is_array()) fail(dwhere + ".entries", "entries must be an array");
      for (const auto& entry : entries) {
        const int a = static_cast<int>(number(entry, "g_a", dwhere + ".entries"));
        const int b = static_cast<int>(number(entry, "g_b", dwhere + ".entries"));
        if (a < 1 || a > q || b < 1 || b > q || a == b)
          fail(dwhere + ".entries",
               "pair (" + std::to_string(a) + "," + std::to_string(b) +
                   ") does not name two distinct groups in 1.." + std::to_string(q));
        const double value = number(entry, "d_per_m", dwhere + ".entries");
        fiber.inter_group_d(a - 1, b - 1) = value;
        fiber.inter_group_d(b - 1, a - 1) = value;
      }
    } else if (kind == "matrix") {
      const json& table = require(d, "table", dwhere);
      if (!table.is_array() || static_cast<int>(table.size()) != q)
        fail(dwhere + ".table", "table must be a " + std::to_string(q) + "x" +
                                    std::to_string(q) + " array");
      for (int a = 0; a < q; ++a) {
        const json& row = table.at(static_cast<std::size_t>(a));
        if (!row.is_array() || static_cast<int>(row.size()) != q)
          fail(dwhere + ".table", "table rows must have " + std::to_string(q) +
                                      " entries");
        for (int b = 0; b < q; ++b)
          if (a != b)
            fiber.inter_group_d(a, b) =
                as_number(row.at(static_cast<std::size_t>(b)), dwhere + ".table");
      }
    } else {
      fail(dwhere + ".kind",
           "inter_group_d_per_m.kind must be adjacent, uniform, pairs or matrix");
    }
  }

  if (obj.contains("admissible_d_per_m")) {
    const json& range = obj.at("admissible_d_per_m");
    if (!range.is_array() || range.size() != 2)
      fail(where + ".admissible_d_per_m", "admissible_d_per_m must be [min, max]");
    fiber.d_min = as_number(range.at(0), where + ".admissible_d_per_m");
    fiber.d_max = as_number(range.at(1), where + ".admissible_d_per_m");
  }
  return fiber;
}

// --------------------------------------------------------------- devices

void expand_group_crosstalk(MuxDemuxSpec& spec, const FiberSpec& fiber,
                            const Eigen::MatrixXd& levels_db, bool relative,
                            const std::string& where) {
  const int m = fiber.mode_count();
  const int q = fiber.group_count();
  Eigen::VectorXd members = Eigen::VectorXd::Zero(q);
  for (int p = 0; p < m; ++p) members(fiber.group_of[static_cast<std::size_t>(p)] - 1) += 1.0;

  spec.crosstalk_db = Eigen::MatrixXd::Constant(m, m, -kInfDb);
  for (int in = 0; in < m; ++in) {
    const int ga = fiber.group_of[static_cast<std::size_t>(in)] - 1;
    for (int gb = 0; gb < q; ++gb) {
      const double level = levels_db(ga, gb);
      if (std::isinf(level) && level < 0.0) continue;
      // Share of this group-level aggregate landing on each member of
      // the target group; in-group cells spread over the other members.
      const double receivers = (ga == gb) ? members(gb) - 1.0 : members(gb);
      if (receivers < 1.0)
        fail(where + ".crosstalk",
             "in-group crosstalk declared for single-mode group " +
                 std::to_string(gb + 1));
      const double reference = relative ? spec.insertion_loss_db(in) : 0.0;
      const double per_mode_db = level + reference - 10.0 * std::log10(receivers);
      for (int out = 0; out < m; ++out) {
        if (out == in) continue;
        if (fiber.group_of[static_cast<std::size_t>(out)] - 1 != gb) continue;
        spec.crosstalk_db(in, out) = per_mode_db;
      }
    }
  }
}

MuxDemuxSpec load_device(const json& obj, const FiberSpec& fiber,
                         const std::string& where) {
  MuxDemuxSpec spec;
  spec.label = text_or(obj, "label", where, where);
  const int m = fiber.mode_count();
  const bool positive_loss = positive_loss_convention(obj, where);

  const json& il = require(obj, "insertion_loss_db", where);
  spec.insertion_loss_db.resize(m);
  if (il.is_array()) {
    if (static_cast<int>(il.size()) != m)
      fail(where + ".insertion_loss_db",
           "insertion_loss_db must list one value per mode");
    for (int p = 0; p < m; ++p)
      spec.insertion_loss_db(p) = signed_db(
          as_number(il.at(static_cast<std::size_t>(p)), where + ".insertion_loss_db"),
          positive_loss);
  } else {
    spec.insertion_loss_db.setConstant(
        signed_db(as_number(il, where + ".insertion_loss_db"), positive_loss));
  }

  if (obj.contains("wavelength_validity_nm")) {
    const json& band = obj.at("wavelength_validity_nm");
    if (!band.is_array() || band.size() != 2)
      fail(where + ".wavelength_validity_nm",
           "wavelength_validity_nm must be [low, high]");
    spec.wavelength_validity_nm = {as_number(band.at(0), where), as_number(band.at(1), where)};
  }

  spec.crosstalk_db = Eigen::MatrixXd::Constant(m, m, -kInfDb);
  if (obj.contains("crosstalk_db")) {
    // Normalized form: full per-mode table, absolute dB, null = no leak.
    const json& table = obj.at("crosstalk_db");
    if (!table.is_array() || static_cast<int>(table.size()) != m)
      fail(where + ".crosstalk_db", "crosstalk_db must be an MxM array");
    for (int in = 0; in < m; ++in) {
      const json& row = table.at(static_cast<std::size_t>(in));
      if (!row.is_array() || static_cast<int>(row.size()) != m)
        fail(where + ".crosstalk_db", "crosstalk_db rows must have M entries");
      for (int out = 0; out < m; ++out) {
        const json& cell = row.at(static_cast<std::size_t>(out));
        if (cell.is_null() || in == out) continue;
        spec.crosstalk_db(in, out) =
            signed_db(as_number(cell, where + ".crosstalk_db"), positive_loss);
      }
    }
  } else if (obj.contains("crosstalk")) {
    const json& xt = obj.at("crosstalk");
    const std::string xwhere = where + ".crosstalk";
    const std::string kind = text_or(xt, "kind", "", xwhere);
    const std::string reference = text_or(xt, "reference", "input", xwhere);
    if (reference != "input" && reference != "channel")
      fail(xwhere + ".reference", "crosstalk.reference must be 'input' or 'channel'");
    const bool relative = reference == "channel";
    const int q = fiber.group_count();

    if (kind == "group_uniform") {
      const double level = signed_db(number(xt, "level_db", xwhere), positive_loss);
      Eigen::MatrixXd levels = Eigen::MatrixXd::Constant(q, q, -kInfDb);
      for (int a = 0; a < q; ++a)
        for (int b = 0; b < q; ++b)
          if (a != b) levels(a, b) = level;
      expand_group_crosstalk(spec, fiber, levels, relative, where);
    } else if (kind == "group_table") {
      const json& table = require(xt, "table", xwhere);
      if (!table.is_array() || static_cast<int>(table.size()) != q)
        fail(xwhere + ".table", "crosstalk.table must be a QxQ array");
      Eigen::MatrixXd levels = Eigen::MatrixXd::Constant(q, q, -kInfDb);
      for (int a = 0; a < q; ++a) {
        const json& row = table.at(static_cast<std::size_t>(a));
        if (!row.is_array() || static_cast<int>(row.size()) != q)
          fail(xwhere + ".table", "crosstalk.table rows must have Q entries");
        for (int b = 0; b < q; ++b) {
          const json& cell = row.at(static_cast<std::size_t>(b));
          if (cell.is_null()) continue;
          levels(a, b) = signed_db(as_number(cell, xwhere + ".table"), positive_loss);
        }
      }
      expand_group_crosstalk(spec, fiber, levels, relative, where);
    } else if (kind == "mode_table") {
      const json& table = require(xt, "table", xwhere);
      if (!table.is_array() || static_cast<int>(table.size()) != m)
        fail(xwhere + ".table", "crosstalk.table must be an MxM array");
      for (int in = 0; in < m; ++in) {
        const json& row = table.at(static_cast<std::size_t>(in));
        if (!row.is_array() || static_cast<int>(row.size()) != m)
          fail(xwhere + ".table", "crosstalk.table rows must have M entries");
        for (int out = 0; out < m; ++out) {
          const json& cell = row.at(static_cast<std::size_t>(out));
          if (cell.is_null() || in == out) continue;
          const double reference = relative ? spec.insertion_loss_db(in) : 0.0;
          spec.crosstalk_db(in, out) =
              signed_db(as_number(cell, xwhere + ".table"), positive_loss) + reference;
        }
      }
    } else {
      fail(xwhere + ".kind",
           "crosstalk.kind must be group_uniform, group_table or mode_table");
    }
  }
  return spec;
}

// ------------------------------------------------- filters and detectors

WdmFilterSpec load_filter(const json& obj, const std::string& where) {
  WdmFilterSpec filter;
  const bool positive_loss = positive_loss_convention(obj, where);
  filter.label = text_or(obj, "label", "", where);
  if (filter.label.empty())
    fail(where + ".label", "filters must carry a nonempty label");
  filter.center_nm = number(obj, "center_nm", where);
  filter.bandwidth_nm = number_or(obj, "bandwidth_nm", 1.0, where);
  filter.passband_loss_db =
      signed_db(number_or(obj, "passband_loss_db", 0.0, where), positive_loss);
  filter.extinction_db = number_or(obj, "extinction_db", 100.0, where);
  return filter;
}

DetectorSpec load_detector(const json& obj, const std::string& where) {
  DetectorSpec detector;
  detector.label = text_or(obj, "label", "", where);
  if (detector.label.empty())
    fail(where + ".label", "detectors must carry a nonempty label");
  detector.efficiency = number_or(obj, "efficiency", 1.0, where);
  detector.dark_rate_hz = number_or(obj, "dark_rate_hz", 0.0, where);
  return detector;
}

// ---------------------------------------------------------------- plan

Channel load_channel(const json& obj, const FiberSpec& fiber,
                     const std::string& where) {
  Channel channel;
  const std::string kind = text_or(obj, "kind", "", where);
  if (kind == "quantum")
    channel.kind = Channel::Kind::Quantum;
  else if (kind == "classical")
    channel.kind = Channel::Kind::Classical;
  else
    fail(where + ".kind", "channel kind must be 'quantum' or 'classical'");

  const json& mode = require(obj, "mode", where);
  if (mode.is_string())
    channel.mode = parse_mode(fiber, mode.get<std::string>());
  else if (mode.is_number_integer())
    channel.mode = parse_mode(fiber, std::to_string(mode.get<int>()));
  else
    fail(where + ".mode", "channel mode must be a name or flat index");

  channel.wavelength_nm = number(obj, "wavelength_nm", where);
  channel.pair_rate_hz = number_or(obj, "pair_rate_hz", 0.0, where);
  channel.power_w = number_or(obj, "power_w", 0.0, where);
  channel.filter = text_or(obj, "filter", "", where);
  channel.detector = text_or(obj, "detector", "", where);
  return channel;
}

CountingPlan load_counting(const json& obj) {
  CountingPlan plan;
  if (obj.is_null()) return plan;
  const std::string where = "counting";
  plan.window_s = number_or(obj, "window_s", plan.window_s, where);
  plan.acquisition_s = number_or(obj, "acquisition_s", plan.acquisition_s, where);
  const double reps = number_or(obj, "repetitions", 1.0, where);
  if (reps < 1.0 || reps != std::floor(reps))
    fail(where + ".repetitions", "counting.repetitions must be a positive integer");
  plan.repetitions = static_cast<int>(reps);
  if (obj.contains("seed")) {
    const json& seed = obj.at("seed");
    if (!seed.is_number_unsigned() && !seed.is_number_integer())
      fail(where + ".seed", "counting.seed must be a nonnegative integer");
    plan.seed = seed.get<std::uint64_t>();
  }
  if (obj.contains("herald")) {
    const json& herald = obj.at("herald");
    plan.herald.detector = text_or(herald, "detector", "", where + ".herald");
    plan.herald.survival = number_or(herald, "survival", 1.0, where + ".herald");
  }
  return plan;
}

}  // namespace

// ------------------------------------------------------------- naming

std::string mode_label(const FiberSpec& fiber, int p) {
  if (p < 1 || p > fiber.mode_count())
    throw std::out_of_range("mode_label: flat index outside the fibre's modes");
  if (const auto table = hg_table(fiber))
    return ModeTable::name(table->by_flat(p));
  return "p" + std::to_string(p);
}

ModeId parse_mode(const FiberSpec& fiber, const std::string& name) {
  const auto table = hg_table(fiber);
  if (table) {
    if (auto mode = table->parse(name)) return *mode;
  } else {
    // Non-triangular fibres accept flat indices only.
    std::string digits = name;
    if (!digits.empty() && (digits[0] == 'p' || digits[0] == 'P'))
      digits = digits.substr(1);
    try {
      std::size_t used = 0;
      const int p = std::stoi(digits, &used);
      if (used == digits.size() && p >= 1 && p <= fiber.mode_count()) {
        ModeId mode;
        mode.m = -1;
        mode.n = -1;
        mode.p = p;
        mode.g = fiber.group_of[static_cast<std::size_t>(p - 1)];
        return mode;
      }
    } catch (const std::exception&) {
      // fall through to the error below
    }
  }
  fail("plan.mode", "mode '" + name + "' does not name one of the fibre's " +
                        std::to_string(fiber.mode_count()) + " modes");
}

// ------------------------------------------------------------- loading

Scenario parse_scenario(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& error) {
    throw ScenarioError("failed to parse scenario " + origin + ": " + error.what(),
                        {ValidationIssue{"json.parse", error.what()}});
  }
  if (!root.is_object())
    fail("json.root", "scenario " + origin + " must be a JSON object");

  Scenario scenario;
  scenario.name = text_or(root, "name", "", "scenario");
  scenario.source_path = origin;
  scenario.fiber = load_fiber(require(root, "fiber", "scenario"));
  scenario.mux = load_device(require(root, "mux", "scenario"), scenario.fiber, "mux");
  scenario.demux =
      load_device(require(root, "demux", "scenario"), scenario.fiber, "demux");

  if (root.contains("wdm_filters")) {
    const json& filters = root.at("wdm_filters");
    if (!filters.is_array()) fail("wdm_filters", "wdm_filters must be an array");
    for (std::size_t i = 0; i < filters.size(); ++i)
      scenario.wdm_filters.push_back(load_filter(
          filters.at(i), "wdm_filters[" + std::to_string(i) + "]"));
  }
  if (root.contains("detectors")) {
    const json& detectors = root.at("detectors");
    if (!detectors.is_array()) fail("detectors", "detectors must be an array");
    for (std::size_t i = 0; i < detectors.size(); ++i)
      scenario.detectors.push_back(load_detector(
          detectors.at(i), "detectors[" + std::to_string(i) + "]"));
  }
  if (root.contains("channels")) {
    const json& channels = root.at("channels");
    if (!channels.is_array()) fail("channels", "channels must be an array");
    for (std::size_t i = 0; i < channels.size(); ++i)
      scenario.plan.channels.push_back(load_channel(
          channels.at(i), scenario.fiber, "channels[" + std::to_string(i) + "]"));
  }
  scenario.counting =
      load_counting(root.contains("counting") ? root.at("counting") : json(nullptr));
  return scenario;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw ScenarioError("cannot open scenario file " + path.string(),
                        {ValidationIssue{"io.open", "cannot open " + path.string()}});
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario(buffer.str(), path.string());
}

// ---------------------------------------------------------- validation

void ValidatedScenario::require_ok() const {
  if (ok()) return;
  std::string message = "scenario has " + std::to_string(issues.size()) +
                        " validation issue(s):";
  for (const auto& issue : issues)
    message += "\n  [" + issue.code + "] " + issue.message;
  throw ScenarioError(message, issues);
}

ValidatedScenario validate_scenario(const Scenario& scenario) {
  ValidatedScenario out;
  out.scenario = scenario;
  auto& issues = out.issues;

  Scenario& s = out.scenario;
  s.fiber.append_issues(issues, "fiber");

  const int m = s.fiber.mode_count();
  s.mux.append_issues(issues, "mux");
  s.demux.append_issues(issues, "demux");
  if (s.mux.channel_count() != m)
    issues.push_back({"mux.size", "mux has " + std::to_string(s.mux.channel_count()) +
                                      " channels but the fibre carries " +
                                      std::to_string(m) + " modes"});
  if (s.demux.channel_count() != m)
    issues.push_back({"demux.size",
                      "demux has " + std::to_string(s.demux.channel_count()) +
                          " channels but the fibre carries " + std::to_string(m) +
                          " modes"});

  std::map<std::string, int> filter_index;
  for (std::size_t i = 0; i < s.wdm_filters.size(); ++i) {
    const std::string prefix = "wdm_filters[" + std::to_string(i) + "]";
    s.wdm_filters[i].append_issues(issues, prefix);
    if (!filter_index.emplace(s.wdm_filters[i].label, static_cast<int>(i)).second)
      issues.push_back({prefix + ".label",
                        "duplicate filter label '" + s.wdm_filters[i].label + "'"});
  }
  std::map<std::string, int> detector_index;
  for (std::size_t i = 0; i < s.detectors.size(); ++i) {
    const std::string prefix = "detectors[" + std::to_string(i) + "]";
    s.detectors[i].append_issues(issues, prefix);
    if (!detector_index.emplace(s.detectors[i].label, static_cast<int>(i)).second)
      issues.push_back({prefix + ".label",
                        "duplicate detector label '" + s.detectors[i].label + "'"});
  }

  std::set<std::pair<int, double>> slots;
  // Monitoring chain per quantum wavelength band: (filter, detector).
  std::map<double, std::pair<std::string, std::string>> band_monitor;

  out.channel_filter.assign(s.plan.channels.size(), -1);
  out.channel_detector.assign(s.plan.channels.size(), -1);

  for (std::size_t i = 0; i < s.plan.channels.size(); ++i) {
    Channel& channel = s.plan.channels[i];
    const std::string prefix = "channels[" + std::to_string(i) + "]";

    if (channel.mode.p < 1 || channel.mode.p > m) {
      issues.push_back({prefix + ".mode",
                        "mode index " + std::to_string(channel.mode.p) +
                            " outside the fibre's 1.." + std::to_string(m)});
    } else {
      // Normalise the group id against the fibre's map.
      channel.mode.g = s.fiber.group_of[static_cast<std::size_t>(channel.mode.p - 1)];
      if (!slots.emplace(channel.mode.p, channel.wavelength_nm).second)
        issues.push_back({"plan.duplicate",
                          "channels assign mode " + mode_label(s.fiber, channel.mode.p) +
                              " at " + std::to_string(channel.wavelength_nm) +
                              " nm more than once"});
    }

    if (!(channel.wavelength_nm > 0.0))
      issues.push_back({prefix + ".wavelength", "wavelength must be positive"});
    for (const auto* device : {&s.mux, &s.demux}) {
      if (channel.wavelength_nm < device->wavelength_validity_nm.first ||
          channel.wavelength_nm > device->wavelength_validity_nm.second)
        issues.push_back(
            {prefix + ".wavelength",
             "wavelength " + std::to_string(channel.wavelength_nm) +
                 " nm outside the " +
                 (device == &s.mux ? std::string("mux") : std::string("demux")) +
                 " validity interval"});
    }

    if (channel.kind == Channel::Kind::Quantum) {
      if (!(channel.pair_rate_hz >= 0.0))
        issues.push_back({prefix + ".pair_rate", "pair rate must be >= 0"});
      if (channel.power_w != 0.0)
        issues.push_back({prefix + ".power",
                          "quantum channels cannot carry classical power"});
    } else {
      if (!(channel.power_w >= 0.0))
        issues.push_back({prefix + ".power", "classical power must be >= 0"});
      if (channel.pair_rate_hz != 0.0)
        issues.push_back({prefix + ".pair_rate",
                          "classical channels cannot carry a pair rate"});
    }

    if (!channel.filter.empty()) {
      const auto it = filter_index.find(channel.filter);
      if (it == filter_index.end())
        issues.push_back({prefix + ".filter",
                          "unknown filter label '" + channel.filter + "'"});
      else
        out.channel_filter[i] = it->second;
    }
    if (!channel.detector.empty()) {
      const auto it = detector_index.find(channel.detector);
      if (it == detector_index.end())
        issues.push_back({prefix + ".detector",
                          "unknown detector label '" + channel.detector + "'"});
      else
        out.channel_detector[i] = it->second;
    }

    if (channel.kind == Channel::Kind::Quantum) {
      const auto [it, inserted] = band_monitor.emplace(
          channel.wavelength_nm, std::make_pair(channel.filter, channel.detector));
      if (!inserted && it->second != std::make_pair(channel.filter, channel.detector))
        issues.push_back(
            {"plan.band_monitor",
             "quantum channels at " + std::to_string(channel.wavelength_nm) +
                 " nm disagree on their filter/detector pair; one monitoring "
                 "chain per band"});
    }
  }

  const CountingPlan& counting = s.counting;
  if (!(counting.window_s > 0.0))
    issues.push_back({"counting.window", "coincidence window must be > 0"});
  if (!(counting.acquisition_s > 0.0))
    issues.push_back({"counting.acquisition", "acquisition time must be > 0"});
  if (counting.repetitions < 1)
    issues.push_back({"counting.repetitions", "repetitions must be >= 1"});
  if (!(counting.herald.survival >= 0.0) || !(counting.herald.survival <= 1.0))
    issues.push_back({"counting.herald.survival",
                      "herald survival must lie in [0, 1]"});
  if (!counting.herald.detector.empty()) {
    const auto it = detector_index.find(counting.herald.detector);
    if (it == detector_index.end())
      issues.push_back({"counting.herald.detector",
                        "unknown detector label '" + counting.herald.detector + "'"});
    else
      out.herald_detector = it->second;
  }

  return out;
}

// ------------------------------------------------------- serialisation

namespace {

json device_to_json(const MuxDemuxSpec& spec) {
  json out;
  out["insertion_loss_db"] = std::vector<double>(
      spec.insertion_loss_db.data(),
      spec.insertion_loss_db.data() + spec.insertion_loss_db.size());
  json table = json::array();
  for (int in = 0; in < spec.channel_count(); ++in) {
    json row = json::array();
    for (int out_ch = 0; out_ch < spec.channel_count(); ++out_ch) {
      const double xt = spec.crosstalk_db(in, out_ch);
      if (in == out_ch || (std::isinf(xt) && xt < 0.0))
        row.push_back(nullptr);
      else
        row.push_back(xt);
    }
    table.push_back(std::move(row));
  }
  out["crosstalk_db"] = std::move(table);
  out["wavelength_validity_nm"] = {spec.wavelength_validity_nm.first,
                                   spec.wavelength_validity_nm.second};
  if (!spec.label.empty()) out["label"] = spec.label;
  return out;
}

}  // namespace

std::string serialize_scenario(const Scenario& scenario) {
  json root;
  if (!scenario.name.empty()) root["name"] = scenario.name;

  json fiber;
  fiber["length_m"] = scenario.fiber.length_m;
  fiber["group_of"] = scenario.fiber.group_of;
  fiber["intra_group_rate_per_m"] = scenario.fiber.intra_group_rate;
  json d_table = json::array();
  const int q = scenario.fiber.group_count();
  for (int a = 0; a < q; ++a) {
    json row = json::array();
    for (int b = 0; b < q; ++b)
      row.push_back(a == b ? json(nullptr) : json(scenario.fiber.inter_group_d(a, b)));
    d_table.push_back(std::move(row));
  }
  fiber["inter_group_d_per_m"] = {{"kind", "matrix"}, {"table", std::move(d_table)}};
  fiber["attenuation_per_m"] = std::vector<double>(
      scenario.fiber.attenuation.data(),
      scenario.fiber.attenuation.data() + scenario.fiber.attenuation.size());
  fiber["admissible_d_per_m"] = {scenario.fiber.d_min, scenario.fiber.d_max};
  root["fiber"] = std::move(fiber);

  root["mux"] = device_to_json(scenario.mux);
  root["demux"] = device_to_json(scenario.demux);

  json filters = json::array();
  for (const auto& filter : scenario.wdm_filters)
    filters.push_back({{"label", filter.label},
                       {"center_nm", filter.center_nm},
                       {"bandwidth_nm", filter.bandwidth_nm},
                       {"passband_loss_db", filter.passband_loss_db},
                       {"extinction_db", filter.extinction_db}});
  root["wdm_filters"] = std::move(filters);

  json detectors = json::array();
  for (const auto& detector : scenario.detectors)
    detectors.push_back({{"label", detector.label},
                         {"efficiency", detector.efficiency},
                         {"dark_rate_hz", detector.dark_rate_hz}});
  root["detectors"] = std::move(detectors);

  json channels = json::array();
  for (const auto& channel : scenario.plan.channels) {
    json entry;
    entry["kind"] = channel.kind == Channel::Kind::Quantum ? "quantum" : "classical";
    entry["mode"] = mode_label(scenario.fiber, channel.mode.p);
    entry["wavelength_nm"] = channel.wavelength_nm;
    if (channel.kind == Channel::Kind::Quantum)
      entry["pair_rate_hz"] = channel.pair_rate_hz;
    else
      entry["power_w"] = channel.power_w;
    if (!channel.filter.empty()) entry["filter"] = channel.filter;
    if (!channel.detector.empty()) entry["detector"] = channel.detector;
    channels.push_back(std::move(entry));
  }
  root["channels"] = std::move(channels);

  json counting;
  counting["window_s"] = scenario.counting.window_s;
  counting["acquisition_s"] = scenario.counting.acquisition_s;
  counting["repetitions"] = scenario.counting.repetitions;
  counting["seed"] = scenario.counting.seed;
  json herald;
  if (!scenario.counting.herald.detector.empty())
    herald["detector"] = scenario.counting.herald.detector;
  herald["survival"] = scenario.counting.herald.survival;
  counting["herald"] = std::move(herald);
  root["counting"] = std::move(counting);

  // nlohmann::json objects keep keys sorted, so this dump is canonical.
  return root.dump(2);
}

std::uint64_t scenario_hash(const Scenario& scenario) {
  const std::string text = serialize_scenario(scenario);
  std::uint64_t hash = 1469598103934665603ULL;  // FNV-1a 64 offset basis
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ULL;  // FNV prime
  }
  return hash;
}

std::string scenario_hash_hex(const Scenario& scenario) {
  static const char* digits = "0123456789abcdef";
  std::uint64_t hash = scenario_hash(scenario);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[hash & 0xf];
    hash >>= 4;
  }
  return out;
}

}  // namespace fmflink
