#include "fmflink/specs.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fmflink/units.hpp"

namespace fmflink {

namespace {

void add(std::vector<ValidationIssue>& issues, std::string code, std::string message) {
  issues.push_back(ValidationIssue{std::move(code), std::move(message)});
}

}  // namespace

int FiberSpec::group_count() const {
  int q = 0;
  for (int g : group_of) q = std::max(q, g);
  return q;
}

void FiberSpec::append_issues(std::vector<ValidationIssue>& issues,
                              const std::string& prefix) const {
  if (!(length_m > 0.0))
    add(issues, prefix + ".length", "fibre length must be positive, got " +
                                        std::to_string(length_m) + " m");
  if (group_of.empty())
    add(issues, prefix + ".modes", "fibre must carry at least one mode");

  const int q = group_count();
  for (std::size_t i = 0; i < group_of.size(); ++i)
    if (group_of[i] < 1)
      add(issues, prefix + ".groups",
          "mode " + std::to_string(i + 1) + " has group id < 1");
  // Every group id up to the maximum must actually occur.
  std::set<int> seen(group_of.begin(), group_of.end());
  for (int g = 1; g <= q; ++g)
    if (!seen.count(g))
      add(issues, prefix + ".groups", "group ids must be contiguous; group " +
                                          std::to_string(g) + " is empty");

  if (!(intra_group_rate >= 0.0) || !std::isfinite(intra_group_rate))
    add(issues, prefix + ".intra_group_rate",
        "intra-group coupling rate must be finite and >= 0");

  if (inter_group_d.rows() != q || inter_group_d.cols() != q) {
    add(issues, prefix + ".inter_group_d",
        "inter-group coupling matrix must be " + std::to_string(q) + "x" +
            std::to_string(q) + ", got " + std::to_string(inter_group_d.rows()) +
            "x" + std::to_string(inter_group_d.cols()));
  } else {
    for (int a = 0; a < q; ++a)
      for (int b = a + 1; b < q; ++b) {
        const double d_ab = inter_group_d(a, b);
        if (d_ab != inter_group_d(b, a)) {
          add(issues, prefix + ".inter_group_d",
              "inter-group coupling must be symmetric; entry (" +
                  std::to_string(a + 1) + "," + std::to_string(b + 1) +
                  ") differs from its transpose");
        }
        if (!std::isfinite(d_ab) || d_ab < 0.0) {
          add(issues, prefix + ".inter_group_d",
              "coupling rate (" + std::to_string(a + 1) + "," +
                  std::to_string(b + 1) + ") must be finite and >= 0");
        } else if (d_ab > 0.0 && (d_ab < d_min || d_ab > d_max)) {
          add(issues, prefix + ".inter_group_d",
              "coupling rate (" + std::to_string(a + 1) + "," +
                  std::to_string(b + 1) + ") = " + std::to_string(d_ab) +
                  " outside the admissible range [" + std::to_string(d_min) +
                  ", " + std::to_string(d_max) + "] 1/m");
        }
      }
  }

  if (attenuation.size() != mode_count())
    add(issues, prefix + ".attenuation",
        "attenuation vector must have one entry per mode");
  else
    for (int p = 0; p < attenuation.size(); ++p)
      if (!std::isfinite(attenuation(p)) || attenuation(p) < 0.0)
        add(issues, prefix + ".attenuation",
            "attenuation of mode " + std::to_string(p + 1) +
                " must be finite and >= 0");

  if (!(d_min > 0.0) || !(d_max > d_min))
    add(issues, prefix + ".admissible_d", "admissible D range must satisfy 0 < min < max");
}

FiberSpec FiberSpec::standard(double length_m, double attenuation_per_m,
                              const ModeTable& table) {
  FiberSpec spec;
  spec.length_m = length_m;
  spec.group_of = table.group_map();
  spec.inter_group_d = Eigen::MatrixXd::Zero(table.group_count(), table.group_count());
  spec.attenuation =
      Eigen::VectorXd::Constant(table.mode_count(), attenuation_per_m);
  return spec;
}

void MuxDemuxSpec::append_issues(std::vector<ValidationIssue>& issues,
                                 const std::string& prefix) const {
  const int m = channel_count();
  if (m == 0) {
    add(issues, prefix + ".channels", "device must have at least one channel");
    return;
  }
  for (int p = 0; p < m; ++p) {
    const double il = insertion_loss_db(p);
    if (!std::isfinite(il) || il > 0.0)
      add(issues, prefix + ".insertion_loss",
          "insertion loss of channel " + std::to_string(p + 1) +
              " must be a finite dB transmission <= 0, got " + std::to_string(il));
  }
  if (crosstalk_db.rows() != m || crosstalk_db.cols() != m) {
    add(issues, prefix + ".crosstalk",
        "crosstalk matrix must be " + std::to_string(m) + "x" + std::to_string(m));
  } else {
    for (int in = 0; in < m; ++in)
      for (int out = 0; out < m; ++out) {
        if (in == out) continue;
        const double xt = crosstalk_db(in, out);
        // -inf marks "no leak"; anything else must be a real leak level.
        if (std::isnan(xt) || xt > 0.0)
          add(issues, prefix + ".crosstalk",
              "crosstalk " + std::to_string(in + 1) + "->" +
                  std::to_string(out + 1) + " must be a dB level <= 0 or -inf");
      }
  }
  if (!(wavelength_validity_nm.first < wavelength_validity_nm.second))
    add(issues, prefix + ".wavelength_validity",
        "wavelength validity interval must be nonempty");
}

MuxDemuxSpec MuxDemuxSpec::uniform(int channels, double insertion_loss_db) {
  MuxDemuxSpec spec;
  spec.insertion_loss_db = Eigen::VectorXd::Constant(channels, insertion_loss_db);
  spec.crosstalk_db = Eigen::MatrixXd::Constant(channels, channels, -kInfDb);
  return spec;
}

void DetectorSpec::append_issues(std::vector<ValidationIssue>& issues,
                                 const std::string& prefix) const {
  if (!(efficiency >= 0.0) || !(efficiency <= 1.0))
    add(issues, prefix + ".efficiency", "detector efficiency must lie in [0, 1]");
  if (!(dark_rate_hz >= 0.0) || !std::isfinite(dark_rate_hz))
    add(issues, prefix + ".dark_rate", "dark rate must be finite and >= 0");
}

void WdmFilterSpec::append_issues(std::vector<ValidationIssue>& issues,
                                  const std::string& prefix) const {
  if (!(center_nm > 0.0))
    add(issues, prefix + ".center", "filter centre wavelength must be positive");
  if (!(bandwidth_nm > 0.0))
    add(issues, prefix + ".bandwidth", "filter bandwidth must be positive");
  if (!std::isfinite(passband_loss_db) || passband_loss_db > 0.0)
    add(issues, prefix + ".passband_loss",
        "passband loss must be a finite dB transmission <= 0");
  if (!(extinction_db > 0.0))
    add(issues, prefix + ".extinction", "extinction must be positive dB");
}

std::vector<const Channel*> ChannelPlan::quantum() const {
  std::vector<const Channel*> out;
  for (const auto& ch : channels)
    if (ch.kind == Channel::Kind::Quantum) out.push_back(&ch);
  return out;
}

std::vector<const Channel*> ChannelPlan::classical() const {
  std::vector<const Channel*> out;
  for (const auto& ch : channels)
    if (ch.kind == Channel::Kind::Classical) out.push_back(&ch);
  return out;
}

double ChannelPlan::total_pair_rate_hz() const {
  double sum = 0.0;
  for (const auto& ch : channels)
    if (ch.kind == Channel::Kind::Quantum) sum += ch.pair_rate_hz;
  return sum;
}

}  // namespace fmflink
