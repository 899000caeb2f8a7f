#include "fmflink/modes.hpp"

#include <cctype>
#include <charconv>
#include <stdexcept>

#include "fmflink/errors.hpp"

namespace fmflink {

ModeTable::ModeTable(int groups) : groups_(groups) {
  if (groups < 1)
    throw std::invalid_argument("ModeTable: group count must be >= 1");
  int p = 1;
  for (int g = 1; g <= groups; ++g) {
    // Within a group m + n = g - 1; enumerate by descending m.
    for (int m = g - 1; m >= 0; --m) {
      modes_.push_back(ModeId{m, g - 1 - m, p, g});
      ++p;
    }
  }
}

const ModeId& ModeTable::by_flat(int p) const {
  if (p < 1 || p > mode_count())
    throw std::out_of_range("ModeTable: flat index " + std::to_string(p) +
                            " outside 1.." + std::to_string(mode_count()));
  return modes_[static_cast<std::size_t>(p - 1)];
}

const ModeId& ModeTable::by_indices(int m, int n) const {
  if (m < 0 || n < 0 || m + n + 1 > groups_)
    throw ModeNotSupported("mode HG(" + std::to_string(m) + "," +
                               std::to_string(n) + ") outside the supported " +
                               std::to_string(groups_) + "-group table",
                           m, n);
  // Group g starts at flat index 1 + g(g-1)/2; descending m within it.
  const int g = m + n + 1;
  const int first = g * (g - 1) / 2;  // 0-based offset of the group
  return modes_[static_cast<std::size_t>(first + (g - 1 - m))];
}

std::optional<ModeId> ModeTable::parse(std::string_view name) const {
  auto parse_int = [](std::string_view s) -> std::optional<int> {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
  };

  if (name.size() >= 4 &&
      (name[0] == 'H' || name[0] == 'h') && (name[1] == 'G' || name[1] == 'g')) {
    // "HG<m><n>" with single-digit indices, the only form the table needs.
    std::string_view digits = name.substr(2);
    if (digits.size() == 2 && std::isdigit(static_cast<unsigned char>(digits[0])) &&
        std::isdigit(static_cast<unsigned char>(digits[1]))) {
      int m = digits[0] - '0';
      int n = digits[1] - '0';
      if (m + n + 1 <= groups_) return by_indices(m, n);
    }
    return std::nullopt;
  }

  std::string_view rest = name;
  if (!rest.empty() && (rest[0] == 'p' || rest[0] == 'P')) rest.remove_prefix(1);
  if (auto p = parse_int(rest); p && *p >= 1 && *p <= mode_count())
    return by_flat(*p);
  return std::nullopt;
}

std::string ModeTable::name(const ModeId& mode) {
  return "HG" + std::to_string(mode.m) + std::to_string(mode.n);
}

std::vector<int> ModeTable::members(int g) const {
  if (g < 1 || g > groups_)
    throw std::out_of_range("ModeTable: group index " + std::to_string(g) +
                            " outside 1.." + std::to_string(groups_));
  std::vector<int> out;
  for (const auto& mode : modes_)
    if (mode.g == g) out.push_back(mode.p);
  return out;
}

std::vector<int> ModeTable::group_map() const {
  std::vector<int> out(modes_.size());
  for (const auto& mode : modes_) out[static_cast<std::size_t>(mode.p - 1)] = mode.g;
  return out;
}

Eigen::MatrixXd ModeTable::group_aggregation() const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(groups_, mode_count());
  for (const auto& mode : modes_) a(mode.g - 1, mode.p - 1) = 1.0;
  return a;
}

Eigen::MatrixXd ModeTable::group_injection() const {
  Eigen::MatrixXd inj = Eigen::MatrixXd::Zero(mode_count(), groups_);
  for (const auto& mode : modes_)
    inj(mode.p - 1, mode.g - 1) = 1.0 / static_cast<double>(mode.g);
  return inj;
}

const ModeTable& default_mode_table() {
  static const ModeTable table(5);
  return table;
}

const ModeId& mode_index(int m, int n) {
  return default_mode_table().by_indices(m, n);
}

}  // namespace fmflink
