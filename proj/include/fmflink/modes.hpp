// modes.hpp — Hermite-Gauss mode bookkeeping.
//
// Modes HG(m,n) fall into quasi-degenerate groups indexed by
// g = m + n + 1; group g holds exactly g modes. The flat index p is
// 1-based and orders modes by group, then by descending m, so for the
// default five-group table:
//
//   g1: HG00                         -> p = 1
//   g2: HG10 HG01                    -> p = 2..3
//   g3: HG20 HG11 HG02               -> p = 4..6
//   g4: HG30 HG21 HG12 HG03          -> p = 7..10
//   g5: HG40 HG31 HG22 HG13 HG04     -> p = 11..15
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace fmflink {

struct ModeId {
  int m = 0;  // horizontal index
  int n = 0;  // vertical index
  int p = 1;  // flat index, 1-based
  int g = 1;  // mode group, 1-based

  friend bool operator==(const ModeId&, const ModeId&) = default;
};

/// Static lookup table for the first `groups` Hermite-Gauss mode groups.
class ModeTable {
public:
  explicit ModeTable(int groups = 5);

  int group_count() const { return groups_; }
  int mode_count() const { return static_cast<int>(modes_.size()); }

  /// Flat index -> mode. p is 1-based; throws std::out_of_range otherwise.
  const ModeId& by_flat(int p) const;

  /// (m, n) -> mode. Throws ModeNotSupported outside the table.
  const ModeId& by_indices(int m, int n) const;

  /// Accepts "HG21", "hg21", "p8" or a bare flat index "8".
  std::optional<ModeId> parse(std::string_view name) const;

  /// Canonical name, e.g. "HG21".
  static std::string name(const ModeId& mode);

  int group_of(int p) const { return by_flat(p).g; }

  /// Flat indices belonging to group g, ascending.
  std::vector<int> members(int g) const;

  /// group_of map in flat order (values 1..Q), as consumed by FiberSpec.
  std::vector<int> group_map() const;

  /// Q x M indicator matrix; left-multiplying per-mode powers sums them
  /// into per-group powers.
  Eigen::MatrixXd group_aggregation() const;

  /// M x Q matrix splitting unit power of each group uniformly over its
  /// member modes. group_aggregation() * group_injection() == identity.
  Eigen::MatrixXd group_injection() const;

private:
  int groups_;
  std::vector<ModeId> modes_;
};

/// The default 15-mode, five-group table.
const ModeTable& default_mode_table();

/// Shorthand for default_mode_table().by_indices(m, n).
const ModeId& mode_index(int m, int n);

}  // namespace fmflink
