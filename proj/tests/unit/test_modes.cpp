#include <doctest.h>

#include <set>
#include <stdexcept>

#include "fmflink/errors.hpp"
#include "fmflink/modes.hpp"

TEST_SUITE_BEGIN("modes");

TEST_CASE("default table enumerates 15 modes in 5 groups") {
  const fmflink::ModeTable& table = fmflink::default_mode_table();
  CHECK(table.mode_count() == 15);
  CHECK(table.group_count() == 5);

  // Group g holds exactly g modes (m+n = g-1 has g solutions).
  for (int g = 1; g <= 5; ++g)
    CHECK(table.members(g).size() == static_cast<std::size_t>(g));
}

TEST_CASE("flat index ordering groups modes and sorts by descending m") {
  const fmflink::ModeTable& table = fmflink::default_mode_table();
  // First mode is the fundamental.
  CHECK(table.by_flat(1).m == 0);
  CHECK(table.by_flat(1).n == 0);
  // Group 2 is HG10 then HG01.
  CHECK(table.by_flat(2).m == 1);
  CHECK(table.by_flat(2).n == 0);
  CHECK(table.by_flat(3).m == 0);
  CHECK(table.by_flat(3).n == 1);
  // Group 3 starts at p=4 with HG20.
  CHECK(table.by_flat(4).m == 2);
  CHECK(table.by_flat(4).n == 0);
  // Last mode is HG04.
  CHECK(table.by_flat(15).m == 0);
  CHECK(table.by_flat(15).n == 4);
}

TEST_CASE("flat index and (m, n) lookups are mutually inverse") {
  const fmflink::ModeTable& table = fmflink::default_mode_table();
  std::set<int> seen;
  for (int p = 1; p <= 15; ++p) {
    const fmflink::ModeId mode = table.by_flat(p);
    CHECK(mode.p == p);
    CHECK(mode.g == mode.m + mode.n + 1);
    CHECK(table.by_indices(mode.m, mode.n).p == p);
    seen.insert(mode.m * 100 + mode.n);
  }
  CHECK(seen.size() == 15);  // all (m, n) pairs distinct
}

TEST_CASE("name and parse round-trip in several spellings") {
  const fmflink::ModeTable& table = fmflink::default_mode_table();
  for (int p = 1; p <= 15; ++p) {
    const fmflink::ModeId mode = table.by_flat(p);
    const auto by_name = table.parse(fmflink::ModeTable::name(mode));
    REQUIRE(by_name.has_value());
    CHECK(by_name->p == p);
    const auto by_p = table.parse("p" + std::to_string(p));
    REQUIRE(by_p.has_value());
    CHECK(by_p->p == p);
    const auto by_index = table.parse(std::to_string(p));
    REQUIRE(by_index.has_value());
    CHECK(by_index->p == p);
  }
  CHECK(fmflink::ModeTable::name(table.by_flat(1)) == "HG00");
  CHECK(table.parse("HG21")->g == 4);
  CHECK(table.parse("hg21")->g == 4);
}

TEST_CASE("out-of-range lookups fail loudly") {
  const fmflink::ModeTable& table = fmflink::default_mode_table();
  CHECK_THROWS_AS(table.by_flat(0), std::out_of_range);
  CHECK_THROWS_AS(table.by_flat(16), std::out_of_range);
  CHECK_THROWS_AS(table.by_indices(5, 0), fmflink::ModeNotSupported);
  CHECK_THROWS_AS(table.by_indices(-1, 2), fmflink::ModeNotSupported);
  CHECK_FALSE(table.parse("HG50").has_value());
  CHECK_FALSE(table.parse("p16").has_value());
  CHECK_FALSE(table.parse("nonsense").has_value());
  CHECK_FALSE(table.parse("").has_value());
}

TEST_CASE("group aggregation and injection matrices are consistent") {
  const fmflink::ModeTable& table = fmflink::default_mode_table();
  const Eigen::MatrixXd agg = table.group_aggregation();
  const Eigen::MatrixXd inj = table.group_injection();
  CHECK(agg.rows() == 5);
  CHECK(agg.cols() == 15);
  CHECK(inj.rows() == 15);
  CHECK(inj.cols() == 5);
  // Aggregating a uniform injection recovers the identity: each group's
  // power is split over its members and then summed back.
  CHECK((agg * inj - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() <
        1e-15);
  // Aggregation rows are 0/1 indicators summing to the group size.
  for (int g = 1; g <= 5; ++g)
    CHECK(agg.row(g - 1).sum() == doctest::Approx(static_cast<double>(g)));
}

TEST_CASE("group_map matches members listing") {
  const fmflink::ModeTable& table = fmflink::default_mode_table();
  const std::vector<int> map = table.group_map();
  REQUIRE(map.size() == 15);
  for (int g = 1; g <= 5; ++g)
    for (int p : table.members(g))
      CHECK(map[static_cast<std::size_t>(p - 1)] == g);
}

TEST_SUITE_END();
