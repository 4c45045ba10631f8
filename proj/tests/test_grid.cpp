#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "connseg/grid.hpp"

using namespace connseg;

namespace {
const PatternKind kAllPatterns[] = {PatternKind::N4, PatternKind::N8, PatternKind::N12};

std::set<std::pair<int, int>> offset_set(PatternKind kind) {
  std::set<std::pair<int, int>> s;
  for (const Offset& o : pattern_offsets(kind)) s.insert({o.dr, o.dc});
  return s;
}
}  // namespace

TEST_CASE("n4 offsets are the canonical city-block ring") {
  const auto offs = pattern_offsets(PatternKind::N4);
  REQUIRE(offs.size() == 4);
  CHECK(offs[0] == Offset{-1, 0});
  CHECK(offs[1] == Offset{0, -1});
  CHECK(offs[2] == Offset{0, 1});
  CHECK(offs[3] == Offset{1, 0});
}

TEST_CASE("n8 channel order starts at the top-left neighbor") {
  const auto offs = pattern_offsets(PatternKind::N8);
  REQUIRE(offs.size() == 8);
  const Offset expected[8] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                              {0, 1},   {1, -1}, {1, 0},  {1, 1}};
  for (int c = 0; c < 8; ++c) CHECK(offs[(size_t)c] == expected[c]);
  // channel 3 = left neighbor, channel 4 = right neighbor
  CHECK(offs[3] == Offset{0, -1});
  CHECK(offs[4] == Offset{0, 1});
}

TEST_CASE("n12 is every offset with city-block distance <= 2") {
  const auto offs = pattern_offsets(PatternKind::N12);
  REQUIRE(offs.size() == 12);
  std::set<std::pair<int, int>> expected;
  for (int dr = -2; dr <= 2; ++dr) {
    for (int dc = -2; dc <= 2; ++dc) {
      if ((dr || dc) && std::abs(dr) + std::abs(dc) <= 2) expected.insert({dr, dc});
    }
  }
  CHECK(expected.size() == 12);
  CHECK(offset_set(PatternKind::N12) == expected);
  // equivalently: the four n4 offsets plus (+-1,+-1), (+-2,0), (0,+-2)
  for (const auto& o : offset_set(PatternKind::N4)) CHECK(expected.count(o) == 1);
}

TEST_CASE("n4 offsets are contained in n8 and n12") {
  const auto n4 = offset_set(PatternKind::N4);
  const auto n8 = offset_set(PatternKind::N8);
  const auto n12 = offset_set(PatternKind::N12);
  for (const auto& o : n4) {
    CHECK(n8.count(o) == 1);
    CHECK(n12.count(o) == 1);
  }
}

TEST_CASE("opposite_channel negates the offset and is an involution") {
  for (PatternKind kind : kAllPatterns) {
    const auto& pat = ConnectivityPattern::get(kind);
    for (int c = 0; c < pat.channel_count(); ++c) {
      const int o = pat.opposite_channel(c);
      CHECK(pat.offset(o).dr == -pat.offset(c).dr);
      CHECK(pat.offset(o).dc == -pat.offset(c).dc);
      CHECK(pat.opposite_channel(o) == c);
    }
  }
}

TEST_CASE("n8 opposite pairs match the decode convention") {
  const auto& pat = ConnectivityPattern::get(PatternKind::N8);
  CHECK(pat.opposite_channel(4) == 3);  // right <-> left
  CHECK(pat.opposite_channel(0) == 7);  // top-left <-> bottom-right
}

TEST_CASE("hflip permutation mirrors the column component and is an involution") {
  for (PatternKind kind : kAllPatterns) {
    const auto& pat = ConnectivityPattern::get(kind);
    const auto& perm = pat.hflip_permutation();
    for (int c = 0; c < pat.channel_count(); ++c) {
      CHECK(pat.offset(perm[(size_t)c]).dr == pat.offset(c).dr);
      CHECK(pat.offset(perm[(size_t)c]).dc == -pat.offset(c).dc);
      CHECK(perm[(size_t)perm[(size_t)c]] == c);
    }
  }
}

TEST_CASE("n8 hflip permutation swaps the expected channels") {
  const auto& perm = ConnectivityPattern::get(PatternKind::N8).hflip_permutation();
  CHECK(perm[0] == 2);
  CHECK(perm[2] == 0);
  CHECK(perm[3] == 4);
  CHECK(perm[4] == 3);
  CHECK(perm[5] == 7);
  CHECK(perm[7] == 5);
  CHECK(perm[1] == 1);
  CHECK(perm[6] == 6);
}

TEST_CASE("pattern names parse case-insensitively") {
  CHECK(ConnectivityPattern::parse("n4") == PatternKind::N4);
  CHECK(ConnectivityPattern::parse("N8") == PatternKind::N8);
  CHECK(ConnectivityPattern::parse("n12") == PatternKind::N12);
  CHECK(!ConnectivityPattern::parse("n5").has_value());
  CHECK(!ConnectivityPattern::parse("").has_value());
}

TEST_CASE("mask helpers") {
  BinaryMask m(3, 4);
  m.set(0, 0, 1);
  m.set(2, 3, 1);
  CHECK(m.salient_count() == 2);

  const BinaryMask f = hflip(m);
  CHECK(f.at(0, 3) == 1);
  CHECK(f.at(2, 0) == 1);
  CHECK(hflip(f) == m);

  CHECK_THROWS(BinaryMask(0, 4));
}

TEST_CASE("erase_isolated_pixels respects the neighborhood") {
  BinaryMask m(4, 4);
  m.set(1, 1, 1);  // lone pixel
  CHECK(erase_isolated_pixels(m, PatternKind::N4).salient_count() == 0);

  BinaryMask pair(4, 4);
  pair.set(1, 1, 1);
  pair.set(1, 2, 1);
  CHECK(erase_isolated_pixels(pair, PatternKind::N4) == pair);

  // A diagonal pair is isolated under n4 but connected under n8.
  BinaryMask diag(4, 4);
  diag.set(1, 1, 1);
  diag.set(2, 2, 1);
  CHECK(erase_isolated_pixels(diag, PatternKind::N4).salient_count() == 0);
  CHECK(erase_isolated_pixels(diag, PatternKind::N8) == diag);
}

TEST_CASE("erasure cascades to pixels isolated by earlier removals") {
  // Under n4 the diagonal neighbor does not count: (2,2) is isolated, and
  // once it is gone (1,1)'s only n4 neighbor chain collapses too.
  BinaryMask m(4, 4);
  m.set(1, 1, 1);
  m.set(2, 2, 1);
  m.set(3, 2, 1);
  const BinaryMask cleaned = erase_isolated_pixels(m, PatternKind::N4);
  CHECK(cleaned.at(2, 2) == 1);
  CHECK(cleaned.at(3, 2) == 1);
  CHECK(cleaned.at(1, 1) == 0);

  BinaryMask keep_pair(1, 5);
  keep_pair.set(0, 0, 1);
  keep_pair.set(0, 1, 1);
  keep_pair.set(0, 4, 1);
  const BinaryMask kept = erase_isolated_pixels(keep_pair, PatternKind::N4);
  CHECK(kept.at(0, 0) == 1);
  CHECK(kept.at(0, 1) == 1);
  CHECK(kept.at(0, 4) == 0);
}
