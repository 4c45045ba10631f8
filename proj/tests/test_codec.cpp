#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <vector>

#include "connseg/codec.hpp"
#include "connseg/tta.hpp"

using namespace connseg;

// ---- independent brute-force oracle (no shared code with the codec) -------

namespace {

struct OraclePattern {
  std::vector<std::pair<int, int>> offs;
};

OraclePattern oracle_pattern(PatternKind kind) {
  switch (kind) {
    case PatternKind::N4:
      return {{{-1, 0}, {0, -1}, {0, 1}, {1, 0}}};
    case PatternKind::N8:
      return {{{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}}};
    default:
      return {{{-2, 0},
               {-1, -1},
               {-1, 0},
               {-1, 1},
               {0, -2},
               {0, -1},
               {0, 1},
               {0, 2},
               {1, -1},
               {1, 0},
               {1, 1},
               {2, 0}}};
  }
}

std::vector<float> oracle_encode(const BinaryMask& m, PatternKind kind) {
  const auto pat = oracle_pattern(kind);
  const int c = (int)pat.offs.size();
  std::vector<float> cube((size_t)m.height * m.width * c, 0.0f);
  for (int i = 0; i < m.height; ++i) {
    for (int j = 0; j < m.width; ++j) {
      for (int ch = 0; ch < c; ++ch) {
        const int ni = i + pat.offs[(size_t)ch].first;
        const int nj = j + pat.offs[(size_t)ch].second;
        bool connected = m.at(i, j) != 0;
        connected = connected && ni >= 0 && ni < m.height && nj >= 0 && nj < m.width;
        if (connected) connected = m.at(ni, nj) != 0;
        cube[((size_t)i * m.width + j) * c + ch] = connected ? 1.0f : 0.0f;
      }
    }
  }
  return cube;
}

BinaryMask oracle_decode(const std::vector<float>& cube, int h, int w, PatternKind kind,
                         double t, int k) {
  const auto pat = oracle_pattern(kind);
  const int c = (int)pat.offs.size();
  BinaryMask out(h, w);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      int count = 0;
      for (int ch = 0; ch < c; ++ch) {
        if (!(cube[((size_t)i * w + j) * c + ch] > t)) continue;
        const int ni = i + pat.offs[(size_t)ch].first;
        const int nj = j + pat.offs[(size_t)ch].second;
        if (ni < 0 || ni >= h || nj < 0 || nj >= w) continue;
        // find the opposite channel by scanning for the negated offset
        int opp = -1;
        for (int q = 0; q < c; ++q) {
          if (pat.offs[(size_t)q].first == -pat.offs[(size_t)ch].first &&
              pat.offs[(size_t)q].second == -pat.offs[(size_t)ch].second) {
            opp = q;
            break;
          }
        }
        if (cube[((size_t)ni * w + nj) * c + opp] > t) ++count;
      }
      out.set(i, j, count >= k ? 1 : 0);
    }
  }
  return out;
}

BinaryMask random_mask(std::mt19937_64& rng, int h, int w, double density) {
  BinaryMask m(h, w);
  for (auto& v : m.data) v = ((rng() >> 11) * 0x1.0p-53) < density ? 1 : 0;
  return m;
}

ConnectivityCube random_soft_cube(std::mt19937_64& rng, int h, int w, PatternKind kind) {
  ConnectivityCube cube(h, w, kind);
  for (auto& v : cube.values) v = (float)((rng() >> 11) * 0x1.0p-53);
  return cube;
}

const PatternKind kAllPatterns[] = {PatternKind::N4, PatternKind::N8, PatternKind::N12};

}  // namespace

// ---------------------------------------------------------------- encode ----

TEST_CASE("encode: all-background mask gives an all-zero cube") {
  const ConnectivityCube cube = encode(BinaryMask(4, 4), PatternKind::N8);
  for (float v : cube.values) CHECK(v == 0.0f);
}

TEST_CASE("encode: 1x2 salient pair connects only through the left/right channels") {
  BinaryMask m(1, 2);
  m.set(0, 0, 1);
  m.set(0, 1, 1);
  const ConnectivityCube cube = encode(m, PatternKind::N8);
  for (int j = 0; j < 2; ++j) {
    for (int c = 0; c < 8; ++c) {
      const float expect = (j == 0 && c == 4) || (j == 1 && c == 3) ? 1.0f : 0.0f;
      CHECK(cube.at(0, j, c) == expect);
    }
  }
}

TEST_CASE("encode: isolated center pixel has no connections under n4") {
  BinaryMask m(3, 3);
  m.set(1, 1, 1);
  const ConnectivityCube cube = encode(m, PatternKind::N4);
  for (float v : cube.values) CHECK(v == 0.0f);
}

TEST_CASE("encode matches the brute-force oracle on random masks") {
  std::mt19937_64 rng(99);
  for (PatternKind kind : kAllPatterns) {
    for (int rep = 0; rep < 50; ++rep) {
      const BinaryMask m = random_mask(rng, 1 + (int)(rng() % 20), 1 + (int)(rng() % 20), 0.4);
      CHECK(encode(m, kind).values == oracle_encode(m, kind));
    }
  }
}

TEST_CASE("encode output is symmetric under the opposite-channel map") {
  std::mt19937_64 rng(7);
  for (PatternKind kind : kAllPatterns) {
    const auto& pat = ConnectivityPattern::get(kind);
    for (int rep = 0; rep < 20; ++rep) {
      const int h = 2 + (int)(rng() % 63), w = 2 + (int)(rng() % 63);
      const BinaryMask m = random_mask(rng, h, w, 0.35);
      const ConnectivityCube cube = encode(m, kind);
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          for (int c = 0; c < cube.channels; ++c) {
            const int ni = i + pat.offset(c).dr, nj = j + pat.offset(c).dc;
            if (ni < 0 || ni >= h || nj < 0 || nj >= w) continue;
            REQUIRE(cube.at(i, j, c) == cube.at(ni, nj, pat.opposite_channel(c)));
          }
        }
      }
    }
  }
}

TEST_CASE("encode border handling: out-of-bounds neighbors stay background") {
  for (PatternKind kind : kAllPatterns) {
    const auto& pat = ConnectivityPattern::get(kind);
    const BinaryMask all(5, 6, 1);
    const ConnectivityCube cube = encode(all, kind);
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 6; ++j) {
        for (int c = 0; c < cube.channels; ++c) {
          const int ni = i + pat.offset(c).dr, nj = j + pat.offset(c).dc;
          const bool inside = ni >= 0 && ni < 5 && nj >= 0 && nj < 6;
          CHECK(cube.at(i, j, c) == (inside ? 1.0f : 0.0f));
        }
      }
    }
  }
}

// ------------------------------------------------------------- threshold ----

TEST_CASE("threshold is strict") {
  ConnectivityCube cube(1, 1, PatternKind::N4);
  cube.set(0, 0, 0, 0.5f);
  cube.set(0, 0, 1, 0.51f);
  const ConnectivityCube bin = threshold_cube(cube, 0.5);
  CHECK(bin.at(0, 0, 0) == 0.0f);
  CHECK(bin.at(0, 0, 1) == 1.0f);

  const ConnectivityCube zeros(3, 3, PatternKind::N8);
  CHECK(threshold_cube(zeros, 0.9).values == zeros.values);

  CHECK_THROWS_AS(threshold_cube(cube, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(threshold_cube(cube, 1.0), std::invalid_argument);
}

// ------------------------------------------------------------- agreement ----

TEST_CASE("agreement requires both directions") {
  ConnectivityCube cube(1, 2, PatternKind::N8);
  cube.set(0, 0, 4, 1.0f);  // right-neighbor channel of (0,0)
  cube.set(0, 1, 3, 1.0f);  // left-neighbor channel of (0,1)
  AgreementMap both = agreement(cube);
  CHECK(both.at(0, 0, 4) == 1);
  CHECK(both.at(0, 1, 3) == 1);

  cube.set(0, 1, 3, 0.0f);
  AgreementMap one_sided = agreement(cube);
  CHECK(one_sided.at(0, 0, 4) == 0);
  CHECK(one_sided.at(0, 1, 3) == 0);
}

TEST_CASE("agreement of an encoded cube is the cube itself") {
  std::mt19937_64 rng(15);
  for (PatternKind kind : kAllPatterns) {
    for (int rep = 0; rep < 20; ++rep) {
      const BinaryMask m = random_mask(rng, 8 + (int)(rng() % 9), 8 + (int)(rng() % 9), 0.4);
      const ConnectivityCube cube = encode(m, kind);
      const AgreementMap map = agreement(cube);
      for (size_t e = 0; e < cube.values.size(); ++e) {
        REQUIRE((map.values[e] != 0) == (cube.values[e] != 0.0f));
      }
    }
  }
}

TEST_CASE("agreement rejects non-binary cubes") {
  ConnectivityCube cube(1, 1, PatternKind::N4);
  cube.set(0, 0, 0, 0.3f);
  CHECK_THROWS_AS(agreement(cube), std::invalid_argument);
}

// ---------------------------------------------------------------- decode ----

TEST_CASE("decode: all-zero cube yields all background") {
  const ConnectivityCube cube(6, 7, PatternKind::N8);
  CHECK(decode(cube, 0.5, 1).salient_count() == 0);
}

TEST_CASE("decode: an encoded isolated pixel cannot be recovered") {
  BinaryMask m(5, 5);
  m.set(2, 2, 1);
  CHECK(decode(encode(m, PatternKind::N8), 0.5, 1).salient_count() == 0);
}

TEST_CASE("decode rejects bad parameters") {
  const ConnectivityCube cube(2, 2, PatternKind::N4);
  CHECK_THROWS_AS(decode(cube, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(decode(cube, 0.5, 0), std::invalid_argument);
  CHECK_THROWS_AS(decode(cube, 0.5, 5), std::invalid_argument);
}

TEST_CASE("roundtrip: decode(encode(m)) = m for masks without isolated pixels") {
  std::mt19937_64 rng(1234);
  for (PatternKind kind : kAllPatterns) {
    for (int rep = 0; rep < 120; ++rep) {
      const int h = 8 + (int)(rng() % 57), w = 8 + (int)(rng() % 57);
      const BinaryMask m =
          erase_isolated_pixels(random_mask(rng, h, w, 0.2 + 0.5 * ((rng() >> 11) * 0x1.0p-53)),
                                kind);
      REQUIRE(decode(encode(m, kind), 0.5, 1) == m);
    }
  }
}

TEST_CASE("decode is monotone in the threshold") {
  std::mt19937_64 rng(77);
  for (int rep = 0; rep < 15; ++rep) {
    const ConnectivityCube cube = random_soft_cube(rng, 12, 12, PatternKind::N8);
    const BinaryMask lo = decode(cube, 0.3, 1);
    const BinaryMask hi = decode(cube, 0.7, 1);
    for (size_t e = 0; e < lo.data.size(); ++e) {
      if (hi.data[e]) REQUIRE(lo.data[e] == 1);
    }
  }
}

TEST_CASE("decode matches the oracle exhaustively on 4x4 n4 masks") {
  for (uint32_t bits = 0; bits < (1u << 16); ++bits) {
    BinaryMask m(4, 4);
    for (int e = 0; e < 16; ++e) m.data[(size_t)e] = (bits >> e) & 1u;
    const ConnectivityCube cube = encode(m, PatternKind::N4);
    REQUIRE(cube.values == oracle_encode(m, PatternKind::N4));
    REQUIRE(decode(cube, 0.5, 1) ==
            oracle_decode(cube.values, 4, 4, PatternKind::N4, 0.5, 1));
  }
}

TEST_CASE("decode matches the oracle on random soft cubes for n8/n12") {
  std::mt19937_64 rng(31);
  for (PatternKind kind : {PatternKind::N8, PatternKind::N12}) {
    const int channels = ConnectivityPattern::get(kind).channel_count();
    for (int rep = 0; rep < 250; ++rep) {
      const ConnectivityCube cube = random_soft_cube(rng, 16, 16, kind);
      const double t = 0.2 + 0.6 * ((rng() >> 11) * 0x1.0p-53);
      const int k = 1 + (int)(rng() % (uint64_t)channels);
      REQUIRE(decode(cube, t, k) == oracle_decode(cube.values, 16, 16, kind, t, k));
    }
  }
}

// ------------------------------------------------------------------ fuse ----

TEST_CASE("fuse_cubes basics") {
  std::mt19937_64 rng(4);
  const ConnectivityCube cube = random_soft_cube(rng, 5, 5, PatternKind::N8);
  CHECK(fuse_cubes({cube, cube, cube}).values == cube.values);

  ConnectivityCube zeros(3, 3, PatternKind::N4);
  ConnectivityCube ones(3, 3, PatternKind::N4);
  for (auto& v : ones.values) v = 1.0f;
  for (float v : fuse_cubes({zeros, ones}).values) CHECK(v == 0.5f);

  CHECK_THROWS_AS(fuse_cubes({}), std::invalid_argument);
  CHECK_THROWS_AS(fuse_cubes({zeros, ConnectivityCube(3, 3, PatternKind::N8)}),
                  std::invalid_argument);
  CHECK_THROWS_AS(fuse_cubes({zeros, ConnectivityCube(4, 3, PatternKind::N4)}),
                  std::invalid_argument);
}

TEST_CASE("fusing an encoding with its flip-unflip image is the identity") {
  std::mt19937_64 rng(5);
  // horizontally symmetric mask
  BinaryMask sym(8, 8);
  for (int i = 2; i < 6; ++i) {
    for (int j = 2; j < 6; ++j) sym.set(i, j, 1);
  }
  for (PatternKind kind : kAllPatterns) {
    const ConnectivityCube direct = encode(sym, kind);
    const ConnectivityCube alt = unflip_cube(encode(hflip(sym), kind));
    CHECK(fuse_cubes({direct, alt}).values == direct.values);

    // the identity unflip(encode(hflip(m))) == encode(m) holds for any mask
    const BinaryMask m = random_mask(rng, 9, 13, 0.4);
    CHECK(unflip_cube(encode(hflip(m), kind)).values == encode(m, kind).values);
  }
}
