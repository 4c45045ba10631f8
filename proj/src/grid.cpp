#include "connseg/grid.hpp"

#include <algorithm>
#include <cstdlib>
#include <stdexcept>

namespace connseg {

namespace {

std::vector<Offset> generate_offsets(PatternKind kind) {
  std::vector<Offset> offs;
  for (int dr = -2; dr <= 2; ++dr) {
    for (int dc = -2; dc <= 2; ++dc) {
      if (dr == 0 && dc == 0) continue;
      const int city = std::abs(dr) + std::abs(dc);
      const int chess = std::max(std::abs(dr), std::abs(dc));
      bool keep = false;
      switch (kind) {
        case PatternKind::N4: keep = city == 1; break;
        case PatternKind::N8: keep = chess == 1; break;
        case PatternKind::N12: keep = city <= 2; break;
      }
      if (keep) offs.push_back({dr, dc});
    }
  }
  std::sort(offs.begin(), offs.end(), [](Offset a, Offset b) {
    return a.dr != b.dr ? a.dr < b.dr : a.dc < b.dc;
  });
  return offs;
}

int find_offset(const std::vector<Offset>& offs, Offset o) {
  for (size_t i = 0; i < offs.size(); ++i) {
    if (offs[i] == o) return static_cast<int>(i);
  }
  throw std::logic_error("connectivity pattern is not closed under the requested map");
}

}  // namespace

ConnectivityPattern::ConnectivityPattern(PatternKind kind) : kind_(kind) {
  switch (kind) {
    case PatternKind::N4: name_ = "n4"; break;
    case PatternKind::N8: name_ = "n8"; break;
    case PatternKind::N12: name_ = "n12"; break;
  }
  offsets_ = generate_offsets(kind);
  opposite_.resize(offsets_.size());
  hflip_.resize(offsets_.size());
  for (size_t c = 0; c < offsets_.size(); ++c) {
    opposite_[c] = find_offset(offsets_, {-offsets_[c].dr, -offsets_[c].dc});
    hflip_[c] = find_offset(offsets_, {offsets_[c].dr, -offsets_[c].dc});
  }
}

const ConnectivityPattern& ConnectivityPattern::get(PatternKind kind) {
  static const ConnectivityPattern n4(PatternKind::N4);
  static const ConnectivityPattern n8(PatternKind::N8);
  static const ConnectivityPattern n12(PatternKind::N12);
  switch (kind) {
    case PatternKind::N4: return n4;
    case PatternKind::N8: return n8;
    default: return n12;
  }
}

std::optional<PatternKind> ConnectivityPattern::parse(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "n4") return PatternKind::N4;
  if (s == "n8") return PatternKind::N8;
  if (s == "n12") return PatternKind::N12;
  return std::nullopt;
}

std::vector<Offset> pattern_offsets(PatternKind kind) {
  return ConnectivityPattern::get(kind).offsets();
}

BinaryMask::BinaryMask(int h, int w, uint8_t fill)
    : height(h), width(w), data(static_cast<size_t>(h) * w, fill ? 1 : 0) {
  if (h < 1 || w < 1) throw std::invalid_argument("mask dimensions must be >= 1");
}

int64_t BinaryMask::salient_count() const {
  int64_t n = 0;
  for (uint8_t v : data) n += v;
  return n;
}

BinaryMask hflip(const BinaryMask& m) {
  BinaryMask out(m.height, m.width);
  for (int i = 0; i < m.height; ++i) {
    for (int j = 0; j < m.width; ++j) {
      out.set(i, j, m.at(i, m.width - 1 - j));
    }
  }
  return out;
}

BinaryMask erase_isolated_pixels(const BinaryMask& m, PatternKind kind) {
  const auto& pat = ConnectivityPattern::get(kind);
  BinaryMask out = m;
  bool changed = true;
  while (changed) {
    changed = false;
    BinaryMask next = out;
    for (int i = 0; i < out.height; ++i) {
      for (int j = 0; j < out.width; ++j) {
        if (!out.at(i, j)) continue;
        bool has_neighbor = false;
        for (const Offset& o : pat.offsets()) {
          const int ni = i + o.dr, nj = j + o.dc;
          if (out.in_bounds(ni, nj) && out.at(ni, nj)) {
            has_neighbor = true;
            break;
          }
        }
        if (!has_neighbor) {
          next.set(i, j, 0);
          changed = true;
        }
      }
    }
    out = std::move(next);
  }
  return out;
}

}  // namespace connseg
