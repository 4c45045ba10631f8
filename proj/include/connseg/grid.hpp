#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace connseg {

enum class PatternKind { N4, N8, N12 };

struct Offset {
  int dr = 0;
  int dc = 0;
  friend bool operator==(const Offset&, const Offset&) = default;
};

/// Canonical neighbor geometry for one connectivity pattern.
///
/// Channel order is fixed once here and read by every other module: offsets
/// are sorted row-major by (dr, dc). For the square pattern that places the
/// top-left neighbor on channel 0 and makes channel 3 the left neighbor and
/// channel 4 the right neighbor.
class ConnectivityPattern {
 public:
  static const ConnectivityPattern& get(PatternKind kind);
  static std::optional<PatternKind> parse(std::string_view name);  // "n4", "n8", "n12"

  PatternKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  int channel_count() const { return static_cast<int>(offsets_.size()); }
  const std::vector<Offset>& offsets() const { return offsets_; }
  Offset offset(int c) const { return offsets_[static_cast<size_t>(c)]; }

  // Channel whose offset is the negation of channel c's. Involution.
  int opposite_channel(int c) const { return opposite_[static_cast<size_t>(c)]; }
  const std::vector<int>& opposite_channels() const { return opposite_; }

  // Permutation pi with offset(pi(c)) = (dr, -dc). Involution.
  const std::vector<int>& hflip_permutation() const { return hflip_; }

 private:
  explicit ConnectivityPattern(PatternKind kind);

  PatternKind kind_;
  std::string name_;
  std::vector<Offset> offsets_;
  std::vector<int> opposite_;
  std::vector<int> hflip_;
};

/// Canonical ordered offsets for a pattern (same order as ConnectivityPattern).
std::vector<Offset> pattern_offsets(PatternKind kind);

/// Row-major boolean grid, 1 = salient. (0,0) is the top-left pixel, so the
/// top-left neighbor sits at offset (-1,-1).
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int h, int w, uint8_t fill = 0);

  uint8_t at(int i, int j) const { return data[static_cast<size_t>(i) * width + j]; }
  void set(int i, int j, uint8_t v) { data[static_cast<size_t>(i) * width + j] = v ? 1 : 0; }
  bool in_bounds(int i, int j) const { return i >= 0 && i < height && j >= 0 && j < width; }
  int64_t salient_count() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

BinaryMask hflip(const BinaryMask& m);

/// Clears salient pixels that have no salient neighbor under the pattern,
/// repeating until stable (clearing a pixel can isolate another).
BinaryMask erase_isolated_pixels(const BinaryMask& m, PatternKind kind);

}  // namespace connseg
