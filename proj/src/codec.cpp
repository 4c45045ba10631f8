#include "connseg/codec.hpp"

#include <stdexcept>

#include "connseg/errors.hpp"
#include "connseg/kernels.hpp"

namespace connseg {

ConnectivityCube::ConnectivityCube(int h, int w, PatternKind kind)
    : height(h),
      width(w),
      channels(ConnectivityPattern::get(kind).channel_count()),
      pattern(kind),
      values((size_t)h * w * ConnectivityPattern::get(kind).channel_count(), 0.0f) {
  if (h < 1 || w < 1) throw std::invalid_argument("cube dimensions must be >= 1");
}

bool ConnectivityCube::is_binary() const {
  for (float v : values) {
    if (v != 0.0f && v != 1.0f) return false;
  }
  return true;
}

ConnectivityCube encode(const BinaryMask& mask, PatternKind kind) {
  const auto& pat = ConnectivityPattern::get(kind);
  ConnectivityCube cube(mask.height, mask.width, kind);
  kernels::encode_cube(mask.data.data(), mask.height, mask.width, pat.offsets().data(),
                       pat.channel_count(), cube.values.data());
  return cube;
}

ConnectivityCube threshold_cube(const ConnectivityCube& probabilities, double t) {
  if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("threshold must lie in (0,1)");
  ConnectivityCube out = probabilities;
  kernels::threshold(probabilities.values.data(), (int64_t)probabilities.values.size(), t,
                     out.values.data());
  return out;
}

AgreementMap agreement(const ConnectivityCube& binary_cube) {
  if (!binary_cube.is_binary()) throw std::invalid_argument("agreement expects a binary cube");
  const auto& pat = ConnectivityPattern::get(binary_cube.pattern);
  AgreementMap map;
  map.height = binary_cube.height;
  map.width = binary_cube.width;
  map.channels = binary_cube.channels;
  map.values.resize(binary_cube.values.size());
  kernels::agreement_map(binary_cube.values.data(), map.height, map.width,
                         pat.offsets().data(), pat.opposite_channels().data(), map.channels,
                         map.values.data());
  return map;
}

BinaryMask decode(const ConnectivityCube& probabilities, double t, int k) {
  if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("threshold must lie in (0,1)");
  if (k < 1 || k > probabilities.channels) {
    throw std::invalid_argument("connection count k must lie in [1, C]");
  }
  const auto& pat = ConnectivityPattern::get(probabilities.pattern);
  BinaryMask mask(probabilities.height, probabilities.width);
  kernels::decode_mask(probabilities.values.data(), mask.height, mask.width,
                       pat.offsets().data(), pat.opposite_channels().data(),
                       probabilities.channels, t, k, mask.data.data());
  return mask;
}

ConnectivityCube fuse_cubes(const std::vector<ConnectivityCube>& cubes) {
  if (cubes.empty()) throw std::invalid_argument("fuse_cubes needs at least one cube");
  const ConnectivityCube& first = cubes.front();
  std::vector<const float*> ptrs;
  ptrs.reserve(cubes.size());
  for (const auto& c : cubes) {
    if (c.height != first.height || c.width != first.width || c.channels != first.channels ||
        c.pattern != first.pattern) {
      throw std::invalid_argument("fuse_cubes: shape or pattern mismatch");
    }
    ptrs.push_back(c.values.data());
  }
  ConnectivityCube out(first.height, first.width, first.pattern);
  kernels::fuse_mean(ptrs.data(), (int)ptrs.size(), (int64_t)out.values.size(),
                     out.values.data());
  return out;
}

}  // namespace connseg
