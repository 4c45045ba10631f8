#pragma once

#include <cstdint>
#include <vector>

#include "connseg/grid.hpp"

namespace connseg {

/// H x W x C grid of per-neighbor connectivity values in [0,1]; exactly {0,1}
/// for ground truth. Layout is row-major, channel-minor:
/// index = (i*W + j)*C + c.
struct ConnectivityCube {
  int height = 0;
  int width = 0;
  int channels = 0;
  PatternKind pattern = PatternKind::N8;
  std::vector<float> values;

  ConnectivityCube() = default;
  ConnectivityCube(int h, int w, PatternKind kind);

  float at(int i, int j, int c) const {
    return values[((size_t)i * width + j) * channels + c];
  }
  void set(int i, int j, int c, float v) {
    values[((size_t)i * width + j) * channels + c] = v;
  }
  bool is_binary() const;

  friend bool operator==(const ConnectivityCube&, const ConnectivityCube&) = default;
};

/// (i,j,c) true iff pixel (i,j) and its neighbor at offset(c) mutually
/// predict the connection. Symmetric by construction; false where the
/// neighbor is out of bounds.
struct AgreementMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<uint8_t> values;

  uint8_t at(int i, int j, int c) const {
    return values[((size_t)i * width + j) * channels + c];
  }
};

/// Ground-truth encoding: cube[i,j,c] = 1 iff mask[i,j] and the in-bounds
/// neighbor at offset(c) are both salient. Out-of-bounds neighbors count as
/// background.
ConnectivityCube encode(const BinaryMask& mask, PatternKind kind);

/// Strict binarization: entry -> 1 iff value > t. Rejects t outside (0,1).
ConnectivityCube threshold_cube(const ConnectivityCube& probabilities, double t);

/// Mutual-agreement map of an already-binary cube.
AgreementMap agreement(const ConnectivityCube& binary_cube);

/// Threshold at t, apply the agreement rule, then mark a pixel salient iff it
/// keeps at least k agreed connections.
BinaryMask decode(const ConnectivityCube& probabilities, double t, int k = 1);

/// Element-wise arithmetic mean; fixed left-to-right accumulation order.
ConnectivityCube fuse_cubes(const std::vector<ConnectivityCube>& cubes);

}  // namespace connseg
