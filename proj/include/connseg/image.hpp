#pragma once

#include <cstdint>
#include <vector>

#include "connseg/grid.hpp"

namespace connseg {

/// Planar float image, values in [0,1], layout [channels][height][width].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f);

  float at(int c, int i, int j) const {
    return data[((size_t)c * height + i) * width + j];
  }
  void set(int c, int i, int j, float v) {
    data[((size_t)c * height + i) * width + j] = v;
  }
};

Image hflip(const Image& img);
Image bilinear_resize(const Image& img, int out_h, int out_w);
/// Nearest-neighbor resize; keeps masks binary.
BinaryMask nearest_resize(const BinaryMask& m, int out_h, int out_w);
/// Zero-pad on the bottom/right.
Image pad_bottom_right(const Image& img, int out_h, int out_w);
BinaryMask pad_bottom_right(const BinaryMask& m, int out_h, int out_w);
Image crop(const Image& img, int top, int left, int out_h, int out_w);
BinaryMask crop(const BinaryMask& m, int top, int left, int out_h, int out_w);

/// Renders a mask as a single-channel image (salient = 1).
Image image_from_mask(const BinaryMask& m, int channels = 3);
/// Pixel salient iff luma > 127/255 (BT.601 weights for RGB).
BinaryMask mask_from_luma(const Image& img);

}  // namespace connseg
