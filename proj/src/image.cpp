#include "connseg/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "connseg/kernels.hpp"

namespace connseg {

Image::Image(int c, int h, int w, float fill)
    : channels(c), height(h), width(w), data((size_t)c * h * w, fill) {
  if (c < 1 || h < 1 || w < 1) throw std::invalid_argument("image dimensions must be >= 1");
}

Image hflip(const Image& img) {
  Image out(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c) {
    for (int i = 0; i < img.height; ++i) {
      for (int j = 0; j < img.width; ++j) {
        out.set(c, i, j, img.at(c, i, img.width - 1 - j));
      }
    }
  }
  return out;
}

Image bilinear_resize(const Image& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize target must be >= 1");
  Image out(img.channels, out_h, out_w);
  kernels::bilinear_forward(img.data.data(), 1, img.channels, img.height, img.width,
                            out.data.data(), out_h, out_w);
  return out;
}

BinaryMask nearest_resize(const BinaryMask& m, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize target must be >= 1");
  BinaryMask out(out_h, out_w);
  for (int i = 0; i < out_h; ++i) {
    int si = std::clamp((int)std::floor((i + 0.5) * m.height / out_h), 0, m.height - 1);
    for (int j = 0; j < out_w; ++j) {
      int sj = std::clamp((int)std::floor((j + 0.5) * m.width / out_w), 0, m.width - 1);
      out.set(i, j, m.at(si, sj));
    }
  }
  return out;
}

Image pad_bottom_right(const Image& img, int out_h, int out_w) {
  if (out_h < img.height || out_w < img.width) {
    throw std::invalid_argument("pad target smaller than source");
  }
  Image out(img.channels, out_h, out_w, 0.0f);
  for (int c = 0; c < img.channels; ++c) {
    for (int i = 0; i < img.height; ++i) {
      for (int j = 0; j < img.width; ++j) out.set(c, i, j, img.at(c, i, j));
    }
  }
  return out;
}

BinaryMask pad_bottom_right(const BinaryMask& m, int out_h, int out_w) {
  if (out_h < m.height || out_w < m.width) {
    throw std::invalid_argument("pad target smaller than source");
  }
  BinaryMask out(out_h, out_w);
  for (int i = 0; i < m.height; ++i) {
    for (int j = 0; j < m.width; ++j) out.set(i, j, m.at(i, j));
  }
  return out;
}

Image crop(const Image& img, int top, int left, int out_h, int out_w) {
  if (top < 0 || left < 0 || top + out_h > img.height || left + out_w > img.width) {
    throw std::invalid_argument("crop window exceeds image bounds");
  }
  Image out(img.channels, out_h, out_w);
  for (int c = 0; c < img.channels; ++c) {
    for (int i = 0; i < out_h; ++i) {
      for (int j = 0; j < out_w; ++j) out.set(c, i, j, img.at(c, top + i, left + j));
    }
  }
  return out;
}

BinaryMask crop(const BinaryMask& m, int top, int left, int out_h, int out_w) {
  if (top < 0 || left < 0 || top + out_h > m.height || left + out_w > m.width) {
    throw std::invalid_argument("crop window exceeds mask bounds");
  }
  BinaryMask out(out_h, out_w);
  for (int i = 0; i < out_h; ++i) {
    for (int j = 0; j < out_w; ++j) out.set(i, j, m.at(top + i, left + j));
  }
  return out;
}

Image image_from_mask(const BinaryMask& m, int channels) {
  Image out(channels, m.height, m.width);
  for (int c = 0; c < channels; ++c) {
    for (int i = 0; i < m.height; ++i) {
      for (int j = 0; j < m.width; ++j) out.set(c, i, j, m.at(i, j) ? 1.0f : 0.0f);
    }
  }
  return out;
}

BinaryMask mask_from_luma(const Image& img) {
  BinaryMask out(img.height, img.width);
  const double cutoff = 127.0 / 255.0;
  for (int i = 0; i < img.height; ++i) {
    for (int j = 0; j < img.width; ++j) {
      double luma;
      if (img.channels >= 3) {
        luma = 0.299 * img.at(0, i, j) + 0.587 * img.at(1, i, j) + 0.114 * img.at(2, i, j);
      } else {
        luma = img.at(0, i, j);
      }
      out.set(i, j, luma > cutoff ? 1 : 0);
    }
  }
  return out;
}

}  // namespace connseg
