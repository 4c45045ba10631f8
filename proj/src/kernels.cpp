#include "connseg/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "connseg/parallel.hpp"

namespace connseg::kernels {

// ---------------------------------------------------------------- codec ----

namespace serial {

void encode_cube(const uint8_t* mask, int h, int w, const Offset* offs, int c, float* cube) {
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const bool center = mask[(size_t)i * w + j] != 0;
      float* cell = cube + ((size_t)i * w + j) * c;
      for (int ch = 0; ch < c; ++ch) {
        const int ni = i + offs[ch].dr;
        const int nj = j + offs[ch].dc;
        const bool nb = ni >= 0 && ni < h && nj >= 0 && nj < w && mask[(size_t)ni * w + nj] != 0;
        cell[ch] = (center && nb) ? 1.0f : 0.0f;
      }
    }
  }
}

void decode_mask(const float* cube, int h, int w, const Offset* offs, const int* opposite,
                 int c, double t, int k, uint8_t* mask) {
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const float* cell = cube + ((size_t)i * w + j) * c;
      int agreed = 0;
      for (int ch = 0; ch < c; ++ch) {
        if (!(cell[ch] > t)) continue;
        const int ni = i + offs[ch].dr;
        const int nj = j + offs[ch].dc;
        if (ni < 0 || ni >= h || nj < 0 || nj >= w) continue;
        const float back = cube[((size_t)ni * w + nj) * c + opposite[ch]];
        if (back > t) ++agreed;
      }
      mask[(size_t)i * w + j] = agreed >= k ? 1 : 0;
    }
  }
}

void fuse_mean(const float* const* cubes, int n, int64_t len, float* out) {
  for (int64_t e = 0; e < len; ++e) {
    double acc = 0.0;
    for (int q = 0; q < n; ++q) acc += cubes[q][e];
    out[e] = static_cast<float>(acc / n);
  }
}

}  // namespace serial

void encode_cube(const uint8_t* mask, int h, int w, const Offset* offs, int c, float* cube) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const bool center = mask[(size_t)i * w + j] != 0;
      float* cell = cube + ((size_t)i * w + j) * c;
      for (int ch = 0; ch < c; ++ch) {
        const int ni = i + offs[ch].dr;
        const int nj = j + offs[ch].dc;
        const bool nb = ni >= 0 && ni < h && nj >= 0 && nj < w && mask[(size_t)ni * w + nj] != 0;
        cell[ch] = (center && nb) ? 1.0f : 0.0f;
      }
    }
  }
}

void decode_mask(const float* cube, int h, int w, const Offset* offs, const int* opposite,
                 int c, double t, int k, uint8_t* mask) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const float* cell = cube + ((size_t)i * w + j) * c;
      int agreed = 0;
      for (int ch = 0; ch < c; ++ch) {
        if (!(cell[ch] > t)) continue;
        const int ni = i + offs[ch].dr;
        const int nj = j + offs[ch].dc;
        if (ni < 0 || ni >= h || nj < 0 || nj >= w) continue;
        const float back = cube[((size_t)ni * w + nj) * c + opposite[ch]];
        if (back > t) ++agreed;
      }
      mask[(size_t)i * w + j] = agreed >= k ? 1 : 0;
    }
  }
}

void agreement_map(const float* binary_cube, int h, int w, const Offset* offs,
                   const int* opposite, int c, uint8_t* agree) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const float* cell = binary_cube + ((size_t)i * w + j) * c;
      uint8_t* out = agree + ((size_t)i * w + j) * c;
      for (int ch = 0; ch < c; ++ch) {
        const int ni = i + offs[ch].dr;
        const int nj = j + offs[ch].dc;
        bool ok = cell[ch] != 0.0f && ni >= 0 && ni < h && nj >= 0 && nj < w;
        if (ok) ok = binary_cube[((size_t)ni * w + nj) * c + opposite[ch]] != 0.0f;
        out[ch] = ok ? 1 : 0;
      }
    }
  }
}

void threshold(const float* in, int64_t len, double t, float* out) {
#pragma omp parallel for schedule(static)
  for (int64_t e = 0; e < len; ++e) out[e] = in[e] > t ? 1.0f : 0.0f;
}

void fuse_mean(const float* const* cubes, int n, int64_t len, float* out) {
#pragma omp parallel for schedule(static)
  for (int64_t e = 0; e < len; ++e) {
    double acc = 0.0;
    for (int q = 0; q < n; ++q) acc += cubes[q][e];
    out[e] = static_cast<float>(acc / n);
  }
}

// ---------------------------------------------------------- convolutions ----

namespace serial {

void conv2d_forward(const double* in, int n, int ci, int h, int w,
                    const double* k, int co, int kh, int kw,
                    int stride, int pad, int dil,
                    double* out, int ho, int wo) {
  for (int b = 0; b < n; ++b) {
    for (int oc = 0; oc < co; ++oc) {
      for (int oh = 0; oh < ho; ++oh) {
        for (int ow = 0; ow < wo; ++ow) {
          double acc = 0.0;
          for (int ic = 0; ic < ci; ++ic) {
            for (int u = 0; u < kh; ++u) {
              const int ih = oh * stride - pad + u * dil;
              if (ih < 0 || ih >= h) continue;
              for (int v = 0; v < kw; ++v) {
                const int iw = ow * stride - pad + v * dil;
                if (iw < 0 || iw >= w) continue;
                acc += in[(((size_t)b * ci + ic) * h + ih) * w + iw] *
                       k[(((size_t)oc * ci + ic) * kh + u) * kw + v];
              }
            }
          }
          out[(((size_t)b * co + oc) * ho + oh) * wo + ow] = acc;
        }
      }
    }
  }
}

void conv2d_grad_input(const double* gout, int n, int co, int ho, int wo,
                       const double* k, int ci, int kh, int kw,
                       int stride, int pad, int dil,
                       double* gin, int h, int w) {
  for (int b = 0; b < n; ++b) {
    for (int ic = 0; ic < ci; ++ic) {
      for (int ih = 0; ih < h; ++ih) {
        for (int iw = 0; iw < w; ++iw) {
          double acc = 0.0;
          for (int oc = 0; oc < co; ++oc) {
            for (int u = 0; u < kh; ++u) {
              const int num_h = ih + pad - u * dil;
              if (num_h < 0 || num_h % stride != 0) continue;
              const int oh = num_h / stride;
              if (oh >= ho) continue;
              for (int v = 0; v < kw; ++v) {
                const int num_w = iw + pad - v * dil;
                if (num_w < 0 || num_w % stride != 0) continue;
                const int ow = num_w / stride;
                if (ow >= wo) continue;
                acc += gout[(((size_t)b * co + oc) * ho + oh) * wo + ow] *
                       k[(((size_t)oc * ci + ic) * kh + u) * kw + v];
              }
            }
          }
          gin[(((size_t)b * ci + ic) * h + ih) * w + iw] += acc;
        }
      }
    }
  }
}

void conv2d_grad_kernel(const double* gout, int n, int co, int ho, int wo,
                        const double* in, int ci, int h, int w,
                        int kh, int kw, int stride, int pad, int dil,
                        double* gk) {
  for (int oc = 0; oc < co; ++oc) {
    for (int ic = 0; ic < ci; ++ic) {
      for (int u = 0; u < kh; ++u) {
        for (int v = 0; v < kw; ++v) {
          double acc = 0.0;
          for (int b = 0; b < n; ++b) {
            for (int oh = 0; oh < ho; ++oh) {
              const int ih = oh * stride - pad + u * dil;
              if (ih < 0 || ih >= h) continue;
              for (int ow = 0; ow < wo; ++ow) {
                const int iw = ow * stride - pad + v * dil;
                if (iw < 0 || iw >= w) continue;
                acc += gout[(((size_t)b * co + oc) * ho + oh) * wo + ow] *
                       in[(((size_t)b * ci + ic) * h + ih) * w + iw];
              }
            }
          }
          gk[(((size_t)oc * ci + ic) * kh + u) * kw + v] += acc;
        }
      }
    }
  }
}

void tconv2d_forward(const double* in, int n, int ci, int h, int w,
                     const double* k, int co, int kh, int kw,
                     int stride, int pad,
                     double* out, int ho, int wo) {
  for (int b = 0; b < n; ++b) {
    for (int oc = 0; oc < co; ++oc) {
      for (int oh = 0; oh < ho; ++oh) {
        for (int ow = 0; ow < wo; ++ow) {
          double acc = 0.0;
          for (int ic = 0; ic < ci; ++ic) {
            for (int u = 0; u < kh; ++u) {
              const int num_h = oh + pad - u;
              if (num_h < 0 || num_h % stride != 0) continue;
              const int ih = num_h / stride;
              if (ih >= h) continue;
              for (int v = 0; v < kw; ++v) {
                const int num_w = ow + pad - v;
                if (num_w < 0 || num_w % stride != 0) continue;
                const int iw = num_w / stride;
                if (iw >= w) continue;
                acc += in[(((size_t)b * ci + ic) * h + ih) * w + iw] *
                       k[(((size_t)ic * co + oc) * kh + u) * kw + v];
              }
            }
          }
          out[(((size_t)b * co + oc) * ho + oh) * wo + ow] = acc;
        }
      }
    }
  }
}

}  // namespace serial

void conv2d_forward(const double* in, int n, int ci, int h, int w,
                    const double* k, int co, int kh, int kw,
                    int stride, int pad, int dil,
                    double* out, int ho, int wo) {
  const int64_t total = (int64_t)n * co * ho * wo;
#pragma omp parallel for schedule(static)
  for (int64_t idx = 0; idx < total; ++idx) {
    const int ow = static_cast<int>(idx % wo);
    const int oh = static_cast<int>((idx / wo) % ho);
    const int oc = static_cast<int>((idx / ((int64_t)wo * ho)) % co);
    const int b = static_cast<int>(idx / ((int64_t)wo * ho * co));
    double acc = 0.0;
    for (int ic = 0; ic < ci; ++ic) {
      for (int u = 0; u < kh; ++u) {
        const int ih = oh * stride - pad + u * dil;
        if (ih < 0 || ih >= h) continue;
        for (int v = 0; v < kw; ++v) {
          const int iw = ow * stride - pad + v * dil;
          if (iw < 0 || iw >= w) continue;
          acc += in[(((size_t)b * ci + ic) * h + ih) * w + iw] *
                 k[(((size_t)oc * ci + ic) * kh + u) * kw + v];
        }
      }
    }
    out[idx] = acc;
  }
}

void conv2d_grad_input(const double* gout, int n, int co, int ho, int wo,
                       const double* k, int ci, int kh, int kw,
                       int stride, int pad, int dil,
                       double* gin, int h, int w) {
  const int64_t total = (int64_t)n * ci * h * w;
#pragma omp parallel for schedule(static)
  for (int64_t idx = 0; idx < total; ++idx) {
    const int iw = static_cast<int>(idx % w);
    const int ih = static_cast<int>((idx / w) % h);
    const int ic = static_cast<int>((idx / ((int64_t)w * h)) % ci);
    const int b = static_cast<int>(idx / ((int64_t)w * h * ci));
    double acc = 0.0;
    for (int oc = 0; oc < co; ++oc) {
      for (int u = 0; u < kh; ++u) {
        const int num_h = ih + pad - u * dil;
        if (num_h < 0 || num_h % stride != 0) continue;
        const int oh = num_h / stride;
        if (oh >= ho) continue;
        for (int v = 0; v < kw; ++v) {
          const int num_w = iw + pad - v * dil;
          if (num_w < 0 || num_w % stride != 0) continue;
          const int ow = num_w / stride;
          if (ow >= wo) continue;
          acc += gout[(((size_t)b * co + oc) * ho + oh) * wo + ow] *
                 k[(((size_t)oc * ci + ic) * kh + u) * kw + v];
        }
      }
    }
    gin[idx] += acc;
  }
}

void conv2d_grad_kernel(const double* gout, int n, int co, int ho, int wo,
                        const double* in, int ci, int h, int w,
                        int kh, int kw, int stride, int pad, int dil,
                        double* gk) {
  const int64_t total = (int64_t)co * ci * kh * kw;
#pragma omp parallel for schedule(static)
  for (int64_t idx = 0; idx < total; ++idx) {
    const int v = static_cast<int>(idx % kw);
    const int u = static_cast<int>((idx / kw) % kh);
    const int ic = static_cast<int>((idx / ((int64_t)kw * kh)) % ci);
    const int oc = static_cast<int>(idx / ((int64_t)kw * kh * ci));
    double acc = 0.0;
    for (int b = 0; b < n; ++b) {
      for (int oh = 0; oh < ho; ++oh) {
        const int ih = oh * stride - pad + u * dil;
        if (ih < 0 || ih >= h) continue;
        for (int ow = 0; ow < wo; ++ow) {
          const int iw = ow * stride - pad + v * dil;
          if (iw < 0 || iw >= w) continue;
          acc += gout[(((size_t)b * co + oc) * ho + oh) * wo + ow] *
                 in[(((size_t)b * ci + ic) * h + ih) * w + iw];
        }
      }
    }
    gk[idx] += acc;
  }
}

void tconv2d_forward(const double* in, int n, int ci, int h, int w,
                     const double* k, int co, int kh, int kw,
                     int stride, int pad,
                     double* out, int ho, int wo) {
  const int64_t total = (int64_t)n * co * ho * wo;
#pragma omp parallel for schedule(static)
  for (int64_t idx = 0; idx < total; ++idx) {
    const int ow = static_cast<int>(idx % wo);
    const int oh = static_cast<int>((idx / wo) % ho);
    const int oc = static_cast<int>((idx / ((int64_t)wo * ho)) % co);
    const int b = static_cast<int>(idx / ((int64_t)wo * ho * co));
    double acc = 0.0;
    for (int ic = 0; ic < ci; ++ic) {
      for (int u = 0; u < kh; ++u) {
        const int num_h = oh + pad - u;
        if (num_h < 0 || num_h % stride != 0) continue;
        const int ih = num_h / stride;
        if (ih >= h) continue;
        for (int v = 0; v < kw; ++v) {
          const int num_w = ow + pad - v;
          if (num_w < 0 || num_w % stride != 0) continue;
          const int iw = num_w / stride;
          if (iw >= w) continue;
          acc += in[(((size_t)b * ci + ic) * h + ih) * w + iw] *
                 k[(((size_t)ic * co + oc) * kh + u) * kw + v];
        }
      }
    }
    out[idx] = acc;
  }
}

void tconv2d_grad_input(const double* gout, int n, int co, int ho, int wo,
                        const double* k, int ci, int kh, int kw,
                        int stride, int pad,
                        double* gin, int h, int w) {
  // Forward scatters input (ih,iw) to outputs (ih*s-p+u, iw*s-p+v).
  const int64_t total = (int64_t)n * ci * h * w;
#pragma omp parallel for schedule(static)
  for (int64_t idx = 0; idx < total; ++idx) {
    const int iw = static_cast<int>(idx % w);
    const int ih = static_cast<int>((idx / w) % h);
    const int ic = static_cast<int>((idx / ((int64_t)w * h)) % ci);
    const int b = static_cast<int>(idx / ((int64_t)w * h * ci));
    double acc = 0.0;
    for (int oc = 0; oc < co; ++oc) {
      for (int u = 0; u < kh; ++u) {
        const int oh = ih * stride - pad + u;
        if (oh < 0 || oh >= ho) continue;
        for (int v = 0; v < kw; ++v) {
          const int ow = iw * stride - pad + v;
          if (ow < 0 || ow >= wo) continue;
          acc += gout[(((size_t)b * co + oc) * ho + oh) * wo + ow] *
                 k[(((size_t)ic * co + oc) * kh + u) * kw + v];
        }
      }
    }
    gin[idx] += acc;
  }
}

void tconv2d_grad_kernel(const double* gout, int n, int co, int ho, int wo,
                         const double* in, int ci, int h, int w,
                         int kh, int kw, int stride, int pad,
                         double* gk) {
  const int64_t total = (int64_t)ci * co * kh * kw;
#pragma omp parallel for schedule(static)
  for (int64_t idx = 0; idx < total; ++idx) {
    const int v = static_cast<int>(idx % kw);
    const int u = static_cast<int>((idx / kw) % kh);
    const int oc = static_cast<int>((idx / ((int64_t)kw * kh)) % co);
    const int ic = static_cast<int>(idx / ((int64_t)kw * kh * co));
    double acc = 0.0;
    for (int b = 0; b < n; ++b) {
      for (int ih = 0; ih < h; ++ih) {
        const int oh = ih * stride - pad + u;
        if (oh < 0 || oh >= ho) continue;
        for (int iw = 0; iw < w; ++iw) {
          const int ow = iw * stride - pad + v;
          if (ow < 0 || ow >= wo) continue;
          acc += in[(((size_t)b * ci + ic) * h + ih) * w + iw] *
                 gout[(((size_t)b * co + oc) * ho + oh) * wo + ow];
        }
      }
    }
    gk[idx] += acc;
  }
}

// -------------------------------------------------------------- bilinear ----

namespace {

template <typename T>
inline void bilinear_taps(int out_pos, int out_len, int in_len, int* lo, int* hi, T* frac) {
  const double src = (out_pos + 0.5) * (static_cast<double>(in_len) / out_len) - 0.5;
  const double floor_src = std::floor(src);
  int l = static_cast<int>(floor_src);
  T f = static_cast<T>(src - floor_src);
  *lo = std::clamp(l, 0, in_len - 1);
  *hi = std::clamp(l + 1, 0, in_len - 1);
  *frac = f;
}

template <typename T>
void bilinear_forward_plane(const T* in, int h, int w, T* out, int ho, int wo) {
  for (int oy = 0; oy < ho; ++oy) {
    int y0, y1;
    T fy;
    bilinear_taps(oy, ho, h, &y0, &y1, &fy);
    for (int ox = 0; ox < wo; ++ox) {
      int x0, x1;
      T fx;
      bilinear_taps(ox, wo, w, &x0, &x1, &fx);
      const T top = in[(size_t)y0 * w + x0] * (1 - fx) + in[(size_t)y0 * w + x1] * fx;
      const T bot = in[(size_t)y1 * w + x0] * (1 - fx) + in[(size_t)y1 * w + x1] * fx;
      out[(size_t)oy * wo + ox] = top * (1 - fy) + bot * fy;
    }
  }
}

}  // namespace

namespace serial {

void bilinear_forward(const double* in, int n, int c, int h, int w,
                      double* out, int ho, int wo) {
  for (int plane = 0; plane < n * c; ++plane) {
    bilinear_forward_plane(in + (size_t)plane * h * w, h, w,
                           out + (size_t)plane * ho * wo, ho, wo);
  }
}

}  // namespace serial

void bilinear_forward(const double* in, int n, int c, int h, int w,
                      double* out, int ho, int wo) {
  const int planes = n * c;
#pragma omp parallel for schedule(static)
  for (int plane = 0; plane < planes; ++plane) {
    bilinear_forward_plane(in + (size_t)plane * h * w, h, w,
                           out + (size_t)plane * ho * wo, ho, wo);
  }
}

void bilinear_forward(const float* in, int n, int c, int h, int w,
                      float* out, int ho, int wo) {
  const int planes = n * c;
#pragma omp parallel for schedule(static)
  for (int plane = 0; plane < planes; ++plane) {
    bilinear_forward_plane(in + (size_t)plane * h * w, h, w,
                           out + (size_t)plane * ho * wo, ho, wo);
  }
}

void bilinear_backward(const double* gout, int n, int c, int ho, int wo,
                       double* gin, int h, int w) {
  const int planes = n * c;
  // Planes are disjoint, so the per-plane scatter stays deterministic.
#pragma omp parallel for schedule(static)
  for (int plane = 0; plane < planes; ++plane) {
    const double* go = gout + (size_t)plane * ho * wo;
    double* gi = gin + (size_t)plane * h * w;
    for (int oy = 0; oy < ho; ++oy) {
      int y0, y1;
      double fy;
      bilinear_taps(oy, ho, h, &y0, &y1, &fy);
      for (int ox = 0; ox < wo; ++ox) {
        int x0, x1;
        double fx;
        bilinear_taps(ox, wo, w, &x0, &x1, &fx);
        const double g = go[(size_t)oy * wo + ox];
        gi[(size_t)y0 * w + x0] += g * (1 - fy) * (1 - fx);
        gi[(size_t)y0 * w + x1] += g * (1 - fy) * fx;
        gi[(size_t)y1 * w + x0] += g * fy * (1 - fx);
        gi[(size_t)y1 * w + x1] += g * fy * fx;
      }
    }
  }
}

// ------------------------------------------------------------- attention ----

namespace {

inline bool attention_row(const double* theta, const double* phi, int d, int m,
                          int64_t base, int i, double* row) {
  // row[j] = softmax_j( theta_i . phi_j )
  bool finite = true;
  for (int j = 0; j < m; ++j) {
    double s = 0.0;
    for (int dd = 0; dd < d; ++dd) {
      s += theta[base + (size_t)dd * m + i] * phi[base + (size_t)dd * m + j];
    }
    if (!std::isfinite(s)) finite = false;
    row[j] = s;
  }
  if (!finite) return false;
  double mx = row[0];
  for (int j = 1; j < m; ++j) mx = std::max(mx, row[j]);
  double sum = 0.0;
  for (int j = 0; j < m; ++j) {
    row[j] = std::exp(row[j] - mx);
    sum += row[j];
  }
  for (int j = 0; j < m; ++j) row[j] /= sum;
  return true;
}

}  // namespace

namespace serial {

bool attention_forward(const double* theta, const double* phi, const double* g,
                       int n, int d, int m, double* attn, double* out) {
  bool ok = true;
  for (int b = 0; b < n; ++b) {
    const int64_t base = (int64_t)b * d * m;
    double* a = attn + (size_t)b * m * m;
    for (int i = 0; i < m; ++i) {
      if (!attention_row(theta, phi, d, m, base, i, a + (size_t)i * m)) ok = false;
    }
    for (int dd = 0; dd < d; ++dd) {
      for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int j = 0; j < m; ++j) acc += a[(size_t)i * m + j] * g[base + (size_t)dd * m + j];
        out[base + (size_t)dd * m + i] = acc;
      }
    }
  }
  return ok;
}

}  // namespace serial

bool attention_forward(const double* theta, const double* phi, const double* g,
                       int n, int d, int m, double* attn, double* out) {
  bool ok = true;
  for (int b = 0; b < n; ++b) {
    const int64_t base = (int64_t)b * d * m;
    double* a = attn + (size_t)b * m * m;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
      if (!attention_row(theta, phi, d, m, base, i, a + (size_t)i * m)) {
#pragma omp atomic write
        ok = false;
      }
    }
#pragma omp parallel for schedule(static) collapse(2)
    for (int dd = 0; dd < d; ++dd) {
      for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int j = 0; j < m; ++j) acc += a[(size_t)i * m + j] * g[base + (size_t)dd * m + j];
        out[base + (size_t)dd * m + i] = acc;
      }
    }
  }
  return ok;
}

void attention_backward(const double* gout, const double* theta, const double* phi,
                        const double* g, const double* attn, int n, int d, int m,
                        double* gtheta, double* gphi, double* gg) {
  std::vector<double> da((size_t)m * m);
  std::vector<double> ds((size_t)m * m);
  for (int b = 0; b < n; ++b) {
    const int64_t base = (int64_t)b * d * m;
    const double* a = attn + (size_t)b * m * m;

    // dA[i,j] = sum_d gout[d,i] * g[d,j]
#pragma omp parallel for schedule(static) collapse(2)
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        double acc = 0.0;
        for (int dd = 0; dd < d; ++dd) {
          acc += gout[base + (size_t)dd * m + i] * g[base + (size_t)dd * m + j];
        }
        da[(size_t)i * m + j] = acc;
      }
    }
    // dG[d,j] += sum_i gout[d,i] * A[i,j]
#pragma omp parallel for schedule(static) collapse(2)
    for (int dd = 0; dd < d; ++dd) {
      for (int j = 0; j < m; ++j) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i) acc += gout[base + (size_t)dd * m + i] * a[(size_t)i * m + j];
        gg[base + (size_t)dd * m + j] += acc;
      }
    }
    // softmax backward per row
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
      double dot = 0.0;
      for (int j = 0; j < m; ++j) dot += da[(size_t)i * m + j] * a[(size_t)i * m + j];
      for (int j = 0; j < m; ++j) {
        ds[(size_t)i * m + j] = a[(size_t)i * m + j] * (da[(size_t)i * m + j] - dot);
      }
    }
    // dTheta[d,i] += sum_j dS[i,j] * phi[d,j];  dPhi[d,j] += sum_i dS[i,j] * theta[d,i]
#pragma omp parallel for schedule(static) collapse(2)
    for (int dd = 0; dd < d; ++dd) {
      for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int j = 0; j < m; ++j) acc += ds[(size_t)i * m + j] * phi[base + (size_t)dd * m + j];
        gtheta[base + (size_t)dd * m + i] += acc;
      }
    }
#pragma omp parallel for schedule(static) collapse(2)
    for (int dd = 0; dd < d; ++dd) {
      for (int j = 0; j < m; ++j) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i) acc += ds[(size_t)i * m + j] * theta[base + (size_t)dd * m + i];
        gphi[base + (size_t)dd * m + j] += acc;
      }
    }
  }
}

}  // namespace connseg::kernels
