#pragma once

#include <cstdint>

#include "connseg/grid.hpp"

// Low-level array kernels. Every function here is deterministic: parallel
// variants split work over output elements only, each element keeping the
// same fixed inner summation order as the serial reference, so results are
// bit-identical regardless of thread count. The serial namespace holds
// straightforward nested-loop references used by tests and the benchmark.

namespace connseg::kernels {

// ---- connectivity codec (float cubes, uint8 masks) ----

// cube[(i*w + j)*c + ch] = 1 iff pixel and its ch-th neighbor are both salient.
void encode_cube(const uint8_t* mask, int h, int w, const Offset* offs, int c, float* cube);

// Symmetric-agreement decode: pixel salient iff >= k channels agree, where a
// channel agrees iff both the entry and the in-bounds neighbor's opposite
// entry exceed t (strict).
void decode_mask(const float* cube, int h, int w, const Offset* offs, const int* opposite,
                 int c, double t, int k, uint8_t* mask);

void agreement_map(const float* binary_cube, int h, int w, const Offset* offs,
                   const int* opposite, int c, uint8_t* agree);

void threshold(const float* in, int64_t len, double t, float* out);

// Element-wise mean of n same-length arrays, accumulated left to right.
void fuse_mean(const float* const* cubes, int n, int64_t len, float* out);

// ---- dense tensor math (double, NCHW) ----

// out[n,co,oh,ow] = sum_{ci,u,v} in[n,ci,oh*s-p+u*d, ow*s-p+v*d] * k[co,ci,u,v]
void conv2d_forward(const double* in, int n, int ci, int h, int w,
                    const double* k, int co, int kh, int kw,
                    int stride, int pad, int dil,
                    double* out, int ho, int wo);
// Gather form of the input gradient; accumulates into gin.
void conv2d_grad_input(const double* gout, int n, int co, int ho, int wo,
                       const double* k, int ci, int kh, int kw,
                       int stride, int pad, int dil,
                       double* gin, int h, int w);
// Accumulates into gk.
void conv2d_grad_kernel(const double* gout, int n, int co, int ho, int wo,
                        const double* in, int ci, int h, int w,
                        int kh, int kw, int stride, int pad, int dil,
                        double* gk);

// Fractionally strided convolution; kernel layout is [ci,co,kh,kw] and the
// output size is (h-1)*stride - 2*pad + kh.
void tconv2d_forward(const double* in, int n, int ci, int h, int w,
                     const double* k, int co, int kh, int kw,
                     int stride, int pad,
                     double* out, int ho, int wo);
void tconv2d_grad_input(const double* gout, int n, int co, int ho, int wo,
                        const double* k, int ci, int kh, int kw,
                        int stride, int pad,
                        double* gin, int h, int w);
void tconv2d_grad_kernel(const double* gout, int n, int co, int ho, int wo,
                         const double* in, int ci, int h, int w,
                         int kh, int kw, int stride, int pad,
                         double* gk);

// align-corners=false, edge-clamped.
void bilinear_forward(const double* in, int n, int c, int h, int w,
                      double* out, int ho, int wo);
void bilinear_forward(const float* in, int n, int c, int h, int w,
                      float* out, int ho, int wo);
// Scatters upstream gradients back to the four source taps; accumulates.
void bilinear_backward(const double* gout, int n, int c, int ho, int wo,
                       double* gin, int h, int w);

// Embedded-Gaussian positional attention over m = h*w flattened positions.
// theta/phi/g are [n,d,m]; writes row-softmaxed affinities to attn [n,m,m]
// and out[n,d,i] = sum_j attn[i,j] * g[n,d,j]. Returns false if any affinity
// is non-finite.
bool attention_forward(const double* theta, const double* phi, const double* g,
                       int n, int d, int m, double* attn, double* out);
// All gradient buffers accumulate.
void attention_backward(const double* gout, const double* theta, const double* phi,
                        const double* g, const double* attn, int n, int d, int m,
                        double* gtheta, double* gphi, double* gg);

namespace serial {
void encode_cube(const uint8_t* mask, int h, int w, const Offset* offs, int c, float* cube);
void decode_mask(const float* cube, int h, int w, const Offset* offs, const int* opposite,
                 int c, double t, int k, uint8_t* mask);
void fuse_mean(const float* const* cubes, int n, int64_t len, float* out);
void conv2d_forward(const double* in, int n, int ci, int h, int w,
                    const double* k, int co, int kh, int kw,
                    int stride, int pad, int dil,
                    double* out, int ho, int wo);
void conv2d_grad_input(const double* gout, int n, int co, int ho, int wo,
                       const double* k, int ci, int kh, int kw,
                       int stride, int pad, int dil,
                       double* gin, int h, int w);
void conv2d_grad_kernel(const double* gout, int n, int co, int ho, int wo,
                        const double* in, int ci, int h, int w,
                        int kh, int kw, int stride, int pad, int dil,
                        double* gk);
void tconv2d_forward(const double* in, int n, int ci, int h, int w,
                     const double* k, int co, int kh, int kw,
                     int stride, int pad,
                     double* out, int ho, int wo);
void bilinear_forward(const double* in, int n, int c, int h, int w,
                      double* out, int ho, int wo);
bool attention_forward(const double* theta, const double* phi, const double* g,
                       int n, int d, int m, double* attn, double* out);
}  // namespace serial

}  // namespace connseg::kernels
