// Compares the OpenMP kernels against their serial references: wall time,
// speedup, and bitwise agreement of the outputs.

#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "connseg/grid.hpp"
#include "connseg/kernels.hpp"
#include "connseg/parallel.hpp"

using namespace connseg;

namespace {

std::mt19937_64 g_rng(90210);
double unit() { return (g_rng() >> 11) * 0x1.0p-53; }
std::vector<double> rnd(int64_t n) {
  std::vector<double> v((size_t)n);
  for (auto& x : v) x = unit() * 2.0 - 1.0;
  return v;
}
std::vector<float> rndf(int64_t n) {
  std::vector<float> v((size_t)n);
  for (auto& x : v) x = (float)unit();
  return v;
}

int g_failures = 0;

template <typename Serial, typename Parallel, typename Buffer>
void bench(const std::string& name, int reps, Serial serial, Parallel parallel, Buffer& a,
           Buffer& b) {
  double t0 = omp_get_wtime();
  for (int r = 0; r < reps; ++r) serial();
  const double serial_s = (omp_get_wtime() - t0) / reps;

  t0 = omp_get_wtime();
  for (int r = 0; r < reps; ++r) parallel();
  const double parallel_s = (omp_get_wtime() - t0) / reps;

  const bool equal = a == b;
  if (!equal) ++g_failures;
  std::printf("%-22s serial %8.2f ms   omp %8.2f ms   speedup %.2fx   %s\n", name.c_str(),
              serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s,
              equal ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
  const int threads = configure_threads_from_env();
  std::printf("threads: %d\n\n", threads);

  {  // conv2d forward, training-sized
    const int n = 4, ci = 16, h = 64, w = 64, co = 32, kk = 3;
    const auto in = rnd((int64_t)n * ci * h * w);
    const auto k = rnd((int64_t)co * ci * kk * kk);
    std::vector<double> a((size_t)n * co * h * w), b(a.size());
    bench(
        "conv2d 3x3", 3,
        [&] {
          kernels::serial::conv2d_forward(in.data(), n, ci, h, w, k.data(), co, kk, kk, 1, 1, 1,
                                          a.data(), h, w);
        },
        [&] {
          kernels::conv2d_forward(in.data(), n, ci, h, w, k.data(), co, kk, kk, 1, 1, 1,
                                  b.data(), h, w);
        },
        a, b);
  }
  {  // dilated conv
    const int n = 2, ci = 24, h = 32, w = 32, co = 24, kk = 3, dil = 4;
    const auto in = rnd((int64_t)n * ci * h * w);
    const auto k = rnd((int64_t)co * ci * kk * kk);
    std::vector<double> a((size_t)n * co * h * w), b(a.size());
    bench(
        "conv2d 3x3 dilated", 5,
        [&] {
          kernels::serial::conv2d_forward(in.data(), n, ci, h, w, k.data(), co, kk, kk, 1, dil,
                                          dil, a.data(), h, w);
        },
        [&] {
          kernels::conv2d_forward(in.data(), n, ci, h, w, k.data(), co, kk, kk, 1, dil, dil,
                                  b.data(), h, w);
        },
        a, b);
  }
  {  // transposed conv
    const int n = 4, ci = 8, h = 32, w = 32, co = 8, kk = 4, stride = 2, pad = 1;
    const int ho = (h - 1) * stride - 2 * pad + kk;
    const int wo = (w - 1) * stride - 2 * pad + kk;
    const auto in = rnd((int64_t)n * ci * h * w);
    const auto k = rnd((int64_t)ci * co * kk * kk);
    std::vector<double> a((size_t)n * co * ho * wo), b(a.size());
    bench(
        "tconv2d 4x4 s2", 10,
        [&] {
          kernels::serial::tconv2d_forward(in.data(), n, ci, h, w, k.data(), co, kk, kk, stride,
                                           pad, a.data(), ho, wo);
        },
        [&] {
          kernels::tconv2d_forward(in.data(), n, ci, h, w, k.data(), co, kk, kk, stride, pad,
                                   b.data(), ho, wo);
        },
        a, b);
  }
  {  // bilinear
    const int n = 1, c = 8, h = 256, w = 256, ho = 512, wo = 512;
    const auto in = rnd((int64_t)n * c * h * w);
    std::vector<double> a((size_t)n * c * ho * wo), b(a.size());
    bench(
        "bilinear 256->512", 5,
        [&] { kernels::serial::bilinear_forward(in.data(), n, c, h, w, a.data(), ho, wo); },
        [&] { kernels::bilinear_forward(in.data(), n, c, h, w, b.data(), ho, wo); }, a, b);
  }
  {  // attention at the non-local block's working size
    const int n = 1, d = 16, m = 32 * 32;
    const auto theta = rnd((int64_t)n * d * m);
    const auto phi = rnd((int64_t)n * d * m);
    const auto g = rnd((int64_t)n * d * m);
    std::vector<double> attn_a((size_t)n * m * m), out_a((size_t)n * d * m);
    std::vector<double> attn_b(attn_a.size()), out_b(out_a.size());
    // compare the mixed outputs; the row buffers are checked too
    struct Pair {
      std::vector<double>*attn, *out;
      bool operator==(const Pair& o) const { return *attn == *o.attn && *out == *o.out; }
    };
    Pair a{&attn_a, &out_a}, b{&attn_b, &out_b};
    bench(
        "attention 1024 pos", 3,
        [&] {
          kernels::serial::attention_forward(theta.data(), phi.data(), g.data(), n, d, m,
                                             attn_a.data(), out_a.data());
        },
        [&] {
          kernels::attention_forward(theta.data(), phi.data(), g.data(), n, d, m, attn_b.data(),
                                     out_b.data());
        },
        a, b);
  }
  {  // codec encode/decode on a large frame
    const auto& pat = ConnectivityPattern::get(PatternKind::N8);
    const int h = 512, w = 512, c = 8;
    BinaryMask m(h, w);
    for (auto& v : m.data) v = unit() < 0.35 ? 1 : 0;
    std::vector<float> cube_a((size_t)h * w * c), cube_b(cube_a.size());
    bench(
        "encode 512x512 n8", 10,
        [&] {
          kernels::serial::encode_cube(m.data.data(), h, w, pat.offsets().data(), c,
                                       cube_a.data());
        },
        [&] { kernels::encode_cube(m.data.data(), h, w, pat.offsets().data(), c, cube_b.data()); },
        cube_a, cube_b);

    const auto soft = rndf((int64_t)h * w * c);
    std::vector<uint8_t> mask_a((size_t)h * w), mask_b(mask_a.size());
    bench(
        "decode 512x512 n8", 10,
        [&] {
          kernels::serial::decode_mask(soft.data(), h, w, pat.offsets().data(),
                                       pat.opposite_channels().data(), c, 0.5, 1, mask_a.data());
        },
        [&] {
          kernels::decode_mask(soft.data(), h, w, pat.offsets().data(),
                               pat.opposite_channels().data(), c, 0.5, 1, mask_b.data());
        },
        mask_a, mask_b);
  }
  {  // fusion of ten cubes
    const int h = 256, w = 256, c = 8, count = 10;
    std::vector<std::vector<float>> cubes;
    std::vector<const float*> ptrs;
    for (int q = 0; q < count; ++q) {
      cubes.push_back(rndf((int64_t)h * w * c));
      ptrs.push_back(cubes.back().data());
    }
    std::vector<float> a((size_t)h * w * c), b(a.size());
    bench(
        "fuse 10 cubes", 20,
        [&] { kernels::serial::fuse_mean(ptrs.data(), count, (int64_t)a.size(), a.data()); },
        [&] { kernels::fuse_mean(ptrs.data(), count, (int64_t)b.size(), b.data()); }, a, b);
  }

  if (g_failures > 0) {
    std::printf("\n%d kernel(s) disagreed with the serial reference\n", g_failures);
    return 1;
  }
  std::printf("\nall kernels bit-identical to the serial references\n");
  return 0;
}
