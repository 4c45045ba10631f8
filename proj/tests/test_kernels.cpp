// The OpenMP kernels must be bit-identical to the serial references for any
// thread count: work is split over output elements only and every element
// keeps the same inner summation order.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <vector>

#include "connseg/grid.hpp"
#include "connseg/kernels.hpp"
#include "connseg/parallel.hpp"

using namespace connseg;

namespace {

std::mt19937_64 g_rng(11011);
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

struct ThreadGuard {
  explicit ThreadGuard(int n) { omp_set_num_threads(n); }
  ~ThreadGuard() { omp_set_num_threads(omp_get_num_procs()); }
};

}  // namespace

TEST_CASE("conv2d kernels match the serial reference bitwise") {
  struct Case {
    int n, ci, h, w, co, kh, kw, stride, pad, dil;
  };
  const Case cases[] = {
      {2, 3, 9, 11, 4, 3, 3, 1, 1, 1},
      {1, 2, 8, 8, 3, 4, 4, 2, 1, 1},
      {1, 2, 10, 10, 2, 3, 3, 1, 2, 2},
      {2, 1, 7, 5, 1, 1, 1, 1, 0, 1},
  };
  for (const Case& c : cases) {
    const auto in = rnd((int64_t)c.n * c.ci * c.h * c.w);
    const auto k = rnd((int64_t)c.co * c.ci * c.kh * c.kw);
    const int ho = (c.h + 2 * c.pad - c.dil * (c.kh - 1) - 1) / c.stride + 1;
    const int wo = (c.w + 2 * c.pad - c.dil * (c.kw - 1) - 1) / c.stride + 1;

    std::vector<double> ref((size_t)c.n * c.co * ho * wo);
    kernels::serial::conv2d_forward(in.data(), c.n, c.ci, c.h, c.w, k.data(), c.co, c.kh, c.kw,
                                    c.stride, c.pad, c.dil, ref.data(), ho, wo);
    for (int threads : {1, 2, 3}) {
      ThreadGuard guard(threads);
      std::vector<double> out((size_t)c.n * c.co * ho * wo);
      kernels::conv2d_forward(in.data(), c.n, c.ci, c.h, c.w, k.data(), c.co, c.kh, c.kw,
                              c.stride, c.pad, c.dil, out.data(), ho, wo);
      REQUIRE(out == ref);
    }

    const auto gout = rnd((int64_t)c.n * c.co * ho * wo);
    std::vector<double> gin_ref((size_t)c.n * c.ci * c.h * c.w, 0.0);
    std::vector<double> gk_ref((size_t)c.co * c.ci * c.kh * c.kw, 0.0);
    kernels::serial::conv2d_grad_input(gout.data(), c.n, c.co, ho, wo, k.data(), c.ci, c.kh,
                                       c.kw, c.stride, c.pad, c.dil, gin_ref.data(), c.h, c.w);
    kernels::serial::conv2d_grad_kernel(gout.data(), c.n, c.co, ho, wo, in.data(), c.ci, c.h,
                                        c.w, c.kh, c.kw, c.stride, c.pad, c.dil, gk_ref.data());
    for (int threads : {2, 3}) {
      ThreadGuard guard(threads);
      std::vector<double> gin((size_t)c.n * c.ci * c.h * c.w, 0.0);
      std::vector<double> gk((size_t)c.co * c.ci * c.kh * c.kw, 0.0);
      kernels::conv2d_grad_input(gout.data(), c.n, c.co, ho, wo, k.data(), c.ci, c.kh, c.kw,
                                 c.stride, c.pad, c.dil, gin.data(), c.h, c.w);
      kernels::conv2d_grad_kernel(gout.data(), c.n, c.co, ho, wo, in.data(), c.ci, c.h, c.w,
                                  c.kh, c.kw, c.stride, c.pad, c.dil, gk.data());
      REQUIRE(gin == gin_ref);
      REQUIRE(gk == gk_ref);
    }
  }
}

TEST_CASE("transposed conv kernel matches the serial reference bitwise") {
  const int n = 2, ci = 3, h = 5, w = 6, co = 2, kk = 4, stride = 2, pad = 1;
  const auto in = rnd((int64_t)n * ci * h * w);
  const auto k = rnd((int64_t)ci * co * kk * kk);
  const int ho = (h - 1) * stride - 2 * pad + kk;
  const int wo = (w - 1) * stride - 2 * pad + kk;
  std::vector<double> ref((size_t)n * co * ho * wo);
  kernels::serial::tconv2d_forward(in.data(), n, ci, h, w, k.data(), co, kk, kk, stride, pad,
                                   ref.data(), ho, wo);
  for (int threads : {1, 2, 3}) {
    ThreadGuard guard(threads);
    std::vector<double> out((size_t)n * co * ho * wo);
    kernels::tconv2d_forward(in.data(), n, ci, h, w, k.data(), co, kk, kk, stride, pad,
                             out.data(), ho, wo);
    REQUIRE(out == ref);
  }
}

TEST_CASE("bilinear kernel matches the serial reference bitwise") {
  const int n = 1, c = 3, h = 9, w = 7;
  const auto in = rnd((int64_t)n * c * h * w);
  for (const auto& [ho, wo] : std::vector<std::pair<int, int>>{{18, 14}, {5, 4}, {9, 7}}) {
    std::vector<double> ref((size_t)n * c * ho * wo);
    kernels::serial::bilinear_forward(in.data(), n, c, h, w, ref.data(), ho, wo);
    for (int threads : {2, 3}) {
      ThreadGuard guard(threads);
      std::vector<double> out((size_t)n * c * ho * wo);
      kernels::bilinear_forward(in.data(), n, c, h, w, out.data(), ho, wo);
      REQUIRE(out == ref);
    }
  }
}

TEST_CASE("attention kernel matches the serial reference bitwise") {
  const int n = 2, d = 4, m = 15;
  const auto theta = rnd((int64_t)n * d * m);
  const auto phi = rnd((int64_t)n * d * m);
  const auto g = rnd((int64_t)n * d * m);
  std::vector<double> attn_ref((size_t)n * m * m), out_ref((size_t)n * d * m);
  REQUIRE(kernels::serial::attention_forward(theta.data(), phi.data(), g.data(), n, d, m,
                                             attn_ref.data(), out_ref.data()));
  for (int threads : {2, 3}) {
    ThreadGuard guard(threads);
    std::vector<double> attn((size_t)n * m * m), out((size_t)n * d * m);
    REQUIRE(kernels::attention_forward(theta.data(), phi.data(), g.data(), n, d, m, attn.data(),
                                       out.data()));
    REQUIRE(attn == attn_ref);
    REQUIRE(out == out_ref);
  }
}

TEST_CASE("codec kernels match the serial references bitwise") {
  const auto& pat = ConnectivityPattern::get(PatternKind::N12);
  const int h = 33, w = 29, c = pat.channel_count();
  BinaryMask m(h, w);
  for (auto& v : m.data) v = unit() < 0.4 ? 1 : 0;

  std::vector<float> cube_ref((size_t)h * w * c);
  kernels::serial::encode_cube(m.data.data(), h, w, pat.offsets().data(), c, cube_ref.data());

  const auto soft = rndf((int64_t)h * w * c);
  std::vector<uint8_t> mask_ref((size_t)h * w);
  kernels::serial::decode_mask(soft.data(), h, w, pat.offsets().data(),
                               pat.opposite_channels().data(), c, 0.5, 2, mask_ref.data());

  const auto c1 = rndf((int64_t)h * w * c), c2 = rndf((int64_t)h * w * c),
             c3 = rndf((int64_t)h * w * c);
  const float* cubes[] = {c1.data(), c2.data(), c3.data()};
  std::vector<float> fuse_ref((size_t)h * w * c);
  kernels::serial::fuse_mean(cubes, 3, (int64_t)fuse_ref.size(), fuse_ref.data());

  for (int threads : {1, 2, 3}) {
    ThreadGuard guard(threads);
    std::vector<float> cube((size_t)h * w * c);
    kernels::encode_cube(m.data.data(), h, w, pat.offsets().data(), c, cube.data());
    REQUIRE(cube == cube_ref);

    std::vector<uint8_t> mask((size_t)h * w);
    kernels::decode_mask(soft.data(), h, w, pat.offsets().data(),
                         pat.opposite_channels().data(), c, 0.5, 2, mask.data());
    REQUIRE(mask == mask_ref);

    std::vector<float> fused((size_t)h * w * c);
    kernels::fuse_mean(cubes, 3, (int64_t)fused.size(), fused.data());
    REQUIRE(fused == fuse_ref);
  }
}
