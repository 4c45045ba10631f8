#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "connseg/errors.hpp"
#include "connseg/kernels.hpp"
#include "connseg/model.hpp"

using namespace connseg;
using ad::Tensor;

namespace {

std::mt19937_64 g_rng(555);
double unit() { return (g_rng() >> 11) * 0x1.0p-53; }
std::vector<double> rnd(int64_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v((size_t)n);
  for (auto& x : v) x = lo + unit() * (hi - lo);
  return v;
}

NonLocalBlock random_block(int d, int di) {
  NonLocalBlock b;
  b.theta = Tensor::variable({di, d, 1, 1}, rnd((int64_t)di * d, -0.5, 0.5));
  b.phi = Tensor::variable({di, d, 1, 1}, rnd((int64_t)di * d, -0.5, 0.5));
  b.g = Tensor::variable({di, d, 1, 1}, rnd((int64_t)di * d, -0.5, 0.5));
  b.z = Tensor::variable({d, di, 1, 1}, rnd((int64_t)d * di, -0.5, 0.5));
  return b;
}

}  // namespace

TEST_CASE("nonlocal: zero theta/phi gives uniform attention over positions") {
  const int d = 4, di = 2, h = 5, w = 5, m = h * w;
  NonLocalBlock block = random_block(d, di);
  std::fill(block.theta.mutable_values().begin(), block.theta.mutable_values().end(), 0.0);
  std::fill(block.phi.mutable_values().begin(), block.phi.mutable_values().end(), 0.0);

  Tensor x = Tensor::constant({1, d, h, w}, rnd((int64_t)d * m, 0.0, 1.0));
  Tensor theta = ad::conv2d(x, block.theta);
  Tensor phi = ad::conv2d(x, block.phi);
  Tensor g = ad::conv2d(x, block.g);
  Tensor y = ad::attention(theta, phi, g);

  // y_i must equal the spatial mean of g for every position
  for (int dd = 0; dd < di; ++dd) {
    double mean = 0.0;
    for (int p = 0; p < m; ++p) mean += g.values()[(size_t)dd * m + p];
    mean /= m;
    for (int p = 0; p < m; ++p) {
      CHECK(std::fabs(y.values()[(size_t)dd * m + p] - mean) < 1e-6);
    }
  }
}

TEST_CASE("nonlocal: zero projection makes the block an exact identity") {
  const int d = 6, di = 3, h = 4, w = 3;
  NonLocalBlock block = random_block(d, di);
  std::fill(block.z.mutable_values().begin(), block.z.mutable_values().end(), 0.0);
  Tensor x = Tensor::constant({2, d, h, w}, rnd((int64_t)2 * d * h * w));
  Tensor out = nonlocal_forward(x, block);
  CHECK(out.values() == x.values());
}

TEST_CASE("nonlocal: attention rows sum to one") {
  const int d = 3, h = 4, w = 5, m = h * w;
  const auto theta = rnd((int64_t)d * m), phi = rnd((int64_t)d * m), g = rnd((int64_t)d * m);
  std::vector<double> attn((size_t)m * m), out((size_t)d * m);
  REQUIRE(kernels::attention_forward(theta.data(), phi.data(), g.data(), 1, d, m, attn.data(),
                                     out.data()));
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < m; ++j) s += attn[(size_t)i * m + j];
    CHECK(std::fabs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("nonlocal: permuting positions permutes the output identically") {
  const int d = 4, di = 2, h = 3, w = 4, m = h * w;
  NonLocalBlock block = random_block(d, di);
  const auto xv = rnd((int64_t)d * m);

  std::vector<int> perm(m);
  for (int i = 0; i < m; ++i) perm[(size_t)i] = i;
  for (int i = m; i > 1; --i) std::swap(perm[(size_t)(i - 1)], perm[(size_t)(g_rng() % i)]);

  std::vector<double> xp((size_t)d * m);
  for (int dd = 0; dd < d; ++dd) {
    for (int p = 0; p < m; ++p) xp[(size_t)dd * m + perm[(size_t)p]] = xv[(size_t)dd * m + p];
  }
  Tensor x = Tensor::constant({1, d, h, w}, xv);
  Tensor xq = Tensor::constant({1, d, h, w}, xp);
  const auto out = nonlocal_forward(x, block).values();
  const auto out_p = nonlocal_forward(xq, block).values();
  for (int dd = 0; dd < d; ++dd) {
    for (int p = 0; p < m; ++p) {
      CHECK(std::fabs(out_p[(size_t)dd * m + perm[(size_t)p]] - out[(size_t)dd * m + p]) <
            1e-12);
    }
  }
}

TEST_CASE("fusion head: one rate-1 branch equals the plain conv stack") {
  const int feat = 5, cc = 3, mid = 7, h = 6, w = 6;
  FusionBranch br;
  br.rate = 1;
  br.dilated_w = Tensor::variable({feat, feat, 3, 3}, rnd((int64_t)feat * feat * 9, -0.3, 0.3));
  br.dilated_b = Tensor::variable({feat}, rnd(feat, -0.1, 0.1));
  br.mid_w = Tensor::variable({mid, feat, 1, 1}, rnd((int64_t)mid * feat, -0.3, 0.3));
  br.mid_b = Tensor::variable({mid}, rnd(mid, -0.1, 0.1));
  br.out_w = Tensor::variable({cc, mid, 1, 1}, rnd((int64_t)cc * mid, -0.3, 0.3));
  br.out_b = Tensor::variable({cc}, rnd(cc, -0.1, 0.1));

  Tensor x = Tensor::constant({1, feat, h, w}, rnd((int64_t)feat * h * w));
  const auto fused = fusion_head_forward(x, {br}).values();

  Tensor manual = ad::relu(ad::add_channel_bias(ad::conv2d(x, br.dilated_w, 1, 1, 1), br.dilated_b));
  manual = ad::relu(ad::add_channel_bias(ad::conv2d(manual, br.mid_w), br.mid_b));
  manual = ad::add_channel_bias(ad::conv2d(manual, br.out_w), br.out_b);
  CHECK(fused == manual.values());
}

TEST_CASE("fusion head: zero weights give zero logits") {
  const int feat = 4, cc = 2;
  FusionBranch br;
  br.rate = 2;
  br.dilated_w = Tensor::zeros({feat, feat, 3, 3});
  br.dilated_b = Tensor::zeros({feat});
  br.mid_w = Tensor::zeros({3, feat, 1, 1});
  br.mid_b = Tensor::zeros({3});
  br.out_w = Tensor::zeros({cc, 3, 1, 1});
  br.out_b = Tensor::zeros({cc});
  Tensor x = Tensor::constant({1, feat, 4, 4}, rnd(feat * 16));
  const Tensor logits = fusion_head_forward(x, {br, br});
  for (double v : logits.values()) CHECK(v == 0.0);
}

TEST_CASE("fusion head: branches sum") {
  const int feat = 4, cc = 2, mid = 5;
  auto make_branch = [&](int rate) {
    FusionBranch br;
    br.rate = rate;
    br.dilated_w = Tensor::variable({feat, feat, 3, 3}, rnd((int64_t)feat * feat * 9, -0.3, 0.3));
    br.dilated_b = Tensor::variable({feat}, rnd(feat, -0.1, 0.1));
    br.mid_w = Tensor::variable({mid, feat, 1, 1}, rnd((int64_t)mid * feat, -0.3, 0.3));
    br.mid_b = Tensor::variable({mid}, rnd(mid, -0.1, 0.1));
    br.out_w = Tensor::variable({cc, mid, 1, 1}, rnd((int64_t)cc * mid, -0.3, 0.3));
    br.out_b = Tensor::variable({cc}, rnd(cc, -0.1, 0.1));
    return br;
  };
  const FusionBranch b1 = make_branch(1), b2 = make_branch(3);
  Tensor x = Tensor::constant({1, feat, 5, 5}, rnd(feat * 25));
  const auto both = fusion_head_forward(x, {b1, b2}).values();
  const auto first = fusion_head_forward(x, {b1}).values();
  const auto second = fusion_head_forward(x, {b2}).values();
  for (size_t e = 0; e < both.size(); ++e) {
    CHECK(both[e] == doctest::Approx(first[e] + second[e]).epsilon(1e-13));
  }
}

TEST_CASE("predict shape contract") {
  PredictorConfig cfg;
  cfg.widths = {4, 6, 6, 8};
  cfg.fusion_rates = {1, 2};
  cfg.input_size = 64;
  Model conn(cfg);
  conn.init_weights(3);
  Tensor x = Tensor::constant({1, 3, 64, 64}, rnd(3 * 64 * 64, 0.0, 1.0));
  CHECK(conn.forward(x).shape() == ad::Shape{1, 8, 64, 64});

  cfg.head = HeadKind::Segmentation;
  Model seg(cfg);
  seg.init_weights(3);
  CHECK(seg.forward(x).shape() == ad::Shape{1, 1, 64, 64});
}

TEST_CASE("predict pads and crops arbitrary sizes") {
  PredictorConfig cfg;
  cfg.widths = {4, 6, 6, 8};
  cfg.fusion_rates = {1};
  Model model(cfg);
  model.init_weights(4);
  Tensor x = Tensor::constant({1, 3, 65, 63}, rnd(3 * 65 * 63, 0.0, 1.0));
  CHECK(predict_logits(model, x).shape() == ad::Shape{1, 8, 65, 63});
}

TEST_CASE("prediction is deterministic") {
  PredictorConfig cfg;
  cfg.widths = {4, 6, 6, 8};
  cfg.fusion_rates = {1, 2};
  cfg.use_nonlocal = true;
  Model model(cfg);
  model.init_weights(9);
  const auto xv = rnd(3 * 16 * 16, 0.0, 1.0);
  Tensor x1 = Tensor::constant({1, 3, 16, 16}, xv);
  Tensor x2 = Tensor::constant({1, 3, 16, 16}, xv);
  CHECK(model.forward(x1).values() == model.forward(x2).values());
}

TEST_CASE("config json roundtrip and unknown-key rejection") {
  PredictorConfig cfg;
  cfg.head = HeadKind::Segmentation;
  cfg.pattern = PatternKind::N12;
  cfg.widths = {8, 12, 12, 16};
  cfg.use_nonlocal = true;
  cfg.fusion_rates = {6, 12, 18, 24};
  cfg.upsample = UpsampleKind::Bilinear;
  const PredictorConfig back = config_from_json(config_to_json(cfg));
  CHECK(back.head == cfg.head);
  CHECK(back.pattern == cfg.pattern);
  CHECK(back.widths == cfg.widths);
  CHECK(back.use_nonlocal == cfg.use_nonlocal);
  CHECK(back.fusion_rates == cfg.fusion_rates);
  CHECK(back.upsample == cfg.upsample);

  CHECK_THROWS_AS(config_from_json(R"({"head":"connectivity","bogus":1})"), DataError);
  CHECK_THROWS_AS(config_from_json(R"({"pattern":"n5"})"), DataError);
  CHECK_THROWS_AS(config_from_json(R"({"input_size":10})"), DataError);
}

TEST_CASE("checkpoints reload bit-identically and reject config mismatches") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "connseg_model_test";
  fs::create_directories(dir);
  const fs::path ckpt = dir / "w.cnw1";

  PredictorConfig cfg;
  cfg.widths = {4, 6, 6, 8};
  cfg.fusion_rates = {1, 2};
  Model model(cfg);
  model.init_weights(42);
  model.save(ckpt);

  Model reload(cfg);
  reload.load(ckpt);
  // values pass through f32 storage; saving again must be byte-identical
  const fs::path ckpt2 = dir / "w2.cnw1";
  reload.save(ckpt2);
  std::ifstream a(ckpt, std::ios::binary), b(ckpt2, std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(a)), {});
  const std::string bytes_b((std::istreambuf_iterator<char>(b)), {});
  CHECK(bytes_a == bytes_b);

  PredictorConfig other = cfg;
  other.widths = {4, 6, 6, 12};
  Model wrong(other);
  CHECK_THROWS_AS(wrong.load(ckpt), DataError);

  PredictorConfig seg = cfg;
  seg.head = HeadKind::Segmentation;
  Model seg_model(seg);
  CHECK_THROWS_AS(seg_model.load(ckpt), DataError);
  fs::remove_all(dir);
}
