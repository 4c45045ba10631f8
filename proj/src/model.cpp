#include "connseg/model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "connseg/checkpoint.hpp"
#include "connseg/errors.hpp"

namespace connseg {

using ad::Tensor;
using nlohmann::json;

int PredictorConfig::out_channels() const {
  if (head == HeadKind::Segmentation) return 1;
  return ConnectivityPattern::get(pattern).channel_count();
}

int PredictorConfig::mid_channels() const {
  return fusion_mid_channels > 0 ? fusion_mid_channels : 4 * out_channels();
}

void PredictorConfig::validate() const {
  for (int wdt : widths) {
    if (wdt < 1) throw DataError("config: backbone widths must be positive");
  }
  if (nonlocal_depth < 0 || nonlocal_depth > 3) {
    throw DataError("config: nonlocal_depth must lie in [0,3]");
  }
  if (fusion_rates.empty() || fusion_rates.size() > 9) {
    throw DataError("config: fusion_rates needs 1..9 entries");
  }
  for (int r : fusion_rates) {
    if (r < 1) throw DataError("config: fusion rates must be >= 1");
  }
  if (input_size < 8 || input_size % 4 != 0) {
    throw DataError("config: input_size must be a multiple of 4, >= 8");
  }
  if (fusion_mid_channels < 0) throw DataError("config: fusion_mid_channels must be >= 0");
}

namespace {

const char* head_name(HeadKind h) {
  return h == HeadKind::Connectivity ? "connectivity" : "segmentation";
}

const char* upsample_name(UpsampleKind u) {
  return u == UpsampleKind::TransposedConv ? "transposed_conv" : "bilinear";
}

void reject_unknown_keys(const json& j, const std::vector<std::string>& known,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : known) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw DataError("unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace

std::string config_to_json(const PredictorConfig& cfg) {
  json j;
  j["head"] = head_name(cfg.head);
  j["pattern"] = ConnectivityPattern::get(cfg.pattern).name();
  j["widths"] = cfg.widths;
  j["use_nonlocal"] = cfg.use_nonlocal;
  j["nonlocal_depth"] = cfg.nonlocal_depth;
  j["fusion_rates"] = cfg.fusion_rates;
  j["fusion_mid_channels"] = cfg.fusion_mid_channels;
  j["upsample"] = upsample_name(cfg.upsample);
  j["input_size"] = cfg.input_size;
  return j.dump(2);
}

PredictorConfig config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw DataError(std::string("config parse error: ") + e.what());
  }
  if (!j.is_object()) throw DataError("config must be a JSON object");
  reject_unknown_keys(j,
                      {"head", "pattern", "widths", "use_nonlocal", "nonlocal_depth",
                       "fusion_rates", "fusion_mid_channels", "upsample", "input_size"},
                      "model config");
  PredictorConfig cfg;
  try {
    if (j.contains("head")) {
      const std::string h = j["head"];
      if (h == "connectivity") {
        cfg.head = HeadKind::Connectivity;
      } else if (h == "segmentation") {
        cfg.head = HeadKind::Segmentation;
      } else {
        throw DataError("config: head must be connectivity or segmentation");
      }
    }
    if (j.contains("pattern")) {
      auto p = ConnectivityPattern::parse(j["pattern"].get<std::string>());
      if (!p) throw DataError("config: pattern must be n4, n8 or n12");
      cfg.pattern = *p;
    }
    if (j.contains("widths")) {
      auto v = j["widths"].get<std::vector<int>>();
      if (v.size() != 4) throw DataError("config: widths needs exactly 4 entries");
      std::copy(v.begin(), v.end(), cfg.widths.begin());
    }
    if (j.contains("use_nonlocal")) cfg.use_nonlocal = j["use_nonlocal"].get<bool>();
    if (j.contains("nonlocal_depth")) cfg.nonlocal_depth = j["nonlocal_depth"].get<int>();
    if (j.contains("fusion_rates")) cfg.fusion_rates = j["fusion_rates"].get<std::vector<int>>();
    if (j.contains("fusion_mid_channels")) {
      cfg.fusion_mid_channels = j["fusion_mid_channels"].get<int>();
    }
    if (j.contains("upsample")) {
      const std::string u = j["upsample"];
      if (u == "transposed_conv") {
        cfg.upsample = UpsampleKind::TransposedConv;
      } else if (u == "bilinear") {
        cfg.upsample = UpsampleKind::Bilinear;
      } else {
        throw DataError("config: upsample must be transposed_conv or bilinear");
      }
    }
    if (j.contains("input_size")) cfg.input_size = j["input_size"].get<int>();
  } catch (const json::exception& e) {
    throw DataError(std::string("config type error: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

PredictorConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

Tensor nonlocal_forward(const Tensor& x, const NonLocalBlock& block) {
  Tensor theta = ad::conv2d(x, block.theta);
  Tensor phi = ad::conv2d(x, block.phi);
  Tensor g = ad::conv2d(x, block.g);
  Tensor y = ad::attention(theta, phi, g);
  return ad::add(ad::conv2d(y, block.z), x);
}

Tensor fusion_head_forward(const Tensor& features, const std::vector<FusionBranch>& branches) {
  Tensor sum;
  for (const FusionBranch& br : branches) {
    Tensor t = ad::relu(ad::add_channel_bias(
        ad::conv2d(features, br.dilated_w, 1, br.rate, br.rate), br.dilated_b));
    t = ad::relu(ad::add_channel_bias(ad::conv2d(t, br.mid_w), br.mid_b));
    t = ad::add_channel_bias(ad::conv2d(t, br.out_w), br.out_b);
    sum = sum.defined() ? ad::add(sum, t) : t;
  }
  return sum;
}

Model::Model(PredictorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  init_weights(0);
}

namespace {

// Deterministic normal draws (Box-Muller over the raw 64-bit stream).
class NormalSource {
 public:
  explicit NormalSource(uint64_t seed) : rng_(seed) {}
  double next(double stddev) {
    if (has_spare_) {
      has_spare_ = false;
      return spare_ * stddev;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2) * stddev;
  }

 private:
  double uniform() { return (rng_() >> 11) * 0x1.0p-53; }
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::vector<double> he_normal(NormalSource& src, int64_t count, int fan_in) {
  const double stddev = std::sqrt(2.0 / fan_in);
  std::vector<double> v((size_t)count);
  for (auto& x : v) x = src.next(stddev);
  return v;
}

// Classic bilinear-interpolation deconvolution filter; identity mapping
// across channels.
std::vector<double> bilinear_tconv_kernel(int channels, int k) {
  const double factor = (k + 1) / 2;
  const double center = (k % 2 == 1) ? factor - 1.0 : factor - 0.5;
  std::vector<double> w((size_t)channels * channels * k * k, 0.0);
  for (int c = 0; c < channels; ++c) {
    for (int u = 0; u < k; ++u) {
      for (int v = 0; v < k; ++v) {
        const double val = (1.0 - std::fabs(u - center) / factor) *
                           (1.0 - std::fabs(v - center) / factor);
        w[(((size_t)c * channels + c) * k + u) * k + v] = val;
      }
    }
  }
  return w;
}

}  // namespace

void Model::init_weights(uint64_t seed) {
  params_.clear();
  NormalSource src(seed);
  const auto& widths = cfg_.widths;
  const int cout = cfg_.out_channels();
  const int mid = cfg_.mid_channels();

  auto add_param = [&](const std::string& name, ad::Shape shape, std::vector<double> vals) {
    params_.emplace(name, Tensor::variable(std::move(shape), std::move(vals)));
  };

  // Backbone: stride pattern 1,2,1,2; stride-2 stages use 4x4 kernels so the
  // output size stays integral on even inputs.
  int in_ch = 3;
  for (int s = 0; s < 4; ++s) {
    const bool strided = (s == 1 || s == 3);
    const int k = strided ? 4 : 3;
    const int out_ch = widths[(size_t)s];
    const std::string base = "backbone.block" + std::to_string(s);
    add_param(base + ".weight", {out_ch, in_ch, k, k},
              he_normal(src, (int64_t)out_ch * in_ch * k * k, in_ch * k * k));
    add_param(base + ".bias", {out_ch}, std::vector<double>((size_t)out_ch, 0.0));
    in_ch = out_ch;
  }

  if (cfg_.use_nonlocal) {
    // The block sees the previous stage's width (or the raw image at depth 0).
    const int dim = cfg_.nonlocal_depth == 0 ? 3 : widths[(size_t)cfg_.nonlocal_depth - 1];
    const int dinner = std::max(1, dim / 2);
    add_param("nonlocal.theta.weight", {dinner, dim, 1, 1},
              he_normal(src, (int64_t)dinner * dim, dim));
    add_param("nonlocal.phi.weight", {dinner, dim, 1, 1},
              he_normal(src, (int64_t)dinner * dim, dim));
    add_param("nonlocal.g.weight", {dinner, dim, 1, 1},
              he_normal(src, (int64_t)dinner * dim, dim));
    // Zero-initialized projection keeps the residual an identity at step 0.
    add_param("nonlocal.z.weight", {dim, dinner, 1, 1},
              std::vector<double>((size_t)dim * dinner, 0.0));
  }

  const int feat = widths[3];
  for (size_t b = 0; b < cfg_.fusion_rates.size(); ++b) {
    const std::string base = "fusion.branch" + std::to_string(b);
    add_param(base + ".dilated.weight", {feat, feat, 3, 3},
              he_normal(src, (int64_t)feat * feat * 9, feat * 9));
    add_param(base + ".dilated.bias", {feat}, std::vector<double>((size_t)feat, 0.0));
    add_param(base + ".mid.weight", {mid, feat, 1, 1}, he_normal(src, (int64_t)mid * feat, feat));
    add_param(base + ".mid.bias", {mid}, std::vector<double>((size_t)mid, 0.0));
    add_param(base + ".out.weight", {cout, mid, 1, 1}, he_normal(src, (int64_t)cout * mid, mid));
    add_param(base + ".out.bias", {cout}, std::vector<double>((size_t)cout, 0.0));
  }

  if (cfg_.upsample == UpsampleKind::TransposedConv) {
    add_param("upsample.tconv0.weight", {cout, cout, 4, 4}, bilinear_tconv_kernel(cout, 4));
    add_param("upsample.tconv1.weight", {cout, cout, 4, 4}, bilinear_tconv_kernel(cout, 4));
  }
}

NonLocalBlock Model::nonlocal_block() const {
  return NonLocalBlock{parameter("nonlocal.theta.weight"), parameter("nonlocal.phi.weight"),
                       parameter("nonlocal.g.weight"), parameter("nonlocal.z.weight")};
}

std::vector<FusionBranch> Model::fusion_branches() const {
  std::vector<FusionBranch> branches;
  for (size_t b = 0; b < cfg_.fusion_rates.size(); ++b) {
    const std::string base = "fusion.branch" + std::to_string(b);
    FusionBranch br;
    br.rate = cfg_.fusion_rates[b];
    br.dilated_w = parameter(base + ".dilated.weight");
    br.dilated_b = parameter(base + ".dilated.bias");
    br.mid_w = parameter(base + ".mid.weight");
    br.mid_b = parameter(base + ".mid.bias");
    br.out_w = parameter(base + ".out.weight");
    br.out_b = parameter(base + ".out.bias");
    branches.push_back(std::move(br));
  }
  return branches;
}

Tensor Model::forward(const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != 3) {
    throw std::invalid_argument("forward: images must be [N,3,H,W]");
  }
  const int h = images.dim(2), w = images.dim(3);
  if (h % 4 != 0 || w % 4 != 0) {
    throw std::invalid_argument("forward: spatial size must be a multiple of 4");
  }

  Tensor x = images;
  for (int s = 0; s < 4; ++s) {
    if (cfg_.use_nonlocal && cfg_.nonlocal_depth == s) {
      x = nonlocal_forward(x, nonlocal_block());
    }
    const bool strided = (s == 1 || s == 3);
    const std::string base = "backbone.block" + std::to_string(s);
    x = ad::conv2d(x, parameter(base + ".weight"), strided ? 2 : 1, 1);
    x = ad::relu(ad::add_channel_bias(x, parameter(base + ".bias")));
  }

  Tensor logits = fusion_head_forward(x, fusion_branches());

  if (cfg_.upsample == UpsampleKind::TransposedConv) {
    logits = ad::transposed_conv2d(logits, parameter("upsample.tconv0.weight"), 2, 1);
    logits = ad::transposed_conv2d(logits, parameter("upsample.tconv1.weight"), 2, 1);
  } else {
    logits = ad::bilinear_resize(logits, h, w);
  }
  return logits;
}

std::vector<std::pair<std::string, Tensor>> Model::parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.emplace_back(name, t);
  return out;
}

Tensor Model::parameter(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::logic_error("unknown parameter: " + name);
  return it->second;
}

void Model::save(const std::filesystem::path& path) const {
  std::vector<CheckpointTensor> tensors;
  for (const auto& [name, t] : params_) {
    CheckpointTensor ct;
    ct.name = name;
    for (int d : t.shape()) ct.shape.push_back((uint32_t)d);
    ct.values.reserve(t.values().size());
    for (double v : t.values()) ct.values.push_back((float)v);
    tensors.push_back(std::move(ct));
  }
  save_checkpoint(path, tensors);
}

void Model::load(const std::filesystem::path& path) {
  const auto tensors = load_checkpoint(path);
  if (tensors.size() != params_.size()) {
    throw DataError("checkpoint/config mismatch: expected " + std::to_string(params_.size()) +
                    " tensors, file has " + std::to_string(tensors.size()));
  }
  for (const auto& ct : tensors) {
    auto it = params_.find(ct.name);
    if (it == params_.end()) {
      throw DataError("checkpoint/config mismatch: unexpected tensor '" + ct.name + "'");
    }
    Tensor t = it->second;
    const auto& shape = t.shape();
    if (shape.size() != ct.shape.size()) {
      throw DataError("checkpoint/config mismatch: rank of '" + ct.name + "'");
    }
    for (size_t i = 0; i < shape.size(); ++i) {
      if ((uint32_t)shape[i] != ct.shape[i]) {
        throw DataError("checkpoint/config mismatch: shape of '" + ct.name + "'");
      }
    }
    auto& vals = t.mutable_values();
    for (size_t e = 0; e < vals.size(); ++e) vals[e] = ct.values[e];
  }
}

Tensor predict_logits(const Model& model, const Tensor& images) {
  const int h = images.dim(2), w = images.dim(3);
  const int hp = (h + 3) / 4 * 4;
  const int wp = (w + 3) / 4 * 4;
  Tensor x = images;
  if (hp != h || wp != w) x = ad::zero_pad2d(x, hp - h, wp - w);
  Tensor logits = model.forward(x);
  if (hp != h || wp != w) logits = ad::crop2d(logits, h, w);
  return logits;
}

Tensor tensor_from_images(const std::vector<Image>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty image batch");
  const int c = batch[0].channels, h = batch[0].height, w = batch[0].width;
  std::vector<double> vals;
  vals.reserve((size_t)batch.size() * c * h * w);
  for (const Image& img : batch) {
    if (img.channels != c || img.height != h || img.width != w) {
      throw std::invalid_argument("image batch shapes differ");
    }
    for (float v : img.data) vals.push_back(v);
  }
  return Tensor::constant({(int)batch.size(), c, h, w}, std::move(vals));
}

ConnectivityCube predict_cube(const Model& model, const Image& image) {
  if (model.config().head != HeadKind::Connectivity) {
    throw std::logic_error("predict_cube requires a connectivity head");
  }
  Tensor logits = predict_logits(model, tensor_from_images({image}));
  const int c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  ConnectivityCube cube(h, w, model.config().pattern);
  const auto& lv = logits.values();
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const double z = lv[((size_t)ch * h + i) * w + j];
        const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        cube.set(i, j, ch, (float)p);
      }
    }
  }
  return cube;
}

std::vector<float> predict_map(const Model& model, const Image& image) {
  if (model.config().head != HeadKind::Segmentation) {
    throw std::logic_error("predict_map requires a segmentation head");
  }
  Tensor logits = predict_logits(model, tensor_from_images({image}));
  const int h = logits.dim(2), w = logits.dim(3);
  std::vector<float> map((size_t)h * w);
  const auto& lv = logits.values();
  for (size_t e = 0; e < map.size(); ++e) {
    const double z = lv[e];
    map[e] = (float)(z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)));
  }
  return map;
}

}  // namespace connseg
