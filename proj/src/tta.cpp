#include "connseg/tta.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "connseg/errors.hpp"
#include "connseg/kernels.hpp"

namespace connseg {

using nlohmann::json;

void FusionPlan::validate() const {
  if (scales.empty()) throw DataError("fusion plan: scales must be nonempty");
  for (double s : scales) {
    if (!(s > 0.0)) throw DataError("fusion plan: scales must be > 0");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw DataError("fusion plan: threshold must lie in (0,1)");
  }
  if (min_count < 1) throw DataError("fusion plan: min_count must be >= 1");
}

std::string plan_to_json(const FusionPlan& plan) {
  json j;
  j["scales"] = plan.scales;
  j["use_flip"] = plan.use_flip;
  j["threshold"] = plan.threshold;
  j["min_count"] = plan.min_count;
  return j.dump(2);
}

FusionPlan plan_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw DataError(std::string("fusion plan parse error: ") + e.what());
  }
  if (!j.is_object()) throw DataError("fusion plan must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "scales" && it.key() != "use_flip" && it.key() != "threshold" &&
        it.key() != "min_count") {
      throw DataError("unknown key '" + it.key() + "' in fusion plan");
    }
  }
  FusionPlan plan;
  try {
    if (j.contains("scales")) plan.scales = j["scales"].get<std::vector<double>>();
    if (j.contains("use_flip")) plan.use_flip = j["use_flip"].get<bool>();
    if (j.contains("threshold")) plan.threshold = j["threshold"].get<double>();
    if (j.contains("min_count")) plan.min_count = j["min_count"].get<int>();
  } catch (const json::exception& e) {
    throw DataError(std::string("fusion plan type error: ") + e.what());
  }
  plan.validate();
  return plan;
}

FusionPlan load_plan_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open fusion plan: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return plan_from_json(ss.str());
}

ConnectivityCube unflip_cube(const ConnectivityCube& cube) {
  const auto& pat = ConnectivityPattern::get(cube.pattern);
  const auto& perm = pat.hflip_permutation();
  ConnectivityCube out(cube.height, cube.width, cube.pattern);
  for (int i = 0; i < cube.height; ++i) {
    for (int j = 0; j < cube.width; ++j) {
      for (int c = 0; c < cube.channels; ++c) {
        out.set(i, j, perm[(size_t)c], cube.at(i, cube.width - 1 - j, c));
      }
    }
  }
  return out;
}

ConnectivityCube resize_cube(const ConnectivityCube& cube, int out_h, int out_w) {
  if (out_h == cube.height && out_w == cube.width) return cube;
  const int c = cube.channels;
  // HWC -> planar, resize each channel plane, back to HWC.
  std::vector<float> planes((size_t)c * cube.height * cube.width);
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < cube.height; ++i) {
      for (int j = 0; j < cube.width; ++j) {
        planes[((size_t)ch * cube.height + i) * cube.width + j] = cube.at(i, j, ch);
      }
    }
  }
  std::vector<float> resized((size_t)c * out_h * out_w);
  kernels::bilinear_forward(planes.data(), 1, c, cube.height, cube.width, resized.data(), out_h,
                            out_w);
  ConnectivityCube out(out_h, out_w, cube.pattern);
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < out_h; ++i) {
      for (int j = 0; j < out_w; ++j) {
        out.set(i, j, ch, resized[((size_t)ch * out_h + i) * out_w + j]);
      }
    }
  }
  return out;
}

CubePredictor model_predictor(const Model& model) {
  const Model* m = &model;
  return [m](const Image& img) { return predict_cube(*m, img); };
}

ConnectivityCube fused_predict_cube(const Image& image, const CubePredictor& predict,
                                    const FusionPlan& plan) {
  plan.validate();
  std::vector<double> scales = plan.scales;
  std::sort(scales.begin(), scales.end());

  const int h = image.height, w = image.width;
  std::vector<ConnectivityCube> cubes;
  cubes.reserve(scales.size() * (plan.use_flip ? 2 : 1));
  for (double s : scales) {
    const int sh = std::max(1, (int)std::lround(h * s));
    const int sw = std::max(1, (int)std::lround(w * s));
    const Image scaled = (sh == h && sw == w) ? image : bilinear_resize(image, sh, sw);
    cubes.push_back(resize_cube(predict(scaled), h, w));
    if (plan.use_flip) {
      cubes.push_back(resize_cube(unflip_cube(predict(hflip(scaled))), h, w));
    }
  }
  return fuse_cubes(cubes);
}

BinaryMask fused_predict(const Image& image, const CubePredictor& predict,
                         const FusionPlan& plan) {
  return decode(fused_predict_cube(image, predict, plan), plan.threshold, plan.min_count);
}

}  // namespace connseg
