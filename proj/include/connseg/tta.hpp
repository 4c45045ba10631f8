#pragma once

#include <functional>
#include <vector>

#include "connseg/codec.hpp"
#include "connseg/image.hpp"
#include "connseg/model.hpp"

namespace connseg {

/// Test-time fusion plan: per-scale predictions of the original and the
/// horizontally flipped image, realigned and averaged before decoding.
struct FusionPlan {
  std::vector<double> scales = {0.5, 0.75, 1.0, 1.25, 1.5};
  bool use_flip = true;
  double threshold = 0.5;
  int min_count = 1;

  void validate() const;
};

std::string plan_to_json(const FusionPlan& plan);
FusionPlan plan_from_json(const std::string& json_text);
FusionPlan load_plan_file(const std::filesystem::path& path);

/// Flips every channel slice horizontally and applies the pattern's hflip
/// channel permutation, mapping a flipped-image prediction back to the
/// original geometry. Involution.
ConnectivityCube unflip_cube(const ConnectivityCube& cube);

/// Probability-cube predictor at the size of the given image.
using CubePredictor = std::function<ConnectivityCube(const Image&)>;

CubePredictor model_predictor(const Model& model);

/// Averaged cube over all plan predictions, in the canonical order: scales
/// ascending, the original before the flipped variant at each scale.
ConnectivityCube fused_predict_cube(const Image& image, const CubePredictor& predict,
                                    const FusionPlan& plan);

/// fused_predict_cube followed by a single decode.
BinaryMask fused_predict(const Image& image, const CubePredictor& predict,
                         const FusionPlan& plan);

/// Per-channel bilinear resize of cube probabilities.
ConnectivityCube resize_cube(const ConnectivityCube& cube, int out_h, int out_w);

}  // namespace connseg
