#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "connseg/codec.hpp"
#include "connseg/grid.hpp"
#include "connseg/image.hpp"
#include "connseg/ops.hpp"
#include "connseg/tensor.hpp"

namespace connseg {

enum class HeadKind { Connectivity, Segmentation };
enum class UpsampleKind { TransposedConv, Bilinear };

/// Declarative model description. Serialized as JSON with exactly these
/// fields; unknown keys are rejected.
struct PredictorConfig {
  HeadKind head = HeadKind::Connectivity;
  PatternKind pattern = PatternKind::N8;
  std::array<int, 4> widths = {16, 32, 32, 64};
  bool use_nonlocal = false;
  int nonlocal_depth = 3;  // block index the non-local sits in front of
  std::vector<int> fusion_rates = {1, 2, 4, 6};
  int fusion_mid_channels = 0;  // 0 = 4 * out_channels()
  UpsampleKind upsample = UpsampleKind::TransposedConv;
  int input_size = 64;

  int out_channels() const;
  int mid_channels() const;
  void validate() const;
};

std::string config_to_json(const PredictorConfig& cfg);
PredictorConfig config_from_json(const std::string& json_text);
PredictorConfig load_config_file(const std::filesystem::path& path);

/// The learned 1x1 embeddings of one non-local block. theta/phi/g map
/// d -> d_inner, z maps d_inner -> d; the block output keeps the input shape.
struct NonLocalBlock {
  ad::Tensor theta;  // [d_inner, d, 1, 1]
  ad::Tensor phi;
  ad::Tensor g;
  ad::Tensor z;  // [d, d_inner, 1, 1]
};

/// z_i = W_z * sum_j softmax_j(theta(x_i).phi(x_j)) g(x_j) + x_i
ad::Tensor nonlocal_forward(const ad::Tensor& x, const NonLocalBlock& block);

struct FusionBranch {
  int rate = 1;
  ad::Tensor dilated_w, dilated_b;  // 3x3, dilation = rate, same padding
  ad::Tensor mid_w, mid_b;          // 1x1 reduce to mid width
  ad::Tensor out_w, out_b;          // 1x1 reduce to head channels
};

/// Parallel dilated branches, each reduced by two 1x1 convolutions, summed.
ad::Tensor fusion_head_forward(const ad::Tensor& features,
                               const std::vector<FusionBranch>& branches);

/// Miniature relation-aware predictor: strided conv backbone (x4 downsample),
/// optional non-local block, multi-dilation fusion head, learned upsampling
/// back to the input resolution. Emits raw logits; callers apply the sigmoid.
class Model {
 public:
  explicit Model(PredictorConfig cfg);

  const PredictorConfig& config() const { return cfg_; }

  void init_weights(uint64_t seed);

  /// Logits for [N,3,H,W] inputs with H, W multiples of 4.
  ad::Tensor forward(const ad::Tensor& images) const;

  /// Named parameters in deterministic (name-sorted) order.
  std::vector<std::pair<std::string, ad::Tensor>> parameters() const;
  ad::Tensor parameter(const std::string& name) const;

  void save(const std::filesystem::path& path) const;
  /// Rejects checkpoints whose tensor names or shapes do not match cfg.
  void load(const std::filesystem::path& path);

 private:
  PredictorConfig cfg_;
  std::map<std::string, ad::Tensor> params_;

  NonLocalBlock nonlocal_block() const;
  std::vector<FusionBranch> fusion_branches() const;
};

/// Full-size prediction for arbitrary input sizes: pads to a multiple of 4,
/// runs the network, crops back. Output is [N,C,H,W] logits.
ad::Tensor predict_logits(const Model& model, const ad::Tensor& images);

/// Sigmoid probabilities of one image as a connectivity cube.
ConnectivityCube predict_cube(const Model& model, const Image& image);

/// Sigmoid probabilities of one image as a flat H*W saliency map
/// (segmentation head).
std::vector<float> predict_map(const Model& model, const Image& image);

ad::Tensor tensor_from_images(const std::vector<Image>& batch);

}  // namespace connseg
