#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "connseg/image.hpp"
#include "connseg/model.hpp"
#include "connseg/tensor.hpp"

namespace connseg {

struct AugmentConfig {
  double flip_prob = 0.5;
  double scale_min = 0.75;
  double scale_max = 1.25;
};

/// Declarative optimization description; JSON keys mirror the field names and
/// unknown keys are rejected.
struct TrainRun {
  uint64_t seed = 1;
  int epochs = 10;
  int batch_size = 4;
  double lr_initial = 1e-3;
  double lr_final = 1e-5;
  std::string decay = "exponential";
  int train_size = 64;
  int val_interval = 50;
  int freeze_backbone_steps = 0;
  AugmentConfig augment;

  void validate() const;
};

std::string trainrun_to_json(const TrainRun& run);
TrainRun trainrun_from_json(const std::string& json_text);

struct AugmentParams {
  bool flip = false;
  double scale = 1.0;
  int crop_top = 0;
  int crop_left = 0;
};

/// Draws flip/scale/crop in a fixed order so the random stream is stable.
AugmentParams draw_augment_params(std::mt19937_64& rng, const AugmentConfig& cfg, int height,
                                  int width, int out_size);

/// Flip, rescale (bilinear image / nearest mask), pad bottom-right to at
/// least out_size, then crop. The connectivity target is encoded afterwards,
/// so no channel permutation is needed at train time.
std::pair<Image, BinaryMask> apply_augment(const Image& image, const BinaryMask& mask,
                                           const AugmentParams& params, int out_size);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  int64_t step_count = 0;
};

/// One Adam update over params (reads .grad(), writes values in place).
/// Rejects non-finite gradients.
void adam_step(const std::vector<ad::Tensor>& params, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

/// Exponential interpolation from lr_initial to lr_final across total_steps.
double learning_rate_at(const TrainRun& run, int step, int total_steps);

struct Sample {
  std::string id;
  Image image;
  BinaryMask mask;
};

struct TrainResult {
  std::vector<double> loss_history;
  double best_val_max_f = 0.0;
  int best_step = -1;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  std::filesystem::path metrics_csv;
};

/// Full optimization loop: seeded shuffling, augmentation, ground-truth
/// encoding, BCE over the cube (or the mask plane for the segmentation head),
/// Adam with the decayed schedule, periodic validation max-F, checkpointing.
/// Aborts with a diagnostic if the loss turns non-finite.
TrainResult train(Model& model, const std::vector<Sample>& dataset, const TrainRun& run,
                  const std::filesystem::path& out_dir,
                  const std::vector<Sample>* validation = nullptr);

}  // namespace connseg
