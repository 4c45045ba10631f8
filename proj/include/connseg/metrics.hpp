#pragma once

#include <string>
#include <vector>

#include "connseg/codec.hpp"
#include "connseg/grid.hpp"

namespace connseg {

/// Weighted F-measure (1+b2)*P*R / (b2*P + R); 0 when the denominator is 0.
/// Rejects inputs outside [0,1].
double f_beta(double precision, double recall, double beta2 = 0.3);

struct PRPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

struct MaxFResult {
  double max_f = 0.0;
  double best_threshold = 0.0;
  std::vector<PRPoint> curve;
};

/// n uniform midpoints (i + 0.5)/n, all strictly inside (0,1).
std::vector<double> default_threshold_grid(int steps = 256);

/// Sweeps the grid, decoding the cube at each threshold (fixed k) and scoring
/// pixels against the ground truth.
MaxFResult max_f_measure(const ConnectivityCube& probabilities, const BinaryMask& gt,
                         const std::vector<double>& grid, int k = 1);
/// Same sweep for a continuous saliency map (pixel salient iff value > t).
MaxFResult max_f_measure(const std::vector<float>& saliency, int height, int width,
                         const BinaryMask& gt, const std::vector<double>& grid);

struct ImageEval {
  std::string id;
  double max_f = 0.0;
  double best_threshold = 0.0;
};

struct DatasetEval {
  int count = 0;
  double max_f = 0.0;           // from dataset-mean precision/recall per threshold
  double best_threshold = 0.0;
  double mean_image_max_f = 0.0;  // mean of per-image maxima, reported alongside
  std::vector<PRPoint> per_threshold;
  std::vector<ImageEval> per_image;
};

/// Accumulates per-image precision/recall at every grid threshold. Dataset
/// precision and recall are averaged over images per threshold and F is
/// computed from the averages; per-image F curves are kept as well.
class DatasetEvaluator {
 public:
  explicit DatasetEvaluator(std::vector<double> grid, int k = 1);

  void add_cube(const std::string& id, const ConnectivityCube& probabilities,
                const BinaryMask& gt);
  void add_map(const std::string& id, const std::vector<float>& saliency, int height,
               int width, const BinaryMask& gt);

  DatasetEval finish() const;

 private:
  void add_curve(const std::string& id, const std::vector<PRPoint>& curve);

  std::vector<double> grid_;
  int k_;
  int count_ = 0;
  std::vector<double> precision_sum_;
  std::vector<double> recall_sum_;
  std::vector<ImageEval> per_image_;
};

/// Predicted instances (mask + confidence) against ground-truth instances.
struct InstanceSet {
  std::vector<std::pair<BinaryMask, double>> predictions;
  std::vector<BinaryMask> ground_truth;
};

/// |A intersect B| / |A union B| over pixel sets; two empty masks give 0.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

/// Average precision at one IoU cutoff: predictions sorted by descending
/// confidence (ties by index), greedily matched to the unmatched ground-truth
/// instance of highest IoU >= threshold, AP = area under the all-point
/// interpolated precision/recall staircase.
double map_r(const InstanceSet& instances, double iou_threshold = 0.5);

}  // namespace connseg
