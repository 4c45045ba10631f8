#include "connseg/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "connseg/parallel.hpp"

namespace connseg {

double f_beta(double precision, double recall, double beta2) {
  if (precision < 0.0 || precision > 1.0 || recall < 0.0 || recall > 1.0) {
    throw std::invalid_argument("f_beta: precision/recall must lie in [0,1]");
  }
  const double denom = beta2 * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + beta2) * precision * recall / denom;
}

std::vector<double> default_threshold_grid(int steps) {
  if (steps < 1) throw std::invalid_argument("threshold grid needs >= 1 step");
  std::vector<double> grid((size_t)steps);
  for (int i = 0; i < steps; ++i) grid[(size_t)i] = (i + 0.5) / steps;
  return grid;
}

namespace {

PRPoint score_mask(const BinaryMask& pred, const BinaryMask& gt, double t) {
  int64_t tp = 0, pred_n = 0, gt_n = 0;
  for (size_t e = 0; e < pred.data.size(); ++e) {
    pred_n += pred.data[e];
    gt_n += gt.data[e];
    tp += pred.data[e] & gt.data[e];
  }
  PRPoint p;
  p.threshold = t;
  // An empty prediction is perfectly precise only against an empty truth.
  p.precision = pred_n > 0 ? (double)tp / pred_n : (gt_n == 0 ? 1.0 : 0.0);
  p.recall = gt_n > 0 ? (double)tp / gt_n : 1.0;
  p.f = f_beta(p.precision, p.recall);
  return p;
}

MaxFResult result_from_curve(std::vector<PRPoint> curve) {
  MaxFResult r;
  r.curve = std::move(curve);
  for (const PRPoint& p : r.curve) {
    if (p.f > r.max_f) {
      r.max_f = p.f;
      r.best_threshold = p.threshold;
    }
  }
  if (!r.curve.empty() && r.max_f == 0.0) r.best_threshold = r.curve.front().threshold;
  return r;
}

}  // namespace

MaxFResult max_f_measure(const ConnectivityCube& probabilities, const BinaryMask& gt,
                         const std::vector<double>& grid, int k) {
  if (probabilities.height != gt.height || probabilities.width != gt.width) {
    throw std::invalid_argument("max_f_measure: cube/mask shape mismatch");
  }
  std::vector<PRPoint> curve(grid.size());
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < (int64_t)grid.size(); ++i) {
    const BinaryMask pred = decode(probabilities, grid[(size_t)i], k);
    curve[(size_t)i] = score_mask(pred, gt, grid[(size_t)i]);
  }
  return result_from_curve(std::move(curve));
}

MaxFResult max_f_measure(const std::vector<float>& saliency, int height, int width,
                         const BinaryMask& gt, const std::vector<double>& grid) {
  if (height != gt.height || width != gt.width ||
      saliency.size() != (size_t)height * width) {
    throw std::invalid_argument("max_f_measure: map/mask shape mismatch");
  }
  std::vector<PRPoint> curve(grid.size());
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < (int64_t)grid.size(); ++i) {
    const double t = grid[(size_t)i];
    BinaryMask pred(height, width);
    for (size_t e = 0; e < saliency.size(); ++e) pred.data[e] = saliency[e] > t ? 1 : 0;
    curve[(size_t)i] = score_mask(pred, gt, t);
  }
  return result_from_curve(std::move(curve));
}

DatasetEvaluator::DatasetEvaluator(std::vector<double> grid, int k)
    : grid_(std::move(grid)), k_(k) {
  if (grid_.empty()) throw std::invalid_argument("evaluator needs a nonempty grid");
  precision_sum_.assign(grid_.size(), 0.0);
  recall_sum_.assign(grid_.size(), 0.0);
}

void DatasetEvaluator::add_curve(const std::string& id, const std::vector<PRPoint>& curve) {
  double best_f = 0.0, best_t = curve.front().threshold;
  for (size_t i = 0; i < curve.size(); ++i) {
    precision_sum_[i] += curve[i].precision;
    recall_sum_[i] += curve[i].recall;
    if (curve[i].f > best_f) {
      best_f = curve[i].f;
      best_t = curve[i].threshold;
    }
  }
  per_image_.push_back({id, best_f, best_t});
  ++count_;
}

void DatasetEvaluator::add_cube(const std::string& id, const ConnectivityCube& probabilities,
                                const BinaryMask& gt) {
  add_curve(id, max_f_measure(probabilities, gt, grid_, k_).curve);
}

void DatasetEvaluator::add_map(const std::string& id, const std::vector<float>& saliency,
                               int height, int width, const BinaryMask& gt) {
  add_curve(id, max_f_measure(saliency, height, width, gt, grid_).curve);
}

DatasetEval DatasetEvaluator::finish() const {
  if (count_ == 0) throw std::logic_error("evaluator has no images");
  DatasetEval out;
  out.count = count_;
  out.per_image = per_image_;
  out.per_threshold.resize(grid_.size());
  out.best_threshold = grid_.front();
  for (size_t i = 0; i < grid_.size(); ++i) {
    PRPoint& p = out.per_threshold[i];
    p.threshold = grid_[i];
    p.precision = precision_sum_[i] / count_;
    p.recall = recall_sum_[i] / count_;
    p.f = f_beta(p.precision, p.recall);
    if (p.f > out.max_f) {
      out.max_f = p.f;
      out.best_threshold = p.threshold;
    }
  }
  double acc = 0.0;
  for (const ImageEval& e : per_image_) acc += e.max_f;
  out.mean_image_max_f = acc / count_;
  return out;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw std::invalid_argument("mask_iou: shape mismatch");
  }
  int64_t inter = 0, uni = 0;
  for (size_t e = 0; e < a.data.size(); ++e) {
    inter += a.data[e] & b.data[e];
    uni += a.data[e] | b.data[e];
  }
  return uni == 0 ? 0.0 : (double)inter / uni;
}

double map_r(const InstanceSet& instances, double iou_threshold) {
  const size_t n_gt = instances.ground_truth.size();
  const size_t n_pred = instances.predictions.size();
  if (n_gt == 0) return n_pred == 0 ? 1.0 : 0.0;
  if (n_pred == 0) return 0.0;

  std::vector<size_t> order(n_pred);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return instances.predictions[a].second > instances.predictions[b].second;
  });

  std::vector<bool> matched(n_gt, false);
  std::vector<bool> is_tp(n_pred, false);
  for (size_t rank = 0; rank < n_pred; ++rank) {
    const BinaryMask& pred = instances.predictions[order[rank]].first;
    double best_iou = 0.0;
    int best_gt = -1;
    for (size_t g = 0; g < n_gt; ++g) {
      if (matched[g]) continue;
      const double iou = mask_iou(pred, instances.ground_truth[g]);
      if (iou > best_iou) {
        best_iou = iou;
        best_gt = (int)g;
      }
    }
    if (best_gt >= 0 && best_iou >= iou_threshold) {
      matched[(size_t)best_gt] = true;
      is_tp[rank] = true;
    }
  }

  // All-point interpolated area under the precision/recall staircase.
  std::vector<double> precision(n_pred), recall(n_pred);
  int64_t tp = 0;
  for (size_t i = 0; i < n_pred; ++i) {
    if (is_tp[i]) ++tp;
    precision[i] = (double)tp / (double)(i + 1);
    recall[i] = (double)tp / (double)n_gt;
  }
  for (size_t i = n_pred - 1; i > 0; --i) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (size_t i = 0; i < n_pred; ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

}  // namespace connseg
