#pragma once

#include <string>
#include <vector>

#include "connseg/model.hpp"

namespace connseg {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double worst() const;
  bool all_below(double tolerance = 1e-5) const;
  void append(const GradCheckReport& other);
};

/// Central-difference verification of every differentiable operation on
/// random small inputs (double precision).
GradCheckReport run_op_gradchecks(uint64_t seed = 0);

/// Full-network verification on a 3x8x8 input, with and without the
/// non-local block, through the training objective.
GradCheckReport run_model_gradchecks(PredictorConfig cfg, uint64_t seed = 0);

/// Small-width configuration used by default so the full sweep stays fast.
PredictorConfig default_gradcheck_config();

}  // namespace connseg
