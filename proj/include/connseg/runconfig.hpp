#pragma once

#include <filesystem>
#include <string>

#include "connseg/model.hpp"
#include "connseg/train.hpp"
#include "connseg/tta.hpp"

namespace connseg {

struct MetricOptions {
  int grid_steps = 256;
  int k = 1;

  void validate() const;
};

/// Top-level JSON configuration: {"model": ..., "train": ..., "fusion": ...,
/// "metrics": ...}, every section optional, unknown keys rejected. CLI flags
/// override file values.
struct RunConfig {
  PredictorConfig model;
  TrainRun train;
  FusionPlan fusion;
  MetricOptions metrics;
};

std::string runconfig_to_json(const RunConfig& cfg);
RunConfig runconfig_from_json(const std::string& json_text);
/// Accepts either a full RunConfig document or a bare model config.
RunConfig load_runconfig_file(const std::filesystem::path& path);

}  // namespace connseg
