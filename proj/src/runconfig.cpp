#include "connseg/runconfig.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "connseg/errors.hpp"

namespace connseg {

using nlohmann::json;

void MetricOptions::validate() const {
  if (grid_steps < 1) throw DataError("metrics: grid_steps must be >= 1");
  if (k < 1) throw DataError("metrics: k must be >= 1");
}

std::string runconfig_to_json(const RunConfig& cfg) {
  json j;
  j["model"] = json::parse(config_to_json(cfg.model));
  j["train"] = json::parse(trainrun_to_json(cfg.train));
  j["fusion"] = json::parse(plan_to_json(cfg.fusion));
  j["metrics"] = {{"grid_steps", cfg.metrics.grid_steps}, {"k", cfg.metrics.k}};
  return j.dump(2);
}

RunConfig runconfig_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw DataError(std::string("config parse error: ") + e.what());
  }
  if (!j.is_object()) throw DataError("config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "model" && it.key() != "train" && it.key() != "fusion" &&
        it.key() != "metrics") {
      throw DataError("unknown key '" + it.key() + "' in run config");
    }
  }
  RunConfig cfg;
  if (j.contains("model")) cfg.model = config_from_json(j["model"].dump());
  if (j.contains("train")) cfg.train = trainrun_from_json(j["train"].dump());
  if (j.contains("fusion")) cfg.fusion = plan_from_json(j["fusion"].dump());
  if (j.contains("metrics")) {
    const json& m = j["metrics"];
    for (auto it = m.begin(); it != m.end(); ++it) {
      if (it.key() != "grid_steps" && it.key() != "k") {
        throw DataError("unknown key '" + it.key() + "' in metrics config");
      }
    }
    try {
      if (m.contains("grid_steps")) cfg.metrics.grid_steps = m["grid_steps"].get<int>();
      if (m.contains("k")) cfg.metrics.k = m["k"].get<int>();
    } catch (const json::exception& e) {
      throw DataError(std::string("metrics config type error: ") + e.what());
    }
    cfg.metrics.validate();
  }
  return cfg;
}

RunConfig load_runconfig_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError("config parse error in " + path.string() + ": " + e.what());
  }
  if (j.is_object() &&
      (j.contains("model") || j.contains("train") || j.contains("fusion") ||
       j.contains("metrics"))) {
    return runconfig_from_json(text);
  }
  RunConfig cfg;
  cfg.model = config_from_json(text);
  return cfg;
}

}  // namespace connseg
