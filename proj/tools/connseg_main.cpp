// connseg: salient segmentation via pixel-pair connectivity prediction.
// Subcommands cover the whole pipeline: synthetic data generation, mask/cube
// conversion, training, fused prediction, evaluation and gradient checks.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "connseg/checkpoint.hpp"
#include "connseg/codec.hpp"
#include "connseg/dataset.hpp"
#include "connseg/errors.hpp"
#include "connseg/gradcheck.hpp"
#include "connseg/metrics.hpp"
#include "connseg/model.hpp"
#include "connseg/parallel.hpp"
#include "connseg/runconfig.hpp"
#include "connseg/train.hpp"
#include "connseg/tta.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace connseg;

namespace {

PatternKind parse_pattern_or_throw(const std::string& name) {
  auto p = ConnectivityPattern::parse(name);
  if (!p) throw UsageError("unknown pattern '" + name + "' (expected n4, n8 or n12)");
  return *p;
}

RunConfig resolve_config(const std::string& config_flag, const fs::path& checkpoint) {
  if (!config_flag.empty()) return load_runconfig_file(config_flag);
  const fs::path sibling = checkpoint.parent_path() / "config.json";
  if (fs::exists(sibling)) return load_runconfig_file(sibling);
  throw UsageError("no --config given and no config.json next to " + checkpoint.string());
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir,
                 std::optional<uint64_t> seed) {
  SyntheticSpec spec = load_synthetic_spec_file(spec_path);
  if (seed) spec.seed = *seed;
  const Manifest manifest = generate_synthetic(spec, out_dir);
  std::cout << "generated " << manifest.records.size() << " images under " << out_dir << "\n";
  std::cout << "manifest: " << (fs::path(out_dir) / "manifest.csv").string() << "\n";
  return 0;
}

int cmd_encode(const std::string& mask_path, const std::string& pattern_name,
               const std::string& out_path) {
  const PatternKind kind = parse_pattern_or_throw(pattern_name);
  const BinaryMask mask = load_mask(mask_path);
  write_cube(out_path, encode(mask, kind));
  return 0;
}

int cmd_decode(const std::string& cube_path, double t, int k, const std::string& out_path) {
  const ConnectivityCube cube = read_cube(cube_path);
  BinaryMask mask;
  try {
    mask = decode(cube, t, k);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  save_mask(out_path, mask);
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_dir, const std::string& val_path,
              std::optional<uint64_t> seed, std::optional<int> epochs,
              std::optional<int> batch_size, std::optional<int> freeze_steps) {
  RunConfig cfg = load_runconfig_file(config_path);
  if (seed) cfg.train.seed = *seed;
  if (epochs) cfg.train.epochs = *epochs;
  if (batch_size) cfg.train.batch_size = *batch_size;
  if (freeze_steps) cfg.train.freeze_backbone_steps = *freeze_steps;
  cfg.model.validate();
  cfg.train.validate();

  const Manifest manifest = load_manifest(data_path);
  validate_manifest(manifest);
  const std::vector<Sample> samples = load_samples(manifest);

  std::vector<Sample> val_samples;
  const std::vector<Sample>* val = nullptr;
  if (!val_path.empty()) {
    const Manifest val_manifest = load_manifest(val_path);
    validate_manifest(val_manifest);
    val_samples = load_samples(val_manifest);
    val = &val_samples;
  }

  fs::create_directories(out_dir);
  {
    std::ofstream echo(fs::path(out_dir) / "config.json");
    echo << runconfig_to_json(cfg) << "\n";
  }

  Model model(cfg.model);
  model.init_weights(cfg.train.seed);
  const TrainResult result = train(model, samples, cfg.train, out_dir, val);
  std::cout << "steps: " << result.loss_history.size() << "\n";
  std::cout << "final loss: " << result.loss_history.back() << "\n";
  std::cout << "best val maxF: " << result.best_val_max_f << " (step " << result.best_step
            << ")\n";
  std::cout << "checkpoint: " << result.best_checkpoint.string() << "\n";
  return 0;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& image_path,
                const std::string& fusion_path, const std::string& config_flag,
                const std::string& out_path, const std::string& save_cube_path,
                bool single_scale) {
  RunConfig cfg = resolve_config(config_flag, checkpoint_path);
  Model model(cfg.model);
  model.load(checkpoint_path);

  FusionPlan plan = cfg.fusion;
  if (!fusion_path.empty()) plan = load_plan_file(fusion_path);
  if (single_scale) {
    plan.scales = {1.0};
    plan.use_flip = false;
  }

  const Image image = load_image(image_path);
  if (cfg.model.head == HeadKind::Connectivity) {
    const ConnectivityCube fused = fused_predict_cube(image, model_predictor(model), plan);
    if (!save_cube_path.empty()) write_cube(save_cube_path, fused);
    save_mask(out_path, decode(fused, plan.threshold, plan.min_count));
  } else {
    if (!save_cube_path.empty()) {
      throw UsageError("--save-cube requires a connectivity-head checkpoint");
    }
    const std::vector<float> map = predict_map(model, image);
    BinaryMask mask(image.height, image.width);
    for (size_t e = 0; e < map.size(); ++e) mask.data[e] = map[e] > plan.threshold ? 1 : 0;
    save_mask(out_path, mask);
  }
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_manifest,
             const std::string& report_path, const std::string& curve_csv, int grid_steps,
             int k) {
  const Manifest manifest = load_manifest(gt_manifest);
  validate_manifest(manifest);
  if (manifest.records.empty()) throw DataError("eval: manifest has no records");

  DatasetEvaluator evaluator(default_threshold_grid(grid_steps), k);
  for (const ManifestRecord& rec : manifest.records) {
    const std::string stem = rec.image.stem().string();
    const BinaryMask gt = load_mask(rec.mask);
    const fs::path cube_path = fs::path(pred_dir) / (stem + ".ccub");
    const fs::path map_path = fs::path(pred_dir) / (stem + ".png");
    try {
      if (fs::exists(cube_path)) {
        evaluator.add_cube(stem, read_cube(cube_path), gt);
      } else if (fs::exists(map_path)) {
        int h = 0, w = 0;
        const std::vector<float> map = load_gray_map(map_path, &h, &w);
        evaluator.add_map(stem, map, h, w, gt);
      } else {
        throw DataError("eval: no prediction (.ccub or .png) for '" + stem + "' in " +
                        pred_dir);
      }
    } catch (const std::invalid_argument& e) {
      throw DataError("eval: prediction for '" + stem + "': " + e.what());
    }
  }
  const DatasetEval eval = evaluator.finish();

  json report;
  report["dataset"] = gt_manifest;
  report["count"] = eval.count;
  report["maxF"] = eval.max_f;
  report["best_t"] = eval.best_threshold;
  report["mean_image_maxF"] = eval.mean_image_max_f;
  report["per_threshold"] = json::array();
  for (const PRPoint& p : eval.per_threshold) {
    report["per_threshold"].push_back(
        {{"t", p.threshold}, {"precision", p.precision}, {"recall", p.recall}, {"f", p.f}});
  }
  report["per_image"] = json::array();
  for (const ImageEval& e : eval.per_image) {
    report["per_image"].push_back(
        {{"image", e.id}, {"maxF", e.max_f}, {"best_t", e.best_threshold}});
  }
  std::ofstream out(report_path);
  if (!out) throw DataError("cannot write report: " + report_path);
  out << report.dump(2) << "\n";

  if (!curve_csv.empty()) {
    std::ofstream csv(curve_csv);
    if (!csv) throw DataError("cannot write curve CSV: " + curve_csv);
    csv << "t,precision,recall,f\n";
    for (const PRPoint& p : eval.per_threshold) {
      csv << p.threshold << ',' << p.precision << ',' << p.recall << ',' << p.f << "\n";
    }
  }
  std::cout << "maxF " << eval.max_f << " at t=" << eval.best_threshold << " over " << eval.count
            << " images\n";
  return 0;
}

int cmd_gradcheck(const std::string& config_flag, uint64_t seed) {
  PredictorConfig cfg = default_gradcheck_config();
  if (!config_flag.empty()) cfg = load_runconfig_file(config_flag).model;

  GradCheckReport report = run_op_gradchecks(seed);
  report.append(run_model_gradchecks(cfg, seed));
  for (const auto& e : report.entries) {
    std::printf("gradcheck %-20s max rel error %.3e\n", e.name.c_str(), e.max_rel_error);
  }
  std::printf("gradcheck worst: %.3e\n", report.worst());
  if (!report.all_below(1e-5)) {
    throw VerifyError("gradient verification failed (tolerance 1e-5)");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  configure_threads_from_env();

  CLI::App app{"salient segmentation via pixel-pair connectivity prediction"};
  app.require_subcommand(1);

  // gen-data
  std::string gd_spec, gd_out;
  std::optional<uint64_t> gd_seed;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--spec", gd_spec, "synthetic spec JSON")->required();
  gen->add_option("--out", gd_out, "output directory")->required();
  gen->add_option("--seed", gd_seed, "override the spec seed");

  // encode
  std::string en_mask, en_pattern = "n8", en_out;
  auto* enc = app.add_subcommand("encode", "mask PNG -> connectivity cube");
  enc->add_option("--mask", en_mask, "binary mask PNG")->required();
  enc->add_option("--pattern", en_pattern, "n4, n8 or n12");
  enc->add_option("--out", en_out, "output .ccub path")->required();

  // decode
  std::string de_cube, de_out;
  double de_t = 0.5;
  int de_k = 1;
  auto* dec = app.add_subcommand("decode", "connectivity cube -> mask PNG");
  dec->add_option("--cube", de_cube, "input .ccub path")->required();
  dec->add_option("--t", de_t, "threshold in (0,1)");
  dec->add_option("--k", de_k, "minimum agreed connections");
  dec->add_option("--out", de_out, "output PNG path")->required();

  // train
  std::string tr_config, tr_data, tr_out, tr_val;
  std::optional<uint64_t> tr_seed;
  std::optional<int> tr_epochs, tr_batch, tr_freeze;
  auto* tr = app.add_subcommand("train", "optimize a predictor");
  tr->add_option("--config", tr_config, "run config JSON")->required();
  tr->add_option("--data", tr_data, "training manifest CSV")->required();
  tr->add_option("--out", tr_out, "run directory")->required();
  tr->add_option("--val-data", tr_val, "validation manifest CSV");
  tr->add_option("--seed", tr_seed, "override train seed");
  tr->add_option("--epochs", tr_epochs, "override epochs");
  tr->add_option("--batch-size", tr_batch, "override batch size");
  tr->add_option("--freeze-backbone-steps", tr_freeze, "stage-wise warmup steps");

  // predict
  std::string pr_ckpt, pr_image, pr_fusion, pr_config, pr_out, pr_cube;
  bool pr_single = false;
  auto* pr = app.add_subcommand("predict", "image -> salient mask");
  pr->add_option("--checkpoint", pr_ckpt, "CNW1 checkpoint")->required();
  pr->add_option("--image", pr_image, "input image PNG")->required();
  pr->add_option("--fusion", pr_fusion, "fusion plan JSON");
  pr->add_option("--config", pr_config,
                 "model config (default: config.json next to checkpoint)");
  pr->add_option("--out", pr_out, "output mask PNG")->required();
  pr->add_option("--save-cube", pr_cube, "also write the fused probability cube");
  pr->add_flag("--single-scale", pr_single, "disable test-time fusion");

  // eval
  std::string ev_pred, ev_manifest, ev_report, ev_curve;
  int ev_grid = 256, ev_k = 1;
  auto* ev = app.add_subcommand("eval", "score predictions against ground truth");
  ev->add_option("--pred-dir", ev_pred, "directory of .ccub cubes or .png maps")->required();
  ev->add_option("--gt-manifest", ev_manifest, "ground-truth manifest CSV")->required();
  ev->add_option("--report", ev_report, "output report JSON")->required();
  ev->add_option("--curve-csv", ev_curve, "optional PR-curve CSV");
  ev->add_option("--grid", ev_grid, "threshold grid steps");
  ev->add_option("--k", ev_k, "minimum agreed connections for decoding");

  // gradcheck
  std::string gc_config;
  uint64_t gc_seed = 11;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gc->add_option("--config", gc_config, "model config JSON");
  gc->add_option("--seed", gc_seed, "input seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gd_spec, gd_out, gd_seed);
    if (enc->parsed()) return cmd_encode(en_mask, en_pattern, en_out);
    if (dec->parsed()) return cmd_decode(de_cube, de_t, de_k, de_out);
    if (tr->parsed()) {
      return cmd_train(tr_config, tr_data, tr_out, tr_val, tr_seed, tr_epochs, tr_batch,
                       tr_freeze);
    }
    if (pr->parsed()) {
      return cmd_predict(pr_ckpt, pr_image, pr_fusion, pr_config, pr_out, pr_cube, pr_single);
    }
    if (ev->parsed()) return cmd_eval(ev_pred, ev_manifest, ev_report, ev_curve, ev_grid, ev_k);
    if (gc->parsed()) return cmd_gradcheck(gc_config, gc_seed);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const VerifyError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
