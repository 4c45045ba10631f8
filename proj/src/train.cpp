#include "connseg/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "connseg/errors.hpp"
#include "connseg/metrics.hpp"

namespace connseg {

using ad::Tensor;
using nlohmann::json;

void TrainRun::validate() const {
  if (epochs < 1) throw DataError("train: epochs must be >= 1");
  if (batch_size < 1) throw DataError("train: batch_size must be >= 1");
  if (lr_initial <= 0.0 || lr_final <= 0.0) throw DataError("train: learning rates must be > 0");
  if (decay != "exponential") throw DataError("train: decay must be 'exponential'");
  if (train_size < 8 || train_size % 4 != 0) {
    throw DataError("train: train_size must be a multiple of 4, >= 8");
  }
  if (val_interval < 1) throw DataError("train: val_interval must be >= 1");
  if (freeze_backbone_steps < 0) throw DataError("train: freeze_backbone_steps must be >= 0");
  if (augment.flip_prob < 0.0 || augment.flip_prob > 1.0) {
    throw DataError("train: flip_prob must lie in [0,1]");
  }
  if (augment.scale_min <= 0.0 || augment.scale_max < augment.scale_min) {
    throw DataError("train: bad rescale range");
  }
}

std::string trainrun_to_json(const TrainRun& run) {
  json j;
  j["seed"] = run.seed;
  j["epochs"] = run.epochs;
  j["batch_size"] = run.batch_size;
  j["lr_initial"] = run.lr_initial;
  j["lr_final"] = run.lr_final;
  j["decay"] = run.decay;
  j["train_size"] = run.train_size;
  j["val_interval"] = run.val_interval;
  j["freeze_backbone_steps"] = run.freeze_backbone_steps;
  j["augment"] = {{"flip_prob", run.augment.flip_prob},
                  {"scale_min", run.augment.scale_min},
                  {"scale_max", run.augment.scale_max}};
  return j.dump(2);
}

TrainRun trainrun_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw DataError(std::string("train config parse error: ") + e.what());
  }
  if (!j.is_object()) throw DataError("train config must be a JSON object");
  static const std::vector<std::string> known = {
      "seed",       "epochs",       "batch_size",
      "lr_initial", "lr_final",     "decay",
      "train_size", "val_interval", "freeze_backbone_steps",
      "augment"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw DataError("unknown key '" + it.key() + "' in train config");
    }
  }
  TrainRun run;
  try {
    if (j.contains("seed")) run.seed = j["seed"].get<uint64_t>();
    if (j.contains("epochs")) run.epochs = j["epochs"].get<int>();
    if (j.contains("batch_size")) run.batch_size = j["batch_size"].get<int>();
    if (j.contains("lr_initial")) run.lr_initial = j["lr_initial"].get<double>();
    if (j.contains("lr_final")) run.lr_final = j["lr_final"].get<double>();
    if (j.contains("decay")) run.decay = j["decay"].get<std::string>();
    if (j.contains("train_size")) run.train_size = j["train_size"].get<int>();
    if (j.contains("val_interval")) run.val_interval = j["val_interval"].get<int>();
    if (j.contains("freeze_backbone_steps")) {
      run.freeze_backbone_steps = j["freeze_backbone_steps"].get<int>();
    }
    if (j.contains("augment")) {
      const json& a = j["augment"];
      for (auto it = a.begin(); it != a.end(); ++it) {
        if (it.key() != "flip_prob" && it.key() != "scale_min" && it.key() != "scale_max") {
          throw DataError("unknown key '" + it.key() + "' in augment config");
        }
      }
      if (a.contains("flip_prob")) run.augment.flip_prob = a["flip_prob"].get<double>();
      if (a.contains("scale_min")) run.augment.scale_min = a["scale_min"].get<double>();
      if (a.contains("scale_max")) run.augment.scale_max = a["scale_max"].get<double>();
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("train config type error: ") + e.what());
  }
  run.validate();
  return run;
}

namespace {

double uniform_unit(std::mt19937_64& rng) { return (rng() >> 11) * 0x1.0p-53; }

int uniform_int(std::mt19937_64& rng, int hi_inclusive) {
  if (hi_inclusive <= 0) {
    rng();  // keep the draw count fixed
    return 0;
  }
  return (int)(rng() % (uint64_t)(hi_inclusive + 1));
}

}  // namespace

AugmentParams draw_augment_params(std::mt19937_64& rng, const AugmentConfig& cfg, int height,
                                  int width, int out_size) {
  AugmentParams p;
  p.flip = uniform_unit(rng) < cfg.flip_prob;
  p.scale = cfg.scale_min + uniform_unit(rng) * (cfg.scale_max - cfg.scale_min);
  const int sh = std::max(1, (int)std::lround(height * p.scale));
  const int sw = std::max(1, (int)std::lround(width * p.scale));
  const int ph = std::max(sh, out_size);
  const int pw = std::max(sw, out_size);
  p.crop_top = uniform_int(rng, ph - out_size);
  p.crop_left = uniform_int(rng, pw - out_size);
  return p;
}

std::pair<Image, BinaryMask> apply_augment(const Image& image, const BinaryMask& mask,
                                           const AugmentParams& params, int out_size) {
  if (image.height != mask.height || image.width != mask.width) {
    throw std::invalid_argument("augment: image/mask shape mismatch");
  }
  Image img = params.flip ? hflip(image) : image;
  BinaryMask m = params.flip ? hflip(mask) : mask;
  const int sh = std::max(1, (int)std::lround(img.height * params.scale));
  const int sw = std::max(1, (int)std::lround(img.width * params.scale));
  if (sh != img.height || sw != img.width) {
    img = bilinear_resize(img, sh, sw);
    m = nearest_resize(m, sh, sw);
  }
  if (img.height < out_size || img.width < out_size) {
    const int ph = std::max(img.height, out_size);
    const int pw = std::max(img.width, out_size);
    img = pad_bottom_right(img, ph, pw);
    m = pad_bottom_right(m, ph, pw);
  }
  img = crop(img, params.crop_top, params.crop_left, out_size, out_size);
  m = crop(m, params.crop_top, params.crop_left, out_size, out_size);
  return {std::move(img), std::move(m)};
}

void adam_step(const std::vector<Tensor>& params, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
    for (size_t p = 0; p < params.size(); ++p) {
      state.m[p].assign(params[p].values().size(), 0.0);
      state.v[p].assign(params[p].values().size(), 0.0);
    }
    state.step_count = 0;
  }
  ++state.step_count;
  const double bc1 = 1.0 - std::pow(beta1, (double)state.step_count);
  const double bc2 = 1.0 - std::pow(beta2, (double)state.step_count);
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor t = params[p];
    const auto& g = t.grad();
    auto& w = t.mutable_values();
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (size_t e = 0; e < w.size(); ++e) {
      if (!std::isfinite(g[e])) throw VerifyError("adam_step: non-finite gradient");
      m[e] = beta1 * m[e] + (1.0 - beta1) * g[e];
      v[e] = beta2 * v[e] + (1.0 - beta2) * g[e] * g[e];
      const double mhat = m[e] / bc1;
      const double vhat = v[e] / bc2;
      w[e] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

double learning_rate_at(const TrainRun& run, int step, int total_steps) {
  if (total_steps <= 1) return run.lr_initial;
  const double t = (double)step / (double)(total_steps - 1);
  return run.lr_initial * std::pow(run.lr_final / run.lr_initial, t);
}

namespace {

Tensor cube_target(const std::vector<ConnectivityCube>& cubes) {
  const int h = cubes[0].height, w = cubes[0].width, c = cubes[0].channels;
  std::vector<double> vals;
  vals.reserve(cubes.size() * (size_t)h * w * c);
  for (const auto& cube : cubes) {
    // cube layout is HWC; targets are NCHW.
    for (int ch = 0; ch < c; ++ch) {
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) vals.push_back(cube.at(i, j, ch));
      }
    }
  }
  return Tensor::constant({(int)cubes.size(), c, h, w}, std::move(vals));
}

Tensor mask_target(const std::vector<BinaryMask>& masks) {
  const int h = masks[0].height, w = masks[0].width;
  std::vector<double> vals;
  vals.reserve(masks.size() * (size_t)h * w);
  for (const auto& m : masks) {
    for (uint8_t v : m.data) vals.push_back(v ? 1.0 : 0.0);
  }
  return Tensor::constant({(int)masks.size(), 1, h, w}, std::move(vals));
}

double validation_max_f(const Model& model, const std::vector<Sample>& val_set,
                        const std::vector<double>& grid) {
  DatasetEvaluator eval(grid);
  for (const Sample& s : val_set) {
    if (model.config().head == HeadKind::Connectivity) {
      eval.add_cube(s.id, predict_cube(model, s.image), s.mask);
    } else {
      eval.add_map(s.id, predict_map(model, s.image), s.image.height, s.image.width, s.mask);
    }
  }
  return eval.finish().max_f;
}

}  // namespace

TrainResult train(Model& model, const std::vector<Sample>& dataset, const TrainRun& run,
                  const std::filesystem::path& out_dir,
                  const std::vector<Sample>* validation) {
  run.validate();
  if (dataset.empty()) throw DataError("train: empty dataset");
  std::filesystem::create_directories(out_dir);

  // Fall back to a fixed slice of the training data when no held-out set is given.
  std::vector<Sample> val_fallback;
  const std::vector<Sample>* val_set = validation;
  if (!val_set) {
    const size_t n = std::min<size_t>(8, dataset.size());
    val_fallback.assign(dataset.begin(), dataset.begin() + (std::ptrdiff_t)n);
    val_set = &val_fallback;
  }

  auto named = model.parameters();
  std::vector<Tensor> params;
  std::vector<Tensor> trainable_warmup;  // non-backbone params for the staged option
  for (const auto& [name, t] : named) {
    params.push_back(t);
    if (name.rfind("backbone.", 0) != 0) trainable_warmup.push_back(t);
  }

  const int steps_per_epoch = std::max<int>(1, (int)(dataset.size() / (size_t)run.batch_size));
  const int total_steps = run.epochs * steps_per_epoch;
  const auto grid = default_threshold_grid();

  std::mt19937_64 rng(run.seed);
  AdamState adam;
  AdamState adam_warmup;

  TrainResult result;
  result.metrics_csv = out_dir / "metrics.csv";
  result.best_checkpoint = out_dir / "best.cnw1";
  result.last_checkpoint = out_dir / "last.cnw1";
  std::ofstream csv(result.metrics_csv);
  if (!csv) throw DataError("cannot open metrics log: " + result.metrics_csv.string());
  csv << "step,loss,val_maxF\n";

  std::vector<size_t> order(dataset.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  int step = 0;
  for (int epoch = 0; epoch < run.epochs; ++epoch) {
    // Fisher-Yates on the shared stream keeps runs bit-reproducible.
    for (size_t i = order.size(); i > 1; --i) {
      const size_t j = (size_t)(rng() % i);
      std::swap(order[i - 1], order[j]);
    }
    for (int bs = 0; bs < steps_per_epoch; ++bs, ++step) {
      std::vector<Image> images;
      std::vector<BinaryMask> masks;
      images.reserve((size_t)run.batch_size);
      for (int b = 0; b < run.batch_size; ++b) {
        const Sample& s = dataset[order[(size_t)((bs * run.batch_size + b) % (int)order.size())]];
        const AugmentParams ap = draw_augment_params(rng, run.augment, s.image.height,
                                                     s.image.width, run.train_size);
        auto [img, msk] = apply_augment(s.image, s.mask, ap, run.train_size);
        images.push_back(std::move(img));
        masks.push_back(std::move(msk));
      }

      Tensor inputs = tensor_from_images(images);
      Tensor target;
      if (model.config().head == HeadKind::Connectivity) {
        std::vector<ConnectivityCube> cubes;
        cubes.reserve(masks.size());
        for (const auto& m : masks) cubes.push_back(encode(m, model.config().pattern));
        target = cube_target(cubes);
      } else {
        target = mask_target(masks);
      }

      Tensor logits = model.forward(inputs);
      Tensor loss = ad::bce_with_logits(logits, target);
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        throw VerifyError("train: loss diverged (non-finite) at step " + std::to_string(step));
      }
      result.loss_history.push_back(loss_value);

      for (Tensor& p : params) p.zero_grad();
      ad::backward(loss);

      const double lr = learning_rate_at(run, step, total_steps);
      if (step < run.freeze_backbone_steps) {
        adam_step(trainable_warmup, adam_warmup, lr);
      } else {
        adam_step(params, adam, lr);
      }

      const bool do_val = ((step + 1) % run.val_interval == 0) || (step + 1 == total_steps);
      csv << step << ',' << loss_value << ',';
      if (do_val) {
        const double val_f = validation_max_f(model, *val_set, grid);
        csv << val_f;
        if (val_f >= result.best_val_max_f) {
          result.best_val_max_f = val_f;
          result.best_step = step;
          model.save(result.best_checkpoint);
        }
      }
      csv << '\n';
    }
  }
  model.save(result.last_checkpoint);
  if (result.best_step < 0) {
    model.save(result.best_checkpoint);
    result.best_step = step - 1;
  }
  csv.flush();
  return result;
}

}  // namespace connseg
