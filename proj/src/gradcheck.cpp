#include "connseg/gradcheck.hpp"

#include <algorithm>
#include <random>

#include "connseg/ops.hpp"

namespace connseg {

using ad::Tensor;

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_error);
  return w;
}

bool GradCheckReport::all_below(double tolerance) const {
  for (const auto& e : entries) {
    if (!(e.max_rel_error < tolerance)) return false;
  }
  return !entries.empty();
}

void GradCheckReport::append(const GradCheckReport& other) {
  entries.insert(entries.end(), other.entries.begin(), other.entries.end());
}

namespace {

class Rand {
 public:
  explicit Rand(uint64_t seed) : rng_(seed) {}

  double unit() { return (rng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + unit() * (hi - lo); }

  std::vector<double> values(int64_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v((size_t)n);
    for (auto& x : v) x = uniform(lo, hi);
    return v;
  }
  // Magnitudes in [0.1, 1] on either sign keep clear of the ReLU kink.
  std::vector<double> values_off_zero(int64_t n) {
    std::vector<double> v((size_t)n);
    for (auto& x : v) {
      const double mag = 0.1 + 0.9 * unit();
      x = unit() < 0.5 ? -mag : mag;
    }
    return v;
  }
  std::vector<double> binary(int64_t n) {
    std::vector<double> v((size_t)n);
    for (auto& x : v) x = unit() < 0.5 ? 0.0 : 1.0;
    return v;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

GradCheckReport run_op_gradchecks(uint64_t seed) {
  GradCheckReport report;
  Rand rand(seed);

  // Projects the op output against a fixed random weighting so every output
  // element influences the scalar loss. The weights are drawn once; the
  // closure itself must stay a fixed function of the parameters.
  auto check = [&](const std::string& name, const std::function<Tensor()>& op_fn,
                   const std::vector<Tensor>& params) {
    Tensor probe = op_fn();
    Tensor w = Tensor::constant(probe.shape(), rand.values(probe.size()));
    auto fn = [op_fn, w]() { return ad::reduce_sum(ad::mul(op_fn(), w)); };
    report.entries.push_back({name, ad::grad_check(fn, params)});
  };

  {
    Tensor a = Tensor::variable({3, 4}, rand.values(12));
    Tensor b = Tensor::variable({3, 4}, rand.values(12));
    check("add", [a, b]() { return ad::add(a, b); }, {a, b});
  }
  {
    Tensor a = Tensor::variable({3, 4}, rand.values(12));
    Tensor b = Tensor::variable({3, 4}, rand.values(12));
    check("mul", [a, b]() { return ad::mul(a, b); }, {a, b});
  }
  {
    Tensor a = Tensor::variable({2, 5}, rand.values(10));
    check("scale", [a]() { return ad::scale(a, -1.7); }, {a});
  }
  {
    Tensor a = Tensor::variable({2, 5}, rand.values(10, -3.0, 3.0));
    check("sigmoid", [a]() { return ad::sigmoid(a); }, {a});
  }
  {
    Tensor a = Tensor::variable({2, 5}, rand.values_off_zero(10));
    check("relu", [a]() { return ad::relu(a); }, {a});
  }
  {
    Tensor a = Tensor::variable({2, 5}, rand.values(10, -2.0, 2.0));
    check("exp", [a]() { return ad::exp(a); }, {a});
  }
  {
    Tensor a = Tensor::variable({2, 5}, rand.values(10, 0.05, 0.95));
    check("log", [a]() { return ad::log(a); }, {a});
  }
  {
    Tensor a = Tensor::variable({3, 4}, rand.values(12));
    Tensor b = Tensor::variable({4, 2}, rand.values(8));
    check("matmul", [a, b]() { return ad::matmul(a, b); }, {a, b});
  }
  {
    Tensor a = Tensor::variable({3, 5}, rand.values(15, -2.0, 2.0));
    check("softmax", [a]() { return ad::softmax(a); }, {a});
  }
  {
    Tensor a = Tensor::variable({2, 3, 2}, rand.values(12));
    report.entries.push_back(
        {"reduce_sum", ad::grad_check([a]() { return ad::reduce_sum(a); }, {a})});
    report.entries.push_back(
        {"reduce_mean", ad::grad_check([a]() { return ad::reduce_mean(a); }, {a})});
  }
  {
    Tensor x = Tensor::variable({2, 3, 4, 4}, rand.values(96));
    Tensor b = Tensor::variable({3}, rand.values(3));
    check("add_channel_bias", [x, b]() { return ad::add_channel_bias(x, b); }, {x, b});
  }
  {
    Tensor x = Tensor::variable({2, 3, 6, 6}, rand.values(2 * 3 * 36));
    Tensor k = Tensor::variable({4, 3, 3, 3}, rand.values(4 * 3 * 9));
    check("conv2d", [x, k]() { return ad::conv2d(x, k, 1, 1, 1); }, {x, k});
  }
  {
    Tensor x = Tensor::variable({1, 2, 7, 7}, rand.values(2 * 49));
    Tensor k = Tensor::variable({3, 2, 3, 3}, rand.values(3 * 2 * 9));
    check("conv2d_stride2", [x, k]() { return ad::conv2d(x, k, 2, 1, 1); }, {x, k});
  }
  {
    Tensor x = Tensor::variable({1, 2, 8, 8}, rand.values(2 * 64));
    Tensor k = Tensor::variable({2, 2, 3, 3}, rand.values(2 * 2 * 9));
    check("conv2d_dilated", [x, k]() { return ad::conv2d(x, k, 1, 2, 2); }, {x, k});
  }
  {
    Tensor x = Tensor::variable({1, 3, 4, 4}, rand.values(3 * 16));
    Tensor k = Tensor::variable({3, 2, 4, 4}, rand.values(3 * 2 * 16));
    check("transposed_conv2d", [x, k]() { return ad::transposed_conv2d(x, k, 2, 1); }, {x, k});
  }
  {
    Tensor x = Tensor::variable({1, 2, 5, 7}, rand.values(2 * 35));
    check("bilinear_up", [x]() { return ad::bilinear_resize(x, 8, 11); }, {x});
    check("bilinear_down", [x]() { return ad::bilinear_resize(x, 3, 4); }, {x});
  }
  {
    Tensor theta = Tensor::variable({2, 3, 3, 4}, rand.values(2 * 3 * 12));
    Tensor phi = Tensor::variable({2, 3, 3, 4}, rand.values(2 * 3 * 12));
    Tensor g = Tensor::variable({2, 3, 3, 4}, rand.values(2 * 3 * 12));
    check("attention", [theta, phi, g]() { return ad::attention(theta, phi, g); },
          {theta, phi, g});
  }
  {
    Tensor x = Tensor::variable({1, 2, 3, 3}, rand.values(18));
    check("zero_pad2d", [x]() { return ad::zero_pad2d(x, 2, 1); }, {x});
    check("crop2d", [x]() { return ad::crop2d(x, 2, 2); }, {x});
  }
  {
    Tensor z = Tensor::variable({2, 3, 4, 4}, rand.values(96, -3.0, 3.0));
    Tensor y = Tensor::constant({2, 3, 4, 4}, rand.binary(96));
    report.entries.push_back(
        {"bce_with_logits",
         ad::grad_check([z, y]() { return ad::bce_with_logits(z, y); }, {z})});
  }
  return report;
}

PredictorConfig default_gradcheck_config() {
  PredictorConfig cfg;
  cfg.head = HeadKind::Connectivity;
  cfg.pattern = PatternKind::N8;
  cfg.widths = {4, 6, 6, 8};
  cfg.use_nonlocal = false;
  cfg.nonlocal_depth = 3;
  cfg.fusion_rates = {1, 2};
  cfg.fusion_mid_channels = 0;
  cfg.upsample = UpsampleKind::TransposedConv;
  cfg.input_size = 8;
  return cfg;
}

GradCheckReport run_model_gradchecks(PredictorConfig cfg, uint64_t seed) {
  GradCheckReport report;
  Rand rand(seed);
  cfg.input_size = 8;
  for (const bool nonlocal : {false, true}) {
    cfg.use_nonlocal = nonlocal;
    cfg.validate();
    Model model(cfg);
    model.init_weights(seed + (nonlocal ? 1 : 0));
    if (nonlocal) {
      // The training init zeroes W_z, which would zero the theta/phi/g
      // gradients and leave the check comparing pure roundoff noise. Give it
      // a random value so all four weights carry real gradients.
      Tensor wz = model.parameter("nonlocal.z.weight");
      auto vals = rand.values(wz.size(), -0.5, 0.5);
      std::copy(vals.begin(), vals.end(), wz.mutable_values().begin());
    }
    Tensor input = Tensor::constant({1, 3, 8, 8}, rand.values(3 * 64, 0.0, 1.0));
    // Project the logit cube against fixed random weights. A mean-normalized
    // loss would scale early-layer gradients down to the cancellation-noise
    // floor of central differences; the projection keeps sensitivities O(1).
    Tensor proj = Tensor::constant({1, cfg.out_channels(), 8, 8},
                                   rand.values((int64_t)cfg.out_channels() * 64));
    std::vector<Tensor> params;
    for (const auto& [name, t] : model.parameters()) params.push_back(t);
    auto fn = [&model, input, proj]() {
      return ad::reduce_sum(ad::mul(model.forward(input), proj));
    };
    report.entries.push_back(
        {nonlocal ? "predictor+nonlocal" : "predictor", ad::grad_check(fn, params)});
  }
  return report;
}

}  // namespace connseg
