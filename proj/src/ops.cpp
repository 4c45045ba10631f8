#include "connseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "connseg/errors.hpp"
#include "connseg/kernels.hpp"

namespace connseg::ad {

namespace {

NodePtr make_op_node(Shape shape, std::vector<NodePtr> parents) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values.assign((size_t)shape_size(node->shape), 0.0);
  node->parents = std::move(parents);
  for (const NodePtr& p : node->parents) node->requires_grad |= p->requires_grad;
  node->seq = detail::next_seq();
  return node;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
  }
}

double stable_sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  NodePtr out = make_op_node(a.shape(), {a.node(), b.node()});
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t e = 0; e < av.size(); ++e) out->values[e] = av[e] + bv[e];
  if (out->requires_grad) {
    Node* self = out.get();
    Node* pa = a.node().get();
    Node* pb = b.node().get();
    out->backward_fn = [self, pa, pb]() {
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (size_t e = 0; e < self->grad.size(); ++e) pa->grad[e] += self->grad[e];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (size_t e = 0; e < self->grad.size(); ++e) pb->grad[e] += self->grad[e];
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  NodePtr out = make_op_node(a.shape(), {a.node(), b.node()});
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t e = 0; e < av.size(); ++e) out->values[e] = av[e] * bv[e];
  if (out->requires_grad) {
    Node* self = out.get();
    Node* pa = a.node().get();
    Node* pb = b.node().get();
    out->backward_fn = [self, pa, pb]() {
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (size_t e = 0; e < self->grad.size(); ++e) pa->grad[e] += self->grad[e] * pb->values[e];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (size_t e = 0; e < self->grad.size(); ++e) pb->grad[e] += self->grad[e] * pa->values[e];
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor scale(const Tensor& a, double factor) {
  NodePtr out = make_op_node(a.shape(), {a.node()});
  const auto& av = a.values();
  for (size_t e = 0; e < av.size(); ++e) out->values[e] = av[e] * factor;
  if (out->requires_grad) {
    Node* self = out.get();
    Node* pa = a.node().get();
    out->backward_fn = [self, pa, factor]() {
      pa->ensure_grad();
      for (size_t e = 0; e < self->grad.size(); ++e) pa->grad[e] += self->grad[e] * factor;
    };
  }
  return Tensor::wrap(out);
}

Tensor sigmoid(const Tensor& x) {
  NodePtr out = make_op_node(x.shape(), {x.node()});
  const auto& xv = x.values();
  for (size_t e = 0; e < xv.size(); ++e) out->values[e] = stable_sigmoid(xv[e]);
  if (out->requires_grad) {
    Node* self = out.get();
    Node* px = x.node().get();
    out->backward_fn = [self, px]() {
      px->ensure_grad();
      for (size_t e = 0; e < self->grad.size(); ++e) {
        const double s = self->values[e];
        px->grad[e] += self->grad[e] * s * (1.0 - s);
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor relu(const Tensor& x) {
  NodePtr out = make_op_node(x.shape(), {x.node()});
  const auto& xv = x.values();
  for (size_t e = 0; e < xv.size(); ++e) out->values[e] = xv[e] > 0.0 ? xv[e] : 0.0;
  if (out->requires_grad) {
    Node* self = out.get();
    Node* px = x.node().get();
    out->backward_fn = [self, px]() {
      px->ensure_grad();
      for (size_t e = 0; e < self->grad.size(); ++e) {
        if (px->values[e] > 0.0) px->grad[e] += self->grad[e];
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor exp(const Tensor& x) {
  NodePtr out = make_op_node(x.shape(), {x.node()});
  const auto& xv = x.values();
  for (size_t e = 0; e < xv.size(); ++e) out->values[e] = std::exp(std::min(xv[e], 700.0));
  if (out->requires_grad) {
    Node* self = out.get();
    Node* px = x.node().get();
    out->backward_fn = [self, px]() {
      px->ensure_grad();
      for (size_t e = 0; e < self->grad.size(); ++e) {
        if (px->values[e] < 700.0) px->grad[e] += self->grad[e] * self->values[e];
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor log(const Tensor& x) {
  NodePtr out = make_op_node(x.shape(), {x.node()});
  const auto& xv = x.values();
  const double lo = LOG_CLAMP_EPS;
  const double hi = 1.0 - LOG_CLAMP_EPS;
  for (size_t e = 0; e < xv.size(); ++e) out->values[e] = std::log(std::clamp(xv[e], lo, hi));
  if (out->requires_grad) {
    Node* self = out.get();
    Node* px = x.node().get();
    out->backward_fn = [self, px, lo, hi]() {
      px->ensure_grad();
      for (size_t e = 0; e < self->grad.size(); ++e) {
        const double v = px->values[e];
        if (v > lo && v < hi) px->grad[e] += self->grad[e] / v;
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: wants [m,k] x [k,n]");
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  NodePtr out = make_op_node({m, n}, {a.node(), b.node()});
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int q = 0; q < k; ++q) acc += av[(size_t)i * k + q] * bv[(size_t)q * n + j];
      out->values[(size_t)i * n + j] = acc;
    }
  }
  if (out->requires_grad) {
    Node* self = out.get();
    Node* pa = a.node().get();
    Node* pb = b.node().get();
    out->backward_fn = [self, pa, pb, m, k, n]() {
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (int i = 0; i < m; ++i) {
          for (int q = 0; q < k; ++q) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) {
              acc += self->grad[(size_t)i * n + j] * pb->values[(size_t)q * n + j];
            }
            pa->grad[(size_t)i * k + q] += acc;
          }
        }
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (int q = 0; q < k; ++q) {
          for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i) {
              acc += pa->values[(size_t)i * k + q] * self->grad[(size_t)i * n + j];
            }
            pb->grad[(size_t)q * n + j] += acc;
          }
        }
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor softmax(const Tensor& x) {
  if (x.rank() < 1 || x.rank() > 2) throw std::invalid_argument("softmax: rank 1 or 2 only");
  const int rows = x.rank() == 2 ? x.dim(0) : 1;
  const int cols = x.rank() == 2 ? x.dim(1) : x.dim(0);
  NodePtr out = make_op_node(x.shape(), {x.node()});
  const auto& xv = x.values();
  for (int r = 0; r < rows; ++r) {
    const double* in = xv.data() + (size_t)r * cols;
    double* o = out->values.data() + (size_t)r * cols;
    double mx = in[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    double sum = 0.0;
    for (int c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      sum += o[c];
    }
    for (int c = 0; c < cols; ++c) o[c] /= sum;
  }
  if (out->requires_grad) {
    Node* self = out.get();
    Node* px = x.node().get();
    out->backward_fn = [self, px, rows, cols]() {
      px->ensure_grad();
      for (int r = 0; r < rows; ++r) {
        const double* a = self->values.data() + (size_t)r * cols;
        const double* g = self->grad.data() + (size_t)r * cols;
        double dot = 0.0;
        for (int c = 0; c < cols; ++c) dot += a[c] * g[c];
        for (int c = 0; c < cols; ++c) {
          px->grad[(size_t)r * cols + c] += a[c] * (g[c] - dot);
        }
      }
    };
  }
  return Tensor::wrap(out);
}

namespace {

Tensor reduce(const Tensor& x, bool mean) {
  NodePtr out = make_op_node({1}, {x.node()});
  const auto& xv = x.values();
  double acc = 0.0;
  for (double v : xv) acc += v;  // fixed row-major order
  const double denom = mean ? (double)xv.size() : 1.0;
  out->values[0] = acc / denom;
  if (out->requires_grad) {
    Node* self = out.get();
    Node* px = x.node().get();
    out->backward_fn = [self, px, denom]() {
      px->ensure_grad();
      const double g = self->grad[0] / denom;
      for (size_t e = 0; e < px->grad.size(); ++e) px->grad[e] += g;
    };
  }
  return Tensor::wrap(out);
}

}  // namespace

Tensor reduce_sum(const Tensor& x) { return reduce(x, false); }
Tensor reduce_mean(const Tensor& x) { return reduce(x, true); }

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad, int dilation) {
  if (input.rank() != 4 || kernel.rank() != 4) {
    throw std::invalid_argument("conv2d: input and kernel must be rank 4");
  }
  if (stride < 1 || pad < 0 || dilation < 1) {
    throw std::invalid_argument("conv2d: bad stride/pad/dilation");
  }
  const int n = input.dim(0), ci = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int co = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != ci) throw std::invalid_argument("conv2d: channel mismatch");
  const int num_h = h + 2 * pad - dilation * (kh - 1) - 1;
  const int num_w = w + 2 * pad - dilation * (kw - 1) - 1;
  if (num_h < 0 || num_w < 0 || num_h % stride != 0 || num_w % stride != 0) {
    throw std::invalid_argument("conv2d: non-integral output size");
  }
  const int ho = num_h / stride + 1;
  const int wo = num_w / stride + 1;

  NodePtr out = make_op_node({n, co, ho, wo}, {input.node(), kernel.node()});
  kernels::conv2d_forward(input.values().data(), n, ci, h, w, kernel.values().data(), co, kh,
                          kw, stride, pad, dilation, out->values.data(), ho, wo);
  if (out->requires_grad) {
    Node* self = out.get();
    Node* pin = input.node().get();
    Node* pk = kernel.node().get();
    out->backward_fn = [self, pin, pk, n, ci, h, w, co, kh, kw, stride, pad, dilation, ho,
                        wo]() {
      if (pin->requires_grad) {
        pin->ensure_grad();
        kernels::conv2d_grad_input(self->grad.data(), n, co, ho, wo, pk->values.data(), ci, kh,
                                   kw, stride, pad, dilation, pin->grad.data(), h, w);
      }
      if (pk->requires_grad) {
        pk->ensure_grad();
        kernels::conv2d_grad_kernel(self->grad.data(), n, co, ho, wo, pin->values.data(), ci, h,
                                    w, kh, kw, stride, pad, dilation, pk->grad.data());
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor transposed_conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad) {
  if (input.rank() != 4 || kernel.rank() != 4) {
    throw std::invalid_argument("transposed_conv2d: input and kernel must be rank 4");
  }
  if (stride < 1 || pad < 0) throw std::invalid_argument("transposed_conv2d: bad stride/pad");
  const int n = input.dim(0), ci = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int co = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(0) != ci) throw std::invalid_argument("transposed_conv2d: channel mismatch");
  const int ho = (h - 1) * stride - 2 * pad + kh;
  const int wo = (w - 1) * stride - 2 * pad + kw;
  if (ho < 1 || wo < 1) throw std::invalid_argument("transposed_conv2d: empty output");

  NodePtr out = make_op_node({n, co, ho, wo}, {input.node(), kernel.node()});
  kernels::tconv2d_forward(input.values().data(), n, ci, h, w, kernel.values().data(), co, kh,
                           kw, stride, pad, out->values.data(), ho, wo);
  if (out->requires_grad) {
    Node* self = out.get();
    Node* pin = input.node().get();
    Node* pk = kernel.node().get();
    out->backward_fn = [self, pin, pk, n, ci, h, w, co, kh, kw, stride, pad, ho, wo]() {
      if (pin->requires_grad) {
        pin->ensure_grad();
        kernels::tconv2d_grad_input(self->grad.data(), n, co, ho, wo, pk->values.data(), ci, kh,
                                    kw, stride, pad, pin->grad.data(), h, w);
      }
      if (pk->requires_grad) {
        pk->ensure_grad();
        kernels::tconv2d_grad_kernel(self->grad.data(), n, co, ho, wo, pin->values.data(), ci,
                                     h, w, kh, kw, stride, pad, pk->grad.data());
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor bilinear_resize(const Tensor& input, int out_h, int out_w) {
  if (input.rank() != 4) throw std::invalid_argument("bilinear_resize: input must be rank 4");
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("bilinear_resize: target must be >= 1");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  NodePtr out = make_op_node({n, c, out_h, out_w}, {input.node()});
  kernels::bilinear_forward(input.values().data(), n, c, h, w, out->values.data(), out_h, out_w);
  if (out->requires_grad) {
    Node* self = out.get();
    Node* pin = input.node().get();
    out->backward_fn = [self, pin, n, c, h, w, out_h, out_w]() {
      pin->ensure_grad();
      kernels::bilinear_backward(self->grad.data(), n, c, out_h, out_w, pin->grad.data(), h, w);
    };
  }
  return Tensor::wrap(out);
}

Tensor attention(const Tensor& theta, const Tensor& phi, const Tensor& g) {
  require_same_shape(theta, phi, "attention");
  require_same_shape(theta, g, "attention");
  if (theta.rank() != 4) throw std::invalid_argument("attention: inputs must be rank 4");
  const int n = theta.dim(0), d = theta.dim(1);
  const int m = theta.dim(2) * theta.dim(3);

  NodePtr out = make_op_node(theta.shape(), {theta.node(), phi.node(), g.node()});
  out->aux.assign((size_t)n * m * m, 0.0);
  const bool finite =
      kernels::attention_forward(theta.values().data(), phi.values().data(), g.values().data(),
                                 n, d, m, out->aux.data(), out->values.data());
  if (!finite) throw VerifyError("attention: non-finite affinities");

  if (out->requires_grad) {
    Node* self = out.get();
    Node* pt = theta.node().get();
    Node* pp = phi.node().get();
    Node* pg = g.node().get();
    out->backward_fn = [self, pt, pp, pg, n, d, m]() {
      pt->ensure_grad();
      pp->ensure_grad();
      pg->ensure_grad();
      kernels::attention_backward(self->grad.data(), pt->values.data(), pp->values.data(),
                                  pg->values.data(), self->aux.data(), n, d, m,
                                  pt->grad.data(), pp->grad.data(), pg->grad.data());
    };
  } else {
    out->aux.clear();
    out->aux.shrink_to_fit();
  }
  return Tensor::wrap(out);
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() != 4 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    throw std::invalid_argument("add_channel_bias: wants [N,C,H,W] and [C]");
  }
  const int n = x.dim(0), c = x.dim(1);
  const int64_t hw = (int64_t)x.dim(2) * x.dim(3);
  NodePtr out = make_op_node(x.shape(), {x.node(), bias.node()});
  const auto& xv = x.values();
  const auto& bv = bias.values();
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const double add = bv[(size_t)ch];
      const size_t off = ((size_t)b * c + ch) * hw;
      for (int64_t e = 0; e < hw; ++e) out->values[off + e] = xv[off + e] + add;
    }
  }
  if (out->requires_grad) {
    Node* self = out.get();
    Node* px = x.node().get();
    Node* pb = bias.node().get();
    out->backward_fn = [self, px, pb, n, c, hw]() {
      if (px->requires_grad) {
        px->ensure_grad();
        for (size_t e = 0; e < self->grad.size(); ++e) px->grad[e] += self->grad[e];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (int ch = 0; ch < c; ++ch) {
          double acc = 0.0;
          for (int b = 0; b < n; ++b) {
            const size_t off = ((size_t)b * c + ch) * hw;
            for (int64_t e = 0; e < hw; ++e) acc += self->grad[off + e];
          }
          pb->grad[(size_t)ch] += acc;
        }
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor zero_pad2d(const Tensor& x, int pad_bottom, int pad_right) {
  if (x.rank() != 4) throw std::invalid_argument("zero_pad2d: input must be rank 4");
  if (pad_bottom < 0 || pad_right < 0) throw std::invalid_argument("zero_pad2d: negative pad");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int ho = h + pad_bottom, wo = w + pad_right;
  NodePtr out = make_op_node({n, c, ho, wo}, {x.node()});
  const auto& xv = x.values();
  for (int p = 0; p < n * c; ++p) {
    for (int i = 0; i < h; ++i) {
      const size_t src = ((size_t)p * h + i) * w;
      const size_t dst = ((size_t)p * ho + i) * wo;
      std::copy(xv.begin() + src, xv.begin() + src + w, out->values.begin() + dst);
    }
  }
  if (out->requires_grad) {
    Node* self = out.get();
    Node* px = x.node().get();
    out->backward_fn = [self, px, n, c, h, w, ho, wo]() {
      px->ensure_grad();
      for (int p = 0; p < n * c; ++p) {
        for (int i = 0; i < h; ++i) {
          const size_t src = ((size_t)p * ho + i) * wo;
          const size_t dst = ((size_t)p * h + i) * w;
          for (int j = 0; j < w; ++j) px->grad[dst + j] += self->grad[src + j];
        }
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor crop2d(const Tensor& x, int out_h, int out_w) {
  if (x.rank() != 4) throw std::invalid_argument("crop2d: input must be rank 4");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (out_h < 1 || out_w < 1 || out_h > h || out_w > w) {
    throw std::invalid_argument("crop2d: window exceeds input");
  }
  NodePtr out = make_op_node({n, c, out_h, out_w}, {x.node()});
  const auto& xv = x.values();
  for (int p = 0; p < n * c; ++p) {
    for (int i = 0; i < out_h; ++i) {
      const size_t src = ((size_t)p * h + i) * w;
      const size_t dst = ((size_t)p * out_h + i) * out_w;
      std::copy(xv.begin() + src, xv.begin() + src + out_w, out->values.begin() + dst);
    }
  }
  if (out->requires_grad) {
    Node* self = out.get();
    Node* px = x.node().get();
    out->backward_fn = [self, px, n, c, h, w, out_h, out_w]() {
      px->ensure_grad();
      for (int p = 0; p < n * c; ++p) {
        for (int i = 0; i < out_h; ++i) {
          const size_t src = ((size_t)p * out_h + i) * out_w;
          const size_t dst = ((size_t)p * h + i) * w;
          for (int j = 0; j < out_w; ++j) px->grad[dst + j] += self->grad[src + j];
        }
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  require_same_shape(logits, targets, "bce_with_logits");
  const auto& tv = targets.values();
  for (double y : tv) {
    if (y != 0.0 && y != 1.0) throw std::invalid_argument("bce_with_logits: non-binary target");
  }
  NodePtr out = make_op_node({1}, {logits.node(), targets.node()});
  const auto& zv = logits.values();
  const double lo = LOG_CLAMP_EPS;
  const double hi = 1.0 - LOG_CLAMP_EPS;
  double acc = 0.0;
  for (size_t e = 0; e < zv.size(); ++e) {
    const double p = std::clamp(stable_sigmoid(zv[e]), lo, hi);
    acc += tv[e] * std::log(p) + (1.0 - tv[e]) * std::log(1.0 - p);
  }
  const double count = (double)zv.size();
  out->values[0] = -acc / count;
  if (out->requires_grad) {
    Node* self = out.get();
    Node* pz = logits.node().get();
    Node* pt = targets.node().get();
    out->backward_fn = [self, pz, pt, count]() {
      if (!pz->requires_grad) return;
      pz->ensure_grad();
      const double g = self->grad[0];
      for (size_t e = 0; e < pz->values.size(); ++e) {
        pz->grad[e] += g * (stable_sigmoid(pz->values[e]) - pt->values[e]) / count;
      }
    };
  }
  return Tensor::wrap(out);
}

}  // namespace connseg::ad
