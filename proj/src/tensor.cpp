#include "connseg/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "connseg/errors.hpp"

namespace connseg::ad {

namespace {
std::atomic<uint64_t> g_next_seq{1};
}

namespace detail {
uint64_t next_seq() { return g_next_seq.fetch_add(1); }
}

int64_t shape_size(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 1) throw std::invalid_argument("tensor dimensions must be >= 1");
    n *= d;
  }
  return n;
}

void Node::ensure_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

namespace {

NodePtr make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  const int64_t n = shape_size(shape);
  if ((int64_t)values.size() != n) {
    throw std::invalid_argument("value count does not match shape");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  node->seq = detail::next_seq();
  return node;
}

}  // namespace

Tensor Tensor::variable(Shape shape, std::vector<double> values) {
  return Tensor(make_leaf(std::move(shape), std::move(values), true));
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return Tensor(make_leaf(std::move(shape), std::move(values), false));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const int64_t n = shape_size(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>((size_t)n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const int64_t n = shape_size(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>((size_t)n, value), requires_grad));
}

Tensor Tensor::wrap(NodePtr n) { return Tensor(std::move(n)); }

const std::vector<double>& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  node_->ensure_grad();
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (node_->values.size() != 1) throw std::logic_error("item() requires a scalar tensor");
  return node_->values[0];
}

void backward(const Tensor& scalar_loss) {
  NodePtr root = scalar_loss.node();
  if (!root) throw std::logic_error("backward on an undefined tensor");
  if (root->values.size() != 1) throw std::logic_error("backward requires a scalar loss");

  // Collect the reachable subgraph, then replay in reverse execution order.
  std::vector<NodePtr> order;
  std::unordered_set<Node*> seen;
  std::vector<NodePtr> stack{root};
  while (!stack.empty()) {
    NodePtr n = stack.back();
    stack.pop_back();
    if (!seen.insert(n.get()).second) continue;
    order.push_back(n);
    for (const NodePtr& p : n->parents) stack.push_back(p);
  }
  std::sort(order.begin(), order.end(),
            [](const NodePtr& a, const NodePtr& b) { return a->seq > b->seq; });

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (const NodePtr& n : order) {
    if (n->requires_grad && n->backward_fn) {
      n->ensure_grad();
      n->backward_fn();
    }
  }
}

double grad_check(const std::function<Tensor()>& forward,
                  const std::vector<Tensor>& params, double eps) {
  for (const Tensor& p : params) {
    if (!p.requires_grad()) throw std::logic_error("grad_check parameter without requires_grad");
  }

  Tensor loss = forward();
  if (!std::isfinite(loss.item())) throw VerifyError("grad_check: non-finite loss");
  for (Tensor p : params) p.zero_grad();
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const Tensor& p : params) analytic.push_back(p.grad());

  double max_rel = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    auto& vals = p.mutable_values();
    for (size_t e = 0; e < vals.size(); ++e) {
      const double saved = vals[e];
      vals[e] = saved + eps;
      const double up = forward().item();
      vals[e] = saved - eps;
      const double down = forward().item();
      vals[e] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw VerifyError("grad_check: non-finite perturbed loss");
      }
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[pi][e];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-12});
      max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace connseg::ad
