#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace connseg::ad {

using Shape = std::vector<int>;

int64_t shape_size(const Shape& shape);

class Node;
using NodePtr = std::shared_ptr<Node>;

/// One recorded value in the computation graph. Nodes carry a monotonically
/// increasing sequence number assigned at execution time; backward() visits
/// reachable nodes strictly in reverse sequence order, which makes gradient
/// accumulation deterministic.
class Node {
 public:
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated lazily, same length as values
  bool requires_grad = false;
  uint64_t seq = 0;
  std::vector<NodePtr> parents;
  std::function<void()> backward_fn;  // adds this node's grad into the parents'
  std::vector<double> aux;            // scratch some ops keep for backward

  void ensure_grad();
};

/// Value-semantics handle to a graph node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor variable(Shape shape, std::vector<double> values);
  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor wrap(NodePtr n);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[(size_t)i]; }
  int rank() const { return (int)node_->shape.size(); }
  int64_t size() const { return (int64_t)node_->values.size(); }
  const std::vector<double>& values() const { return node_->values; }
  std::vector<double>& mutable_values() { return node_->values; }
  const std::vector<double>& grad() const;
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad();
  double item() const;  // scalar tensors only

  NodePtr node() const { return node_; }

 private:
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}
  NodePtr node_;
};

/// Reverse-mode pass from a scalar. Seeds d(loss)/d(loss) = 1 and replays the
/// recorded operations in exact reverse execution order.
void backward(const Tensor& scalar_loss);

/// Central finite-difference verification of d(forward())/d(params).
/// Returns the maximum over all parameter elements of
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
double grad_check(const std::function<Tensor()>& forward,
                  const std::vector<Tensor>& params, double eps = 1e-5);

namespace detail {
uint64_t next_seq();
}

}  // namespace connseg::ad
