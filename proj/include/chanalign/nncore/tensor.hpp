#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace nncore {

// All network math runs in double. Finite-difference gradient checks need
// the headroom, and single-core Eigen dgemm is fast enough for desk-scale
// training.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

class Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the dynamically built computation graph. Values and grads
// are flat row-major buffers; `shape` carries the logical dimensions.
class Node {
 public:
  std::vector<int> shape;
  Eigen::ArrayXd value;
  Eigen::ArrayXd grad;  // allocated lazily during backward()
  bool requires_grad = false;  // leaf parameter flag
  bool needs_grad = false;     // true if any leaf below requires grad
  std::vector<NodePtr> parents;
  // Pulls this node's grad into the parents' grads. Null for leaves.
  std::function<void(Node&)> backward_fn;

  int64_t size() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad = Eigen::ArrayXd::Zero(value.size());
  }
};

// Value-semantics handle to a graph node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor from_data(std::vector<int> shape, const double* data, bool requires_grad = false);
  static Tensor from_vector(std::vector<int> shape, const std::vector<double>& data,
                            bool requires_grad = false);
  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int64_t size() const { return node_->size(); }

  Eigen::ArrayXd& data() const { return node_->value; }
  Eigen::ArrayXd& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  bool needs_grad() const { return node_->needs_grad; }

  // Scalar extraction; only valid for 1-element tensors.
  double item() const;

  Node* node() const { return node_.get(); }
  const NodePtr& ptr() const { return node_; }

 private:
  NodePtr node_;
};

// Builds a graph node with freshly allocated (uninitialized) value storage.
Tensor make_node(std::vector<int> shape, std::vector<NodePtr> parents,
                 std::function<void(Node&)> backward_fn);

int64_t numel(const std::vector<int>& shape);

// Reverse-mode sweep from a scalar loss. Accumulates into .grad of every
// node on the path to a requires_grad leaf. Throws on non-scalar loss.
void backward(const Tensor& loss);

}  // namespace nncore
