#include "chanalign/nncore/tensor.hpp"

#include <stdexcept>
#include <unordered_set>

namespace nncore {

int64_t numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

Tensor Tensor::from_data(std::vector<int> shape, const double* data, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  int64_t count = numel(n->shape);
  n->value = Eigen::Map<const Eigen::ArrayXd>(data, count);
  n->requires_grad = requires_grad;
  n->needs_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from_vector(std::vector<int> shape, const std::vector<double>& data,
                           bool requires_grad) {
  if (numel(shape) != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("Tensor::from_vector: shape/data size mismatch");
  return from_data(std::move(shape), data.data(), requires_grad);
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = Eigen::ArrayXd::Zero(numel(n->shape));
  n->requires_grad = requires_grad;
  n->needs_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, double v, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  t.data().setConstant(v);
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) { return full({1}, v, requires_grad); }

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("Tensor::item: tensor is not scalar");
  return node_->value[0];
}

Tensor make_node(std::vector<int> shape, std::vector<NodePtr> parents,
                 std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value.resize(numel(n->shape));
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->needs_grad) n->needs_grad = true;
  if (n->needs_grad) n->backward_fn = std::move(backward_fn);
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a defined scalar tensor");

  // Iterative post-order DFS; parent visit order is construction order, so
  // the sweep is deterministic.
  std::vector<Node*> topo;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* n;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node(), 0});
  visited.insert(loss.node());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.n->parents.size()) {
      Node* p = f.n->parents[f.next_parent++].get();
      if (p->needs_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      topo.push_back(f.n);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace nncore
