#pragma once
// Reverse-mode computation record. Ops append nodes in execution order, so
// the record is topological by construction; backward() walks it once in
// reverse, accumulates into leaf gradients, then clears the record.

#include <array>
#include <functional>
#include <stdexcept>
#include <vector>

#include "astrodiff/core/tensor.hpp"

namespace astrodiff::tg {

template <class S>
class Tape;

template <class S>
struct Var {
  Tape<S>* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

template <class S>
class Tape {
 public:
  struct Node {
    Tensor<S> value;
    std::vector<S> grad;  // lazily sized to value.data.size()
    std::array<int, 3> parents{-1, -1, -1};
    std::function<void(Tape&, Node&)> backward;
    Tensor<S>* leaf = nullptr;
    bool needs_grad = false;
  };

  // Binds an external tensor as a leaf. The tensor must outlive backward();
  // its grad receives the accumulated gradient when requires_grad is set.
  Var<S> leaf(Tensor<S>& t) {
    Node n;
    n.value = t;
    n.leaf = &t;
    n.needs_grad = t.requires_grad;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  Var<S> constant(Tensor<S> t) {
    Node n;
    n.value = std::move(t);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  Var<S> emplace(Node n) {
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor<S>& value(Var<S> v) const { return nodes_[v.id].value; }
  Node& node(int id) { return nodes_[id]; }
  size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  std::vector<S>& grad_buf(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.data.size()) n.grad.assign(n.value.data.size(), S(0));
    return n.grad;
  }

  // Chain rule from a scalar loss down to every requires_grad leaf.
  void backward(Var<S> loss) {
    if (empty()) throw std::invalid_argument("backward: computation record is empty");
    if (loss.tape != this || loss.id < 0 || loss.id >= static_cast<int>(nodes_.size()))
      throw std::invalid_argument("backward: loss is not on this record");
    if (!nodes_[loss.id].value.is_scalar())
      throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                  shape_str(nodes_[loss.id].value.shape));
    grad_buf(loss.id)[0] = S(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, n);
    }
    for (Node& n : nodes_) {
      if (n.leaf != nullptr && n.leaf->requires_grad && !n.grad.empty()) {
        n.leaf->ensure_grad();
        for (size_t k = 0; k < n.grad.size(); ++k) n.leaf->grad[k] += n.grad[k];
      }
    }
    nodes_.clear();
  }

  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

using Tapef = Tape<float>;
using Taped = Tape<double>;

}  // namespace astrodiff::tg
