#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pfesta/engine/tensor.hpp"

namespace pfesta {

template <typename T>
class BasicGraph;

// Handle to a node of a graph. Cheap to copy; valid while the graph lives.
template <typename T>
struct BasicVar {
  BasicGraph<T>* graph = nullptr;
  std::size_t id = 0;

  const BasicTensor<T>& value() const { return graph->value(id); }
  const Shape& shape() const { return graph->value(id).shape(); }
};

template <typename T>
using Gradients = std::map<std::string, BasicTensor<T>>;

// Reverse-mode tape. Nodes are appended in evaluation order, so node ids are a
// topological order and backward simply walks them in reverse.
//
// Leaves are either named (parameters or inputs whose gradient the caller
// wants back) or anonymous constants. A node requires a gradient iff one of its
// inputs does; nodes that don't keep no backward closure.
template <typename T>
class BasicGraph {
 public:
  using TensorT = BasicTensor<T>;
  using Var = BasicVar<T>;
  using BackwardFn = std::function<void(BasicGraph&, const TensorT& grad_out)>;

  BasicGraph() = default;
  BasicGraph(const BasicGraph&) = delete;
  BasicGraph& operator=(const BasicGraph&) = delete;

  // Named leaf. Trainable leaves receive gradients; frozen ones never do.
  Var leaf(std::string name, TensorT value, bool trainable);
  Var constant(TensorT value);

  // Appends an op node. `backward` receives dL/d(output) and must call
  // accumulate() for each input that requires a gradient.
  Var record(TensorT value, const std::vector<std::size_t>& inputs, BackwardFn backward);

  const TensorT& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  void accumulate(std::size_t id, const TensorT& grad);
  void accumulate(std::size_t id, TensorT&& grad);

  // Gradients of a scalar loss with respect to every trainable named leaf that
  // the loss depends on. Throws ContractError for a non-scalar loss.
  Gradients<T> backward(Var loss);

  // Vector-Jacobian product: propagates `seed` = dL/d(output) backwards.
  Gradients<T> backward(Var output, const TensorT& seed);

  // Gradient of any node from the most recent backward call, or nullptr.
  const TensorT* gradient(Var v) const;

 private:
  struct Node {
    TensorT value;
    std::string name;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::vector<std::optional<TensorT>> grads_;
  std::map<std::string, std::size_t> named_;
};

using Graph = BasicGraph<float>;
using Var = BasicVar<float>;

}  // namespace pfesta
