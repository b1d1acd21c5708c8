#include "pfesta/engine/graph.hpp"

#include <algorithm>

namespace pfesta {

template <typename T>
typename BasicGraph<T>::Var BasicGraph<T>::leaf(std::string name, TensorT value, bool trainable) {
  if (name.empty()) throw ContractError("graph leaves need a non-empty name");
  if (named_.contains(name)) throw ContractError("duplicate graph leaf name: " + name);
  const std::size_t id = nodes_.size();
  named_.emplace(name, id);
  nodes_.push_back(Node{std::move(value), std::move(name), trainable, {}});
  return Var{this, id};
}

template <typename T>
typename BasicGraph<T>::Var BasicGraph<T>::constant(TensorT value) {
  const std::size_t id = nodes_.size();
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var{this, id};
}

template <typename T>
typename BasicGraph<T>::Var BasicGraph<T>::record(TensorT value, const std::vector<std::size_t>& inputs,
                                                  BackwardFn backward) {
  const std::size_t id = nodes_.size();
  bool needs = false;
  for (auto in : inputs) {
    if (in >= id) throw ContractError("graph node input must precede the node");
    needs = needs || nodes_[in].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : BackwardFn{}});
  return Var{this, id};
}

template <typename T>
void BasicGraph<T>::accumulate(std::size_t id, const TensorT& grad) {
  if (!nodes_[id].requires_grad) return;
  auto& slot = grads_[id];
  if (!slot) {
    slot = grad;
  } else {
    add_inplace(*slot, grad);
  }
}

template <typename T>
void BasicGraph<T>::accumulate(std::size_t id, TensorT&& grad) {
  if (!nodes_[id].requires_grad) return;
  auto& slot = grads_[id];
  if (!slot) {
    slot = std::move(grad);
  } else {
    add_inplace(*slot, grad);
  }
}

template <typename T>
Gradients<T> BasicGraph<T>::backward(Var loss) {
  if (loss.graph != this) throw ContractError("loss belongs to another graph");
  if (value(loss.id).size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(value(loss.id).shape()));
  }
  return backward(loss, TensorT(value(loss.id).shape(), T{1}));
}

template <typename T>
Gradients<T> BasicGraph<T>::backward(Var output, const TensorT& seed) {
  if (output.graph != this) throw ContractError("output belongs to another graph");
  if (seed.shape() != value(output.id).shape()) {
    throw DimensionError("backward seed shape " + shape_string(seed.shape()) + " does not match output " +
                         shape_string(value(output.id).shape()));
  }
  grads_.assign(nodes_.size(), std::nullopt);
  accumulate(output.id, seed);
  for (std::size_t i = output.id + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.backward || !grads_[i]) continue;
    node.backward(*this, *grads_[i]);
  }
  Gradients<T> out;
  for (const auto& [name, id] : named_) {
    if (nodes_[id].requires_grad && grads_[id]) out.emplace(name, *grads_[id]);
  }
  return out;
}

template <typename T>
const typename BasicGraph<T>::TensorT* BasicGraph<T>::gradient(Var v) const {
  if (v.id >= grads_.size() || !grads_[v.id]) return nullptr;
  return &*grads_[v.id];
}

template class BasicGraph<float>;
template class BasicGraph<double>;

}  // namespace pfesta
