#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "pfesta/engine/graph.hpp"

namespace pfesta::model {

// Named tensors in name order. The order is the wire order whenever a
// parameter set travels in a message.
template <typename T>
using BasicParamSet = std::map<std::string, BasicTensor<T>>;
using ParamSet = BasicParamSet<float>;

template <typename T>
using VarMap = std::map<std::string, BasicVar<T>>;

std::size_t element_count(const ParamSet& params);

template <typename T>
BasicParamSet<T> cast_params(const ParamSet& params) {
  BasicParamSet<T> out;
  for (const auto& [name, t] : params) out.emplace(name, t.template cast<T>());
  return out;
}

// Registers each tensor as a graph leaf named prefix + name.
template <typename T>
VarMap<T> bind(BasicGraph<T>& graph, const BasicParamSet<T>& params, const std::string& prefix, bool trainable) {
  VarMap<T> out;
  for (const auto& [name, t] : params) out.emplace(name, graph.leaf(prefix + name, t, trainable));
  return out;
}

// Picks the gradients whose names start with prefix and strips the prefix.
template <typename T>
BasicParamSet<T> take_prefixed(const Gradients<T>& grads, const std::string& prefix) {
  BasicParamSet<T> out;
  for (const auto& [name, g] : grads) {
    if (name.starts_with(prefix)) out.emplace(name.substr(prefix.size()), g);
  }
  return out;
}

template <typename T>
const BasicVar<T>& param(const VarMap<T>& vars, const std::string& name) {
  auto it = vars.find(name);
  if (it == vars.end()) throw ContractError("missing parameter '" + name + "'");
  return it->second;
}

// Zero tensors with the same names and shapes.
ParamSet zeros_like(const ParamSet& params);

// Elementwise mean of parameter sets that share names and shapes.
// Throws ContractError when the sets are heterogeneous.
ParamSet average(const std::vector<const ParamSet*>& sets);

bool same_layout(const ParamSet& a, const ParamSet& b);

// dst += alpha * src for every name of src (names must exist in dst).
void axpy(ParamSet& dst, float alpha, const ParamSet& src);

// Flattening to/from an ordered tensor list (name order).
std::vector<Tensor> to_tensor_list(const ParamSet& params);
void assign_from_tensor_list(ParamSet& params, const std::vector<Tensor>& tensors);

// Checkpoint container: a sequence of entries until end of stream, each
//   u32 name length | name bytes | u32 rank | u32 dims[rank] | f32 payload
// with every integer and float little-endian.
void write_checkpoint(std::ostream& out, const ParamSet& params);
ParamSet read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const ParamSet& params);
ParamSet load_checkpoint(const std::string& path);

}  // namespace pfesta::model
