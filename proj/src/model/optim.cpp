#include "pfesta/model/optim.hpp"

#include <cmath>

namespace pfesta::model {

void Optimizer::step(ParamSet& params, const ParamSet& grads, float lr) {
  if (kind_ == OptimizerKind::Sgd) {
    axpy(params, -lr, grads);
    return;
  }
  ++steps_;
  const float c1 = 1.0f - std::pow(beta1_, static_cast<float>(steps_));
  const float c2 = 1.0f - std::pow(beta2_, static_cast<float>(steps_));
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("optimizer: unknown parameter '" + name + "'");
    auto& m = first_.try_emplace(name, Tensor(g.shape())).first->second;
    auto& v = second_.try_emplace(name, Tensor(g.shape())).first->second;
    auto w = it->second.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0f - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0f - beta2_) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

}  // namespace pfesta::model
