#pragma once

#include <cstddef>

#include "pfesta/model/params.hpp"

namespace pfesta::model {

enum class OptimizerKind { Sgd, Adam };

// Plain SGD or Adam over a ParamSet. Parameters without a gradient entry are
// left untouched.
class Optimizer {
 public:
  explicit Optimizer(OptimizerKind kind = OptimizerKind::Sgd, float beta1 = 0.9f, float beta2 = 0.999f,
                     float eps = 1e-8f)
      : kind_(kind), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamSet& params, const ParamSet& grads, float lr);

  OptimizerKind kind() const { return kind_; }

  // Adam moments are per replica; a replaced parameter set keeps its moments.
  void reset() {
    first_.clear();
    second_.clear();
    steps_ = 0;
  }

 private:
  OptimizerKind kind_;
  float beta1_, beta2_, eps_;
  ParamSet first_, second_;
  std::size_t steps_ = 0;
};

}  // namespace pfesta::model
