#pragma once

#include <string>
#include <vector>

#include "ccr/tensor.hpp"

namespace ccr {

// SGD with classical momentum: v <- mu*v + g; p <- p - lr*v.
struct OptimizerState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::vector<Tensor> velocity;  // zero-initialized, shapes match parameters

  static OptimizerState create(const std::vector<Tensor*>& params, double lr, double mu) {
    if (!(lr > 0.0) && lr != 0.0) throw std::invalid_argument("sgd: learning rate must be >= 0");
    if (mu < 0.0 || mu >= 1.0) throw std::invalid_argument("sgd: momentum must be in [0,1)");
    OptimizerState st;
    st.learning_rate = lr;
    st.momentum = mu;
    st.velocity.reserve(params.size());
    for (const Tensor* p : params) st.velocity.emplace_back(p->shape());
    return st;
  }
};

inline void sgd_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                     OptimizerState& state) {
  if (params.size() != grads.size() || params.size() != state.velocity.size()) {
    throw ShapeError("sgd_step: parameter/gradient/velocity counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    Tensor& v = state.velocity[i];
    if (!p.same_shape(g) || !p.same_shape(v)) {
      throw ShapeError("sgd_step: shape mismatch at parameter " + std::to_string(i) + ": param " +
                       shape_to_string(p.shape()) + " grad " + shape_to_string(g.shape()));
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = state.momentum * v[j] + g[j];
      p[j] -= state.learning_rate * v[j];
    }
  }
}

}  // namespace ccr
