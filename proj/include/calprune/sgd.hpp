#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "calprune/array.hpp"
#include "calprune/diff_graph.hpp"
#include "calprune/model.hpp"

namespace calprune {

struct SgdHyper {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

/// g' = g + wd * theta;  v <- momentum * v + g';  theta <- theta - lr * v
inline void sgd_update(Array& param, const Array& grad, Array& velocity, const SgdHyper& h) {
  if (param.shape() != grad.shape() || param.shape() != velocity.shape()) {
    throw std::invalid_argument("sgd_update: parameter " + shape_string(param.shape()) + ", gradient " +
                                shape_string(grad.shape()) + " and velocity " + shape_string(velocity.shape()) +
                                " must share a shape");
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i] + h.weight_decay * param[i];
    velocity[i] = h.momentum * velocity[i] + g;
    param[i] -= h.learning_rate * velocity[i];
  }
}

/// Momentum buffers for every weight and bias of an MLP, zero initialised.
struct Velocity {
  std::vector<Array> weights;
  std::vector<Array> biases;

  static Velocity zeros_like(const MlpParams& p) {
    Velocity v;
    for (const auto& w : p.weights) v.weights.push_back(Array::zeros(w.shape()));
    for (const auto& b : p.biases) v.biases.push_back(Array::zeros(b.shape()));
    return v;
  }
};

inline void sgd_update(MlpParams& params, const Gradients& grads, Velocity& velocity, const SgdHyper& h) {
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    sgd_update(params.weights[l], grads.at(weight_name(l)), velocity.weights[l], h);
    sgd_update(params.biases[l], grads.at(bias_name(l)), velocity.biases[l], h);
  }
}

}  // namespace calprune
