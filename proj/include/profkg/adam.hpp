#pragma once

#include <cmath>
#include <cstdint>

#include "profkg/model.hpp"

namespace profkg {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

template <typename T>
struct OptimizerState {
  ModelParams<T> first_moment;
  ModelParams<T> second_moment;
  std::uint64_t step = 0;

  static OptimizerState for_params(const ModelParams<T>& p) { return {p.zeros_like(), p.zeros_like(), 0}; }
};

template <typename T>
void adam_step(ModelParams<T>& params, OptimizerState<T>& state, const ModelParams<T>& grads,
               const AdamConfig& cfg) {
  ++state.step;
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T lr = static_cast<T>(cfg.learning_rate), eps = static_cast<T>(cfg.epsilon);
  const T decay = static_cast<T>(cfg.learning_rate * cfg.weight_decay);
  const T c1 = T(1) - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(state.step)));
  const T c2 = T(1) - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(state.step)));
  auto p = params.tensors();
  auto m = state.first_moment.tensors();
  auto v = state.second_moment.tensors();
  auto g = grads.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i]->size() == 0) continue;
    m[i]->array() = b1 * m[i]->array() + (T(1) - b1) * g[i]->array();
    v[i]->array() = b2 * v[i]->array() + (T(1) - b2) * g[i]->array().square();
    if (decay != T(0)) *p[i] -= decay * *p[i];
    p[i]->array() -= lr * (m[i]->array() / c1) / ((v[i]->array() / c2).sqrt() + eps);
  }
}

}  // namespace profkg
