#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "steerlab/tensor.hpp"

namespace steerlab {

struct AdamHyperparams {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

// Per-parameter Adam accumulators. Moments always match the parameter shape
// and t advances by exactly one per step.
struct AdamState {
  Tensor m;
  Tensor v;
  int64_t t = 0;
  AdamHyperparams hp;

  explicit AdamState(const std::vector<int>& shape, AdamHyperparams h = {})
      : m(shape), v(shape), hp(h) {}
  AdamState() = default;
};

// Standard Adam with bias correction. lr_scale lets a schedule modulate the
// base rate without mutating the stored hyperparameters.
inline void adam_step(Tensor& param, const Tensor& grad, AdamState& state, float lr_scale = 1.0f) {
  require_same_shape(param, grad, "adam_step");
  require_same_shape(param, state.m, "adam_step (first moment)");
  require_same_shape(param, state.v, "adam_step (second moment)");
  state.t += 1;
  const float b1 = state.hp.beta1, b2 = state.hp.beta2;
  const float corr1 = 1.0f - std::pow(b1, static_cast<float>(state.t));
  const float corr2 = 1.0f - std::pow(b2, static_cast<float>(state.t));
  const float lr = state.hp.lr * lr_scale;
  for (size_t i = 0; i < param.data.size(); ++i) {
    float g = grad.data[i];
    float m = state.m.data[i] = b1 * state.m.data[i] + (1.0f - b1) * g;
    float v = state.v.data[i] = b2 * state.v.data[i] + (1.0f - b2) * g * g;
    float m_hat = m / corr1;
    float v_hat = v / corr2;
    param.data[i] -= lr * m_hat / (std::sqrt(v_hat) + state.hp.epsilon);
  }
}

// Global L2-norm gradient clip across a set of gradient tensors.
// Returns the pre-clip norm.
inline double clip_gradients(std::vector<Tensor*> grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor* g : grads)
    for (float x : g->data) sq += static_cast<double>(x) * x;
  double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    float s = static_cast<float>(max_norm / norm);
    for (Tensor* g : grads)
      for (float& x : g->data) x *= s;
  }
  return norm;
}

}  // namespace steerlab
