#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ynet/errors.hpp"
#include "ynet/tensor.hpp"

namespace ynet {

// Adam with bias correction. Only the learning rate comes from the training
// setup; the remaining constants are the optimizer's published defaults.
template <typename S>
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int64_t step = 0;
  std::vector<std::vector<S>> m;  // first moments, one per parameter
  std::vector<std::vector<S>> v;  // second moments

  explicit AdamState(double learning_rate = 1e-4) : lr(learning_rate) {
    if (lr <= 0) throw ConfigError("Adam learning rate must be positive");
  }
};

template <typename S>
void adam_step(std::vector<Tensor<S>>& params, AdamState<S>& state) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(static_cast<size_t>(params[i].size()), S(0));
      state.v[i].assign(static_cast<size_t>(params[i].size()), S(0));
    }
  }
  if (state.m.size() != params.size())
    throw UsageError("adam_step: parameter list changed size");
  for (size_t i = 0; i < params.size(); ++i)
    if (!params[i].has_grad())
      throw UsageError("adam_step: parameter " + std::to_string(i) + " has no gradient");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    S* w = params[i].data();
    const std::vector<S>& g = params[i].grad();
    S* m = state.m[i].data();
    S* v = state.v[i].data();
    for (size_t j = 0; j < g.size(); ++j) {
      m[j] = static_cast<S>(state.beta1) * m[j] + static_cast<S>(1.0 - state.beta1) * g[j];
      v[j] = static_cast<S>(state.beta2) * v[j] + static_cast<S>(1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= static_cast<S>(state.lr * mhat / (std::sqrt(vhat) + state.epsilon));
    }
  }
}

}  // namespace ynet
