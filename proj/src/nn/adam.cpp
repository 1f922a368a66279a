#include "dgrecon/nn/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace dgrecon::nn {

void adam_step(std::span<Parameter> params, AdamState& state) {
  if (state.m.empty() && state.v.empty()) {
    for (auto& p : params) {
      state.m.emplace_back(p.value().shape(), 0.0);
      state.v.emplace_back(p.value().shape(), 0.0);
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state tracks " +
                                std::to_string(state.m.size()) + " tensors, got " +
                                std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].shape() != params[i].value().shape()) {
      throw std::invalid_argument("adam_step: moment shape mismatch for " + params[i].name);
    }
    for (double g : params[i].grad().storage()) {
      if (!std::isfinite(g)) {
        throw std::runtime_error("adam_step: non-finite gradient in parameter '" +
                                 params[i].name + "'");
      }
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = params[i].value();
    const Tensor& g = params[i].grad();
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double mh = m[k] / c1;
      const double vh = v[k] / c2;
      w[k] -= state.lr * mh / (std::sqrt(vh) + state.eps);
    }
  }
}

}  // namespace dgrecon::nn
