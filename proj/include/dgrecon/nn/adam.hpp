#pragma once

#include "dgrecon/nn/autograd.hpp"

#include <span>
#include <vector>

namespace dgrecon::nn {

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// Bias-corrected Adam update using each parameter's accumulated gradient.
/// Throws, naming the parameter, on a non-finite gradient; nothing is
/// modified in that case.
void adam_step(std::span<Parameter> params, AdamState& state);

}  // namespace dgrecon::nn
