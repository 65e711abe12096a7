#pragma once

#include <cstddef>

#include "cfp/nn/params.hpp"

namespace cfp::nn {

struct SgdConfig {
  double momentum = 0.9;
  double weight_decay = 0.0001;
};

// v <- momentum * v + grad + weight_decay * p;  p <- p - lr * v
template <typename T>
void sgd_step(ParamSet<T>& params, const ParamSet<T>& grads, double lr, const SgdConfig& cfg,
              ParamSet<T>& velocity);

// 0.5 * lr0 * (1 + cos(pi * step / total_steps)). Throws ConfigError unless
// 0 <= step <= total_steps and total_steps > 0.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0 = 0.03);

}  // namespace cfp::nn
