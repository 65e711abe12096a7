#include "cfp/nn/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "cfp/error.hpp"

namespace cfp::nn {

template <typename T>
void sgd_step(ParamSet<T>& params, const ParamSet<T>& grads, double lr, const SgdConfig& cfg,
              ParamSet<T>& velocity) {
  params.require_same_layout(grads, "sgd_step");
  params.require_same_layout(velocity, "sgd_step");
  const T mu = static_cast<T>(cfg.momentum);
  const T wd = static_cast<T>(cfg.weight_decay);
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.count(); ++i) {
    auto& p = params.tensor(i).data;
    auto& v = velocity.tensor(i).data;
    const auto& g = grads.tensor(i).data;
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = mu * v[j] + g[j] + wd * p[j];
      p[j] = p[j] - rate * v[j];
    }
  }
}

template void sgd_step<float>(ParamSet<float>&, const ParamSet<float>&, double, const SgdConfig&,
                              ParamSet<float>&);
template void sgd_step<double>(ParamSet<double>&, const ParamSet<double>&, double,
                               const SgdConfig&, ParamSet<double>&);

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0) {
  if (total_steps == 0) throw ConfigError("cosine_lr: total_steps must be positive");
  if (step > total_steps) {
    throw ConfigError("cosine_lr: step " + std::to_string(step) + " exceeds total " +
                      std::to_string(total_steps));
  }
  return 0.5 * lr0 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

}  // namespace cfp::nn
