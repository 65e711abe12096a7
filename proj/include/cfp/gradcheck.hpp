#pragma once

// Central finite-difference checks of every layer's backward pass and of the
// full encoder + InfoNCE composition.
//
// Each component is evaluated twice: with float64 arithmetic throughout, and
// with the analytic gradient taken in float32. Difference quotients always
// come from the float64 forward at a small step; near 1e-3 of the weight
// scale a step crosses ReLU and max-pool switch points, and a float32 forward
// is too coarse for anything smaller.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace cfp::gradcheck {

struct Options {
  std::uint64_t seed = 0;
  std::size_t coords = 20;  // sampled scalars per component
  double step = 1e-6;
  double tol_f64 = 1e-6;
  double tol_f32 = 1e-3;
};

struct Component {
  std::string name;
  std::size_t checked = 0;
  double worst_f64 = 0.0;  // max relative error, float64 analytic gradient
  double worst_f32 = 0.0;  // same, float32 analytic gradient
  bool pass = false;
};

// Relative error |a - fd| / max(|fd|, floor) with floor 1e-3 (float64) or
// 1e-2 (float32), so coordinates whose gradient is zero do not divide by zero.
std::vector<Component> run(const Options& opt);

bool all_pass(const std::vector<Component>& comps);

std::string format(const Component& c);

}  // namespace cfp::gradcheck
