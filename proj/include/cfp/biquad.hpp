#pragma once

#include <cmath>
#include <numbers>
#include <vector>

namespace cfp::dsp {

// Direct-form-I biquad with RBJ cookbook designs (bilinear transform,
// prewarped at the design frequency).
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;

  static Biquad lowpass(double cutoff_hz, double rate, double q = std::numbers::sqrt2 / 2) {
    const double w = 2.0 * std::numbers::pi * cutoff_hz / rate;
    const double alpha = std::sin(w) / (2.0 * q);
    const double c = std::cos(w);
    const double a0 = 1.0 + alpha;
    return {(1.0 - c) / 2.0 / a0, (1.0 - c) / a0, (1.0 - c) / 2.0 / a0, -2.0 * c / a0,
            (1.0 - alpha) / a0};
  }

  static Biquad highpass(double cutoff_hz, double rate, double q = std::numbers::sqrt2 / 2) {
    const double w = 2.0 * std::numbers::pi * cutoff_hz / rate;
    const double alpha = std::sin(w) / (2.0 * q);
    const double c = std::cos(w);
    const double a0 = 1.0 + alpha;
    return {(1.0 + c) / 2.0 / a0, -(1.0 + c) / a0, (1.0 + c) / 2.0 / a0, -2.0 * c / a0,
            (1.0 - alpha) / a0};
  }

  // Constant 0 dB peak gain band-pass.
  static Biquad bandpass(double center_hz, double rate, double q) {
    const double w = 2.0 * std::numbers::pi * center_hz / rate;
    const double alpha = std::sin(w) / (2.0 * q);
    const double c = std::cos(w);
    const double a0 = 1.0 + alpha;
    return {alpha / a0, 0.0, -alpha / a0, -2.0 * c / a0, (1.0 - alpha) / a0};
  }

  // Runs the filter over x from zero initial state.
  std::vector<double> run(const std::vector<double>& x) const {
    std::vector<double> y(x.size());
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (std::size_t n = 0; n < x.size(); ++n) {
      const double v = b0 * x[n] + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = x[n];
      y2 = y1;
      y1 = v;
      y[n] = v;
    }
    return y;
  }
};

}  // namespace cfp::dsp
