#include <algorithm>
#include <cmath>
#include <numbers>

#include "cfp/degrade.hpp"
#include "cfp/fft.hpp"

namespace cfp::degrade {
namespace {

constexpr std::size_t kFrame = 1024;
constexpr std::size_t kHop = 256;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_phase(double p) { return p - kTwoPi * std::round(p / kTwoPi); }

const std::vector<double>& hann_periodic() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kFrame);
    for (std::size_t i = 0; i < kFrame; ++i) {
      v[i] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) / kFrame);
    }
    return v;
  }();
  return w;
}

}  // namespace

// Frames are centred on k * hop in the output and k * hop / stretch in the
// input. Peak bins advance their phase by their instantaneous frequency; all
// other bins keep their phase offset to the peak whose region they fall in.
std::vector<float> phase_vocoder(const std::vector<float>& x, std::size_t out_len) {
  std::vector<float> out(out_len, 0.0f);
  if (x.empty() || out_len == 0) return out;

  const double stretch = static_cast<double>(out_len) / static_cast<double>(x.size());
  const double analysis_hop = static_cast<double>(kHop) / stretch;
  const auto& win = hann_periodic();
  const fft::Plan& plan = fft::plan_for(kFrame);
  constexpr std::size_t kBins = kFrame / 2 + 1;
  const auto half = static_cast<std::ptrdiff_t>(kFrame / 2);
  const auto in_len = static_cast<std::ptrdiff_t>(x.size());

  // Enough frames on both sides that every output sample sees full window overlap.
  const std::ptrdiff_t k_first = -static_cast<std::ptrdiff_t>(kFrame / kHop);
  const std::ptrdiff_t k_last =
      static_cast<std::ptrdiff_t>((out_len + kHop - 1) / kHop) + static_cast<std::ptrdiff_t>(kFrame / kHop);

  std::vector<double> acc(out_len, 0.0);
  std::vector<double> wsum(out_len, 0.0);
  std::vector<fft::cplx> buf(kFrame);
  std::vector<fft::cplx> spec[2] = {std::vector<fft::cplx>(kBins), std::vector<fft::cplx>(kBins)};
  std::vector<fft::cplx> synth[2] = {std::vector<fft::cplx>(kBins), std::vector<fft::cplx>(kBins)};
  std::vector<double> mag(kBins), phase(kBins), prev_phase(kBins), out_phase(kBins);
  std::vector<double> peak_phase;
  std::vector<std::size_t> peaks;
  peaks.reserve(kBins);
  bool first = true;
  std::ptrdiff_t prev_start = 0;

  auto analysis_start = [&](std::ptrdiff_t k) {
    return static_cast<std::ptrdiff_t>(std::llround(static_cast<double>(k) * analysis_hop)) - half;
  };
  auto windowed = [&](std::ptrdiff_t start, std::size_t i) -> double {
    const std::ptrdiff_t j = start + static_cast<std::ptrdiff_t>(i);
    return (j >= 0 && j < in_len) ? x[static_cast<std::size_t>(j)] * win[i] : 0.0;
  };

  // Frames go through the FFT in pairs (one as the real part, one as the
  // imaginary part); the phase update itself stays sequential.
  for (std::ptrdiff_t k0 = k_first; k0 <= k_last; k0 += 2) {
    const bool pair = k0 + 1 <= k_last;
    const std::ptrdiff_t s0 = analysis_start(k0);
    const std::ptrdiff_t s1 = pair ? analysis_start(k0 + 1) : 0;
    for (std::size_t i = 0; i < kFrame; ++i) {
      buf[i] = fft::cplx(windowed(s0, i), pair ? windowed(s1, i) : 0.0);
    }
    plan.forward_real_pair(buf, spec[0].data(), spec[1].data());

    for (int f = 0; f < (pair ? 2 : 1); ++f) {
      const std::ptrdiff_t start = f == 0 ? s0 : s1;
      for (std::size_t b = 0; b < kBins; ++b) {
        const double re = spec[f][b].real(), im = spec[f][b].imag();
        mag[b] = std::sqrt(re * re + im * im);
        phase[b] = std::arg(spec[f][b]);
      }
      if (first) {
        out_phase = phase;
        first = false;
      } else {
        const double da = static_cast<double>(start - prev_start);
        peaks.clear();
        for (std::size_t b = 1; b + 1 < kBins; ++b) {
          if (mag[b] > mag[b - 1] && mag[b] >= mag[b + 1]) peaks.push_back(b);
        }
        if (peaks.empty()) {
          for (std::size_t b = 0; b < kBins; ++b) {
            const double omega = kTwoPi * static_cast<double>(b) / kFrame;
            const double dev = wrap_phase(phase[b] - prev_phase[b] - omega * da);
            out_phase[b] += (omega + (da > 0 ? dev / da : 0.0)) * kHop;
          }
        } else {
          peak_phase.resize(peaks.size());
          for (std::size_t p = 0; p < peaks.size(); ++p) {
            const std::size_t b = peaks[p];
            const double omega = kTwoPi * static_cast<double>(b) / kFrame;
            const double dev = wrap_phase(phase[b] - prev_phase[b] - omega * da);
            peak_phase[p] = out_phase[b] + (omega + (da > 0 ? dev / da : 0.0)) * kHop;
          }
          // Region boundaries sit halfway between neighbouring peaks.
          std::size_t p = 0;
          for (std::size_t b = 0; b < kBins; ++b) {
            while (p + 1 < peaks.size() && b * 2 > peaks[p] + peaks[p + 1]) ++p;
            out_phase[b] = peak_phase[p] + phase[b] - phase[peaks[p]];
          }
        }
      }
      prev_phase.swap(phase);
      prev_start = start;
      // keep the running phase small so sin/cos stay on their fast path
      for (auto& ph : out_phase) ph = wrap_phase(ph);
      for (std::size_t b = 0; b < kBins; ++b) synth[f][b] = std::polar(mag[b], out_phase[b]);
      synth[f][0] = synth[f][0].real();
      synth[f][kFrame / 2] = synth[f][kFrame / 2].real();
    }
    if (!pair) std::fill(synth[1].begin(), synth[1].end(), fft::cplx(0.0, 0.0));
    plan.inverse_real_pair(synth[0].data(), synth[1].data(), buf);

    for (int f = 0; f < (pair ? 2 : 1); ++f) {
      const std::ptrdiff_t out_start = (k0 + f) * static_cast<std::ptrdiff_t>(kHop) - half;
      for (std::size_t i = 0; i < kFrame; ++i) {
        const std::ptrdiff_t n = out_start + static_cast<std::ptrdiff_t>(i);
        if (n < 0 || n >= static_cast<std::ptrdiff_t>(out_len)) continue;
        const double v = f == 0 ? buf[i].real() : buf[i].imag();
        acc[static_cast<std::size_t>(n)] += v * win[i];
        wsum[static_cast<std::size_t>(n)] += win[i] * win[i];
      }
    }
  }

  for (std::size_t n = 0; n < out_len; ++n) {
    out[n] = wsum[n] > 1e-9 ? static_cast<float>(acc[n] / wsum[n]) : 0.0f;
  }
  return out;
}

}  // namespace cfp::degrade
