#include <algorithm>
#include <cmath>
#include <numbers>

#include "cfp/audio.hpp"
#include "cfp/error.hpp"
#include "cfp/simd/kernels.hpp"

namespace cfp::audio {
namespace {

// Kernel half-width in zero crossings of the sinc, and the Kaiser shape. With
// cutoff at 0.45 of the lower rate this keeps the passband flat (< 0.1 dB)
// up to 0.4375 of the lower rate, i.e. 7 kHz for 16 kHz output.
constexpr int kZeroCrossings = 64;
constexpr double kKaiserBeta = 6.0;
constexpr int kTableResolution = 512;  // entries per zero crossing
constexpr double kCutoffFraction = 0.45;

double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

class SincTable {
 public:
  SincTable() : h_(static_cast<std::size_t>(kZeroCrossings * kTableResolution) + 2, 0.0) {
    const double norm = bessel_i0(kKaiserBeta);
    const std::size_t last = static_cast<std::size_t>(kZeroCrossings * kTableResolution);
    for (std::size_t i = 0; i <= last; ++i) {
      const double u = static_cast<double>(i) / kTableResolution;
      const double r = u / kZeroCrossings;
      const double win = bessel_i0(kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / norm;
      const double sinc = i == 0 ? 1.0 : std::sin(std::numbers::pi * u) / (std::numbers::pi * u);
      h_[i] = sinc * win;
    }
  }

  // u = |distance| in zero crossings.
  double operator()(double u) const {
    const double pos = u * kTableResolution;
    const auto i = static_cast<std::size_t>(pos);
    if (i >= h_.size() - 2) return 0.0;
    const double frac = pos - static_cast<double>(i);
    return h_[i] + frac * (h_[i + 1] - h_[i]);
  }

 private:
  std::vector<double> h_;
};

const SincTable& sinc_table() {
  static const SincTable table;
  return table;
}

}  // namespace

std::vector<float> resample_to_length(const std::vector<float>& x, double rate_in,
                                      double rate_out, std::size_t out_len) {
  if (!(rate_in > 0.0) || !(rate_out > 0.0)) throw InputError("resample: rates must be positive");
  if (rate_in == rate_out && out_len == x.size()) return x;
  std::vector<float> out(out_len, 0.0f);
  if (x.empty()) return out;

  const SincTable& table = sinc_table();
  const double step = rate_in / rate_out;
  const double scale = 2.0 * kCutoffFraction * std::min(1.0, rate_out / rate_in);
  // taps k = 1 - w .. w around floor(t)
  const auto w = static_cast<std::ptrdiff_t>(std::ceil(kZeroCrossings / scale)) + 1;
  const auto taps = static_cast<std::size_t>(2 * w);

  // Polyphase bank: branch p holds the kernel for fractional delay p / kBranches;
  // between branches the two dot products are blended linearly.
  constexpr std::size_t kBranches = kTableResolution;
  std::vector<float> bank((kBranches + 1) * taps);
  for (std::size_t p = 0; p <= kBranches; ++p) {
    const double frac = static_cast<double>(p) / kBranches;
    for (std::size_t k = 0; k < taps; ++k) {
      const double d = static_cast<double>(static_cast<std::ptrdiff_t>(k) + 1 - w) - frac;
      bank[p * taps + k] = static_cast<float>(scale * table(std::abs(d) * scale));
    }
  }

  std::vector<float> padded(x.size() + 2 * taps, 0.0f);
  std::copy(x.begin(), x.end(), padded.begin() + static_cast<std::ptrdiff_t>(taps));

  const auto& kern = simd::kernels();
  for (std::size_t n = 0; n < out_len; ++n) {
    const double t = static_cast<double>(n) * step;
    const double fl = std::floor(t);
    const double pos = (t - fl) * kBranches;
    auto p = static_cast<std::size_t>(pos);
    if (p >= kBranches) p = kBranches - 1;
    const double alpha = pos - static_cast<double>(p);
    const auto first = static_cast<std::ptrdiff_t>(fl) + 1 - w + static_cast<std::ptrdiff_t>(taps);
    if (first < 0 || static_cast<std::size_t>(first) + taps > padded.size()) continue;
    const float* src = padded.data() + first;
    const double y0 = kern.dot_f64acc(src, bank.data() + p * taps, taps);
    const double y1 = kern.dot_f64acc(src, bank.data() + (p + 1) * taps, taps);
    out[n] = static_cast<float>(y0 + alpha * (y1 - y0));
  }
  return out;
}

std::vector<float> resample(const std::vector<float>& x, double rate_in, double rate_out) {
  if (rate_in == rate_out) return x;
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(x.size()) * rate_out / rate_in));
  return resample_to_length(x, rate_in, rate_out, out_len);
}

AudioBuffer to_mono_16k(const AudioBuffer& a) {
  if (a.sample_rate == kTargetRate) return a;
  AudioBuffer out;
  out.sample_rate = kTargetRate;
  out.samples = resample(a.samples, a.sample_rate, kTargetRate);
  return out;
}

double rms(const std::vector<float>& x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (float v : x) s += static_cast<double>(v) * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

}  // namespace cfp::audio
