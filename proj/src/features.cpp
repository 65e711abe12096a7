#include "cfp/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>

#include "cfp/error.hpp"
#include "cfp/fft.hpp"

namespace cfp::features {
namespace {

constexpr double kMelBreakHz = 1000.0;
constexpr double kMelLinearSlope = 3.0 / 200.0;  // mel per Hz below the break
constexpr double kMelBreak = kMelBreakHz * kMelLinearSlope;
const double kMelLogStep = std::log(6.4) / 27.0;

}  // namespace

const std::vector<double>& hann_window(std::size_t frame_len) {
  static std::mutex mu;
  static std::map<std::size_t, std::vector<double>> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(frame_len);
  if (it == cache.end()) {
    std::vector<double> w(frame_len);
    for (std::size_t i = 0; i < frame_len; ++i) {
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(frame_len));
    }
    it = cache.emplace(frame_len, std::move(w)).first;
  }
  return it->second;
}

std::size_t stft_frame_count(std::size_t len, std::size_t frame_len, std::size_t hop) {
  if (len < frame_len) return 0;
  const std::size_t pad = hop < frame_len ? frame_len - hop : 0;
  return (len + pad - frame_len) / hop + 1;
}

Spectrogram stft(const std::vector<float>& x, std::size_t frame_len, std::size_t hop) {
  if (hop == 0) throw SizeError("stft: hop must be positive");
  if (x.size() < frame_len) {
    throw SizeError("stft: input of " + std::to_string(x.size()) +
                    " samples is shorter than one frame (" + std::to_string(frame_len) + ")");
  }
  const fft::Plan& plan = fft::plan_for(frame_len);
  const auto& win = hann_window(frame_len);
  Spectrogram s;
  s.bins = frame_len / 2 + 1;
  s.frames = stft_frame_count(x.size(), frame_len, hop);
  s.values.resize(s.bins * s.frames);
  std::vector<fft::cplx> buf(frame_len);
  std::vector<fft::cplx> spec_a(s.bins), spec_b(s.bins);
  auto sample = [&](std::size_t f, std::size_t i) -> double {
    const std::size_t j = f * hop + i;
    return j < x.size() ? win[i] * x[j] : 0.0;
  };
  // frames are transformed two at a time (real and imaginary part)
  for (std::size_t f = 0; f < s.frames; f += 2) {
    const bool pair = f + 1 < s.frames;
    for (std::size_t i = 0; i < frame_len; ++i) {
      buf[i] = fft::cplx(sample(f, i), pair ? sample(f + 1, i) : 0.0);
    }
    plan.forward_real_pair(buf, spec_a.data(), spec_b.data());
    for (std::size_t b = 0; b < s.bins; ++b) {
      s.values[b * s.frames + f] = spec_a[b];
      if (pair) s.values[b * s.frames + f + 1] = spec_b[b];
    }
  }
  return s;
}

double hz_to_mel(double hz) {
  if (hz < kMelBreakHz) return hz * kMelLinearSlope;
  return kMelBreak + std::log(hz / kMelBreakHz) / kMelLogStep;
}

double mel_to_hz(double mel) {
  if (mel < kMelBreak) return mel / kMelLinearSlope;
  return kMelBreakHz * std::exp(kMelLogStep * (mel - kMelBreak));
}

MelFilterbank::MelFilterbank() {
  const double top = hz_to_mel(kMaxHz);
  edges_hz_.resize(kMels + 2);
  for (std::size_t i = 0; i < edges_hz_.size(); ++i) {
    edges_hz_[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(kMels + 1));
  }
  const double bin_hz = static_cast<double>(audio::kTargetRate) / kFrameLen;
  first_bin_.resize(kMels);
  weights_.resize(kMels);
  for (std::size_t m = 0; m < kMels; ++m) {
    const double lo = edges_hz_[m], mid = edges_hz_[m + 1], hi = edges_hz_[m + 2];
    std::size_t first = kBins;
    std::vector<double> w;
    for (std::size_t b = 0; b < kBins; ++b) {
      const double f = static_cast<double>(b) * bin_hz;
      double v = 0.0;
      if (f > lo && f <= mid) v = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) v = (hi - f) / (hi - mid);
      if (v > 0.0) {
        if (first == kBins) first = b;
        w.resize(b - first + 1, 0.0);
        w[b - first] = v;
      }
    }
    first_bin_[m] = first == kBins ? 0 : first;
    weights_[m] = std::move(w);
  }
}

const MelFilterbank& MelFilterbank::instance() {
  static const MelFilterbank fb;
  return fb;
}

double MelFilterbank::weight(std::size_t m, std::size_t bin) const {
  const auto& w = weights_[m];
  if (bin < first_bin_[m] || bin >= first_bin_[m] + w.size()) return 0.0;
  return w[bin - first_bin_[m]];
}

void MelFilterbank::apply(const double* power, double* out) const {
  for (std::size_t m = 0; m < weights_.size(); ++m) {
    const auto& w = weights_[m];
    const double* p = power + first_bin_[m];
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * p[i];
    out[m] = s;
  }
}

MelSpectrogram mel_spectrogram(const audio::AudioBuffer& a) {
  if (a.sample_rate != audio::kTargetRate) {
    throw SizeError("mel_spectrogram: expected 16 kHz input");
  }
  if (a.size() != kSnippetSamples) {
    throw SizeError("mel_spectrogram: expected " + std::to_string(kSnippetSamples) +
                    " samples, got " + std::to_string(a.size()));
  }
  const auto spec = stft(a.samples, kFrameLen, kHop);
  const auto& fb = MelFilterbank::instance();
  MelSpectrogram out;
  out.n_frames = spec.frames;
  out.values.resize(kMels * spec.frames);
  std::vector<double> power(kBins), mel(kMels);
  for (std::size_t f = 0; f < spec.frames; ++f) {
    for (std::size_t b = 0; b < kBins; ++b) power[b] = std::norm(spec.at(b, f));
    fb.apply(power.data(), mel.data());
    for (std::size_t m = 0; m < kMels; ++m) {
      out.values[m * spec.frames + f] = std::log(std::max(mel[m], kLogFloor));
    }
  }
  return out;
}

void write_raw_f32(const std::filesystem::path& path, const MelSpectrogram& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (double v : m.values) {
    const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    const char b[4] = {static_cast<char>(u), static_cast<char>(u >> 8), static_cast<char>(u >> 16),
                       static_cast<char>(u >> 24)};
    out.write(b, 4);
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace cfp::features
