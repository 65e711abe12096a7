#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cfp/audio.hpp"
#include "cfp/biquad.hpp"
#include "cfp/error.hpp"
#include "cfp/rng.hpp"

namespace cfp::audio {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kPeak = 0.5;

double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

// Five partials with independent slow amplitude envelopes.
std::vector<double> tone_mixture(Rng& rng, std::size_t n) {
  struct Partial {
    double freq, amp, phase, mod_rate, mod_depth, mod_phase;
  };
  std::vector<Partial> partials(5);
  for (auto& p : partials) {
    p.freq = log_uniform(rng, 120.0, 4000.0);
    p.amp = rng.uniform(0.3, 1.0);
    p.phase = rng.uniform(0.0, kTwoPi);
    p.mod_rate = rng.uniform(0.1, 2.0);
    p.mod_depth = rng.uniform(0.0, 0.6);
    p.mod_phase = rng.uniform(0.0, kTwoPi);
  }
  std::vector<double> y(n, 0.0);
  for (const auto& p : partials) {
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / kTargetRate;
      const double env = 1.0 - p.mod_depth * 0.5 * (1.0 + std::sin(kTwoPi * p.mod_rate * t + p.mod_phase));
      y[i] += p.amp * env * std::sin(kTwoPi * p.freq * t + p.phase);
    }
  }
  return y;
}

// Linear sweep with two weaker harmonics.
std::vector<double> chirp(Rng& rng, std::size_t n) {
  const double f0 = log_uniform(rng, 100.0, 3000.0);
  const double f1 = log_uniform(rng, 100.0, 3000.0);
  const double phase0 = rng.uniform(0.0, kTwoPi);
  const double h2 = rng.uniform(0.1, 0.6);
  const double h3 = rng.uniform(0.05, 0.4);
  const double dur = static_cast<double>(n) / kTargetRate;
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kTargetRate;
    const double ph = kTwoPi * (f0 * t + 0.5 * (f1 - f0) * t * t / dur) + phase0;
    y[i] = std::sin(ph) + h2 * std::sin(2.0 * ph) + h3 * std::sin(3.0 * ph);
  }
  return y;
}

// Gaussian noise through two resonant band-passes.
std::vector<double> filtered_noise(Rng& rng, std::size_t n) {
  std::vector<double> white(n);
  for (auto& v : white) v = rng.normal();
  std::vector<double> y(n, 0.0);
  for (int band = 0; band < 2; ++band) {
    const double fc = log_uniform(rng, 150.0, 5000.0);
    const double q = rng.uniform(2.0, 8.0);
    const double gain = rng.uniform(0.4, 1.0);
    const auto filtered = dsp::Biquad::bandpass(fc, kTargetRate, q).run(white);
    for (std::size_t i = 0; i < n; ++i) y[i] += gain * filtered[i];
  }
  return y;
}

}  // namespace

std::string_view to_string(TrackKind kind) {
  switch (kind) {
    case TrackKind::ToneMixture: return "tone-mixture";
    case TrackKind::Chirp: return "chirp";
    case TrackKind::FilteredNoise: return "filtered-noise";
  }
  return "?";
}

TrackKind track_kind_from_string(std::string_view s) {
  if (s == "tone-mixture") return TrackKind::ToneMixture;
  if (s == "chirp") return TrackKind::Chirp;
  if (s == "filtered-noise") return TrackKind::FilteredNoise;
  throw InputError("unknown track kind '" + std::string(s) + "'");
}

AudioBuffer synth_track(TrackKind kind, std::uint64_t seed, double duration_s) {
  if (!(duration_s > 0.0)) throw InputError("synth_track: duration must be positive");
  const auto n = static_cast<std::size_t>(std::llround(duration_s * kTargetRate));
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(kind) + 1));
  std::vector<double> y;
  switch (kind) {
    case TrackKind::ToneMixture: y = tone_mixture(rng, n); break;
    case TrackKind::Chirp: y = chirp(rng, n); break;
    case TrackKind::FilteredNoise: y = filtered_noise(rng, n); break;
  }
  double peak = 0.0;
  for (double v : y) peak = std::max(peak, std::abs(v));
  const double gain = peak > 0.0 ? kPeak / peak : 0.0;
  AudioBuffer out;
  out.sample_rate = kTargetRate;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.samples[i] = static_cast<float>(y[i] * gain);
  return out;
}

TrackKind corpus_kind(std::size_t index) { return static_cast<TrackKind>(index % 3); }

std::uint64_t corpus_track_seed(std::uint64_t seed, std::size_t index) {
  return derive_seed(seed, 0x5eed, index);
}

}  // namespace cfp::audio
