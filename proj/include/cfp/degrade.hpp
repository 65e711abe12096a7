#pragma once

// Audio degradations used both as training augmentation and as query attacks:
// white noise, pitch shift, speed change, tempo change, high-pass, low-pass,
// two-tap echo and a fixed equalizer (the latter is kept out of training).

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cfp/audio.hpp"

namespace cfp::degrade {

using audio::AudioBuffer;

struct EchoTap {
  double delay_ms;
  double decay;

  friend bool operator==(const EchoTap&, const EchoTap&) = default;
};

// Parameter ranges of the degradation menu.
inline constexpr double kNoiseMax = 0.08;
inline constexpr double kPitchMaxSemitones = 5.0;
inline constexpr double kFactorMin = 0.8;
inline constexpr double kFactorMax = 1.2;
inline constexpr double kHighpassHz = 2000.0;
inline constexpr double kLowpassHz = 300.0;
inline constexpr std::array<EchoTap, 2> kEchoTaps{{{0.8, 0.88}, {60.0, 0.4}}};
inline constexpr double kSelectProbability = 0.30;

// Which degradations are active and with what parameter. Absent optionals
// (and false flags) mean "not applied".
struct DegradationSpec {
  std::optional<double> noise_intensity;
  std::optional<double> pitch_semitones;
  std::optional<double> speed_factor;
  std::optional<double> tempo_factor;
  std::optional<double> highpass_hz;
  std::optional<double> lowpass_hz;
  bool echo = false;
  bool eq = false;

  bool empty() const;

  // Throws InputError if any present parameter leaves its range.
  void validate() const;

  // Names of the active degradations in application order, e.g. {"noise", "echo"}.
  std::vector<std::string> labels() const;

  // "noise=0.05 speed=1.1 echo=1", or "none". Round-trips through parse().
  std::string to_string() const;
  static DegradationSpec parse(std::string_view line);

  // Product of speed and tempo factors (1 when neither is present).
  double duration_divisor() const;

  friend bool operator==(const DegradationSpec&, const DegradationSpec&) = default;
};

// Every degradation is selected independently with `probability`; selected
// parameters are drawn uniformly from their range. EQ only enters the draw
// when include_test_only is set.
DegradationSpec sample_spec(std::uint64_t rng_seed, bool include_test_only,
                            double probability = kSelectProbability);

// Applies the active degradations in menu order (noise, pitch, speed, tempo,
// high-pass, low-pass, echo, EQ) and clamps the result to [-1, 1].
// Input must be 16 kHz.
AudioBuffer apply(const AudioBuffer& a, const DegradationSpec& spec, std::uint64_t rng_seed);

// Adds uniform noise in [-intensity, intensity].
AudioBuffer add_noise(const AudioBuffer& a, double intensity, std::uint64_t rng_seed);

// Pitch change with duration preserved: phase-vocoder stretch by 2^(s/12)
// followed by resampling back to the original length.
AudioBuffer pitch_shift(const AudioBuffer& a, double semitones);

// Duration change by 1/tempo_factor with pitch preserved (phase vocoder).
AudioBuffer time_stretch(const AudioBuffer& a, double tempo_factor);

// Playback-rate change: duration / factor, pitch * factor.
AudioBuffer speed_change(const AudioBuffer& a, double speed_factor);

enum class FilterMode { Highpass, Lowpass };

// Second-order Butterworth section.
AudioBuffer biquad_filter(const AudioBuffer& a, FilterMode mode, double cutoff_hz);

// Magnitude response of the bilinear-transformed Butterworth filter above.
double butterworth_magnitude(FilterMode mode, double cutoff_hz, double freq_hz, double rate);

// Taps are applied one after another, each on the previous output:
// y[n] = x[n] + decay * x[n - delay]. Length is preserved.
AudioBuffer add_echo(const AudioBuffer& a, const std::vector<EchoTap>& taps);

// Ten octave bands from 31.25 Hz with alternating +6 / -6 dB gains, realized
// as a zero-phase linear-phase FIR. This curve is a documented stand-in for
// the equalizer of the Philips robust hash evaluation, whose settings are
// not published.
AudioBuffer apply_eq(const AudioBuffer& a);

struct EqBand {
  double center_hz;
  double gain_db;
};
const std::array<EqBand, 10>& eq_bands();

// Target gain of the EQ curve at a frequency, in dB.
double eq_gain_db(double freq_hz);

// Phase vocoder (STFT 1024, synthesis hop 256, identity phase locking). The
// output has exactly out_len samples, stretched in time by out_len / len(x).
std::vector<float> phase_vocoder(const std::vector<float>& x, std::size_t out_len);

// Optional operator-supplied attack (e.g. an external MP3 round trip).
using ExternalAttack = std::function<AudioBuffer(const AudioBuffer&)>;

}  // namespace cfp::degrade
