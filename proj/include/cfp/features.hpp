#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <vector>

#include "cfp/audio.hpp"

namespace cfp::features {

inline constexpr std::size_t kFrameLen = 1024;
// 200 frames from a 2.5 s snippet; see README "Front-end" for why not 768.
inline constexpr std::size_t kHop = 200;
inline constexpr std::size_t kBins = kFrameLen / 2 + 1;
inline constexpr std::size_t kMels = 128;
inline constexpr std::size_t kSnippetSamples = 40000;
inline constexpr std::size_t kFrames = 200;
inline constexpr double kLogFloor = 1e-10;
inline constexpr double kMaxHz = 8000.0;

// One-sided spectrum, bin-major: value(b, f) = values[b * frames + f].
struct Spectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<std::complex<double>> values;

  const std::complex<double>& at(std::size_t bin, std::size_t frame) const {
    return values[bin * frames + frame];
  }
};

// Hann-windowed (periodic) STFT. Frames start at multiples of `hop`; the
// input is zero-padded at the end by frame_len - hop samples, giving
// floor((len + pad - frame_len) / hop) + 1 frames (200 for 40000 samples at
// hop 200). frame_len must be a power of two. Throws SizeError when the input
// is shorter than one frame.
Spectrogram stft(const std::vector<float>& x, std::size_t frame_len = kFrameLen,
                 std::size_t hop = kHop);

std::size_t stft_frame_count(std::size_t len, std::size_t frame_len, std::size_t hop);

const std::vector<double>& hann_window(std::size_t frame_len);

// Slaney mel scale: linear below 1 kHz, logarithmic above.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// 128 triangular filters with peak weight 1, edges equally spaced on the mel
// scale over 0..8000 Hz. Built once and shared read-only.
class MelFilterbank {
 public:
  static const MelFilterbank& instance();

  std::size_t n_mels() const { return first_bin_.size(); }
  double center_hz(std::size_t m) const { return edges_hz_[m + 1]; }
  double weight(std::size_t m, std::size_t bin) const;

  // out[m] = sum_b weight(m, b) * power[b]
  void apply(const double* power, double* out) const;

 private:
  MelFilterbank();
  std::vector<double> edges_hz_;
  std::vector<std::size_t> first_bin_;
  std::vector<std::vector<double>> weights_;
};

// Log-Mel matrix, mel-major: value(m, f) = values[m * n_frames + f].
struct MelSpectrogram {
  std::size_t n_mels = kMels;
  std::size_t n_frames = 0;
  std::vector<double> values;

  double at(std::size_t mel, std::size_t frame) const { return values[mel * n_frames + frame]; }
};

// Natural log of Mel power, floored at 1e-10. Input must be 16 kHz and
// exactly 40000 samples; the result is 128 x 200.
MelSpectrogram mel_spectrogram(const audio::AudioBuffer& a);

// Debug dump: float32 little-endian, row-major (mel-major), no header.
void write_raw_f32(const std::filesystem::path& path, const MelSpectrogram& m);

}  // namespace cfp::features
