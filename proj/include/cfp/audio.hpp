#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace cfp::audio {

inline constexpr int kTargetRate = 16000;

// Mono samples in [-1, 1] plus their sample rate.
struct AudioBuffer {
  std::vector<float> samples;
  double sample_rate = kTargetRate;

  std::size_t size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }

  // Throws InputError when sample_rate <= 0 or a sample is non-finite.
  void validate() const;

  friend bool operator==(const AudioBuffer&, const AudioBuffer&) = default;
};

// Reads PCM WAV (8/16/24/32-bit int, 32-bit float), 1 or 2 channels. Stereo is
// averaged to mono; the native sample rate is kept.
AudioBuffer load_wav(const std::filesystem::path& path);

// *.wav files (any case) directly inside `dir`, sorted by file name. Throws
// IoError naming the path when it is not a readable directory and
// InputError when it holds no WAV file.
std::vector<std::filesystem::path> list_wavs(const std::filesystem::path& dir);

// Same, from an in-memory RIFF image.
AudioBuffer parse_wav(const std::vector<std::uint8_t>& bytes);

// Writes 16-bit PCM mono. Samples are clamped to [-1, 1].
void write_wav(const std::filesystem::path& path, const AudioBuffer& a);
std::vector<std::uint8_t> encode_wav16(const AudioBuffer& a);

// Writes a PCM file with an arbitrary layout; used by tests and tools to
// produce inputs in every supported encoding. `interleaved` holds
// frames*channels samples in [-1, 1].
enum class SampleFormat { Pcm8, Pcm16, Pcm24, Pcm32, Float32 };
std::vector<std::uint8_t> encode_wav(const std::vector<float>& interleaved, int channels,
                                     std::uint32_t sample_rate, SampleFormat format);

// Band-limited rate conversion (Kaiser-windowed sinc). Output length is
// round(len * rate_out / rate_in); equal rates return the input unchanged.
std::vector<float> resample(const std::vector<float>& x, double rate_in, double rate_out);

// Variant with an explicit output length, for callers that need exact sizes.
std::vector<float> resample_to_length(const std::vector<float>& x, double rate_in,
                                      double rate_out, std::size_t out_len);

// Converts to 16 kHz. Mono is implied by AudioBuffer; buffers already at
// 16 kHz come back sample-identical.
AudioBuffer to_mono_16k(const AudioBuffer& a);

enum class TrackKind { ToneMixture, Chirp, FilteredNoise };

std::string_view to_string(TrackKind kind);
TrackKind track_kind_from_string(std::string_view s);

// Deterministic synthetic track at 16 kHz, peak-normalized to 0.5.
AudioBuffer synth_track(TrackKind kind, std::uint64_t seed, double duration_s);

// Kind used for the i-th track of a generated corpus.
TrackKind corpus_kind(std::size_t index);

// Seed used for the i-th track of a corpus generated with `seed`.
std::uint64_t corpus_track_seed(std::uint64_t seed, std::size_t index);

double rms(const std::vector<float>& x);

}  // namespace cfp::audio
