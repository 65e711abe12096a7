#pragma once

// Segmentation of audio into 2.5 s windows and their embeddings.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cfp/audio.hpp"
#include "cfp/nn/params.hpp"

namespace cfp::fingerprint {

using audio::AudioBuffer;

// Window 2.5 s, hop 0.85 * 2.5 s = 2.125 s at 16 kHz.
inline constexpr std::size_t kSegmentSamples = 40000;
inline constexpr std::size_t kHopSamples = 34000;
inline constexpr double kHopSeconds = 2.125;
inline constexpr std::size_t kSubBytes = nn::kEmbedDim * sizeof(float);

struct Segment {
  double offset_s = 0.0;
  std::size_t start = 0;  // sample index
  AudioBuffer audio;
};

// floor((len - 40000) / 34000) + 1 for len >= 40000, else 0.
std::size_t segment_count(std::size_t len);

// Windows whose end would run past the audio are dropped. Requires 16 kHz;
// throws InputError for audio shorter than 2.5 s.
std::vector<Segment> segment(const AudioBuffer& a);

struct SubFingerprint {
  double offset_s = 0.0;
  std::vector<float> vector;  // 256 values, unit norm

  friend bool operator==(const SubFingerprint&, const SubFingerprint&) = default;
};

struct Fingerprint {
  std::string track_ref;
  std::vector<SubFingerprint> subs;

  friend bool operator==(const Fingerprint&, const Fingerprint&) = default;
};

// Converts to mono 16 kHz, segments, and embeds every segment with the query
// encoder. Segments are encoded in batches; results are ordered by offset.
Fingerprint extract(const AudioBuffer& a, const nn::ParamSet<float>& encoder,
                    const std::string& track_ref = {}, std::size_t threads = 0);

// "CFPF", u32 version, u32 name length, name bytes, u32 count, then per sub:
// float64 offset, 256 float32. Little-endian.
inline constexpr std::uint32_t kFingerprintVersion = 1;
std::vector<std::uint8_t> encode(const Fingerprint& fp);
Fingerprint decode(const std::vector<std::uint8_t>& bytes);
void save(const std::filesystem::path& path, const Fingerprint& fp);
Fingerprint load(const std::filesystem::path& path);

}  // namespace cfp::fingerprint
