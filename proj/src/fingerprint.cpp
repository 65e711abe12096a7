#include "cfp/fingerprint.hpp"

#include <algorithm>

#include "cfp/binio.hpp"
#include "cfp/error.hpp"
#include "cfp/features.hpp"
#include "cfp/nn/encoder.hpp"
#include "cfp/parallel.hpp"

namespace cfp::fingerprint {

std::size_t segment_count(std::size_t len) {
  if (len < kSegmentSamples) return 0;
  return (len - kSegmentSamples) / kHopSamples + 1;
}

std::vector<Segment> segment(const AudioBuffer& a) {
  if (a.sample_rate != audio::kTargetRate) throw InputError("segment: audio must be 16 kHz");
  if (a.size() < kSegmentSamples) {
    throw InputError("segment: audio of " + std::to_string(a.duration_s()) +
                     " s is shorter than one 2.5 s segment");
  }
  const std::size_t n = segment_count(a.size());
  std::vector<Segment> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    out[k].start = k * kHopSamples;
    out[k].offset_s = static_cast<double>(k) * kHopSeconds;
    out[k].audio.sample_rate = a.sample_rate;
    const auto b = a.samples.begin() + static_cast<std::ptrdiff_t>(out[k].start);
    out[k].audio.samples.assign(b, b + kSegmentSamples);
  }
  return out;
}

Fingerprint extract(const AudioBuffer& a, const nn::ParamSet<float>& encoder,
                    const std::string& track_ref, std::size_t threads) {
  const AudioBuffer mono = audio::to_mono_16k(a);
  const auto segs = segment(mono);
  std::vector<features::MelSpectrogram> mels(segs.size());
  parallel_for(segs.size(), threads,
               [&](std::size_t i) { mels[i] = features::mel_spectrogram(segs[i].audio); });

  nn::Encoder<float> enc(encoder.config());
  Fingerprint fp;
  fp.track_ref = track_ref;
  fp.subs.resize(segs.size());
  constexpr std::size_t kBatch = 16;
  for (std::size_t b0 = 0; b0 < segs.size(); b0 += kBatch) {
    const std::size_t n = std::min(kBatch, segs.size() - b0);
    std::vector<features::MelSpectrogram> chunk(mels.begin() + static_cast<std::ptrdiff_t>(b0),
                                                mels.begin() + static_cast<std::ptrdiff_t>(b0 + n));
    const auto emb = enc.forward(encoder, nn::pack_batch<float>(chunk), n, nullptr, threads);
    for (std::size_t i = 0; i < n; ++i) {
      auto& sub = fp.subs[b0 + i];
      sub.offset_s = segs[b0 + i].offset_s;
      sub.vector.assign(emb.row(i), emb.row(i) + emb.cols);
    }
  }
  return fp;
}

std::vector<std::uint8_t> encode(const Fingerprint& fp) {
  binio::Writer w;
  w.bytes("CFPF", 4);
  w.u32(kFingerprintVersion);
  w.str(fp.track_ref);
  w.u32(static_cast<std::uint32_t>(fp.subs.size()));
  for (const auto& s : fp.subs) {
    if (s.vector.size() != nn::kEmbedDim) throw SizeError("fingerprint: sub-fingerprint is not 256-d");
    w.f64(s.offset_s);
    w.f32s(s.vector.data(), s.vector.size());
  }
  return std::move(w.data());
}

Fingerprint decode(const std::vector<std::uint8_t>& bytes) {
  binio::Reader r(bytes, "fingerprint");
  if (r.magic() != "CFPF") r.fail("bad magic (expected CFPF)", 0);
  const std::uint32_t version = r.u32();
  if (version != kFingerprintVersion) r.fail("unsupported version " + std::to_string(version), 4);
  Fingerprint fp;
  fp.track_ref = r.str();
  const std::size_t count_at = r.pos();
  const std::uint32_t count = r.u32();
  const std::size_t per = 8 + kSubBytes;
  if (count > (bytes.size() - r.pos()) / per) r.fail("sub-fingerprint count exceeds file size", count_at);
  fp.subs.resize(count);
  for (auto& s : fp.subs) {
    s.offset_s = r.f64();
    s.vector.resize(nn::kEmbedDim);
    r.f32s(s.vector.data(), s.vector.size());
  }
  if (!r.at_end()) r.fail("trailing bytes", r.pos());
  return fp;
}

void save(const std::filesystem::path& path, const Fingerprint& fp) {
  binio::write_file_atomic(path, encode(fp));
}

Fingerprint load(const std::filesystem::path& path) { return decode(binio::read_file(path)); }

}  // namespace cfp::fingerprint
