#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "cfp/audio.hpp"
#include "cfp/error.hpp"

namespace cfp::audio {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw FormatError(std::string("WAV truncated reading ") + what, pos_);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    const std::uint32_t v = static_cast<std::uint32_t>(bytes_[pos_]) |
                            (static_cast<std::uint32_t>(bytes_[pos_ + 1]) << 8) |
                            (static_cast<std::uint32_t>(bytes_[pos_ + 2]) << 16) |
                            (static_cast<std::uint32_t>(bytes_[pos_ + 3]) << 24);
    pos_ += 4;
    return v;
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::string tag(const char* what) {
    need(4, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
    pos_ += 4;
    return s;
  }
  void skip(std::size_t n) { pos_ += std::min(n, remaining()); }
  const std::uint8_t* here() const { return bytes_.data() + pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_tag(std::vector<std::uint8_t>& out, const char* t) { out.insert(out.end(), t, t + 4); }

float decode_sample(const std::uint8_t* p, std::uint16_t format, std::uint16_t bits) {
  if (format == kFormatFloat) {
    std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                      (static_cast<std::uint32_t>(p[2]) << 16) |
                      (static_cast<std::uint32_t>(p[3]) << 24);
    return std::bit_cast<float>(u);
  }
  switch (bits) {
    case 8:
      return (static_cast<float>(p[0]) - 128.0f) / 128.0f;
    case 16: {
      const auto v = static_cast<std::int16_t>(p[0] | (p[1] << 8));
      return static_cast<float>(v) / 32768.0f;
    }
    case 24: {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v -= 0x1000000;
      return static_cast<float>(static_cast<double>(v) / 8388608.0);
    }
    case 32: {
      const auto v = static_cast<std::int32_t>(
          static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
          (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24));
      return static_cast<float>(static_cast<double>(v) / 2147483648.0);
    }
    default:
      return 0.0f;
  }
}

}  // namespace

void AudioBuffer::validate() const {
  if (!(sample_rate > 0.0)) throw InputError("audio sample rate must be positive");
  for (float s : samples) {
    if (!std::isfinite(s)) throw InputError("audio contains non-finite samples");
  }
}

AudioBuffer parse_wav(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.tag("RIFF header") != "RIFF") throw FormatError("missing RIFF magic", 0);
  r.u32("RIFF size");
  if (r.tag("WAVE tag") != "WAVE") throw FormatError("missing WAVE tag", 8);

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  while (true) {
    if (r.remaining() < 8) throw FormatError("WAV has no data chunk", r.pos());
    const std::size_t chunk_at = r.pos();
    const std::string id = r.tag("chunk id");
    const std::uint32_t size = r.u32("chunk size");
    if (id == "fmt ") {
      if (size < 16) throw FormatError("fmt chunk too small", chunk_at);
      r.need(size, "fmt chunk");
      const std::size_t body = r.pos();
      format = r.u16("format");
      channels = r.u16("channels");
      rate = r.u32("sample rate");
      r.u32("byte rate");
      block_align = r.u16("block align");
      bits = r.u16("bits per sample");
      if (format == kFormatExtensible) {
        if (size < 40) throw FormatError("extensible fmt chunk too small", chunk_at);
        r.u16("cb size");
        r.u16("valid bits");
        r.u32("channel mask");
        format = r.u16("sub format");
      }
      r.skip(body + size - r.pos() + (size & 1U));
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError("data chunk before fmt chunk", chunk_at);
      if (format != kFormatPcm && format != kFormatFloat) {
        throw UnsupportedError("unsupported WAV encoding tag " + std::to_string(format));
      }
      if (format == kFormatFloat && bits != 32) {
        throw UnsupportedError("float WAV must be 32-bit, got " + std::to_string(bits));
      }
      if (format == kFormatPcm && bits != 8 && bits != 16 && bits != 24 && bits != 32) {
        throw UnsupportedError("unsupported PCM bit depth " + std::to_string(bits));
      }
      if (channels != 1 && channels != 2) {
        throw UnsupportedError("unsupported channel count " + std::to_string(channels));
      }
      if (rate == 0) throw FormatError("zero sample rate", chunk_at);
      const std::size_t bytes_per_sample = bits / 8;
      if (block_align != bytes_per_sample * channels) {
        throw FormatError("inconsistent block align", chunk_at);
      }
      // Some writers leave a zero or oversized length when streaming; clip to what is present.
      std::size_t data_bytes = size;
      if (data_bytes == 0 || data_bytes > r.remaining()) data_bytes = r.remaining();
      const std::size_t frames = data_bytes / block_align;
      AudioBuffer out;
      out.sample_rate = rate;
      out.samples.resize(frames);
      const std::uint8_t* p = r.here();
      for (std::size_t f = 0; f < frames; ++f) {
        const std::uint8_t* fp = p + f * block_align;
        if (channels == 1) {
          out.samples[f] = decode_sample(fp, format, bits);
        } else {
          const float l = decode_sample(fp, format, bits);
          const float rr = decode_sample(fp + bytes_per_sample, format, bits);
          out.samples[f] = 0.5f * (l + rr);
        }
      }
      for (float s : out.samples) {
        if (!std::isfinite(s)) throw FormatError("non-finite float sample in WAV data", chunk_at);
      }
      return out;
    } else {
      r.need(size, "chunk body");
      r.skip(size + (size & 1U));
    }
  }
}

AudioBuffer load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return parse_wav(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::filesystem::path> list_wavs(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir, ec)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (ext == ".wav") out.push_back(e.path());
  }
  if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
  if (out.empty()) throw InputError("no .wav files in " + dir.string());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::uint8_t> encode_wav(const std::vector<float>& interleaved, int channels,
                                     std::uint32_t sample_rate, SampleFormat format) {
  if (channels < 1) throw InputError("channel count must be positive");
  std::uint16_t bits = 16;
  std::uint16_t tag = kFormatPcm;
  switch (format) {
    case SampleFormat::Pcm8: bits = 8; break;
    case SampleFormat::Pcm16: bits = 16; break;
    case SampleFormat::Pcm24: bits = 24; break;
    case SampleFormat::Pcm32: bits = 32; break;
    case SampleFormat::Float32: bits = 32; tag = kFormatFloat; break;
  }
  const std::uint32_t block = static_cast<std::uint32_t>(channels) * bits / 8;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(interleaved.size()) * (bits / 8);

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, tag);
  put_u16(out, static_cast<std::uint16_t>(channels));
  put_u32(out, sample_rate);
  put_u32(out, sample_rate * block);
  put_u16(out, static_cast<std::uint16_t>(block));
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_bytes);

  for (float raw : interleaved) {
    const double s = std::clamp(static_cast<double>(raw), -1.0, 1.0);
    switch (format) {
      case SampleFormat::Pcm8:
        out.push_back(static_cast<std::uint8_t>(std::clamp(std::lround(s * 128.0) + 128, 0L, 255L)));
        break;
      case SampleFormat::Pcm16: {
        const long v = std::clamp(std::lround(s * 32768.0), -32768L, 32767L);
        put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
        break;
      }
      case SampleFormat::Pcm24: {
        const long v = std::clamp(std::lround(s * 8388608.0), -8388608L, 8388607L);
        const auto u = static_cast<std::uint32_t>(v);
        out.push_back(static_cast<std::uint8_t>(u));
        out.push_back(static_cast<std::uint8_t>(u >> 8));
        out.push_back(static_cast<std::uint8_t>(u >> 16));
        break;
      }
      case SampleFormat::Pcm32: {
        const long long v = std::clamp(std::llround(s * 2147483648.0), -2147483648LL, 2147483647LL);
        put_u32(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(v)));
        break;
      }
      case SampleFormat::Float32:
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(raw)));
        break;
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_wav16(const AudioBuffer& a) {
  const auto rate = static_cast<std::uint32_t>(std::lround(a.sample_rate));
  return encode_wav(a.samples, 1, rate, SampleFormat::Pcm16);
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& a) {
  const auto bytes = encode_wav16(a);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace cfp::audio
