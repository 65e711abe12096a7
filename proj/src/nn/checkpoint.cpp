#include "cfp/nn/checkpoint.hpp"

#include <fstream>
#include <iterator>

#include "cfp/binio.hpp"
#include "cfp/error.hpp"

namespace cfp {
namespace binio {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  const auto tmp = std::filesystem::path(path.string() + ".partial");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed for " + path.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace binio

namespace nn {

std::vector<std::uint8_t> encode_checkpoint(const ParamSet<float>& params) {
  const auto& cfg = params.config();
  binio::Writer w;
  w.bytes("CFP1", 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(cfg.conv_channels.size()));
  for (auto c : cfg.conv_channels) w.u32(static_cast<std::uint32_t>(c));
  w.u32(static_cast<std::uint32_t>(cfg.embed_dim));
  w.u32(static_cast<std::uint32_t>(cfg.in_height));
  w.u32(static_cast<std::uint32_t>(cfg.in_width));
  w.u32(static_cast<std::uint32_t>(params.count()));
  for (std::size_t i = 0; i < params.count(); ++i) {
    const auto& t = params.tensor(i);
    w.str(params.name(i));
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    w.f32s(t.ptr(), t.size());
  }
  return std::move(w.data());
}

ParamSet<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  binio::Reader r(bytes, "checkpoint");
  if (r.magic() != "CFP1") r.fail("bad magic (expected CFP1)", 0);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version), 4);
  EncoderConfig cfg;
  const std::size_t n_conv_at = r.pos();
  const std::uint32_t n_conv = r.u32();
  if (n_conv == 0 || n_conv > 64) r.fail("implausible conv layer count", n_conv_at);
  cfg.conv_channels.resize(n_conv);
  for (auto& c : cfg.conv_channels) c = r.u32();
  cfg.embed_dim = r.u32();
  cfg.in_height = r.u32();
  cfg.in_width = r.u32();
  ParamSet<float> params;
  try {
    params = ParamSet<float>::zeros(cfg);
  } catch (const ConfigError& e) {
    r.fail(std::string("invalid encoder config: ") + e.what(), n_conv_at);
  }
  const std::size_t count_at = r.pos();
  if (r.u32() != params.count()) r.fail("tensor count does not match config", count_at);
  for (std::size_t i = 0; i < params.count(); ++i) {
    const std::size_t at = r.pos();
    const std::string name = r.str(4096);
    if (name != params.name(i)) r.fail("expected tensor '" + params.name(i) + "', found '" + name + "'", at);
    const std::size_t rank_at = r.pos();
    const std::uint32_t rank = r.u32();
    auto& t = params.tensor(i);
    if (rank != t.shape.size()) r.fail("rank mismatch for " + name, rank_at);
    for (std::size_t d = 0; d < rank; ++d) {
      const std::size_t dim_at = r.pos();
      if (r.u32() != t.shape[d]) r.fail("shape mismatch for " + name, dim_at);
    }
    r.f32s(t.ptr(), t.size());
  }
  if (!r.at_end()) r.fail("trailing bytes after last tensor", r.pos());
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ParamSet<float>& params) {
  binio::write_file_atomic(path, encode_checkpoint(params));
}

ParamSet<float> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(binio::read_file(path));
}

}  // namespace nn
}  // namespace cfp
