#include "cfp/matchdb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cfp/binio.hpp"
#include "cfp/error.hpp"
#include "cfp/parallel.hpp"
#include "cfp/simd/kernels.hpp"

namespace cfp::matchdb {
namespace {

// Rows per block of the scan; 256 rows x 1 KiB stay in L2.
constexpr std::size_t kBlockRows = 256;

}  // namespace

void FingerprintDb::append_rows(const float* data, std::size_t rows, std::uint32_t owner) {
  const auto& kern = simd::kernels();
  const std::size_t dim = matrix_.cols;
  matrix_.data.insert(matrix_.data.end(), data, data + rows * dim);
  for (std::size_t r = 0; r < rows; ++r) {
    owner_.push_back(owner);
    norm2_.push_back(kern.dot_f64acc(data + r * dim, data + r * dim, dim));
  }
  matrix_.rows += rows;
}

std::uint32_t FingerprintDb::add_track(const fingerprint::Fingerprint& fp, const std::string& name) {
  if (fp.subs.empty()) throw InputError("add_track: fingerprint '" + name + "' has no sub-fingerprints");
  const auto& kern = simd::kernels();
  std::vector<float> rows;
  rows.reserve(fp.subs.size() * nn::kEmbedDim);
  for (std::size_t i = 0; i < fp.subs.size(); ++i) {
    const auto& v = fp.subs[i].vector;
    if (v.size() != nn::kEmbedDim) {
      throw SizeError("add_track: sub-fingerprint " + std::to_string(i) + " has " +
                      std::to_string(v.size()) + " values");
    }
    const double norm = std::sqrt(kern.dot_f64acc(v.data(), v.data(), v.size()));
    if (!(std::abs(norm - 1.0) <= 1e-4)) {
      throw NumericError("add_track: sub-fingerprint " + std::to_string(i) + " is not unit norm");
    }
    rows.insert(rows.end(), v.begin(), v.end());
  }
  const auto id = static_cast<std::uint32_t>(tracks_.size());
  tracks_.push_back(TrackEntry{id, name, fp.subs.size(), matrix_.rows});
  append_rows(rows.data(), fp.subs.size(), id);
  return id;
}

const TrackEntry& FingerprintDb::track(std::uint32_t id) const {
  if (id >= tracks_.size()) throw InputError("unknown track id " + std::to_string(id));
  return tracks_[id];
}

Neighbor FingerprintDb::nearest(const float* q, std::size_t dim) const {
  if (empty()) throw StateError("nearest: database is empty");
  if (dim != matrix_.cols) {
    throw SizeError("nearest: query has " + std::to_string(dim) + " values, expected " +
                    std::to_string(matrix_.cols));
  }
  const auto& kern = simd::kernels();
  double dots[kBlockRows];
  std::size_t best = 0;
  double best_dot = -std::numeric_limits<double>::infinity();
  for (std::size_t r0 = 0; r0 < matrix_.rows; r0 += kBlockRows) {
    const std::size_t n = std::min(kBlockRows, matrix_.rows - r0);
    kern.dot_rows_f64acc(q, matrix_.row(r0), n, dim, dots);
    for (std::size_t i = 0; i < n; ++i) {
      // strict > keeps the lowest row on ties
      if (dots[i] > best_dot) {
        best_dot = dots[i];
        best = r0 + i;
      }
    }
  }
  const double nq2 = kern.dot_f64acc(q, q, dim);
  const double denom = std::sqrt(nq2 * norm2_[best]);
  return Neighbor{best, denom > 0.0 ? best_dot / denom : 0.0};
}

std::vector<MatchResult> FingerprintDb::identify(const fingerprint::Fingerprint& query,
                                                 std::size_t threads) const {
  if (query.subs.empty()) throw InputError("identify: query fingerprint is empty");
  if (empty()) throw StateError("identify: database is empty");
  std::vector<Neighbor> nn(query.subs.size());
  parallel_for(query.subs.size(), threads,
               [&](std::size_t i) { nn[i] = nearest(query.subs[i].vector); });

  std::vector<MatchResult> by_track(tracks_.size());
  for (const auto& t : tracks_) {
    by_track[t.id].track_id = t.id;
    by_track[t.id].name = t.name;
  }
  for (const auto& n : nn) {
    auto& m = by_track[owner_[n.row]];
    ++m.votes;
    m.total_similarity += n.similarity;
    m.per_query_nn.push_back(n);
  }
  std::vector<MatchResult> ranked;
  for (auto& m : by_track) {
    if (m.votes > 0) ranked.push_back(std::move(m));
  }
  std::sort(ranked.begin(), ranked.end(), [](const MatchResult& a, const MatchResult& b) {
    if (a.votes != b.votes) return a.votes > b.votes;
    if (a.total_similarity != b.total_similarity) return a.total_similarity > b.total_similarity;
    return a.track_id < b.track_id;
  });
  return ranked;
}

std::vector<std::uint8_t> FingerprintDb::encode() const {
  binio::Writer w;
  w.bytes("CFPD", 4);
  w.u32(kDbVersion);
  w.u32(static_cast<std::uint32_t>(tracks_.size()));
  for (const auto& t : tracks_) {
    w.u32(t.id);
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.sub_count));
  }
  w.u64(matrix_.rows);
  w.f32s(matrix_.data.data(), matrix_.data.size());
  return std::move(w.data());
}

FingerprintDb FingerprintDb::decode(const std::vector<std::uint8_t>& bytes) {
  binio::Reader r(bytes, "fingerprint db");
  if (r.magic() != "CFPD") r.fail("bad magic (expected CFPD)", 0);
  const std::uint32_t version = r.u32();
  if (version != kDbVersion) r.fail("unsupported version " + std::to_string(version), 4);
  const std::size_t count_at = r.pos();
  const std::uint32_t n_tracks = r.u32();
  // every entry takes at least 12 bytes
  if (n_tracks > (bytes.size() - r.pos()) / 12) r.fail("track count exceeds file size", count_at);
  FingerprintDb db;
  std::size_t total = 0;
  for (std::uint32_t i = 0; i < n_tracks; ++i) {
    const std::size_t at = r.pos();
    TrackEntry t;
    t.id = r.u32();
    if (t.id != i) r.fail("track ids must count up from 0", at);
    t.name = r.str();
    const std::size_t sc_at = r.pos();
    t.sub_count = r.u32();
    if (t.sub_count == 0) r.fail("track with no rows", sc_at);
    t.first_row = total;
    total += t.sub_count;
    db.tracks_.push_back(std::move(t));
  }
  const std::size_t rows_at = r.pos();
  const std::uint64_t rows = r.u64();
  if (rows != total) r.fail("row count does not match the track table", rows_at);
  const std::size_t dim = db.matrix_.cols;
  if (rows > (bytes.size() - r.pos()) / (dim * sizeof(float))) r.fail("truncated row matrix", r.pos());
  std::vector<float> data(rows * dim);
  r.f32s(data.data(), data.size());
  if (!r.at_end()) r.fail("trailing bytes", r.pos());
  for (const auto& t : db.tracks_) db.append_rows(data.data() + t.first_row * dim, t.sub_count, t.id);
  return db;
}

void FingerprintDb::save(const std::filesystem::path& path) const {
  binio::write_file_atomic(path, encode());
}

FingerprintDb FingerprintDb::load(const std::filesystem::path& path) {
  return decode(binio::read_file(path));
}

}  // namespace cfp::matchdb
