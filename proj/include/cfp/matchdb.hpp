#pragma once

// Reference database of sub-fingerprints: exact linear-scan nearest neighbour
// and vote-based identification.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cfp/fingerprint.hpp"
#include "cfp/nn/tensor.hpp"

namespace cfp::matchdb {

struct TrackEntry {
  std::uint32_t id = 0;
  std::string name;
  std::size_t sub_count = 0;
  std::size_t first_row = 0;

  friend bool operator==(const TrackEntry&, const TrackEntry&) = default;
};

struct Neighbor {
  std::size_t row = 0;
  double similarity = 0.0;  // cosine, double precision

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct MatchResult {
  std::uint32_t track_id = 0;
  std::string name;
  std::size_t votes = 0;
  double total_similarity = 0.0;     // sum over the subs that voted for this track
  std::vector<Neighbor> per_query_nn;  // the winning neighbours of those subs, in query order

  friend bool operator==(const MatchResult&, const MatchResult&) = default;
};

class FingerprintDb {
 public:
  // Appends the rows of `fp`; returns the new track id (ids count up from 0).
  // Throws InputError for an empty fingerprint and SizeError / NumericError
  // for rows that are not 256-d unit vectors (within 1e-4).
  std::uint32_t add_track(const fingerprint::Fingerprint& fp, const std::string& name);

  std::size_t track_count() const { return tracks_.size(); }
  std::size_t row_count() const { return matrix_.rows; }
  bool empty() const { return matrix_.rows == 0; }
  const std::vector<TrackEntry>& tracks() const { return tracks_; }
  const TrackEntry& track(std::uint32_t id) const;
  const nn::Matrix<float>& matrix() const { return matrix_; }
  std::uint32_t row_owner(std::size_t row) const { return owner_[row]; }

  // argmax_r dot(q, row r), computed blockwise with double accumulation; ties
  // go to the lowest row. The similarity reported is the cosine
  // dot / (|q| |row|), which is exactly 1 when q equals the row.
  // Throws StateError on an empty db and SizeError for a wrong-sized query.
  Neighbor nearest(const float* q, std::size_t dim) const;
  Neighbor nearest(const std::vector<float>& q) const { return nearest(q.data(), q.size()); }

  // Each query sub votes for the owner of its nearest row. Ranked by votes
  // desc, total similarity desc, track id asc; tracks with no votes are not
  // listed. Query subs are scanned in parallel and merged in query order.
  std::vector<MatchResult> identify(const fingerprint::Fingerprint& query, std::size_t threads = 0) const;

  friend bool operator==(const FingerprintDb&, const FingerprintDb&) = default;

  // "CFPD", u32 version, u32 track count, per track (u32 id, u32 name length,
  // name, u32 sub count), u64 row count, then rows x 256 float32. LE.
  std::vector<std::uint8_t> encode() const;
  static FingerprintDb decode(const std::vector<std::uint8_t>& bytes);
  void save(const std::filesystem::path& path) const;
  static FingerprintDb load(const std::filesystem::path& path);

 private:
  void append_rows(const float* data, std::size_t rows, std::uint32_t owner);

  std::vector<TrackEntry> tracks_;
  nn::Matrix<float> matrix_{0, nn::kEmbedDim};
  std::vector<std::uint32_t> owner_;
  std::vector<double> norm2_;  // per-row squared norm, same arithmetic as the scan
};

inline constexpr std::uint32_t kDbVersion = 1;

}  // namespace cfp::matchdb
