#pragma once

// Identification benchmark: degraded clips of reference tracks are looked up
// in a database built from the clean references.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cfp/audio.hpp"
#include "cfp/degrade.hpp"
#include "cfp/matchdb.hpp"
#include "cfp/nn/params.hpp"

namespace cfp::eval {

using audio::AudioBuffer;

struct Reference {
  std::string name;
  AudioBuffer audio;
};

// One fingerprint per reference, added in order (track id = index).
matchdb::FingerprintDb build_db(const std::vector<Reference>& refs, const nn::ParamSet<float>& encoder,
                                std::size_t threads = 0);

struct Options {
  std::size_t n_queries = 200;
  std::uint64_t seed = 0;
  double clip_s = 10.0;
  bool degrade = true;
  bool include_test_only = true;  // EQ enters the draw
  double probability = degrade::kSelectProbability;
  degrade::ExternalAttack attack;  // applied after the menu when set
  std::size_t threads = 0;
};

struct QueryRecord {
  std::size_t index = 0;
  std::uint32_t true_track = 0;
  std::uint32_t predicted = 0;
  bool hit = false;
  std::size_t votes = 0;
  std::size_t n_subs = 0;
  double clip_start_s = 0.0;
  degrade::DegradationSpec spec;
};

struct Tally {
  std::size_t n = 0;
  std::size_t hits = 0;
  double hit_rate() const { return n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0; }
};

struct Report {
  std::size_t n_queries = 0;
  std::size_t hits = 0;
  double hit_rate = 0.0;
  double mean_winner_votes = 0.0;
  // keyed by the full combination ("none", "noise+echo", ...); sums to n_queries
  std::map<std::string, Tally> by_combination;
  // per degradation type; a query counts once for every type it contains
  std::map<std::string, Tally> by_type;
  std::vector<QueryRecord> records;
};

// Query i: a track drawn uniformly, a clip_s window starting on a random
// segment boundary (the whole track when it is shorter), a sampled
// degradation, then identification. Deterministic for a fixed seed.
Report evaluate(const matchdb::FingerprintDb& db, const std::vector<Reference>& refs,
                const nn::ParamSet<float>& encoder, const Options& opt);

std::string to_text(const Report& r);
// One JSON object per line: a "query" record for each query, one "summary",
// then a "breakdown" line per combination and per type.
std::string to_jsonl(const Report& r);

}  // namespace cfp::eval
