#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <cmath>
#include <filesystem>
#include <map>

#include "cfp/error.hpp"
#include "cfp/matchdb.hpp"
#include "cfp/rng.hpp"

using namespace cfp;
using namespace cfp::matchdb;
using fingerprint::Fingerprint;
using fingerprint::SubFingerprint;

namespace {

std::vector<float> random_unit(Rng& rng, std::size_t dim = 256) {
  std::vector<double> v(dim);
  double n = 0;
  for (auto& x : v) {
    x = rng.normal();
    n += x * x;
  }
  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] / std::sqrt(n));
  return out;
}

std::vector<float> axis(std::size_t i, float s = 1.0f) {
  std::vector<float> v(256, 0.0f);
  v[i] = s;
  return v;
}

Fingerprint make_fp(const std::vector<std::vector<float>>& rows) {
  Fingerprint fp;
  for (std::size_t i = 0; i < rows.size(); ++i) fp.subs.push_back({2.125 * static_cast<double>(i), rows[i]});
  return fp;
}

FingerprintDb random_db(std::size_t tracks, std::size_t subs, Rng& rng) {
  FingerprintDb db;
  for (std::size_t t = 0; t < tracks; ++t) {
    std::vector<std::vector<float>> rows;
    for (std::size_t s = 0; s < subs; ++s) rows.push_back(random_unit(rng));
    db.add_track(make_fp(rows), "track" + std::to_string(t));
  }
  return db;
}

// brute force in long double, first index wins ties
std::size_t nearest_oracle(const FingerprintDb& db, const std::vector<float>& q) {
  std::size_t best = 0;
  long double best_s = -1e30L;
  for (std::size_t r = 0; r < db.row_count(); ++r) {
    long double s = 0;
    for (std::size_t j = 0; j < 256; ++j) s += static_cast<long double>(q[j]) * db.matrix()(r, j);
    if (s > best_s) {
      best_s = s;
      best = r;
    }
  }
  return best;
}

}  // namespace

TEST_SUITE("matchdb") {

TEST_CASE("adding tracks") {
  Rng rng(1);
  FingerprintDb db;
  CHECK(db.empty());
  const auto fp = make_fp({random_unit(rng), random_unit(rng), random_unit(rng), random_unit(rng)});
  CHECK(db.add_track(fp, "a") == 0);
  CHECK(db.track_count() == 1);
  CHECK(db.row_count() == 4);
  CHECK(db.add_track(fp, "b") == 1);
  CHECK(db.row_count() == 8);
  CHECK(db.track(1).first_row == 4);
  CHECK(db.track(1).sub_count == 4);
  CHECK(db.row_owner(5) == 1);

  CHECK(random_db(50, 4, rng).row_count() == 200);

  CHECK_THROWS_AS(db.add_track(Fingerprint{}, "empty"), InputError);
  CHECK_THROWS_AS(db.add_track(make_fp({std::vector<float>(100, 0.1f)}), "short"), SizeError);
  CHECK_THROWS_AS(db.add_track(make_fp({axis(0, 1.1f)}), "long"), NumericError);
  CHECK(db.track_count() == 2);
}

TEST_CASE("nearest agrees with brute force") {
  Rng rng(2);
  const auto db = random_db(30, 7, rng);
  for (int i = 0; i < 100; ++i) {
    const auto q = random_unit(rng);
    CHECK(db.nearest(q).row == nearest_oracle(db, q));
  }
  for (std::size_t r = 0; r < db.row_count(); r += 13) {
    const std::vector<float> q(db.matrix().row(r), db.matrix().row(r) + 256);
    const auto nb = db.nearest(q);
    CHECK(nb.row == r);
    CHECK(nb.similarity == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("ties go to the lowest row") {
  FingerprintDb db;
  db.add_track(make_fp({axis(1), axis(2)}), "a");
  db.add_track(make_fp({axis(3)}), "b");
  const auto nb = db.nearest(axis(0));
  CHECK(nb.row == 0);
  CHECK(nb.similarity == 0.0);
  CHECK_THROWS_AS(db.nearest(std::vector<float>(255, 0.0f)), SizeError);
  CHECK_THROWS_AS(FingerprintDb{}.nearest(axis(0)), StateError);
}

TEST_CASE("majority vote") {
  FingerprintDb db;
  db.add_track(make_fp({axis(0), axis(1)}), "A");
  db.add_track(make_fp({axis(2), axis(3)}), "B");
  // owners A, A, A, B, B
  const auto query = make_fp({axis(0), axis(1), axis(0), axis(2), axis(3)});
  const auto res = db.identify(query);
  REQUIRE(res.size() == 2);
  CHECK(res[0].name == "A");
  CHECK(res[0].votes == 3);
  CHECK(res[1].votes == 2);
  CHECK(res[0].per_query_nn.size() == 3);
  CHECK(res[0].total_similarity == doctest::Approx(3.0));
}

TEST_CASE("equal votes: higher total similarity wins, then lower id") {
  auto mix = [](std::size_t i, std::size_t j, double c) {
    std::vector<float> v(256, 0.0f);
    v[i] = static_cast<float>(c);
    v[j] = static_cast<float>(std::sqrt(1 - c * c));
    return v;
  };
  FingerprintDb db;
  db.add_track(make_fp({axis(0), axis(1), axis(2)}), "B");
  db.add_track(make_fp({axis(3), axis(4), axis(5)}), "A");
  // A: 0.95 + 0.95 + 1.0 = 2.9; B: 0.9 + 0.9 + 0.9 = 2.7
  const auto query = make_fp({mix(0, 10, 0.9), mix(1, 10, 0.9), mix(2, 10, 0.9), mix(3, 11, 0.95),
                              mix(4, 11, 0.95), axis(5)});
  const auto res = db.identify(query);
  REQUIRE(res.size() == 2);
  CHECK(res[0].name == "A");
  CHECK(res[0].total_similarity == doctest::Approx(2.9).epsilon(1e-6));
  CHECK(res[1].total_similarity == doctest::Approx(2.7).epsilon(1e-6));

  const auto even = db.identify(make_fp({axis(0), axis(3)}));
  REQUIRE(even.size() == 2);
  CHECK(even[0].track_id == 0);
}

TEST_CASE("identify: invariants on random data") {
  Rng rng(3);
  const auto db = random_db(20, 5, rng);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::vector<float>> rows;
    for (int i = 0; i < 9; ++i) rows.push_back(random_unit(rng));
    auto query = make_fp(rows);
    const auto res = db.identify(query);
    std::size_t total = 0;
    for (const auto& r : res) {
      total += r.votes;
      CHECK(r.votes > 0);
      CHECK(r.per_query_nn.size() == r.votes);
    }
    CHECK(total == 9);
    // vote counts recomputed from the oracle
    std::map<std::uint32_t, std::size_t> votes;
    for (const auto& q : rows) ++votes[db.row_owner(nearest_oracle(db, q))];
    for (const auto& r : res) CHECK(votes[r.track_id] == r.votes);
    // permuting the query subs changes nothing but the neighbour order
    std::reverse(query.subs.begin(), query.subs.end());
    const auto rev = db.identify(query, 3);
    REQUIRE(rev.size() == res.size());
    for (std::size_t i = 0; i < res.size(); ++i) {
      CHECK(rev[i].track_id == res[i].track_id);
      CHECK(rev[i].votes == res[i].votes);
      CHECK(rev[i].total_similarity == doctest::Approx(res[i].total_similarity).epsilon(1e-12));
    }
  }
}

TEST_CASE("a stored track identifies itself with every sub") {
  Rng rng(4);
  auto db = random_db(10, 6, rng);
  const auto& t = db.track(7);
  std::vector<std::vector<float>> rows;
  for (std::size_t r = 0; r < t.sub_count; ++r) {
    rows.emplace_back(db.matrix().row(t.first_row + r), db.matrix().row(t.first_row + r) + 256);
  }
  const auto res = db.identify(make_fp(rows));
  REQUIRE_FALSE(res.empty());
  CHECK(res[0].track_id == 7);
  CHECK(res[0].votes == 6);
}

TEST_CASE("save / load") {
  Rng rng(5);
  const auto db = random_db(50, 4, rng);
  const auto bytes = db.encode();
  const auto back = FingerprintDb::decode(bytes);
  CHECK(back == db);
  CHECK(std::memcmp(back.matrix().data.data(), db.matrix().data.data(), 200 * 1024) == 0);
  CHECK(back.tracks() == db.tracks());

  const std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 512);
  CHECK_THROWS_AS(FingerprintDb::decode(cut), FormatError);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(FingerprintDb::decode(bad), FormatError);
  try {
    FingerprintDb::decode(cut);
  } catch (const FormatError& e) {
    CHECK(e.offset() > 0);
  }

  const auto empty = FingerprintDb::decode(FingerprintDb{}.encode());
  CHECK(empty.empty());
  CHECK(empty.track_count() == 0);

  const auto path = std::filesystem::temp_directory_path() / "cfp_test_db.cfpd";
  db.save(path);
  CHECK(FingerprintDb::load(path) == db);
  std::filesystem::remove(path);
}

}  // TEST_SUITE
