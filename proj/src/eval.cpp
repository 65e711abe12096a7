#include "cfp/eval.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "cfp/error.hpp"
#include "cfp/fingerprint.hpp"
#include "cfp/parallel.hpp"
#include "cfp/rng.hpp"

namespace cfp::eval {

matchdb::FingerprintDb build_db(const std::vector<Reference>& refs, const nn::ParamSet<float>& encoder,
                                std::size_t threads) {
  std::vector<fingerprint::Fingerprint> fps(refs.size());
  parallel_for(refs.size(), threads, [&](std::size_t i) {
    fps[i] = fingerprint::extract(refs[i].audio, encoder, refs[i].name, 1);
  });
  matchdb::FingerprintDb db;
  for (std::size_t i = 0; i < refs.size(); ++i) db.add_track(fps[i], refs[i].name);
  return db;
}

Report evaluate(const matchdb::FingerprintDb& db, const std::vector<Reference>& refs,
                const nn::ParamSet<float>& encoder, const Options& opt) {
  if (refs.empty()) throw InputError("evaluate: no reference tracks");
  if (db.track_count() != refs.size()) throw ConfigError("evaluate: database does not match references");
  if (opt.n_queries == 0) throw InputError("evaluate: need at least one query");

  Report rep;
  rep.n_queries = opt.n_queries;
  rep.records.resize(opt.n_queries);
  const auto clip_len = static_cast<std::size_t>(std::llround(opt.clip_s * audio::kTargetRate));

  parallel_for(opt.n_queries, opt.threads, [&](std::size_t i) {
    Rng rng(derive_seed(opt.seed, 0xe7a1, i));
    QueryRecord& rec = rep.records[i];
    rec.index = i;
    rec.true_track = static_cast<std::uint32_t>(rng.below(refs.size()));
    const AudioBuffer src = audio::to_mono_16k(refs[rec.true_track].audio);
    const std::size_t len = std::min(clip_len, src.size());
    // start on the segment grid so an undistorted clip reproduces db rows
    const std::size_t slots = (src.size() - len) / fingerprint::kHopSamples + 1;
    const std::size_t start = rng.below(slots) * fingerprint::kHopSamples;
    rec.clip_start_s = static_cast<double>(start) / audio::kTargetRate;
    AudioBuffer clip;
    clip.sample_rate = src.sample_rate;
    clip.samples.assign(src.samples.begin() + static_cast<std::ptrdiff_t>(start),
                        src.samples.begin() + static_cast<std::ptrdiff_t>(start + len));
    if (opt.degrade) {
      rec.spec = degrade::sample_spec(derive_seed(opt.seed, 0xe7a2, i), opt.include_test_only, opt.probability);
      clip = degrade::apply(clip, rec.spec, derive_seed(opt.seed, 0xe7a3, i));
    }
    if (opt.attack) clip = opt.attack(clip);
    const auto fp = fingerprint::extract(clip, encoder, {}, 1);
    const auto ranked = db.identify(fp, 1);
    rec.n_subs = fp.subs.size();
    rec.predicted = ranked.front().track_id;
    rec.votes = ranked.front().votes;
    rec.hit = rec.predicted == rec.true_track;
  });

  double votes = 0.0;
  for (const auto& rec : rep.records) {
    rep.hits += rec.hit ? 1 : 0;
    votes += static_cast<double>(rec.votes);
    const auto labels = rec.spec.labels();
    std::string combo;
    for (const auto& l : labels) combo += (combo.empty() ? "" : "+") + l;
    if (combo.empty()) combo = "none";
    auto& c = rep.by_combination[combo];
    ++c.n;
    c.hits += rec.hit ? 1 : 0;
    for (const auto& l : labels.empty() ? std::vector<std::string>{"none"} : labels) {
      auto& t = rep.by_type[l];
      ++t.n;
      t.hits += rec.hit ? 1 : 0;
    }
  }
  rep.hit_rate = static_cast<double>(rep.hits) / static_cast<double>(rep.n_queries);
  rep.mean_winner_votes = votes / static_cast<double>(rep.n_queries);
  return rep;
}

std::string to_text(const Report& r) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "queries %zu  hits %zu  hit rate %.4f  mean winner votes %.3f\n",
                r.n_queries, r.hits, r.hit_rate, r.mean_winner_votes);
  out << buf << "per degradation type (a query counts under each type it contains):\n";
  for (const auto& [k, t] : r.by_type) {
    std::snprintf(buf, sizeof(buf), "  %-10s %5zu queries  hit rate %.4f\n", k.c_str(), t.n, t.hit_rate());
    out << buf;
  }
  out << "per combination:\n";
  for (const auto& [k, t] : r.by_combination) {
    std::snprintf(buf, sizeof(buf), "  %-40s %5zu  %.4f\n", k.c_str(), t.n, t.hit_rate());
    out << buf;
  }
  return out.str();
}

std::string to_jsonl(const Report& r) {
  using nlohmann::json;
  std::ostringstream out;
  for (const auto& q : r.records) {
    out << json{{"record", "query"},      {"index", q.index},         {"true_track", q.true_track},
                {"predicted", q.predicted}, {"hit", q.hit},           {"votes", q.votes},
                {"subs", q.n_subs},         {"clip_start_s", q.clip_start_s},
                {"degradation", q.spec.to_string()}}
               .dump()
        << "\n";
  }
  out << json{{"record", "summary"},
              {"n_queries", r.n_queries},
              {"hits", r.hits},
              {"hit_rate", r.hit_rate},
              {"mean_winner_votes", r.mean_winner_votes}}
             .dump()
      << "\n";
  for (const auto& [k, t] : r.by_combination) {
    out << json{{"record", "breakdown"}, {"kind", "combination"}, {"key", k}, {"n", t.n}, {"hits", t.hits}}.dump()
        << "\n";
  }
  for (const auto& [k, t] : r.by_type) {
    out << json{{"record", "breakdown"}, {"kind", "type"}, {"key", k}, {"n", t.n}, {"hits", t.hits}}.dump()
        << "\n";
  }
  return out.str();
}

}  // namespace cfp::eval
