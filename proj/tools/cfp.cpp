// cfp: command-line front end.
//
//   cfp [--seed N] [--config FILE] [--threads N] <command> ...
//
// CFP_CONFIG in the environment names the config file when --config is not
// given. Every command exits 0 only on full success; files it was writing are
// removed when it fails.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cfp/audio.hpp"
#include "cfp/degrade.hpp"
#include "cfp/error.hpp"
#include "cfp/eval.hpp"
#include "cfp/fingerprint.hpp"
#include "cfp/gradcheck.hpp"
#include "cfp/matchdb.hpp"
#include "cfp/moco.hpp"
#include "cfp/nn/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace cfp;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string config;
  std::size_t threads = 0;
};

// Deletes the registered outputs unless commit() was reached.
class Outputs {
 public:
  Outputs() = default;
  Outputs(const Outputs&) = delete;
  Outputs& operator=(const Outputs&) = delete;
  ~Outputs() {
    if (committed_) return;
    for (const auto& p : paths_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }
  const fs::path& add(fs::path p) {
    paths_.push_back(std::move(p));
    return paths_.back();
  }
  void commit() { committed_ = true; }

 private:
  std::vector<fs::path> paths_;
  bool committed_ = false;
};

std::string config_path(const Globals& g) {
  if (!g.config.empty()) return g.config;
  if (const char* env = std::getenv("CFP_CONFIG"); env != nullptr && *env != '\0') return env;
  return {};
}

moco::Hyper hyper_from(const Globals& g) {
  moco::Hyper h;
  const auto path = config_path(g);
  if (!path.empty()) h = moco::load_config(path);
  if (g.seed_given) h.seed = g.seed;
  h.validate();
  return h;
}

std::vector<eval::Reference> load_refs(const fs::path& dir) {
  std::vector<eval::Reference> refs;
  for (const auto& p : audio::list_wavs(dir)) refs.push_back({p.stem().string(), audio::to_mono_16k(audio::load_wav(p))});
  return refs;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

// ---- commands

struct SynthArgs {
  std::size_t n = 50;
  double duration = 10.0;
  std::string out;
};

int cmd_synth(const Globals& g, const SynthArgs& a) {
  if (a.n == 0) throw InputError("need at least one track");
  if (!(a.duration >= 2.5)) throw InputError("--duration must be at least 2.5 s");
  Outputs outs;
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (!fs::is_directory(a.out)) throw IoError("cannot create " + a.out);
  for (std::size_t i = 0; i < a.n; ++i) {
    const auto& path = outs.add(fs::path(a.out) / ("track_" + std::to_string(g.seed) + "_" + std::to_string(i) + ".wav"));
    audio::write_wav(path, audio::synth_track(audio::corpus_kind(i), audio::corpus_track_seed(g.seed, i), a.duration));
  }
  outs.commit();
  std::printf("wrote %zu tracks to %s\n", a.n, a.out.c_str());
  return 0;
}

struct TrainArgs {
  std::string corpus;
  std::string out;
  std::string log;
  std::string initial_out;
  bool quiet = false;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  moco::Hyper h = hyper_from(g);
  if (!a.corpus.empty()) h.corpus = a.corpus;
  if (h.corpus.empty()) throw ConfigError("no corpus: pass --corpus or set corpus in the config");
  std::vector<audio::AudioBuffer> corpus;
  for (const auto& p : audio::list_wavs(h.corpus)) corpus.push_back(audio::to_mono_16k(audio::load_wav(p)));

  Outputs outs;
  const fs::path log_path = a.log.empty() ? fs::path(a.out + ".metrics.tsv") : fs::path(a.log);
  std::ofstream log(outs.add(log_path));
  if (!log) throw IoError("cannot write " + log_path.string());
  log << "step\tlr\tloss\tpos_sim\tqueue_fill\n";
  const auto sink = [&](const moco::StepMetrics& m) {
    log << moco::format_metrics(m) << '\n';
    if (!a.quiet && (m.step % 50 == 0 || m.step + 1 == h.steps)) {
      std::fprintf(stderr, "step %zu  loss %.4f  pos %.4f  lr %.5f\n", m.step, m.loss, m.mean_pos_sim, m.lr);
    }
  };
  const auto res = moco::train(corpus, h, sink, g.threads);
  if (!log.flush()) throw IoError("write failed for " + log_path.string());
  log.close();
  nn::save_checkpoint(outs.add(a.out), res.state.theta_q);
  if (!a.initial_out.empty()) nn::save_checkpoint(outs.add(a.initial_out), res.initial);
  outs.commit();
  const auto& first = res.metrics.front();
  const auto& last = res.metrics.back();
  std::printf("trained %zu steps on %zu tracks: loss %.4f -> %.4f, positive similarity %.4f -> %.4f\n",
              res.metrics.size(), corpus.size(), first.loss, last.loss, first.mean_pos_sim, last.mean_pos_sim);
  return 0;
}

struct DegradeArgs {
  std::string in;
  std::string out;
  std::string spec;
  bool with_eq = false;
  double probability = degrade::kSelectProbability;
};

int cmd_degrade(const Globals& g, const DegradeArgs& a) {
  const auto audio = audio::to_mono_16k(audio::load_wav(a.in));
  const auto spec = a.spec.empty() ? degrade::sample_spec(g.seed, a.with_eq, a.probability)
                                   : degrade::DegradationSpec::parse(a.spec);
  spec.validate();
  Outputs outs;
  audio::write_wav(outs.add(a.out), degrade::apply(audio, spec, derive_seed(g.seed, 0xde)));
  outs.commit();
  std::printf("%s\n", spec.to_string().c_str());
  return 0;
}

struct DbBuildArgs {
  std::string checkpoint;
  std::string refs;
  std::string out;
};

int cmd_db_build(const Globals& g, const DbBuildArgs& a) {
  const auto params = nn::load_checkpoint(a.checkpoint);
  const auto refs = load_refs(a.refs);
  const auto db = eval::build_db(refs, params, g.threads);
  Outputs outs;
  db.save(outs.add(a.out));
  outs.commit();
  std::printf("db: %zu tracks, %zu sub-fingerprints\n", db.track_count(), db.row_count());
  return 0;
}

struct DbAddArgs {
  std::string db;
  std::string checkpoint;
  std::vector<std::string> wavs;
  std::string name;
};

int cmd_db_add(const Globals& g, const DbAddArgs& a) {
  if (!a.name.empty() && a.wavs.size() != 1) throw InputError("--name needs exactly one --wav");
  auto db = matchdb::FingerprintDb::load(a.db);
  const auto params = nn::load_checkpoint(a.checkpoint);
  for (const auto& w : a.wavs) {
    const auto name = a.name.empty() ? fs::path(w).stem().string() : a.name;
    const auto id = db.add_track(fingerprint::extract(audio::load_wav(w), params, name, g.threads), name);
    std::printf("added %s as track %u\n", name.c_str(), id);
  }
  // save() replaces the file in one rename, so a failure leaves the old db
  db.save(a.db);
  std::printf("db: %zu tracks, %zu sub-fingerprints\n", db.track_count(), db.row_count());
  return 0;
}

struct IdentifyArgs {
  std::string db;
  std::string checkpoint;
  std::string wav;
  std::size_t top = 5;
};

int cmd_identify(const Globals& g, const IdentifyArgs& a) {
  const auto db = matchdb::FingerprintDb::load(a.db);
  const auto params = nn::load_checkpoint(a.checkpoint);
  const auto fp = fingerprint::extract(audio::load_wav(a.wav), params, a.wav, g.threads);
  const auto res = db.identify(fp, g.threads);
  std::printf("query %s: %zu sub-fingerprints\n", a.wav.c_str(), fp.subs.size());
  std::printf("rank\ttrack\tvotes\tsimilarity\n");
  for (std::size_t i = 0; i < res.size() && i < a.top; ++i) {
    std::printf("%zu\t%s\t%zu\t%.6f\n", i + 1, res[i].name.c_str(), res[i].votes, res[i].total_similarity);
  }
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string refs;
  std::size_t queries = 200;
  double clip = 10.0;
  bool no_degrade = false;
  std::string jsonl;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
  const auto params = nn::load_checkpoint(a.checkpoint);
  const auto refs = load_refs(a.refs);
  const auto db = eval::build_db(refs, params, g.threads);
  eval::Options opt;
  opt.n_queries = a.queries;
  opt.seed = g.seed;
  opt.clip_s = a.clip;
  opt.degrade = !a.no_degrade;
  opt.threads = g.threads;
  const auto rep = eval::evaluate(db, refs, params, opt);
  Outputs outs;
  if (!a.jsonl.empty()) write_text(outs.add(a.jsonl), eval::to_jsonl(rep));
  outs.commit();
  std::fputs(eval::to_text(rep).c_str(), stdout);
  return 0;
}

struct GradcheckArgs {
  std::size_t coords = 20;
};

int cmd_gradcheck(const Globals& g, const GradcheckArgs& a) {
  gradcheck::Options opt;
  opt.seed = g.seed;
  opt.coords = a.coords;
  const auto comps = gradcheck::run(opt);
  for (const auto& c : comps) std::printf("%s\n", gradcheck::format(c).c_str());
  const bool ok = gradcheck::all_pass(comps);
  std::printf("%s\n", ok ? "gradcheck passed" : "gradcheck FAILED");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contrastive audio fingerprinting"};
  app.require_subcommand(1);
  Globals g;
  auto* seed_opt = app.add_option("--seed", g.seed, "random seed (default 0)");
  app.add_option("--config", g.config, "training config file (env CFP_CONFIG when absent)");
  app.add_option("--threads", g.threads, "worker threads, 0 = all cores");

  std::function<int()> run;

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "write a synthetic corpus");
  c_synth->add_option("-n,--n", synth.n, "number of tracks")->capture_default_str();
  c_synth->add_option("--duration", synth.duration, "seconds per track")->capture_default_str();
  c_synth->add_option("-o,--out", synth.out, "output directory")->required();
  c_synth->callback([&] { run = [&] { return cmd_synth(g, synth); }; });

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "contrastive training");
  c_train->add_option("--corpus", train.corpus, "directory of WAV files (or corpus = in the config)");
  c_train->add_option("-o,--out", train.out, "checkpoint to write")->required();
  c_train->add_option("--log", train.log, "metrics log (default <out>.metrics.tsv)");
  c_train->add_option("--initial-out", train.initial_out, "also write the step-0 encoder");
  c_train->add_flag("-q,--quiet", train.quiet, "no progress lines");
  c_train->callback([&] { run = [&] { return cmd_train(g, train); }; });

  DegradeArgs deg;
  auto* c_deg = app.add_subcommand("degrade", "apply a sampled or given degradation");
  c_deg->add_option("-i,--in", deg.in, "input WAV")->required();
  c_deg->add_option("-o,--out", deg.out, "output WAV")->required();
  c_deg->add_option("--spec", deg.spec, "e.g. \"noise=0.05 echo=1\"; sampled from --seed when absent");
  c_deg->add_flag("--eq", deg.with_eq, "let EQ enter the sampled draw");
  c_deg->add_option("--probability", deg.probability, "per-degradation selection probability")
      ->check(CLI::Range(0.0, 1.0));
  c_deg->callback([&] { run = [&] { return cmd_degrade(g, deg); }; });

  DbBuildArgs dbb;
  auto* c_dbb = app.add_subcommand("db-build", "fingerprint a directory of references");
  c_dbb->add_option("--checkpoint", dbb.checkpoint, "encoder checkpoint")->required();
  c_dbb->add_option("--refs", dbb.refs, "directory of reference WAVs")->required();
  c_dbb->add_option("-o,--out", dbb.out, "database file")->required();
  c_dbb->callback([&] { run = [&] { return cmd_db_build(g, dbb); }; });

  DbAddArgs dba;
  auto* c_dba = app.add_subcommand("db-add", "append tracks to a database");
  c_dba->add_option("--db", dba.db, "database file")->required();
  c_dba->add_option("--checkpoint", dba.checkpoint, "encoder checkpoint")->required();
  c_dba->add_option("--wav", dba.wavs, "WAV file(s) to add")->required();
  c_dba->add_option("--name", dba.name, "track name (default: file stem)");
  c_dba->callback([&] { run = [&] { return cmd_db_add(g, dba); }; });

  IdentifyArgs idf;
  auto* c_id = app.add_subcommand("identify", "rank database tracks for a query clip");
  c_id->add_option("--db", idf.db, "database file")->required();
  c_id->add_option("--checkpoint", idf.checkpoint, "encoder checkpoint")->required();
  c_id->add_option("--wav", idf.wav, "query WAV")->required();
  c_id->add_option("--top", idf.top, "results to print")->capture_default_str();
  c_id->callback([&] { run = [&] { return cmd_identify(g, idf); }; });

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "hit rate of degraded queries against the references");
  c_ev->add_option("--checkpoint", ev.checkpoint, "encoder checkpoint")->required();
  c_ev->add_option("--refs", ev.refs, "directory of reference WAVs")->required();
  c_ev->add_option("--queries", ev.queries, "number of queries")->capture_default_str();
  c_ev->add_option("--clip", ev.clip, "query length in seconds")->capture_default_str();
  c_ev->add_flag("--no-degrade", ev.no_degrade, "undistorted queries");
  c_ev->add_option("--jsonl", ev.jsonl, "write line-delimited records here");
  c_ev->callback([&] { run = [&] { return cmd_eval(g, ev); }; });

  GradcheckArgs gc;
  auto* c_gc = app.add_subcommand("gradcheck", "finite-difference check of every backward pass");
  c_gc->add_option("--coords", gc.coords, "scalars sampled per component")->capture_default_str();
  c_gc->callback([&] { run = [&] { return cmd_gradcheck(g, gc); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  g.seed_given = seed_opt->count() > 0;

  try {
    return run();
  } catch (const Error& e) {
    std::fprintf(stderr, "cfp: error: %s\n", e.what());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cfp: unexpected failure: %s\n", e.what());
  }
  return 1;
}
