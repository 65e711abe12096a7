#include "cfp/moco.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cfp/error.hpp"
#include "cfp/parallel.hpp"
#include "cfp/simd/kernels.hpp"

namespace cfp::moco {
namespace {

// Samples processed beyond what a spec can map into the first 2.5 s; covers
// the phase vocoder window and the resampler kernel.
constexpr std::size_t kViewMargin = 4096;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_line(std::size_t line, const std::string& msg) {
  throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& v, std::size_t line, const std::string& key) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(out)) {
    bad_line(line, "'" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_uint(const std::string& v, std::size_t line, const std::string& key) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    bad_line(line, "'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
double dot(const T* a, const T* b, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) {
    return simd::kernels().dot_f64acc(a, b, n);
  } else {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
  }
}

template <typename T>
void require_finite(const T* v, std::size_t n, const char* what) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(v[i])) throw NumericError(std::string("info_nce: non-finite value in ") + what);
  }
}

template <typename T>
void require_unit(const T* v, std::size_t n, const char* what) {
  const double norm = std::sqrt(dot(v, v, n));
  if (std::abs(norm - 1.0) > 1e-4) {
    throw InputError(std::string("info_nce: ") + what + " is not unit norm (" + fmt_double(norm) + ")");
  }
}

features::MelSpectrogram mel_of(const AudioBuffer& a) { return features::mel_spectrogram(a); }

}  // namespace

void Hyper::validate() const {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("m must lie in [0, 1]");
  if (batch == 0) throw ConfigError("batch must be positive");
  if (queue_k < batch) throw ConfigError("queue_k must be at least the batch size");
  if (queue_k % batch != 0) throw ConfigError("queue_k must be a multiple of the batch size");
  if (steps == 0) throw ConfigError("steps must be positive");
  if (!(lr0 >= 0.0)) throw ConfigError("lr0 must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(degrade_probability >= 0.0 && degrade_probability <= 1.0)) {
    throw ConfigError("degrade_probability must lie in [0, 1]");
  }
  encoder.validate();
}

Hyper parse_config(const std::string& text, const Hyper& base) {
  Hyper h = base;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) bad_line(line, "expected 'key = value'");
    const std::string key = trim(s.substr(0, eq));
    const std::string val = trim(s.substr(eq + 1));
    if (val.empty() && key != "corpus") bad_line(line, "missing value for '" + key + "'");
    if (key == "tau") {
      h.tau = parse_double(val, line, key);
    } else if (key == "m") {
      h.m = parse_double(val, line, key);
    } else if (key == "batch") {
      h.batch = parse_uint(val, line, key);
    } else if (key == "queue_k") {
      h.queue_k = parse_uint(val, line, key);
    } else if (key == "steps") {
      h.steps = parse_uint(val, line, key);
    } else if (key == "lr0") {
      h.lr0 = parse_double(val, line, key);
    } else if (key == "momentum") {
      h.momentum = parse_double(val, line, key);
    } else if (key == "weight_decay") {
      h.weight_decay = parse_double(val, line, key);
    } else if (key == "degrade_probability") {
      h.degrade_probability = parse_double(val, line, key);
    } else if (key == "seed") {
      h.seed = parse_uint(val, line, key);
    } else if (key == "corpus") {
      h.corpus = val;
    } else if (key == "conv_channels") {
      std::vector<std::size_t> ch;
      std::stringstream ss(val);
      std::string item;
      while (std::getline(ss, item, ',')) ch.push_back(parse_uint(trim(item), line, key));
      h.encoder.conv_channels = ch;
    } else {
      bad_line(line, "unknown key '" + key + "'");
    }
  }
  try {
    h.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("invalid training config: ") + e.what());
  }
  return h;
}

Hyper load_config(const std::filesystem::path& path, const Hyper& base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), base);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string to_config_text(const Hyper& h) {
  std::string ch;
  for (std::size_t i = 0; i < h.encoder.conv_channels.size(); ++i) {
    if (i) ch += ",";
    ch += std::to_string(h.encoder.conv_channels[i]);
  }
  std::string s;
  s += "tau = " + fmt_double(h.tau) + "\n";
  s += "m = " + fmt_double(h.m) + "\n";
  s += "batch = " + std::to_string(h.batch) + "\n";
  s += "queue_k = " + std::to_string(h.queue_k) + "\n";
  s += "steps = " + std::to_string(h.steps) + "\n";
  s += "lr0 = " + fmt_double(h.lr0) + "\n";
  s += "momentum = " + fmt_double(h.momentum) + "\n";
  s += "weight_decay = " + fmt_double(h.weight_decay) + "\n";
  s += "degrade_probability = " + fmt_double(h.degrade_probability) + "\n";
  s += "seed = " + std::to_string(h.seed) + "\n";
  s += "conv_channels = " + ch + "\n";
  if (!h.corpus.empty()) s += "corpus = " + h.corpus + "\n";
  return s;
}

// ---- queue

DictionaryQueue::DictionaryQueue(std::size_t capacity, std::size_t dim)
    : keys_(capacity, dim), tags_(capacity, 0), sources_(capacity, kUnknownSource) {
  if (capacity == 0 || dim == 0) throw ConfigError("DictionaryQueue: capacity and dim must be positive");
}

void DictionaryQueue::enqueue(const nn::Matrix<float>& k, const std::vector<std::uint64_t>& sources) {
  if (!sources.empty() && sources.size() != k.rows) {
    throw SizeError("enqueue: " + std::to_string(sources.size()) + " sources for " +
                    std::to_string(k.rows) + " rows");
  }
  if (k.cols != dim()) {
    throw SizeError("enqueue: rows have " + std::to_string(k.cols) + " values, queue holds " +
                    std::to_string(dim()));
  }
  if (k.rows > capacity()) throw SizeError("enqueue: more rows than the queue capacity");
  const auto& kern = simd::kernels();
  for (std::size_t r = 0; r < k.rows; ++r) {
    const double norm = std::sqrt(kern.dot_f64acc(k.row(r), k.row(r), k.cols));
    if (!(std::abs(norm - 1.0) <= 1e-5)) {
      throw NumericError("enqueue: key row " + std::to_string(r) + " has norm " + fmt_double(norm));
    }
  }
  for (std::size_t r = 0; r < k.rows; ++r) {
    std::copy(k.row(r), k.row(r) + k.cols, keys_.row(head_));
    tags_[head_] = next_tag_++;
    sources_[head_] = sources.empty() ? kUnknownSource : sources[r];
    head_ = (head_ + 1) % capacity();
    if (filled_ < capacity()) ++filled_;
  }
}

std::vector<std::size_t> DictionaryQueue::age_order() const {
  std::vector<std::size_t> idx(filled_);
  // oldest row sits at head once the ring has wrapped, at 0 before that
  const std::size_t start = full() ? head_ : 0;
  for (std::size_t i = 0; i < filled_; ++i) idx[i] = (start + i) % capacity();
  return idx;
}

// ---- loss

template <typename T>
InfoNceResult info_nce(const T* q, const T* k_pos, const T* negs, std::size_t m, std::size_t dim,
                       double tau) {
  if (!(tau > 0.0)) throw ConfigError("info_nce: tau must be positive");
  if (m == 0) throw InputError("info_nce: need at least one negative");
  if (dim == 0) throw InputError("info_nce: empty vectors");
  require_finite(q, dim, "query");
  require_finite(k_pos, dim, "positive key");
  require_finite(negs, m * dim, "negative keys");
  require_unit(q, dim, "query");
  require_unit(k_pos, dim, "positive key");
  for (std::size_t j = 0; j < m; ++j) require_unit(negs + j * dim, dim, "a negative key");

  std::vector<double> logits(m + 1);
  logits[0] = dot(q, k_pos, dim) / tau;
  if constexpr (std::is_same_v<T, float>) {
    simd::kernels().dot_rows_f64acc(q, negs, m, dim, logits.data() + 1);
    for (std::size_t j = 1; j <= m; ++j) logits[j] /= tau;
  } else {
    for (std::size_t j = 0; j < m; ++j) logits[j + 1] = dot(q, negs + j * dim, dim) / tau;
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  const double shifted0 = logits[0] - mx;
  double rest = 0.0;  // negatives only
  for (std::size_t j = 0; j <= m; ++j) {
    logits[j] = std::exp(logits[j] - mx);
    if (j > 0) rest += logits[j];
  }
  const double z = logits[0] + rest;
  InfoNceResult r;
  // log(1 + rest/e0) keeps full relative precision when the loss is tiny
  r.loss = logits[0] > 0.0 ? std::log1p(rest / logits[0]) : std::log(z) - shifted0;
  // d loss / d q = (sum_j p_j k_j - k+) / tau, with p over {k+} u negatives
  r.grad_q.assign(dim, 0.0);
  const double p0_minus_1 = -rest / z;
  for (std::size_t d = 0; d < dim; ++d) r.grad_q[d] = p0_minus_1 * static_cast<double>(k_pos[d]);
  for (std::size_t j = 0; j < m; ++j) {
    const double p = logits[j + 1] / z;
    const T* row = negs + j * dim;
    for (std::size_t d = 0; d < dim; ++d) r.grad_q[d] += p * static_cast<double>(row[d]);
  }
  for (auto& g : r.grad_q) g /= tau;
  return r;
}

template InfoNceResult info_nce<float>(const float*, const float*, const float*, std::size_t,
                                       std::size_t, double);
template InfoNceResult info_nce<double>(const double*, const double*, const double*, std::size_t,
                                        std::size_t, double);

template <typename T>
void momentum_update(nn::ParamSet<T>& theta_k, const nn::ParamSet<T>& theta_q, double m) {
  theta_k.require_same_layout(theta_q, "momentum_update");
  if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("momentum_update: m must lie in [0, 1]");
  const double w = 1.0 - m;
  for (std::size_t i = 0; i < theta_k.count(); ++i) {
    auto& k = theta_k.tensor(i).data;
    const auto& q = theta_q.tensor(i).data;
    for (std::size_t j = 0; j < k.size(); ++j) {
      k[j] = static_cast<T>(m * static_cast<double>(k[j]) + w * static_cast<double>(q[j]));
    }
  }
}

template void momentum_update<float>(nn::ParamSet<float>&, const nn::ParamSet<float>&, double);
template void momentum_update<double>(nn::ParamSet<double>&, const nn::ParamSet<double>&, double);

// ---- views

AudioBuffer make_view(const AudioBuffer& track, const degrade::DegradationSpec& spec,
                      std::uint64_t seed) {
  const double reach = static_cast<double>(features::kSnippetSamples) * spec.duration_divisor();
  const std::size_t need =
      std::min(track.size(), static_cast<std::size_t>(std::ceil(reach)) + kViewMargin);
  AudioBuffer prefix;
  prefix.sample_rate = track.sample_rate;
  prefix.samples.assign(track.samples.begin(), track.samples.begin() + static_cast<std::ptrdiff_t>(need));
  AudioBuffer out = degrade::apply(prefix, spec, seed);
  // rounding in the length arithmetic can leave the output a sample short
  out.samples.resize(features::kSnippetSamples, 0.0f);
  return out;
}

std::vector<ViewPair> make_views(const std::vector<AudioBuffer>& tracks, std::uint64_t seed,
                                 double probability, std::size_t threads) {
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    if (tracks[i].sample_rate != audio::kTargetRate) {
      throw InputError("make_views: track " + std::to_string(i) + " is not 16 kHz");
    }
    if (tracks[i].size() < kMinViewSource) {
      throw InputError("make_views: track " + std::to_string(i) + " has " +
                       std::to_string(tracks[i].size()) + " samples, need at least " +
                       std::to_string(kMinViewSource));
    }
  }
  std::vector<ViewPair> out(tracks.size());
  parallel_for(tracks.size(), threads, [&](std::size_t i) {
    ViewPair& v = out[i];
    v.query_spec = degrade::sample_spec(derive_seed(seed, i, 1), false, probability);
    v.key_spec = degrade::sample_spec(derive_seed(seed, i, 2), false, probability);
    v.query = make_view(tracks[i], v.query_spec, derive_seed(seed, i, 3));
    v.key = make_view(tracks[i], v.key_spec, derive_seed(seed, i, 4));
  });
  return out;
}

std::string format_metrics(const StepMetrics& s) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%zu\t%.9g\t%.9g\t%.9g\t%zu", s.step, s.lr, s.loss, s.mean_pos_sim,
                s.queue_fill);
  return buf;
}

// ---- training

TrainState TrainState::init(const Hyper& h) {
  h.validate();
  TrainState s{h,
               nn::ParamSet<float>::kaiming_uniform(h.encoder, derive_seed(h.seed, 0x1417)),
               {},
               nn::ParamSet<float>::zeros(h.encoder),
               DictionaryQueue(h.queue_k),
               0,
               h.seed};
  s.theta_k = s.theta_q;
  return s;
}

AudioBuffer random_crop(const AudioBuffer& track, Rng& rng) {
  if (track.size() < kMinViewSource) {
    throw InputError("random_crop: track of " + std::to_string(track.size()) + " samples is too short");
  }
  const std::size_t len = std::min(track.size(), kMinViewSource + kViewMargin);
  const std::size_t start = rng.below(track.size() - len + 1);
  AudioBuffer out;
  out.sample_rate = track.sample_rate;
  out.samples.assign(track.samples.begin() + static_cast<std::ptrdiff_t>(start),
                     track.samples.begin() + static_cast<std::ptrdiff_t>(start + len));
  return out;
}

namespace {

std::vector<features::MelSpectrogram> mels_of(const std::vector<AudioBuffer>& views,
                                              std::size_t threads) {
  std::vector<features::MelSpectrogram> mels(views.size());
  parallel_for(views.size(), threads, [&](std::size_t i) { mels[i] = mel_of(views[i]); });
  return mels;
}

void check_corpus(const std::vector<AudioBuffer>& corpus) {
  if (corpus.empty()) throw ConfigError("training corpus is empty");
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].sample_rate != audio::kTargetRate) {
      throw InputError("corpus track " + std::to_string(i) + " is not 16 kHz");
    }
    if (corpus[i].size() < kMinViewSource) {
      throw InputError("corpus track " + std::to_string(i) + " is shorter than " +
                       std::to_string(kMinViewSource) + " samples");
    }
  }
}

}  // namespace

void warm_up(TrainState& state, const std::vector<AudioBuffer>& corpus, std::size_t threads) {
  check_corpus(corpus);
  const Hyper& h = state.hyper;
  nn::Encoder<float> enc(h.encoder);
  Rng rng(derive_seed(state.rng_seed, 0x3a7));
  std::size_t round = 0;
  while (!state.queue.full()) {
    const std::size_t n = std::min(h.batch, state.queue.capacity() - state.queue.size());
    std::vector<AudioBuffer> crops(n);
    std::vector<std::uint64_t> sources(n);
    for (std::size_t i = 0; i < n; ++i) {
      sources[i] = rng.below(corpus.size());
      crops[i] = random_crop(corpus[sources[i]], rng);
    }
    std::vector<AudioBuffer> views(n);
    const std::uint64_t round_seed = derive_seed(state.rng_seed, 0x3a8, round++);
    parallel_for(n, threads, [&](std::size_t i) {
      const auto spec = degrade::sample_spec(derive_seed(round_seed, i, 1), false, h.degrade_probability);
      views[i] = make_view(crops[i], spec, derive_seed(round_seed, i, 2));
    });
    const auto x = nn::pack_batch<float>(mels_of(views, threads));
    state.queue.enqueue(enc.forward(state.theta_k, x, n, nullptr, threads), sources);
  }
}

StepMetrics train_step(TrainState& state, const std::vector<AudioBuffer>& crops, std::size_t threads) {
  return train_step(state, crops, {}, threads);
}

StepMetrics train_step(TrainState& state, const std::vector<AudioBuffer>& crops,
                       const std::vector<std::uint64_t>& sources, std::size_t threads) {
  const Hyper& h = state.hyper;
  const std::size_t n = crops.size();
  if (n != h.batch) {
    throw SizeError("train_step: got " + std::to_string(n) + " crops for batch size " +
                    std::to_string(h.batch));
  }
  if (!sources.empty() && sources.size() != n) {
    throw SizeError("train_step: " + std::to_string(sources.size()) + " sources for " +
                    std::to_string(n) + " crops");
  }
  if (state.queue.size() == 0) throw StateError("train_step: queue is empty (run warm_up first)");
  if (state.step > h.steps) throw StateError("train_step: schedule already finished");

  const std::uint64_t step_seed = derive_seed(state.rng_seed, 0x57e9, state.step);
  const auto views = make_views(crops, step_seed, h.degrade_probability, threads);
  std::vector<AudioBuffer> qa(n), ka(n);
  for (std::size_t i = 0; i < n; ++i) {
    qa[i] = views[i].query;
    ka[i] = views[i].key;
  }
  const auto xq = nn::pack_batch<float>(mels_of(qa, threads));
  const auto xk = nn::pack_batch<float>(mels_of(ka, threads));

  nn::Encoder<float> enc(h.encoder);
  nn::Tape<float> tape;
  const auto q = enc.forward(state.theta_q, xq, n, &tape, threads);
  // keys: no tape, so nothing can flow back into theta_k
  const auto k = enc.forward(state.theta_k, xk, n, nullptr, threads);

  const auto& queue = state.queue;
  const std::size_t dim = q.cols;
  nn::Matrix<float> upstream(n, dim);
  std::vector<InfoNceResult> per(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const float* negs = queue.storage().data.data();
    std::size_t m = queue.size();
    std::vector<float> kept;
    if (!sources.empty()) {
      kept.reserve(m * dim);
      for (std::size_t r = 0; r < queue.size(); ++r) {
        if (queue.source(r) != sources[i]) kept.insert(kept.end(), queue.row(r), queue.row(r) + dim);
      }
      m = kept.size() / dim;
      negs = kept.data();
      if (m == 0) throw StateError("train_step: every queue row comes from the query's own track");
    }
    per[i] = info_nce<float>(q.row(i), k.row(i), negs, m, dim, h.tau);
  });
  StepMetrics met;
  met.step = state.step;
  const auto& kern = simd::kernels();
  for (std::size_t i = 0; i < n; ++i) {
    met.loss += per[i].loss;
    met.mean_pos_sim += kern.dot_f64acc(q.row(i), k.row(i), dim);
    for (std::size_t d = 0; d < dim; ++d) {
      upstream(i, d) = static_cast<float>(per[i].grad_q[d] / static_cast<double>(n));
    }
  }
  met.loss /= static_cast<double>(n);
  met.mean_pos_sim /= static_cast<double>(n);

  const auto grads = enc.backward(state.theta_q, tape, upstream, threads);
  met.lr = nn::cosine_lr(state.step, h.steps, h.lr0);
  nn::sgd_step(state.theta_q, grads, met.lr, nn::SgdConfig{h.momentum, h.weight_decay}, state.velocity);
  momentum_update(state.theta_k, state.theta_q, h.m);
  state.queue.enqueue(k, sources);
  met.queue_fill = state.queue.size();
  ++state.step;
  return met;
}

TrainResult train(const std::vector<AudioBuffer>& corpus, const Hyper& hyper, const MetricsSink& sink,
                  std::size_t threads) {
  hyper.validate();
  if (corpus.size() < hyper.batch) {
    throw ConfigError("corpus has " + std::to_string(corpus.size()) + " tracks, fewer than batch size " +
                      std::to_string(hyper.batch));
  }
  check_corpus(corpus);
  TrainResult result{TrainState::init(hyper), {}, {}};
  TrainState& state = result.state;
  result.initial = state.theta_q;
  warm_up(state, corpus, threads);

  Rng rng(derive_seed(hyper.seed, 0xba7c));
  std::vector<std::size_t> order(corpus.size());
  std::size_t pos = order.size();
  result.metrics.reserve(hyper.steps);
  while (state.step < hyper.steps) {
    if (pos + hyper.batch > order.size()) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
      pos = 0;
    }
    std::vector<AudioBuffer> crops(hyper.batch);
    std::vector<std::uint64_t> sources(hyper.batch);
    for (std::size_t i = 0; i < hyper.batch; ++i) {
      sources[i] = order[pos + i];
      crops[i] = random_crop(corpus[sources[i]], rng);
    }
    pos += hyper.batch;
    result.metrics.push_back(train_step(state, crops, sources, threads));
    if (sink) sink(result.metrics.back());
  }
  return result;
}

}  // namespace cfp::moco
