#pragma once

// Momentum-contrast training: dictionary queue, InfoNCE, key-encoder momentum
// update, view construction and the training loop.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "cfp/audio.hpp"
#include "cfp/degrade.hpp"
#include "cfp/features.hpp"
#include "cfp/nn/encoder.hpp"
#include "cfp/nn/optim.hpp"
#include "cfp/nn/params.hpp"
#include "cfp/rng.hpp"

namespace cfp::moco {

using audio::AudioBuffer;

struct Hyper {
  double tau = 0.07;
  double m = 0.999;
  std::size_t batch = 16;
  std::size_t queue_k = 512;
  std::size_t steps = 1000;
  double lr0 = 0.03;
  double momentum = 0.9;
  double weight_decay = 0.0001;
  double degrade_probability = degrade::kSelectProbability;
  std::uint64_t seed = 0;
  std::string corpus;  // directory of WAV files, used by the CLI
  nn::EncoderConfig encoder;

  // Throws ConfigError on out-of-range values.
  void validate() const;

  friend bool operator==(const Hyper&, const Hyper&) = default;
};

// "key = value" lines; '#' starts a comment. Keys: tau, m, batch, queue_k,
// steps, lr0, momentum, weight_decay, degrade_probability, seed, corpus,
// conv_channels (comma list). Unknown keys and bad values raise ConfigError
// naming the line. Keys not mentioned keep the values from `base`.
Hyper parse_config(const std::string& text, const Hyper& base = Hyper{});
Hyper load_config(const std::filesystem::path& path, const Hyper& base = Hyper{});
std::string to_config_text(const Hyper& h);

inline constexpr std::uint64_t kUnknownSource = ~std::uint64_t{0};

// FIFO store of K unit-norm key rows. Rows are written at `head` and never
// touched again until evicted; every row carries the sequence number of its
// insertion so age order can be audited.
class DictionaryQueue {
 public:
  DictionaryQueue(std::size_t capacity, std::size_t dim = nn::kEmbedDim);

  std::size_t capacity() const { return keys_.rows; }
  std::size_t dim() const { return keys_.cols; }
  std::size_t size() const { return filled_; }
  std::size_t head() const { return head_; }
  bool full() const { return filled_ == capacity(); }

  // Appends every row of `k`, evicting the oldest rows once full. `sources`
  // names the corpus track behind each row (empty: unknown). Throws
  // SizeError when k has the wrong width, more rows than the capacity or a
  // source list of the wrong length, and NumericError for rows that are not
  // unit norm within 1e-5.
  void enqueue(const nn::Matrix<float>& k, const std::vector<std::uint64_t>& sources = {});

  // Storage rows [0, size()) are valid; their order is not age order.
  const nn::Matrix<float>& storage() const { return keys_; }
  const float* row(std::size_t i) const { return keys_.row(i); }
  std::uint64_t tag(std::size_t i) const { return tags_[i]; }
  std::uint64_t source(std::size_t i) const { return sources_[i]; }

  // Storage indices from oldest to newest.
  std::vector<std::size_t> age_order() const;

  friend bool operator==(const DictionaryQueue&, const DictionaryQueue&) = default;

 private:
  nn::Matrix<float> keys_;
  std::vector<std::uint64_t> tags_;
  std::vector<std::uint64_t> sources_;
  std::size_t head_ = 0;
  std::size_t filled_ = 0;
  std::uint64_t next_tag_ = 0;
};

struct InfoNceResult {
  double loss = 0.0;
  std::vector<double> grad_q;  // d loss / d q, keys held constant
};

// loss = -log( exp(q.k+/tau) / (exp(q.k+/tau) + sum_j exp(q.k-_j/tau)) ),
// evaluated with the maximum logit subtracted. `negs` holds m rows of `dim`.
// Inputs must be finite (NumericError) and unit norm within 1e-4
// (InputError); m >= 1.
template <typename T>
InfoNceResult info_nce(const T* q, const T* k_pos, const T* negs, std::size_t m, std::size_t dim,
                       double tau);

// theta_k <- m * theta_k + (1 - m) * theta_q, element-wise, evaluated in
// double and rounded once.
template <typename T>
void momentum_update(nn::ParamSet<T>& theta_k, const nn::ParamSet<T>& theta_q, double m);

// Shortest source a view can be cut from: 2.5 s after the strongest combined
// speed and tempo shrink.
inline constexpr std::size_t kMinViewSource = 57600;

struct ViewPair {
  AudioBuffer query;
  AudioBuffer key;
  degrade::DegradationSpec query_spec;
  degrade::DegradationSpec key_spec;
};

// Per track: two independently sampled degradations, each applied and cut to
// the first 2.5 s. Only the prefix a spec can reach is processed. Throws
// InputError naming the first track shorter than kMinViewSource samples.
std::vector<ViewPair> make_views(const std::vector<AudioBuffer>& tracks, std::uint64_t seed,
                                 double probability = degrade::kSelectProbability,
                                 std::size_t threads = 0);

// One degraded 2.5 s view of `track` (the key half of make_views).
AudioBuffer make_view(const AudioBuffer& track, const degrade::DegradationSpec& spec,
                      std::uint64_t seed);

struct StepMetrics {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double mean_pos_sim = 0.0;
  std::size_t queue_fill = 0;
};

// step \t lr \t loss \t mean positive similarity \t queue fill
std::string format_metrics(const StepMetrics& s);

struct TrainState {
  Hyper hyper;
  nn::ParamSet<float> theta_q;
  nn::ParamSet<float> theta_k;
  nn::ParamSet<float> velocity;
  DictionaryQueue queue;
  std::size_t step = 0;
  std::uint64_t rng_seed = 0;

  // theta_k starts as a copy of theta_q; the queue starts empty.
  static TrainState init(const Hyper& h);
};

// Fills the queue with key embeddings of degraded random crops of the corpus
// under the current theta_k.
void warm_up(TrainState& state, const std::vector<AudioBuffer>& corpus, std::size_t threads = 0);

// One optimization step on a batch of crops (each >= kMinViewSource):
// views, query/key forward, InfoNCE against the queue, back-propagation into
// theta_q, SGD with the cosine schedule, momentum update, enqueue.
//
// sources[i] is the corpus track crop i was cut from. Queue rows holding a
// key of the query's own track are left out of that query's negatives: with a
// corpus of tens of tracks the queue carries several near-copies of every
// track, and treating them as negatives would give each query more than one
// positive. Without sources every queue row is a negative.
StepMetrics train_step(TrainState& state, const std::vector<AudioBuffer>& crops,
                       const std::vector<std::uint64_t>& sources, std::size_t threads = 0);
StepMetrics train_step(TrainState& state, const std::vector<AudioBuffer>& crops,
                       std::size_t threads = 0);

// Random crop of kMinViewSource + margin samples (the whole track when
// shorter than that but still long enough).
AudioBuffer random_crop(const AudioBuffer& track, Rng& rng);

struct TrainResult {
  TrainState state;
  nn::ParamSet<float> initial;  // theta_q before step 0
  std::vector<StepMetrics> metrics;
};

using MetricsSink = std::function<void(const StepMetrics&)>;

// Full run: warm-up, then hyper.steps steps over shuffled batches (each epoch is
// a fresh permutation; a trailing partial batch is skipped). Throws
// ConfigError when the corpus holds fewer tracks than one batch.
TrainResult train(const std::vector<AudioBuffer>& corpus, const Hyper& hyper,
                  const MetricsSink& sink = {}, std::size_t threads = 0);

}  // namespace cfp::moco
