#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "cfp/error.hpp"
#include "cfp/moco.hpp"
#include "cfp/rng.hpp"

using namespace cfp;
using namespace cfp::moco;

namespace {

std::vector<double> unit(std::vector<double> v) {
  double n = 0;
  for (double x : v) n += x * x;
  for (double& x : v) x /= std::sqrt(n);
  return v;
}

std::vector<double> random_unit(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.normal();
  return unit(v);
}

// independent loss: log-sum-exp written out directly
double loss_oracle(const std::vector<double>& q, const std::vector<double>& kp,
                   const std::vector<std::vector<double>>& negs, double tau) {
  auto d = [&](const std::vector<double>& k) {
    long double s = 0;
    for (std::size_t i = 0; i < q.size(); ++i) s += static_cast<long double>(q[i]) * k[i];
    return s / tau;
  };
  long double denom = std::exp(d(kp));
  for (const auto& k : negs) denom += std::exp(d(k));
  return static_cast<double>(std::log(denom) - d(kp));
}

std::vector<double> flatten(const std::vector<std::vector<double>>& rows) {
  std::vector<double> out;
  for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
  return out;
}

nn::Matrix<float> unit_rows(std::size_t n, std::size_t dim, Rng& rng) {
  nn::Matrix<float> m(n, dim);
  for (std::size_t r = 0; r < n; ++r) {
    const auto v = random_unit(dim, rng);
    for (std::size_t j = 0; j < dim; ++j) m(r, j) = static_cast<float>(v[j]);
  }
  return m;
}

std::vector<audio::AudioBuffer> small_corpus(std::size_t n) {
  std::vector<audio::AudioBuffer> c;
  for (std::size_t i = 0; i < n; ++i) c.push_back(audio::synth_track(audio::corpus_kind(i), 100 + i, 4.0));
  return c;
}

Hyper small_hyper() {
  Hyper h;
  h.batch = 2;
  h.queue_k = 4;
  h.steps = 10;
  h.seed = 5;
  return h;
}

}  // namespace

TEST_SUITE("moco") {

TEST_CASE("info_nce symmetric two-way case is ln 2") {
  Rng rng(1);
  const auto q = random_unit(8, rng);
  // k+ and k- mirror each other across q
  auto kp = random_unit(8, rng);
  std::vector<double> kn(8);
  double qk = 0;
  for (std::size_t i = 0; i < 8; ++i) qk += q[i] * kp[i];
  for (std::size_t i = 0; i < 8; ++i) kn[i] = 2 * qk * q[i] - kp[i];
  for (double tau : {0.07, 0.5, 2.0}) {
    const auto r = info_nce<double>(q.data(), kp.data(), kn.data(), 1, 8, tau);
    CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("info_nce at q.k+ = 0.9, q.k- = 0.1") {
  const std::vector<double> q{1, 0, 0};
  const std::vector<double> kp{0.9, std::sqrt(1 - 0.81), 0};
  const std::vector<double> kn{0.1, 0, std::sqrt(1 - 0.01)};
  const auto r = info_nce<double>(q.data(), kp.data(), kn.data(), 1, 3, 0.07);
  CHECK(r.loss == doctest::Approx(std::log1p(std::exp(-0.8 / 0.07))).epsilon(1e-10));
  CHECK(r.loss == doctest::Approx(1.09e-5).epsilon(0.01));
}

TEST_CASE("info_nce with all similarities equal is ln(M+1)") {
  // q = e0 and every key has first coordinate 0.3
  for (std::size_t m : {1u, 7u, 512u}) {
    const std::size_t dim = m + 2;
    std::vector<double> q(dim, 0.0);
    q[0] = 1;
    auto key = [&](std::size_t axis) {
      std::vector<double> k(dim, 0.0);
      k[0] = 0.3;
      k[axis] = std::sqrt(1 - 0.09);
      return k;
    };
    const auto kp = key(1);
    std::vector<std::vector<double>> negs;
    for (std::size_t j = 0; j < m; ++j) negs.push_back(key(j + 2));
    const auto r = info_nce<double>(q.data(), kp.data(), flatten(negs).data(), m, dim, 0.07);
    CHECK(r.loss == doctest::Approx(std::log(static_cast<double>(m + 1))).epsilon(1e-12));
  }
}

TEST_CASE("info_nce matches the oracle and finite differences") {
  Rng rng(2);
  const std::size_t dim = 16, m = 9;
  auto q = random_unit(dim, rng);
  const auto kp = random_unit(dim, rng);
  std::vector<std::vector<double>> negs;
  for (std::size_t j = 0; j < m; ++j) negs.push_back(random_unit(dim, rng));
  const auto flat = flatten(negs);
  const auto r = info_nce<double>(q.data(), kp.data(), flat.data(), m, dim, 0.07);
  CHECK(r.loss == doctest::Approx(loss_oracle(q, kp, negs, 0.07)).epsilon(1e-12));
  CHECK(r.loss > 0.0);
  // the loss is a function of q alone; unit norm only matters for the check,
  // so the oracle is differentiated directly
  for (std::size_t i = 0; i < dim; ++i) {
    const double keep = q[i], h = 1e-6;
    q[i] = keep + h;
    const double a = loss_oracle(q, kp, negs, 0.07);
    q[i] = keep - h;
    const double b = loss_oracle(q, kp, negs, 0.07);
    q[i] = keep;
    const double fd = (a - b) / (2 * h);
    CHECK(std::abs(r.grad_q[i] - fd) <= 1e-5 * std::max(std::abs(fd), 1.0));
  }
}

TEST_CASE("info_nce decreases as q.k+ rises") {
  const std::size_t dim = 4;
  const std::vector<double> q{1, 0, 0, 0};
  const std::vector<double> kn{0.2, 0, std::sqrt(1 - 0.04), 0};
  double last = 1e300;
  for (double s = -1.0; s <= 1.0; s += 0.1) {
    const std::vector<double> kp{s, 0, 0, std::sqrt(std::max(0.0, 1 - s * s))};
    const auto r = info_nce<double>(q.data(), kp.data(), kn.data(), 1, dim, 0.07);
    CHECK(r.loss > 0.0);
    CHECK(r.loss < last);
    last = r.loss;
  }
}

TEST_CASE("info_nce stays finite across the full logit range") {
  const std::vector<double> q{1, 0};
  const std::vector<double> same{1, 0}, opposite{-1, 0};
  std::vector<double> negs;
  for (int j = 0; j < 512; ++j) negs.insert(negs.end(), same.begin(), same.end());
  const auto a = info_nce<double>(q.data(), opposite.data(), negs.data(), 512, 2, 0.07);
  CHECK(std::isfinite(a.loss));
  CHECK(a.loss == doctest::Approx(2 / 0.07 + std::log(512.0)).epsilon(1e-9));
  const auto b = info_nce<float>(std::vector<float>{1, 0}.data(), std::vector<float>{1, 0}.data(),
                                 std::vector<float>{-1, 0}.data(), 1, 2, 0.07);
  CHECK(std::isfinite(b.loss));
  CHECK(b.loss > 0.0);
}

TEST_CASE("info_nce input errors") {
  const std::vector<double> q{1, 0}, k{0, 1};
  const std::vector<double> bad{std::nan(""), 0};
  CHECK_THROWS_AS(info_nce<double>(bad.data(), k.data(), k.data(), 1, 2, 0.07), NumericError);
  const std::vector<double> longer{1.01, 0};
  CHECK_THROWS_AS(info_nce<double>(q.data(), longer.data(), k.data(), 1, 2, 0.07), InputError);
  CHECK_THROWS_AS(info_nce<double>(q.data(), k.data(), k.data(), 0, 2, 0.07), InputError);
}

TEST_CASE("queue is a FIFO of tagged rows") {
  Rng rng(3);
  DictionaryQueue queue(6, 4);
  CHECK(queue.size() == 0);
  std::vector<nn::Matrix<float>> batches;
  for (int b = 0; b < 5; ++b) {
    batches.push_back(unit_rows(2, 4, rng));
    queue.enqueue(batches.back(), {static_cast<std::uint64_t>(10 * b), static_cast<std::uint64_t>(10 * b + 1)});
    CHECK(queue.size() == std::min<std::size_t>(2 * (b + 1), 6));
    CHECK(queue.full() == (b >= 2));
  }
  // last three batches survive, oldest first
  const auto order = queue.age_order();
  REQUIRE(order.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    const std::size_t b = 2 + i / 2, r = i % 2;
    const std::size_t at = order[i];
    CHECK(queue.tag(at) == 2 * b + r);
    CHECK(queue.source(at) == 10 * b + r);
    for (std::size_t j = 0; j < 4; ++j) CHECK(queue.row(at)[j] == batches[b](r, j));
  }
  // without sources rows are unknown
  queue.enqueue(unit_rows(1, 4, rng));
  CHECK(queue.source(order[0]) == kUnknownSource);
}

TEST_CASE("rows are never rewritten while resident") {
  Rng rng(4);
  DictionaryQueue queue(8, 4);
  const auto first = unit_rows(2, 4, rng);
  queue.enqueue(first);
  const auto kept = queue.storage();
  for (int b = 0; b < 3; ++b) {
    queue.enqueue(unit_rows(2, 4, rng));
    for (std::size_t j = 0; j < 8; ++j) CHECK(queue.storage().data[j] == kept.data[j]);
  }
}

TEST_CASE("queue errors") {
  Rng rng(5);
  DictionaryQueue queue(4, 4);
  CHECK_THROWS_AS(queue.enqueue(unit_rows(2, 3, rng)), SizeError);
  CHECK_THROWS_AS(queue.enqueue(unit_rows(5, 4, rng)), SizeError);
  CHECK_THROWS_AS(queue.enqueue(unit_rows(2, 4, rng), {1}), SizeError);
  nn::Matrix<float> off(1, 4, 0.5f);
  off(0, 0) = 0.6f;
  CHECK_THROWS_AS(queue.enqueue(off), NumericError);
  CHECK(queue.size() == 0);
  CHECK_THROWS_AS(DictionaryQueue(0, 4), ConfigError);
}

TEST_CASE("momentum update") {
  nn::EncoderConfig c;
  c.conv_channels = {2};
  c.in_height = 4;
  c.in_width = 4;
  auto k = nn::ParamSet<double>::zeros(c), q = nn::ParamSet<double>::zeros(c);
  for (std::size_t i = 0; i < k.total_size(); ++i) {
    k.flat(i) = 0.5;
    q.flat(i) = 0.7;
  }
  auto a = k;
  momentum_update(a, q, 0.999);
  for (std::size_t i = 0; i < a.total_size(); ++i) CHECK(a.flat(i) == doctest::Approx(0.5002).epsilon(1e-14));
  auto b = k;
  momentum_update(b, q, 1.0);
  CHECK(b == k);
  auto z = k;
  momentum_update(z, q, 0.0);
  CHECK(z == q);

  auto kf = nn::ParamSet<float>::kaiming_uniform(c, 1);
  const auto qf = nn::ParamSet<float>::kaiming_uniform(c, 2);
  auto before = kf;
  momentum_update(kf, qf, 0.9);
  double max_step = 0, max_gap = 0;
  for (std::size_t i = 0; i < kf.total_size(); ++i) {
    max_step = std::max(max_step, std::abs(static_cast<double>(kf.flat(i)) - before.flat(i)));
    max_gap = std::max(max_gap, std::abs(static_cast<double>(before.flat(i)) - qf.flat(i)));
  }
  CHECK(max_step <= 0.1 * max_gap * (1 + 1e-6));
  CHECK_THROWS_AS(momentum_update(kf, nn::ParamSet<float>::zeros(nn::EncoderConfig{}), 0.9), ConfigError);
  CHECK_THROWS_AS(momentum_update(kf, qf, 1.5), ConfigError);
}

TEST_CASE("views: shape, determinism and the no-op case") {
  const auto corpus = small_corpus(3);
  const auto a = make_views(corpus, 7);
  const auto b = make_views(corpus, 7);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a[i].query.size() == features::kSnippetSamples);
    CHECK(a[i].key.size() == features::kSnippetSamples);
    CHECK(a[i].query.samples == b[i].query.samples);
    CHECK(a[i].key.samples == b[i].key.samples);
  }
  const auto plain = make_views(corpus, 8, 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    const std::vector<float> head(corpus[i].samples.begin(),
                                  corpus[i].samples.begin() + features::kSnippetSamples);
    CHECK(plain[i].query.samples == head);
    CHECK(plain[i].key.samples == head);
  }
  auto shortc = corpus;
  shortc[1].samples.resize(kMinViewSource - 1);
  CHECK_THROWS_WITH_AS(make_views(shortc, 1), doctest::Contains("track 1"), InputError);
}

TEST_CASE("config text") {
  const auto h = parse_config("tau = 0.1\n# comment\nbatch=8 # trailing\nqueue_k = 64\nconv_channels = 8, 16\n");
  CHECK(h.tau == 0.1);
  CHECK(h.batch == 8);
  CHECK(h.queue_k == 64);
  CHECK(h.encoder.conv_channels == std::vector<std::size_t>{8, 16});
  CHECK(h.m == 0.999);
  CHECK(parse_config(to_config_text(h)) == h);
  CHECK_THROWS_WITH_AS(parse_config("tau = 0.1\nbogus = 3\n"), doctest::Contains("line 2"), ConfigError);
  CHECK_THROWS_AS(parse_config("tau = abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("tau = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("batch = 16\nqueue_k = 20\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("m = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("just words\n"), ConfigError);
}

TEST_CASE("train_step: fill, drift bound and pure rotation at lr 0") {
  auto h = small_hyper();
  h.lr0 = 0.0;
  const auto corpus = small_corpus(4);
  auto state = TrainState::init(h);
  CHECK_THROWS_AS(train_step(state, {corpus[0], corpus[1]}), StateError);
  warm_up(state, corpus);
  CHECK(state.queue.size() == 4);
  const auto q0 = state.theta_q;
  // pull theta_k away from theta_q so the drift bound is not vacuous
  for (std::size_t i = 0; i < state.theta_k.total_size(); i += 3) state.theta_k.flat(i) *= 0.5f;
  for (int s = 0; s < 3; ++s) {
    const auto k_before = state.theta_k;
    const auto tags_before = state.queue.tag(state.queue.head());
    const auto met = train_step(state, {corpus[s % 4], corpus[(s + 1) % 4]});
    CHECK(met.queue_fill == 4);
    CHECK(met.lr == 0.0);
    CHECK(std::isfinite(met.loss));
    CHECK(state.queue.tag(state.queue.head() == 0 ? 3 : state.queue.head() - 1) > tags_before);
    double max_step = 0, max_gap = 0;
    for (std::size_t i = 0; i < k_before.total_size(); ++i) {
      max_step = std::max(max_step, std::abs(static_cast<double>(state.theta_k.flat(i)) - k_before.flat(i)));
      max_gap = std::max(max_gap, std::abs(static_cast<double>(k_before.flat(i)) - q0.flat(i)));
    }
    CHECK(max_step > 0.0);
    CHECK(max_step <= (1 - h.m) * max_gap * (1 + 1e-4));
  }
  CHECK(state.theta_q == q0);
  CHECK(state.step == 3);
  CHECK_THROWS_AS(train_step(state, {corpus[0]}), SizeError);
}

TEST_CASE("train_step: queue grows by the batch until full") {
  auto h = small_hyper();
  h.queue_k = 6;
  const auto corpus = small_corpus(4);
  auto state = TrainState::init(h);
  // seed the queue by hand with a single row
  Rng rng(9);
  state.queue.enqueue(unit_rows(1, 256, rng));
  std::vector<std::size_t> fills;
  for (int s = 0; s < 4; ++s) fills.push_back(train_step(state, {corpus[0], corpus[1]}).queue_fill);
  CHECK(fills == std::vector<std::size_t>{3, 5, 6, 6});
}

TEST_CASE("own-track rows are not negatives") {
  auto h = small_hyper();
  const auto corpus = small_corpus(2);
  auto state = TrainState::init(h);
  Rng rng(10);
  state.queue.enqueue(unit_rows(4, 256, rng), {0, 0, 1, 1});
  CHECK_NOTHROW(train_step(state, {corpus[0], corpus[1]}, {0, 1}));
  auto lone = TrainState::init(h);
  lone.queue.enqueue(unit_rows(2, 256, rng), {0, 0});
  CHECK_THROWS_AS(train_step(lone, {corpus[0], corpus[0]}, {0, 0}), StateError);
}

TEST_CASE("training is reproducible per seed") {
  auto h = small_hyper();
  h.steps = 3;
  const auto corpus = small_corpus(4);
  const auto a = train(corpus, h);
  const auto b = train(corpus, h);
  CHECK(a.state.theta_q == b.state.theta_q);
  CHECK(a.state.theta_k == b.state.theta_k);
  REQUIRE(a.metrics.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(format_metrics(a.metrics[i]) == format_metrics(b.metrics[i]));
  CHECK(a.metrics[0].lr == doctest::Approx(0.03));
  auto big = h;
  big.batch = 8;
  big.queue_k = 8;
  CHECK_THROWS_AS(train(corpus, big), ConfigError);
}

}  // TEST_SUITE
