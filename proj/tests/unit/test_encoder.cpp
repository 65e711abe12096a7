#include <doctest.h>

#include <cmath>
#include <vector>

#include "cfp/error.hpp"
#include "cfp/nn/encoder.hpp"
#include "cfp/rng.hpp"

using namespace cfp;
using namespace cfp::nn;

namespace {

EncoderConfig small_config() {
  EncoderConfig c;
  c.conv_channels = {4, 8};
  c.in_height = 16;
  c.in_width = 20;
  return c;
}

template <typename T>
std::vector<T> random_input(const EncoderConfig& c, std::size_t batch, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<T> x(batch * c.input_size());
  for (auto& v : x) v = static_cast<T>(rng.uniform(-30, 5));
  return x;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("layout of the default encoder") {
  const auto layout = param_layout(EncoderConfig{});
  REQUIRE(layout.size() == 10);
  CHECK(layout[0].name == "conv0.weight");
  CHECK(layout[0].shape == std::vector<std::size_t>{16, 1, 3, 3});
  CHECK(layout[4].shape == std::vector<std::size_t>{64, 32, 3, 3});
  CHECK(layout[6].name == "fc1.weight");
  CHECK(layout[6].shape == std::vector<std::size_t>{256, 64});
  CHECK(layout[8].shape == std::vector<std::size_t>{256, 256});
  const auto p = ParamSet<float>::zeros(EncoderConfig{});
  CHECK(p.total_size() == 16 * 9 + 16 + 32 * 16 * 9 + 32 + 64 * 32 * 9 + 64 + 256 * 64 + 256 + 256 * 256 + 256);
}

TEST_CASE("kaiming bounds and determinism") {
  const auto a = ParamSet<float>::kaiming_uniform(EncoderConfig{}, 5);
  const auto b = ParamSet<float>::kaiming_uniform(EncoderConfig{}, 5);
  const auto c = ParamSet<float>::kaiming_uniform(EncoderConfig{}, 6);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  const auto layout = param_layout(EncoderConfig{});
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& t = a.tensor(i);
    if (layout[i].fan_in == 0) {
      for (float v : t.data) CHECK(v == 0.0f);
      continue;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(layout[i].fan_in));
    double mx = 0, s2 = 0;
    for (float v : t.data) {
      mx = std::max(mx, std::abs(static_cast<double>(v)));
      s2 += static_cast<double>(v) * v;
    }
    CHECK(mx <= bound);
    // uniform(-b, b) has variance b^2 / 3
    CHECK(s2 / static_cast<double>(t.size()) == doctest::Approx(bound * bound / 3).epsilon(0.15));
  }
}

TEST_CASE("config validation") {
  EncoderConfig c;
  c.embed_dim = 128;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = EncoderConfig{};
  c.conv_channels.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = EncoderConfig{};
  c.conv_channels = {8, 0};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = EncoderConfig{};
  c.in_height = 4;
  c.conv_channels = {2, 2, 2};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_NOTHROW(EncoderConfig{}.validate());

  auto p = ParamSet<float>::zeros(EncoderConfig{});
  CHECK_THROWS_AS(p.at("conv9.weight"), ConfigError);
}

TEST_CASE("outputs are unit norm and batch independent") {
  const auto cfg = EncoderConfig{};
  const Encoder<float> enc(cfg);
  const auto p = ParamSet<float>::kaiming_uniform(cfg, 3);
  auto x = random_input<float>(cfg, 3, 4);
  // repeat the first input as the third
  std::copy(x.begin(), x.begin() + static_cast<long>(cfg.input_size()),
            x.begin() + 2 * static_cast<long>(cfg.input_size()));
  const auto out = enc.forward(p, x, 3);
  REQUIRE(out.rows == 3);
  REQUIRE(out.cols == 256);
  for (std::size_t r = 0; r < 3; ++r) {
    double n2 = 0;
    for (std::size_t j = 0; j < 256; ++j) n2 += static_cast<double>(out(r, j)) * out(r, j);
    CHECK(std::sqrt(n2) == doctest::Approx(1.0).epsilon(1e-5));
  }
  for (std::size_t j = 0; j < 256; ++j) CHECK(out(0, j) == out(2, j));

  const std::vector<float> one(x.begin() + static_cast<long>(cfg.input_size()),
                               x.begin() + 2 * static_cast<long>(cfg.input_size()));
  const auto single = enc.forward(p, one, 1);
  for (std::size_t j = 0; j < 256; ++j) CHECK(single(0, j) == doctest::Approx(out(1, j)).epsilon(1e-5));

  // threads do not change the result
  const auto threaded = enc.forward(p, x, 3, nullptr, 3);
  CHECK(threaded == out);
}

TEST_CASE("forward rejects bad input") {
  const auto cfg = small_config();
  const Encoder<float> enc(cfg);
  const auto p = ParamSet<float>::kaiming_uniform(cfg, 1);
  CHECK_THROWS_AS(enc.forward(p, std::vector<float>(cfg.input_size() + 1), 1), ConfigError);
  CHECK_THROWS_AS(enc.forward(p, std::vector<float>{}, 0), ConfigError);
  auto x = random_input<float>(cfg, 1, 2);
  x[7] = std::nanf("");
  CHECK_THROWS_AS(enc.forward(p, x, 1), NumericError);
  const auto wrong = ParamSet<float>::zeros(EncoderConfig{});
  CHECK_THROWS_AS(enc.forward(wrong, random_input<float>(cfg, 1, 2), 1), ConfigError);
}

TEST_CASE("backward needs a recorded pass") {
  const auto cfg = small_config();
  const Encoder<float> enc(cfg);
  const auto p = ParamSet<float>::kaiming_uniform(cfg, 1);
  Tape<float> tape;
  CHECK_THROWS_AS(enc.backward(p, tape, Matrix<float>(1, 256)), StateError);
}

TEST_CASE("zero upstream gives zero gradients") {
  const auto cfg = small_config();
  const Encoder<float> enc(cfg);
  const auto p = ParamSet<float>::kaiming_uniform(cfg, 1);
  Tape<float> tape;
  enc.forward(p, random_input<float>(cfg, 2, 3), 2, &tape);
  const auto g = enc.backward(p, tape, Matrix<float>(2, 256));
  for (std::size_t i = 0; i < g.total_size(); ++i) CHECK(g.flat(i) == 0.0f);
}

TEST_CASE("parameter gradients match finite differences") {
  const auto cfg = small_config();
  const Encoder<double> enc(cfg);
  auto p = ParamSet<float>::kaiming_uniform(cfg, 11).cast<double>();
  const std::size_t batch = 2;
  const auto x = random_input<double>(cfg, batch, 12);
  Matrix<double> up(batch, 256);
  Rng rng(13);
  for (auto& v : up.data) v = rng.uniform(-1, 1);

  Tape<double> tape;
  enc.forward(p, x, batch, &tape);
  const auto grad = enc.backward(p, tape, up);

  auto objective = [&] {
    const auto out = enc.forward(p, x, batch);
    double s = 0;
    for (std::size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * up.data[i];
    return s;
  };
  // 20 coordinates spread over every tensor
  Rng pick(14);
  std::size_t start = 0;
  for (std::size_t t = 0; t < p.count(); ++t) {
    const std::size_t n = p.tensor(t).size();
    for (int k = 0; k < 2; ++k) {
      const std::size_t idx = start + pick.below(n);
      const double keep = p.flat(idx);
      const double h = 1e-6;
      p.flat(idx) = keep + h;
      const double a = objective();
      p.flat(idx) = keep - h;
      const double b = objective();
      p.flat(idx) = keep;
      const double fd = (a - b) / (2 * h);
      INFO(p.name(t), " index ", idx - start);
      CHECK(std::abs(grad.flat(idx) - fd) <= 1e-6 * std::max(std::abs(fd), 1e-3));
    }
    start += n;
  }
}

TEST_CASE("sum-of-embeddings gradient in float32") {
  // The difference quotient comes from a float64 twin at a small step: steps
  // near 1e-3 of the weight scale cross max-pool and ReLU switch points in the
  // first conv layer, and the float32 forward is too coarse for small steps.
  const auto cfg = small_config();
  const Encoder<float> enc(cfg);
  auto p = ParamSet<float>::kaiming_uniform(cfg, 41);
  const auto x = random_input<float>(cfg, 2, 42);
  Matrix<float> ones(2, 256, 1.0f);
  Tape<float> tape;
  enc.forward(p, x, 2, &tape);
  const auto grad = enc.backward(p, tape, ones);
  const Encoder<double> enc_d(cfg);
  auto pd = p.cast<double>();
  const std::vector<double> xd(x.begin(), x.end());
  auto objective = [&] {
    const auto out = enc_d.forward(pd, xd, 2);
    double s = 0;
    for (double v : out.data) s += v;
    return s;
  };
  std::vector<std::size_t> offsets{0};
  for (std::size_t t = 0; t < p.count(); ++t) offsets.push_back(offsets.back() + p.tensor(t).size());
  Rng pick(43);
  for (std::size_t k = 0; k < 20; ++k) {
    const std::size_t t = k % p.count();
    const std::size_t idx = offsets[t] + pick.below(p.tensor(t).size());
    const double keep = pd.flat(idx), h = 1e-6;
    pd.flat(idx) = keep + h;
    const double a = objective();
    pd.flat(idx) = keep - h;
    const double b = objective();
    pd.flat(idx) = keep;
    const double fd = (a - b) / (2 * h);
    INFO(p.name(t));
    CHECK(std::abs(grad.flat(idx) - fd) <= 1e-3 * std::max(std::abs(fd), 1e-2));
  }
}

TEST_CASE("float and double encoders agree") {
  const auto cfg = small_config();
  const auto pf = ParamSet<float>::kaiming_uniform(cfg, 21);
  const auto xf = random_input<float>(cfg, 2, 22);
  const std::vector<double> xd(xf.begin(), xf.end());
  const auto of = Encoder<float>(cfg).forward(pf, xf, 2);
  const auto od = Encoder<double>(cfg).forward(pf.cast<double>(), xd, 2);
  for (std::size_t i = 0; i < of.data.size(); ++i) CHECK(of.data[i] == doctest::Approx(od.data[i]).scale(1.0).epsilon(1e-4));
}

TEST_CASE("pack_batch concatenates spectrograms") {
  features::MelSpectrogram a, b;
  a.n_mels = b.n_mels = 2;
  a.n_frames = b.n_frames = 3;
  a.values = {1, 2, 3, 4, 5, 6};
  b.values = {7, 8, 9, 10, 11, 12};
  const auto x = pack_batch<float>({a, b});
  CHECK(x == std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  b.values.pop_back();
  CHECK_THROWS_AS(pack_batch<float>({a, b}), SizeError);
}

}  // TEST_SUITE
