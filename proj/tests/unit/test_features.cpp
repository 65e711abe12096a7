#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include "cfp/error.hpp"
#include "cfp/features.hpp"
#include "cfp/rng.hpp"

using namespace cfp;
using namespace cfp::features;

namespace {

audio::AudioBuffer tone(double freq, std::size_t n = kSnippetSamples, double amp = 0.5) {
  audio::AudioBuffer a;
  a.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    a.samples[i] = static_cast<float>(amp * std::sin(2 * std::numbers::pi * freq * static_cast<double>(i) / 16000));
  }
  return a;
}

// Slaney constants written out again for the oracle.
double slaney_mel(double hz) {
  return hz < 1000 ? hz * 3.0 / 200.0 : 15.0 + std::log(hz / 1000) * 27.0 / std::log(6.4);
}
double slaney_hz(double mel) {
  return mel < 15 ? mel * 200.0 / 3.0 : 1000 * std::exp((mel - 15) * std::log(6.4) / 27.0);
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("frame count and shape") {
  CHECK(stft_frame_count(40000, 1024, 200) == 200);
  CHECK(stft_frame_count(1024, 1024, 200) == 5);
  CHECK(stft_frame_count(1023, 1024, 200) == 0);
  const auto s = stft(std::vector<float>(40000, 0.0f));
  CHECK(s.bins == 513);
  CHECK(s.frames == 200);
  for (const auto& v : s.values) CHECK(std::abs(v) == 0.0);
  CHECK_THROWS_AS(stft(std::vector<float>(1000, 0.0f)), SizeError);
}

TEST_CASE("1 kHz lands in bin 64") {
  const auto s = stft(tone(1000).samples);
  for (std::size_t f = 0; f < s.frames; f += 17) {
    std::size_t best = 0;
    for (std::size_t b = 0; b < s.bins; ++b) {
      if (std::abs(s.at(b, f)) > std::abs(s.at(best, f))) best = b;
    }
    CHECK(best == 64);
  }
}

TEST_CASE("Parseval per frame against the windowed time signal") {
  Rng rng(31);
  std::vector<float> x(5000);
  for (auto& v : x) v = static_cast<float>(rng.uniform(-1, 1));
  const auto s = stft(x, 1024, 300);
  const auto& w = hann_window(1024);
  for (std::size_t f = 0; f < s.frames; ++f) {
    double time = 0;
    for (std::size_t i = 0; i < 1024; ++i) {
      const std::size_t j = f * 300 + i;
      const double v = j < x.size() ? w[i] * x[j] : 0.0;
      time += v * v;
    }
    double freq = std::norm(s.at(0, f)) + std::norm(s.at(512, f));
    for (std::size_t b = 1; b < 512; ++b) freq += 2 * std::norm(s.at(b, f));
    CHECK(freq / 1024 == doctest::Approx(time).epsilon(1e-6));
  }
}

TEST_CASE("Hann window is periodic") {
  const auto& w = hann_window(8);
  CHECK(w[0] == 0.0);
  CHECK(w[4] == doctest::Approx(1.0));
  CHECK(w[2] == doctest::Approx(0.5));
}

TEST_CASE("mel scale matches the Slaney formula") {
  CHECK(hz_to_mel(1000) == doctest::Approx(15.0));
  CHECK(hz_to_mel(500) == doctest::Approx(7.5));
  for (double hz : {0.0, 100.0, 999.0, 1000.0, 2500.0, 8000.0}) {
    CHECK(hz_to_mel(hz) == doctest::Approx(slaney_mel(hz)).epsilon(1e-12));
    CHECK(mel_to_hz(hz_to_mel(hz)) == doctest::Approx(hz).epsilon(1e-12));
  }
}

TEST_CASE("filterbank covers the band with nonnegative weights") {
  const auto& fb = MelFilterbank::instance();
  CHECK(fb.n_mels() == 128);
  for (std::size_t b = 1; b < 512; ++b) {
    double total = 0;
    for (std::size_t m = 0; m < fb.n_mels(); ++m) {
      const double w = fb.weight(m, b);
      CHECK_UNARY(w >= 0.0);
      CHECK_UNARY(w <= 1.0);
      total += w;
    }
    CHECK_UNARY(total > 0.0);
  }
  // centers equally spaced in mel up to 8 kHz
  const double top = slaney_mel(8000);
  for (std::size_t m = 0; m < fb.n_mels(); ++m) {
    CHECK(fb.center_hz(m) == doctest::Approx(slaney_hz(top * static_cast<double>(m + 1) / 129)).epsilon(1e-9));
  }
}

TEST_CASE("silence sits on the log floor") {
  audio::AudioBuffer a;
  a.samples.assign(kSnippetSamples, 0.0f);
  const auto m = mel_spectrogram(a);
  CHECK(m.n_mels == 128);
  CHECK(m.n_frames == 200);
  for (double v : m.values) CHECK(v == doctest::Approx(std::log(1e-10)));
  CHECK(std::log(1e-10) == doctest::Approx(-23.026).epsilon(1e-4));
}

TEST_CASE("every valid snippet gives 128 x 200") {
  Rng rng(32);
  audio::AudioBuffer a;
  a.samples.resize(kSnippetSamples);
  for (auto& v : a.samples) v = static_cast<float>(rng.uniform(-0.5, 0.5));
  const auto m = mel_spectrogram(a);
  CHECK(m.values.size() == 128 * 200);
  for (double v : m.values) CHECK_UNARY(std::isfinite(v));

  audio::AudioBuffer wrong = a;
  wrong.samples.pop_back();
  CHECK_THROWS_AS(mel_spectrogram(wrong), SizeError);
  audio::AudioBuffer rate = a;
  rate.sample_rate = 22050;
  CHECK_THROWS_AS(mel_spectrogram(rate), SizeError);
}

TEST_CASE("a 440 Hz tone peaks in a band containing 440 Hz") {
  const auto m = mel_spectrogram(tone(440));
  const double top = slaney_mel(8000);
  for (std::size_t f = 0; f < m.n_frames; ++f) {
    std::size_t best = 0;
    for (std::size_t b = 0; b < m.n_mels; ++b) {
      if (m.at(b, f) > m.at(best, f)) best = b;
    }
    const double lo = slaney_hz(top * static_cast<double>(best) / 129);
    const double hi = slaney_hz(top * static_cast<double>(best + 2) / 129);
    CHECK(lo < 440.0);
    CHECK(hi > 440.0);
  }
}

TEST_CASE("log-mel is scale covariant") {
  const auto a = tone(1500, kSnippetSamples, 0.2);
  auto b = a;
  const double c = 3.0;
  for (auto& v : b.samples) v = static_cast<float>(v * c);
  // float storage of c*x is not exactly c times the float x
  auto a_exact = b;
  for (std::size_t i = 0; i < a.size(); ++i) a_exact.samples[i] = static_cast<float>(b.samples[i] / c);
  const auto ma = mel_spectrogram(a_exact), mb = mel_spectrogram(b);
  const double floor = std::log(kLogFloor);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < ma.values.size(); ++i) {
    if (ma.values[i] > floor + 20) {
      CHECK(mb.values[i] - ma.values[i] == doctest::Approx(2 * std::log(c)).epsilon(1e-6));
      ++checked;
    }
  }
  CHECK(checked > 500);
}

TEST_CASE("deterministic and dumpable") {
  const auto a = tone(700);
  const auto m1 = mel_spectrogram(a), m2 = mel_spectrogram(a);
  CHECK(m1.values == m2.values);

  const auto path = std::filesystem::temp_directory_path() / "cfp_test_mel.f32";
  write_raw_f32(path, m1);
  CHECK(std::filesystem::file_size(path) == 128 * 200 * 4);
  std::ifstream in(path, std::ios::binary);
  std::vector<float> back(128 * 200);
  in.read(reinterpret_cast<char*>(back.data()), static_cast<std::streamsize>(back.size() * 4));
  std::filesystem::remove(path);
  for (std::size_t i = 0; i < back.size(); i += 97) CHECK(back[i] == static_cast<float>(m1.values[i]));
}

}  // TEST_SUITE
