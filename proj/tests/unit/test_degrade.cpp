#include <doctest.h>

#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <vector>

#include "cfp/degrade.hpp"
#include "cfp/error.hpp"
#include "cfp/fft.hpp"
#include "cfp/rng.hpp"

using namespace cfp;
using namespace cfp::degrade;

namespace {

AudioBuffer sine(double freq, double seconds, double amp = 0.5) {
  AudioBuffer a;
  a.samples.resize(static_cast<std::size_t>(seconds * 16000));
  for (std::size_t i = 0; i < a.size(); ++i) {
    a.samples[i] = static_cast<float>(amp * std::sin(2 * std::numbers::pi * freq * static_cast<double>(i) / 16000));
  }
  return a;
}

AudioBuffer white(std::size_t n, std::uint64_t seed, double amp = 0.3) {
  Rng rng(seed);
  AudioBuffer a;
  a.samples.resize(n);
  for (auto& v : a.samples) v = static_cast<float>(rng.uniform(-amp, amp));
  return a;
}

double peak_hz(const AudioBuffer& a) { return fft::dominant_frequency(a.samples, 16000); }

double rms_mid(const std::vector<float>& x, std::size_t skip) {
  return audio::rms(std::vector<float>(x.begin() + static_cast<std::ptrdiff_t>(skip),
                                       x.end() - static_cast<std::ptrdiff_t>(skip)));
}

// Power of x within [lo, hi] Hz from one long zero-padded transform.
double band_power(const std::vector<float>& x, double lo, double hi) {
  const std::size_t n = fft::next_pow2(x.size());
  std::vector<fft::cplx> buf(n);
  for (std::size_t i = 0; i < x.size(); ++i) buf[i] = x[i];
  fft::transform(buf, false);
  double p = 0;
  for (std::size_t k = 0; k <= n / 2; ++k) {
    const double f = static_cast<double>(k) * 16000.0 / static_cast<double>(n);
    if (f >= lo && f <= hi) p += std::norm(buf[k]);
  }
  return p;
}

// Inner part of each EQ band, away from the transitions.
std::array<double, 7> band_gains_db(const std::vector<float>& in, const std::vector<float>& out) {
  std::array<double, 7> g{};
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double c = 62.5 * std::exp2(static_cast<double>(i));
    const double lo = c * std::exp2(-0.3), hi = c * std::exp2(0.3);
    g[i] = 10 * std::log10(band_power(out, lo, hi) / band_power(in, lo, hi));
  }
  return g;
}

}  // namespace

TEST_SUITE("degrade") {

TEST_CASE("sample_spec is deterministic") {
  for (std::uint64_t s = 0; s < 50; ++s) CHECK(sample_spec(s, true) == sample_spec(s, true));
}

TEST_CASE("each degradation is selected 30% of the time and parameters stay in range") {
  const std::size_t n = 100000;
  std::map<std::string, std::size_t> count;
  std::size_t eq_without_flag = 0;
  for (std::size_t s = 0; s < n; ++s) {
    const auto spec = sample_spec(s, true);
    for (const auto& l : spec.labels()) ++count[l];
    if (spec.noise_intensity) CHECK_UNARY(*spec.noise_intensity >= 0.0 && *spec.noise_intensity <= 0.08);
    if (spec.pitch_semitones) CHECK_UNARY(std::abs(*spec.pitch_semitones) <= 5.0);
    if (spec.speed_factor) CHECK_UNARY(*spec.speed_factor >= 0.8 && *spec.speed_factor <= 1.2);
    if (spec.tempo_factor) CHECK_UNARY(*spec.tempo_factor >= 0.8 && *spec.tempo_factor <= 1.2);
    if (spec.highpass_hz) CHECK(*spec.highpass_hz == 2000.0);
    if (spec.lowpass_hz) CHECK(*spec.lowpass_hz == 300.0);
    if (sample_spec(s + n, false).eq) ++eq_without_flag;
  }
  for (const char* name : {"noise", "pitch", "speed", "tempo", "highpass", "lowpass", "echo", "eq"}) {
    const double rate = static_cast<double>(count[name]) / n;
    INFO(name << " " << rate);
    CHECK(rate >= 0.29);
    CHECK(rate <= 0.31);
  }
  CHECK(eq_without_flag == 0);
}

TEST_CASE("spec text round trip and validation") {
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto spec = sample_spec(s, true);
    CHECK(DegradationSpec::parse(spec.to_string()) == spec);
  }
  CHECK(DegradationSpec{}.to_string() == "none");
  CHECK(DegradationSpec::parse("none").empty());
  CHECK_THROWS_AS(DegradationSpec::parse("speed=1.5"), InputError);
  CHECK_THROWS_AS(DegradationSpec::parse("lowpass=400"), InputError);
  CHECK_THROWS_AS(DegradationSpec::parse("reverb=1"), InputError);
  CHECK_THROWS_AS(DegradationSpec::parse("noise=abc"), InputError);
  DegradationSpec d;
  d.speed_factor = 1.1;
  d.tempo_factor = 0.9;
  CHECK(d.duration_divisor() == doctest::Approx(0.99));
}

TEST_CASE("empty spec is the identity") {
  const auto a = white(16000, 1);
  CHECK(apply(a, DegradationSpec{}, 9) == a);
}

TEST_CASE("speed 1.2 on ten seconds") {
  DegradationSpec d;
  d.speed_factor = 1.2;
  const auto y = apply(sine(440, 10), d, 1);
  CHECK(std::abs(y.duration_s() - 10.0 / 1.2) <= 256.0 / 16000);
}

TEST_CASE("noise on silence has the RMS of uniform noise") {
  AudioBuffer silence;
  silence.samples.assign(160000, 0.0f);
  DegradationSpec d;
  d.noise_intensity = 0.08;
  const auto y = apply(silence, d, 3);
  CHECK(audio::rms(y.samples) == doctest::Approx(0.08 / std::sqrt(3.0)).epsilon(0.05));
  for (float v : y.samples) CHECK_UNARY(std::abs(v) <= 0.08f);
}

TEST_CASE("apply is deterministic, bounded and obeys the duration law") {
  const auto a = white(48000, 5, 0.9);
  for (std::uint64_t s = 0; s < 40; ++s) {
    const auto spec = sample_spec(s, true);
    const auto y = apply(a, spec, s);
    CHECK(y == apply(a, spec, s));
    for (float v : y.samples) {
      CHECK_UNARY(std::isfinite(v));
      CHECK_UNARY(std::abs(v) <= 1.0f);
    }
    const double expect = static_cast<double>(a.size()) / spec.duration_divisor();
    CHECK(std::abs(static_cast<double>(y.size()) - expect) <= 0.01 * expect);
  }
}

TEST_CASE("apply rejects non-16k input and out-of-range specs") {
  AudioBuffer a = sine(440, 0.5);
  a.sample_rate = 44100;
  DegradationSpec d;
  d.echo = true;
  CHECK_THROWS_AS(apply(a, d, 0), InputError);
  DegradationSpec bad;
  bad.pitch_semitones = 7;
  CHECK_THROWS_AS(apply(sine(440, 0.5), bad, 0), InputError);
}

TEST_CASE("pitch shift moves a sine by the semitone ratio") {
  const auto a = sine(440, 2);
  CHECK(std::abs(peak_hz(pitch_shift(a, 0)) - 440) <= 440 * 0.02);
  for (double s : {5.0, -5.0, 2.5}) {
    const auto y = pitch_shift(a, s);
    const double expect = 440 * std::exp2(s / 12);
    CHECK(std::abs(peak_hz(y) - expect) <= 0.02 * expect);
    CHECK(std::abs(static_cast<double>(y.size()) - a.size()) <= 0.01 * a.size());
  }
  CHECK(440 * std::exp2(5.0 / 12) == doctest::Approx(587.33).epsilon(1e-4));
}

TEST_CASE("time stretch changes duration but not pitch") {
  const auto a = sine(440, 10);
  CHECK(std::abs(static_cast<double>(time_stretch(a, 1.0).size()) - a.size()) <= 256);
  const auto slow = time_stretch(a, 0.8);
  CHECK(std::abs(slow.duration_s() - 12.5) <= 0.125);
  const auto fast = time_stretch(sine(440, 2), 1.2);
  CHECK(std::abs(fast.duration_s() - 2.0 / 1.2) <= 0.01 * 2.0 / 1.2);
  CHECK(std::abs(peak_hz(fast) - 440) <= 440 * 0.02);
  CHECK(std::abs(peak_hz(time_stretch(sine(1000, 2), 0.85)) - 1000) <= 1000 * 0.02);
}

TEST_CASE("speed change scales pitch and duration together") {
  const auto a = sine(440, 2);
  const auto same = speed_change(a, 1.0);
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += static_cast<double>(a.samples[i]) * same.samples[i];
    da += static_cast<double>(a.samples[i]) * a.samples[i];
    db += static_cast<double>(same.samples[i]) * same.samples[i];
  }
  CHECK(num / std::sqrt(da * db) > 0.999);

  const auto up = speed_change(a, 1.2);
  CHECK(std::abs(peak_hz(up) - 528) <= 528 * 0.02);
  CHECK(std::abs(up.duration_s() - 2.0 / 1.2) <= 1.0 / 16000);
  CHECK(std::abs(speed_change(sine(440, 10), 0.8).duration_s() - 12.5) <= 1.0 / 16000);
}

TEST_CASE("pitch shift and time stretch commute on sines") {
  const auto a = sine(600, 2);
  const auto ab = time_stretch(pitch_shift(a, 3), 0.9);
  const auto ba = pitch_shift(time_stretch(a, 0.9), 3);
  CHECK(std::abs(peak_hz(ab) - peak_hz(ba)) <= 0.03 * peak_hz(ab));
  CHECK(std::abs(static_cast<double>(ab.size()) - ba.size()) <= 0.03 * ab.size());
}

TEST_CASE("Butterworth sections follow the analytic response") {
  // independent oracle: bilinear-transformed 2nd-order Butterworth
  auto oracle = [](bool high, double fc, double f) {
    const double r = std::tan(std::numbers::pi * f / 16000) / std::tan(std::numbers::pi * fc / 16000);
    const double x = high ? 1.0 / r : r;
    return 1.0 / std::sqrt(1.0 + x * x * x * x);
  };
  const auto low = sine(100, 2);
  const auto hp = biquad_filter(low, FilterMode::Highpass, 2000);
  CHECK(rms_mid(hp.samples, 1600) < 0.02 * rms_mid(low.samples, 1600));
  const auto lp = biquad_filter(low, FilterMode::Lowpass, 300);
  CHECK(rms_mid(lp.samples, 1600) == doctest::Approx(rms_mid(low.samples, 1600)).epsilon(0.10));

  for (double f : {100.0, 500.0, 1000.0, 2000.0, 3000.0, 6000.0}) {
    const auto x = sine(f, 1);
    for (bool high : {false, true}) {
      const double fc = high ? 2000 : 300;
      const auto y = biquad_filter(x, high ? FilterMode::Highpass : FilterMode::Lowpass, fc);
      const double gain = rms_mid(y.samples, 3200) / rms_mid(x.samples, 3200);
      const double want = oracle(high, fc, f);
      CHECK(gain == doctest::Approx(want).epsilon(0.01).scale(1e-3));
      CHECK(butterworth_magnitude(high ? FilterMode::Highpass : FilterMode::Lowpass, fc, f, 16000) ==
            doctest::Approx(want).epsilon(1e-12));
    }
  }

  AudioBuffer dc;
  dc.samples.assign(16000, 0.5f);
  const auto y = biquad_filter(dc, FilterMode::Highpass, 2000);
  CHECK(std::abs(y.samples.back()) < 1e-6);
}

TEST_CASE("echo taps") {
  AudioBuffer imp;
  imp.samples.assign(2000, 0.0f);
  imp.samples[0] = 1.0f;
  CHECK(add_echo(imp, {}) == imp);

  const auto one = add_echo(imp, {{60.0, 0.4}});
  for (std::size_t i = 0; i < one.size(); ++i) {
    const float want = i == 0 ? 1.0f : i == 960 ? 0.4f : 0.0f;
    CHECK(one.samples[i] == doctest::Approx(want));
  }

  // (1 + 0.88 z^-13)(1 + 0.4 z^-960)
  const auto both = add_echo(imp, {kEchoTaps.begin(), kEchoTaps.end()});
  std::map<std::size_t, double> want{{0, 1.0}, {13, 0.88}, {960, 0.4}, {973, 0.352}};
  for (std::size_t i = 0; i < both.size(); ++i) {
    const double w = want.count(i) ? want[i] : 0.0;
    CHECK(both.samples[i] == doctest::Approx(w).epsilon(1e-6));
  }
  CHECK_THROWS_AS(add_echo(imp, {{10, 1.5}}), InputError);
}

TEST_CASE("echo output is clamped") {
  AudioBuffer a;
  a.samples.assign(200, 0.9f);
  for (float v : add_echo(a, {{0.8, 0.88}}).samples) CHECK(v <= 1.0f);
}

TEST_CASE("EQ alternates band gains") {
  AudioBuffer silence;
  silence.samples.assign(20000, 0.0f);
  CHECK(apply_eq(silence) == silence);

  const auto x = white(160000, 77, 0.2);
  const auto y = apply_eq(x);
  REQUIRE(y.size() == x.size());
  const auto g = band_gains_db(x.samples, y.samples);
  for (std::size_t i = 0; i + 1 < g.size(); ++i) {
    INFO("band " << i << ": " << g[i] << " dB vs " << g[i + 1] << " dB");
    CHECK(std::abs(std::abs(g[i] - g[i + 1]) - 12.0) <= 3.0);
  }
  const double total = 10 * std::log10(band_power(y.samples, 0, 8000) / band_power(x.samples, 0, 8000));
  CHECK(std::abs(total) <= 8.0);

  const auto g2 = band_gains_db(x.samples, apply_eq(y).samples);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(g2[i] - 2 * g[i]) <= 3.0);
}

TEST_CASE("EQ curve constants") {
  const auto& b = eq_bands();
  CHECK(b.front().center_hz == 31.25);
  CHECK(b[9].center_hz == 16000.0);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(std::abs(b[i].gain_db) == 6.0);
  CHECK(eq_gain_db(62.5) == doctest::Approx(-6.0));
  CHECK(eq_gain_db(500.0) == doctest::Approx(6.0));
  CHECK(eq_gain_db(1000.0) == doctest::Approx(-6.0));
}

TEST_CASE("phase vocoder hits the requested length") {
  const auto a = white(10000, 8);
  for (std::size_t n : {1u, 8000u, 10000u, 12345u}) CHECK(phase_vocoder(a.samples, n).size() == n);
  CHECK(phase_vocoder({}, 10) == std::vector<float>(10, 0.0f));
}

}  // TEST_SUITE
