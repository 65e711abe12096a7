#include "cfp/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "cfp/biquad.hpp"
#include "cfp/error.hpp"
#include "cfp/fft.hpp"
#include "cfp/rng.hpp"

namespace cfp::degrade {
namespace {

constexpr double kRate = audio::kTargetRate;

void require_16k(const AudioBuffer& a, const char* op) {
  if (a.sample_rate != kRate) {
    throw InputError(std::string(op) + ": expected 16 kHz input, got " +
                     std::to_string(a.sample_rate) + " Hz");
  }
}

void clamp_unit(std::vector<float>& x) {
  for (auto& v : x) v = std::clamp(v, -1.0f, 1.0f);
}

AudioBuffer with_samples(std::vector<float> s) {
  AudioBuffer out;
  out.sample_rate = kRate;
  out.samples = std::move(s);
  return out;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool in_range(double v, double lo, double hi) { return v >= lo && v <= hi; }

}  // namespace

bool DegradationSpec::empty() const {
  return !noise_intensity && !pitch_semitones && !speed_factor && !tempo_factor && !highpass_hz &&
         !lowpass_hz && !echo && !eq;
}

void DegradationSpec::validate() const {
  if (noise_intensity && !in_range(*noise_intensity, 0.0, kNoiseMax)) {
    throw InputError("noise intensity out of range [0, 0.08]");
  }
  if (pitch_semitones && !in_range(*pitch_semitones, -kPitchMaxSemitones, kPitchMaxSemitones)) {
    throw InputError("pitch shift out of range [-5, 5] semitones");
  }
  if (speed_factor && !in_range(*speed_factor, kFactorMin, kFactorMax)) {
    throw InputError("speed factor out of range [0.8, 1.2]");
  }
  if (tempo_factor && !in_range(*tempo_factor, kFactorMin, kFactorMax)) {
    throw InputError("tempo factor out of range [0.8, 1.2]");
  }
  if (highpass_hz && *highpass_hz != kHighpassHz) throw InputError("high-pass cutoff must be 2000 Hz");
  if (lowpass_hz && *lowpass_hz != kLowpassHz) throw InputError("low-pass cutoff must be 300 Hz");
}

std::vector<std::string> DegradationSpec::labels() const {
  std::vector<std::string> out;
  if (noise_intensity) out.emplace_back("noise");
  if (pitch_semitones) out.emplace_back("pitch");
  if (speed_factor) out.emplace_back("speed");
  if (tempo_factor) out.emplace_back("tempo");
  if (highpass_hz) out.emplace_back("highpass");
  if (lowpass_hz) out.emplace_back("lowpass");
  if (echo) out.emplace_back("echo");
  if (eq) out.emplace_back("eq");
  return out;
}

std::string DegradationSpec::to_string() const {
  std::string s;
  auto add = [&s](const char* key, const std::string& v) {
    if (!s.empty()) s += ' ';
    s += key;
    s += '=';
    s += v;
  };
  if (noise_intensity) add("noise", fmt_double(*noise_intensity));
  if (pitch_semitones) add("pitch", fmt_double(*pitch_semitones));
  if (speed_factor) add("speed", fmt_double(*speed_factor));
  if (tempo_factor) add("tempo", fmt_double(*tempo_factor));
  if (highpass_hz) add("highpass", fmt_double(*highpass_hz));
  if (lowpass_hz) add("lowpass", fmt_double(*lowpass_hz));
  if (echo) add("echo", "1");
  if (eq) add("eq", "1");
  return s.empty() ? "none" : s;
}

DegradationSpec DegradationSpec::parse(std::string_view line) {
  DegradationSpec spec;
  std::istringstream in{std::string(line)};
  std::string tok;
  while (in >> tok) {
    if (tok == "none") continue;
    const auto eqpos = tok.find('=');
    if (eqpos == std::string::npos) throw InputError("bad degradation token '" + tok + "'");
    const std::string key = tok.substr(0, eqpos);
    const std::string val = tok.substr(eqpos + 1);
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(val, &used);
      if (used != val.size()) throw std::invalid_argument(val);
    } catch (const std::exception&) {
      throw InputError("bad value for degradation '" + key + "': " + val);
    }
    if (key == "noise") spec.noise_intensity = v;
    else if (key == "pitch") spec.pitch_semitones = v;
    else if (key == "speed") spec.speed_factor = v;
    else if (key == "tempo") spec.tempo_factor = v;
    else if (key == "highpass") spec.highpass_hz = v;
    else if (key == "lowpass") spec.lowpass_hz = v;
    else if (key == "echo") spec.echo = v != 0.0;
    else if (key == "eq") spec.eq = v != 0.0;
    else throw InputError("unknown degradation '" + key + "'");
  }
  spec.validate();
  return spec;
}

double DegradationSpec::duration_divisor() const {
  return speed_factor.value_or(1.0) * tempo_factor.value_or(1.0);
}

DegradationSpec sample_spec(std::uint64_t rng_seed, bool include_test_only, double probability) {
  Rng rng(derive_seed(rng_seed, 0xde9));
  DegradationSpec spec;
  if (rng.bernoulli(probability)) spec.noise_intensity = rng.uniform(0.0, kNoiseMax);
  if (rng.bernoulli(probability)) {
    spec.pitch_semitones = rng.uniform(-kPitchMaxSemitones, kPitchMaxSemitones);
  }
  if (rng.bernoulli(probability)) spec.speed_factor = rng.uniform(kFactorMin, kFactorMax);
  if (rng.bernoulli(probability)) spec.tempo_factor = rng.uniform(kFactorMin, kFactorMax);
  if (rng.bernoulli(probability)) spec.highpass_hz = kHighpassHz;
  if (rng.bernoulli(probability)) spec.lowpass_hz = kLowpassHz;
  if (rng.bernoulli(probability)) spec.echo = true;
  if (include_test_only && rng.bernoulli(probability)) spec.eq = true;
  return spec;
}

AudioBuffer apply(const AudioBuffer& a, const DegradationSpec& spec, std::uint64_t rng_seed) {
  require_16k(a, "apply");
  spec.validate();
  if (spec.empty()) return a;
  AudioBuffer x = a;
  if (spec.noise_intensity) x = add_noise(x, *spec.noise_intensity, derive_seed(rng_seed, 1));
  if (spec.pitch_semitones) x = pitch_shift(x, *spec.pitch_semitones);
  if (spec.speed_factor) x = speed_change(x, *spec.speed_factor);
  if (spec.tempo_factor) x = time_stretch(x, *spec.tempo_factor);
  if (spec.highpass_hz) x = biquad_filter(x, FilterMode::Highpass, *spec.highpass_hz);
  if (spec.lowpass_hz) x = biquad_filter(x, FilterMode::Lowpass, *spec.lowpass_hz);
  if (spec.echo) x = add_echo(x, {kEchoTaps.begin(), kEchoTaps.end()});
  if (spec.eq) x = apply_eq(x);
  clamp_unit(x.samples);
  return x;
}

AudioBuffer add_noise(const AudioBuffer& a, double intensity, std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  AudioBuffer out = a;
  for (auto& v : out.samples) {
    v = static_cast<float>(v + rng.uniform(-intensity, intensity));
  }
  clamp_unit(out.samples);
  return out;
}

AudioBuffer pitch_shift(const AudioBuffer& a, double semitones) {
  require_16k(a, "pitch_shift");
  if (!in_range(semitones, -kPitchMaxSemitones, kPitchMaxSemitones)) {
    throw InputError("pitch_shift: semitones must lie in [-5, 5]");
  }
  if (semitones == 0.0 || a.samples.empty()) return a;
  const double ratio = std::exp2(semitones / 12.0);
  const auto stretched_len =
      static_cast<std::size_t>(std::llround(static_cast<double>(a.size()) * ratio));
  const auto stretched = phase_vocoder(a.samples, stretched_len);
  auto out = audio::resample_to_length(stretched, kRate * ratio, kRate, a.size());
  clamp_unit(out);
  return with_samples(std::move(out));
}

AudioBuffer time_stretch(const AudioBuffer& a, double tempo_factor) {
  require_16k(a, "time_stretch");
  if (!in_range(tempo_factor, kFactorMin, kFactorMax)) {
    throw InputError("time_stretch: tempo factor must lie in [0.8, 1.2]");
  }
  if (tempo_factor == 1.0 || a.samples.empty()) return a;
  const auto out_len =
      static_cast<std::size_t>(std::llround(static_cast<double>(a.size()) / tempo_factor));
  auto out = phase_vocoder(a.samples, out_len);
  clamp_unit(out);
  return with_samples(std::move(out));
}

AudioBuffer speed_change(const AudioBuffer& a, double speed_factor) {
  require_16k(a, "speed_change");
  if (!in_range(speed_factor, kFactorMin, kFactorMax)) {
    throw InputError("speed_change: factor must lie in [0.8, 1.2]");
  }
  if (speed_factor == 1.0) return a;
  const auto out_len =
      static_cast<std::size_t>(std::llround(static_cast<double>(a.size()) / speed_factor));
  auto out = audio::resample_to_length(a.samples, kRate * speed_factor, kRate, out_len);
  clamp_unit(out);
  return with_samples(std::move(out));
}

AudioBuffer biquad_filter(const AudioBuffer& a, FilterMode mode, double cutoff_hz) {
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < a.sample_rate / 2.0)) {
    throw InputError("biquad_filter: cutoff must lie strictly between 0 and Nyquist");
  }
  const auto bq = mode == FilterMode::Highpass ? dsp::Biquad::highpass(cutoff_hz, a.sample_rate)
                                               : dsp::Biquad::lowpass(cutoff_hz, a.sample_rate);
  const auto y = bq.run(std::vector<double>(a.samples.begin(), a.samples.end()));
  AudioBuffer out;
  out.sample_rate = a.sample_rate;
  out.samples.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out.samples[i] = static_cast<float>(y[i]);
  return out;
}

double butterworth_magnitude(FilterMode mode, double cutoff_hz, double freq_hz, double rate) {
  const double r = std::tan(std::numbers::pi * freq_hz / rate) /
                   std::tan(std::numbers::pi * cutoff_hz / rate);
  if (mode == FilterMode::Lowpass) return 1.0 / std::sqrt(1.0 + std::pow(r, 4));
  if (r == 0.0) return 0.0;
  return 1.0 / std::sqrt(1.0 + std::pow(1.0 / r, 4));
}

AudioBuffer add_echo(const AudioBuffer& a, const std::vector<EchoTap>& taps) {
  std::vector<double> cur(a.samples.begin(), a.samples.end());
  for (const auto& tap : taps) {
    if (tap.delay_ms < 0.0 || tap.decay < 0.0 || tap.decay > 1.0) {
      throw InputError("add_echo: delay must be >= 0 and decay in [0, 1]");
    }
    const auto d = static_cast<std::size_t>(std::llround(tap.delay_ms * a.sample_rate / 1000.0));
    std::vector<double> next = cur;
    for (std::size_t n = d; n < cur.size(); ++n) next[n] += tap.decay * cur[n - d];
    cur = std::move(next);
  }
  AudioBuffer out;
  out.sample_rate = a.sample_rate;
  out.samples.resize(cur.size());
  for (std::size_t i = 0; i < cur.size(); ++i) {
    out.samples[i] = static_cast<float>(std::clamp(cur[i], -1.0, 1.0));
  }
  return out;
}

const std::array<EqBand, 10>& eq_bands() {
  static const std::array<EqBand, 10> bands = [] {
    std::array<EqBand, 10> b{};
    for (std::size_t i = 0; i < b.size(); ++i) {
      b[i] = {31.25 * std::exp2(static_cast<double>(i)), i % 2 == 0 ? 6.0 : -6.0};
    }
    return b;
  }();
  return bands;
}

double eq_gain_db(double freq_hz) {
  const auto& bands = eq_bands();
  if (!(freq_hz > 0.0)) return bands.front().gain_db;
  // Octave position relative to the first center; band i owns [i - 0.5, i + 0.5).
  const double u = std::log2(freq_hz / bands.front().center_hz);
  constexpr double kFade = 0.125;  // half-width of each raised-cosine transition, octaves
  double g = bands.front().gain_db;
  for (std::size_t i = 0; i + 1 < bands.size(); ++i) {
    const double d = (u - (static_cast<double>(i) + 0.5)) / kFade;
    const double step = d <= -1.0 ? 0.0 : d >= 1.0 ? 1.0 : 0.5 * (1.0 + std::sin(0.5 * std::numbers::pi * d));
    g += (bands[i + 1].gain_db - bands[i].gain_db) * step;
  }
  return g;
}

namespace {

// Linear-phase FIR realizing eq_gain_db, odd length, designed by frequency
// sampling and a Blackman window.
const std::vector<double>& eq_fir() {
  static const std::vector<double> taps = [] {
    constexpr std::size_t kGrid = 8192;
    constexpr std::size_t kLen = 4095;
    std::vector<fft::cplx> spec(kGrid);
    for (std::size_t k = 0; k <= kGrid / 2; ++k) {
      const double f = static_cast<double>(k) * kRate / kGrid;
      const double g = std::pow(10.0, eq_gain_db(f) / 20.0);
      spec[k] = g;
      if (k != 0 && k != kGrid / 2) spec[kGrid - k] = g;
    }
    fft::transform(spec, true);
    std::vector<double> h(kLen);
    const std::size_t half = kLen / 2;
    for (std::size_t i = 0; i < kLen; ++i) {
      const std::ptrdiff_t lag = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(half);
      const double v = spec[static_cast<std::size_t>((lag + static_cast<std::ptrdiff_t>(kGrid)) %
                                                     static_cast<std::ptrdiff_t>(kGrid))]
                           .real();
      const double x = 2.0 * std::numbers::pi * static_cast<double>(i) / (kLen - 1);
      const double w = 0.42 - 0.5 * std::cos(x) + 0.08 * std::cos(2.0 * x);
      h[i] = v * w;
    }
    return h;
  }();
  return taps;
}

}  // namespace

AudioBuffer apply_eq(const AudioBuffer& a) {
  require_16k(a, "apply_eq");
  const auto& h = eq_fir();
  const std::size_t n = a.size();
  AudioBuffer out;
  out.sample_rate = a.sample_rate;
  out.samples.assign(n, 0.0f);
  if (n == 0) return out;

  // Overlap-add FFT convolution, output re-centred on the filter's delay.
  const std::size_t delay = h.size() / 2;
  const std::size_t fft_len = 16384;
  const std::size_t block = fft_len - h.size() + 1;
  const fft::Plan& plan = fft::plan_for(fft_len);
  static const std::vector<fft::cplx> hf = [&] {
    std::vector<fft::cplx> v(fft_len);
    for (std::size_t i = 0; i < h.size(); ++i) v[i] = h[i];
    plan.execute(v, false);
    return v;
  }();

  // The filter is real, so block b and block b+1 ride in the real and
  // imaginary parts of one transform.
  std::vector<double> acc(n + 2 * fft_len, 0.0);
  std::vector<fft::cplx> buf(fft_len);
  for (std::size_t start = 0; start < n; start += 2 * block) {
    const std::size_t len0 = std::min(block, n - start);
    const std::size_t len1 = start + block < n ? std::min(block, n - start - block) : 0;
    std::fill(buf.begin(), buf.end(), fft::cplx{});
    for (std::size_t i = 0; i < len0; ++i) buf[i].real(a.samples[start + i]);
    for (std::size_t i = 0; i < len1; ++i) buf[i].imag(a.samples[start + block + i]);
    plan.execute(buf, false);
    for (std::size_t k = 0; k < fft_len; ++k) {
      const double xr = buf[k].real(), xi = buf[k].imag();
      const double hr = hf[k].real(), hi = hf[k].imag();
      buf[k] = fft::cplx(xr * hr - xi * hi, xr * hi + xi * hr);
    }
    plan.execute(buf, true);
    for (std::size_t i = 0; i < fft_len; ++i) acc[start + i] += buf[i].real();
    if (len1 > 0) {
      for (std::size_t i = 0; i < fft_len; ++i) acc[start + block + i] += buf[i].imag();
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.samples[i] = static_cast<float>(std::clamp(acc[i + delay], -1.0, 1.0));
  }
  return out;
}

}  // namespace cfp::degrade
