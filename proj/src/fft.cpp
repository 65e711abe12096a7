#include "cfp/fft.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include "cfp/error.hpp"

namespace cfp::fft {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

Plan::Plan(std::size_t n) : n_(n), rev_(n), twiddle_(n / 2) {
  if (!is_pow2(n)) throw SizeError("FFT size must be a power of two, got " + std::to_string(n));
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1U) << (bits - 1 - b);
    rev_[i] = r;
  }
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddle_[k] = cplx(std::cos(ang), std::sin(ang));
  }
}

void Plan::execute(std::vector<cplx>& data, bool inverse) const {
  if (data.size() != n_) throw SizeError("FFT plan size mismatch");
  for (std::size_t i = 0; i < n_; ++i) {
    if (i < rev_[i]) std::swap(data[i], data[rev_[i]]);
  }
  // Written out by hand: std::complex operator* goes through the C99 NaN
  // recovery path, which is several times slower.
  const double sign = inverse ? -1.0 : 1.0;
  std::size_t first_len = 2;
  if (n_ >= 4) {
    // stages len = 2 and len = 4 fused; twiddles are 1 and -i (or +i)
    for (std::size_t s0 = 0; s0 < n_; s0 += 4) {
      cplx* d = data.data() + s0;
      const cplx a0 = d[0] + d[1], a1 = d[0] - d[1];
      const cplx b0 = d[2] + d[3], b1 = d[2] - d[3];
      // b1 * (-i * sign)
      const cplx b1r(sign * b1.imag(), -sign * b1.real());
      d[0] = a0 + b0;
      d[2] = a0 - b0;
      d[1] = a1 + b1r;
      d[3] = a1 - b1r;
    }
    first_len = 8;
  }
  for (std::size_t len = first_len; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n_ / len;
    for (std::size_t start = 0; start < n_; start += len) {
      cplx* a = data.data() + start;
      cplx* b = a + half;
      for (std::size_t j = 0; j < half; ++j) {
        const double wr = twiddle_[j * stride].real();
        const double wi = sign * twiddle_[j * stride].imag();
        const double br = b[j].real(), bi = b[j].imag();
        const double vr = br * wr - bi * wi;
        const double vi = br * wi + bi * wr;
        const double ur = a[j].real(), ui = a[j].imag();
        a[j] = cplx(ur + vr, ui + vi);
        b[j] = cplx(ur - vr, ui - vi);
      }
    }
  }
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n_);
    for (auto& v : data) v *= scale;
  }
}

void Plan::forward_real_pair(std::vector<cplx>& data, cplx* spec_a, cplx* spec_b) const {
  execute(data, false);
  for (std::size_t k = 0; k <= n_ / 2; ++k) {
    const cplx z = data[k];
    const cplx zc = std::conj(data[(n_ - k) & (n_ - 1)]);
    spec_a[k] = cplx(0.5 * (z.real() + zc.real()), 0.5 * (z.imag() + zc.imag()));
    // (z - zc) / 2i
    spec_b[k] = cplx(0.5 * (z.imag() - zc.imag()), -0.5 * (z.real() - zc.real()));
  }
}

void Plan::inverse_real_pair(const cplx* spec_a, const cplx* spec_b, std::vector<cplx>& out) const {
  out.resize(n_);
  for (std::size_t k = 0; k <= n_ / 2; ++k) {
    // A[k] + i B[k]
    out[k] = cplx(spec_a[k].real() - spec_b[k].imag(), spec_a[k].imag() + spec_b[k].real());
  }
  for (std::size_t k = n_ / 2 + 1; k < n_; ++k) {
    // conj(A[N-k]) + i conj(B[N-k])
    const cplx a = spec_a[n_ - k], b = spec_b[n_ - k];
    out[k] = cplx(a.real() + b.imag(), -a.imag() + b.real());
  }
  execute(out, true);
}

const Plan& plan_for(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::unique_ptr<const Plan>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<const Plan>(n);
  return *slot;
}

void transform(std::vector<cplx>& data, bool inverse) { plan_for(data.size()).execute(data, inverse); }

std::vector<cplx> rfft(const std::vector<double>& x) {
  std::vector<cplx> buf(x.begin(), x.end());
  transform(buf, false);
  buf.resize(x.size() / 2 + 1);
  return buf;
}

std::vector<double> irfft(const std::vector<cplx>& spectrum, std::size_t n) {
  if (spectrum.size() != n / 2 + 1) throw SizeError("irfft: spectrum has wrong number of bins");
  std::vector<cplx> buf(n);
  for (std::size_t k = 0; k <= n / 2; ++k) buf[k] = spectrum[k];
  for (std::size_t k = n / 2 + 1; k < n; ++k) buf[k] = std::conj(spectrum[n - k]);
  transform(buf, true);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real();
  return out;
}

double dominant_frequency(const std::vector<float>& x, double sample_rate) {
  if (x.size() < 2) throw SizeError("dominant_frequency: need at least two samples");
  const std::size_t n = next_pow2(x.size());
  std::vector<double> buf(n, 0.0);
  const double denom = static_cast<double>(x.size() - 1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / denom);
    buf[i] = w * x[i];
  }
  const auto spec = rfft(buf);
  std::size_t best = 1;
  double best_mag = -1.0;
  for (std::size_t k = 1; k < spec.size(); ++k) {
    const double m = std::norm(spec[k]);
    if (m > best_mag) {
      best_mag = m;
      best = k;
    }
  }
  return static_cast<double>(best) * sample_rate / static_cast<double>(n);
}

}  // namespace cfp::fft
