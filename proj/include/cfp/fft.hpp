#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace cfp::fft {

using cplx = std::complex<double>;

bool is_pow2(std::size_t n);
std::size_t next_pow2(std::size_t n);

// Iterative radix-2 transform, in place; size must be a power of two.
// Forward uses exp(-2*pi*i*k*n/N); the inverse is scaled by 1/N.
void transform(std::vector<cplx>& data, bool inverse);

// Power-of-two real transform returning bins 0..N/2.
std::vector<cplx> rfft(const std::vector<double>& x);

// Inverse of rfft for a length-N real signal.
std::vector<double> irfft(const std::vector<cplx>& spectrum, std::size_t n);

// Precomputed twiddles and bit reversal for repeated transforms of one size.
class Plan {
 public:
  explicit Plan(std::size_t n);
  std::size_t size() const { return n_; }
  void execute(std::vector<cplx>& data, bool inverse) const;

  // Two real transforms for the price of one: data = a + i*b on entry; on
  // return bins 0..N/2 of A and B are in spec_a / spec_b.
  void forward_real_pair(std::vector<cplx>& data, cplx* spec_a, cplx* spec_b) const;

  // Inverse of the above: out = irfft(A) + i*irfft(B) given bins 0..N/2.
  void inverse_real_pair(const cplx* spec_a, const cplx* spec_b, std::vector<cplx>& out) const;

 private:
  std::size_t n_;
  std::vector<std::size_t> rev_;
  std::vector<cplx> twiddle_;
};

// Shared immutable plan for size n, built on first use. Thread-safe.
const Plan& plan_for(std::size_t n);

// Index of the largest |X[k]| for k in [1, N/2], frequency resolution
// rate/N. Windowed with Hann; zero-padded to a power of two >= len.
double dominant_frequency(const std::vector<float>& x, double sample_rate);

}  // namespace cfp::fft
