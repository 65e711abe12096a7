#include "cfp/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "cfp/error.hpp"
#include "cfp/simd/kernels.hpp"

namespace cfp::nn::layers {
namespace {

// col[(c*9 + ky*3 + kx), y*w + x] = in[c, y + ky - 1, x + kx - 1] (0 outside)
template <typename T>
void im2col3x3(const T* in, std::size_t cin, std::size_t h, std::size_t w, T* col) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < cin; ++c) {
    const T* plane = in + c * hw;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        T* dst = col + (c * 9 + ky * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          T* drow = dst + y * w;
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(drow, drow + w, T(0));
            continue;
          }
          const T* srow = plane + static_cast<std::size_t>(sy) * w;
          // x + kx - 1 in [0, w)
          if (kx == 0) {
            drow[0] = T(0);
            std::memcpy(drow + 1, srow, (w - 1) * sizeof(T));
          } else if (kx == 1) {
            std::memcpy(drow, srow, w * sizeof(T));
          } else {
            std::memcpy(drow, srow + 1, (w - 1) * sizeof(T));
            drow[w - 1] = T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im3x3(const T* col, std::size_t cin, std::size_t h, std::size_t w, T* in) {
  const std::size_t hw = h * w;
  std::fill(in, in + cin * hw, T(0));
  for (std::size_t c = 0; c < cin; ++c) {
    T* plane = in + c * hw;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const T* src = col + (c * 9 + ky * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          T* prow = plane + static_cast<std::size_t>(sy) * w;
          const T* srow = src + y * w;
          if (kx == 0) {
            for (std::size_t x = 1; x < w; ++x) prow[x - 1] += srow[x];
          } else if (kx == 1) {
            for (std::size_t x = 0; x < w; ++x) prow[x] += srow[x];
          } else {
            for (std::size_t x = 0; x + 1 < w; ++x) prow[x + 1] += srow[x];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void conv3x3_forward(const T* in, std::size_t cin, std::size_t h, std::size_t w, const T* weight,
                     const T* bias, std::size_t cout, T* out, std::vector<T>& scratch) {
  const std::size_t hw = h * w;
  const std::size_t k = cin * 9;
  scratch.resize(k * hw);
  im2col3x3(in, cin, h, w, scratch.data());
  simd::gemm_nn<T>(cout, hw, k, weight, k, scratch.data(), hw, out, hw, false);
  for (std::size_t o = 0; o < cout; ++o) {
    T* row = out + o * hw;
    const T b = bias[o];
    for (std::size_t i = 0; i < hw; ++i) row[i] += b;
  }
}

template <typename T>
void conv3x3_backward(const T* in, std::size_t cin, std::size_t h, std::size_t w, const T* weight,
                      std::size_t cout, const T* d_out, T* d_in, T* d_weight, T* d_bias,
                      std::vector<T>& scratch) {
  const std::size_t hw = h * w;
  const std::size_t k = cin * 9;
  scratch.resize(k * hw);
  im2col3x3(in, cin, h, w, scratch.data());
  for (std::size_t o = 0; o < cout; ++o) {
    const T* row = d_out + o * hw;
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += row[i];
    d_bias[o] += static_cast<T>(s);
  }
  simd::gemm_nt<T>(cout, k, hw, d_out, hw, scratch.data(), hw, d_weight, k, true);
  if (d_in != nullptr) {
    std::vector<T> wt(k * cout);
    for (std::size_t o = 0; o < cout; ++o) {
      for (std::size_t p = 0; p < k; ++p) wt[p * cout + o] = weight[o * k + p];
    }
    simd::gemm_nn<T>(k, hw, cout, wt.data(), cout, d_out, hw, scratch.data(), hw, false);
    col2im3x3(scratch.data(), cin, h, w, d_in);
  }
}

template <typename T>
void standardize(T* x, std::size_t n) {
  if (n == 0) return;
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += x[i];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
  var /= static_cast<double>(n);
  const double inv = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
  for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<T>((x[i] - mean) * inv);
}

template <typename T>
void relu_forward(T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(const T* out, T* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!(out[i] > T(0))) d[i] = T(0);
  }
}

template <typename T>
void maxpool2x2_forward(const T* in, std::size_t c, std::size_t h, std::size_t w, T* out,
                        std::uint32_t* argmax) {
  const std::size_t oh = h / 2, ow = w / 2;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const std::size_t base = ch * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = base + (2 * y) * w + 2 * x;
        const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
        for (std::size_t idx : cand) {
          if (in[idx] > in[best]) best = idx;
        }
        const std::size_t o = ch * oh * ow + y * ow + x;
        out[o] = in[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

template <typename T>
void maxpool2x2_backward(const T* d_out, const std::uint32_t* argmax, std::size_t out_size,
                         T* d_in, std::size_t in_size) {
  std::fill(d_in, d_in + in_size, T(0));
  for (std::size_t o = 0; o < out_size; ++o) d_in[argmax[o]] += d_out[o];
}

template <typename T>
void gap_forward(const T* in, std::size_t c, std::size_t hw, T* out) {
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    const T* p = in + ch * hw;
    for (std::size_t i = 0; i < hw; ++i) s += p[i];
    out[ch] = static_cast<T>(s / static_cast<double>(hw));
  }
}

template <typename T>
void gap_backward(const T* d_out, std::size_t c, std::size_t hw, T* d_in) {
  const T inv = static_cast<T>(1.0 / static_cast<double>(hw));
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T g = d_out[ch] * inv;
    std::fill(d_in + ch * hw, d_in + (ch + 1) * hw, g);
  }
}

template <typename T>
void linear_forward(const T* x, std::size_t batch, std::size_t in, const T* weight, const T* bias,
                    std::size_t out, T* y) {
  simd::gemm_nt<T>(batch, out, in, x, in, weight, in, y, out, false);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < out; ++o) y[b * out + o] += bias[o];
  }
}

template <typename T>
void linear_backward(const T* x, std::size_t batch, std::size_t in, const T* weight,
                     std::size_t out, const T* d_y, T* d_x, T* d_weight, T* d_bias) {
  for (std::size_t o = 0; o < out; ++o) {
    double s = 0.0;
    for (std::size_t b = 0; b < batch; ++b) s += d_y[b * out + o];
    d_bias[o] += static_cast<T>(s);
  }
  // d_weight[out, in] += d_y^T [out, B] * x [B, in]
  std::vector<T> dyt(out * batch);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < out; ++o) dyt[o * batch + b] = d_y[b * out + o];
  }
  simd::gemm_nn<T>(out, in, batch, dyt.data(), batch, x, in, d_weight, in, true);
  if (d_x != nullptr) simd::gemm_nn<T>(batch, in, out, d_y, out, weight, in, d_x, in, false);
}

template <typename T>
void l2norm_forward(const T* v, std::size_t batch, std::size_t dim, T* y, std::vector<double>& norms) {
  norms.resize(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* row = v + b * dim;
    double s = 0.0;
    for (std::size_t i = 0; i < dim; ++i) s += static_cast<double>(row[i]) * row[i];
    const double n = std::sqrt(s);
    if (!(n >= kDegenerateNorm)) {
      throw DegenerateNormError("embedding row " + std::to_string(b) + " has pre-normalization norm " +
                                std::to_string(n) + "; the encoder output is dead");
    }
    norms[b] = n;
    for (std::size_t i = 0; i < dim; ++i) y[b * dim + i] = static_cast<T>(row[i] / n);
  }
}

template <typename T>
void l2norm_backward(const T* y, const std::vector<double>& norms, std::size_t batch,
                     std::size_t dim, const T* d_y, T* d_v) {
  for (std::size_t b = 0; b < batch; ++b) {
    const T* yr = y + b * dim;
    const T* gr = d_y + b * dim;
    double dot = 0.0;
    for (std::size_t i = 0; i < dim; ++i) dot += static_cast<double>(gr[i]) * yr[i];
    for (std::size_t i = 0; i < dim; ++i) {
      d_v[b * dim + i] = static_cast<T>((gr[i] - dot * yr[i]) / norms[b]);
    }
  }
}

#define CFP_INSTANTIATE_LAYERS(T)                                                                  \
  template void conv3x3_forward<T>(const T*, std::size_t, std::size_t, std::size_t, const T*,     \
                                   const T*, std::size_t, T*, std::vector<T>&);                   \
  template void conv3x3_backward<T>(const T*, std::size_t, std::size_t, std::size_t, const T*,    \
                                    std::size_t, const T*, T*, T*, T*, std::vector<T>&);          \
  template void standardize<T>(T*, std::size_t);                                                  \
  template void relu_forward<T>(T*, std::size_t);                                                 \
  template void relu_backward<T>(const T*, T*, std::size_t);                                      \
  template void maxpool2x2_forward<T>(const T*, std::size_t, std::size_t, std::size_t, T*,        \
                                      std::uint32_t*);                                            \
  template void maxpool2x2_backward<T>(const T*, const std::uint32_t*, std::size_t, T*,           \
                                       std::size_t);                                              \
  template void gap_forward<T>(const T*, std::size_t, std::size_t, T*);                           \
  template void gap_backward<T>(const T*, std::size_t, std::size_t, T*);                          \
  template void linear_forward<T>(const T*, std::size_t, std::size_t, const T*, const T*,         \
                                  std::size_t, T*);                                               \
  template void linear_backward<T>(const T*, std::size_t, std::size_t, const T*, std::size_t,     \
                                   const T*, T*, T*, T*);                                         \
  template void l2norm_forward<T>(const T*, std::size_t, std::size_t, T*, std::vector<double>&);  \
  template void l2norm_backward<T>(const T*, const std::vector<double>&, std::size_t, std::size_t, \
                                   const T*, T*);

CFP_INSTANTIATE_LAYERS(float)
CFP_INSTANTIATE_LAYERS(double)

#undef CFP_INSTANTIATE_LAYERS

}  // namespace cfp::nn::layers
