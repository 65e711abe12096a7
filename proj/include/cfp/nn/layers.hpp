#pragma once

// Single-layer forward/backward kernels. Feature maps are channel-major
// [C, H, W]; batches of vectors are row-major [B, D]. Backward functions
// accumulate (+=) into parameter gradients and overwrite input gradients.

#include <cstddef>
#include <cstdint>
#include <vector>

namespace cfp::nn::layers {

// 3x3 convolution, stride 1, zero padding 1 (output is H x W).
template <typename T>
void conv3x3_forward(const T* in, std::size_t cin, std::size_t h, std::size_t w, const T* weight,
                     const T* bias, std::size_t cout, T* out, std::vector<T>& scratch);

// d_in may be null when the input gradient is not needed.
template <typename T>
void conv3x3_backward(const T* in, std::size_t cin, std::size_t h, std::size_t w, const T* weight,
                      std::size_t cout, const T* d_out, T* d_in, T* d_weight, T* d_bias,
                      std::vector<T>& scratch);

template <typename T>
void relu_forward(T* x, std::size_t n);

// d is masked in place where the forward output was not positive.
template <typename T>
void relu_backward(const T* out, T* d, std::size_t n);

// 2x2 max pooling, stride 2; odd trailing rows/columns are dropped. `argmax`
// records the flat input index of each winner; ties go to the first index in
// row-major window order.
template <typename T>
void maxpool2x2_forward(const T* in, std::size_t c, std::size_t h, std::size_t w, T* out,
                        std::uint32_t* argmax);

// d_in (size c*h*w) is overwritten.
template <typename T>
void maxpool2x2_backward(const T* d_out, const std::uint32_t* argmax, std::size_t out_size,
                         T* d_in, std::size_t in_size);

// Mean over the spatial positions of each channel (double accumulation).
template <typename T>
void gap_forward(const T* in, std::size_t c, std::size_t hw, T* out);

template <typename T>
void gap_backward(const T* d_out, std::size_t c, std::size_t hw, T* d_in);

// y[B, out] = x[B, in] * W^T + b, W is [out, in].
template <typename T>
void linear_forward(const T* x, std::size_t batch, std::size_t in, const T* weight, const T* bias,
                    std::size_t out, T* y);

template <typename T>
void linear_backward(const T* x, std::size_t batch, std::size_t in, const T* weight,
                     std::size_t out, const T* d_y, T* d_x, T* d_weight, T* d_bias);

// Row-wise L2 normalization. Pre-norm rows with norm < 1e-12 raise
// DegenerateNormError. `norms` receives each row's norm.
template <typename T>
void l2norm_forward(const T* v, std::size_t batch, std::size_t dim, T* y, std::vector<double>& norms);

// d_v = (g - (g . y) y) / |v|
template <typename T>
void l2norm_backward(const T* y, const std::vector<double>& norms, std::size_t batch,
                     std::size_t dim, const T* d_y, T* d_v);

// Shifts x to zero mean and scales it to unit variance (double statistics).
// A constant input is only shifted. Not learned, so it has no backward.
template <typename T>
void standardize(T* x, std::size_t n);

inline constexpr double kDegenerateNorm = 1e-12;

}  // namespace cfp::nn::layers
