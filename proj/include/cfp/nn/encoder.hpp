#pragma once

#include <cstdint>
#include <vector>

#include "cfp/features.hpp"
#include "cfp/nn/params.hpp"
#include "cfp/nn/tensor.hpp"

namespace cfp::nn {

// Activations kept by a recording forward pass.
template <typename T>
struct Tape {
  struct ConvRecord {
    std::size_t cin = 0, cout = 0, h = 0, w = 0;
    std::vector<T> in;                   // B x cin x h x w
    std::vector<T> act;                  // B x cout x h x w, after ReLU
    std::vector<std::uint32_t> argmax;   // B x cout x h/2 x w/2
  };

  bool recorded = false;
  std::size_t batch = 0;
  std::vector<ConvRecord> convs;
  std::vector<T> pooled;  // output of the last pooling, B x C x hw
  std::size_t pooled_hw = 0;
  std::vector<T> gap;     // B x C
  std::vector<T> hidden;  // B x 256 after ReLU
  std::vector<T> out;     // B x 256 normalized
  std::vector<double> norms;

  void clear() { *this = Tape{}; }
};

// [3x3 conv -> ReLU -> 2x2 max-pool] per configured channel count, then
// global average pool -> FC(256) -> ReLU -> FC(256) -> L2 normalization.
template <typename T>
class Encoder {
 public:
  explicit Encoder(EncoderConfig cfg);

  const EncoderConfig& config() const { return cfg_; }

  // x holds `batch` inputs of in_height x in_width each. Rows of the result
  // have unit norm. When `tape` is given the activations needed by backward()
  // are stored there. The parameters are never modified.
  Matrix<T> forward(const ParamSet<T>& params, const std::vector<T>& x, std::size_t batch,
                    Tape<T>* tape = nullptr, std::size_t threads = 0) const;

  // Gradients of sum(upstream .* output) with respect to every parameter.
  // Throws StateError if the tape holds no recorded pass.
  ParamSet<T> backward(const ParamSet<T>& params, const Tape<T>& tape, const Matrix<T>& upstream,
                       std::size_t threads = 0) const;

 private:
  void check_params(const ParamSet<T>& params) const;
  EncoderConfig cfg_;
};

// Packs log-Mel matrices (128 x 200) into an encoder input batch.
template <typename T>
std::vector<T> pack_batch(const std::vector<features::MelSpectrogram>& mels);

extern template class Encoder<float>;
extern template class Encoder<double>;

}  // namespace cfp::nn
