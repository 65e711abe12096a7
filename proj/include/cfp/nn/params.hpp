#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfp/nn/tensor.hpp"

namespace cfp::nn {

inline constexpr std::size_t kEmbedDim = 256;

struct EncoderConfig {
  std::vector<std::size_t> conv_channels{16, 32, 64};
  std::size_t embed_dim = kEmbedDim;
  std::size_t in_height = 128;  // Mel bins
  std::size_t in_width = 200;   // frames

  // Throws ConfigError unless embed_dim == 256, conv_channels is nonempty and
  // the input survives every 2x2 pooling.
  void validate() const;

  std::size_t input_size() const { return in_height * in_width; }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct ParamShape {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t fan_in;  // 0 for biases
};

// conv{i}.weight [out, in, 3, 3], conv{i}.bias, fc1.weight [256, C], fc1.bias,
// fc2.weight [256, 256], fc2.bias.
std::vector<ParamShape> param_layout(const EncoderConfig& cfg);

// Named encoder tensors in the fixed order of param_layout.
template <typename T>
class ParamSet {
 public:
  ParamSet() = default;

  static ParamSet zeros(const EncoderConfig& cfg);

  // Kaiming-uniform (fan-in, ReLU gain) weights, zero biases.
  static ParamSet kaiming_uniform(const EncoderConfig& cfg, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  std::size_t count() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor<T>& tensor(std::size_t i) { return tensors_[i]; }
  const Tensor<T>& tensor(std::size_t i) const { return tensors_[i]; }

  // Throws ConfigError for unknown names.
  Tensor<T>& at(const std::string& name);
  const Tensor<T>& at(const std::string& name) const;

  std::size_t total_size() const;

  // Same names and shapes.
  bool same_layout(const ParamSet& other) const;
  void require_same_layout(const ParamSet& other, const char* op) const;

  // Visit every scalar as if the tensors were concatenated.
  T& flat(std::size_t index);
  const T& flat(std::size_t index) const;

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out = ParamSet<U>::zeros(config_);
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      for (std::size_t j = 0; j < tensors_[i].size(); ++j) {
        out.tensor(i).data[j] = static_cast<U>(tensors_[i].data[j]);
      }
    }
    return out;
  }

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  EncoderConfig config_;
  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
};

extern template class ParamSet<float>;
extern template class ParamSet<double>;

}  // namespace cfp::nn
