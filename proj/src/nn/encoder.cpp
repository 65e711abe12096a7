#include "cfp/nn/encoder.hpp"

#include <cmath>
#include <numeric>

#include "cfp/error.hpp"
#include "cfp/nn/layers.hpp"
#include "cfp/parallel.hpp"
#include "cfp/rng.hpp"

namespace cfp::nn {

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void EncoderConfig::validate() const {
  if (embed_dim != kEmbedDim) {
    throw ConfigError("embed_dim must be 256, got " + std::to_string(embed_dim));
  }
  if (conv_channels.empty()) throw ConfigError("conv_channels must not be empty");
  for (auto c : conv_channels) {
    if (c == 0) throw ConfigError("conv channel counts must be positive");
  }
  std::size_t h = in_height, w = in_width;
  for (std::size_t i = 0; i < conv_channels.size(); ++i) {
    h /= 2;
    w /= 2;
    if (h == 0 || w == 0) {
      throw ConfigError("input " + std::to_string(in_height) + "x" + std::to_string(in_width) +
                        " is too small for " + std::to_string(conv_channels.size()) + " pooling stages");
    }
  }
}

std::vector<ParamShape> param_layout(const EncoderConfig& cfg) {
  cfg.validate();
  std::vector<ParamShape> out;
  std::size_t cin = 1;
  for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
    const std::size_t cout = cfg.conv_channels[i];
    const std::string p = "conv" + std::to_string(i);
    out.push_back({p + ".weight", {cout, cin, 3, 3}, cin * 9});
    out.push_back({p + ".bias", {cout}, 0});
    cin = cout;
  }
  out.push_back({"fc1.weight", {cfg.embed_dim, cin}, cin});
  out.push_back({"fc1.bias", {cfg.embed_dim}, 0});
  out.push_back({"fc2.weight", {cfg.embed_dim, cfg.embed_dim}, cfg.embed_dim});
  out.push_back({"fc2.bias", {cfg.embed_dim}, 0});
  return out;
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros(const EncoderConfig& cfg) {
  ParamSet p;
  p.config_ = cfg;
  for (const auto& s : param_layout(cfg)) {
    p.names_.push_back(s.name);
    p.tensors_.emplace_back(s.shape);
  }
  return p;
}

template <typename T>
ParamSet<T> ParamSet<T>::kaiming_uniform(const EncoderConfig& cfg, std::uint64_t seed) {
  ParamSet p = zeros(cfg);
  const auto layout = param_layout(cfg);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].fan_in == 0) continue;
    Rng rng(derive_seed(seed, 0x1417, i));
    const double bound = std::sqrt(6.0 / static_cast<double>(layout[i].fan_in));
    for (auto& v : p.tensors_[i].data) v = static_cast<T>(rng.uniform(-bound, bound));
  }
  return p;
}

template <typename T>
Tensor<T>& ParamSet<T>::at(const std::string& name) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return tensors_[i];
  }
  throw ConfigError("no parameter named '" + name + "'");
}

template <typename T>
const Tensor<T>& ParamSet<T>::at(const std::string& name) const {
  return const_cast<ParamSet*>(this)->at(name);
}

template <typename T>
std::size_t ParamSet<T>::total_size() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

template <typename T>
bool ParamSet<T>::same_layout(const ParamSet& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].shape != other.tensors_[i].shape) return false;
  }
  return true;
}

template <typename T>
void ParamSet<T>::require_same_layout(const ParamSet& other, const char* op) const {
  if (!same_layout(other)) throw ConfigError(std::string(op) + ": parameter layouts differ");
}

template <typename T>
T& ParamSet<T>::flat(std::size_t index) {
  for (auto& t : tensors_) {
    if (index < t.size()) return t.data[index];
    index -= t.size();
  }
  throw ConfigError("flat parameter index out of range");
}

template <typename T>
const T& ParamSet<T>::flat(std::size_t index) const {
  return const_cast<ParamSet*>(this)->flat(index);
}

template class ParamSet<float>;
template class ParamSet<double>;

template <typename T>
Encoder<T>::Encoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
}

template <typename T>
void Encoder<T>::check_params(const ParamSet<T>& params) const {
  const auto layout = param_layout(cfg_);
  if (params.count() != layout.size()) throw ConfigError("parameter set does not match encoder config");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (params.name(i) != layout[i].name || params.tensor(i).shape != layout[i].shape) {
      throw ConfigError("parameter " + layout[i].name + " expected shape " +
                        shape_string(layout[i].shape) + ", got " + params.name(i) + " " +
                        shape_string(params.tensor(i).shape));
    }
  }
}

template <typename T>
Matrix<T> Encoder<T>::forward(const ParamSet<T>& params, const std::vector<T>& x,
                              std::size_t batch, Tape<T>* tape, std::size_t threads) const {
  check_params(params);
  if (batch == 0) throw ConfigError("forward: batch must be at least 1");
  const std::size_t in_size = cfg_.input_size();
  if (x.size() != batch * in_size) {
    throw ConfigError("forward: input has " + std::to_string(x.size()) + " values, expected " +
                      std::to_string(batch) + " x " + std::to_string(in_size));
  }
  for (const T v : x) {
    if (!std::isfinite(static_cast<double>(v))) throw NumericError("forward: non-finite input");
  }

  const std::size_t n_conv = cfg_.conv_channels.size();
  // Spatial sizes per stage.
  std::vector<std::size_t> hs(n_conv + 1), ws(n_conv + 1), cs(n_conv + 1);
  hs[0] = cfg_.in_height;
  ws[0] = cfg_.in_width;
  cs[0] = 1;
  for (std::size_t l = 0; l < n_conv; ++l) {
    cs[l + 1] = cfg_.conv_channels[l];
    hs[l + 1] = hs[l] / 2;
    ws[l + 1] = ws[l] / 2;
  }
  const std::size_t c_last = cs[n_conv];
  const std::size_t hw_last = hs[n_conv] * ws[n_conv];

  if (tape != nullptr) {
    tape->clear();
    tape->batch = batch;
    tape->convs.resize(n_conv);
    for (std::size_t l = 0; l < n_conv; ++l) {
      auto& rec = tape->convs[l];
      rec.cin = cs[l];
      rec.cout = cs[l + 1];
      rec.h = hs[l];
      rec.w = ws[l];
      rec.in.resize(batch * cs[l] * hs[l] * ws[l]);
      rec.act.resize(batch * cs[l + 1] * hs[l] * ws[l]);
      rec.argmax.resize(batch * cs[l + 1] * hs[l + 1] * ws[l + 1]);
    }
    tape->pooled.resize(batch * c_last * hw_last);
    tape->pooled_hw = hw_last;
  }

  std::vector<T> gap(batch * c_last);
  parallel_for(batch, threads, [&](std::size_t b) {
    std::vector<T> cur(x.begin() + static_cast<std::ptrdiff_t>(b * in_size),
                       x.begin() + static_cast<std::ptrdiff_t>((b + 1) * in_size));
    layers::standardize(cur.data(), cur.size());
    std::vector<T> act, pooled, scratch;
    std::vector<std::uint32_t> argmax;
    for (std::size_t l = 0; l < n_conv; ++l) {
      const std::size_t h = hs[l], w = ws[l], cin = cs[l], cout = cs[l + 1];
      act.resize(cout * h * w);
      layers::conv3x3_forward(cur.data(), cin, h, w, params.tensor(2 * l).ptr(),
                              params.tensor(2 * l + 1).ptr(), cout, act.data(), scratch);
      layers::relu_forward(act.data(), act.size());
      const std::size_t pooled_size = cout * hs[l + 1] * ws[l + 1];
      pooled.resize(pooled_size);
      argmax.resize(pooled_size);
      layers::maxpool2x2_forward(act.data(), cout, h, w, pooled.data(), argmax.data());
      if (tape != nullptr) {
        auto& rec = tape->convs[l];
        std::copy(cur.begin(), cur.end(), rec.in.begin() + static_cast<std::ptrdiff_t>(b * cur.size()));
        std::copy(act.begin(), act.end(), rec.act.begin() + static_cast<std::ptrdiff_t>(b * act.size()));
        std::copy(argmax.begin(), argmax.end(),
                  rec.argmax.begin() + static_cast<std::ptrdiff_t>(b * pooled_size));
      }
      cur.swap(pooled);
    }
    if (tape != nullptr) {
      std::copy(cur.begin(), cur.end(), tape->pooled.begin() + static_cast<std::ptrdiff_t>(b * cur.size()));
    }
    layers::gap_forward(cur.data(), c_last, hw_last, gap.data() + b * c_last);
  });

  const std::size_t d = cfg_.embed_dim;
  const std::size_t fc1 = 2 * n_conv;
  std::vector<T> hidden(batch * d), pre(batch * d);
  layers::linear_forward(gap.data(), batch, c_last, params.tensor(fc1).ptr(),
                         params.tensor(fc1 + 1).ptr(), d, hidden.data());
  layers::relu_forward(hidden.data(), hidden.size());
  layers::linear_forward(hidden.data(), batch, d, params.tensor(fc1 + 2).ptr(),
                         params.tensor(fc1 + 3).ptr(), d, pre.data());
  Matrix<T> out(batch, d);
  std::vector<double> norms;
  layers::l2norm_forward(pre.data(), batch, d, out.data.data(), norms);

  if (tape != nullptr) {
    tape->gap = std::move(gap);
    tape->hidden = std::move(hidden);
    tape->out = out.data;
    tape->norms = std::move(norms);
    tape->recorded = true;
  }
  return out;
}

template <typename T>
ParamSet<T> Encoder<T>::backward(const ParamSet<T>& params, const Tape<T>& tape,
                                 const Matrix<T>& upstream, std::size_t threads) const {
  if (!tape.recorded) throw StateError("backward called without a recorded forward pass");
  check_params(params);
  const std::size_t batch = tape.batch;
  const std::size_t d = cfg_.embed_dim;
  if (upstream.rows != batch || upstream.cols != d) {
    throw ConfigError("backward: upstream gradient must be " + std::to_string(batch) + " x " +
                      std::to_string(d));
  }
  const std::size_t n_conv = cfg_.conv_channels.size();
  const std::size_t fc1 = 2 * n_conv;
  const std::size_t c_last = cfg_.conv_channels.back();
  ParamSet<T> grads = ParamSet<T>::zeros(cfg_);

  std::vector<T> d_pre(batch * d), d_hidden(batch * d), d_gap(batch * c_last);
  layers::l2norm_backward(tape.out.data(), tape.norms, batch, d, upstream.data.data(), d_pre.data());
  layers::linear_backward(tape.hidden.data(), batch, d, params.tensor(fc1 + 2).ptr(), d,
                          d_pre.data(), d_hidden.data(), grads.tensor(fc1 + 2).ptr(),
                          grads.tensor(fc1 + 3).ptr());
  layers::relu_backward(tape.hidden.data(), d_hidden.data(), d_hidden.size());
  layers::linear_backward(tape.gap.data(), batch, c_last, params.tensor(fc1).ptr(), d,
                          d_hidden.data(), d_gap.data(), grads.tensor(fc1).ptr(),
                          grads.tensor(fc1 + 1).ptr());

  // Conv gradients per sample, summed afterwards in sample order so the
  // result does not depend on the thread count.
  std::vector<std::vector<std::vector<T>>> per_sample(batch);
  parallel_for(batch, threads, [&](std::size_t b) {
    auto& g = per_sample[b];
    g.resize(2 * n_conv);
    for (std::size_t i = 0; i < 2 * n_conv; ++i) g[i].assign(grads.tensor(i).size(), T(0));
    std::vector<T> d_cur(c_last * tape.pooled_hw), d_act, d_in, scratch;
    layers::gap_backward(d_gap.data() + b * c_last, c_last, tape.pooled_hw, d_cur.data());
    for (std::size_t l = n_conv; l-- > 0;) {
      const auto& rec = tape.convs[l];
      const std::size_t act_size = rec.cout * rec.h * rec.w;
      const std::size_t pooled_size = rec.cout * (rec.h / 2) * (rec.w / 2);
      d_act.resize(act_size);
      layers::maxpool2x2_backward(d_cur.data(), rec.argmax.data() + b * pooled_size, pooled_size,
                                  d_act.data(), act_size);
      layers::relu_backward(rec.act.data() + b * act_size, d_act.data(), act_size);
      const std::size_t in_size = rec.cin * rec.h * rec.w;
      d_in.resize(in_size);
      layers::conv3x3_backward(rec.in.data() + b * in_size, rec.cin, rec.h, rec.w,
                               params.tensor(2 * l).ptr(), rec.cout, d_act.data(),
                               l > 0 ? d_in.data() : nullptr, g[2 * l].data(), g[2 * l + 1].data(),
                               scratch);
      d_cur.swap(d_in);
    }
  });
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < 2 * n_conv; ++i) {
      auto& dst = grads.tensor(i).data;
      const auto& src = per_sample[b][i];
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  }
  return grads;
}

template <typename T>
std::vector<T> pack_batch(const std::vector<features::MelSpectrogram>& mels) {
  std::vector<T> out;
  if (mels.empty()) return out;
  const std::size_t per = mels.front().values.size();
  out.reserve(per * mels.size());
  for (const auto& m : mels) {
    if (m.values.size() != per) throw SizeError("pack_batch: spectrograms differ in size");
    for (double v : m.values) out.push_back(static_cast<T>(v));
  }
  return out;
}

template class Encoder<float>;
template class Encoder<double>;
template std::vector<float> pack_batch<float>(const std::vector<features::MelSpectrogram>&);
template std::vector<double> pack_batch<double>(const std::vector<features::MelSpectrogram>&);

}  // namespace cfp::nn
