#include "cfp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>

#include "cfp/moco.hpp"
#include "cfp/nn/encoder.hpp"
#include "cfp/nn/layers.hpp"
#include "cfp/rng.hpp"

namespace cfp::gradcheck {

namespace {

using Vec = std::vector<double>;

struct Eval {
  double value = 0.0;
  Vec grad;
};

template <typename T>
std::vector<T> as(const Vec& x, std::size_t from, std::size_t n) {
  return std::vector<T>(x.begin() + static_cast<std::ptrdiff_t>(from),
                        x.begin() + static_cast<std::ptrdiff_t>(from + n));
}

template <typename T>
double dot(const std::vector<T>& a, const Vec& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

template <typename T>
void put(Vec& g, std::size_t from, const std::vector<T>& part) {
  for (std::size_t i = 0; i < part.size(); ++i) g[from + i] = static_cast<double>(part[i]);
}

Vec random_vec(std::size_t n, Rng& rng, double lo = -1, double hi = 1) {
  Vec v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// A component: starting point, a fixed upstream weighting, and the objective
// with its gradient in either precision.
struct Case {
  std::string name;
  Vec x;
  std::function<Eval(const Vec&, bool)> f64;
  std::function<Eval(const Vec&, bool)> f32;
};

// ---- layers; every objective is sum(g .* layer(x))

constexpr std::size_t kCin = 2, kCout = 3, kH = 5, kW = 6;

template <typename T>
Eval conv_eval(const Vec& x, const Vec& g, bool grad) {
  const std::size_t n_in = kCin * kH * kW, n_w = kCout * kCin * 9;
  const auto in = as<T>(x, 0, n_in), w = as<T>(x, n_in, n_w), b = as<T>(x, n_in + n_w, kCout);
  std::vector<T> out(kCout * kH * kW), scratch;
  nn::layers::conv3x3_forward(in.data(), kCin, kH, kW, w.data(), b.data(), kCout, out.data(), scratch);
  Eval e{dot(out, g), {}};
  if (grad) {
    const std::vector<T> gt(g.begin(), g.end());
    std::vector<T> d_in(n_in), d_w(n_w, T(0)), d_b(kCout, T(0));
    nn::layers::conv3x3_backward(in.data(), kCin, kH, kW, w.data(), kCout, gt.data(), d_in.data(),
                                 d_w.data(), d_b.data(), scratch);
    e.grad.resize(x.size());
    put(e.grad, 0, d_in);
    put(e.grad, n_in, d_w);
    put(e.grad, n_in + n_w, d_b);
  }
  return e;
}

template <typename T>
Eval relu_eval(const Vec& x, const Vec& g, bool grad) {
  auto v = as<T>(x, 0, x.size());
  nn::layers::relu_forward(v.data(), v.size());
  Eval e{dot(v, g), {}};
  if (grad) {
    std::vector<T> d(g.begin(), g.end());
    nn::layers::relu_backward(v.data(), d.data(), d.size());
    e.grad.resize(x.size());
    put(e.grad, 0, d);
  }
  return e;
}

template <typename T>
Eval pool_eval(const Vec& x, const Vec& g, bool grad) {
  const auto in = as<T>(x, 0, x.size());
  const std::size_t out_n = kCout * (kH / 2) * (kW / 2);
  std::vector<T> out(out_n);
  std::vector<std::uint32_t> arg(out_n);
  nn::layers::maxpool2x2_forward(in.data(), kCout, kH, kW, out.data(), arg.data());
  Eval e{dot(out, g), {}};
  if (grad) {
    const std::vector<T> gt(g.begin(), g.end());
    std::vector<T> d(in.size());
    nn::layers::maxpool2x2_backward(gt.data(), arg.data(), out_n, d.data(), d.size());
    e.grad.resize(x.size());
    put(e.grad, 0, d);
  }
  return e;
}

template <typename T>
Eval gap_eval(const Vec& x, const Vec& g, bool grad) {
  const auto in = as<T>(x, 0, x.size());
  std::vector<T> out(kCout);
  nn::layers::gap_forward(in.data(), kCout, kH * kW, out.data());
  Eval e{dot(out, g), {}};
  if (grad) {
    const std::vector<T> gt(g.begin(), g.end());
    std::vector<T> d(in.size());
    nn::layers::gap_backward(gt.data(), kCout, kH * kW, d.data());
    e.grad.resize(x.size());
    put(e.grad, 0, d);
  }
  return e;
}

constexpr std::size_t kBatch = 3, kIn = 7, kOut = 5;

template <typename T>
Eval linear_eval(const Vec& x, const Vec& g, bool grad) {
  const std::size_t n_x = kBatch * kIn, n_w = kOut * kIn;
  const auto in = as<T>(x, 0, n_x), w = as<T>(x, n_x, n_w), b = as<T>(x, n_x + n_w, kOut);
  std::vector<T> y(kBatch * kOut);
  nn::layers::linear_forward(in.data(), kBatch, kIn, w.data(), b.data(), kOut, y.data());
  Eval e{dot(y, g), {}};
  if (grad) {
    const std::vector<T> gt(g.begin(), g.end());
    std::vector<T> d_x(n_x), d_w(n_w, T(0)), d_b(kOut, T(0));
    nn::layers::linear_backward(in.data(), kBatch, kIn, w.data(), kOut, gt.data(), d_x.data(), d_w.data(),
                                d_b.data());
    e.grad.resize(x.size());
    put(e.grad, 0, d_x);
    put(e.grad, n_x, d_w);
    put(e.grad, n_x + n_w, d_b);
  }
  return e;
}

template <typename T>
Eval l2_eval(const Vec& x, const Vec& g, bool grad) {
  const auto v = as<T>(x, 0, x.size());
  std::vector<T> y(v.size());
  std::vector<double> norms;
  nn::layers::l2norm_forward(v.data(), kBatch, kIn, y.data(), norms);
  Eval e{dot(y, g), {}};
  if (grad) {
    const std::vector<T> gt(g.begin(), g.end());
    std::vector<T> d(v.size());
    nn::layers::l2norm_backward(y.data(), norms, kBatch, kIn, gt.data(), d.data());
    e.grad.resize(x.size());
    put(e.grad, 0, d);
  }
  return e;
}

// ---- encoder + InfoNCE: mean loss of a small batch against fixed keys

struct EncoderProblem {
  nn::EncoderConfig cfg;
  std::size_t batch = 3, negs = 6;
  Vec input;
  std::vector<Vec> k_pos;
  Vec k_neg;
};

Vec unit_vec(std::size_t n, Rng& rng) {
  Vec v(n);
  double s = 0;
  for (auto& x : v) {
    x = rng.normal();
    s += x * x;
  }
  for (auto& x : v) x /= std::sqrt(s);
  return v;
}

template <typename T>
Eval encoder_eval(const EncoderProblem& pb, const Vec& x, bool grad) {
  auto params = nn::ParamSet<T>::zeros(pb.cfg);
  for (std::size_t i = 0; i < x.size(); ++i) params.flat(i) = static_cast<T>(x[i]);
  const nn::Encoder<T> enc(pb.cfg);
  const std::vector<T> in(pb.input.begin(), pb.input.end());
  nn::Tape<T> tape;
  const auto q = enc.forward(params, in, pb.batch, grad ? &tape : nullptr, 1);
  const std::vector<T> negs(pb.k_neg.begin(), pb.k_neg.end());
  nn::Matrix<T> up(pb.batch, q.cols);
  Eval e;
  for (std::size_t b = 0; b < pb.batch; ++b) {
    const std::vector<T> kp(pb.k_pos[b].begin(), pb.k_pos[b].end());
    const auto r = moco::info_nce<T>(q.row(b), kp.data(), negs.data(), pb.negs, q.cols, 0.07);
    e.value += r.loss / static_cast<double>(pb.batch);
    for (std::size_t d = 0; d < q.cols; ++d) up(b, d) = static_cast<T>(r.grad_q[d] / static_cast<double>(pb.batch));
  }
  if (grad) {
    const auto gp = enc.backward(params, tape, up, 1);
    e.grad.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) e.grad[i] = static_cast<double>(gp.flat(i));
  }
  return e;
}

template <Eval (*F32)(const Vec&, const Vec&, bool), Eval (*F64)(const Vec&, const Vec&, bool)>
Case layer_case(std::string name, Vec x, Vec g) {
  return {std::move(name), std::move(x), [g](const Vec& v, bool d) { return F64(v, g, d); },
          [g](const Vec& v, bool d) { return F32(v, g, d); }};
}

std::vector<Case> build_cases(std::uint64_t seed) {
  std::vector<Case> cases;
  Rng rng(derive_seed(seed, 0x6c));

  {
    const std::size_t n = kCin * kH * kW + kCout * kCin * 9 + kCout;
    cases.push_back(layer_case<conv_eval<float>, conv_eval<double>>("conv3x3", random_vec(n, rng),
                                                                    random_vec(kCout * kH * kW, rng)));
  }
  {
    // kept away from the kink at zero
    Vec x = random_vec(40, rng, 0.1, 1.0);
    for (std::size_t i = 0; i < x.size(); i += 2) x[i] = -x[i];
    cases.push_back(layer_case<relu_eval<float>, relu_eval<double>>("relu", x, random_vec(40, rng)));
  }
  {
    // distinct values, spaced wider than the step, so no window has a near tie
    Vec x(kCout * kH * kW);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.01 * static_cast<double>(i);
    for (std::size_t i = x.size() - 1; i > 0; --i) std::swap(x[i], x[rng.below(i + 1)]);
    cases.push_back(layer_case<pool_eval<float>, pool_eval<double>>(
        "maxpool2x2", x, random_vec(kCout * (kH / 2) * (kW / 2), rng)));
  }
  cases.push_back(layer_case<gap_eval<float>, gap_eval<double>>("gap", random_vec(kCout * kH * kW, rng),
                                                                random_vec(kCout, rng)));
  {
    const std::size_t n = kBatch * kIn + kOut * kIn + kOut;
    cases.push_back(layer_case<linear_eval<float>, linear_eval<double>>("linear", random_vec(n, rng),
                                                                        random_vec(kBatch * kOut, rng)));
  }
  cases.push_back(layer_case<l2_eval<float>, l2_eval<double>>("l2norm", random_vec(kBatch * kIn, rng),
                                                              random_vec(kBatch * kIn, rng)));

  auto pb = std::make_shared<EncoderProblem>();
  pb->cfg.conv_channels = {3, 4};
  pb->cfg.in_height = 12;
  pb->cfg.in_width = 16;
  pb->input = random_vec(pb->batch * pb->cfg.input_size(), rng, -3, 3);
  for (std::size_t b = 0; b < pb->batch; ++b) pb->k_pos.push_back(unit_vec(nn::kEmbedDim, rng));
  for (std::size_t j = 0; j < pb->negs; ++j) {
    const auto r = unit_vec(nn::kEmbedDim, rng);
    pb->k_neg.insert(pb->k_neg.end(), r.begin(), r.end());
  }
  const auto init = nn::ParamSet<double>::kaiming_uniform(pb->cfg, derive_seed(seed, 0x6d));
  Vec x(init.total_size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = init.flat(i);
  // small random biases so no bias gradient is structurally zero
  std::size_t at = 0;
  for (std::size_t t = 0; t < init.count(); ++t) {
    if (init.tensor(t).shape.size() == 1) {
      for (std::size_t j = 0; j < init.tensor(t).size(); ++j) x[at + j] = rng.uniform(-0.05, 0.05);
    }
    at += init.tensor(t).size();
  }
  cases.push_back({"encoder+infonce", x, [pb](const Vec& v, bool d) { return encoder_eval<double>(*pb, v, d); },
                   [pb](const Vec& v, bool d) { return encoder_eval<float>(*pb, v, d); }});
  return cases;
}

}  // namespace

std::vector<Component> run(const Options& opt) {
  std::vector<Component> out;
  Rng pick(derive_seed(opt.seed, 0x6e));
  for (auto& c : build_cases(opt.seed)) {
    Component comp;
    comp.name = c.name;
    const auto g64 = c.f64(c.x, true).grad;
    const auto g32 = c.f32(c.x, true).grad;
    const std::size_t n = std::min(opt.coords, c.x.size());
    // distinct coordinates
    std::vector<std::size_t> idx(c.x.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + pick.below(idx.size() - i)]);
    Vec x = c.x;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = idx[k];
      const double keep = x[i];
      x[i] = keep + opt.step;
      const double up = c.f64(x, false).value;
      x[i] = keep - opt.step;
      const double dn = c.f64(x, false).value;
      x[i] = keep;
      const double fd = (up - dn) / (2 * opt.step);
      comp.worst_f64 = std::max(comp.worst_f64, std::abs(g64[i] - fd) / std::max(std::abs(fd), 1e-3));
      comp.worst_f32 = std::max(comp.worst_f32, std::abs(g32[i] - fd) / std::max(std::abs(fd), 1e-2));
      ++comp.checked;
    }
    comp.pass = comp.worst_f64 < opt.tol_f64 && comp.worst_f32 < opt.tol_f32;
    out.push_back(comp);
  }
  return out;
}

bool all_pass(const std::vector<Component>& comps) {
  return std::all_of(comps.begin(), comps.end(), [](const Component& c) { return c.pass; });
}

std::string format(const Component& c) {
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%-16s coords %3zu  f64 %.3e  f32 %.3e  %s", c.name.c_str(), c.checked,
                c.worst_f64, c.worst_f32, c.pass ? "ok" : "FAIL");
  return buf;
}

}  // namespace cfp::gradcheck
