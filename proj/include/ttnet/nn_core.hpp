// Copyright 2026 The ttnet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense feed-forward networks over flat parameter vectors.
//
// Parameters are stored layer by layer: the weight matrix of layer i has
// shape dims[i+1] x dims[i] (rows are output units) and is stored row-major,
// followed by its bias vector of length dims[i+1]. All arithmetic is binary64.

#ifndef TTNET_NN_CORE_HPP_
#define TTNET_NN_CORE_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ttnet/random.hpp"

namespace ttnet {

using Matrix = Eigen::MatrixXd;  // column-major; one column per sample
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Activation : std::uint8_t { identity = 0, tanh = 1 };

inline const char* to_string(Activation a) {
  return a == Activation::tanh ? "tanh" : "identity";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

/// Thrown when training produces a non-finite or runaway loss.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One input/target pair. Both vectors have the data network's I/O width.
struct Sample {
  std::vector<double> x;
  std::vector<double> y;

  bool operator==(const Sample&) const = default;
};

struct MlpSpec {
  std::vector<std::size_t> dims;         // input width first
  std::vector<Activation> activations;   // one per layer; the last is the output activation

  /// Hidden layers share `hidden`; the output layer uses `output`.
  static MlpSpec make(std::vector<std::size_t> dims, Activation hidden = Activation::tanh,
                      Activation output = Activation::identity) {
    MlpSpec spec;
    spec.dims = std::move(dims);
    if (spec.dims.size() >= 2) {
      spec.activations.assign(spec.dims.size() - 1, hidden);
      spec.activations.back() = output;
    }
    spec.validate();
    return spec;
  }

  void validate() const {
    if (dims.size() < 2) throw std::invalid_argument("MlpSpec needs at least 2 layer dims");
    if (activations.size() != dims.size() - 1)
      throw std::invalid_argument("MlpSpec needs one activation per layer");
    for (auto d : dims)
      if (d == 0) throw std::invalid_argument("MlpSpec layer dims must be positive");
  }

  std::size_t layer_count() const { return dims.size() - 1; }
  std::size_t input_dim() const { return dims.front(); }
  std::size_t output_dim() const { return dims.back(); }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) n += dims[i] * dims[i + 1] + dims[i + 1];
    return n;
  }

  /// Offset of layer i's weight block in the flat vector.
  std::size_t layer_offset(std::size_t layer) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < layer; ++i) n += dims[i] * dims[i + 1] + dims[i + 1];
    return n;
  }

  /// FNV-1a over the dims and activation tags.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto mix = [&h](std::uint64_t v) {
      for (int b = 0; b < 8; ++b) {
        h ^= (v >> (8 * b)) & 0xFF;
        h *= 0x100000001B3ULL;
      }
    };
    mix(dims.size());
    for (auto d : dims) mix(d);
    for (auto a : activations) mix(static_cast<std::uint64_t>(a));
    return h;
  }

  bool operator==(const MlpSpec&) const = default;
};

inline std::uint64_t combine_fingerprints(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ (b * 0x9E3779B97F4A7C15ULL));
}

struct ParamVector {
  std::vector<double> values;
  std::uint64_t spec_fingerprint = 0;

  std::size_t size() const { return values.size(); }
  std::span<const double> span() const { return values; }
  std::span<double> span() { return values; }

  bool operator==(const ParamVector&) const = default;
};

inline ParamVector zeros_like(const ParamVector& p) {
  return ParamVector{std::vector<double>(p.size(), 0.0), p.spec_fingerprint};
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline void check_params(const MlpSpec& spec, std::span<const double> params) {
  if (params.size() != spec.param_count())
    throw std::invalid_argument("parameter vector length " + std::to_string(params.size()) +
                                " does not match spec (" + std::to_string(spec.param_count()) + ")");
}

inline void check_params(const MlpSpec& spec, const ParamVector& params) {
  check_params(spec, params.span());
  if (params.spec_fingerprint != 0 && params.spec_fingerprint != spec.fingerprint())
    throw std::invalid_argument("parameter vector was built for a different spec");
}

/// Glorot-uniform weights, zero biases.
inline ParamVector mlp_init(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamVector out{std::vector<double>(spec.param_count(), 0.0), spec.fingerprint()};
  Rng rng(seed);
  std::size_t offset = 0;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const std::size_t in = spec.dims[l], o = spec.dims[l + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(in + o));
    for (std::size_t k = 0; k < in * o; ++k) out.values[offset + k] = rng.uniform(-a, a);
    offset += in * o + o;
  }
  return out;
}

namespace detail {

inline Eigen::Map<const RowMatrix> weights(const MlpSpec& spec, std::span<const double> p,
                                          std::size_t layer) {
  return {p.data() + spec.layer_offset(layer), static_cast<Eigen::Index>(spec.dims[layer + 1]),
          static_cast<Eigen::Index>(spec.dims[layer])};
}

inline Eigen::Map<const Vector> bias(const MlpSpec& spec, std::span<const double> p,
                                     std::size_t layer) {
  const std::size_t off = spec.layer_offset(layer) + spec.dims[layer] * spec.dims[layer + 1];
  return {p.data() + off, static_cast<Eigen::Index>(spec.dims[layer + 1])};
}

inline void activate(Activation a, Matrix& z) {
  if (a == Activation::tanh) z = z.array().tanh().matrix();
}

// Multiplies `delta` in place by the activation derivative, expressed through
// the post-activation value.
inline void activation_backward(Activation a, const Matrix& post, Matrix& delta) {
  if (a == Activation::tanh) delta.array() *= (1.0 - post.array().square());
}

}  // namespace detail

/// Per-layer activations from a batched forward pass. activations[0] is the
/// input and activations.back() the output.
struct ForwardCache {
  std::vector<Matrix> activations;

  const Matrix& output() const { return activations.back(); }
};

/// Forward pass over a batch (columns are samples).
inline ForwardCache forward_batch(const MlpSpec& spec, std::span<const double> params,
                                  Matrix input) {
  check_params(spec, params);
  if (static_cast<std::size_t>(input.rows()) != spec.input_dim())
    throw std::invalid_argument("input width does not match spec");
  ForwardCache cache;
  cache.activations.reserve(spec.dims.size());
  cache.activations.push_back(std::move(input));
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    Matrix z = detail::weights(spec, params, l) * cache.activations.back();
    z.colwise() += detail::bias(spec, params, l);
    detail::activate(spec.activations[l], z);
    cache.activations.push_back(std::move(z));
  }
  return cache;
}

/// Reverse pass of <upstream, forward(input)> summed over the batch.
/// Parameter gradients are accumulated into `param_grad`; the input gradient
/// is written to `input_grad` when it is non-null.
inline void backward_batch(const MlpSpec& spec, std::span<const double> params,
                           const ForwardCache& cache, Matrix upstream,
                           std::span<double> param_grad, Matrix* input_grad = nullptr) {
  check_params(spec, params);
  check_params(spec, std::span<const double>(param_grad.data(), param_grad.size()));
  if (static_cast<std::size_t>(upstream.rows()) != spec.output_dim() ||
      upstream.cols() != cache.output().cols())
    throw std::invalid_argument("upstream gradient shape does not match output");
  Matrix delta = std::move(upstream);
  for (std::size_t l = spec.layer_count(); l-- > 0;) {
    detail::activation_backward(spec.activations[l], cache.activations[l + 1], delta);
    const auto& prev = cache.activations[l];
    const std::size_t off = spec.layer_offset(l);
    const auto out = static_cast<Eigen::Index>(spec.dims[l + 1]);
    const auto in = static_cast<Eigen::Index>(spec.dims[l]);
    Eigen::Map<RowMatrix> gw(param_grad.data() + off, out, in);
    Eigen::Map<Vector> gb(param_grad.data() + off + out * in, out);
    gw.noalias() += delta * prev.transpose();
    gb.noalias() += delta.rowwise().sum();
    if (l > 0 || input_grad != nullptr) {
      Matrix next = detail::weights(spec, params, l).transpose() * delta;
      delta = std::move(next);
    }
  }
  if (input_grad != nullptr) *input_grad = std::move(delta);
}

inline Matrix column(std::span<const double> v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> to_std(const Matrix& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

inline std::vector<double> mlp_forward(const MlpSpec& spec, const ParamVector& params,
                                       std::span<const double> input) {
  check_params(spec, params);
  if (input.size() != spec.input_dim()) throw std::invalid_argument("input width does not match spec");
  if (!all_finite(input)) throw std::invalid_argument("non-finite input");
  return to_std(forward_batch(spec, params.span(), column(input)).output());
}

struct BackwardResult {
  std::vector<double> input_grad;
  ParamVector param_grad;
};

inline BackwardResult mlp_backward(const MlpSpec& spec, const ParamVector& params,
                                   std::span<const double> input,
                                   std::span<const double> upstream) {
  check_params(spec, params);
  if (input.size() != spec.input_dim()) throw std::invalid_argument("input width does not match spec");
  if (upstream.size() != spec.output_dim())
    throw std::invalid_argument("upstream width does not match output");
  const auto cache = forward_batch(spec, params.span(), column(input));
  BackwardResult r{{}, zeros_like(params)};
  r.param_grad.spec_fingerprint = spec.fingerprint();
  Matrix gx;
  backward_batch(spec, params.span(), cache, column(upstream), r.param_grad.span(), &gx);
  r.input_grad = to_std(gx);
  return r;
}

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind : std::uint8_t { sgd_momentum, adam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  std::uint64_t step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;  // adam only
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptimizerState adam(std::size_t n, double lr, double beta1 = 0.5, double beta2 = 0.999,
                             double eps = 1e-8) {
    OptimizerState s;
    s.kind = OptimizerKind::adam;
    s.first_moment.assign(n, 0.0);
    s.second_moment.assign(n, 0.0);
    s.lr = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    return s;
  }

  static OptimizerState sgd_momentum(std::size_t n, double lr, double beta1) {
    OptimizerState s;
    s.kind = OptimizerKind::sgd_momentum;
    s.first_moment.assign(n, 0.0);
    s.lr = lr;
    s.beta1 = beta1;
    return s;
  }

  /// In-place update. SGD: v = beta1 v + g, p -= lr v. Adam: bias-corrected.
  void apply(std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size() || params.size() != first_moment.size())
      throw std::invalid_argument("optimizer buffer length mismatch");
    if (!all_finite(grads)) throw TrainingDiverged("non-finite gradient");
    ++step;
    const std::size_t n = params.size();
    if (kind == OptimizerKind::sgd_momentum) {
      for (std::size_t k = 0; k < n; ++k) {
        first_moment[k] = beta1 * first_moment[k] + grads[k];
        params[k] -= lr * first_moment[k];
      }
      return;
    }
    if (second_moment.size() != n) throw std::invalid_argument("adam second moment length mismatch");
    const double t = static_cast<double>(step);
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    for (std::size_t k = 0; k < n; ++k) {
      const double g = grads[k];
      first_moment[k] = beta1 * first_moment[k] + (1.0 - beta1) * g;
      second_moment[k] = beta2 * second_moment[k] + (1.0 - beta2) * g * g;
      const double mhat = first_moment[k] / c1;
      const double vhat = second_moment[k] / c2;
      params[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
};

inline std::pair<OptimizerState, ParamVector> optimizer_step(OptimizerState state, ParamVector params,
                                                             const ParamVector& grads) {
  state.apply(params.span(), grads.span());
  return {std::move(state), std::move(params)};
}

// ---------------------------------------------------------------------------
// Encoder-decoder losses over an externally supplied parameter vector.

enum class LossKind : std::uint8_t { mse };

struct LossAndGrad {
  double loss = 0.0;
  ParamVector grad;
};

inline ParamVector concat(const ParamVector& a, const ParamVector& b) {
  ParamVector out;
  out.values.reserve(a.size() + b.size());
  out.values.insert(out.values.end(), a.values.begin(), a.values.end());
  out.values.insert(out.values.end(), b.values.begin(), b.values.end());
  out.spec_fingerprint = combine_fingerprints(a.spec_fingerprint, b.spec_fingerprint);
  return out;
}

inline std::pair<Matrix, Matrix> stack_batch(std::span<const Sample> batch, std::size_t in_dim,
                                             std::size_t out_dim) {
  Matrix x(static_cast<Eigen::Index>(in_dim), static_cast<Eigen::Index>(batch.size()));
  Matrix y(static_cast<Eigen::Index>(out_dim), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].x.size() != in_dim || batch[b].y.size() != out_dim)
      throw std::invalid_argument("sample width does not match network");
    x.col(static_cast<Eigen::Index>(b)) = column(batch[b].x);
    y.col(static_cast<Eigen::Index>(b)) = column(batch[b].y);
  }
  return {std::move(x), std::move(y)};
}

/// Per-sample MSE (mean over output coordinates) of the composed network.
inline Vector per_sample_mse(const Matrix& pred, const Matrix& target) {
  return (pred - target).array().square().colwise().mean().transpose();
}

/// Mean per-sample MSE of decoder(encoder(x)) against y and its gradient with
/// respect to the combined (encoder, decoder) vector.
inline LossAndGrad functional_loss_and_grad_raw(const MlpSpec& enc, const MlpSpec& dec,
                                                std::span<const double> combined,
                                                std::span<const Sample> batch,
                                                LossKind kind = LossKind::mse) {
  (void)kind;
  if (batch.empty()) throw std::invalid_argument("empty batch");
  if (enc.output_dim() != dec.input_dim())
    throw std::invalid_argument("encoder output width does not match decoder input");
  const std::size_t pe = enc.param_count(), pd = dec.param_count();
  if (combined.size() != pe + pd) throw std::invalid_argument("combined parameter length mismatch");
  auto penc = combined.subspan(0, pe);
  auto pdec = combined.subspan(pe, pd);
  auto [x, y] = stack_batch(batch, enc.input_dim(), dec.output_dim());
  const auto ce = forward_batch(enc, penc, std::move(x));
  const auto cd = forward_batch(dec, pdec, ce.output());
  const double nb = static_cast<double>(batch.size());
  const double nd = static_cast<double>(dec.output_dim());
  const Matrix diff = cd.output() - y;

  LossAndGrad r;
  r.loss = diff.array().square().sum() / (nb * nd);
  r.grad.values.assign(pe + pd, 0.0);
  std::span<double> g(r.grad.values);
  Matrix gcode;
  backward_batch(dec, pdec, cd, diff * (2.0 / (nb * nd)), g.subspan(pe, pd), &gcode);
  backward_batch(enc, penc, ce, std::move(gcode), g.subspan(0, pe), nullptr);
  r.grad.spec_fingerprint = combine_fingerprints(enc.fingerprint(), dec.fingerprint());
  return r;
}

inline LossAndGrad functional_loss_and_grad(const MlpSpec& enc, const MlpSpec& dec,
                                            const ParamVector& combined,
                                            std::span<const Sample> batch,
                                            LossKind kind = LossKind::mse) {
  return functional_loss_and_grad_raw(enc, dec, combined.span(), batch, kind);
}

/// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h per coordinate.
inline ParamVector finite_diff_gradient(const std::function<double(const ParamVector&)>& f,
                                        const ParamVector& params, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite difference step must be positive");
  ParamVector probe = params;
  ParamVector grad = zeros_like(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = probe.values[i];
    probe.values[i] = orig + h;
    const double fp = f(probe);
    probe.values[i] = orig - h;
    const double fm = f(probe);
    probe.values[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::domain_error("non-finite evaluation in finite differences");
    grad.values[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor). Components smaller than
/// `floor` are compared on an absolute scale.
inline double max_relative_error(std::span<const double> a, std::span<const double> b,
                                 double floor = 1e-4) {
  if (a.size() != b.size()) throw std::invalid_argument("length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace ttnet

#endif  // TTNET_NN_CORE_HPP_
