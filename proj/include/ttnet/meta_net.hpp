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

// The meta-network: m per-task branches feeding a common trunk that regresses
// a full (encoder, decoder) parameter vector from known-task encoder
// parameters and their correlations to the target task.

#ifndef TTNET_META_NET_HPP_
#define TTNET_META_NET_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttnet/base_learner.hpp"
#include "ttnet/nn_core.hpp"
#include "ttnet/task_world.hpp"
#include "ttnet/vote_aggregation.hpp"

namespace ttnet {

struct MetaSpec {
  std::size_t m = 0;
  ArchConfig arch;
  MlpSpec branch;  // [P_E + 1, hidden..., embed]
  MlpSpec common;  // [m * embed, hidden..., P_E + P_D]

  static MetaSpec make(const ArchConfig& arch, std::size_t m, const std::vector<std::size_t>& branch_hidden = {128},
                       std::size_t embed = 64, const std::vector<std::size_t>& common_hidden = {256}) {
    MetaSpec s;
    s.m = m;
    s.arch = arch;
    std::vector<std::size_t> bd{arch.encoder_params() + 1};
    bd.insert(bd.end(), branch_hidden.begin(), branch_hidden.end());
    bd.push_back(embed);
    s.branch = MlpSpec::make(bd);
    std::vector<std::size_t> cd{m * embed};
    cd.insert(cd.end(), common_hidden.begin(), common_hidden.end());
    cd.push_back(arch.total_params());
    s.common = MlpSpec::make(cd);
    s.validate();
    return s;
  }

  std::size_t embed_dim() const { return branch.output_dim(); }

  void validate() const {
    if (m < 1) throw std::invalid_argument("meta network needs at least one branch");
    branch.validate();
    common.validate();
    if (branch.input_dim() != arch.encoder_params() + 1)
      throw std::invalid_argument("branch input width must be encoder parameter count + 1");
    if (common.input_dim() != m * branch.output_dim())
      throw std::invalid_argument("common input width must be m * embedding width");
    if (common.output_dim() != arch.total_params())
      throw std::invalid_argument("common output width must be encoder + decoder parameter count");
  }

  /// The trunk without its first layer, or an empty spec when the trunk has
  /// a single layer.
  MlpSpec common_tail() const {
    MlpSpec t;
    if (common.layer_count() < 2) return t;
    t.dims.assign(common.dims.begin() + 1, common.dims.end());
    t.activations.assign(common.activations.begin() + 1, common.activations.end());
    return t;
  }

  std::size_t param_count() const { return m * branch.param_count() + common.param_count(); }

  bool operator==(const MetaSpec&) const = default;
};

struct MetaParams {
  std::vector<ParamVector> branches;  // W_1 .. W_m
  ParamVector common;                 // W_common

  std::size_t size() const {
    std::size_t n = common.size();
    for (const auto& b : branches) n += b.size();
    return n;
  }

  /// W_1, ..., W_m, W_common.
  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(size());
    for (const auto& b : branches) out.insert(out.end(), b.values.begin(), b.values.end());
    out.insert(out.end(), common.values.begin(), common.values.end());
    return out;
  }

  static MetaParams unflatten(const MetaSpec& spec, std::span<const double> flat) {
    if (flat.size() != spec.param_count()) throw std::invalid_argument("meta parameter length mismatch");
    MetaParams p;
    std::size_t off = 0;
    const std::size_t nb = spec.branch.param_count();
    for (std::size_t k = 0; k < spec.m; ++k, off += nb)
      p.branches.push_back({{flat.begin() + static_cast<std::ptrdiff_t>(off),
                             flat.begin() + static_cast<std::ptrdiff_t>(off + nb)},
                            spec.branch.fingerprint()});
    p.common = {{flat.begin() + static_cast<std::ptrdiff_t>(off), flat.end()}, spec.common.fingerprint()};
    return p;
  }

  void check(const MetaSpec& spec) const {
    if (branches.size() != spec.m) throw std::invalid_argument("branch count does not match MetaSpec");
    for (const auto& b : branches) check_params(spec.branch, b);
    check_params(spec.common, common);
  }

  bool operator==(const MetaParams&) const = default;
};

inline MetaParams meta_init(const MetaSpec& spec, std::uint64_t seed) {
  MetaParams p;
  for (std::size_t k = 0; k < spec.m; ++k)
    p.branches.push_back(mlp_init(spec.branch, derive_seed(seed, 0, k, Purpose::meta_init)));
  p.common = mlp_init(spec.common, derive_seed(seed, 0, spec.m, Purpose::meta_init));
  return p;
}

inline MetaParams meta_zeros(const MetaSpec& spec) {
  MetaParams p;
  for (std::size_t k = 0; k < spec.m; ++k)
    p.branches.push_back({std::vector<double>(spec.branch.param_count(), 0.0), spec.branch.fingerprint()});
  p.common = {std::vector<double>(spec.common.param_count(), 0.0), spec.common.fingerprint()};
  return p;
}

/// One (encoder parameters, normalized correlation) pair per branch, in
/// branch order. The spans must outlive the input.
struct RegressionInput {
  struct Source {
    std::span<const double> theta_E;
    double gamma = 0.0;
  };
  std::vector<Source> sources;
  std::string target_task;
};

struct Regressed {
  ParamVector theta_E;
  ParamVector theta_D;
};

namespace detail {

// Sum that depends only on the multiset of terms: terms are sorted first.
inline double order_free_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

struct MetaTrace {
  std::vector<ForwardCache> branches;
  std::vector<double> embeddings;  // m * embed, branch order
  Matrix hidden;                   // trunk layer-0 output (column)
  ForwardCache tail;
  std::vector<double> output;
};

inline MetaTrace meta_trace(const MetaSpec& spec, const MetaParams& params, const RegressionInput& input) {
  params.check(spec);
  if (input.sources.size() != spec.m) throw std::invalid_argument("regression input must have m sources");
  const std::size_t pe = spec.arch.encoder_params();
  const std::size_t e = spec.embed_dim();
  MetaTrace t;
  t.embeddings.resize(spec.m * e);
  Matrix x(static_cast<Eigen::Index>(pe + 1), 1);
  for (std::size_t k = 0; k < spec.m; ++k) {
    const auto& src = input.sources[k];
    if (src.theta_E.size() != pe) throw std::invalid_argument("source encoder length does not match arch");
    std::copy(src.theta_E.begin(), src.theta_E.end(), x.data());
    x(static_cast<Eigen::Index>(pe), 0) = src.gamma;
    t.branches.push_back(forward_batch(spec.branch, params.branches[k].span(), x));
    const auto& emb = t.branches.back().output();
    std::copy(emb.data(), emb.data() + e, t.embeddings.begin() + static_cast<std::ptrdiff_t>(k * e));
  }

  const std::size_t width = spec.common.dims[1];
  const std::size_t in = spec.common.dims[0];
  const double* w0 = params.common.values.data();
  const double* b0 = w0 + width * in;
  t.hidden.resize(static_cast<Eigen::Index>(width), 1);
  std::vector<double> terms(spec.m);
  for (std::size_t u = 0; u < width; ++u) {
    const double* row = w0 + u * in;
    for (std::size_t k = 0; k < spec.m; ++k) {
      double acc = 0.0;
      for (std::size_t c = 0; c < e; ++c) acc += row[k * e + c] * t.embeddings[k * e + c];
      terms[k] = acc;
    }
    double z = b0[u] + order_free_sum(terms);
    if (spec.common.activations[0] == Activation::tanh) z = std::tanh(z);
    t.hidden(static_cast<Eigen::Index>(u), 0) = z;
  }

  if (spec.common.layer_count() > 1) {
    const auto tail = spec.common_tail();
    const std::size_t off = spec.common.layer_offset(1);
    t.tail = forward_batch(tail, params.common.span().subspan(off), t.hidden);
    t.output = to_std(t.tail.output());
  } else {
    t.output = to_std(t.hidden);
  }
  return t;
}

}  // namespace detail

/// F(input; W): the regressed (theta_E, theta_D).
inline Regressed meta_forward(const MetaSpec& spec, const MetaParams& params, const RegressionInput& input) {
  const auto t = detail::meta_trace(spec, params, input);
  const auto pe = static_cast<std::ptrdiff_t>(spec.arch.encoder_params());
  Regressed r;
  r.theta_E = {{t.output.begin(), t.output.begin() + pe}, spec.arch.encoder.fingerprint()};
  r.theta_D = {{t.output.begin() + pe, t.output.end()}, spec.arch.decoder.fingerprint()};
  return r;
}

struct MetaLoss {
  double total = 0.0;
  double param_term = 0.0;  // ||F(.) - (theta*_E, theta*_D)||^2
  double data_term = 0.0;   // mean per-sample MSE of the regressed network on the batch
};

struct MetaLossAndGrad {
  MetaLoss loss;
  MetaParams grad;  // inactive branches hold empty vectors
};

/// Loss and gradient with respect to the branches flagged in `active` and
/// the trunk. An empty `active` means every branch.
inline MetaLossAndGrad meta_loss_and_grad(const MetaSpec& spec, const MetaParams& params,
                                          const RegressionInput& input, const ModelParams& target,
                                          std::span<const Sample> consistency_batch, double lambda,
                                          std::vector<bool> active = {}) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be non-negative");
  if (lambda > 0.0 && consistency_batch.empty())
    throw std::invalid_argument("consistency batch is empty while lambda > 0");
  if (target.theta_E.size() != spec.arch.encoder_params() || target.theta_D.size() != spec.arch.decoder_params())
    throw std::invalid_argument("target parameters do not match the data-network arch");
  if (active.empty()) active.assign(spec.m, true);
  if (active.size() != spec.m) throw std::invalid_argument("active mask must have m entries");

  const auto t = detail::meta_trace(spec, params, input);
  const std::size_t pe = spec.arch.encoder_params();
  const std::size_t total = spec.arch.total_params();

  MetaLossAndGrad r;
  std::vector<double> g_out(total);
  for (std::size_t n = 0; n < total; ++n) {
    const double ref = n < pe ? target.theta_E.values[n] : target.theta_D.values[n - pe];
    const double d = t.output[n] - ref;
    r.loss.param_term += d * d;
    g_out[n] = 2.0 * d;
  }
  if (!consistency_batch.empty()) {
    auto data = functional_loss_and_grad_raw(spec.arch.encoder, spec.arch.decoder, t.output, consistency_batch);
    r.loss.data_term = data.loss;
    for (std::size_t n = 0; n < total; ++n) g_out[n] += lambda * data.grad.values[n];
  }
  r.loss.total = r.loss.param_term + lambda * r.loss.data_term;

  r.grad.common = {std::vector<double>(spec.common.param_count(), 0.0), spec.common.fingerprint()};
  r.grad.branches.resize(spec.m);
  Matrix g_hidden;
  if (spec.common.layer_count() > 1) {
    const std::size_t off = spec.common.layer_offset(1);
    backward_batch(spec.common_tail(), params.common.span().subspan(off), t.tail, column(g_out),
                   r.grad.common.span().subspan(off), &g_hidden);
  } else {
    g_hidden = column(g_out);
  }

  const std::size_t width = spec.common.dims[1];
  const std::size_t in = spec.common.dims[0];
  const std::size_t e = spec.embed_dim();
  if (spec.common.activations[0] == Activation::tanh)
    g_hidden.array() *= (1.0 - t.hidden.array().square());
  double* gw0 = r.grad.common.values.data();
  double* gb0 = gw0 + width * in;
  const double* w0 = params.common.values.data();
  std::vector<double> g_emb(spec.m * e, 0.0);
  for (std::size_t u = 0; u < width; ++u) {
    const double d = g_hidden(static_cast<Eigen::Index>(u), 0);
    gb0[u] += d;
    for (std::size_t c = 0; c < in; ++c) {
      gw0[u * in + c] += d * t.embeddings[c];
      g_emb[c] += w0[u * in + c] * d;
    }
  }

  for (std::size_t k = 0; k < spec.m; ++k) {
    if (!active[k]) continue;
    r.grad.branches[k] = {std::vector<double>(spec.branch.param_count(), 0.0), spec.branch.fingerprint()};
    backward_batch(spec.branch, params.branches[k].span(), t.branches[k],
                   column(std::span<const double>(g_emb).subspan(k * e, e)), r.grad.branches[k].span());
  }
  return r;
}

/// Regression plus data-model consistency loss at fixed parameters.
inline MetaLoss meta_loss(const MetaSpec& spec, const MetaParams& params, const RegressionInput& input,
                          const ModelParams& target, std::span<const Sample> consistency_batch, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be non-negative");
  if (lambda > 0.0 && consistency_batch.empty())
    throw std::invalid_argument("consistency batch is empty while lambda > 0");
  const auto out = meta_forward(spec, params, input);
  MetaLoss l;
  for (std::size_t n = 0; n < out.theta_E.size(); ++n) {
    const double d = out.theta_E.values[n] - target.theta_E.values.at(n);
    l.param_term += d * d;
  }
  for (std::size_t n = 0; n < out.theta_D.size(); ++n) {
    const double d = out.theta_D.values[n] - target.theta_D.values.at(n);
    l.param_term += d * d;
  }
  if (!consistency_batch.empty())
    l.data_term = functional_loss_and_grad(spec.arch.encoder, spec.arch.decoder, concat(out.theta_E, out.theta_D),
                                           consistency_batch).loss;
  l.total = l.param_term + lambda * l.data_term;
  return l;
}

// ---------------------------------------------------------------------------
// Training

enum class TrainMode : std::uint8_t { self, transfer };

inline const char* to_string(TrainMode m) { return m == TrainMode::self ? "self" : "transfer"; }

struct MetaTrainConfig {
  double lambda = 0.1;
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 32;
  std::size_t epochs = 40;
  std::size_t consistency_batch = 16;
  std::size_t pool_size = 1024;
  bool average_inference = false;

  bool operator==(const MetaTrainConfig&) const = default;
};

struct MetaOptimizer {
  std::vector<OptimizerState> branches;
  OptimizerState common;

  static MetaOptimizer make(const MetaSpec& spec, const MetaTrainConfig& c) {
    MetaOptimizer o;
    for (std::size_t k = 0; k < spec.m; ++k)
      o.branches.push_back(OptimizerState::adam(spec.branch.param_count(), c.lr, c.beta1, c.beta2, c.eps));
    o.common = OptimizerState::adam(spec.common.param_count(), c.lr, c.beta1, c.beta2, c.eps);
    return o;
  }
};

/// One bank index: the target model of task i and the encoder of every known
/// task at the same index.
struct BankSample {
  const ModelParams* target = nullptr;
  std::vector<std::span<const double>> encoders;
};

inline BankSample bank_sample(std::span<const ParameterBank> banks, std::size_t task, std::size_t index) {
  BankSample s;
  s.target = &banks[task].models.at(index);
  for (const auto& b : banks) s.encoders.push_back(b.models.at(index).theta_E.span());
  return s;
}

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t index = 0;
  std::size_t task = 0;
  TrainMode mode = TrainMode::self;
  MetaLoss loss;
};

/// Builds the input seen in `mode` for target task i. Transfer mode replaces
/// branch i's input by (zeros, 0).
inline RegressionInput mode_input(const MetaSpec& spec, TrainMode mode, std::size_t i, const BankSample& sample,
                                  const Gamma& gamma, std::span<const double> zeros) {
  RegressionInput in;
  in.target_task = sample.target->task_id;
  for (std::size_t k = 0; k < spec.m; ++k) {
    if (mode == TrainMode::transfer && k == i)
      in.sources.push_back({zeros, 0.0});
    else
      in.sources.push_back({sample.encoders[k], gamma.at(k, i)});
  }
  return in;
}

/// One optimizer step. Self mode updates W_i and W_common; transfer mode
/// updates every W_j (j != i) and W_common. Untouched branches and their
/// optimizer states are not written.
inline StepRecord train_step(const MetaSpec& spec, MetaParams& params, MetaOptimizer& opt, TrainMode mode,
                             std::size_t i, const BankSample& sample, const Gamma& gamma,
                             std::span<const Sample> consistency_batch, const MetaTrainConfig& config) {
  if (i >= spec.m) throw std::invalid_argument("target task index out of range");
  if (sample.encoders.size() != spec.m || sample.target == nullptr)
    throw std::invalid_argument("bank sample must supply a target and m encoders");
  if (gamma.k < spec.m) throw std::invalid_argument("gamma is smaller than the known-task count");
  const std::vector<double> zeros(spec.arch.encoder_params(), 0.0);
  const auto input = mode_input(spec, mode, i, sample, gamma, zeros);
  std::vector<bool> active(spec.m, mode == TrainMode::transfer);
  active[i] = mode == TrainMode::self;

  auto lg = meta_loss_and_grad(spec, params, input, *sample.target, consistency_batch, config.lambda, active);
  if (!std::isfinite(lg.loss.total)) throw TrainingDiverged("meta loss is not finite");
  for (std::size_t k = 0; k < spec.m; ++k)
    if (active[k]) opt.branches[k].apply(params.branches[k].span(), lg.grad.branches[k].span());
  opt.common.apply(params.common.span(), lg.grad.common.span());
  StepRecord rec;
  rec.task = i;
  rec.mode = mode;
  rec.loss = lg.loss;
  return rec;
}

struct MetaTrainResult {
  MetaParams params;
  std::vector<StepRecord> history;
};

/// Per epoch, for each bank index and each known task in turn: one self step
/// then one transfer step. Consistency batches come from the known task's
/// sampling pool.
inline MetaTrainResult train_meta(std::span<const ParameterBank> banks, const Gamma& gamma, const WorldConfig& world,
                                  const MetaSpec& spec, const MetaTrainConfig& config, std::uint64_t seed) {
  spec.validate();
  if (banks.size() != spec.m) throw std::invalid_argument("need one bank per known task");
  const std::size_t p = banks.front().size();
  for (const auto& b : banks) {
    if (b.size() != p) throw std::invalid_argument("bank size mismatch");
    if (b.arch_fingerprint != spec.arch.fingerprint()) throw std::invalid_argument("bank arch mismatch");
  }
  if (p == 0) throw std::invalid_argument("banks are empty");

  std::vector<std::vector<Sample>> pools;
  for (std::size_t i = 0; i < spec.m; ++i) pools.push_back(task_pool(world, i, config.pool_size, world.master_seed));

  MetaTrainResult r;
  r.params = meta_init(spec, seed);
  auto opt = MetaOptimizer::make(spec, config);
  r.history.reserve(config.epochs * p * spec.m * 2);
  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch)
    for (std::size_t idx = 0; idx < p; ++idx)
      for (std::size_t i = 0; i < spec.m; ++i) {
        const auto sample = bank_sample(banks, i, idx);
        for (auto mode : {TrainMode::self, TrainMode::transfer}) {
          std::vector<Sample> batch;
          if (config.consistency_batch > 0)
            batch = sample_subset(pools[i], config.consistency_batch,
                                  derive_seed(seed, i + 1, step, Purpose::consistency));
          auto rec = train_step(spec, r.params, opt, mode, i, sample, gamma, batch, config);
          rec.epoch = epoch;
          rec.index = idx;
          r.history.push_back(rec);
          ++step;
        }
      }
  return r;
}

// ---------------------------------------------------------------------------
// Inference

struct RegressOptions {
  std::size_t bank_index = 0;
  bool average = false;  // average the regressed vectors over every bank index
};

/// Zero-shot parameters for world task j from one bank model per known task
/// and the correlations gamma(k, j). No branch is masked.
inline ModelParams regress_zero_shot(const MetaSpec& spec, const MetaParams& params,
                                     std::span<const ParameterBank> banks, const Gamma& gamma,
                                     const WorldConfig& world, std::size_t j, const RegressOptions& options = {}) {
  if (j >= world.task_count()) throw std::invalid_argument("task index out of range");
  if (!world.tasks[j].zero_shot)
    throw std::invalid_argument("task '" + world.tasks[j].id + "' is a known task; regression is for zero-shot tasks");
  if (banks.size() != spec.m) throw std::invalid_argument("need one bank per known task");
  if (gamma.k != world.task_count()) throw std::invalid_argument("gamma does not match world");

  std::vector<std::size_t> indices;
  if (options.average)
    for (std::size_t k = 0; k < banks.front().size(); ++k) indices.push_back(k);
  else
    indices.push_back(options.bank_index);

  std::vector<double> sum(spec.arch.total_params(), 0.0);
  for (std::size_t idx : indices) {
    RegressionInput in;
    in.target_task = world.tasks[j].id;
    for (std::size_t k = 0; k < spec.m; ++k)
      in.sources.push_back({banks[k].models.at(idx).theta_E.span(), gamma.at(k, j)});
    const auto out = meta_forward(spec, params, in);
    const std::size_t pe = out.theta_E.size();
    for (std::size_t n = 0; n < pe; ++n) sum[n] += out.theta_E.values[n];
    for (std::size_t n = 0; n < out.theta_D.size(); ++n) sum[pe + n] += out.theta_D.values[n];
  }
  if (indices.size() > 1)
    for (auto& v : sum) v /= static_cast<double>(indices.size());
  ModelParams m = split_params(spec.arch, sum, world.tasks[j].id);
  m.train_seed = 0;
  m.final_loss = 0.0;
  return m;
}

/// Trains a fresh decoder on known task `target` under a frozen encoder.
inline ModelParams transfer_decoder(const ParamVector& frozen_encoder, std::size_t target, const WorldConfig& world,
                                    const ArchConfig& arch, const BankConfig& budget, std::uint64_t seed) {
  check_params(arch.encoder, frozen_encoder);
  const auto& task = world.tasks.at(target);
  if (task.zero_shot) throw std::invalid_argument("transfer target must be a known task");
  const auto pool = task_pool(world, target, budget.pool_size, world.master_seed);
  const auto subset = sample_subset(pool, budget.l, derive_seed(seed, target + 1, 0, Purpose::subset));
  auto combined = concat(frozen_encoder, mlp_init(arch.decoder, derive_seed(seed, target + 1, 0, Purpose::transfer)));
  const auto trace = fit_encoder_decoder(arch, combined.values, subset, budget.hyper,
                                         derive_seed(seed, target + 1, 0, Purpose::shuffle), true);
  ModelParams m = split_params(arch, combined.values, task.id);
  m.train_seed = seed;
  m.final_loss = trace.empty() ? 0.0 : trace.back();
  return m;
}

}  // namespace ttnet

#endif  // TTNET_META_NET_HPP_
