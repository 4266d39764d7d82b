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

// Banks of independently trained encoder-decoder models per known task.

#ifndef TTNET_BASE_LEARNER_HPP_
#define TTNET_BASE_LEARNER_HPP_

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttnet/nn_core.hpp"
#include "ttnet/random.hpp"
#include "ttnet/task_world.hpp"

namespace ttnet {

struct ArchConfig {
  MlpSpec encoder;
  MlpSpec decoder;

  std::size_t encoder_params() const { return encoder.param_count(); }
  std::size_t decoder_params() const { return decoder.param_count(); }
  std::size_t total_params() const { return encoder_params() + decoder_params(); }

  std::uint64_t fingerprint() const {
    return combine_fingerprints(encoder.fingerprint(), decoder.fingerprint());
  }

  void validate(std::size_t data_dim) const {
    encoder.validate();
    decoder.validate();
    if (encoder.output_dim() != decoder.input_dim())
      throw std::invalid_argument("encoder output width must equal decoder input width");
    if (encoder.input_dim() != data_dim || decoder.output_dim() != data_dim)
      throw std::invalid_argument("encoder input and decoder output must equal the patch size");
  }

  bool operator==(const ArchConfig&) const = default;
};

/// [d, 48, 16] encoder and [16, 48, d] decoder, tanh hidden, identity output.
inline ArchConfig default_arch(std::size_t data_dim = 64, std::size_t hidden = 48,
                               std::size_t code = 16) {
  return {MlpSpec::make({data_dim, hidden, code}), MlpSpec::make({code, hidden, data_dim})};
}

struct ModelParams {
  ParamVector theta_E;
  ParamVector theta_D;
  std::string task_id;
  std::uint64_t train_seed = 0;
  double final_loss = 0.0;

  ParamVector combined() const { return concat(theta_E, theta_D); }

  bool operator==(const ModelParams&) const = default;
};

inline ModelParams split_params(const ArchConfig& arch, std::span<const double> combined,
                                std::string task_id) {
  if (combined.size() != arch.total_params()) throw std::invalid_argument("combined length mismatch");
  ModelParams m;
  const auto pe = arch.encoder_params();
  m.theta_E.values.assign(combined.begin(), combined.begin() + static_cast<std::ptrdiff_t>(pe));
  m.theta_E.spec_fingerprint = arch.encoder.fingerprint();
  m.theta_D.values.assign(combined.begin() + static_cast<std::ptrdiff_t>(pe), combined.end());
  m.theta_D.spec_fingerprint = arch.decoder.fingerprint();
  m.task_id = std::move(task_id);
  return m;
}

struct ParameterBank {
  std::string task_id;
  std::uint64_t arch_fingerprint = 0;
  std::vector<ModelParams> models;

  std::size_t size() const { return models.size(); }

  bool operator==(const ParameterBank&) const = default;
};

struct TrainHyper {
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;

  bool operator==(const TrainHyper&) const = default;
};

struct BankConfig {
  std::size_t p = 32;
  std::size_t l = 512;
  std::size_t pool_size = 4096;
  TrainHyper hyper;

  bool operator==(const BankConfig&) const = default;
};

/// Loss above which a data-network run counts as diverged.
inline constexpr double kDivergenceGuard = 10.0;

/// l draws with replacement.
inline std::vector<Sample> sample_subset(std::span<const Sample> dataset, std::size_t l,
                                         std::uint64_t seed) {
  if (dataset.empty()) throw std::invalid_argument("cannot sample from an empty dataset");
  if (l < 1) throw std::invalid_argument("subset size must be >= 1");
  Rng rng(seed);
  std::vector<Sample> out;
  out.reserve(l);
  for (std::size_t i = 0; i < l; ++i) out.push_back(dataset[rng.index(dataset.size())]);
  return out;
}

/// The sampling pool of task `task_index`.
inline std::vector<Sample> task_pool(const WorldConfig& world, std::size_t task_index,
                                     std::size_t pool_size, std::uint64_t master_seed) {
  return make_dataset(world, world.tasks.at(task_index), pool_size,
                      derive_seed(master_seed, task_index + 1, 0, Purpose::pool));
}

/// Fresh samples of a task that never overlap a pool draw.
inline std::vector<Sample> task_test_set(const WorldConfig& world, std::size_t task_index,
                                         std::size_t n, std::uint64_t seed) {
  return make_dataset(world, world.tasks.at(task_index), n,
                      derive_seed(seed, task_index + 1, 0, Purpose::test));
}

namespace detail {

inline void fisher_yates(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
}

}  // namespace detail

/// Minibatch Adam on mean per-sample MSE of decoder(encoder(x)). With
/// `freeze_encoder` the encoder block of `combined` is never written. Returns
/// the per-epoch mean loss trace.
inline std::vector<double> fit_encoder_decoder(const ArchConfig& arch, std::vector<double>& combined,
                                               std::span<const Sample> data, const TrainHyper& hyper,
                                               std::uint64_t shuffle_seed, bool freeze_encoder = false) {
  if (data.empty()) throw std::invalid_argument("empty training set");
  if (hyper.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  const std::size_t pe = arch.encoder_params(), pd = arch.decoder_params();
  const std::size_t first = freeze_encoder ? pe : 0;
  OptimizerState opt = OptimizerState::adam(pe + pd - first, hyper.lr, hyper.beta1, hyper.beta2, hyper.eps);
  Rng rng(shuffle_seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Sample> batch;
  std::vector<double> trace;
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    detail::fisher_yates(order, rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t end = std::min(order.size(), start + hyper.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(data[order[k]]);
      auto lg = functional_loss_and_grad_raw(arch.encoder, arch.decoder, combined, batch);
      if (!std::isfinite(lg.loss) || lg.loss > kDivergenceGuard)
        throw TrainingDiverged("data network diverged at epoch " + std::to_string(epoch) +
                               " (batch loss " + std::to_string(lg.loss) + ")");
      total += lg.loss * static_cast<double>(end - start);
      opt.apply(std::span<double>(combined).subspan(first),
                std::span<const double>(lg.grad.values).subspan(first));
    }
    trace.push_back(total / static_cast<double>(data.size()));
  }
  return trace;
}

struct TrainSeeds {
  std::uint64_t init = 0;
  std::uint64_t subset = 0;
  std::uint64_t shuffle = 0;
};

/// Trains one encoder-decoder on an l-sample bootstrap of `pool`.
inline ModelParams train_task_model(const WorldConfig& world, const TaskSpec& task,
                                    const ArchConfig& arch, std::span<const Sample> pool,
                                    std::size_t l, const TrainHyper& hyper, const TrainSeeds& seeds,
                                    std::vector<double>* loss_trace = nullptr) {
  arch.validate(world.data_dim());
  const auto subset = sample_subset(pool, l, seeds.subset);
  auto combined = concat(mlp_init(arch.encoder, seeds.init), mlp_init(arch.decoder, splitmix64(seeds.init)));
  auto trace = fit_encoder_decoder(arch, combined.values, subset, hyper, seeds.shuffle);
  ModelParams m = split_params(arch, combined.values, task.id);
  m.train_seed = seeds.subset;
  m.final_loss = trace.empty() ? 0.0 : trace.back();
  if (loss_trace != nullptr) *loss_trace = std::move(trace);
  return m;
}

/// Single-seed convenience form: all three streams derive from `seed`.
inline ModelParams train_task_model(const WorldConfig& world, const TaskSpec& task,
                                    const ArchConfig& arch, std::span<const Sample> pool,
                                    std::size_t l, const TrainHyper& hyper, std::uint64_t seed,
                                    std::vector<double>* loss_trace = nullptr) {
  const TrainSeeds seeds{derive_seed(seed, 0, 0, Purpose::init), derive_seed(seed, 0, 0, Purpose::subset),
                         derive_seed(seed, 0, 0, Purpose::shuffle)};
  return train_task_model(world, task, arch, pool, l, hyper, seeds, loss_trace);
}

/// Seeds of bank model `index` for task `task_index`. The init stream uses
/// task slot 0, so model k of every task starts from the same point; subset
/// and shuffle streams are task specific.
inline TrainSeeds bank_seeds(std::uint64_t master_seed, std::size_t task_index, std::size_t index) {
  return {derive_seed(master_seed, 0, index, Purpose::init),
          derive_seed(master_seed, task_index + 1, index, Purpose::subset),
          derive_seed(master_seed, task_index + 1, index, Purpose::shuffle)};
}

inline ParameterBank build_bank(const WorldConfig& world, std::size_t task_index, const ArchConfig& arch,
                                const BankConfig& config, std::uint64_t master_seed) {
  if (config.p < 1) throw std::invalid_argument("bank size p must be >= 1");
  const auto& task = world.tasks.at(task_index);
  if (task.zero_shot) throw std::invalid_argument("cannot build a bank for zero-shot task '" + task.id + "'");
  const auto pool = task_pool(world, task_index, config.pool_size, master_seed);
  ParameterBank bank;
  bank.task_id = task.id;
  bank.arch_fingerprint = arch.fingerprint();
  bank.models.reserve(config.p);
  for (std::size_t k = 0; k < config.p; ++k)
    bank.models.push_back(train_task_model(world, task, arch, pool, config.l, config.hyper,
                                           bank_seeds(master_seed, task_index, k)));
  return bank;
}

/// decoder(encoder(x)) for every sample, one column per sample.
inline Matrix predict(const ArchConfig& arch, std::span<const double> theta_E,
                      std::span<const double> theta_D, std::span<const Sample> data) {
  auto [x, y] = stack_batch(data, arch.encoder.input_dim(), arch.decoder.output_dim());
  const auto code = forward_batch(arch.encoder, theta_E, std::move(x));
  return forward_batch(arch.decoder, theta_D, code.output()).output();
}

/// Mean per-sample MSE of a model on a dataset.
inline double model_mse(const ArchConfig& arch, const ModelParams& model, std::span<const Sample> data) {
  if (data.empty()) throw std::invalid_argument("empty dataset");
  const Matrix pred = predict(arch, model.theta_E.span(), model.theta_D.span(), data);
  auto [x, y] = stack_batch(data, arch.encoder.input_dim(), arch.decoder.output_dim());
  return per_sample_mse(pred, y).mean();
}

}  // namespace ttnet

#endif  // TTNET_BASE_LEARNER_HPP_
