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

// Latent task basis: embed task parameter vectors with a parameter
// autoencoder, factorize the task matrix W = L S with sparse codes S, and
// rank source tasks by how many basis coefficients they share with a
// zero-shot task.

#ifndef TTNET_TASK_BASIS_HPP_
#define TTNET_TASK_BASIS_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttnet/base_learner.hpp"
#include "ttnet/nn_core.hpp"
#include "ttnet/task_world.hpp"

namespace ttnet {

/// Desk dimensions, and the full-scale dimensions r = 100, b = 8.
inline constexpr std::size_t kEmbedDim = 16;
inline constexpr std::size_t kBasisCount = 4;
inline constexpr std::size_t kFullScaleEmbedDim = 100;
inline constexpr std::size_t kFullScaleBasisCount = 8;

struct EmbeddingSpec {
  ArchConfig data_arch;
  MlpSpec encoder;  // [P_E + P_D, hidden, r]
  MlpSpec decoder;  // [r, hidden, P_E + P_D]
  double lambda = 0.1;
  double lr = 1e-3;
  std::size_t epochs = 150;
  std::size_t consistency_batch = 16;
  std::size_t pool_size = 512;

  static EmbeddingSpec make(const ArchConfig& arch, std::size_t r = kEmbedDim, std::size_t hidden = 64) {
    EmbeddingSpec s;
    s.data_arch = arch;
    const std::size_t p = arch.total_params();
    s.encoder = MlpSpec::make({p, hidden, r});
    s.decoder = MlpSpec::make({r, hidden, p});
    return s;
  }

  std::size_t dim() const { return encoder.output_dim(); }

  void validate() const {
    encoder.validate();
    decoder.validate();
    if (encoder.input_dim() != data_arch.total_params() || decoder.output_dim() != data_arch.total_params())
      throw std::invalid_argument("embedding input width must equal P_E + P_D");
    if (encoder.output_dim() != decoder.input_dim()) throw std::invalid_argument("embedding code width mismatch");
  }
};

struct ParamEmbedding {
  EmbeddingSpec spec;
  ParamVector encoder;
  ParamVector decoder;
  std::vector<double> loss_trace;  // [0] at initialization, then one entry per epoch
};

namespace detail {

struct EmbedStep {
  double loss = 0.0;
  std::vector<double> grad;  // encoder then decoder
};

// Reconstruction MSE over coordinates plus lambda times the data loss of the
// reconstructed network (when a batch is supplied).
inline EmbedStep embed_loss_and_grad(const EmbeddingSpec& spec, std::span<const double> enc,
                                     std::span<const double> dec, std::span<const double> theta,
                                     std::span<const Sample> batch) {
  const auto ce = forward_batch(spec.encoder, enc, column(theta));
  const auto cd = forward_batch(spec.decoder, dec, ce.output());
  const Matrix diff = cd.output() - column(theta);
  const double n = static_cast<double>(theta.size());
  EmbedStep s;
  s.loss = diff.squaredNorm() / n;
  Matrix g_rec = diff * (2.0 / n);
  if (!batch.empty()) {
    const auto rec = to_std(cd.output());
    auto data = functional_loss_and_grad_raw(spec.data_arch.encoder, spec.data_arch.decoder, rec, batch);
    s.loss += spec.lambda * data.loss;
    g_rec += spec.lambda * column(data.grad.values);
  }
  s.grad.assign(enc.size() + dec.size(), 0.0);
  std::span<double> g(s.grad);
  Matrix g_code;
  backward_batch(spec.decoder, dec, cd, std::move(g_rec), g.subspan(enc.size()), &g_code);
  backward_batch(spec.encoder, enc, ce, std::move(g_code), g.subspan(0, enc.size()));
  return s;
}

}  // namespace detail

/// Trains the parameter autoencoder on the flattened (theta_E, theta_D) of
/// every model. Models of known tasks also pay the data-consistency term on
/// their own task's data; zero-shot models contribute reconstruction only.
inline ParamEmbedding train_param_embedding(std::span<const ModelParams> models, const EmbeddingSpec& spec,
                                            const WorldConfig& world, std::uint64_t seed) {
  spec.validate();
  {
    std::vector<std::string> ids;
    for (const auto& m : models) ids.push_back(m.task_id);
    std::sort(ids.begin(), ids.end());
    if (std::unique(ids.begin(), ids.end()) - ids.begin() < 2)
      throw std::invalid_argument("parameter embedding needs models of at least two tasks");
  }
  std::vector<std::vector<double>> thetas;
  std::vector<std::optional<std::size_t>> task_of;
  std::map<std::size_t, std::vector<Sample>> pools;
  for (const auto& m : models) {
    auto c = m.combined();
    if (c.size() != spec.data_arch.total_params()) throw std::invalid_argument("model does not match embedding arch");
    thetas.push_back(std::move(c.values));
    const std::size_t t = world.task_index(m.task_id);
    if (world.tasks[t].zero_shot || spec.lambda == 0.0 || spec.consistency_batch == 0) {
      task_of.emplace_back();
    } else {
      task_of.emplace_back(t);
      if (!pools.contains(t)) pools[t] = task_pool(world, t, spec.pool_size, world.master_seed);
    }
  }

  ParamEmbedding e;
  e.spec = spec;
  e.encoder = mlp_init(spec.encoder, derive_seed(seed, 0, 0, Purpose::embedding));
  e.decoder = mlp_init(spec.decoder, derive_seed(seed, 0, 1, Purpose::embedding));
  std::vector<double> params = concat(e.encoder, e.decoder).values;
  const std::size_t ne = e.encoder.size();
  auto enc = [&] { return std::span<const double>(params).subspan(0, ne); };
  auto dec = [&] { return std::span<const double>(params).subspan(ne); };
  OptimizerState opt = OptimizerState::adam(params.size(), spec.lr, 0.5);

  std::uint64_t step = 0;
  auto batch_for = [&](std::size_t v) {
    std::vector<Sample> b;
    if (task_of[v])
      b = sample_subset(pools[*task_of[v]], spec.consistency_batch,
                        derive_seed(seed, *task_of[v] + 1, step, Purpose::consistency));
    return b;
  };

  double init = 0.0;
  for (std::size_t v = 0; v < thetas.size(); ++v)
    init += detail::embed_loss_and_grad(spec, enc(), dec(), thetas[v], batch_for(v)).loss;
  e.loss_trace.push_back(init / static_cast<double>(thetas.size()));

  Rng rng(derive_seed(seed, 0, 2, Purpose::embedding));
  std::vector<std::size_t> order(thetas.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    detail::fisher_yates(order, rng);
    double total = 0.0;
    for (std::size_t v : order) {
      ++step;
      auto s = detail::embed_loss_and_grad(spec, enc(), dec(), thetas[v], batch_for(v));
      if (!std::isfinite(s.loss)) throw TrainingDiverged("parameter embedding diverged");
      total += s.loss;
      opt.apply(params, s.grad);
    }
    e.loss_trace.push_back(total / static_cast<double>(thetas.size()));
  }
  e.encoder.values.assign(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(ne));
  e.decoder.values.assign(params.begin() + static_cast<std::ptrdiff_t>(ne), params.end());
  return e;
}

/// Encoder half of the parameter autoencoder.
inline std::vector<double> embed_params(const ParamEmbedding& embedding, const ModelParams& model) {
  const auto c = model.combined();
  if (c.size() != embedding.spec.encoder.input_dim()) throw std::invalid_argument("model does not match embedding");
  return to_std(forward_batch(embedding.spec.encoder, embedding.encoder.span(), column(c.values)).output());
}

// ---------------------------------------------------------------------------
// Factorization

struct TaskMatrix {
  Eigen::MatrixXd w;  // r x K, column k embeds task k
  std::vector<std::string> task_ids;
};

struct Factorization {
  Eigen::MatrixXd l;  // r x b, unit-norm columns
  Eigen::MatrixXd s;  // b x K
  std::vector<double> reconstruction_trace;  // ||W - L S||_F, [0] after initialization
  std::vector<double> objective_trace;       // 0.5 ||W - L S||_F^2 + l1 ||S||_1
};

namespace detail {

inline double factor_objective(const Eigen::MatrixXd& w, const Eigen::MatrixXd& l, const Eigen::MatrixXd& s,
                               double l1) {
  return 0.5 * (w - l * s).squaredNorm() + l1 * s.cwiseAbs().sum();
}

// Exact coordinate minimization of 0.5 ||w_k - L s_k||^2 + l1 ||s_k||_1 for
// every column, `sweeps` cyclic passes.
inline void sparse_code_step(const Eigen::MatrixXd& w, const Eigen::MatrixXd& l, Eigen::MatrixXd& s, double l1,
                             int sweeps) {
  const Eigen::MatrixXd gram = l.transpose() * l;
  const Eigen::MatrixXd corr = l.transpose() * w;
  for (Eigen::Index k = 0; k < w.cols(); ++k)
    for (int sweep = 0; sweep < sweeps; ++sweep)
      for (Eigen::Index b = 0; b < l.cols(); ++b) {
        const double a = gram(b, b);
        if (a <= 0.0) {
          s(b, k) = 0.0;
          continue;
        }
        const double rho = corr(b, k) - gram.row(b).dot(s.col(k)) + a * s(b, k);
        const double v = std::abs(rho) > l1 ? (rho - std::copysign(l1, rho)) / a : 0.0;
        s(b, k) = v;
      }
}

// Least-squares L given S; a 1e-8 ridge is added when S S^T is singular.
inline Eigen::MatrixXd basis_step(const Eigen::MatrixXd& w, const Eigen::MatrixXd& s) {
  Eigen::MatrixXd gram = s * s.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double top = std::max(eig.eigenvalues().maxCoeff(), 0.0);
  if (eig.eigenvalues().minCoeff() <= 1e-12 * std::max(top, 1e-300))
    gram += 1e-8 * Eigen::MatrixXd::Identity(gram.rows(), gram.cols());
  return gram.ldlt().solve(s * w.transpose()).transpose();
}

// Rescales L to unit columns and S rows inversely. Columns with zero norm
// keep the previous unit column; their S row is zero.
inline void renormalize(Eigen::MatrixXd& l, Eigen::MatrixXd& s, const Eigen::MatrixXd& previous_l) {
  for (Eigen::Index b = 0; b < l.cols(); ++b) {
    const double n = l.col(b).norm();
    if (n > 1e-300) {
      l.col(b) /= n;
      s.row(b) *= n;
    } else {
      l.col(b) = previous_l.col(b);
      s.row(b).setZero();
    }
  }
}

}  // namespace detail

/// Alternating minimization of 0.5 ||W - L S||^2 + l1 ||S||_1 from a rank-b
/// truncated SVD. Each iteration solves L by least squares, renormalizes L's
/// columns, and re-codes S by L1 coordinate descent. If renormalization would
/// raise the objective, that iteration keeps the unnormalized L so the
/// objective trace never increases.
inline Factorization factorize_task_matrix(const TaskMatrix& tm, std::size_t b, std::size_t iters, double l1) {
  const auto& w = tm.w;
  const auto r = static_cast<std::size_t>(w.rows()), k = static_cast<std::size_t>(w.cols());
  if (b < 1 || b > std::min(r, k)) throw std::invalid_argument("basis count must be in [1, min(r, K)]");
  if (l1 < 0.0) throw std::invalid_argument("l1 weight must be non-negative");
  const auto bi = static_cast<Eigen::Index>(b);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Factorization f;
  f.l = svd.matrixU().leftCols(bi);
  f.s = svd.singularValues().head(bi).asDiagonal() * svd.matrixV().leftCols(bi).transpose();
  constexpr int kSweeps = 25;
  if (l1 > 0.0) detail::sparse_code_step(w, f.l, f.s, l1, kSweeps);
  f.reconstruction_trace.push_back((w - f.l * f.s).norm());
  f.objective_trace.push_back(detail::factor_objective(w, f.l, f.s, l1));

  for (std::size_t it = 0; it < iters; ++it) {
    const double before = f.objective_trace.back();
    const Eigen::MatrixXd l_ls = detail::basis_step(w, f.s);

    Eigen::MatrixXd l_norm = l_ls, s_norm = f.s;
    detail::renormalize(l_norm, s_norm, f.l);
    detail::sparse_code_step(w, l_norm, s_norm, l1, kSweeps);
    double obj = detail::factor_objective(w, l_norm, s_norm, l1);

    if (obj <= before) {
      f.l = std::move(l_norm);
      f.s = std::move(s_norm);
    } else {
      Eigen::MatrixXd s_raw = f.s;
      detail::sparse_code_step(w, l_ls, s_raw, l1, kSweeps);
      const double obj_raw = detail::factor_objective(w, l_ls, s_raw, l1);
      if (obj_raw <= before) {
        f.l = l_ls;
        f.s = std::move(s_raw);
        obj = obj_raw;
      } else {
        obj = before;  // neither candidate improves; keep the current factors
      }
    }
    f.reconstruction_trace.push_back((w - f.l * f.s).norm());
    f.objective_trace.push_back(obj);
  }
  return f;
}

/// Number of basis coefficients where the two columns of S differ by at most
/// eps; eps defaults to 0.1 * (max(S) - min(S)).
inline std::size_t source_importance(const Eigen::MatrixXd& s, std::size_t source, std::size_t zero,
                                     std::optional<double> threshold = std::nullopt) {
  if (source >= static_cast<std::size_t>(s.cols()) || zero >= static_cast<std::size_t>(s.cols()))
    throw std::invalid_argument("column index out of range");
  const double eps = threshold.value_or(0.1 * (s.maxCoeff() - s.minCoeff()));
  if (!(eps > 0.0)) throw std::invalid_argument("similarity threshold must be positive");
  std::size_t count = 0;
  for (Eigen::Index b = 0; b < s.rows(); ++b)
    if (std::abs(s(b, static_cast<Eigen::Index>(source)) - s(b, static_cast<Eigen::Index>(zero))) <= eps) ++count;
  return count;
}

struct ImportanceRow {
  std::string zero_task;
  std::string source_task;
  std::size_t shared_basis_count = 0;
  std::size_t rank = 0;  // 1 + number of sources with a strictly larger count
};

/// Importance of every known source for every zero-shot task of the world,
/// using S columns in world task order.
inline std::vector<ImportanceRow> importance_report(const WorldConfig& world, const Factorization& f) {
  std::vector<ImportanceRow> rows;
  const std::size_t m = world.known_count();
  for (std::size_t z = m; z < world.task_count(); ++z) {
    std::vector<std::size_t> counts;
    for (std::size_t src = 0; src < m; ++src) counts.push_back(source_importance(f.s, src, z));
    for (std::size_t src = 0; src < m; ++src) {
      ImportanceRow row{world.tasks[z].id, world.tasks[src].id, counts[src], 1};
      for (std::size_t other : counts) row.rank += other > counts[src] ? 1 : 0;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace ttnet

#endif  // TTNET_TASK_BASIS_HPP_
