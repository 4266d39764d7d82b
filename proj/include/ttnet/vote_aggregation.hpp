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

// Dawid-Skene aggregation of annotator votes over flattened task pairs.
//
// Classes are indexed in the fixed label order (-1, 0, +1, +2, +3). Missing
// votes (kNoVote) contribute nothing to any count or likelihood term.

#ifndef TTNET_VOTE_AGGREGATION_HPP_
#define TTNET_VOTE_AGGREGATION_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "ttnet/task_world.hpp"

namespace ttnet {

inline constexpr std::size_t kClassCount = 5;
inline constexpr double kConfusionFloor = 1e-12;

/// c[m][l][g] = P(annotator m reports g | true class l), stored flat.
struct ConfusionTensor {
  std::size_t annotators = 0;
  std::size_t classes = kClassCount;
  std::vector<double> values;

  double at(std::size_t m, std::size_t l, std::size_t g) const {
    return values[(m * classes + l) * classes + g];
  }
  double& at(std::size_t m, std::size_t l, std::size_t g) { return values[(m * classes + l) * classes + g]; }
};

/// N x classes row-major class probabilities.
struct LabelPosterior {
  std::size_t items = 0;
  std::size_t classes = kClassCount;
  std::vector<double> values;

  double at(std::size_t j, std::size_t l) const { return values[j * classes + l]; }
  double& at(std::size_t j, std::size_t l) { return values[j * classes + l]; }
};

struct DsInit {
  LabelPosterior posterior;
  std::vector<double> prior;
};

/// Posterior rows are per-item vote frequencies; the prior is the global
/// vote frequency.
inline DsInit ds_initialize(const VoteTable& votes, std::size_t classes = kClassCount) {
  votes.validate();
  DsInit out;
  out.posterior.items = votes.items;
  out.posterior.classes = classes;
  out.posterior.values.assign(votes.items * classes, 0.0);
  out.prior.assign(classes, 0.0);
  double global = 0.0;
  for (std::size_t j = 0; j < votes.items; ++j) {
    double count = 0.0;
    for (std::size_t m = 0; m < votes.annotators; ++m) {
      const int v = votes.at(m, j);
      if (v == kNoVote) continue;
      out.posterior.at(j, static_cast<std::size_t>(label_to_class(v))) += 1.0;
      count += 1.0;
    }
    if (count == 0.0) throw std::invalid_argument("item " + std::to_string(j) + " has no votes");
    for (std::size_t l = 0; l < classes; ++l) {
      out.prior[l] += out.posterior.at(j, l);
      out.posterior.at(j, l) /= count;
    }
    global += count;
  }
  for (auto& p : out.prior) p /= global;
  return out;
}

/// M step: posterior-weighted vote counts, row-normalized; rows with no mass
/// fall back to uniform.
inline ConfusionTensor ds_update_confusion(const LabelPosterior& posterior, const VoteTable& votes) {
  if (posterior.items != votes.items) throw std::invalid_argument("posterior/vote item count mismatch");
  const std::size_t k = posterior.classes;
  ConfusionTensor c;
  c.annotators = votes.annotators;
  c.classes = k;
  c.values.assign(votes.annotators * k * k, 0.0);
  for (std::size_t m = 0; m < votes.annotators; ++m) {
    for (std::size_t j = 0; j < votes.items; ++j) {
      const int v = votes.at(m, j);
      if (v == kNoVote) continue;
      const auto g = static_cast<std::size_t>(label_to_class(v));
      for (std::size_t l = 0; l < k; ++l) c.at(m, l, g) += posterior.at(j, l);
    }
    for (std::size_t l = 0; l < k; ++l) {
      double row = 0.0;
      for (std::size_t g = 0; g < k; ++g) row += c.at(m, l, g);
      for (std::size_t g = 0; g < k; ++g)
        c.at(m, l, g) = row > 0.0 ? c.at(m, l, g) / row : 1.0 / static_cast<double>(k);
    }
  }
  return c;
}

/// Class prior re-estimated as the mean posterior.
inline std::vector<double> ds_update_prior(const LabelPosterior& posterior) {
  std::vector<double> prior(posterior.classes, 0.0);
  for (std::size_t j = 0; j < posterior.items; ++j)
    for (std::size_t l = 0; l < posterior.classes; ++l) prior[l] += posterior.at(j, l);
  for (auto& p : prior) p /= static_cast<double>(posterior.items);
  return prior;
}

namespace detail {

// log prior_l + sum_m log c[m][l][vote] for every class of item j.
inline void item_log_scores(const ConfusionTensor& c, const VoteTable& votes, std::span<const double> prior,
                            std::size_t j, std::vector<double>& scores) {
  const std::size_t k = c.classes;
  scores.assign(k, 0.0);
  for (std::size_t l = 0; l < k; ++l) scores[l] = std::log(std::max(prior[l], kConfusionFloor));
  for (std::size_t m = 0; m < votes.annotators; ++m) {
    const int v = votes.at(m, j);
    if (v == kNoVote) continue;
    const auto g = static_cast<std::size_t>(label_to_class(v));
    for (std::size_t l = 0; l < k; ++l) scores[l] += std::log(std::max(c.at(m, l, g), kConfusionFloor));
  }
}

inline double log_sum_exp(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace detail

struct PosteriorUpdate {
  LabelPosterior posterior;
  double log_likelihood = 0.0;  // marginal log-likelihood at (confusion, prior)
};

/// E step in log space with a 1e-12 floor on confusion entries and priors.
inline PosteriorUpdate ds_update_posterior_with_loglik(const ConfusionTensor& confusion, const VoteTable& votes,
                                                       std::span<const double> prior) {
  if (confusion.annotators != votes.annotators) throw std::invalid_argument("annotator count mismatch");
  if (prior.size() != confusion.classes) throw std::invalid_argument("prior length mismatch");
  for (double v : confusion.values)
    if (v < 0.0) throw std::invalid_argument("negative confusion entry");
  PosteriorUpdate out;
  out.posterior.items = votes.items;
  out.posterior.classes = confusion.classes;
  out.posterior.values.assign(votes.items * confusion.classes, 0.0);
  std::vector<double> scores;
  for (std::size_t j = 0; j < votes.items; ++j) {
    detail::item_log_scores(confusion, votes, prior, j, scores);
    const double lse = detail::log_sum_exp(scores);
    out.log_likelihood += lse;
    for (std::size_t l = 0; l < confusion.classes; ++l) out.posterior.at(j, l) = std::exp(scores[l] - lse);
  }
  return out;
}

inline LabelPosterior ds_update_posterior(const ConfusionTensor& confusion, const VoteTable& votes,
                                          std::span<const double> prior) {
  return ds_update_posterior_with_loglik(confusion, votes, prior).posterior;
}

/// Winner-takes-all; ties go to the smaller class index.
inline std::vector<int> ds_decode(const LabelPosterior& posterior) {
  std::vector<int> labels(posterior.items);
  for (std::size_t j = 0; j < posterior.items; ++j) {
    std::size_t best = 0;
    for (std::size_t l = 1; l < posterior.classes; ++l)
      if (posterior.at(j, l) > posterior.at(j, best)) best = l;
    labels[j] = class_to_label(static_cast<int>(best));
  }
  return labels;
}

struct DsResult {
  std::vector<int> labels;  // relation labels, not class indices
  ConfusionTensor confusion;
  LabelPosterior posterior;
  std::vector<double> prior;
  std::vector<double> loglik_trace;
};

/// Alternates M and E steps until the marginal log-likelihood improves by
/// less than `tol` or `max_iter` iterations have run.
inline DsResult ds_run(const VoteTable& votes, std::size_t max_iter = 100, double tol = 1e-7) {
  auto init = ds_initialize(votes);
  DsResult r;
  r.posterior = std::move(init.posterior);
  r.prior = std::move(init.prior);
  for (std::size_t it = 0; it < max_iter; ++it) {
    r.confusion = ds_update_confusion(r.posterior, votes);
    r.prior = ds_update_prior(r.posterior);
    auto e = ds_update_posterior_with_loglik(r.confusion, votes, r.prior);
    r.posterior = std::move(e.posterior);
    r.loglik_trace.push_back(e.log_likelihood);
    const auto n = r.loglik_trace.size();
    if (n >= 2 && r.loglik_trace[n - 1] - r.loglik_trace[n - 2] < tol) break;
  }
  r.labels = ds_decode(r.posterior);
  return r;
}

struct Gamma {
  std::size_t k = 0;
  std::vector<int> raw;            // row-major K x K
  std::vector<double> normalized;  // raw / 3

  int raw_at(std::size_t i, std::size_t j) const { return raw[i * k + j]; }
  double at(std::size_t i, std::size_t j) const { return normalized[i * k + j]; }

  bool operator==(const Gamma&) const = default;
};

inline Gamma gamma_from_raw(std::vector<int> raw, std::size_t k) {
  if (raw.size() != k * k) throw std::invalid_argument("label count must equal K^2");
  Gamma g;
  g.k = k;
  g.raw = std::move(raw);
  for (std::size_t i = 0; i < k; ++i) g.raw[i * k + i] = 3;
  g.normalized.resize(g.raw.size());
  for (std::size_t n = 0; n < g.raw.size(); ++n) {
    if (g.raw[n] < -1 || g.raw[n] > 3) throw std::invalid_argument("relation label outside {-1..3}");
    g.normalized[n] = static_cast<double>(g.raw[n]) / 3.0;
  }
  return g;
}

/// Row-major de-flattening; the diagonal is forced to +3.
inline Gamma assemble_gamma(std::span<const int> labels, std::size_t k) {
  return gamma_from_raw(std::vector<int>(labels.begin(), labels.end()), k);
}

}  // namespace ttnet

#endif  // TTNET_VOTE_AGGREGATION_HPP_
