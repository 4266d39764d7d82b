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

// Quantitative comparison of regressed, baseline and oracle models.

#ifndef TTNET_EVAL_HARNESS_HPP_
#define TTNET_EVAL_HARNESS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ttnet/base_learner.hpp"
#include "ttnet/task_world.hpp"

namespace ttnet {

inline constexpr double kMetricFloor = 1e-6;
inline constexpr double kNormFloor = 1e-9;
inline constexpr std::array<double, 3> kAngleThresholds = {11.25, 22.5, 30.0};

/// Which value divides |d - d*| in ARD and SRD.
enum class RelativeTo : std::uint8_t { estimate, ground_truth };

struct MetricSet {
  double mse = 0.0;
  double rmse_lin = 0.0;
  double rmse_log = 0.0;
  double ard = 0.0;
  double srd = 0.0;
  double angular_mean = 0.0;    // degrees
  double angular_median = 0.0;  // degrees
  std::array<double, 3> angular_within{};  // fractions below 11.25, 22.5, 30 degrees
  std::size_t angular_skipped = 0;

  std::vector<std::pair<std::string, double>> named() const {
    return {{"mse", mse},
            {"rmse_lin", rmse_lin},
            {"rmse_log", rmse_log},
            {"ard", ard},
            {"srd", srd},
            {"angular_mean", angular_mean},
            {"angular_median", angular_median},
            {"within_11_25", angular_within[0]},
            {"within_22_5", angular_within[1]},
            {"within_30", angular_within[2]},
            {"angular_skipped", static_cast<double>(angular_skipped)}};
  }
};

/// Metrics over predictions and targets (one column per sample). d is the
/// prediction and d* the target; N counts every pixel of every sample:
///   rmse_lin = (1/N) sqrt(sum (d - d*)^2)
///   rmse_log = (1/N) sqrt(sum (log d - log d*)^2)
///   ard      = (1/N) sum |d - d*| / d
///   srd      = (1/N) sum (|d - d*| / d)^2
/// Denominators and log arguments are floored at 1e-6.
inline MetricSet compute_metrics(const Matrix& pred, const Matrix& target, RelativeTo rel = RelativeTo::estimate) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw std::invalid_argument("prediction and target shapes differ");
  if (pred.size() == 0) throw std::invalid_argument("empty evaluation set");
  MetricSet m;
  const double n = static_cast<double>(pred.size());
  double sq = 0.0, sq_log = 0.0, ard = 0.0, srd = 0.0;
  for (Eigen::Index c = 0; c < pred.cols(); ++c)
    for (Eigen::Index r = 0; r < pred.rows(); ++r) {
      const double d = pred(r, c), ds = target(r, c);
      sq += (d - ds) * (d - ds);
      const double lg = std::log(std::max(d, kMetricFloor)) - std::log(std::max(ds, kMetricFloor));
      sq_log += lg * lg;
      const double denom = std::max(rel == RelativeTo::estimate ? d : ds, kMetricFloor);
      const double q = std::abs(d - ds) / denom;
      ard += q;
      srd += q * q;
    }
  m.mse = sq / n;
  m.rmse_lin = std::sqrt(sq) / n;
  m.rmse_log = std::sqrt(sq_log) / n;
  m.ard = ard / n;
  m.srd = srd / n;

  std::vector<double> angles;
  for (Eigen::Index c = 0; c < pred.cols(); ++c) {
    const double np = pred.col(c).norm(), nt = target.col(c).norm();
    if (np < kNormFloor || nt < kNormFloor) {
      ++m.angular_skipped;
      continue;
    }
    const double cosv = std::clamp(pred.col(c).dot(target.col(c)) / (np * nt), -1.0, 1.0);
    angles.push_back(std::acos(cosv) * 180.0 / std::numbers::pi);
  }
  if (!angles.empty()) {
    double sum = 0.0;
    for (double a : angles) sum += a;
    m.angular_mean = sum / static_cast<double>(angles.size());
    std::vector<double> sorted = angles;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t h = sorted.size() / 2;
    m.angular_median = sorted.size() % 2 ? sorted[h] : 0.5 * (sorted[h - 1] + sorted[h]);
    for (std::size_t t = 0; t < kAngleThresholds.size(); ++t) {
      std::size_t below = 0;
      for (double a : angles) below += a < kAngleThresholds[t] ? 1 : 0;
      m.angular_within[t] = static_cast<double>(below) / static_cast<double>(angles.size());
    }
  }
  return m;
}

struct Evaluation {
  MetricSet metrics;
  std::vector<double> per_sample_mse;
};

inline Evaluation eval_model(const ArchConfig& arch, const ModelParams& params, std::span<const Sample> dataset,
                             RelativeTo rel = RelativeTo::estimate) {
  if (dataset.empty()) throw std::invalid_argument("empty evaluation set");
  if (params.theta_E.size() != arch.encoder_params() || params.theta_D.size() != arch.decoder_params())
    throw std::invalid_argument("model '" + params.task_id + "' does not match the arch");
  const Matrix pred = predict(arch, params.theta_E.span(), params.theta_D.span(), dataset);
  auto [x, y] = stack_batch(dataset, arch.encoder.input_dim(), arch.decoder.output_dim());
  Evaluation e;
  e.metrics = compute_metrics(pred, y, rel);
  const Vector per = per_sample_mse(pred, y);
  e.per_sample_mse.assign(per.data(), per.data() + per.size());
  return e;
}

/// Percentage of samples where A's error is below B's; ties count half.
/// win_rate(A, B) + win_rate(B, A) == 100 exactly.
inline double win_rate(std::span<const double> errors_a, std::span<const double> errors_b) {
  if (errors_a.size() != errors_b.size()) throw std::invalid_argument("error lists differ in length");
  if (errors_a.empty()) throw std::invalid_argument("win rate needs at least one sample");
  std::size_t a = 0, b = 0;
  for (std::size_t i = 0; i < errors_a.size(); ++i) {
    a += errors_a[i] < errors_b[i] ? 1 : 0;
    b += errors_b[i] < errors_a[i] ? 1 : 0;
  }
  const std::size_t n = errors_a.size();
  const std::size_t half_a = 2 * a + (n - a - b);  // twice A's score
  const std::size_t half_b = 2 * n - half_a;
  // The smaller share is computed directly and the larger as its complement,
  // so both argument orders agree bit for bit.
  if (half_a <= half_b) return static_cast<double>(half_a) * 50.0 / static_cast<double>(n);
  return 100.0 - static_cast<double>(half_b) * 50.0 / static_cast<double>(n);
}

struct NamedModel {
  std::string name;
  ModelParams params;
};

struct EvalRequest {
  std::size_t task = 0;  // world task index
  std::vector<NamedModel> models;
};

struct EvalReport {
  struct Entry {
    std::string model;
    std::string task;
    MetricSet metrics;
    std::vector<double> per_sample_mse;
  };
  struct Win {
    std::string task;
    std::string a;
    std::string b;
    double rate = 0.0;  // percent of samples where a beats b
  };
  std::vector<Entry> entries;
  std::vector<Win> wins;
  std::map<std::string, std::string> metadata;

  const Entry& entry(const std::string& model, const std::string& task) const {
    for (const auto& e : entries)
      if (e.model == model && e.task == task) return e;
    throw std::out_of_range("no report entry for " + model + "/" + task);
  }

  double win(const std::string& task, const std::string& a, const std::string& b) const {
    for (const auto& w : wins)
      if (w.task == task && w.a == a && w.b == b) return w.rate;
    throw std::out_of_range("no win rate for " + a + " vs " + b);
  }
};

/// Mean of the bank-index-0 parameter vectors of the known tasks.
inline ModelParams mean_params_baseline(std::span<const ParameterBank> banks, const std::string& task_id) {
  if (banks.empty()) throw std::invalid_argument("no banks");
  ModelParams m = banks.front().models.at(0);
  m.task_id = task_id;
  m.train_seed = 0;
  m.final_loss = 0.0;
  std::fill(m.theta_E.values.begin(), m.theta_E.values.end(), 0.0);
  std::fill(m.theta_D.values.begin(), m.theta_D.values.end(), 0.0);
  for (const auto& b : banks) {
    const auto& src = b.models.at(0);
    for (std::size_t n = 0; n < m.theta_E.size(); ++n) m.theta_E.values[n] += src.theta_E.values[n];
    for (std::size_t n = 0; n < m.theta_D.size(); ++n) m.theta_D.values[n] += src.theta_D.values[n];
  }
  const double k = static_cast<double>(banks.size());
  for (auto& v : m.theta_E.values) v /= k;
  for (auto& v : m.theta_D.values) v /= k;
  return m;
}

inline ModelParams random_init_baseline(const ArchConfig& arch, const std::string& task_id, std::uint64_t seed) {
  ModelParams m;
  m.theta_E = mlp_init(arch.encoder, derive_seed(seed, 0, 0, Purpose::init));
  m.theta_D = mlp_init(arch.decoder, derive_seed(seed, 0, 1, Purpose::init));
  m.task_id = task_id;
  m.train_seed = seed;
  return m;
}

/// Supervised model of any task (including zero-shot ones), trained only
/// inside the harness.
inline ModelParams train_oracle(const WorldConfig& world, std::size_t task, const ArchConfig& arch,
                                const BankConfig& budget, std::uint64_t seed) {
  const auto pool = task_pool(world, task, budget.pool_size, world.master_seed);
  const TrainSeeds seeds{derive_seed(seed, task + 1, 0, Purpose::oracle), derive_seed(seed, task + 1, 1, Purpose::oracle),
                         derive_seed(seed, task + 1, 2, Purpose::oracle)};
  return train_task_model(world, world.tasks.at(task), arch, pool, budget.l, budget.hyper, seeds);
}

/// Evaluates every requested model plus a harness-trained "oracle" on a fresh
/// test set of the request's task and records all pairwise win rates on
/// per-sample MSE.
inline EvalReport build_report(const WorldConfig& world, const ArchConfig& arch, const std::vector<EvalRequest>& requests,
                               std::size_t n_test, std::uint64_t seed, const BankConfig& oracle_budget,
                               RelativeTo rel = RelativeTo::estimate) {
  EvalReport report;
  report.metadata["seed"] = std::to_string(seed);
  report.metadata["n_test"] = std::to_string(n_test);
  report.metadata["relative_to"] = rel == RelativeTo::estimate ? "estimate" : "ground_truth";
  for (const auto& req : requests) {
    const auto& task = world.tasks.at(req.task);
    const auto test = task_test_set(world, req.task, n_test, seed);
    std::vector<NamedModel> models = req.models;
    models.push_back({"oracle", train_oracle(world, req.task, arch, oracle_budget, seed)});
    std::vector<std::size_t> idx;
    for (const auto& nm : models) {
      if (nm.params.theta_E.size() != arch.encoder_params() || nm.params.theta_D.size() != arch.decoder_params())
        throw std::invalid_argument("model '" + nm.name + "' does not match the arch");
      auto e = eval_model(arch, nm.params, test, rel);
      idx.push_back(report.entries.size());
      report.entries.push_back({nm.name, task.id, e.metrics, std::move(e.per_sample_mse)});
    }
    for (std::size_t a : idx)
      for (std::size_t b : idx)
        report.wins.push_back({task.id, report.entries[a].model, report.entries[b].model,
                               win_rate(report.entries[a].per_sample_mse, report.entries[b].per_sample_mse)});
  }
  return report;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["metadata"] = r.metadata;
  j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : r.entries) {
    nlohmann::ordered_json metrics;
    for (const auto& [k, v] : e.metrics.named()) metrics[k] = v;
    j["entries"].push_back({{"model", e.model}, {"task", e.task}, {"metrics", metrics}});
  }
  j["win_rates"] = nlohmann::ordered_json::array();
  for (const auto& w : r.wins) j["win_rates"].push_back({{"task", w.task}, {"a", w.a}, {"b", w.b}, {"rate", w.rate}});
  return j;
}

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// model,task,metric,value rows; win rates appear as metric "win_rate_vs_<b>".
inline std::string report_to_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "model,task,metric,value\n";
  for (const auto& e : r.entries)
    for (const auto& [k, v] : e.metrics.named()) os << e.model << ',' << e.task << ',' << k << ',' << format_real(v) << '\n';
  for (const auto& w : r.wins)
    os << w.a << ',' << w.task << ",win_rate_vs_" << w.b << ',' << format_real(w.rate) << '\n';
  return os.str();
}

}  // namespace ttnet

#endif  // TTNET_EVAL_HARNESS_HPP_
