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

// Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero
// when any criterion fails. Full pipeline runs go under $TTNET_ACCEPT_DIR
// (default: <tmp>/ttnet_acceptance).

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ttnet/pipeline.hpp"

namespace {

using namespace ttnet;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<double> random_values(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.uniform(-1.0, 1.0);
  return v;
}

std::vector<std::size_t> random_dims(Rng& rng, std::size_t layers, std::size_t first, std::size_t last) {
  std::vector<std::size_t> dims{first};
  for (std::size_t i = 1; i < layers; ++i) dims.push_back(1 + rng.index(8));
  dims.push_back(last);
  return dims;
}

// ---------------------------------------------------------------------------

Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  Rng rng(20260101);
  double worst = 0.0;
  std::size_t mlps = 0;
  while (mlps < 20) {
    const auto act = rng.index(2) ? Activation::tanh : Activation::identity;
    const auto spec = MlpSpec::make(random_dims(rng, 1 + rng.index(3), 1 + rng.index(8), 1 + rng.index(8)), act);
    if (spec.param_count() > 500) continue;
    ++mlps;
    const auto p = mlp_init(spec, rng.next());
    const auto x = random_values(rng, spec.input_dim());
    const auto u = random_values(rng, spec.output_dim());
    const auto r = mlp_backward(spec, p, x, u);
    auto f = [&](const ParamVector& q) {
      const auto y = mlp_forward(spec, q, x);
      return std::inner_product(y.begin(), y.end(), u.begin(), 0.0);
    };
    worst = std::max(worst, max_relative_error(r.param_grad.values, finite_diff_gradient(f, p, 1e-5).values));
    auto fx = [&](const ParamVector& q) {
      const auto y = mlp_forward(spec, p, q.values);
      return std::inner_product(y.begin(), y.end(), u.begin(), 0.0);
    };
    worst = std::max(worst, max_relative_error(r.input_grad, finite_diff_gradient(fx, ParamVector{x, 0}, 1e-5).values));

    // Encoder/decoder pair on the same budget for the functional loss.
    for (;;) {
      const std::size_t d = 1 + rng.index(6), c = 1 + rng.index(4);
      const auto enc = MlpSpec::make(random_dims(rng, 1 + rng.index(2), d, c));
      const auto dec = MlpSpec::make(random_dims(rng, 1 + rng.index(2), c, d));
      if (enc.param_count() + dec.param_count() > 500) continue;
      const auto combined = concat(mlp_init(enc, rng.next()), mlp_init(dec, rng.next()));
      std::vector<Sample> batch;
      for (std::size_t s = 0, n = 1 + rng.index(4); s < n; ++s)
        batch.push_back({random_values(rng, d), random_values(rng, d)});
      const auto lg = functional_loss_and_grad(enc, dec, combined, batch);
      auto fl = [&](const ParamVector& q) { return functional_loss_and_grad(enc, dec, q, batch).loss; };
      worst = std::max(worst, max_relative_error(lg.grad.values, finite_diff_gradient(fl, combined, 1e-5).values));
      break;
    }
  }

  std::size_t metas = 0;
  while (metas < 5) {
    const std::size_t d = 2 + rng.index(2), code = d == 2 ? 1 + rng.index(2) : 1;
    const ArchConfig arch{MlpSpec::make({d, code}), MlpSpec::make({code, d})};
    const std::size_t m = 2 + rng.index(2);
    const auto spec = MetaSpec::make(arch, m, {3}, 2, {3});
    if (arch.encoder_params() > 6 || arch.decoder_params() > 6 || spec.param_count() > 400) continue;
    ++metas;
    const auto params = meta_init(spec, rng.next());
    std::vector<std::vector<double>> enc;
    RegressionInput in;
    for (std::size_t k = 0; k < m; ++k) enc.push_back(random_values(rng, arch.encoder_params()));
    for (std::size_t k = 0; k < m; ++k)
      in.sources.push_back({enc[k], static_cast<double>(rng.index(5)) / 3.0 - 1.0 / 3.0});
    const auto target = split_params(arch, random_values(rng, arch.total_params(), 0.5), "t");
    std::vector<Sample> batch;
    for (int s = 0; s < 3; ++s) batch.push_back({random_values(rng, d), random_values(rng, d)});
    const double lambda = 0.1 + rng.uniform();
    const auto lg = meta_loss_and_grad(spec, params, in, target, batch, lambda);
    auto f = [&](const ParamVector& q) {
      return meta_loss(spec, MetaParams::unflatten(spec, q.values), in, target, batch, lambda).total;
    };
    worst = std::max(worst, max_relative_error(lg.grad.flatten(), finite_diff_gradient(f, {params.flatten(), 0}, 1e-5).values));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-6 && secs < 30.0,
          "max rel err " + fmt("%.3g", worst) + " over 20 MLPs + 20 enc/dec pairs + 5 MetaSpecs, " +
              fmt("%.2f", secs) + " s"};
}

// ---------------------------------------------------------------------------

Outcome dawid_skene() {
  const auto t0 = Clock::now();
  const auto w = default_world(1);
  bool ok = true;
  std::ostringstream os;
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const auto r = ds_run(simulate_votes(w.gamma, 30, 0.7, seed));
    std::size_t correct = 0;
    for (std::size_t n = 0; n < w.gamma.size(); ++n) correct += r.labels[n] == w.gamma[n];
    const double acc = static_cast<double>(correct) / static_cast<double>(w.gamma.size());
    bool monotone = true;
    for (std::size_t i = 1; i < r.loglik_trace.size(); ++i)
      monotone = monotone && r.loglik_trace[i] >= r.loglik_trace[i - 1] - 1e-9;
    ok = ok && acc >= 0.95 && monotone;
    os << "seed " << seed << " acc " << fmt("%.4f", acc) << (monotone ? "" : " (loglik decreased)") << "; ";
  }
  const bool exact = ds_run(simulate_votes(w.gamma, 30, 1.0, 11)).labels == w.gamma;
  ok = ok && exact;
  const double secs = seconds_since(t0);
  ok = ok && secs < 10.0;
  os << "q=1 " << (exact ? "exact" : "NOT exact") << ", " << fmt("%.2f", secs) << " s";
  return {ok, os.str()};
}

// ---------------------------------------------------------------------------

Outcome gamma_fidelity(const fs::path& work) {
  ExperimentConfig c;
  c.votes.quality = 1.0;
  const auto out = work / "perfect_votes";
  fs::remove_all(out);
  for (const auto* s : {"gen-world", "simulate-votes", "aggregate-votes"}) run_stage(c, out, s);
  const auto g = gamma_from_json(json::parse(read_file(out / gamma_file())));
  const bool ok = g.gamma.raw == true_gamma(c.world) && g.task_ids == c.world.task_ids();
  std::size_t diff = 0;
  const auto truth = true_gamma(c.world);
  for (std::size_t n = 0; n < truth.size(); ++n) diff += g.gamma.raw[n] != truth[n];
  return {ok, std::to_string(diff) + " of " + std::to_string(truth.size()) + " entries differ from the world table"};
}

// ---------------------------------------------------------------------------

Outcome mode_masking() {
  const auto world = default_world(3);
  const auto arch = default_arch(64, 4, 2);
  const auto spec = MetaSpec::make(arch, 6, {8}, 4, {16});
  const auto gamma = gamma_from_raw(world.gamma, world.task_count());
  BankConfig bc;
  bc.p = 2;
  bc.l = 32;
  bc.pool_size = 64;
  bc.hyper.epochs = 2;
  std::vector<ParameterBank> banks;
  for (std::size_t t = 0; t < 6; ++t) banks.push_back(build_bank(world, t, arch, bc, world.master_seed));
  MetaTrainConfig config;
  config.lr = 1e-3;
  auto params = meta_init(spec, 8);
  auto opt = MetaOptimizer::make(spec, config);
  std::vector<std::vector<Sample>> pools;
  for (std::size_t t = 0; t < 6; ++t) pools.push_back(task_pool(world, t, 64, world.master_seed));
  const std::vector<double> zeros(arch.encoder_params(), 0.0);

  Rng rng(404);
  std::size_t violations = 0, self_steps = 0;
  for (int step = 0; step < 1000; ++step) {
    const std::size_t i = rng.index(6);
    const auto mode = rng.index(2) ? TrainMode::self : TrainMode::transfer;
    self_steps += mode == TrainMode::self;
    auto sample = bank_sample(banks, i, rng.index(2));
    const auto batch = sample_subset(pools[i], 4, rng.next());
    const auto before = params;
    train_step(spec, params, opt, mode, i, sample, gamma, batch, config);
    for (std::size_t k = 0; k < 6; ++k) {
      const bool frozen = mode == TrainMode::self ? k != i : k == i;
      if (frozen && params.branches[k].values != before.branches[k].values) ++violations;
    }
    if (mode == TrainMode::transfer) {
      const auto a = meta_forward(spec, params, mode_input(spec, mode, i, sample, gamma, zeros));
      const auto junk = random_values(rng, arch.encoder_params(), 5.0);
      sample.encoders[i] = junk;
      const auto b = meta_forward(spec, params, mode_input(spec, mode, i, sample, gamma, zeros));
      if (a.theta_E.values != b.theta_E.values || a.theta_D.values != b.theta_D.values) ++violations;
    }
  }
  return {violations == 0, std::to_string(violations) + " violations in 1000 steps (" + std::to_string(self_steps) +
                               " self, " + std::to_string(1000 - self_steps) + " transfer)"};
}

// ---------------------------------------------------------------------------
// Reference runs (criteria 5, 6, 7, 10).

struct ReferenceRun {
  std::uint64_t seed = 0;
  fs::path dir;
  double meta_seconds = 0.0;
  double total_seconds = 0.0;
};

ReferenceRun reference_run(std::uint64_t seed, const fs::path& dir) {
  ExperimentConfig c;
  c.world = default_world(seed);
  fs::remove_all(dir);
  ReferenceRun r{seed, dir};
  const auto t0 = Clock::now();
  for (const auto* name : kStageNames) {
    const auto ts = Clock::now();
    run_stage(c, dir, name);
    if (std::string(name) == "train-meta") r.meta_seconds = seconds_since(ts);
  }
  r.total_seconds = seconds_since(t0);
  std::cerr << "  reference run seed " << seed << ": " << fmt("%.0f", r.total_seconds) << " s (train-meta "
            << fmt("%.0f", r.meta_seconds) << " s)\n";
  return r;
}

json report_of(const ReferenceRun& r) { return json::parse(read_file(r.dir / report_json_file())); }

double report_metric(const json& report, const std::string& model, const std::string& task, const char* metric) {
  for (const auto& e : report.at("entries"))
    if (e.at("model") == model && e.at("task") == task) return e.at("metrics").at(metric).get<double>();
  throw std::runtime_error("report has no entry " + model + "/" + task);
}

double report_win(const json& report, const std::string& task, const std::string& a, const std::string& b) {
  for (const auto& w : report.at("win_rates"))
    if (w.at("task") == task && w.at("a") == a && w.at("b") == b) return w.at("rate").get<double>();
  throw std::runtime_error("report has no win rate " + a + " vs " + b);
}

Outcome self_fidelity(const ReferenceRun& r) {
  ExperimentConfig c;
  c.world = default_world(r.seed);
  double norm = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < c.world.known_count(); ++t) {
    const auto bank = load_parameter_bank(r.dir / bank_file(c.world.tasks[t].id)).bank;
    for (const auto& m : bank.models) {
      for (double v : m.combined().values) norm += v * v;
      ++count;
    }
  }
  norm /= static_cast<double>(count);

  std::istringstream csv(read_file(r.dir / meta_history_file()));
  std::string line;
  std::getline(csv, line);
  std::vector<std::pair<std::size_t, double>> self_terms;  // epoch, param_term
  std::size_t last_epoch = 0;
  while (std::getline(csv, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 8 || f[4] != "self") continue;
    const std::size_t epoch = std::stoul(f[1]);
    last_epoch = std::max(last_epoch, epoch);
    self_terms.push_back({epoch, std::stod(f[6])});
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [e, v] : self_terms)
    if (e == last_epoch) {
      sum += v;
      ++n;
    }
  const double ratio = n ? sum / static_cast<double>(n) / norm : INFINITY;
  const bool ok = ratio < 0.05 && r.meta_seconds <= 1800.0;
  return {ok, "ratio " + fmt("%.4f", ratio) + " over " + std::to_string(n) + " last-epoch self steps (epoch " +
                  std::to_string(last_epoch + 1) + "), mean |theta*|^2 " + fmt("%.3f", norm) + ", train-meta " +
                  fmt("%.0f", r.meta_seconds) + " s"};
}

Outcome zero_shot_quality(const std::vector<ReferenceRun>& runs) {
  std::size_t a_ok = 0, b_ok = 0;
  std::ostringstream os;
  for (const auto& r : runs) {
    const auto rep = report_of(r);
    const double reg = report_metric(rep, "regressed", "blur_edge", "mse");
    const double oracle = report_metric(rep, "oracle", "blur_edge", "mse");
    const double win = report_win(rep, "blur_edge", "regressed", "mean_params");
    a_ok += reg <= 2.0 * oracle;
    b_ok += win >= 70.0;
    os << "seed " << r.seed << ": mse/oracle " << fmt("%.2f", reg / oracle) << ", win " << fmt("%.1f", win) << "%; ";
  }
  os << "(a) " << a_ok << "/3, (b) " << b_ok << "/3";
  return {a_ok >= 2 && b_ok >= 2, os.str()};
}

Outcome zero_shot_transfer(const std::vector<ReferenceRun>& runs) {
  std::size_t wins = 0;
  std::ostringstream os;
  for (const auto& r : runs) {
    const auto rep = report_of(r);
    const double moved = report_metric(rep, "transfer_from_blur_edge", "edge", "mse");
    const double control = report_metric(rep, "control_from_blur_edge", "edge", "mse");
    wins += moved < control;
    os << "seed " << r.seed << ": " << fmt("%.5f", moved) << " vs control " << fmt("%.5f", control) << "; ";
  }
  os << wins << "/3 seeds beat the control";
  return {wins >= 2, os.str()};
}

Outcome reproducibility(const ReferenceRun& first, const fs::path& second_dir) {
  const auto second = reference_run(first.seed, second_dir);
  const auto ma = read_manifest(first.dir), mb = read_manifest(second.dir);
  bool ok = ma && mb && manifest_text(*ma) == manifest_text(*mb);
  std::size_t files = 0, differing = 0;
  for (const auto& s : ma->stages)
    for (const auto& [rel, digest] : s.outputs) {
      ++files;
      if (read_file(first.dir / rel) != read_file(second.dir / rel)) ++differing;
    }
  ok = ok && differing == 0;
  const auto rep = replay(first.dir);
  ok = ok && rep.ok;
  return {ok, "manifests " + std::string(manifest_text(*ma) == manifest_text(*mb) ? "identical" : "differ") + ", " +
                  std::to_string(differing) + " of " + std::to_string(files) + " outputs differ, replay " +
                  (rep.ok ? "verified" : "found " + std::to_string(rep.mismatches.size()) + " mismatches")};
}

// ---------------------------------------------------------------------------

Outcome factorization() {
  std::ostringstream os;
  bool ok = true;

  // Planted W = L0 S0 with r = 16, b = 4.
  double worst = 0.0;
  bool monotone = true;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    Eigen::MatrixXd l0(16, 4), s0(4, 8);
    for (Eigen::Index i = 0; i < l0.size(); ++i) l0.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < s0.size(); ++i) s0.data()[i] = rng.normal();
    TaskMatrix tm;
    tm.w = l0 * s0;
    tm.task_ids.assign(8, "t");
    const auto f = factorize_task_matrix(tm, 4, 100, 0.0);
    worst = std::max(worst, (tm.w - f.l * f.s).norm() / tm.w.norm());
    for (double l1 : {0.0, 0.01}) {
      const auto g = factorize_task_matrix(tm, 4, 100, l1);
      for (std::size_t i = 1; i < g.objective_trace.size(); ++i)
        monotone = monotone && g.objective_trace[i] <= g.objective_trace[i - 1] + 1e-9;
    }
  }
  ok = ok && worst < 1e-3 && monotone;
  os << "planted rel err " << fmt("%.2g", worst) << ", objective " << (monotone ? "non-increasing" : "INCREASED");

  // Clone world: the six known default tasks plus a zero-shot copy of `edge`.
  const std::string source = "edge";
  auto world = default_world(1);
  const auto base = world;
  world.tasks.resize(6);
  const std::size_t src = world.task_index(source);
  auto clone = world.tasks[src];
  clone.id = source + "_clone";
  clone.zero_shot = true;
  world.tasks.push_back(clone);
  const std::size_t k = world.task_count();
  world.gamma.assign(k * k, 1);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) world.gamma[i * k + j] = base.gamma[i * base.task_count() + j];
  for (std::size_t i = 0; i < 6; ++i) {
    world.gamma[i * k + 6] = world.gamma[i * k + src];
    world.gamma[6 * k + i] = world.gamma[src * k + i];
  }
  world.gamma[6 * k + src] = world.gamma[src * k + 6] = 2;
  world.gamma[6 * k + 6] = 3;
  world.validate();

  // The clone's models are trained on its own data as if it were known.
  auto training_world = world;
  training_world.tasks[6].zero_shot = false;
  const ExperimentConfig c;
  const auto arch = c.arch();
  BankConfig bc = c.bank;
  bc.p = c.basis.models_per_task;
  std::vector<ModelParams> models;
  for (std::size_t t = 0; t < k; ++t)
    for (auto& m : build_bank(training_world, t, arch, bc, world.master_seed).models) models.push_back(std::move(m));

  auto spec = EmbeddingSpec::make(arch, c.basis.embed_dim, c.basis.hidden);
  spec.lambda = c.basis.lambda;
  spec.epochs = c.basis.epochs;
  const auto embedding = train_param_embedding(models, spec, world, world.master_seed);
  TaskMatrix tm;
  tm.task_ids = world.task_ids();
  tm.w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(spec.dim()), static_cast<Eigen::Index>(k));
  for (const auto& m : models) {
    const auto e = embed_params(embedding, m);
    const auto t = static_cast<Eigen::Index>(world.task_index(m.task_id));
    for (std::size_t r = 0; r < e.size(); ++r) tm.w(static_cast<Eigen::Index>(r), t) += e[r] / static_cast<double>(bc.p);
  }
  const auto f = factorize_task_matrix(tm, c.basis.basis_count, c.basis.iters, c.basis.l1);
  const auto rows = importance_report(world, f);
  std::size_t source_count = 0, best_other = 0;
  std::string nearest;
  double nearest_dist = INFINITY;
  for (const auto& r : rows) {
    if (r.source_task == source)
      source_count = r.shared_basis_count;
    else
      best_other = std::max(best_other, r.shared_basis_count);
    const double d = (tm.w.col(static_cast<Eigen::Index>(world.task_index(r.source_task))) - tm.w.col(6)).norm();
    if (d < nearest_dist) {
      nearest_dist = d;
      nearest = r.source_task;
    }
  }
  const bool strict = source_count > best_other;
  ok = ok && strict;
  os << "; clone of " << source << ": source shares " << source_count << "/" << c.basis.basis_count
     << ", best other source " << best_other << " (nearest column in W: " << nearest << ")";
  return {ok, os.str()};
}

// ---------------------------------------------------------------------------

Outcome metric_formulas() {
  bool ok = true;
  std::ostringstream os;
  Matrix d(2, 1), ds(2, 1);
  d << 1, 2;
  ds << 1, 1;
  const auto m = compute_metrics(d, ds);
  const auto g = compute_metrics(d, ds, RelativeTo::ground_truth);
  auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
  ok = ok && near(m.ard, 0.25) && near(m.srd, 0.125) && near(m.mse, 0.5) && near(m.rmse_lin, 0.5) &&
       near(m.rmse_log, std::log(2.0) / 2.0) && near(g.ard, 0.5) && near(g.srd, 0.5);
  os << "ARD " << m.ard << ", SRD " << m.srd << "; ";

  Matrix a(2, 1), b(2, 1);
  a << 3, 4;
  b << 0, 5;
  const auto ang = compute_metrics(a, b);
  const double expected = std::acos(20.0 / 25.0) * 180.0 / std::numbers::pi;
  ok = ok && near(ang.angular_mean, expected);

  const std::vector<double> x = {1, 2, 3, 4}, y = {2, 3, 4, 5}, p = {1, 1, 5, 2}, q = {2, 2, 4, 2};
  const bool wins = win_rate(x, y) == 100.0 && win_rate(y, x) == 0.0 && win_rate(x, x) == 50.0 &&
                    win_rate(p, q) == 62.5 && win_rate(q, p) == 37.5;
  ok = ok && wins;
  os << "win rates " << (wins ? "exact" : "WRONG");
  return {ok, os.str()};
}

}  // namespace

int main() {
  const char* env = std::getenv("TTNET_ACCEPT_DIR");
  const fs::path work = env ? fs::path(env) : fs::temp_directory_path() / "ttnet_acceptance";
  fs::create_directories(work);

  std::map<int, Outcome> results;
  auto run = [&](int n, const std::function<Outcome()>& f) {
    try {
      results[n] = f();
    } catch (const std::exception& e) {
      results[n] = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << n << ": " << (results[n].pass ? "PASS" : "FAIL") << "  " << results[n].detail
              << std::endl;
  };

  run(1, gradient_oracle);
  run(2, dawid_skene);
  run(3, [&] { return gamma_fidelity(work); });
  run(4, mode_masking);
  run(8, factorization);
  run(9, metric_formulas);

  std::vector<ReferenceRun> runs;
  std::string run_error;
  try {
    for (std::uint64_t seed : {1u, 2u, 3u})
      runs.push_back(reference_run(seed, work / ("seed" + std::to_string(seed))));
  } catch (const std::exception& e) {
    run_error = std::string("reference run failed: ") + e.what();
  }
  auto with_runs = [&](int n, const std::function<Outcome()>& f) {
    if (runs.size() == 3)
      run(n, f);
    else
      run(n, [&] { return Outcome{false, run_error}; });
  };
  with_runs(5, [&] { return self_fidelity(runs[0]); });
  with_runs(6, [&] { return zero_shot_quality(runs); });
  with_runs(7, [&] { return zero_shot_transfer(runs); });
  with_runs(10, [&] { return reproducibility(runs[0], work / "seed1_again"); });

  std::size_t passed = 0;
  std::cout << "\nsummary:\n";
  for (const auto& [n, o] : results) {
    passed += o.pass;
    std::cout << "  criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "\n";
  }
  std::cout << passed << "/" << results.size() << " criteria passed\n";
  return passed == results.size() ? 0 : 1;
}
