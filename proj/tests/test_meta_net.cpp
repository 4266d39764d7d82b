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


#include <gtest/gtest.h>

#include "ttnet/meta_net.hpp"

namespace ttnet {
namespace {

// Data network x -> code -> y with scalar widths: P_E = P_D = 2.
ArchConfig scalar_arch() { return {MlpSpec::make({1, 1}), MlpSpec::make({1, 1})}; }

std::vector<double> pattern(std::size_t n, std::size_t off) {
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = 0.1 * (static_cast<double>((7 * (k + off)) % 11) - 5.0);
  return v;
}

std::vector<double> random_values(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.uniform(-1.0, 1.0);
  return v;
}

ModelParams model_from(const ArchConfig& arch, const std::vector<double>& v, const std::string& id = "t") {
  return split_params(arch, v, id);
}

struct Micro {
  MetaSpec spec = MetaSpec::make(scalar_arch(), 2, {2}, 2, {});
  MetaParams params;
  std::vector<double> e0{0.3, -0.2}, e1{-0.4, 0.1};
  RegressionInput input;
  ModelParams target = model_from(scalar_arch(), {0.5, 0.1, -0.3, 0.2});
  std::vector<Sample> batch{{{0.5}, {0.25}}};

  Micro() {
    params.branches = {{pattern(14, 0), spec.branch.fingerprint()}, {pattern(14, 3), spec.branch.fingerprint()}};
    params.common = {pattern(20, 5), spec.common.fingerprint()};
    input.sources = {{e0, 2.0 / 3.0}, {e1, -1.0 / 3.0}};
  }
};

TEST(MetaSpec, Shapes) {
  const auto s = MetaSpec::make(default_arch(), 6);
  EXPECT_EQ(s.branch.dims, (std::vector<std::size_t>{3905, 128, 64}));
  EXPECT_EQ(s.common.dims, (std::vector<std::size_t>{384, 256, 7856}));
  MetaSpec bad = s;
  bad.m = 5;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(MetaForward, MicroHandValues) {
  Micro m;
  const auto out = meta_forward(m.spec, m.params, m.input);
  ASSERT_EQ(out.theta_E.size(), 2u);
  ASSERT_EQ(out.theta_D.size(), 2u);
  const double expected[4] = {-0.05185572, -0.50473791, 0.20240896, -0.25047324};
  EXPECT_NEAR(out.theta_E.values[0], expected[0], 1e-8);
  EXPECT_NEAR(out.theta_E.values[1], expected[1], 1e-8);
  EXPECT_NEAR(out.theta_D.values[0], expected[2], 1e-8);
  EXPECT_NEAR(out.theta_D.values[1], expected[3], 1e-8);
}

TEST(MetaLoss, MicroHandEvaluation) {
  Micro m;
  const auto l = meta_loss(m.spec, m.params, m.input, m.target, m.batch, 0.1);
  EXPECT_NEAR(l.param_term, 1.1255935657514655, 1e-12);
  EXPECT_NEAR(l.data_term, 0.3695238567191935, 1e-12);
  EXPECT_NEAR(l.total, 1.162545951423385, 1e-12);
}

TEST(MetaLoss, LambdaZeroIsParamTerm) {
  Micro m;
  const auto l = meta_loss(m.spec, m.params, m.input, m.target, m.batch, 0.0);
  EXPECT_EQ(l.total, l.param_term);
  const auto no_batch = meta_loss(m.spec, m.params, m.input, m.target, {}, 0.0);
  EXPECT_EQ(no_batch.total, no_batch.param_term);
}

TEST(MetaLoss, TargetEqualToOutputGivesZeroParamTerm) {
  Micro m;
  const auto out = meta_forward(m.spec, m.params, m.input);
  ModelParams target{out.theta_E, out.theta_D, "t", 0, 0.0};
  EXPECT_EQ(meta_loss(m.spec, m.params, m.input, target, m.batch, 0.1).param_term, 0.0);
}

TEST(MetaLoss, AffineInLambda) {
  Micro m;
  const auto l0 = meta_loss(m.spec, m.params, m.input, m.target, m.batch, 0.0);
  for (double lambda : {0.1, 1.0, 7.5}) {
    const auto l = meta_loss(m.spec, m.params, m.input, m.target, m.batch, lambda);
    EXPECT_EQ(l.data_term, l0.data_term);
    EXPECT_NEAR(l.total, l0.param_term + lambda * l0.data_term, 1e-12);
  }
}

TEST(MetaLoss, Errors) {
  Micro m;
  EXPECT_THROW(meta_loss(m.spec, m.params, m.input, m.target, {}, 0.1), std::invalid_argument);
  ModelParams wrong = m.target;
  wrong.theta_D.values.push_back(0.0);
  EXPECT_THROW(meta_loss_and_grad(m.spec, m.params, m.input, wrong, m.batch, 0.1), std::invalid_argument);
  RegressionInput short_input = m.input;
  short_input.sources.pop_back();
  EXPECT_THROW(meta_forward(m.spec, m.params, short_input), std::invalid_argument);
  RegressionInput bad_width = m.input;
  bad_width.sources[0].theta_E = std::span<const double>(m.e0).subspan(0, 1);
  EXPECT_THROW(meta_forward(m.spec, m.params, bad_width), std::invalid_argument);
}

TEST(MetaForward, ZeroParamsGiveZeroOutput) {
  const auto arch = ArchConfig{MlpSpec::make({3, 2}), MlpSpec::make({2, 3})};
  const auto spec = MetaSpec::make(arch, 3, {4}, 3, {5});
  const auto enc = random_values(arch.encoder_params(), 1);
  RegressionInput in;
  for (int k = 0; k < 3; ++k) in.sources.push_back({enc, 1.0 / 3.0});
  const auto out = meta_forward(spec, meta_zeros(spec), in);
  for (double v : out.theta_E.values) EXPECT_EQ(v, 0.0);
  for (double v : out.theta_D.values) EXPECT_EQ(v, 0.0);
}

TEST(MetaForward, BranchPermutationIsBitExact) {
  const auto arch = ArchConfig{MlpSpec::make({4, 3}), MlpSpec::make({3, 4})};
  const auto spec = MetaSpec::make(arch, 4, {6}, 5, {7});
  const auto params = meta_init(spec, 17);
  std::vector<std::vector<double>> enc;
  for (int k = 0; k < 4; ++k) enc.push_back(random_values(arch.encoder_params(), 100 + k));
  const double gam[4] = {1.0, 2.0 / 3.0, -1.0 / 3.0, 1.0 / 3.0};
  RegressionInput in;
  for (int k = 0; k < 4; ++k) in.sources.push_back({enc[k], gam[k]});
  const auto base = meta_forward(spec, params, in);

  const std::size_t a = 0, b = 2, e = spec.embed_dim(), width = spec.common.dims[1], cols = spec.common.dims[0];
  MetaParams swapped = params;
  std::swap(swapped.branches[a], swapped.branches[b]);
  for (std::size_t u = 0; u < width; ++u)
    for (std::size_t c = 0; c < e; ++c)
      std::swap(swapped.common.values[u * cols + a * e + c], swapped.common.values[u * cols + b * e + c]);
  RegressionInput sin = in;
  std::swap(sin.sources[a], sin.sources[b]);
  const auto out = meta_forward(spec, swapped, sin);
  EXPECT_EQ(out.theta_E.values, base.theta_E.values);
  EXPECT_EQ(out.theta_D.values, base.theta_D.values);
}

TEST(MetaGradient, MatchesFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t d = 2 + rng.index(2), code = d == 2 ? 1 + rng.index(2) : 1;
    const ArchConfig arch{MlpSpec::make({d, code}), MlpSpec::make({code, d})};
    ASSERT_LE(arch.encoder_params(), 6u);
    ASSERT_LE(arch.decoder_params(), 6u);
    const std::size_t m = 2 + rng.index(2);
    const auto spec = MetaSpec::make(arch, m, {3}, 2, {3});
    ASSERT_LE(spec.param_count(), 400u);
    const auto params = meta_init(spec, rng.next());
    std::vector<std::vector<double>> enc;
    RegressionInput in;
    for (std::size_t k = 0; k < m; ++k) enc.push_back(random_values(arch.encoder_params(), rng.next()));
    for (std::size_t k = 0; k < m; ++k) in.sources.push_back({enc[k], static_cast<double>(rng.index(5)) / 3.0 - 1.0 / 3.0});
    const auto target = model_from(arch, random_values(arch.total_params(), rng.next(), 0.5));
    std::vector<Sample> batch;
    for (int s = 0; s < 3; ++s) batch.push_back({random_values(d, rng.next()), random_values(d, rng.next())});
    const double lambda = 0.1 + rng.uniform();

    const auto lg = meta_loss_and_grad(spec, params, in, target, batch, lambda);
    const ParamVector flat{params.flatten(), 0};
    auto f = [&](const ParamVector& q) {
      return meta_loss(spec, MetaParams::unflatten(spec, q.values), in, target, batch, lambda).total;
    };
    const auto fd = finite_diff_gradient(f, flat, 1e-5);
    EXPECT_LT(max_relative_error(lg.grad.flatten(), fd.values), 1e-6) << "trial " << trial;
    EXPECT_NEAR(lg.loss.total, f(flat), 1e-12);
  }
}

TEST(MetaGradient, InactiveBranchesAreEmpty) {
  Micro m;
  const auto lg = meta_loss_and_grad(m.spec, m.params, m.input, m.target, m.batch, 0.1, {false, true});
  EXPECT_TRUE(lg.grad.branches[0].values.empty());
  EXPECT_EQ(lg.grad.branches[1].size(), m.spec.branch.param_count());
  const auto full = meta_loss_and_grad(m.spec, m.params, m.input, m.target, m.batch, 0.1);
  EXPECT_EQ(lg.grad.branches[1].values, full.grad.branches[1].values);
  EXPECT_EQ(lg.grad.common.values, full.grad.common.values);
}

TEST(MetaParams, FlattenRoundtrip) {
  const auto spec = MetaSpec::make(scalar_arch(), 3, {2}, 2, {4});
  const auto p = meta_init(spec, 3);
  EXPECT_EQ(MetaParams::unflatten(spec, p.flatten()), p);
  EXPECT_THROW(MetaParams::unflatten(spec, std::vector<double>(3, 0.0)), std::invalid_argument);
}

// A small world: default tasks with a narrow data network and tiny banks.
struct SmallSetup {
  WorldConfig world = default_world(3);
  ArchConfig arch = default_arch(64, 4, 2);
  MetaSpec spec = MetaSpec::make(arch, 6, {8}, 4, {16});
  Gamma gamma = gamma_from_raw(world.gamma, world.task_count());
  std::vector<ParameterBank> banks;
  MetaTrainConfig config;

  SmallSetup() {
    BankConfig bc;
    bc.p = 2;
    bc.l = 32;
    bc.pool_size = 64;
    bc.hyper.epochs = 2;
    for (std::size_t t = 0; t < 6; ++t) banks.push_back(build_bank(world, t, arch, bc, world.master_seed));
    config.epochs = 2;
    config.pool_size = 64;
    config.consistency_batch = 4;
    config.lr = 1e-3;
  }
};

const SmallSetup& small() {
  static const SmallSetup s;
  return s;
}

TEST(TrainStep, MaskingContract) {
  const auto& s = small();
  auto params = meta_init(s.spec, 8);
  auto opt = MetaOptimizer::make(s.spec, s.config);
  const auto pool = task_pool(s.world, 0, 64, 3);
  Rng rng(44);
  for (int step = 0; step < 40; ++step) {
    const std::size_t i = rng.index(6);
    const auto mode = rng.index(2) ? TrainMode::self : TrainMode::transfer;
    const auto sample = bank_sample(s.banks, i, rng.index(2));
    const auto batch = sample_subset(pool, 4, rng.next());
    const auto before = params;
    train_step(s.spec, params, opt, mode, i, sample, s.gamma, batch, s.config);
    for (std::size_t k = 0; k < 6; ++k) {
      const bool should_change = mode == TrainMode::self ? k == i : k != i;
      if (should_change)
        EXPECT_NE(params.branches[k].values, before.branches[k].values);
      else
        EXPECT_EQ(params.branches[k].values, before.branches[k].values);
    }
    EXPECT_NE(params.common.values, before.common.values);
  }
}

TEST(TrainStep, TransferInputIgnoresOwnEncoder) {
  const auto& s = small();
  const auto params = meta_init(s.spec, 8);
  auto sample = bank_sample(s.banks, 2, 0);
  const std::vector<double> zeros(s.arch.encoder_params(), 0.0);
  const auto a = meta_forward(s.spec, params, mode_input(s.spec, TrainMode::transfer, 2, sample, s.gamma, zeros));
  const auto junk = random_values(s.arch.encoder_params(), 9, 3.0);
  sample.encoders[2] = junk;
  const auto b = meta_forward(s.spec, params, mode_input(s.spec, TrainMode::transfer, 2, sample, s.gamma, zeros));
  EXPECT_EQ(a.theta_E.values, b.theta_E.values);
  EXPECT_EQ(a.theta_D.values, b.theta_D.values);
  const auto c = meta_forward(s.spec, params, mode_input(s.spec, TrainMode::self, 2, sample, s.gamma, zeros));
  EXPECT_NE(a.theta_E.values, c.theta_E.values);
}

TEST(TrainStep, Errors) {
  const auto& s = small();
  auto params = meta_init(s.spec, 8);
  auto opt = MetaOptimizer::make(s.spec, s.config);
  const auto sample = bank_sample(s.banks, 0, 0);
  const auto batch = sample_subset(task_pool(s.world, 0, 64, 3), 4, 1);
  EXPECT_THROW(train_step(s.spec, params, opt, TrainMode::self, 6, sample, s.gamma, batch, s.config),
               std::invalid_argument);
  EXPECT_THROW(train_step(s.spec, params, opt, TrainMode::self, 0, sample, s.gamma, {}, s.config),
               std::invalid_argument);
}

TEST(TrainMeta, HistoryLengthAndDeterminism) {
  const auto& s = small();
  const auto r1 = train_meta(s.banks, s.gamma, s.world, s.spec, s.config, 21);
  EXPECT_EQ(r1.history.size(), s.config.epochs * 2 * 6 * 2);
  EXPECT_EQ(r1.history[0].mode, TrainMode::self);
  EXPECT_EQ(r1.history[1].mode, TrainMode::transfer);
  EXPECT_EQ(r1.history[2].task, 1u);
  EXPECT_EQ(r1.history[12].index, 1u);
  const auto r2 = train_meta(s.banks, s.gamma, s.world, s.spec, s.config, 21);
  EXPECT_EQ(r1.params, r2.params);
  for (const auto& h : r1.history) EXPECT_TRUE(std::isfinite(h.loss.total));
}

TEST(TrainMeta, BankSizeMismatch) {
  const auto& s = small();
  auto banks = s.banks;
  banks[3].models.pop_back();
  EXPECT_THROW(train_meta(banks, s.gamma, s.world, s.spec, s.config, 1), std::invalid_argument);
}

TEST(RegressZeroShot, ValidAndDeterministic) {
  const auto& s = small();
  const auto params = meta_init(s.spec, 4);
  const auto j = s.world.task_index("blur_edge");
  const auto a = regress_zero_shot(s.spec, params, s.banks, s.gamma, s.world, j);
  EXPECT_EQ(a.task_id, "blur_edge");
  EXPECT_NO_THROW(check_params(s.arch.encoder, a.theta_E));
  EXPECT_NO_THROW(check_params(s.arch.decoder, a.theta_D));
  EXPECT_EQ(a, regress_zero_shot(s.spec, params, s.banks, s.gamma, s.world, j));
  RegressOptions avg;
  avg.average = true;
  const auto b = regress_zero_shot(s.spec, params, s.banks, s.gamma, s.world, j, avg);
  EXPECT_NE(a.theta_E.values, b.theta_E.values);
  EXPECT_THROW(regress_zero_shot(s.spec, params, s.banks, s.gamma, s.world, 1), std::invalid_argument);
}

TEST(TransferDecoder, FrozenEncoderAndDeterminism) {
  const auto& s = small();
  const auto enc = mlp_init(s.arch.encoder, 77);
  BankConfig budget;
  budget.l = 32;
  budget.pool_size = 64;
  budget.hyper.epochs = 2;
  const auto t = s.world.task_index("edge");
  const auto a = transfer_decoder(enc, t, s.world, s.arch, budget, 5);
  EXPECT_EQ(a.theta_E.values, enc.values);
  EXPECT_EQ(a.task_id, "edge");
  EXPECT_EQ(a, transfer_decoder(enc, t, s.world, s.arch, budget, 5));
  EXPECT_THROW(transfer_decoder(enc, s.world.task_index("invert"), s.world, s.arch, budget, 5), std::invalid_argument);
}

}  // namespace
}  // namespace ttnet
