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

#include <set>

#include "ttnet/base_learner.hpp"

namespace ttnet {
namespace {

std::vector<Sample> indexed_dataset(std::size_t n) {
  std::vector<Sample> d;
  for (std::size_t i = 0; i < n; ++i) d.push_back({{static_cast<double>(i)}, {0.0}});
  return d;
}

TEST(SampleSubset, SingletonRepeats) {
  const auto d = indexed_dataset(1);
  const auto s = sample_subset(d, 3, 1);
  ASSERT_EQ(s.size(), 3u);
  for (const auto& x : s) EXPECT_EQ(x.x, d[0].x);
}

TEST(SampleSubset, LengthAndErrors) {
  const auto d = indexed_dataset(7);
  for (std::size_t l : {1u, 5u, 100u}) EXPECT_EQ(sample_subset(d, l, 3).size(), l);
  EXPECT_THROW(sample_subset(std::vector<Sample>{}, 3, 1), std::invalid_argument);
}

TEST(SampleSubset, UniformFrequencies) {
  const auto d = indexed_dataset(10);
  const auto s = sample_subset(d, 10000, 42);
  std::vector<std::size_t> counts(10, 0);
  for (const auto& x : s) ++counts[static_cast<std::size_t>(x.x[0])];
  for (auto c : counts) {
    EXPECT_GE(c / 10000.0, 0.08);
    EXPECT_LE(c / 10000.0, 0.12);
  }
}

TEST(Arch, DefaultShapes) {
  const auto a = default_arch();
  EXPECT_EQ(a.encoder.dims, (std::vector<std::size_t>{64, 48, 16}));
  EXPECT_EQ(a.decoder.dims, (std::vector<std::size_t>{16, 48, 64}));
  EXPECT_EQ(a.encoder_params(), 3904u);
  EXPECT_EQ(a.decoder_params(), 3952u);
  EXPECT_NO_THROW(a.validate(64));
  EXPECT_THROW(a.validate(49), std::invalid_argument);
  ArchConfig bad{MlpSpec::make({64, 8}), MlpSpec::make({16, 64})};
  EXPECT_THROW(bad.validate(64), std::invalid_argument);
}

TEST(Arch, SplitRoundtrip) {
  const auto a = default_arch();
  std::vector<double> v(a.total_params());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i) * 0.5;
  const auto m = split_params(a, v, "t");
  EXPECT_EQ(m.combined().values, v);
  v.pop_back();
  EXPECT_THROW(split_params(a, v, "t"), std::invalid_argument);
}

class AutoencodeModel : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    world_ = new WorldConfig(default_world(1));
    arch_ = new ArchConfig(default_arch());
    const auto pool = task_pool(*world_, 0, 4096, 1);
    trace_ = new std::vector<double>();
    model_ = new ModelParams(
        train_task_model(*world_, world_->tasks[0], *arch_, pool, 512, TrainHyper{}, bank_seeds(1, 0, 0), trace_));
  }
  static void TearDownTestSuite() {
    delete world_;
    delete arch_;
    delete trace_;
    delete model_;
  }
  static WorldConfig* world_;
  static ArchConfig* arch_;
  static std::vector<double>* trace_;
  static ModelParams* model_;
};

WorldConfig* AutoencodeModel::world_ = nullptr;
ArchConfig* AutoencodeModel::arch_ = nullptr;
std::vector<double>* AutoencodeModel::trace_ = nullptr;
ModelParams* AutoencodeModel::model_ = nullptr;

TEST_F(AutoencodeModel, LossDecreases) {
  ASSERT_EQ(trace_->size(), 50u);
  EXPECT_LT(trace_->back(), trace_->front());
  EXPECT_EQ(model_->final_loss, trace_->back());
  EXPECT_GE(model_->final_loss, 0.0);
}

TEST_F(AutoencodeModel, HeldOutMse) {
  const auto test = task_test_set(*world_, 0, 256, 1);
  EXPECT_LT(model_mse(*arch_, *model_, test), 0.02);
}

TEST_F(AutoencodeModel, Deterministic) {
  const auto pool = task_pool(*world_, 0, 4096, 1);
  const auto again = train_task_model(*world_, world_->tasks[0], *arch_, pool, 512, TrainHyper{}, bank_seeds(1, 0, 0));
  EXPECT_EQ(again.theta_E.values, model_->theta_E.values);
  EXPECT_EQ(again.theta_D.values, model_->theta_D.values);
}

TEST(TrainTaskModel, DivergenceIsReported) {
  const auto w = default_world(1);
  const auto a = default_arch();
  const auto pool = task_pool(w, 0, 64, 1);
  TrainHyper h;
  h.lr = 50.0;
  h.epochs = 20;
  EXPECT_THROW(train_task_model(w, w.tasks[0], a, pool, 64, h, 3), TrainingDiverged);
}

TEST(TrainTaskModel, PartialFinalBatch) {
  const auto w = default_world(1);
  const auto a = default_arch();
  const auto pool = task_pool(w, 2, 64, 1);
  TrainHyper h;
  h.epochs = 2;
  h.batch_size = 32;
  std::vector<double> trace;
  const auto m = train_task_model(w, w.tasks[2], a, pool, 45, h, 9, &trace);
  EXPECT_EQ(trace.size(), 2u);
  EXPECT_TRUE(std::isfinite(m.final_loss));
}

TEST(BuildBank, DistinctDeterministicModels) {
  const auto w = default_world(1);
  const auto a = default_arch();
  BankConfig c;
  c.p = 4;
  c.l = 64;
  c.pool_size = 256;
  c.hyper.epochs = 3;
  const auto bank = build_bank(w, 4, a, c, 1);
  ASSERT_EQ(bank.size(), 4u);
  EXPECT_EQ(bank.task_id, "blur");
  EXPECT_EQ(bank.arch_fingerprint, a.fingerprint());
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < i; ++j) EXPECT_NE(bank.models[i].combined().values, bank.models[j].combined().values);
  const auto again = build_bank(w, 4, a, c, 1);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(again.models[i].combined().values, bank.models[i].combined().values);
  for (const auto& m : bank.models) EXPECT_LT(m.final_loss, kDivergenceGuard);
}

TEST(BuildBank, Errors) {
  const auto w = default_world(1);
  BankConfig c;
  c.p = 0;
  EXPECT_THROW(build_bank(w, 0, default_arch(), c, 1), std::invalid_argument);
  c.p = 1;
  EXPECT_THROW(build_bank(w, 7, default_arch(), c, 1), std::invalid_argument);
}

TEST(BankSeeds, NeverShareSubsetAndInit) {
  std::set<std::pair<std::uint64_t, std::uint64_t>> seen;
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t k = 0; k < 64; ++k) {
      const auto s = bank_seeds(1, t, k);
      EXPECT_TRUE(seen.insert({s.subset, s.init}).second);
    }
  // Model k shares its initialization across tasks.
  EXPECT_EQ(bank_seeds(1, 0, 5).init, bank_seeds(1, 3, 5).init);
  EXPECT_NE(bank_seeds(1, 0, 5).subset, bank_seeds(1, 3, 5).subset);
}

TEST(Pools, TestSetIsDisjointFromPool) {
  const auto w = default_world(1);
  const auto pool = task_pool(w, 1, 256, 1);
  const auto test = task_test_set(w, 1, 64, 1);
  for (const auto& t : test)
    for (const auto& p : pool) ASSERT_NE(t.x, p.x);
}

}  // namespace
}  // namespace ttnet
