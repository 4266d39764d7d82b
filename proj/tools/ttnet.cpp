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

// ttnet command-line driver: one subcommand per pipeline stage plus `replay`.
//
// Exit status: 0 success, 1 runtime failure, 2 bad config or arguments,
// 3 digest mismatch on replay.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ttnet/pipeline.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<std::string> task;
  std::optional<std::string> target;
  std::optional<double> lambda;
  std::optional<std::size_t> epochs;
};

void add_options(CLI::App* sub, Options& o, bool stage) {
  sub->add_option("--out", o.out, "Output directory")->capture_default_str();
  if (!stage) return;
  sub->add_option("--config", o.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "Master seed (overrides the config)");
  sub->add_option("--task", o.task, "Task id (train-bank: bank to build; transfer-decoder: source)");
  sub->add_option("--target", o.target, "Target task id (regress, transfer-decoder)");
  sub->add_option("--lambda", o.lambda, "Data-consistency weight for train-meta")->check(CLI::NonNegativeNumber);
  sub->add_option("--epochs", o.epochs, "Epochs for the stage's own training loop")->check(CLI::PositiveNumber);
}

ttnet::ExperimentConfig load_config(const Options& o) {
  ttnet::ExperimentConfig c;
  if (!o.config.empty()) c = ttnet::parse_config(o.config);
  if (o.seed) c.world.master_seed = *o.seed;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ttnet: zero-shot task transfer pipeline"};
  app.require_subcommand(1);
  Options opts;
  for (const auto* name : ttnet::kStageNames) add_options(app.add_subcommand(name, std::string("Run stage ") + name), opts, true);
  add_options(app.add_subcommand("run-all", "Run every stage in order"), opts, true);
  add_options(app.add_subcommand("replay", "Re-execute the manifest in --out and verify digests"), opts, false);
  CLI11_PARSE(app, argc, argv);

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "replay") {
      const auto r = ttnet::replay(opts.out);
      for (const auto& m : r.mismatches)
        std::cerr << "mismatch " << m.path << ": expected " << m.expected << ", regenerated "
                  << (m.actual.empty() ? "<none>" : m.actual) << "\n";
      if (!r.ok) {
        std::cerr << "replay: FAILED\n";
        return 3;
      }
      std::cout << "replay: all digests verified\n";
      return 0;
    }
    const auto config = load_config(opts);
    if (cmd == "run-all") {
      ttnet::run_all(config, opts.out);
      std::cout << "wrote " << (std::filesystem::path(opts.out) / ttnet::kManifestName).string() << "\n";
      return 0;
    }
    ttnet::StageArgs args{opts.task, opts.target, opts.lambda, opts.epochs};
    const auto rec = ttnet::run_stage(config, opts.out, cmd, args);
    for (const auto& [rel, digest] : rec.outputs) std::cout << digest << "  " << rel << "\n";
    return 0;
  } catch (const ttnet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ttnet::PipelineError& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (e.code() == ttnet::PipelineError::Code::digest_mismatch) return 3;
    if (e.code() == ttnet::PipelineError::Code::bad_arguments) return 2;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
