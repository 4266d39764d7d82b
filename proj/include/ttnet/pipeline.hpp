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

// Pipeline stages over an output directory, the run manifest, and replay.
//
// Every artifact is a pure function of the resolved config, the stage
// arguments and the artifacts the stage reads, so re-running a stage rewrites
// identical bytes.

#ifndef TTNET_PIPELINE_HPP_
#define TTNET_PIPELINE_HPP_

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttnet/persist.hpp"

namespace ttnet {

namespace fs = std::filesystem;

class PipelineError : public std::runtime_error {
 public:
  enum class Code { missing_input, digest_mismatch, bad_arguments, config_mismatch, bad_manifest };
  PipelineError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

inline constexpr std::array<const char*, 9> kStageNames = {
    "gen-world", "simulate-votes", "aggregate-votes", "train-bank", "train-meta",
    "regress",   "transfer-decoder", "eval",          "basis"};

inline std::size_t stage_number(const std::string& name) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i)
    if (name == kStageNames[i]) return i;
  throw PipelineError(PipelineError::Code::bad_arguments, "unknown stage '" + name + "'");
}

inline std::uint64_t stage_seed(std::uint64_t master, const std::string& name) {
  return derive_seed(master, 0, stage_number(name), Purpose::stage);
}

/// Per-invocation overrides. `epochs` applies to the stage's own training
/// loop (bank, meta, or embedding); `lambda` to meta training.
struct StageArgs {
  std::optional<std::string> task;
  std::optional<std::string> target;
  std::optional<double> lambda;
  std::optional<std::size_t> epochs;

  json to_json() const {
    json j = json::object();
    if (task) j["task"] = *task;
    if (target) j["target"] = *target;
    if (lambda) j["lambda"] = *lambda;
    if (epochs) j["epochs"] = *epochs;
    return j;
  }

  static StageArgs from_json(const json& j) {
    StageArgs a;
    if (j.contains("task")) a.task = j["task"].get<std::string>();
    if (j.contains("target")) a.target = j["target"].get<std::string>();
    if (j.contains("lambda")) a.lambda = j["lambda"].get<double>();
    if (j.contains("epochs")) a.epochs = j["epochs"].get<std::size_t>();
    return a;
  }
};

struct StageRecord {
  std::string name;
  StageArgs args;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;   // relative path -> SHA-256
  std::map<std::string, std::string> outputs;  // relative path -> SHA-256
};

struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string config_hash;
  std::uint64_t master_seed = 0;
  json config;
  std::vector<StageRecord> stages;

  json to_json() const {
    json j;
    j["tool_version"] = tool_version;
    j["config_hash"] = config_hash;
    j["master_seed"] = master_seed;
    j["config"] = config;
    j["stages"] = json::array();
    for (const auto& s : stages)
      j["stages"].push_back({{"name", s.name},
                             {"args", s.args.to_json()},
                             {"seed", s.seed},
                             {"inputs", s.inputs},
                             {"outputs", s.outputs}});
    return j;
  }

  static RunManifest from_json(const json& j) {
    try {
      RunManifest m;
      m.tool_version = j.at("tool_version").get<std::string>();
      m.config_hash = j.at("config_hash").get<std::string>();
      m.master_seed = j.at("master_seed").get<std::uint64_t>();
      m.config = j.at("config");
      for (const auto& s : j.at("stages")) {
        StageRecord r;
        r.name = s.at("name").get<std::string>();
        r.args = StageArgs::from_json(s.at("args"));
        r.seed = s.at("seed").get<std::uint64_t>();
        r.inputs = s.at("inputs").get<std::map<std::string, std::string>>();
        r.outputs = s.at("outputs").get<std::map<std::string, std::string>>();
        m.stages.push_back(std::move(r));
      }
      return m;
    } catch (const json::exception& e) {
      throw PipelineError(PipelineError::Code::bad_manifest, std::string("malformed manifest: ") + e.what());
    }
  }

  /// Replaces the entry with the same name and arguments, else appends.
  void record(StageRecord r) {
    const auto key = r.args.to_json().dump();
    for (auto& s : stages)
      if (s.name == r.name && s.args.to_json().dump() == key) {
        s = std::move(r);
        return;
      }
    stages.push_back(std::move(r));
  }
};

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kReplayDir = ".replay";

inline std::string manifest_text(const RunManifest& m) { return m.to_json().dump(2) + "\n"; }

inline std::optional<RunManifest> read_manifest(const fs::path& out) {
  const auto path = out / kManifestName;
  if (!fs::exists(path)) return std::nullopt;
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw PipelineError(PipelineError::Code::bad_manifest, std::string("manifest is not JSON: ") + e.what());
  }
  return RunManifest::from_json(j);
}

// ---------------------------------------------------------------------------
// Artifact names

inline std::string world_file() { return "world.json"; }
inline std::string votes_file() { return "votes.csv"; }
inline std::string gamma_file() { return "gamma.json"; }
inline std::string bank_file(const std::string& task) { return "bank_" + task + ".ttpb"; }
inline std::string meta_file() { return "meta.ttpb"; }
inline std::string meta_history_file() { return "meta_history.csv"; }
inline std::string regressed_file(const std::string& task) { return "regressed_" + task + ".ttpb"; }
inline std::string transfer_file(const std::string& source, const std::string& target) {
  return "transfer_" + source + "_to_" + target + ".ttpb";
}
inline std::string report_json_file() { return "report.json"; }
inline std::string report_csv_file() { return "report.csv"; }
inline std::string importance_file() { return "importance.csv"; }
inline std::string basis_file() { return "basis.json"; }

/// Carries one stage's reads and writes within an output directory.
class StageContext {
 public:
  StageContext(const ExperimentConfig& config, fs::path out, std::string name, StageArgs args)
      : config_(config), out_(std::move(out)) {
    record_.name = std::move(name);
    record_.args = std::move(args);
    record_.seed = stage_seed(config.master_seed(), record_.name);
  }

  const ExperimentConfig& config() const { return config_; }
  const StageArgs& args() const { return record_.args; }
  std::uint64_t seed() const { return record_.seed; }
  bool exists(const std::string& rel) const { return fs::exists(out_ / rel); }

  std::string read(const std::string& rel) {
    const auto path = out_ / rel;
    if (!fs::exists(path))
      throw PipelineError(PipelineError::Code::missing_input,
                          "stage " + record_.name + " needs " + rel + "; run its producing stage first");
    auto bytes = read_file(path);
    record_.inputs[rel] = sha256_hex(bytes);
    return bytes;
  }

  void write(const std::string& rel, const std::string& bytes) {
    write_file(out_ / rel, bytes);
    record_.outputs[rel] = sha256_hex(bytes);
  }

  LoadedBank read_bank(const std::string& rel) { return bank_from_file(decode_bank_file(read(rel))); }

  void write_bank(const std::string& rel, const BankFile& f) { write(rel, encode_bank_file(f)); }

  StageRecord& record() { return record_; }

 private:
  const ExperimentConfig& config_;
  fs::path out_;
  StageRecord record_;
};

namespace detail {

inline std::size_t resolve_task(const WorldConfig& world, const std::string& id, const char* flag) {
  try {
    return world.task_index(id);
  } catch (const std::exception&) {
    throw PipelineError(PipelineError::Code::bad_arguments, std::string(flag) + ": unknown task '" + id + "'");
  }
}

inline BankFile model_file(const ArchConfig& arch, const std::vector<ModelParams>& models, const std::string& tag) {
  BankFile f;
  f.kind = BankKind::bank;
  f.specs = {arch.encoder, arch.decoder};
  f.tag = tag;
  for (const auto& m : models) {
    f.records.push_back({m.train_seed, m.final_loss});
    f.payload.insert(f.payload.end(), m.theta_E.values.begin(), m.theta_E.values.end());
    f.payload.insert(f.payload.end(), m.theta_D.values.begin(), m.theta_D.values.end());
  }
  return f;
}

inline std::vector<ParameterBank> read_known_banks(StageContext& ctx) {
  const auto& world = ctx.config().world;
  const auto arch = ctx.config().arch();
  std::vector<ParameterBank> banks;
  for (std::size_t i = 0; i < world.known_count(); ++i) {
    auto loaded = ctx.read_bank(bank_file(world.tasks[i].id));
    if (loaded.arch.fingerprint() != arch.fingerprint())
      throw PipelineError(PipelineError::Code::config_mismatch, bank_file(world.tasks[i].id) + " has a different arch");
    banks.push_back(std::move(loaded.bank));
  }
  return banks;
}

inline Gamma read_gamma(StageContext& ctx) {
  const auto g = gamma_from_json(json::parse(ctx.read(gamma_file())));
  if (g.task_ids != ctx.config().world.task_ids())
    throw PipelineError(PipelineError::Code::config_mismatch, "gamma.json task ids do not match the world");
  return g.gamma;
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages

inline void stage_gen_world(StageContext& ctx) {
  const auto& c = ctx.config();
  json j;
  j["config"] = config_to_json(c);
  j["true_gamma"] = deflatten_gamma(true_gamma(c.world), c.world.task_count());
  ctx.write(world_file(), j.dump(2) + "\n");
}

inline void stage_simulate_votes(StageContext& ctx) {
  const auto world = json::parse(ctx.read(world_file()));
  const auto rows = world.at("true_gamma").get<std::vector<std::vector<int>>>();
  const auto votes = simulate_votes(flatten_gamma(rows), ctx.config().votes.annotators, ctx.config().votes.quality,
                                    ctx.seed());
  ctx.write(votes_file(), votes_to_csv(votes));
}

inline void stage_aggregate_votes(StageContext& ctx) {
  const auto& world = ctx.config().world;
  const std::size_t k = world.task_count();
  const auto votes = votes_from_csv(ctx.read(votes_file()), k * k);
  const auto ds = ds_run(votes);
  const auto gamma = assemble_gamma(ds.labels, k);
  ctx.write(gamma_file(), gamma_to_json(gamma, world.task_ids()).dump(2) + "\n");
}

inline void stage_train_bank(StageContext& ctx) {
  const auto& c = ctx.config();
  ctx.read(world_file());
  std::vector<std::size_t> tasks;
  if (ctx.args().task) {
    const auto t = detail::resolve_task(c.world, *ctx.args().task, "--task");
    if (c.world.tasks[t].zero_shot)
      throw PipelineError(PipelineError::Code::bad_arguments, "--task: '" + *ctx.args().task + "' is zero-shot");
    tasks.push_back(t);
  } else {
    for (std::size_t t = 0; t < c.world.known_count(); ++t) tasks.push_back(t);
  }
  BankConfig bc = c.bank;
  if (ctx.args().epochs) bc.hyper.epochs = *ctx.args().epochs;
  const auto arch = c.arch();
  for (auto t : tasks) {
    const auto bank = build_bank(c.world, t, arch, bc, c.master_seed());
    ctx.write_bank(bank_file(c.world.tasks[t].id), detail::model_file(arch, bank.models, bank.task_id));
  }
}

inline std::string meta_history_csv(const WorldConfig& world, const std::vector<StepRecord>& history) {
  std::ostringstream os;
  os << "step,epoch,index,task,mode,total,param_term,data_term\n";
  for (std::size_t s = 0; s < history.size(); ++s) {
    const auto& h = history[s];
    os << s << ',' << h.epoch << ',' << h.index << ',' << world.tasks[h.task].id << ',' << to_string(h.mode) << ','
       << format_real(h.loss.total) << ',' << format_real(h.loss.param_term) << ',' << format_real(h.loss.data_term)
       << '\n';
  }
  return os.str();
}

inline void stage_train_meta(StageContext& ctx) {
  const auto& c = ctx.config();
  const auto banks = detail::read_known_banks(ctx);
  const auto gamma = detail::read_gamma(ctx);
  auto mc = c.meta;
  if (ctx.args().lambda) mc.lambda = *ctx.args().lambda;
  if (ctx.args().epochs) mc.epochs = *ctx.args().epochs;
  const auto spec = c.meta_spec();
  const auto result = train_meta(banks, gamma, c.world, spec, mc, ctx.seed());
  BankFile f;
  f.kind = BankKind::meta;
  f.specs = {spec.branch, spec.common};
  f.branch_count = static_cast<std::uint32_t>(spec.m);
  f.tag = "meta";
  f.records.push_back({ctx.seed(), result.history.empty() ? 0.0 : result.history.back().loss.total});
  f.payload = result.params.flatten();
  ctx.write_bank(meta_file(), f);
  ctx.write(meta_history_file(), meta_history_csv(c.world, result.history));
}

inline void stage_regress(StageContext& ctx) {
  const auto& c = ctx.config();
  std::vector<std::size_t> targets;
  if (ctx.args().target) {
    const auto j = detail::resolve_task(c.world, *ctx.args().target, "--target");
    if (!c.world.tasks[j].zero_shot)
      throw PipelineError(PipelineError::Code::bad_arguments, "--target: '" + *ctx.args().target + "' is a known task");
    targets.push_back(j);
  } else {
    for (std::size_t j = c.world.known_count(); j < c.world.task_count(); ++j) targets.push_back(j);
  }
  const auto spec = c.meta_spec();
  const auto meta = meta_from_file(decode_bank_file(ctx.read(meta_file())));
  if (meta.branch.fingerprint() != spec.branch.fingerprint() || meta.common.fingerprint() != spec.common.fingerprint())
    throw PipelineError(PipelineError::Code::config_mismatch, "meta.ttpb does not match the configured MetaSpec");
  const auto banks = detail::read_known_banks(ctx);
  const auto gamma = detail::read_gamma(ctx);
  RegressOptions opts;
  opts.average = c.meta.average_inference;
  for (auto j : targets) {
    const auto m = regress_zero_shot(spec, meta.params, banks, gamma, c.world, j, opts);
    ctx.write_bank(regressed_file(c.world.tasks[j].id), detail::model_file(c.arch(), {m}, m.task_id));
  }
}

/// Record 0: regressed source encoder with a decoder trained on the target.
/// Record 1: the control, a random frozen encoder with the same decoder budget.
inline void stage_transfer_decoder(StageContext& ctx) {
  const auto& c = ctx.config();
  const std::string source = ctx.args().task.value_or(c.transfer.source);
  const std::string target = ctx.args().target.value_or(c.transfer.target);
  const auto s = detail::resolve_task(c.world, source, "--task");
  const auto t = detail::resolve_task(c.world, target, "--target");
  if (!c.world.tasks[s].zero_shot)
    throw PipelineError(PipelineError::Code::bad_arguments, "--task: transfer source must be a zero-shot task");
  if (c.world.tasks[t].zero_shot)
    throw PipelineError(PipelineError::Code::bad_arguments, "--target: transfer target must be a known task");
  const auto arch = c.arch();
  const auto regressed = ctx.read_bank(regressed_file(source));
  BankConfig budget = c.bank;
  if (ctx.args().epochs) budget.hyper.epochs = *ctx.args().epochs;
  auto moved = transfer_decoder(regressed.bank.models.at(0).theta_E, t, c.world, arch, budget, ctx.seed());
  const auto random_encoder = mlp_init(arch.encoder, derive_seed(ctx.seed(), t + 1, 0, Purpose::control));
  auto control = transfer_decoder(random_encoder, t, c.world, arch, budget, ctx.seed());
  ctx.write_bank(transfer_file(source, target), detail::model_file(arch, {moved, control}, target));
}

/// Zero-shot tasks with a regressed model are compared against the mean of
/// the known-task models; transfer artifacts against their control.
inline void stage_eval(StageContext& ctx) {
  const auto& c = ctx.config();
  const auto arch = c.arch();
  const auto banks = detail::read_known_banks(ctx);
  std::vector<EvalRequest> requests;
  for (std::size_t j = c.world.known_count(); j < c.world.task_count(); ++j) {
    const auto& id = c.world.tasks[j].id;
    if (!ctx.exists(regressed_file(id))) continue;
    const auto reg = ctx.read_bank(regressed_file(id));
    requests.push_back({j, {{"regressed", reg.bank.models.at(0)}, {"mean_params", mean_params_baseline(banks, id)}}});
  }
  for (std::size_t s = c.world.known_count(); s < c.world.task_count(); ++s)
    for (std::size_t t = 0; t < c.world.known_count(); ++t) {
      const auto rel = transfer_file(c.world.tasks[s].id, c.world.tasks[t].id);
      if (!ctx.exists(rel)) continue;
      const auto tr = ctx.read_bank(rel);
      const std::string tag = "from_" + c.world.tasks[s].id;
      requests.push_back(
          {t, {{"transfer_" + tag, tr.bank.models.at(0)}, {"control_" + tag, tr.bank.models.at(1)}}});
    }
  if (requests.empty())
    throw PipelineError(PipelineError::Code::missing_input, "eval needs at least one regressed or transfer artifact");
  const auto report = build_report(c.world, arch, requests, c.eval.n_test, ctx.seed(), c.bank, c.eval.relative_to);
  ctx.write(report_json_file(), report_to_json(report).dump(2) + "\n");
  ctx.write(report_csv_file(), report_to_csv(report));
}

/// Embeds the first models of every known bank plus every regressed model,
/// factorizes the per-task mean embeddings, and ranks the sources of each
/// zero-shot task.
inline void stage_basis(StageContext& ctx) {
  const auto& c = ctx.config();
  const auto arch = c.arch();
  const auto banks = detail::read_known_banks(ctx);
  std::vector<ModelParams> models;
  for (const auto& b : banks)
    for (std::size_t n = 0; n < c.basis.models_per_task; ++n) models.push_back(b.models.at(n));
  for (std::size_t j = c.world.known_count(); j < c.world.task_count(); ++j)
    models.push_back(ctx.read_bank(regressed_file(c.world.tasks[j].id)).bank.models.at(0));

  auto spec = EmbeddingSpec::make(arch, c.basis.embed_dim, c.basis.hidden);
  spec.lambda = c.basis.lambda;
  spec.epochs = ctx.args().epochs.value_or(c.basis.epochs);
  const auto embedding = train_param_embedding(models, spec, c.world, ctx.seed());

  TaskMatrix tm;
  tm.task_ids = c.world.task_ids();
  tm.w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(spec.dim()), static_cast<Eigen::Index>(c.world.task_count()));
  std::vector<std::size_t> counts(c.world.task_count(), 0);
  for (const auto& m : models) {
    const auto t = c.world.task_index(m.task_id);
    const auto e = embed_params(embedding, m);
    for (std::size_t r = 0; r < e.size(); ++r) tm.w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) += e[r];
    ++counts[t];
  }
  for (std::size_t t = 0; t < counts.size(); ++t) tm.w.col(static_cast<Eigen::Index>(t)) /= static_cast<double>(counts[t]);

  const auto f = factorize_task_matrix(tm, c.basis.basis_count, c.basis.iters, c.basis.l1);
  json j;
  j["task_ids"] = tm.task_ids;
  j["embedding_loss_trace"] = embedding.loss_trace;
  j["w"] = detail::matrix_to_json(tm.w);
  j["l"] = detail::matrix_to_json(f.l);
  j["s"] = detail::matrix_to_json(f.s);
  j["objective_trace"] = f.objective_trace;
  j["reconstruction_trace"] = f.reconstruction_trace;
  ctx.write(basis_file(), j.dump(2) + "\n");
  ctx.write(importance_file(), importance_to_csv(importance_report(c.world, f)));
}

// ---------------------------------------------------------------------------
// Driver

inline RunManifest fresh_manifest(const ExperimentConfig& config) {
  RunManifest m;
  m.config = config_to_json(config);
  m.config_hash = sha256_hex(m.config.dump());
  m.master_seed = config.master_seed();
  return m;
}

/// Runs one stage in `out` and updates out/manifest.json. A manifest written
/// under a different config is an error.
inline StageRecord run_stage(const ExperimentConfig& config, const fs::path& out, const std::string& name,
                             const StageArgs& args = {}) {
  stage_number(name);
  auto manifest = fresh_manifest(config);
  if (auto existing = read_manifest(out)) {
    if (existing->config_hash != manifest.config_hash)
      throw PipelineError(PipelineError::Code::config_mismatch,
                          "output directory holds a run with a different config (hash " + existing->config_hash + ")");
    manifest = std::move(*existing);
  }
  fs::create_directories(out);
  StageContext ctx(config, out, name, args);
  switch (stage_number(name)) {
    case 0: stage_gen_world(ctx); break;
    case 1: stage_simulate_votes(ctx); break;
    case 2: stage_aggregate_votes(ctx); break;
    case 3: stage_train_bank(ctx); break;
    case 4: stage_train_meta(ctx); break;
    case 5: stage_regress(ctx); break;
    case 6: stage_transfer_decoder(ctx); break;
    case 7: stage_eval(ctx); break;
    default: stage_basis(ctx); break;
  }
  manifest.record(ctx.record());
  write_file(out / kManifestName, manifest_text(manifest));
  return ctx.record();
}

/// Every stage in order with default arguments.
inline RunManifest run_all(const ExperimentConfig& config, const fs::path& out) {
  for (const auto* name : kStageNames) run_stage(config, out, name);
  return *read_manifest(out);
}

struct DigestMismatch {
  std::string path;
  std::string expected;
  std::string actual;  // empty when the file is missing
};

struct ReplayResult {
  bool ok = true;
  std::vector<DigestMismatch> mismatches;
  RunManifest replayed;
};

/// Checks every recorded output against its digest, re-executes the stages
/// into out/.replay and compares the regenerated digests. A recorded output
/// that no longer matches on disk raises digest_mismatch before any work.
inline ReplayResult replay(const fs::path& out) {
  const auto manifest = read_manifest(out);
  if (!manifest) throw PipelineError(PipelineError::Code::missing_input, "no manifest in " + out.string());
  for (const auto& s : manifest->stages)
    for (const auto& [rel, digest] : s.outputs) {
      const auto path = out / rel;
      const auto actual = fs::exists(path) ? file_digest(path) : std::string();
      if (actual != digest)
        throw PipelineError(PipelineError::Code::digest_mismatch,
                            "digest mismatch for " + rel + " (stage " + s.name + "): expected " + digest + ", found " +
                                (actual.empty() ? "missing file" : actual));
    }
  const auto config = parse_config_json(manifest->config);
  if (config_hash(config) != manifest->config_hash)
    throw PipelineError(PipelineError::Code::bad_manifest, "manifest config does not match its hash");

  const auto dir = out / kReplayDir;
  fs::remove_all(dir);
  for (const auto& s : manifest->stages) run_stage(config, dir, s.name, s.args);

  ReplayResult r;
  r.replayed = *read_manifest(dir);
  std::map<std::string, std::string> regenerated;
  for (const auto& s : r.replayed.stages) regenerated.insert(s.outputs.begin(), s.outputs.end());
  std::map<std::string, std::string> expected;
  for (const auto& s : manifest->stages)
    for (const auto& [rel, digest] : s.outputs) expected[rel] = digest;
  for (const auto& [rel, digest] : expected) {
    auto it = regenerated.find(rel);
    const auto actual = it == regenerated.end() ? std::string() : it->second;
    if (actual != digest) r.mismatches.push_back({rel, digest, actual});
  }
  r.ok = r.mismatches.empty() && manifest_text(r.replayed) == manifest_text(*manifest);
  return r;
}

}  // namespace ttnet

#endif  // TTNET_PIPELINE_HPP_
