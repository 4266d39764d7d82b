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

// Experiment configuration, bank/meta weight files, digests and the small
// text formats (vote CSV, Gamma JSON, importance CSV).

#ifndef TTNET_PERSIST_HPP_
#define TTNET_PERSIST_HPP_

#include <openssl/evp.h>
#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "json.hpp"
#include "ttnet/base_learner.hpp"
#include "ttnet/eval_harness.hpp"
#include "ttnet/meta_net.hpp"
#include "ttnet/task_basis.hpp"
#include "ttnet/task_world.hpp"
#include "ttnet/vote_aggregation.hpp"

namespace ttnet {

using json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "0.1.0";

/// Configuration problem; the message starts with the offending field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// ---------------------------------------------------------------------------
// Experiment configuration

struct MetaArchConfig {
  std::vector<std::size_t> branch_hidden{128};
  std::size_t embed_dim = 64;
  std::vector<std::size_t> common_hidden{256};
  bool operator==(const MetaArchConfig&) const = default;
};

struct VoteConfig {
  std::size_t annotators = 30;
  double quality = 0.7;
  bool operator==(const VoteConfig&) const = default;
};

struct EvalConfig {
  std::size_t n_test = 256;
  RelativeTo relative_to = RelativeTo::estimate;
  bool operator==(const EvalConfig&) const = default;
};

struct BasisConfig {
  std::size_t embed_dim = kEmbedDim;
  std::size_t hidden = 64;
  std::size_t basis_count = kBasisCount;
  std::size_t iters = 100;
  double l1 = 0.01;
  double lambda = 0.1;
  std::size_t epochs = 150;
  std::size_t models_per_task = 4;
  bool operator==(const BasisConfig&) const = default;
};

struct TransferConfig {
  std::string source = "blur_edge";
  std::string target = "edge";
  bool operator==(const TransferConfig&) const = default;
};

struct ExperimentConfig {
  WorldConfig world = default_world(1);
  std::vector<std::size_t> encoder_hidden{48};
  std::size_t code_dim = 16;
  BankConfig bank;
  MetaArchConfig meta_arch;
  MetaTrainConfig meta;
  VoteConfig votes;
  EvalConfig eval;
  BasisConfig basis;
  TransferConfig transfer;

  std::uint64_t master_seed() const { return world.master_seed; }

  ArchConfig arch() const {
    const std::size_t d = world.data_dim();
    std::vector<std::size_t> enc{d}, dec{code_dim};
    enc.insert(enc.end(), encoder_hidden.begin(), encoder_hidden.end());
    enc.push_back(code_dim);
    dec.insert(dec.end(), encoder_hidden.rbegin(), encoder_hidden.rend());
    dec.push_back(d);
    return {MlpSpec::make(enc), MlpSpec::make(dec)};
  }

  MetaSpec meta_spec() const {
    return MetaSpec::make(arch(), world.known_count(), meta_arch.branch_hidden, meta_arch.embed_dim,
                          meta_arch.common_hidden);
  }

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "size fields are read as uint64");

// Reads the fields of one JSON object and rejects any field it was not asked
// for.
class FieldReader {
 public:
  FieldReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const std::string& key, std::uint64_t& out) {
    if (auto v = find(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(field(key), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& key, int& out) {
    if (auto v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(field(key), "expected an integer");
      out = v->get<int>();
    }
  }
  void get(const std::string& key, double& out) {
    if (auto v = find(key)) {
      if (!v->is_number()) throw ConfigError(field(key), "expected a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, bool& out) {
    if (auto v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(field(key), "expected a boolean");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (auto v = find(key)) {
      if (!v->is_string()) throw ConfigError(field(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, std::vector<std::size_t>& out) {
    if (auto v = find(key)) {
      if (!v->is_array()) throw ConfigError(field(key), "expected an array of positive integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_unsigned() || e.get<std::uint64_t>() == 0)
          throw ConfigError(field(key), "expected an array of positive integers");
        out.push_back(e.get<std::size_t>());
      }
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.contains(it.key())) throw ConfigError(field(it.key()), "unknown field");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field, what);
}

inline TaskSpec parse_task(const json& j, const std::string& path) {
  FieldReader r(j, path);
  TaskSpec t;
  std::string kind;
  r.get("id", t.id);
  r.get("kind", kind);
  require(!t.id.empty(), r.field("id"), "required");
  require(!kind.empty(), r.field("kind"), "required");
  try {
    t.kind = task_kind_from_string(kind);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(r.field("kind"), e.what());
  }
  r.get("scale", t.scale);
  r.get("noise_sigma", t.noise_sigma);
  r.get("threshold_center", t.threshold_center);
  r.get("threshold_width", t.threshold_width);
  r.get("zero_shot", t.zero_shot);
  r.finish();
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
  return t;
}

inline json task_to_json(const TaskSpec& t) {
  return {{"id", t.id},
          {"kind", to_string(t.kind)},
          {"scale", t.scale},
          {"noise_sigma", t.noise_sigma},
          {"threshold_center", t.threshold_center},
          {"threshold_width", t.threshold_width},
          {"zero_shot", t.zero_shot}};
}

}  // namespace detail

/// Strict parse: unknown fields and type mismatches are errors naming the
/// field path; absent fields take their defaults. The world defaults to the
/// eight-task reference world; a custom task list must come with its gamma.
inline ExperimentConfig parse_config_json(const json& j) {
  ExperimentConfig c;
  detail::FieldReader root(j, "");
  std::uint64_t seed = 1;
  root.get("master_seed", seed);

  c.world = default_world(seed);
  if (auto w = root.find("world")) {
    detail::FieldReader r(*w, "world");
    r.get("patch_side", c.world.patch_side);
    r.get("blob_min", c.world.blob_min);
    r.get("blob_max", c.world.blob_max);
    const json* tasks = r.find("tasks");
    const json* gamma = r.find("gamma");
    if (tasks != nullptr) {
      detail::require(tasks->is_array(), "world.tasks", "expected an array");
      detail::require(gamma != nullptr, "world.gamma", "required when world.tasks is given");
      c.world.tasks.clear();
      for (std::size_t i = 0; i < tasks->size(); ++i)
        c.world.tasks.push_back(detail::parse_task((*tasks)[i], "world.tasks[" + std::to_string(i) + "]"));
    }
    if (gamma != nullptr) {
      detail::require(gamma->is_array() && gamma->size() == c.world.tasks.size(), "world.gamma",
                      "expected a K x K array of integers");
      c.world.gamma.clear();
      for (const auto& row : *gamma) {
        detail::require(row.is_array() && row.size() == c.world.tasks.size(), "world.gamma",
                        "expected a K x K array of integers");
        for (const auto& v : row) {
          detail::require(v.is_number_integer(), "world.gamma", "expected a K x K array of integers");
          c.world.gamma.push_back(v.get<int>());
        }
      }
    }
    r.finish();
  }
  try {
    c.world.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("world", e.what());
  }

  if (auto a = root.find("arch")) {
    detail::FieldReader r(*a, "arch");
    r.get("encoder_hidden", c.encoder_hidden);
    r.get("code_dim", c.code_dim);
    r.finish();
    detail::require(c.code_dim > 0, "arch.code_dim", "must be positive");
  }
  if (auto b = root.find("bank")) {
    detail::FieldReader r(*b, "bank");
    r.get("p", c.bank.p);
    r.get("l", c.bank.l);
    r.get("pool_size", c.bank.pool_size);
    r.get("epochs", c.bank.hyper.epochs);
    r.get("batch_size", c.bank.hyper.batch_size);
    r.get("lr", c.bank.hyper.lr);
    r.get("beta1", c.bank.hyper.beta1);
    r.get("beta2", c.bank.hyper.beta2);
    r.get("eps", c.bank.hyper.eps);
    r.finish();
    detail::require(c.bank.p >= 1, "bank.p", "must be >= 1");
    detail::require(c.bank.l >= 1, "bank.l", "must be >= 1");
    detail::require(c.bank.pool_size >= 1, "bank.pool_size", "must be >= 1");
    detail::require(c.bank.hyper.batch_size >= 1, "bank.batch_size", "must be >= 1");
    detail::require(c.bank.hyper.lr > 0.0, "bank.lr", "must be positive");
  }
  if (auto m = root.find("meta")) {
    detail::FieldReader r(*m, "meta");
    r.get("branch_hidden", c.meta_arch.branch_hidden);
    r.get("embed_dim", c.meta_arch.embed_dim);
    r.get("common_hidden", c.meta_arch.common_hidden);
    r.get("lambda", c.meta.lambda);
    r.get("lr", c.meta.lr);
    r.get("beta1", c.meta.beta1);
    r.get("beta2", c.meta.beta2);
    r.get("eps", c.meta.eps);
    r.get("batch_size", c.meta.batch_size);
    r.get("epochs", c.meta.epochs);
    r.get("consistency_batch", c.meta.consistency_batch);
    r.get("pool_size", c.meta.pool_size);
    r.get("average_inference", c.meta.average_inference);
    r.finish();
    detail::require(c.meta.lambda >= 0.0, "meta.lambda", "must be >= 0");
    detail::require(c.meta.lr > 0.0, "meta.lr", "must be positive");
    detail::require(c.meta_arch.embed_dim > 0, "meta.embed_dim", "must be positive");
    detail::require(c.meta.lambda == 0.0 || c.meta.consistency_batch > 0, "meta.consistency_batch",
                    "must be positive when lambda > 0");
  }
  if (auto v = root.find("votes")) {
    detail::FieldReader r(*v, "votes");
    r.get("annotators", c.votes.annotators);
    r.get("quality", c.votes.quality);
    r.finish();
    detail::require(c.votes.annotators >= 1, "votes.annotators", "must be >= 1");
    detail::require(c.votes.quality > 0.0 && c.votes.quality <= 1.0, "votes.quality", "must be in (0, 1]");
  }
  if (auto e = root.find("eval")) {
    detail::FieldReader r(*e, "eval");
    std::string rel = "estimate";
    r.get("n_test", c.eval.n_test);
    r.get("relative_to", rel);
    r.finish();
    detail::require(c.eval.n_test >= 1, "eval.n_test", "must be >= 1");
    detail::require(rel == "estimate" || rel == "ground_truth", "eval.relative_to",
                    "expected \"estimate\" or \"ground_truth\"");
    c.eval.relative_to = rel == "estimate" ? RelativeTo::estimate : RelativeTo::ground_truth;
  }
  if (auto b = root.find("basis")) {
    detail::FieldReader r(*b, "basis");
    r.get("embed_dim", c.basis.embed_dim);
    r.get("hidden", c.basis.hidden);
    r.get("basis_count", c.basis.basis_count);
    r.get("iters", c.basis.iters);
    r.get("l1", c.basis.l1);
    r.get("lambda", c.basis.lambda);
    r.get("epochs", c.basis.epochs);
    r.get("models_per_task", c.basis.models_per_task);
    r.finish();
    detail::require(c.basis.embed_dim >= 1, "basis.embed_dim", "must be >= 1");
    detail::require(c.basis.basis_count >= 1 && c.basis.basis_count <= std::min(c.basis.embed_dim, c.world.task_count()),
                    "basis.basis_count", "must be in [1, min(embed_dim, K)]");
    detail::require(c.basis.l1 >= 0.0, "basis.l1", "must be >= 0");
    detail::require(c.basis.lambda >= 0.0, "basis.lambda", "must be >= 0");
    detail::require(c.basis.models_per_task >= 1, "basis.models_per_task", "must be >= 1");
  }
  if (auto t = root.find("transfer")) {
    detail::FieldReader r(*t, "transfer");
    r.get("source", c.transfer.source);
    r.get("target", c.transfer.target);
    r.finish();
  }
  root.finish();
  detail::require(c.basis.models_per_task <= c.bank.p, "basis.models_per_task", "must not exceed bank.p");
  return c;
}

inline json config_to_json(const ExperimentConfig& c) {
  json tasks = json::array();
  for (const auto& t : c.world.tasks) tasks.push_back(detail::task_to_json(t));
  json gamma = json::array();
  const std::size_t k = c.world.task_count();
  for (std::size_t i = 0; i < k; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < k; ++j) row.push_back(c.world.gamma_at(i, j));
    gamma.push_back(row);
  }
  json j;
  j["master_seed"] = c.world.master_seed;
  j["world"] = {{"patch_side", c.world.patch_side},
                {"blob_min", c.world.blob_min},
                {"blob_max", c.world.blob_max},
                {"tasks", tasks},
                {"gamma", gamma}};
  j["arch"] = {{"encoder_hidden", c.encoder_hidden}, {"code_dim", c.code_dim}};
  j["bank"] = {{"p", c.bank.p},
               {"l", c.bank.l},
               {"pool_size", c.bank.pool_size},
               {"epochs", c.bank.hyper.epochs},
               {"batch_size", c.bank.hyper.batch_size},
               {"lr", c.bank.hyper.lr},
               {"beta1", c.bank.hyper.beta1},
               {"beta2", c.bank.hyper.beta2},
               {"eps", c.bank.hyper.eps}};
  j["meta"] = {{"branch_hidden", c.meta_arch.branch_hidden},
               {"embed_dim", c.meta_arch.embed_dim},
               {"common_hidden", c.meta_arch.common_hidden},
               {"lambda", c.meta.lambda},
               {"lr", c.meta.lr},
               {"beta1", c.meta.beta1},
               {"beta2", c.meta.beta2},
               {"eps", c.meta.eps},
               {"batch_size", c.meta.batch_size},
               {"epochs", c.meta.epochs},
               {"consistency_batch", c.meta.consistency_batch},
               {"pool_size", c.meta.pool_size},
               {"average_inference", c.meta.average_inference}};
  j["votes"] = {{"annotators", c.votes.annotators}, {"quality", c.votes.quality}};
  j["eval"] = {{"n_test", c.eval.n_test},
               {"relative_to", c.eval.relative_to == RelativeTo::estimate ? "estimate" : "ground_truth"}};
  j["basis"] = {{"embed_dim", c.basis.embed_dim},
                {"hidden", c.basis.hidden},
                {"basis_count", c.basis.basis_count},
                {"iters", c.basis.iters},
                {"l1", c.basis.l1},
                {"lambda", c.basis.lambda},
                {"epochs", c.basis.epochs},
                {"models_per_task", c.basis.models_per_task}};
  j["transfer"] = {{"source", c.transfer.source}, {"target", c.transfer.target}};
  return j;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  return parse_config_json(j);
}

// ---------------------------------------------------------------------------
// Digests

/// Lowercase hex SHA-256.
inline std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

inline std::string file_digest(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

inline std::string config_hash(const ExperimentConfig& c) { return sha256_hex(config_to_json(c).dump()); }

// ---------------------------------------------------------------------------
// Bank files
//
// Layout, all integers little-endian:
//   "TTPB" | u16 version | u8 kind (0 bank, 1 meta) | u8 reserved
//   u32 spec count, then per spec: u32 n, n x u32 dims, (n-1) x u8 activation
//   u32 branch count (meta: m; bank: 0)
//   u32 tag length | tag bytes (bank: task id)
//   u64 record count p
//   p x (u64 seed, f64 final loss)
//   payload: p x parameter-count x f64
//   u32 CRC-32 of the payload bytes

inline constexpr std::uint16_t kBankFormatVersion = 1;

enum class BankKind : std::uint8_t { bank = 0, meta = 1 };

class BankFileError : public std::runtime_error {
 public:
  enum class Code { bad_magic, unsupported_version, crc_mismatch, truncated, malformed, wrong_kind };
  BankFileError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

struct BankRecord {
  std::uint64_t seed = 0;
  double final_loss = 0.0;
};

struct BankFile {
  BankKind kind = BankKind::bank;
  std::vector<MlpSpec> specs;
  std::uint32_t branch_count = 0;
  std::string tag;
  std::vector<BankRecord> records;
  std::vector<double> payload;

  std::size_t record_width() const {
    if (kind == BankKind::meta) {
      if (specs.size() != 2) throw BankFileError(BankFileError::Code::malformed, "meta file needs two specs");
      return branch_count * specs[0].param_count() + specs[1].param_count();
    }
    std::size_t n = 0;
    for (const auto& s : specs) n += s.param_count();
    return n;
  }
};

namespace detail {

class ByteWriter {
 public:
  template <class T>
  void put(T v) {
    std::uint64_t bits;
    if constexpr (std::is_same_v<T, double>)
      bits = std::bit_cast<std::uint64_t>(v);
    else
      bits = static_cast<std::uint64_t>(v);
    for (std::size_t b = 0; b < sizeof(T); ++b) buf_.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
  }
  void bytes(std::string_view s) { buf_.append(s); }
  std::string& str() { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view s) : s_(s) {}

  template <class T>
  T get() {
    need(sizeof(T));
    std::uint64_t bits = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(s_[pos_ + b])) << (8 * b);
    pos_ += sizeof(T);
    if constexpr (std::is_same_v<T, double>)
      return std::bit_cast<double>(bits);
    else
      return static_cast<T>(bits);
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto v = s_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  std::size_t remaining() const { return s_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (s_.size() - pos_ < n) throw BankFileError(BankFileError::Code::truncated, "bank file is truncated");
  }
  std::string_view s_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

inline std::string encode_bank_file(const BankFile& f) {
  if (f.payload.size() != f.records.size() * f.record_width())
    throw std::invalid_argument("payload length does not match record count x parameter count");
  detail::ByteWriter w;
  w.bytes("TTPB");
  w.put<std::uint16_t>(kBankFormatVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(f.kind));
  w.put<std::uint8_t>(0);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(f.specs.size()));
  for (const auto& s : f.specs) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.dims.size()));
    for (auto d : s.dims) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (auto a : s.activations) w.put<std::uint8_t>(static_cast<std::uint8_t>(a));
  }
  w.put<std::uint32_t>(f.branch_count);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(f.tag.size()));
  w.bytes(f.tag);
  w.put<std::uint64_t>(f.records.size());
  for (const auto& r : f.records) {
    w.put<std::uint64_t>(r.seed);
    w.put<double>(r.final_loss);
  }
  const std::size_t payload_start = w.str().size();
  for (double v : f.payload) w.put<double>(v);
  const auto crc = detail::crc32_of(std::string_view(w.str()).substr(payload_start));
  w.put<std::uint32_t>(crc);
  return std::move(w.str());
}

inline BankFile decode_bank_file(std::string_view bytes) {
  using Code = BankFileError::Code;
  detail::ByteReader r(bytes);
  if (bytes.size() < 4 || bytes.substr(0, 4) != "TTPB") throw BankFileError(Code::bad_magic, "not a TTPB file");
  r.bytes(4);
  const auto version = r.get<std::uint16_t>();
  if (version != kBankFormatVersion)
    throw BankFileError(Code::unsupported_version, "unsupported bank format version " + std::to_string(version));
  BankFile f;
  const auto kind = r.get<std::uint8_t>();
  if (kind > 1) throw BankFileError(Code::malformed, "unknown kind tag " + std::to_string(kind));
  f.kind = static_cast<BankKind>(kind);
  r.get<std::uint8_t>();
  const auto nspec = r.get<std::uint32_t>();
  if (nspec > 64) throw BankFileError(Code::malformed, "implausible spec count");
  for (std::uint32_t s = 0; s < nspec; ++s) {
    MlpSpec spec;
    const auto n = r.get<std::uint32_t>();
    if (n < 2 || n > 64) throw BankFileError(Code::malformed, "implausible layer count");
    for (std::uint32_t i = 0; i < n; ++i) spec.dims.push_back(r.get<std::uint32_t>());
    for (std::uint32_t i = 0; i + 1 < n; ++i) {
      const auto a = r.get<std::uint8_t>();
      if (a > 1) throw BankFileError(Code::malformed, "unknown activation tag");
      spec.activations.push_back(static_cast<Activation>(a));
    }
    try {
      spec.validate();
    } catch (const std::invalid_argument& e) {
      throw BankFileError(Code::malformed, e.what());
    }
    f.specs.push_back(std::move(spec));
  }
  f.branch_count = r.get<std::uint32_t>();
  const auto tag_len = r.get<std::uint32_t>();
  f.tag = std::string(r.bytes(tag_len));
  const auto p = r.get<std::uint64_t>();
  if (p > (std::uint64_t{1} << 32)) throw BankFileError(Code::malformed, "implausible record count");
  for (std::uint64_t i = 0; i < p; ++i) {
    BankRecord rec;
    rec.seed = r.get<std::uint64_t>();
    rec.final_loss = r.get<double>();
    f.records.push_back(rec);
  }
  const std::size_t n = static_cast<std::size_t>(p) * f.record_width();
  if (r.remaining() < n * 8 + 4) throw BankFileError(Code::truncated, "bank payload is truncated");
  const auto payload = r.bytes(n * 8);
  const auto crc = r.get<std::uint32_t>();
  if (r.remaining() != 0) throw BankFileError(Code::malformed, "trailing bytes after CRC");
  if (detail::crc32_of(payload) != crc) throw BankFileError(Code::crc_mismatch, "payload CRC-32 mismatch");
  detail::ByteReader pr(payload);
  f.payload.resize(n);
  for (auto& v : f.payload) v = pr.get<double>();
  return f;
}

/// Writes a bank and returns the file's SHA-256.
inline std::string save_bank(const ParameterBank& bank, const ArchConfig& arch, const std::filesystem::path& path) {
  BankFile f;
  f.kind = BankKind::bank;
  f.specs = {arch.encoder, arch.decoder};
  f.tag = bank.task_id;
  for (const auto& m : bank.models) {
    f.records.push_back({m.train_seed, m.final_loss});
    f.payload.insert(f.payload.end(), m.theta_E.values.begin(), m.theta_E.values.end());
    f.payload.insert(f.payload.end(), m.theta_D.values.begin(), m.theta_D.values.end());
  }
  const auto bytes = encode_bank_file(f);
  write_file(path, bytes);
  return sha256_hex(bytes);
}

struct LoadedBank {
  ArchConfig arch;
  ParameterBank bank;
};

struct LoadedMeta {
  MlpSpec branch;
  MlpSpec common;
  MetaParams params;
};

inline LoadedBank bank_from_file(const BankFile& f) {
  if (f.kind != BankKind::bank) throw BankFileError(BankFileError::Code::wrong_kind, "file holds meta weights, not a bank");
  if (f.specs.size() != 2) throw BankFileError(BankFileError::Code::malformed, "bank file needs two specs");
  LoadedBank out;
  out.arch = {f.specs[0], f.specs[1]};
  out.bank.task_id = f.tag;
  out.bank.arch_fingerprint = out.arch.fingerprint();
  const std::size_t width = f.record_width();
  for (std::size_t i = 0; i < f.records.size(); ++i) {
    auto m = split_params(out.arch, std::span<const double>(f.payload).subspan(i * width, width), f.tag);
    m.train_seed = f.records[i].seed;
    m.final_loss = f.records[i].final_loss;
    out.bank.models.push_back(std::move(m));
  }
  return out;
}

inline LoadedMeta meta_from_file(const BankFile& f) {
  if (f.kind != BankKind::meta) throw BankFileError(BankFileError::Code::wrong_kind, "file holds a bank, not meta weights");
  if (f.records.size() != 1) throw BankFileError(BankFileError::Code::malformed, "meta file must hold one record");
  LoadedMeta out;
  out.branch = f.specs.at(0);
  out.common = f.specs.at(1);
  std::size_t off = 0;
  const std::size_t nb = out.branch.param_count();
  for (std::uint32_t k = 0; k < f.branch_count; ++k, off += nb)
    out.params.branches.push_back({{f.payload.begin() + static_cast<std::ptrdiff_t>(off),
                                    f.payload.begin() + static_cast<std::ptrdiff_t>(off + nb)},
                                   out.branch.fingerprint()});
  out.params.common = {{f.payload.begin() + static_cast<std::ptrdiff_t>(off), f.payload.end()}, out.common.fingerprint()};
  return out;
}

inline std::variant<LoadedBank, LoadedMeta> load_bank(const std::filesystem::path& path) {
  const auto f = decode_bank_file(read_file(path));
  if (f.kind == BankKind::bank) return bank_from_file(f);
  return meta_from_file(f);
}

inline LoadedBank load_parameter_bank(const std::filesystem::path& path) {
  return bank_from_file(decode_bank_file(read_file(path)));
}

inline LoadedMeta load_meta(const std::filesystem::path& path) { return meta_from_file(decode_bank_file(read_file(path))); }

inline std::string save_meta(const MetaSpec& spec, const MetaParams& params, const std::filesystem::path& path) {
  params.check(spec);
  BankFile f;
  f.kind = BankKind::meta;
  f.specs = {spec.branch, spec.common};
  f.branch_count = static_cast<std::uint32_t>(spec.m);
  f.tag = "meta";
  f.records.push_back({0, 0.0});
  f.payload = params.flatten();
  const auto bytes = encode_bank_file(f);
  write_file(path, bytes);
  return sha256_hex(bytes);
}

// ---------------------------------------------------------------------------
// Text formats

/// annotator_id,item_index,label; absent votes are omitted.
inline std::string votes_to_csv(const VoteTable& t) {
  std::ostringstream os;
  os << "annotator_id,item_index,label\n";
  for (std::size_t a = 0; a < t.annotators; ++a)
    for (std::size_t n = 0; n < t.items; ++n)
      if (t.at(a, n) != kNoVote) os << a << ',' << n << ',' << t.at(a, n) << '\n';
  return os.str();
}

/// Annotator ids and item indices are zero-based; the table is sized by the
/// largest ids seen, or by `items` when given.
inline VoteTable votes_from_csv(const std::string& text, std::size_t items = 0) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("vote CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "annotator_id,item_index,label") throw std::invalid_argument("vote CSV header must be annotator_id,item_index,label");
  struct Row {
    std::size_t a, n;
    int label;
  };
  std::vector<Row> rows;
  std::size_t max_a = 0, max_n = 0, lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    long long a = -1, n = -1, label = 0;
    char c1 = 0, c2 = 0;
    if (!(ls >> a >> c1 >> n >> c2 >> label) || c1 != ',' || c2 != ',' || a < 0 || n < 0 || !(ls >> std::ws).eof())
      throw std::invalid_argument("vote CSV line " + std::to_string(lineno) + " is malformed");
    if (label < -1 || label > 3)
      throw std::invalid_argument("vote CSV line " + std::to_string(lineno) + ": label outside {-1,0,1,2,3}");
    rows.push_back({static_cast<std::size_t>(a), static_cast<std::size_t>(n), static_cast<int>(label)});
    max_a = std::max(max_a, static_cast<std::size_t>(a));
    max_n = std::max(max_n, static_cast<std::size_t>(n));
  }
  if (rows.empty()) throw std::invalid_argument("vote CSV has no votes");
  VoteTable t;
  t.annotators = max_a + 1;
  t.items = items ? items : max_n + 1;
  if (max_n >= t.items) throw std::invalid_argument("vote CSV item index out of range");
  t.votes.assign(t.annotators * t.items, kNoVote);
  for (const auto& r : rows) {
    int& slot = t.votes[r.a * t.items + r.n];
    if (slot != kNoVote) throw std::invalid_argument("duplicate vote in CSV");
    slot = r.label;
  }
  return t;
}

inline json gamma_to_json(const Gamma& g, const std::vector<std::string>& task_ids) {
  if (task_ids.size() != g.k) throw std::invalid_argument("task id count must equal K");
  return {{"k", g.k}, {"task_ids", task_ids}, {"raw", g.raw}, {"normalized", g.normalized}};
}

struct GammaFile {
  Gamma gamma;
  std::vector<std::string> task_ids;
};

inline GammaFile gamma_from_json(const json& j) {
  GammaFile out;
  const auto k = j.at("k").get<std::size_t>();
  out.task_ids = j.at("task_ids").get<std::vector<std::string>>();
  if (out.task_ids.size() != k) throw std::invalid_argument("gamma JSON: task_ids length must equal k");
  out.gamma = gamma_from_raw(j.at("raw").get<std::vector<int>>(), k);
  return out;
}

inline std::string importance_to_csv(const std::vector<ImportanceRow>& rows) {
  std::ostringstream os;
  os << "zero_task,source_task,shared_basis_count,rank\n";
  for (const auto& r : rows) os << r.zero_task << ',' << r.source_task << ',' << r.shared_basis_count << ',' << r.rank << '\n';
  return os.str();
}

}  // namespace ttnet

#endif  // TTNET_PERSIST_HPP_
