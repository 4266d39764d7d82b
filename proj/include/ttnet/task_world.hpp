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

// A procedurally generated family of related patch-to-patch tasks.

#ifndef TTNET_TASK_WORLD_HPP_
#define TTNET_TASK_WORLD_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttnet/nn_core.hpp"
#include "ttnet/random.hpp"

namespace ttnet {

enum class TaskKind : std::uint8_t {
  autoencode,
  denoise,
  scale,
  invert,
  blur,
  edge,
  soft_threshold,
  blur_edge,
};

inline const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::autoencode: return "autoencode";
    case TaskKind::denoise: return "denoise";
    case TaskKind::scale: return "scale";
    case TaskKind::invert: return "invert";
    case TaskKind::blur: return "blur";
    case TaskKind::edge: return "edge";
    case TaskKind::soft_threshold: return "soft_threshold";
    case TaskKind::blur_edge: return "blur_edge";
  }
  return "?";
}

inline TaskKind task_kind_from_string(const std::string& s) {
  for (auto k : {TaskKind::autoencode, TaskKind::denoise, TaskKind::scale, TaskKind::invert,
                 TaskKind::blur, TaskKind::edge, TaskKind::soft_threshold, TaskKind::blur_edge})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown task kind '" + s + "'");
}

struct TaskSpec {
  std::string id;
  TaskKind kind = TaskKind::autoencode;
  double scale = 0.5;             // scale: y = scale * x
  double noise_sigma = 0.1;       // denoise
  double threshold_center = 0.5;  // soft_threshold
  double threshold_width = 0.1;   // soft_threshold
  bool zero_shot = false;

  void validate() const {
    if (id.empty()) throw std::invalid_argument("task id must be non-empty");
    if (!(noise_sigma >= 0.0 && noise_sigma <= 0.5))
      throw std::invalid_argument("task '" + id + "': noise_sigma outside [0, 0.5]");
    if (!(scale > 0.0 && scale <= 1.0))
      throw std::invalid_argument("task '" + id + "': scale outside (0, 1]");
    if (!(threshold_width > 0.0))
      throw std::invalid_argument("task '" + id + "': threshold_width must be positive");
  }

  bool operator==(const TaskSpec&) const = default;
};

/// Ordinal relation labels and their class indices in the fixed order
/// (-1, 0, +1, +2, +3).
inline constexpr std::array<int, 5> kRelationLabels = {-1, 0, 1, 2, 3};
inline constexpr int kNoVote = -100;

inline int label_to_class(int label) {
  if (label < -1 || label > 3) throw std::invalid_argument("relation label outside {-1..3}");
  return label + 1;
}
inline int class_to_label(int cls) { return kRelationLabels.at(static_cast<std::size_t>(cls)); }

struct WorldConfig {
  std::size_t patch_side = 8;
  int blob_min = 1;
  int blob_max = 4;
  std::vector<TaskSpec> tasks;  // known tasks first, then zero-shot tasks
  std::uint64_t master_seed = 1;
  std::vector<int> gamma;       // K x K row-major relation labels

  std::size_t task_count() const { return tasks.size(); }
  std::size_t data_dim() const { return patch_side * patch_side; }

  std::size_t known_count() const {
    std::size_t m = 0;
    for (const auto& t : tasks) m += t.zero_shot ? 0 : 1;
    return m;
  }

  std::size_t task_index(const std::string& id) const {
    for (std::size_t i = 0; i < tasks.size(); ++i)
      if (tasks[i].id == id) return i;
    throw std::invalid_argument("unknown task id '" + id + "'");
  }

  const TaskSpec& task(const std::string& id) const { return tasks[task_index(id)]; }

  int gamma_at(std::size_t row, std::size_t col) const { return gamma[row * tasks.size() + col]; }

  std::vector<std::string> task_ids() const {
    std::vector<std::string> ids;
    for (const auto& t : tasks) ids.push_back(t.id);
    return ids;
  }

  void validate() const {
    if (patch_side < 2) throw std::invalid_argument("patch_side must be >= 2");
    if (blob_min < 1 || blob_max < blob_min) throw std::invalid_argument("invalid blob count range");
    const std::size_t k = tasks.size();
    const std::size_t m = known_count();
    if (m < 2) throw std::invalid_argument("world needs at least 2 known tasks");
    if (k <= m) throw std::invalid_argument("world needs at least one zero-shot task");
    for (std::size_t i = 0; i < k; ++i) {
      tasks[i].validate();
      if (i < m && tasks[i].zero_shot)
        throw std::invalid_argument("known tasks must precede zero-shot tasks");
      for (std::size_t j = 0; j < i; ++j)
        if (tasks[j].id == tasks[i].id) throw std::invalid_argument("duplicate task id '" + tasks[i].id + "'");
    }
    if (gamma.size() != k * k) throw std::invalid_argument("gamma must have K*K entries");
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        const int g = gamma_at(i, j);
        if (i == j && g != 3) throw std::invalid_argument("gamma diagonal must be +3");
        if (i != j && g != -1 && g != 1 && g != 2)
          throw std::invalid_argument("gamma off-diagonal entries must be in {-1, +1, +2}");
      }
  }

  bool operator==(const WorldConfig&) const = default;
};

/// Eight tasks: six known and two zero-shot, with the reference relation table.
inline WorldConfig default_world(std::uint64_t master_seed = 1) {
  WorldConfig w;
  w.master_seed = master_seed;
  auto task = [](std::string id, TaskKind kind, bool zero_shot) {
    TaskSpec t;
    t.id = std::move(id);
    t.kind = kind;
    t.zero_shot = zero_shot;
    return t;
  };
  w.tasks = {
      task("autoencode", TaskKind::autoencode, false),
      task("denoise", TaskKind::denoise, false),
      task("scale", TaskKind::scale, false),
      task("soft_threshold", TaskKind::soft_threshold, false),
      task("blur", TaskKind::blur, false),
      task("edge", TaskKind::edge, false),
      task("invert", TaskKind::invert, true),
      task("blur_edge", TaskKind::blur_edge, true),
  };
  const std::size_t k = w.tasks.size();
  w.gamma.assign(k * k, 1);
  auto set = [&](const char* a, const char* b, int v) {
    const auto i = w.task_index(a), j = w.task_index(b);
    w.gamma[i * k + j] = v;
    w.gamma[j * k + i] = v;
  };
  for (std::size_t i = 0; i < k; ++i) w.gamma[i * k + i] = 3;
  set("autoencode", "scale", 2);
  set("autoencode", "invert", 2);
  set("autoencode", "denoise", 2);
  set("blur", "blur_edge", 2);
  set("edge", "blur_edge", 2);
  set("autoencode", "edge", -1);
  set("soft_threshold", "edge", -1);
  set("scale", "invert", 1);
  set("blur", "edge", 1);
  return w;
}

// ---------------------------------------------------------------------------
// Patches and transforms

/// Sum of Gaussian blobs clipped to [0, 1], row-major s x s.
inline std::vector<double> gen_patch(std::size_t side, int blob_min, int blob_max,
                                     std::uint64_t seed) {
  if (side < 2) throw std::invalid_argument("patch side must be >= 2");
  Rng rng(seed);
  std::vector<double> patch(side * side, 0.0);
  const int count = rng.integer(blob_min, blob_max);
  const double s = static_cast<double>(side);
  for (int b = 0; b < count; ++b) {
    const double cy = rng.uniform(-0.5, s - 0.5);
    const double cx = rng.uniform(-0.5, s - 0.5);
    const double width = rng.uniform(1.0, 2.5);
    const double amp = rng.uniform(0.4, 1.0);
    for (std::size_t r = 0; r < side; ++r)
      for (std::size_t c = 0; c < side; ++c) {
        const double dy = static_cast<double>(r) - cy, dx = static_cast<double>(c) - cx;
        patch[r * side + c] += amp * std::exp(-(dx * dx + dy * dy) / (2.0 * width * width));
      }
  }
  for (auto& v : patch) v = std::clamp(v, 0.0, 1.0);
  return patch;
}

namespace detail {

// Reflect padding without edge repetition: -1 -> 1, s -> s - 2.
inline std::size_t reflect(std::ptrdiff_t i, std::size_t side) {
  const auto n = static_cast<std::ptrdiff_t>(side);
  if (i < 0) i = -i;
  if (i >= n) i = 2 * (n - 1) - i;
  return static_cast<std::size_t>(i);
}

inline std::vector<double> convolve3(std::span<const double> img, std::size_t side,
                                     const std::array<double, 9>& kernel) {
  std::vector<double> out(side * side, 0.0);
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) {
      double acc = 0.0;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const auto rr = reflect(static_cast<std::ptrdiff_t>(r) + dr, side);
          const auto cc = reflect(static_cast<std::ptrdiff_t>(c) + dc, side);
          acc += kernel[static_cast<std::size_t>((dr + 1) * 3 + (dc + 1))] * img[rr * side + cc];
        }
      out[r * side + c] = acc;
    }
  return out;
}

inline std::vector<double> blur(std::span<const double> img, std::size_t side) {
  static constexpr std::array<double, 9> k = {1 / 16.0, 2 / 16.0, 1 / 16.0, 2 / 16.0, 4 / 16.0,
                                              2 / 16.0, 1 / 16.0, 2 / 16.0, 1 / 16.0};
  return convolve3(img, side, k);
}

inline std::vector<double> edge(std::span<const double> img, std::size_t side) {
  static constexpr std::array<double, 9> gh = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
  static constexpr std::array<double, 9> gv = {-1, -2, -1, 0, 0, 0, 1, 2, 1};
  auto h = convolve3(img, side, gh);
  const auto v = convolve3(img, side, gv);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = (std::abs(h[i]) + std::abs(v[i])) / 8.0;
  return h;
}

}  // namespace detail

/// Maps a clean patch to an (input, target) pair. Only `denoise` consumes the
/// seed.
inline Sample apply_task(const TaskSpec& task, std::span<const double> clean, std::uint64_t seed) {
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(clean.size()))));
  if (side * side != clean.size() || side < 2) throw std::invalid_argument("patch is not square");
  Sample s;
  s.x.assign(clean.begin(), clean.end());
  switch (task.kind) {
    case TaskKind::autoencode:
      s.y = s.x;
      break;
    case TaskKind::denoise: {
      Rng rng(seed);
      for (auto& v : s.x) v = std::clamp(v + task.noise_sigma * rng.normal(), 0.0, 1.0);
      s.y.assign(clean.begin(), clean.end());
      break;
    }
    case TaskKind::scale:
      s.y = s.x;
      for (auto& v : s.y) v *= task.scale;
      break;
    case TaskKind::invert:
      s.y = s.x;
      for (auto& v : s.y) v = 1.0 - v;
      break;
    case TaskKind::blur:
      s.y = detail::blur(s.x, side);
      break;
    case TaskKind::edge:
      s.y = detail::edge(s.x, side);
      break;
    case TaskKind::soft_threshold:
      s.y = s.x;
      for (auto& v : s.y) v = 1.0 / (1.0 + std::exp(-(v - task.threshold_center) / task.threshold_width));
      break;
    case TaskKind::blur_edge:
      s.y = detail::edge(detail::blur(s.x, side), side);
      break;
    default:
      throw std::invalid_argument("unknown task kind");
  }
  return s;
}

/// n samples; sample i uses patch and noise seeds derived from (seed, i).
inline std::vector<Sample> make_dataset(const WorldConfig& world, const TaskSpec& task,
                                        std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("dataset size must be >= 1");
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto patch = gen_patch(world.patch_side, world.blob_min, world.blob_max,
                                 derive_seed(seed, 0, i, Purpose::sample));
    out.push_back(apply_task(task, patch, derive_seed(seed, 1, i, Purpose::sample)));
  }
  return out;
}

/// The ground-truth relation table, row-major K x K.
inline std::vector<int> true_gamma(const WorldConfig& world) {
  world.validate();
  return world.gamma;
}

/// Row-major K x K <-> length K^2 item list.
inline std::vector<int> flatten_gamma(const std::vector<std::vector<int>>& rows) {
  std::vector<int> out;
  for (const auto& r : rows) {
    if (r.size() != rows.size()) throw std::invalid_argument("gamma must be square");
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

inline std::vector<std::vector<int>> deflatten_gamma(std::span<const int> items, std::size_t k) {
  if (items.size() != k * k) throw std::invalid_argument("item count must equal K^2");
  std::vector<std::vector<int>> rows(k);
  for (std::size_t i = 0; i < k; ++i) rows[i].assign(items.begin() + static_cast<std::ptrdiff_t>(i * k),
                                                      items.begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
  return rows;
}

// ---------------------------------------------------------------------------
// Annotator votes

/// votes[a * N + n] is annotator a's label for item n, or kNoVote.
struct VoteTable {
  std::size_t annotators = 0;
  std::size_t items = 0;
  std::vector<int> votes;

  int at(std::size_t annotator, std::size_t item) const { return votes[annotator * items + item]; }

  void validate() const {
    if (votes.size() != annotators * items) throw std::invalid_argument("vote table shape mismatch");
    for (int v : votes)
      if (v != kNoVote && (v < -1 || v > 3)) throw std::invalid_argument("vote outside label set");
  }

  bool operator==(const VoteTable&) const = default;
};

/// Annotator a reports the true label with probability quality[a] and each of
/// the four other labels with probability (1 - quality[a]) / 4.
inline VoteTable simulate_votes(std::span<const int> gamma_flat, std::size_t annotators,
                                std::span<const double> quality, std::uint64_t seed) {
  if (annotators < 1) throw std::invalid_argument("need at least one annotator");
  if (quality.size() != annotators) throw std::invalid_argument("one quality value per annotator");
  for (double q : quality)
    if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("annotator quality outside (0, 1]");
  VoteTable t;
  t.annotators = annotators;
  t.items = gamma_flat.size();
  t.votes.resize(annotators * t.items);
  for (std::size_t a = 0; a < annotators; ++a) {
    Rng rng(derive_seed(seed, 0, a, Purpose::votes));
    for (std::size_t n = 0; n < t.items; ++n) {
      const int truth = label_to_class(gamma_flat[n]);
      const double u = rng.uniform();
      int cls = truth;
      if (u >= quality[a]) {
        int other = static_cast<int>(rng.index(4));
        cls = other >= truth ? other + 1 : other;
      }
      t.votes[a * t.items + n] = class_to_label(cls);
    }
  }
  return t;
}

inline VoteTable simulate_votes(std::span<const int> gamma_flat, std::size_t annotators,
                                double quality, std::uint64_t seed) {
  const std::vector<double> q(annotators, quality);
  return simulate_votes(gamma_flat, annotators, q, seed);
}

}  // namespace ttnet

#endif  // TTNET_TASK_WORLD_HPP_
