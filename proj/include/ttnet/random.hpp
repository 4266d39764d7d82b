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

#ifndef TTNET_RANDOM_HPP_
#define TTNET_RANDOM_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace ttnet {

/// SplitMix64 finalizer applied to `x + golden`.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  std::uint64_t z = x + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// What a derived seed is used for. The numeric values are part of the
/// reproducibility contract and must never be reordered.
enum class Purpose : std::uint64_t {
  init = 0,         // data-network initialization
  subset = 1,       // bootstrap subset draw
  shuffle = 2,      // minibatch order
  pool = 3,         // per-task sampling pool
  sample = 4,       // one sample within a dataset
  votes = 5,        // simulated annotator
  meta_init = 6,    // meta-network initialization
  consistency = 7,  // consistency batch draw
  test = 8,         // held-out test set
  oracle = 9,       // harness-trained supervised model
  transfer = 10,    // decoder finetuning
  control = 11,     // random frozen encoder
  embedding = 12,   // parameter autoencoder
  stage = 13,       // per-stage seed recorded in manifests
};

/// Stream index for a (task slot, model index, purpose) triple.
///
/// Layout: task slot in bits 40..63, model index in bits 8..39, purpose in
/// bits 0..7. Task slot 0 is reserved for streams shared by every task (for
/// example the initialization of bank model k); task t of a world uses slot
/// t + 1.
constexpr std::uint64_t stream_index(std::uint64_t task_slot,
                                     std::uint64_t model_index,
                                     Purpose purpose) {
  return (task_slot << 40) | ((model_index & 0xFFFFFFFFULL) << 8) |
         static_cast<std::uint64_t>(purpose);
}

/// derived = splitmix64(master ^ (golden * stream mod 2^64)).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master ^ (0x9E3779B97F4A7C15ULL * stream));
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t task_slot,
                                    std::uint64_t model_index, Purpose purpose) {
  return derive_seed(master, stream_index(task_slot, model_index, purpose));
}

/// Portable random source. The engine is std::mt19937_64 (its output
/// sequence is fixed by the standard); the real-valued transforms are written
/// out here because the standard distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) { return engine_() % n; }

  /// Uniform integer in [lo, hi].
  int integer(int lo, int hi) {
    return lo + static_cast<int>(index(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  /// Standard normal via Box-Muller (one draw per call, no caching).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ttnet

#endif  // TTNET_RANDOM_HPP_
