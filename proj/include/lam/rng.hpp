// SPDX-License-Identifier: Apache-2.0

#ifndef LAM_RNG_HPP_
#define LAM_RNG_HPP_

#include <array>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>

namespace lam {

// xoshiro256** seeded through SplitMix64. Every random draw in the toolkit
// goes through this class so that outputs depend only on the seed and never
// on the platform's standard-library distributions.
//
// Stream splitting: Rng::stream(seed, {t0, t1, ...}) folds each tag into the
// seed with h = splitmix64(h ^ splitmix64(tag + 0x9E3779B97F4A7C15)), starting
// from h = splitmix64(seed), then expands h into the 256-bit state with four
// successive SplitMix64 outputs. Independent work items (a corpus, a layer, an
// utterance) take their own stream, so output is independent of execution order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller (polar-free form, both outputs used).
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> state_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

// Stable 64-bit tag for a string (FNV-1a).
std::uint64_t fnv1a64(std::span<const char> bytes);

}  // namespace lam

#endif  // LAM_RNG_HPP_
