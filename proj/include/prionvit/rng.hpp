#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace prionvit {

// Counter-based generator: output i is splitmix64(seed + i * golden). The full
// state is (seed, position), so it serializes trivially and independent
// streams can be keyed off any tuple of integers with derive().
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "splitmix64-counter";

  explicit Rng(std::uint64_t seed = 0, std::uint64_t position = 0) : seed_(seed), position_(position) {}

  // Independent stream keyed by (seed, keys...). Order of keys matters.
  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t position_;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace prionvit
