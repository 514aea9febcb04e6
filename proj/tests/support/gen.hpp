#pragma once

// Small deterministic generators for property tests.

#include <cstdint>
#include <random>
#include <vector>

namespace gen {

class Source {
 public:
  explicit Source(std::uint64_t seed) : rng_(seed) {}

  std::int64_t range(std::int64_t lo, std::int64_t hi) {  // inclusive
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng_);
  }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return real(0.0, 1.0) < p; }
  std::uint64_t bits() { return rng_(); }

  template <class T>
  const T &pick(const std::vector<T> &items) {
    return items[static_cast<std::size_t>(range(0, static_cast<std::int64_t>(items.size()) - 1))];
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace gen
