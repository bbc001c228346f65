#pragma once

// Seeded pseudo-randomness with a bit-stable sequence on every platform.
//
// Generator: xoshiro256** (Blackman & Vigna, 2018), state expanded from the
// 64-bit seed with splitmix64. Distributions are implemented here rather than
// taken from <random> because the standard distributions are not specified
// bit-for-bit and differ between library vendors.
//
//   uniform  : top 53 bits of the next output, scaled to [0, 1)
//   normal   : Box-Muller, both variates used (second one cached)
//   below(n) : Lemire's nearly-divisionless bounded integer
//   choice   : partial Fisher-Yates over 0..n-1

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "dynlab/errors.hpp"
#include "dynlab/tensor.hpp"

namespace dynlab {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
  }

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double normal() {
    if (cached_normal_) {
      const double v = *cached_normal_;
      cached_normal_.reset();
      return v;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_normal_ = radius * std::sin(angle);
    return radius * std::cos(angle);
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ArgumentError("Rng::below: n must be positive");
    __uint128_t m = static_cast<__uint128_t>(next_u64()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<__uint128_t>(next_u64()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Derive an independent stream, e.g. one per sampler.
  Rng fork(std::uint64_t stream) const {
    std::uint64_t x = seed_ ^ (0xD1B54A32D192ED03ULL * (stream + 1));
    return Rng(splitmix64(x));
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
  std::optional<double> cached_normal_;
};

inline Tensor rng_uniform(Rng& rng, std::vector<std::size_t> shape) {
  Tensor out(std::move(shape));
  for (auto& v : out.data()) v = rng.uniform();
  return out;
}

inline Tensor rng_normal(Rng& rng, std::vector<std::size_t> shape, double mean = 0.0,
                         double stddev = 1.0) {
  if (!(stddev >= 0.0)) throw ArgumentError("rng_normal: stddev must be nonnegative");
  Tensor out(std::move(shape));
  for (auto& v : out.data()) v = mean + stddev * rng.normal();
  return out;
}

// k distinct indices drawn uniformly from [0, n), in draw order.
inline std::vector<std::size_t> rng_choice(Rng& rng, std::size_t n, std::size_t k) {
  if (k > n) throw ArgumentError("rng_choice: k > n");
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

inline std::vector<std::size_t> rng_permutation(Rng& rng, std::size_t n) {
  return rng_choice(rng, n, n);
}

}  // namespace dynlab
