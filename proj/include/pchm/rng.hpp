#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace pchm {

// Counter-based pseudo-random generation built on the splitmix64 finalizer.
// Every stream is a (key, counter) pair, so any draw is addressable without
// iterating a shared state: fields key a stream per bond, simulations key a
// stream per (seed, purpose, index). Identical keys reproduce identical
// sequences on every platform.

constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t splitmix_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : s) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= 0x100000001B3ull;
  }
  return h;
}

// Key for an independent substream: hash of (master seed, purpose, index).
constexpr std::uint64_t derive_stream_key(std::uint64_t master, std::string_view purpose,
                                          std::uint64_t index = 0) {
  std::uint64_t k = splitmix_mix(master + kGoldenGamma) ^ fnv1a64(purpose);
  return splitmix_mix(k + index * kGoldenGamma);
}

// Key for a single addressable cell, e.g. (seed, site, axis) of a bond.
constexpr std::uint64_t cell_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t k = splitmix_mix(seed + kGoldenGamma);
  k = splitmix_mix(k ^ (a * 0xBF58476D1CE4E5B9ull));
  return splitmix_mix(k ^ (b * 0x94D049BB133111EBull));
}

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : state_(key) {}

  std::uint64_t next_u64() {
    state_ += kGoldenGamma;
    return splitmix_mix(state_);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1); safe argument for log().
  double u01_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double exponential(double rate) { return -std::log(u01_open()) / rate; }

  // Uniform index in [0, n) via the multiply-shift reduction (bias <= n/2^64).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::uint64_t state_;
};

}  // namespace pchm
