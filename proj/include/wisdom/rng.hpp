#pragma once

// Seed fan-out. One master seed derives independent streams per component
// (env, noise, init, sampling, ...) through a splitmix64 counter hash, so that
// adding draws to one component never shifts another component's stream.

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace wisdom {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// FNV-1a over the stream name; stable across platforms.
inline std::uint64_t stream_tag(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t counter = 0) {
  return splitmix64(splitmix64(master ^ stream_tag(stream)) + counter);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t master, std::string_view stream, std::uint64_t counter = 0) {
  return Rng(derive_seed(master, stream, counter));
}

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

inline std::vector<double> normal_vector(Rng& rng, std::size_t n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

}  // namespace wisdom
