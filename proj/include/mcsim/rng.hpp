#pragma once
// Counter-based deterministic random streams. Every (seed, process, entity)
// triple owns an independent sequence, so adding an entity or disabling a
// process never shifts the draws of any other stream.

#include <cmath>
#include <cstdint>
#include <string_view>

namespace mcsim {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

class RngStream {
 public:
  RngStream() = default;

  RngStream(std::uint64_t seed, std::string_view process, std::uint64_t entity = 0)
      : key_(detail::splitmix64(seed ^ detail::splitmix64(detail::fnv1a(process) ^
                                                          detail::splitmix64(entity)))) {}

  std::uint64_t next_u64() { return detail::splitmix64(key_ ^ detail::splitmix64(counter_++)); }

  // [0, 1)
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // (0, 1]
  double uniform01_open_low() { return 1.0 - uniform01(); }

  // [0, n)
  int uniform_int(int n) { return n <= 1 ? 0 : static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

  double exponential(double mean) { return -mean * std::log(uniform01_open_low()); }

  // Always consumes exactly two uniforms.
  double normal(double mu, double sigma) {
    double u1 = uniform01_open_low();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mu + sigma * r * std::cos(6.283185307179586476925286766559 * u2);
  }

  double truncated_normal(double mu, double sigma, double lo, double hi) {
    for (;;) {
      double x = normal(mu, sigma);
      if (x >= lo && x <= hi) return x;
    }
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_ = 0x853c49e6748fea9bULL;
  std::uint64_t counter_ = 0;
};

// Derives a fresh 64-bit seed from a master seed and a label, for keying
// sub-simulations (episodes, realizations) off one configured seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label, std::uint64_t index) {
  return detail::splitmix64(master ^ detail::splitmix64(detail::fnv1a(label) + index));
}

}  // namespace mcsim
