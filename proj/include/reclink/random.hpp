#ifndef RECLINK_RANDOM_HPP
#define RECLINK_RANDOM_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace reclink {

using rng_t = std::mt19937_64;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent generator from a base seed and a key path such as
/// (tag, chain, block). The same key always yields the same stream, so work
/// can be split across threads in any order without changing results.
inline rng_t make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> key) {
  std::uint64_t h = mix64(seed);
  for (auto k : key)
    h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(mix64(h)),
                    static_cast<std::uint32_t>(mix64(h) >> 32)};
  return rng_t(seq);
}

// Stream tags.
namespace stream {
inline constexpr std::uint64_t synth = 1;
inline constexpr std::uint64_t em_init = 2;
inline constexpr std::uint64_t blcm = 3;
inline constexpr std::uint64_t hblcm = 4;
inline constexpr std::uint64_t experiment = 5;
} // namespace stream

/// Uniform on the open interval (0, 1).
inline double uniform01(rng_t &rng) {
  for (;;) {
    double u = std::generate_canonical<double, 53>(rng);
    if (u > 0.0)
      return u;
  }
}

inline double std_normal(rng_t &rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  return d(rng);
}

/// log of a Gamma(shape, 1) variate; stays finite for very small shapes.
inline double log_gamma_variate(double shape, rng_t &rng) {
  if (shape < 1.0) {
    std::gamma_distribution<double> g(shape + 1.0, 1.0);
    return std::log(g(rng)) + std::log(uniform01(rng)) / shape;
  }
  std::gamma_distribution<double> g(shape, 1.0);
  return std::log(g(rng));
}

inline double beta_variate(double a, double b, rng_t &rng) {
  double la = log_gamma_variate(a, rng);
  double lb = log_gamma_variate(b, rng);
  // a / (a + b) computed as a logistic of the log difference.
  return 1.0 / (1.0 + std::exp(lb - la));
}

inline std::uint64_t binomial_variate(std::uint64_t n, double p, rng_t &rng) {
  if (n == 0 || p <= 0.0)
    return 0;
  if (p >= 1.0)
    return n;
  std::binomial_distribution<std::uint64_t> d(n, p);
  return d(rng);
}

} // namespace reclink

#endif
