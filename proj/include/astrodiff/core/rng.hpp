#pragma once
// Deterministic random source. All draws come from mt19937_64 raw output
// through fixed conversions (never std:: distributions, whose sequences are
// implementation-defined), so identical seeds give identical streams on any
// platform. Named substreams let one global seed drive independent
// components reproducibly.

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "astrodiff/core/tensor.hpp"

namespace astrodiff::tg {

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  // Substream seed derived from a master seed and a stream name.
  static uint64_t derive(uint64_t master, std::string_view stream) {
    return splitmix64(master ^ fnv1a64(stream));
  }
  static uint64_t derive(uint64_t master, std::string_view stream, uint64_t index) {
    return splitmix64(splitmix64(master ^ fnv1a64(stream)) + index);
  }

  uint64_t next_u64() { return gen_(); }

  // [0,1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // (0,1]
  double uniform_open() { return static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive bounds
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(gen_() % static_cast<uint64_t>(hi - lo + 1));
  }

  // Box-Muller with cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform_open();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  template <class S>
  void fill_normal(Tensor<S>& t, double sigma = 1.0, double mu = 0.0) {
    for (auto& v : t.data) v = static_cast<S>(mu + sigma * normal());
  }

  template <class S>
  void fill_uniform(Tensor<S>& t, double lo, double hi) {
    for (auto& v : t.data) v = static_cast<S>(uniform(lo, hi));
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace astrodiff::tg
