#ifndef GROUNDGEN_RNG_HPP
#define GROUNDGEN_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace groundgen {

// Seeded random stream with fully pinned value mappings.
//
// The engine is std::mt19937_64, whose output sequence the C++ standard
// specifies exactly. All distributions here are implemented by hand
// (std::*_distribution is implementation-defined), so a given seed yields
// the same stream of doubles on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) using the top 53 bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform in [0, n) without modulo bias.
  std::uint64_t below(std::uint64_t n);

  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  // Standard normal via Box-Muller; the second deviate is cached.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

// Derives the per-purpose seed for a module from the experiment root seed.
// Documented derivation: splitmix64(root ^ fnv1a64(purpose)).
std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose);

}  // namespace groundgen

#endif
