#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fkmc {

// Counter-mode seed derivation: replica j of a run seeded with `master` uses
// derive_seed(master, j).  Derived streams are decorrelated regardless of how
// work is sharded across threads, which is what makes parallel runs mergeable
// and worker-count independent.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 0x632BE59BD9B4E019ull));
}

inline std::uint64_t derive_seed2(std::uint64_t master, std::uint64_t i, std::uint64_t j) {
  return derive_seed(derive_seed(master, i), j);
}

// Gaussian draws via explicit Box-Muller on top of mt19937_64.  The stdlib
// normal_distribution is implementation-defined; doing the transform by hand
// keeps trajectories reproducible for a pinned seed independent of toolchain.
// Cosine branch only, so every draw consumes exactly two engine outputs.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : eng_(seed) {}

  double uniform() {  // [0, 1)
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double gaussian() {
    const double u1 = (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 eng_;
};

inline constexpr std::uint64_t kDefaultSeed = 123456789ull;

}  // namespace fkmc
