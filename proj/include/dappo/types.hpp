#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dappo {

using Real = double;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Caller passed data that violates an operation's precondition.
struct InvalidInputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Components were wired together with inconsistent shapes or settings.
struct ConfigurationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::uint64_t split_mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Derives an independent seed for a named substream (worker id, episode
/// index, ...) so that parallel collection stays reproducible.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return split_mix64(seed ^ split_mix64(stream + 0x51ed2701u));
}

/// Deterministic random source. Only the raw mt19937_64 engine output is
/// used; uniform/normal mappings are spelled out here so sequences do not
/// depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(split_mix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    state_ = split_mix64(state_ + 0x9e3779b97f4a7c15ull);
    return state_;
  }

  /// Uniform in [0, 1) with 53 random mantissa bits.
  Real uniform() { return static_cast<Real>(next_u64() >> 11) * 0x1.0p-53; }

  Real uniform(Real lo, Real hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (no cached spare).
  Real normal() {
    Real u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const Real u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n).
  int uniform_int(int n) {
    if (n <= 0) throw InvalidInputError("uniform_int: n must be positive");
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

  Rng derive(std::uint64_t stream) const {
    return Rng(derive_seed(seed_, stream));
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace dappo
