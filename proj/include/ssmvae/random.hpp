#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ssmvae {

/// Seeded random source with portable, implementation-independent samplers.
///
/// Only the raw 64-bit engine output of std::mt19937_64 is used; every
/// distribution is computed here so that a seed reproduces the same stream on
/// any standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform();

  double normal();

  /// Gamma(shape, scale = 1) by Marsaglia-Tsang.
  double gamma(double shape);

  /// Chi-square with `dof` degrees of freedom, as Gamma(dof / 2, scale 2).
  double chi_square(double dof) { return 2.0 * gamma(0.5 * dof); }

  /// Unbiased integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// Mixes a base seed with a stream tag into an independent seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

}  // namespace ssmvae
