#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>

namespace finprint {

/// Deterministic random source identified by (seed, stream).
///
/// The raw engine is std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. All derived draws (uniform reals, normals, indices) are
/// computed here rather than through <random> distributions, whose algorithms
/// are implementation-defined. The same (seed, stream) therefore yields the
/// same sequence on every conforming platform.
///
/// Sub-streams are derived by name, so adding draws to one stream never
/// perturbs another:
///
///   Rng root(seed);
///   Rng init = root.substream("init");
///   Rng batch = root.substream("batch");
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::string stream = "root");

  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& stream() const noexcept { return stream_; }

  Rng substream(std::string_view name) const;
  Rng substream(std::uint64_t index) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::string stream_;
  std::mt19937_64 engine_;
};

/// 64-bit FNV-1a, used for stream derivation and artifact hashes.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace finprint
