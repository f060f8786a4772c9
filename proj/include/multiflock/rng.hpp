#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace multiflock {

/// SplitMix64 finalizer. Used to derive independent substream seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Mixes a root seed with a list of stream identifiers into a substream seed.
/// Order of the identifiers matters; the result does not depend on any other
/// stream having been created first.
std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> stream_ids);

/// 64-bit Mersenne Twister (MT19937-64) with platform-independent uniform and
/// normal draws. std:: distributions are implementation-defined, so the
/// conversions are done here to keep traces bit-identical across toolchains.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng substream(std::uint64_t root, std::initializer_list<std::uint64_t> stream_ids) {
    return Rng(derive_seed(root, stream_ids));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller; the second variate is cached.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace multiflock
