#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace robustpls {

/// Portable random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The distributions are implemented here rather than taken from
/// <random>, because the standard library distributions differ between
/// implementations:
///   - uniform():  (k + 1) / 2^53 with k the top 53 bits of one engine draw,
///                 i.e. uniform on the open-closed interval (0, 1];
///   - normal():   Box-Muller, two uniforms per pair of variates, the second
///                 variate of each pair is cached;
///   - below(n):   unbiased integer in [0, n) by rejection on 64-bit draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  double uniform() {
    const std::uint64_t k = engine_() >> 11;
    return static_cast<double>(k + 1) * 0x1.0p-53;
  }

  double normal();

  std::uint64_t below(std::uint64_t n);

  /// First `count` entries of a seeded Fisher-Yates shuffle of 0..n-1.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count);

  std::vector<std::size_t> permutation(std::size_t n) { return sample_without_replacement(n, n); }

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t x);

/// Seed of a named sub-stream of `master`, combining an FNV-1a hash of
/// `purpose` with `index` through SplitMix64.
std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose, std::uint64_t index = 0);

}  // namespace robustpls
