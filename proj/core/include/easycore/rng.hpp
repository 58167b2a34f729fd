#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace easycore {

/// Counter-based generator: the i-th draw is splitmix64(key + i * golden).
///
/// Every stream is fully determined by its 64-bit key, so runs agree bitwise
/// across platforms and standard libraries (unlike std::normal_distribution).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer on [0, bound). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t bound);
  /// Standard normal via Box-Muller; draws come in cached pairs.
  double normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::optional<double> spare_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

/// Splits a top-level seed into an independent per-subsystem key, e.g.
/// derive_seed(seed, "shuffle").
std::uint64_t derive_seed(std::uint64_t seed, std::string_view subsystem);

/// Further keys a stream by an integer (epoch, sample id, ...).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace easycore
