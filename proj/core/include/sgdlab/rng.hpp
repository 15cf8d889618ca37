#pragma once

#include <cstdint>
#include <random>

namespace sgdlab {

/// Purpose tag of a random substream. The numeric value enters seed derivation.
enum class StreamRole : std::uint64_t {
  Field = 0,
  Noise = 1,
  Init = 2,
  Limit = 3,
};

/// SplitMix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Counter-based substream seed.
///
///   derive_seed(base, rep, role) =
///       splitmix64(splitmix64(base) ^ splitmix64(4 * rep + role + 1))
///
/// Every (replication, role) pair maps to its own engine seed, so replications
/// can run in any order or on any thread and still reproduce bit-for-bit.
std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t replication,
                          StreamRole role) noexcept;

/// Caller-owned random stream. Not shareable between threads.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}
  RngStream(std::uint64_t base_seed, std::uint64_t replication, StreamRole role)
      : engine_(derive_seed(base_seed, replication, role)) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::uint64_t bits() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace sgdlab
