#include "sgdlab/rng.hpp"

namespace sgdlab {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t replication,
                          StreamRole role) noexcept {
  const std::uint64_t counter =
      4 * replication + static_cast<std::uint64_t>(role) + 1;
  return splitmix64(splitmix64(base_seed) ^ splitmix64(counter));
}

}  // namespace sgdlab
