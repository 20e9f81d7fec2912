#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace shrl {

using Rng = std::mt19937_64;

/// Independent generator for a named consumer ("spawn", "policy", "init",
/// ...) derived from the run seed. `index` separates instances of the same
/// consumer, e.g. one stream per agent.
inline Rng subStream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
  std::uint64_t h = 14695981039346656037ull;  // FNV-1a
  for (unsigned char ch : name) h = (h ^ ch) * 1099511628211ull;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

}  // namespace shrl
