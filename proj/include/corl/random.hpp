#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace corl {

using Rng = std::mt19937_64;

// Derives an independent seed for a named substream, so that consuming more
// numbers in one phase (say, batch sampling) never shifts another (evaluation).
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t master, std::string_view stream, std::uint64_t index = 0) {
  return Rng(derive_seed(master, stream, index));
}

}  // namespace corl
