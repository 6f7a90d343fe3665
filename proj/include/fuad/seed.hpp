#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fuad {

using Rng = std::mt19937_64;

std::uint64_t fnv1a64(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL);

std::uint64_t splitmix64(std::uint64_t x);

// Deterministic child seed; the same (base, tag, a, b) always gives the same
// stream regardless of call order elsewhere.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t a = 0, std::uint64_t b = 0);

}  // namespace fuad
