#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "remedi/util/hash.hpp"

namespace remedi::util {

/// Seeded Fisher-Yates. Spelled out instead of std::shuffle so the permutation
/// does not depend on the standard library vendor.
template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(items[i - 1], items[j]);
  }
}

inline double uniform01(std::mt19937_64& rng) { return unit_interval(rng()); }

}  // namespace remedi::util
