#pragma once

// Expected SFT dataset size for one round of plain sampling plus hinted
// repeated sampling, and a Monte-Carlo estimate of its spread. Independent of
// the pipeline: draws Bernoulli outcomes directly.

#include <cmath>
#include <random>

namespace remedi::oracle {

/// N * [p + (1 - p) * (1 - (1 - q (1 - leak))^k)]
inline double expected_sft_size(std::size_t n, double p, double q, double leak, int k) {
  const double recover = 1.0 - std::pow(1.0 - q * (1.0 - leak), k);
  return static_cast<double>(n) * (p + (1.0 - p) * recover);
}

struct YieldMoments {
  double mean = 0;
  double sd = 0;
};

/// Simulates `trials` rounds over `n` queries.
inline YieldMoments monte_carlo_sft_size(std::size_t n, double p, double q, double leak, int k,
                                         std::size_t trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double sum = 0, sum_sq = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    std::size_t kept = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (u(rng) < p) {
        ++kept;
        continue;
      }
      for (int s = 0; s < k; ++s) {
        const bool correct = u(rng) < q;
        const bool leaked = u(rng) < leak;
        if (correct && !leaked) {
          ++kept;
          break;
        }
      }
    }
    sum += static_cast<double>(kept);
    sum_sq += static_cast<double>(kept) * static_cast<double>(kept);
  }
  const double mean = sum / static_cast<double>(trials);
  const double var = sum_sq / static_cast<double>(trials) - mean * mean;
  return {mean, std::sqrt(std::max(0.0, var) * static_cast<double>(trials) /
                          static_cast<double>(trials - 1))};
}

}  // namespace remedi::oracle
