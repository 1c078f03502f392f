#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

#include "gcot/numcore/tensor.hpp"

namespace gcot::num {

using Rng = std::mt19937_64;

/// Generator seeded from a tuple of integers; equal tuples give equal
/// streams and different tuples give unrelated ones.
Rng make_rng(std::initializer_list<std::uint64_t> key);

/// Glorot-uniform matrix: U(-a, a) with a = sqrt(6 / (rows + cols)).
Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);
/// Uniform integer in [0, n) by rejection; n >= 1.
std::size_t uniform_index(std::size_t n, Rng& rng);
double uniform_unit(Rng& rng);

/// Fisher-Yates shuffle driven by uniform_index.
template <typename It>
void shuffle(It first, It last, Rng& rng) {
  const auto n = static_cast<std::size_t>(last - first);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = uniform_index(i, rng);
    std::iter_swap(first + static_cast<std::ptrdiff_t>(i - 1), first + static_cast<std::ptrdiff_t>(j));
  }
}

Tensor normal(std::size_t rows, std::size_t cols, double mean, double stddev, Rng& rng);

}  // namespace gcot::num
