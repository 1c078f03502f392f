#include "gcot/numcore/random.hpp"

#include <cmath>
#include <vector>

namespace gcot::num {

Rng make_rng(std::initializer_list<std::uint64_t> key) {
  std::vector<std::uint32_t> words;
  for (std::uint64_t k : key) {
    words.push_back(static_cast<std::uint32_t>(k));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// The std distributions are not specified bit-for-bit across standard
// libraries, so values are drawn from the raw engine output.
namespace {
double unit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
}  // namespace

double uniform_unit(Rng& rng) { return unit(rng); }

std::size_t uniform_index(std::size_t n, Rng& rng) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return static_cast<std::size_t>(x % bound);
}

Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t(rows, cols);
  for (double& v : t.data()) v = (2.0 * unit(rng) - 1.0) * a;
  return t;
}

Tensor normal(std::size_t rows, std::size_t cols, double mean, double stddev, Rng& rng) {
  Tensor t(rows, cols);
  auto d = t.data();
  // Box-Muller, two values per pair of uniforms.
  for (std::size_t i = 0; i < d.size(); i += 2) {
    double u1 = unit(rng);
    while (u1 == 0.0) u1 = unit(rng);
    const double u2 = unit(rng);
    const double r = std::sqrt(-2.0 * std::log(u1));
    d[i] = mean + stddev * r * std::cos(2.0 * M_PI * u2);
    if (i + 1 < d.size()) d[i + 1] = mean + stddev * r * std::sin(2.0 * M_PI * u2);
  }
  return t;
}

}  // namespace gcot::num
