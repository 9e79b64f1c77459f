#include "emc/rng.hpp"

#include <cmath>

namespace emc {

namespace {
// Standard deviation of N(0, 1) truncated to [-2, 2].
constexpr double kTruncatedStddev = 0.87962566103423978;
}  // namespace

Rng make_rng(std::uint64_t seed, Stream stream) {
  const auto tag = static_cast<std::uint64_t>(stream);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), 0x656d6331u};
  return Rng(seq);
}

void fill_truncated_normal(Rng& rng, double stddev, std::span<double> out) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : out) {
    double x = normal(rng);
    while (std::abs(x) > 2.0) x = normal(rng);
    v = x * stddev;
  }
}

double variance_scaling_stddev(double scale, std::size_t fan_in) {
  return std::sqrt(scale / static_cast<double>(fan_in)) / kTruncatedStddev;
}

}  // namespace emc
