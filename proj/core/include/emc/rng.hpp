#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace emc {

using Rng = std::mt19937_64;

/// Independent random streams derived from one run seed. Each stream is
/// consumed by exactly one subsystem so that, for example, a one-member
/// ensemble and a stand-alone classifier receive identical weights.
enum class Stream : std::uint64_t {
  kKeys = 1,
  kWeights = 2,
  kClassOrder = 3,
  kSampling = 4,
  kSynthetic = 5,
};

Rng make_rng(std::uint64_t seed, Stream stream);

/// Fills `out` from N(0, stddev^2) truncated to +-2 stddev (rejection sampled).
void fill_truncated_normal(Rng& rng, double stddev, std::span<double> out);

/// Fan-in variance scaling: stddev = sqrt(scale / fan_in), corrected for the
/// variance lost by truncating at two standard deviations.
double variance_scaling_stddev(double scale, std::size_t fan_in);

}  // namespace emc
