#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "emc/ensemble.hpp"

namespace emc::test {

inline std::vector<double> normal_vector(std::mt19937_64& rng, std::size_t n, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// Memory with N(0, 1) keys, N(0, weight_sd^2) weights and N(0, 0.1^2) biases.
inline EnsembleMemory random_memory(std::mt19937_64& rng, std::size_t n, std::size_t d,
                                    std::size_t m, double weight_sd = 0.5) {
  std::vector<double> keys = normal_vector(rng, n * d);
  std::vector<TClassifier> cs;
  for (std::size_t i = 0; i < n; ++i) {
    TClassifier c(m, d);
    c.weights = normal_vector(rng, m * d, weight_sd);
    c.biases = normal_vector(rng, m, 0.1);
    cs.push_back(std::move(c));
  }
  return EnsembleMemory(std::move(keys), std::move(cs));
}

inline Hyperparams small_hp(std::size_t n, std::size_t d, std::size_t m, std::size_t k,
                            double tau = 250.0) {
  Hyperparams hp;
  hp.ensemble_size = n;
  hp.dim = d;
  hp.classes = m;
  hp.k = k;
  hp.tau = tau;
  return hp;
}

/// Relative error with an absolute floor so that two tiny values compare equal.
inline double rel_error(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / scale;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("emc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace emc::test
