#include <cmath>
#include <random>

#include "emc/dataset.hpp"
#include "emc/errors.hpp"
#include "emc/rng.hpp"

namespace emc {

namespace {

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  double sq = 0.0;
  do {
    sq = 0.0;
    for (double& x : v) {
      x = normal(rng);
      sq += x * x;
    }
  } while (sq == 0.0);
  const double n = std::sqrt(sq);
  for (double& x : v) x /= n;
  return v;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (dim == 0) throw ConfigError("synthetic: dim must be >= 1");
  if (classes == 0 || classes > 65536) throw ConfigError("synthetic: classes must be in [1, 65536]");
  if (train_per_class == 0 || test_per_class == 0) {
    throw ConfigError("synthetic: every class needs train and test records");
  }
  if (!(cluster_spread > 0.0)) throw ConfigError("synthetic: cluster_spread must be > 0");
  if (!(center_norm > 0.0)) throw ConfigError("synthetic: center_norm must be > 0");
  if (!(overlap >= 0.0 && overlap <= 1.0)) throw ConfigError("synthetic: overlap must be in [0, 1]");
}

nlohmann::json SyntheticSpec::to_json() const {
  return {{"dim", dim},
          {"classes", classes},
          {"train_per_class", train_per_class},
          {"test_per_class", test_per_class},
          {"cluster_spread", cluster_spread},
          {"center_norm", center_norm},
          {"overlap", overlap},
          {"seed", seed}};
}

EmbeddingDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng = make_rng(spec.seed, Stream::kSynthetic);

  // Correlated classes share an anchor direction: their centers are
  // normalize(anchor + u_i), giving pairwise cosine of about 1/2.
  const auto correlated = static_cast<std::size_t>(
      std::llround(spec.overlap * static_cast<double>(spec.classes)));
  const std::vector<double> anchor = random_unit(rng, spec.dim);
  std::vector<std::vector<double>> centers;
  centers.reserve(spec.classes);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    std::vector<double> u = random_unit(rng, spec.dim);
    if (c < correlated) {
      double sq = 0.0;
      for (std::size_t j = 0; j < spec.dim; ++j) {
        u[j] += anchor[j];
        sq += u[j] * u[j];
      }
      const double n = std::sqrt(sq);
      for (double& x : u) x /= n;
    }
    for (double& x : u) x *= spec.center_norm;
    centers.push_back(std::move(u));
  }

  EmbeddingDataset ds(spec.dim, spec.classes);
  ds.source = "synthetic";
  ds.meta = {{"params", spec.to_json()}};
  nlohmann::json names = nlohmann::json::array();
  for (std::size_t c = 0; c < spec.classes; ++c) names.push_back("class_" + std::to_string(c));
  ds.meta["class_names"] = std::move(names);

  std::normal_distribution<double> noise(0.0, spec.cluster_spread);
  std::vector<float> z(spec.dim);
  auto fill = [&](Split& split, std::size_t per_class) {
    split.reserve(per_class * spec.classes);
    // Interleave classes so splits are not sorted by label.
    for (std::size_t r = 0; r < per_class; ++r) {
      for (std::size_t c = 0; c < spec.classes; ++c) {
        double sq = 0.0;
        do {
          sq = 0.0;
          for (std::size_t j = 0; j < spec.dim; ++j) {
            z[j] = static_cast<float>(centers[c][j] + noise(rng));
            sq += static_cast<double>(z[j]) * static_cast<double>(z[j]);
          }
        } while (sq == 0.0);
        split.add(z, static_cast<std::uint16_t>(c));
      }
    }
  };
  fill(ds.train(), spec.train_per_class);
  fill(ds.test(), spec.test_per_class);
  return ds;
}

}  // namespace emc
