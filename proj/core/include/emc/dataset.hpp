#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace emc {

/// Flat storage for one split: `size() * dim` single-precision components
/// and one 16-bit label per record.
class Split {
 public:
  Split() = default;
  explicit Split(std::size_t dim) : dim_(dim) {}

  void add(std::span<const float> z, std::uint16_t label);
  void reserve(std::size_t records);

  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] std::size_t size() const noexcept { return labels_.size(); }
  [[nodiscard]] bool empty() const noexcept { return labels_.empty(); }
  [[nodiscard]] std::span<const float> vector(std::size_t i) const {
    return {values_.data() + i * dim_, dim_};
  }
  [[nodiscard]] std::uint16_t label(std::size_t i) const { return labels_[i]; }
  [[nodiscard]] std::span<const float> values() const noexcept { return values_; }
  [[nodiscard]] std::span<const std::uint16_t> labels() const noexcept { return labels_; }

  /// Records per label, for labels in [0, classes).
  [[nodiscard]] std::vector<std::size_t> class_counts(std::size_t classes) const;

  friend bool operator==(const Split&, const Split&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<float> values_;
  std::vector<std::uint16_t> labels_;
};

/// Frozen-encoder output: (vector, label) records in train and test splits.
class EmbeddingDataset {
 public:
  EmbeddingDataset() = default;
  EmbeddingDataset(std::size_t dim, std::size_t classes);

  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] std::size_t classes() const noexcept { return classes_; }
  [[nodiscard]] const Split& train() const noexcept { return train_; }
  [[nodiscard]] const Split& test() const noexcept { return test_; }
  [[nodiscard]] Split& train() noexcept { return train_; }
  [[nodiscard]] Split& test() noexcept { return test_; }

  std::string source = "unknown";
  /// Free-form sidecar content: creation parameters, class names, ...
  nlohmann::json meta = nlohmann::json::object();

  /// Throws DataError if any record violates the dataset invariants. With
  /// `require_all_classes`, every class must appear in both splits.
  void validate(bool require_all_classes = true) const;

 private:
  std::size_t dim_ = 0;
  std::size_t classes_ = 0;
  Split train_;
  Split test_;
};

inline constexpr std::uint16_t kFormatVersion = 1;

std::filesystem::path sidecar_path(const std::filesystem::path& path);

/// Writes the little-endian EMC1 file and its `<path>.meta.json` sidecar.
void write_dataset(const EmbeddingDataset& ds, const std::filesystem::path& path);

struct ReadOptions {
  bool require_all_classes = true;
};

/// Reads and validates an EMC1 file (and its sidecar when present). Throws
/// FormatError with the failing byte offset for malformed content.
EmbeddingDataset read_dataset(const std::filesystem::path& path, ReadOptions options = {});

/// Parameters of the clustered-Gaussian stand-in for a frozen encoder.
struct SyntheticSpec {
  std::size_t dim = 64;
  std::size_t classes = 10;
  std::size_t train_per_class = 6000;
  std::size_t test_per_class = 100;
  double cluster_spread = 0.3;  ///< per-component within-class stddev
  double center_norm = 1.0;     ///< class centers lie on this sphere
  double overlap = 0.0;         ///< fraction of classes sharing a common center direction
  std::uint64_t seed = 0;

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Class i ~ N(mu_i, spread^2 I) with mu_i uniform on the sphere of radius
/// center_norm. Deterministic per seed.
EmbeddingDataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace emc
