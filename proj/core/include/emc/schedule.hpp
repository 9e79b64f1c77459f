#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "emc/rng.hpp"

namespace emc {

class EmbeddingDataset;

enum class ScheduleKind { kSplit, kIncremental, kGaussian, kIid };

std::string to_string(ScheduleKind kind);

/// Run-independent description of a schedule, as written in a config file.
struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::kSplit;
  std::size_t subsets = 5;  // split only
  double height = 1.0;      // gaussian only
  /// Gaussian width in batches. Defaults to total_batches / 20 (50 for 1000).
  std::optional<double> width;
  /// Distance in batches between consecutive class peaks. Defaults to
  /// total_batches / classes.
  std::optional<double> spacing;
  std::size_t total_batches = 1000;
  std::size_t batch_size = 60;

  /// Parses "split<N>", "incremental", "gaussian" or "iid".
  static ScheduleSpec parse(const std::string& name);
  [[nodiscard]] std::string name() const;
};

/// A contiguous range of batches [begin, end) with its active classes.
struct TaskRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::vector<std::size_t> classes;
};

/// A schedule bound to a concrete class count and class order.
class Schedule {
 public:
  /// Draws a fresh uniform class order from `rng`.
  Schedule(ScheduleSpec spec, std::size_t classes, Rng& rng);
  Schedule(ScheduleSpec spec, std::vector<std::size_t> class_order);

  [[nodiscard]] const ScheduleSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] std::size_t classes() const noexcept { return class_order_.size(); }
  [[nodiscard]] std::size_t total_batches() const noexcept { return spec_.total_batches; }
  [[nodiscard]] std::size_t batch_size() const noexcept { return spec_.batch_size; }
  [[nodiscard]] const std::vector<std::size_t>& class_order() const noexcept {
    return class_order_;
  }
  /// Number of sequential tasks (1 for gaussian and iid).
  [[nodiscard]] std::size_t task_count() const noexcept;
  [[nodiscard]] double gaussian_width() const;
  [[nodiscard]] double gaussian_spacing() const;

  /// Unnormalised gaussian weight of the class at order position `position`.
  [[nodiscard]] double gaussian_weight(std::size_t position, double batch) const;

  /// Class sampling probabilities at batch B, indexed by class label.
  [[nodiscard]] std::vector<double> class_distribution(std::size_t batch) const;

  /// Task ranges; gaussian and iid schedules yield one range over all batches.
  [[nodiscard]] std::vector<TaskRange> tasks() const;

 private:
  void validate() const;

  ScheduleSpec spec_;
  std::vector<std::size_t> class_order_;
};

/// Human-readable summary with per-task batch ranges.
std::string describe(const Schedule& schedule);

/// Training-split record indices grouped by label.
class ClassPools {
 public:
  explicit ClassPools(const EmbeddingDataset& ds);
  [[nodiscard]] const std::vector<std::size_t>& pool(std::size_t label) const {
    return pools_.at(label);
  }
  [[nodiscard]] std::size_t classes() const noexcept { return pools_.size(); }

 private:
  std::vector<std::vector<std::size_t>> pools_;
};

struct SampledExample {
  std::size_t record;  // index into the training split
  std::size_t label;
};

/// Draws batch_size examples: class ~ class_distribution(B), then a record
/// uniformly with replacement from that class's pool. Throws DataError when
/// a class with positive probability has no records.
std::vector<SampledExample> sample_batch(const Schedule& schedule, std::size_t batch,
                                         const ClassPools& pools, Rng& rng);

}  // namespace emc
