#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace emc {

/// Test-set accuracies after `batch` training batches.
struct EvalPoint {
  std::size_t batch = 0;
  double overall = 0.0;
  std::vector<double> per_class;

  friend bool operator==(const EvalPoint&, const EvalPoint&) = default;
};

struct RunRecord {
  std::vector<EvalPoint> eval_points;
  std::string config_hash;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t classes() const;
  [[nodiscard]] const EvalPoint& final_point() const;

  /// Throws InputError unless eval points are strictly increasing in batch,
  /// share one class count, and every accuracy lies in [0, 1].
  void validate() const;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

/// Fraction of exact matches. Throws InputError on empty or mismatched input.
double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> labels);

/// Accuracy restricted to each true class; classes absent from `labels` get 0.
std::vector<double> per_class_accuracy(std::span<const std::size_t> preds,
                                       std::span<const std::size_t> labels, std::size_t classes);

/// (1/m) * sum_i max_t (a_t^i - a_n^i), with t ranging over the recorded
/// evaluation points and n the final one.
double generalised_forgetting(const RunRecord& rec);

/// Task-level analogue on the same evaluation grid: each task's accuracy is
/// the mean over its classes, and tasks are weighted by their class share.
double taskwise_forgetting(const RunRecord& rec,
                           const std::vector<std::vector<std::size_t>>& task_classes);

struct MetricStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single value
};

MetricStats mean_stddev(std::span<const double> values);

/// Formats with 6 significant digits, the precision of every emitted float.
std::string format_float(double v);

/// Writes `<stem>.csv` (batch, overall, acc_0..acc_{m-1}) and `<stem>.json`.
void emit_run(const RunRecord& rec, const std::filesystem::path& stem);

/// Per-run summary as written to `<stem>.json`.
nlohmann::json run_summary(const RunRecord& rec);

/// Parses a CSV written by emit_run.
std::vector<EvalPoint> read_run_csv(const std::filesystem::path& path);

struct AggregateSummary {
  std::size_t runs = 0;
  std::string config_hash;
  MetricStats final_accuracy;
  MetricStats forgetting;
};

/// Mean and standard deviation of final accuracy and forgetting. Throws
/// InputError if the records disagree on the config hash.
AggregateSummary aggregate(std::span<const RunRecord> records);

nlohmann::json to_json(const AggregateSummary& summary);

}  // namespace emc
