#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emc/dataset.hpp"
#include "emc/ensemble.hpp"
#include "emc/metrics.hpp"
#include "emc/schedule.hpp"

namespace emc {

enum class ModelKind { kEnsemble, kTanh, kVanilla };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

/// Everything needed to reproduce an experiment. `hp.dim` and `hp.classes`
/// are taken from the dataset at run time.
struct ExperimentConfig {
  std::string dataset_path;  ///< empty: generate `synthetic`
  SyntheticSpec synthetic;
  ModelKind model = ModelKind::kEnsemble;
  Hyperparams hp;
  /// Unset: 1.0 for the ensemble, 10.0 for the baselines.
  std::optional<double> init_scale;
  ScheduleSpec schedule;
  std::size_t eval_every = 10;  ///< 0: evaluate only at task boundaries and the end
  std::size_t runs = 20;
  std::uint64_t seed = 0;       ///< run r uses seed + r
  std::filesystem::path out;    ///< empty: write nothing
  bool strict_online = true;    ///< error (not warn) when a run exceeds one epoch
  std::size_t probe_count = 0;  ///< test examples whose outputs are dumped per eval
  std::size_t threads = 1;      ///< concurrent runs; 0 = hardware concurrency

  [[nodiscard]] double effective_init_scale() const;
  /// Hyperparameters for one run on a dataset of the given shape.
  [[nodiscard]] Hyperparams run_hyperparams(std::size_t dim, std::size_t classes,
                                            std::uint64_t run_seed) const;
  void validate() const;
};

/// A split converted once to double precision for training and evaluation.
struct DenseSplit {
  std::size_t dim = 0;
  std::vector<double> values;
  std::vector<std::size_t> labels;

  explicit DenseSplit(const Split& split);
  [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
  [[nodiscard]] std::span<const double> z(std::size_t i) const {
    return {values.data() + i * dim, dim};
  }
};

struct ExperimentResult {
  std::vector<RunRecord> records;
  AggregateSummary summary;
  std::vector<std::string> warnings;
};

EmbeddingDataset load_dataset(const ExperimentConfig& cfg);

/// Batches at which a run is evaluated: every eval_every batches, every task
/// boundary, and the final batch (counts of completed batches).
std::vector<std::size_t> evaluation_grid(const Schedule& schedule, std::size_t eval_every);

/// Trains and evaluates run `run_index` (seed = cfg.seed + run_index).
RunRecord run_single(const ExperimentConfig& cfg, const EmbeddingDataset& ds,
                     std::size_t run_index);

/// Runs cfg.runs independent seeds; writes artifacts when cfg.out is set.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const EmbeddingDataset& ds);
ExperimentResult run_experiment(const ExperimentConfig& cfg);

enum class AblationAxis { kEnsembleSize, kK };

std::string to_string(AblationAxis axis);

struct AblationRow {
  std::size_t value = 0;
  AggregateSummary summary;
};

/// One experiment per axis value (artifacts under cfg.out/<axis>_<value>).
std::vector<AblationRow> ablation_sweep(const ExperimentConfig& cfg, const EmbeddingDataset& ds,
                                        AblationAxis axis, std::span<const std::size_t> values);

/// Table ranked by mean final accuracy (best first).
std::string format_ablation_table(std::span<const AblationRow> rows, AblationAxis axis);

}  // namespace emc
