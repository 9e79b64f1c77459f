#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "emc/dataset.hpp"
#include "emc/harness.hpp"

namespace emc::cli {

/// Environment variable naming the default output root for `run`/`ablate`.
inline constexpr const char* kOutputRootEnv = "EMC_OUTPUT_ROOT";

/// Command-line overrides for `run`; unset fields keep config-file values.
struct RunOverrides {
  std::optional<std::string> dataset;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> runs;
  std::optional<std::string> schedule;
  std::optional<std::string> model;
  std::optional<std::size_t> ensemble_size;
  std::optional<std::size_t> k;
  std::optional<double> tau;
  std::optional<double> lr;
  std::optional<double> decay;
  std::optional<double> init_scale;
  std::optional<std::size_t> eval_every;
  std::optional<std::size_t> batches;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> probes;
  std::optional<std::size_t> threads;
  bool allow_multi_pass = false;
};

/// Defaults, then the config file (if any), then flags.
ExperimentConfig resolve_config(const std::optional<std::filesystem::path>& config_path,
                                const RunOverrides& overrides);

int cmd_synth(const SyntheticSpec& spec, const std::filesystem::path& out, std::ostream& os);
int cmd_run(const ExperimentConfig& cfg, std::ostream& os);
int cmd_inspect(const std::filesystem::path& path, std::ostream& os);
int cmd_report(const std::filesystem::path& dir, std::ostream& os);
int cmd_ablate(const ExperimentConfig& cfg, AblationAxis axis,
               const std::vector<std::size_t>& values, std::ostream& os);

/// Parses argv and dispatches; library errors become exit codes 2/3/4.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace emc::cli
