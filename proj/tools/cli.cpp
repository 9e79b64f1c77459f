#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "emc/config.hpp"
#include "emc/errors.hpp"
#include "emc/metrics.hpp"

namespace emc::cli {

namespace fs = std::filesystem;

ExperimentConfig resolve_config(const std::optional<fs::path>& config_path,
                                const RunOverrides& o) {
  ExperimentConfig cfg = config_path ? load_config(*config_path) : ExperimentConfig{};
  if (o.dataset) cfg.dataset_path = *o.dataset;
  if (o.out) cfg.out = *o.out;
  if (o.seed) cfg.seed = *o.seed;
  if (o.runs) cfg.runs = *o.runs;
  if (o.schedule) {
    ScheduleSpec parsed = ScheduleSpec::parse(*o.schedule);
    parsed.total_batches = cfg.schedule.total_batches;
    parsed.batch_size = cfg.schedule.batch_size;
    if (parsed.kind == cfg.schedule.kind && parsed.kind == ScheduleKind::kGaussian) {
      parsed = cfg.schedule;
    }
    cfg.schedule = parsed;
  }
  if (o.model) cfg.model = parse_model_kind(*o.model);
  if (o.ensemble_size) cfg.hp.ensemble_size = *o.ensemble_size;
  if (o.k) cfg.hp.k = *o.k;
  if (o.tau) cfg.hp.tau = *o.tau;
  if (o.lr) cfg.hp.lr = *o.lr;
  if (o.decay) cfg.hp.decay = *o.decay;
  if (o.init_scale) cfg.init_scale = *o.init_scale;
  if (o.eval_every) cfg.eval_every = *o.eval_every;
  if (o.batches) cfg.schedule.total_batches = *o.batches;
  if (o.batch_size) cfg.schedule.batch_size = *o.batch_size;
  if (o.probes) cfg.probe_count = *o.probes;
  if (o.threads) cfg.threads = *o.threads;
  if (o.allow_multi_pass) cfg.strict_online = false;

  if (cfg.out.empty()) {
    const char* root = std::getenv(kOutputRootEnv);
    const fs::path base = root && *root ? fs::path(root) : fs::path("emc_runs");
    cfg.out = base / fmt::format("{}-{}-{}", to_string(cfg.model), cfg.schedule.name(),
                                 config_hash(cfg).substr(0, 8));
  }
  cfg.validate();
  return cfg;
}

int cmd_synth(const SyntheticSpec& spec, const fs::path& out, std::ostream& os) {
  const EmbeddingDataset ds = generate_synthetic(spec);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_dataset(ds, out);
  os << fmt::format("wrote {}: d={} m={} train={} test={}\n", out.string(), ds.dim(),
                    ds.classes(), ds.train().size(), ds.test().size());
  return 0;
}

int cmd_run(const ExperimentConfig& cfg, std::ostream& os) {
  const ExperimentResult result = run_experiment(cfg);
  for (const std::string& w : result.warnings) os << "warning: " << w << '\n';
  const AggregateSummary& s = result.summary;
  os << fmt::format("model {} schedule {} runs {} -> {}\n", to_string(cfg.model),
                    cfg.schedule.name(), s.runs, cfg.out.string());
  os << fmt::format("final accuracy {} +- {}\n", format_float(s.final_accuracy.mean),
                    format_float(s.final_accuracy.stddev));
  os << fmt::format("forgetting     {} +- {}\n", format_float(s.forgetting.mean),
                    format_float(s.forgetting.stddev));
  return 0;
}

int cmd_inspect(const fs::path& path, std::ostream& os) {
  const EmbeddingDataset ds = read_dataset(path, ReadOptions{.require_all_classes = false});
  os << fmt::format("file:    {}\n", path.string());
  os << fmt::format("format:  EMC1 v{}\n", kFormatVersion);
  os << fmt::format("source:  {}\n", ds.source);
  os << fmt::format("dim:     {}\n", ds.dim());
  os << fmt::format("classes: {}\n", ds.classes());
  os << fmt::format("train:   {}\n", ds.train().size());
  os << fmt::format("test:    {}\n", ds.test().size());
  const auto train = ds.train().class_counts(ds.classes());
  const auto test = ds.test().class_counts(ds.classes());
  os << fmt::format("{:>7} {:>9} {:>9}\n", "class", "train", "test");
  for (std::size_t c = 0; c < ds.classes(); ++c) {
    os << fmt::format("{:>7} {:>9} {:>9}\n", c, train[c], test[c]);
  }
  for (std::size_t c = 0; c < ds.classes(); ++c) {
    if (train[c] == 0) os << fmt::format("warning: class {} has no train records\n", c);
    if (test[c] == 0) os << fmt::format("warning: class {} has no test records\n", c);
  }
  return 0;
}

int cmd_report(const fs::path& dir, std::ostream& os) {
  if (!fs::is_directory(dir)) throw DataError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("run_", 0) == 0 && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no run_*.json files in '" + dir.string() + "'");

  std::vector<double> acc, forget;
  std::string hash;
  for (const fs::path& f : files) {
    std::ifstream in(f);
    nlohmann::json j;
    try {
      in >> j;
      const std::string h = j.at("config_hash").get<std::string>();
      if (hash.empty()) hash = h;
      if (h != hash) {
        throw InputError(fmt::format("'{}' mixes configs ({} vs {})", dir.string(), hash, h));
      }
      acc.push_back(j.at("final_accuracy").get<double>());
      forget.push_back(j.at("forgetting").get<double>());
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed run summary '" + f.string() + "': " + e.what());
    }
  }
  const MetricStats a = mean_stddev(acc);
  const MetricStats g = mean_stddev(forget);
  os << fmt::format("{:<18} {:>5} {:>24} {:>24}\n", "config", "runs", "final_accuracy",
                    "forgetting");
  os << fmt::format("{:<18} {:>5} {:>24} {:>24}\n", hash, acc.size(),
                    format_float(a.mean) + " +- " + format_float(a.stddev),
                    format_float(g.mean) + " +- " + format_float(g.stddev));
  return 0;
}

int cmd_ablate(const ExperimentConfig& cfg, AblationAxis axis,
               const std::vector<std::size_t>& values, std::ostream& os) {
  const EmbeddingDataset ds = load_dataset(cfg);
  const auto rows = ablation_sweep(cfg, ds, axis, values);
  os << format_ablation_table(rows, axis);
  return 0;
}

namespace {

/// Raw storage for `run`/`ablate` flags; presence comes from the Option pointers.
struct RunFlags {
  std::string config;
  std::string dataset, out, schedule, model;
  std::uint64_t seed = 0;
  std::size_t runs = 0, n = 0, k = 0, eval_every = 0, batches = 0, batch_size = 0, probes = 0,
              threads = 0;
  double tau = 0, lr = 0, decay = 0, init_scale = 0;
  bool allow_multi_pass = false;
  std::map<std::string, CLI::Option*> opts;

  void attach(CLI::App& cmd) {
    cmd.add_option("--config", config, "Experiment config file (JSON)")->check(CLI::ExistingFile);
    opts["dataset"] = cmd.add_option("--dataset", dataset, "EMC1 dataset file (default: synthetic)");
    opts["out"] = cmd.add_option("--out", out, "Output directory");
    opts["seed"] = cmd.add_option("--seed", seed, "Base seed; run r uses seed + r");
    opts["runs"] = cmd.add_option("--runs", runs, "Number of independent runs");
    opts["schedule"] =
        cmd.add_option("--schedule", schedule, "Schedule: split<N>, incremental, gaussian or iid");
    opts["model"] = cmd.add_option("--model", model, "Model: ensemble, tanh or vanilla")
                        ->check(CLI::IsMember({"ensemble", "tanh", "vanilla"}));
    opts["ensemble-size"] = cmd.add_option("--ensemble-size", n, "Number of classifiers (n)");
    opts["k"] = cmd.add_option("--k", k, "Classifiers selected per input");
    opts["tau"] = cmd.add_option("--tau", tau, "tanh scaling factor");
    opts["lr"] = cmd.add_option("--lr", lr, "Sign-optimiser step size");
    opts["decay"] = cmd.add_option("--decay", decay, "Weight decay factor");
    opts["init-scale"] = cmd.add_option(
        "--init-scale", init_scale, "Fan-in variance scaling (default 1 ensemble, 10 baselines)");
    opts["eval-every"] = cmd.add_option("--eval-every", eval_every,
                                        "Evaluate every N batches (0: task boundaries only)");
    opts["batches"] = cmd.add_option("--batches", batches, "Total training batches");
    opts["batch-size"] = cmd.add_option("--batch-size", batch_size, "Examples per batch");
    opts["probes"] =
        cmd.add_option("--probes", probes, "Dump outputs for the first N test examples");
    opts["threads"] = cmd.add_option("--threads", threads, "Concurrent runs (0: all cores)");
    cmd.add_flag("--allow-multi-pass", allow_multi_pass,
                 "Warn instead of failing when a run exceeds one epoch");
  }

  [[nodiscard]] std::optional<fs::path> config_path() const {
    if (config.empty()) return std::nullopt;
    return fs::path(config);
  }

  [[nodiscard]] RunOverrides overrides() const {
    RunOverrides o;
    auto set = [&](const char* name, auto& field, const auto& value) {
      if (opts.at(name)->count() > 0) field = value;
    };
    set("dataset", o.dataset, dataset);
    set("out", o.out, out);
    set("seed", o.seed, seed);
    set("runs", o.runs, runs);
    set("schedule", o.schedule, schedule);
    set("model", o.model, model);
    set("ensemble-size", o.ensemble_size, n);
    set("k", o.k, k);
    set("tau", o.tau, tau);
    set("lr", o.lr, lr);
    set("decay", o.decay, decay);
    set("init-scale", o.init_scale, init_scale);
    set("eval-every", o.eval_every, eval_every);
    set("batches", o.batches, batches);
    set("batch-size", o.batch_size, batch_size);
    set("probes", o.probes, probes);
    set("threads", o.threads, threads);
    o.allow_multi_pass = allow_multi_pass;
    return o;
  }
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ensemble-memory continual learning on frozen embeddings", "emc"};
  app.require_subcommand(1);

  SyntheticSpec synth;
  std::string synth_out = "synthetic.emc";
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic clustered dataset");
  synth_cmd->add_option("--out", synth_out, "Output dataset path")->capture_default_str();
  synth_cmd->add_option("--dim", synth.dim, "Embedding dimension")->capture_default_str();
  synth_cmd->add_option("--classes", synth.classes, "Number of classes")->capture_default_str();
  synth_cmd->add_option("--train-per-class", synth.train_per_class, "Training records per class")
      ->capture_default_str();
  synth_cmd->add_option("--test-per-class", synth.test_per_class, "Test records per class")
      ->capture_default_str();
  synth_cmd->add_option("--spread", synth.cluster_spread, "Within-class standard deviation")
      ->capture_default_str();
  synth_cmd->add_option("--center-norm", synth.center_norm, "Norm of class centers")
      ->capture_default_str();
  synth_cmd->add_option("--overlap", synth.overlap, "Fraction of classes with correlated centers")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Random seed")->capture_default_str();

  RunFlags run_flags;
  CLI::App* run_cmd = app.add_subcommand("run", "Run an experiment (flags override --config)");
  run_flags.attach(*run_cmd);

  RunFlags ablate_flags;
  std::string axis_name = "ensemble_size";
  std::vector<std::size_t> axis_values;
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "Sweep ensemble size or k");
  ablate_flags.attach(*ablate_cmd);
  ablate_cmd->add_option("--axis", axis_name, "Swept hyperparameter")
      ->check(CLI::IsMember({"ensemble_size", "k"}))
      ->capture_default_str();
  ablate_cmd->add_option("--values", axis_values, "Comma-separated values")
      ->delimiter(',')
      ->required();

  std::string inspect_path;
  CLI::App* inspect_cmd = app.add_subcommand("inspect", "Print a dataset header and class counts");
  inspect_cmd->add_option("dataset", inspect_path, "EMC1 dataset file")->required();

  std::string report_dir;
  CLI::App* report_cmd = app.add_subcommand("report", "Summarise the runs in an output directory");
  report_cmd->add_option("dir", report_dir, "Run output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(synth, synth_out, out);
    if (run_cmd->parsed()) {
      return cmd_run(resolve_config(run_flags.config_path(), run_flags.overrides()), out);
    }
    if (ablate_cmd->parsed()) {
      const AblationAxis axis = axis_name == "k" ? AblationAxis::kK : AblationAxis::kEnsembleSize;
      return cmd_ablate(resolve_config(ablate_flags.config_path(), ablate_flags.overrides()), axis,
                        axis_values, out);
    }
    if (inspect_cmd->parsed()) return cmd_inspect(inspect_path, out);
    if (report_cmd->parsed()) return cmd_report(report_dir, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  }
  return static_cast<int>(ExitCode::kConfig);
}

}  // namespace emc::cli
