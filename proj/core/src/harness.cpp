#include "emc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "emc/baseline.hpp"
#include "emc/config.hpp"
#include "emc/errors.hpp"

namespace emc {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kEnsemble: return "ensemble";
    case ModelKind::kTanh: return "tanh";
    case ModelKind::kVanilla: return "vanilla";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "ensemble") return ModelKind::kEnsemble;
  if (name == "tanh") return ModelKind::kTanh;
  if (name == "vanilla") return ModelKind::kVanilla;
  throw ConfigError("unknown model '" + name + "' (expected ensemble, tanh or vanilla)");
}

std::string to_string(AblationAxis axis) {
  return axis == AblationAxis::kEnsembleSize ? "ensemble_size" : "k";
}

double ExperimentConfig::effective_init_scale() const {
  if (init_scale) return *init_scale;
  return model == ModelKind::kEnsemble ? 1.0 : 10.0;
}

Hyperparams ExperimentConfig::run_hyperparams(std::size_t dim, std::size_t classes,
                                              std::uint64_t run_seed) const {
  Hyperparams out = hp;
  out.dim = dim;
  out.classes = classes;
  out.seed = run_seed;
  out.init_scale = effective_init_scale();
  if (model != ModelKind::kEnsemble) {
    out.ensemble_size = 1;
    out.k = 1;
  }
  out.validate();
  return out;
}

void ExperimentConfig::validate() const {
  if (runs < 1) throw ConfigError("config: runs must be >= 1");
  if (schedule.total_batches < 1) throw ConfigError("config: batches must be >= 1");
  if (schedule.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (init_scale && !(*init_scale > 0.0)) throw ConfigError("config: init_scale must be > 0");
  if (dataset_path.empty()) synthetic.validate();
}

DenseSplit::DenseSplit(const Split& split) : dim(split.dim()) {
  values.assign(split.values().begin(), split.values().end());
  labels.assign(split.labels().begin(), split.labels().end());
}

EmbeddingDataset load_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset_path.empty()) return generate_synthetic(cfg.synthetic);
  return read_dataset(cfg.dataset_path);
}

std::vector<std::size_t> evaluation_grid(const Schedule& schedule, std::size_t eval_every) {
  std::set<std::size_t> grid;
  const std::size_t total = schedule.total_batches();
  if (eval_every > 0) {
    for (std::size_t t = eval_every; t <= total; t += eval_every) grid.insert(t);
  }
  for (const TaskRange& r : schedule.tasks()) grid.insert(r.end);
  grid.insert(total);
  return {grid.begin(), grid.end()};
}

namespace {

class Learner {
 public:
  virtual ~Learner() = default;
  virtual void train(std::span<const Example> batch) = 0;
  virtual void predict_all(const DenseSplit& test, std::vector<std::size_t>& out) = 0;
  virtual std::vector<double> output(std::span<const double> z) = 0;
};

class EnsembleLearner final : public Learner {
 public:
  explicit EnsembleLearner(const Hyperparams& hp)
      : hp_(hp), mem_(EnsembleMemory::initialize(hp)), scratch_(hp.ensemble_size, hp.classes, hp.dim) {}

  void train(std::span<const Example> batch) override { train_step(mem_, batch, hp_, scratch_); }

  void predict_all(const DenseSplit& test, std::vector<std::size_t>& out) override {
    // Keys never change, so routing of the test set is computed once.
    if (routed_ != &test) {
      routes_.clear();
      weights_.clear();
      for (std::size_t i = 0; i < test.size(); ++i) {
        routes_.push_back(top_k_select(mem_, test.z(i), hp_.k));
        weights_.push_back(aggregation_weights(routes_.back()));
      }
      routed_ = &test;
    }
    out.resize(test.size());
    std::vector<double> y(hp_.classes);
    for (std::size_t i = 0; i < test.size(); ++i) {
      aggregate_forward(mem_, test.z(i), routes_[i], weights_[i], hp_.tau, y);
      out[i] = argmax(y);
    }
  }

  std::vector<double> output(std::span<const double> z) override {
    return ensemble_forward(mem_, z, hp_).y_hat;
  }

 private:
  Hyperparams hp_;
  EnsembleMemory mem_;
  Gradients scratch_;
  const DenseSplit* routed_ = nullptr;
  std::vector<Selection> routes_;
  std::vector<std::vector<double>> weights_;
};

class BaselineLearner final : public Learner {
 public:
  BaselineLearner(BaselineFlavor flavor, const Hyperparams& hp)
      : hp_(hp), model_(BaselineClassifier::initialize(flavor, hp)), scratch_(hp.classes, hp.dim) {}

  void train(std::span<const Example> batch) override {
    run_baseline_step(model_, batch, hp_, scratch_);
  }

  void predict_all(const DenseSplit& test, std::vector<std::size_t>& out) override {
    out.resize(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) out[i] = baseline_predict(model_, test.z(i), hp_);
  }

  std::vector<double> output(std::span<const double> z) override {
    return baseline_forward(model_, z, hp_);
  }

 private:
  Hyperparams hp_;
  BaselineClassifier model_;
  TClassifier scratch_;
};

std::unique_ptr<Learner> make_learner(ModelKind kind, const Hyperparams& hp) {
  switch (kind) {
    case ModelKind::kEnsemble: return std::make_unique<EnsembleLearner>(hp);
    case ModelKind::kTanh: return std::make_unique<BaselineLearner>(BaselineFlavor::kTanh, hp);
    case ModelKind::kVanilla:
      return std::make_unique<BaselineLearner>(BaselineFlavor::kVanilla, hp);
  }
  throw ConfigError("unknown model kind");
}

/// Re-raises library errors with the batch index attached.
template <typename F>
void at_batch(std::size_t batch, const char* phase, F&& f) {
  try {
    f();
  } catch (const DegenerateAggregationError& e) {
    throw e.at_batch(batch);
  } catch (const NumericError& e) {
    throw NumericError(fmt::format("{} ({} batch {})", e.what(), phase, batch));
  } catch (const DataError& e) {
    throw DataError(fmt::format("{} ({} batch {})", e.what(), phase, batch));
  }
}

struct RunContext {
  const ExperimentConfig& cfg;
  const EmbeddingDataset& ds;
  DenseSplit train;
  DenseSplit test;
  ClassPools pools;
  std::string hash;

  RunContext(const ExperimentConfig& c, const EmbeddingDataset& d)
      : cfg(c), ds(d), train(d.train()), test(d.test()), pools(d), hash(config_hash(c)) {}
};

struct RunOutput {
  RunRecord record;
  std::string activations;  // CSV body, empty without probes
};

RunOutput run_with_context(const RunContext& ctx, std::size_t run_index) {
  const ExperimentConfig& cfg = ctx.cfg;
  const std::uint64_t seed = cfg.seed + run_index;
  const std::size_t m = ctx.ds.classes();
  const Hyperparams hp = cfg.run_hyperparams(ctx.ds.dim(), m, seed);

  Rng order_rng = make_rng(seed, Stream::kClassOrder);
  const Schedule schedule(cfg.schedule, m, order_rng);
  Rng sampling = make_rng(seed, Stream::kSampling);
  const std::vector<std::size_t> grid = evaluation_grid(schedule, cfg.eval_every);
  const std::unique_ptr<Learner> learner = make_learner(cfg.model, hp);

  RunOutput out;
  out.record.seed = seed;
  out.record.config_hash = ctx.hash;

  const std::size_t probes = std::min(cfg.probe_count, ctx.test.size());
  std::ostringstream activations;
  if (probes > 0) {
    activations << "batch,probe,label";
    for (std::size_t c = 0; c < m; ++c) activations << ",y_" << c;
    activations << '\n';
  }

  std::vector<Example> batch;
  std::vector<std::size_t> preds;
  auto next_eval = grid.begin();
  for (std::size_t b = 0; b < schedule.total_batches(); ++b) {
    at_batch(b, "training", [&] {
      const auto samples = sample_batch(schedule, b, ctx.pools, sampling);
      batch.clear();
      for (const SampledExample& s : samples) batch.push_back({ctx.train.z(s.record), s.label});
      learner->train(batch);
    });
    const std::size_t done = b + 1;
    if (next_eval == grid.end() || *next_eval != done) continue;
    ++next_eval;
    at_batch(b, "evaluation after", [&] {
      learner->predict_all(ctx.test, preds);
      EvalPoint p;
      p.batch = done;
      p.overall = accuracy(preds, ctx.test.labels);
      p.per_class = per_class_accuracy(preds, ctx.test.labels, m);
      out.record.eval_points.push_back(std::move(p));
      for (std::size_t i = 0; i < probes; ++i) {
        activations << done << ',' << i << ',' << ctx.test.labels[i];
        for (double y : learner->output(ctx.test.z(i))) activations << ',' << format_float(y);
        activations << '\n';
      }
    });
  }
  out.activations = activations.str();
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

RunRecord run_single(const ExperimentConfig& cfg, const EmbeddingDataset& ds,
                     std::size_t run_index) {
  cfg.validate();
  const RunContext ctx(cfg, ds);
  return run_with_context(ctx, run_index).record;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const EmbeddingDataset& ds) {
  cfg.validate();
  ds.validate(true);
  ExperimentResult result;

  const std::size_t consumed = cfg.schedule.total_batches * cfg.schedule.batch_size;
  if (consumed > ds.train().size()) {
    const std::string msg = fmt::format(
        "run consumes {} examples but the training split has {} (more than one epoch)", consumed,
        ds.train().size());
    if (cfg.strict_online) throw ConfigError(msg);
    result.warnings.push_back(msg);
  }

  const RunContext ctx(cfg, ds);
  std::vector<RunOutput> outputs(cfg.runs);
  std::vector<std::exception_ptr> errors(cfg.runs);

  std::size_t threads = cfg.threads == 0 ? std::thread::hardware_concurrency() : cfg.threads;
  threads = std::clamp<std::size_t>(threads, 1, cfg.runs);
  if (threads == 1) {
    for (std::size_t r = 0; r < cfg.runs; ++r) outputs[r] = run_with_context(ctx, r);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t r = next++; r < cfg.runs; r = next++) {
          try {
            outputs[r] = run_with_context(ctx, r);
          } catch (...) {
            errors[r] = std::current_exception();
          }
        }
      });
    }
    for (std::thread& th : pool) th.join();
    for (const std::exception_ptr& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  for (RunOutput& o : outputs) result.records.push_back(std::move(o.record));
  result.summary = aggregate(result.records);

  if (!cfg.out.empty()) {
    std::filesystem::create_directories(cfg.out);
    write_text(cfg.out / "config.json", to_json(cfg).dump(2) + "\n");
    for (std::size_t r = 0; r < cfg.runs; ++r) {
      const std::filesystem::path stem = cfg.out / fmt::format("run_{:03d}", r);
      emit_run(result.records[r], stem);
      if (!outputs[r].activations.empty()) {
        write_text(stem.string() + ".activations.csv", outputs[r].activations);
      }
    }
    nlohmann::json summary = to_json(result.summary);
    summary["model"] = to_string(cfg.model);
    summary["schedule"] = cfg.schedule.name();
    summary["warnings"] = result.warnings;
    write_text(cfg.out / "summary.json", summary.dump(2) + "\n");
  }
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  return run_experiment(cfg, load_dataset(cfg));
}

std::vector<AblationRow> ablation_sweep(const ExperimentConfig& cfg, const EmbeddingDataset& ds,
                                        AblationAxis axis, std::span<const std::size_t> values) {
  if (cfg.model != ModelKind::kEnsemble) throw ConfigError("ablations apply to the ensemble model");
  std::vector<AblationRow> rows;
  for (std::size_t v : values) {
    ExperimentConfig point = cfg;
    if (axis == AblationAxis::kEnsembleSize) {
      point.hp.ensemble_size = v;
      point.hp.k = std::min(point.hp.k, v);
    } else {
      point.hp.k = v;
    }
    if (!cfg.out.empty()) point.out = cfg.out / fmt::format("{}_{}", to_string(axis), v);
    rows.push_back({v, run_experiment(point, ds).summary});
  }
  return rows;
}

std::string format_ablation_table(std::span<const AblationRow> rows, AblationAxis axis) {
  std::vector<const AblationRow*> ranked;
  for (const AblationRow& r : rows) ranked.push_back(&r);
  std::stable_sort(ranked.begin(), ranked.end(), [](const AblationRow* a, const AblationRow* b) {
    return a->summary.final_accuracy.mean > b->summary.final_accuracy.mean;
  });
  std::string out = fmt::format("{:<5} {:>14} {:>5} {:>22} {:>22}\n", "rank", to_string(axis),
                                "runs", "final_accuracy", "forgetting");
  std::size_t rank = 1;
  for (const AblationRow* r : ranked) {
    out += fmt::format("{:<5} {:>14} {:>5} {:>22} {:>22}\n", rank++, r->value, r->summary.runs,
                       format_float(r->summary.final_accuracy.mean) + " +- " +
                           format_float(r->summary.final_accuracy.stddev),
                       format_float(r->summary.forgetting.mean) + " +- " +
                           format_float(r->summary.forgetting.stddev));
  }
  return out;
}

}  // namespace emc
