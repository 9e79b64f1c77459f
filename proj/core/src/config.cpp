#include "emc/config.hpp"

#include <concepts>
#include <cstdint>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "emc/errors.hpp"

namespace emc {

namespace {

using nlohmann::json;

/// Reads typed fields from one JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <std::unsigned_integral T>
    requires(!std::same_as<T, bool>)
  void read(const char* key, T& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() || v->get<std::int64_t>() < 0) {
        throw type_error(key, "a non-negative integer");
      }
      out = v->get<T>();
    }
  }
  void read(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw type_error(key, "a number");
      out = v->get<double>();
    }
  }
  void read(const char* key, std::optional<double>& out) {
    if (const json* v = find(key)) {
      if (v->is_null()) {
        out.reset();
      } else if (v->is_number()) {
        out = v->get<double>();
      } else {
        throw type_error(key, "a number or null");
      }
    }
  }
  void read(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw type_error(key, "a boolean");
      out = v->get<bool>();
    }
  }
  void read(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw type_error(key, "a string");
      out = v->get<std::string>();
    }
  }
  const json* object(const char* key) {
    const json* v = find(key);
    if (v && !v->is_object()) throw type_error(key, "an object");
    return v;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) {
        throw ConfigError(fmt::format("{}: unknown key '{}'", where_, item.key()));
      }
    }
  }

 private:
  const json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  ConfigError type_error(const char* key, const char* expected) const {
    return ConfigError(fmt::format("{}: '{}' must be {}", where_, key, expected));
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json schedule_json(const ScheduleSpec& s) {
  json j = {{"kind", to_string(s.kind)},
            {"batches", s.total_batches},
            {"batch_size", s.batch_size}};
  if (s.kind == ScheduleKind::kSplit) j["subsets"] = s.subsets;
  if (s.kind == ScheduleKind::kGaussian) {
    j["height"] = s.height;
    j["width"] = optional_number(s.width);
    j["spacing"] = optional_number(s.spacing);
  }
  return j;
}

ScheduleSpec schedule_from_json(const json& j) {
  Fields f(j, "schedule");
  std::string kind = "split";
  f.read("kind", kind);
  ScheduleSpec s;
  if (kind == "split") {
    s.kind = ScheduleKind::kSplit;
    f.read("subsets", s.subsets);
  } else if (kind == "incremental" || kind == "iid") {
    s.kind = kind == "iid" ? ScheduleKind::kIid : ScheduleKind::kIncremental;
  } else if (kind == "gaussian") {
    s.kind = ScheduleKind::kGaussian;
    f.read("height", s.height);
    f.read("width", s.width);
    f.read("spacing", s.spacing);
  } else {
    throw ConfigError("schedule: unknown kind '" + kind + "'");
  }
  f.read("batches", s.total_batches);
  f.read("batch_size", s.batch_size);
  f.finish();
  return s;
}

SyntheticSpec synthetic_from_json(const json& j) {
  Fields f(j, "dataset.synthetic");
  SyntheticSpec s;
  f.read("dim", s.dim);
  f.read("classes", s.classes);
  f.read("train_per_class", s.train_per_class);
  f.read("test_per_class", s.test_per_class);
  f.read("cluster_spread", s.cluster_spread);
  f.read("center_norm", s.center_norm);
  f.read("overlap", s.overlap);
  f.read("seed", s.seed);
  f.finish();
  return s;
}

}  // namespace

json to_json(const ExperimentConfig& cfg) {
  json dataset = cfg.dataset_path.empty() ? json{{"synthetic", cfg.synthetic.to_json()}}
                                          : json{{"path", cfg.dataset_path}};
  json model = {{"kind", to_string(cfg.model)},
                {"lr", cfg.hp.lr},
                {"decay", cfg.hp.decay},
                {"decay_biases", cfg.hp.decay_biases},
                {"tau", cfg.hp.tau},
                {"init_scale", optional_number(cfg.init_scale)}};
  if (cfg.model == ModelKind::kEnsemble) {
    model["ensemble_size"] = cfg.hp.ensemble_size;
    model["k"] = cfg.hp.k;
  }
  return {{"schema_version", kConfigSchemaVersion},
          {"dataset", std::move(dataset)},
          {"model", std::move(model)},
          {"schedule", schedule_json(cfg.schedule)},
          {"eval_every", cfg.eval_every},
          {"runs", cfg.runs},
          {"seed", cfg.seed},
          {"out", cfg.out.string()},
          {"strict_online", cfg.strict_online},
          {"probe_count", cfg.probe_count},
          {"threads", cfg.threads}};
}

ExperimentConfig config_from_json(const json& j) {
  Fields f(j, "config");
  ExperimentConfig cfg;
  std::size_t version = kConfigSchemaVersion;
  f.read("schema_version", version);
  if (version != static_cast<std::size_t>(kConfigSchemaVersion)) {
    throw ConfigError(fmt::format("config: unsupported schema_version {} (expected {})", version,
                                  kConfigSchemaVersion));
  }
  if (const json* d = f.object("dataset")) {
    Fields df(*d, "dataset");
    df.read("path", cfg.dataset_path);
    if (const json* s = df.object("synthetic")) cfg.synthetic = synthetic_from_json(*s);
    df.finish();
    if (!cfg.dataset_path.empty() && d->contains("synthetic")) {
      throw ConfigError("dataset: give either 'path' or 'synthetic', not both");
    }
  }
  if (const json* m = f.object("model")) {
    Fields mf(*m, "model");
    std::string kind = to_string(cfg.model);
    mf.read("kind", kind);
    cfg.model = parse_model_kind(kind);
    mf.read("ensemble_size", cfg.hp.ensemble_size);
    mf.read("k", cfg.hp.k);
    mf.read("tau", cfg.hp.tau);
    mf.read("lr", cfg.hp.lr);
    mf.read("decay", cfg.hp.decay);
    mf.read("decay_biases", cfg.hp.decay_biases);
    mf.read("init_scale", cfg.init_scale);
    mf.finish();
  }
  if (const json* s = f.object("schedule")) cfg.schedule = schedule_from_json(*s);
  f.read("eval_every", cfg.eval_every);
  f.read("runs", cfg.runs);
  f.read("seed", cfg.seed);
  std::string out;
  f.read("out", out);
  cfg.out = out;
  f.read("strict_online", cfg.strict_online);
  f.read("probe_count", cfg.probe_count);
  f.read("threads", cfg.threads);
  f.finish();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j = to_json(cfg);
  for (const char* key : {"seed", "runs", "out", "threads"}) j.erase(key);
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace emc
