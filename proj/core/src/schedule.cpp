#include "emc/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "emc/dataset.hpp"
#include "emc/errors.hpp"

namespace emc {

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kSplit: return "split";
    case ScheduleKind::kIncremental: return "incremental";
    case ScheduleKind::kGaussian: return "gaussian";
    case ScheduleKind::kIid: return "iid";
  }
  return "unknown";
}

ScheduleSpec ScheduleSpec::parse(const std::string& name) {
  ScheduleSpec spec;
  if (name == "incremental") {
    spec.kind = ScheduleKind::kIncremental;
  } else if (name == "gaussian") {
    spec.kind = ScheduleKind::kGaussian;
  } else if (name == "iid") {
    spec.kind = ScheduleKind::kIid;
  } else if (name.rfind("split", 0) == 0 && name.size() > 5) {
    const std::string digits = name.substr(5);
    if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      throw ConfigError("unknown schedule '" + name + "'");
    }
    spec.kind = ScheduleKind::kSplit;
    spec.subsets = std::stoul(digits);
    if (spec.subsets == 0) throw ConfigError("split schedule needs at least one subset");
  } else {
    throw ConfigError("unknown schedule '" + name +
                      "' (expected split<N>, incremental, gaussian or iid)");
  }
  return spec;
}

std::string ScheduleSpec::name() const {
  if (kind == ScheduleKind::kSplit) return "split" + std::to_string(subsets);
  return to_string(kind);
}

Schedule::Schedule(ScheduleSpec spec, std::size_t classes, Rng& rng) : spec_(std::move(spec)) {
  class_order_.resize(classes);
  std::iota(class_order_.begin(), class_order_.end(), std::size_t{0});
  std::shuffle(class_order_.begin(), class_order_.end(), rng);
  validate();
}

Schedule::Schedule(ScheduleSpec spec, std::vector<std::size_t> class_order)
    : spec_(std::move(spec)), class_order_(std::move(class_order)) {
  std::vector<std::size_t> sorted = class_order_;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] != i) throw ConfigError("schedule: class order is not a permutation");
  }
  validate();
}

void Schedule::validate() const {
  const std::size_t m = classes();
  if (m == 0) throw ConfigError("schedule: no classes");
  if (spec_.total_batches == 0) throw ConfigError("schedule: total_batches must be >= 1");
  if (spec_.batch_size == 0) throw ConfigError("schedule: batch_size must be >= 1");
  const std::size_t tasks = task_count();
  if (spec_.kind == ScheduleKind::kSplit || spec_.kind == ScheduleKind::kIncremental) {
    if (tasks == 0 || m % tasks != 0) {
      throw ConfigError(fmt::format("schedule: {} classes cannot be split into {} equal subsets",
                                    m, tasks));
    }
    if (spec_.total_batches % tasks != 0) {
      throw ConfigError(fmt::format("schedule: {} batches cannot be divided into {} equal tasks",
                                    spec_.total_batches, tasks));
    }
  }
  if (spec_.kind == ScheduleKind::kGaussian) {
    if (!(spec_.height > 0.0)) throw ConfigError("schedule: gaussian height must be > 0");
    if (!(gaussian_width() > 0.0)) throw ConfigError("schedule: gaussian width must be > 0");
    if (!(gaussian_spacing() >= 0.0)) throw ConfigError("schedule: gaussian spacing must be >= 0");
  }
}

std::size_t Schedule::task_count() const noexcept {
  switch (spec_.kind) {
    case ScheduleKind::kSplit: return spec_.subsets;
    case ScheduleKind::kIncremental: return classes();
    case ScheduleKind::kGaussian:
    case ScheduleKind::kIid: return 1;
  }
  return 1;
}

double Schedule::gaussian_width() const {
  return spec_.width.value_or(static_cast<double>(spec_.total_batches) / 20.0);
}

double Schedule::gaussian_spacing() const {
  return spec_.spacing.value_or(static_cast<double>(spec_.total_batches) /
                                static_cast<double>(classes()));
}

double Schedule::gaussian_weight(std::size_t position, double batch) const {
  const double w = gaussian_width();
  const double delta = batch - static_cast<double>(position) * gaussian_spacing();
  return spec_.height * std::exp(-(delta * delta) / (2.0 * w * w));
}

std::vector<double> Schedule::class_distribution(std::size_t batch) const {
  if (batch >= spec_.total_batches) {
    throw InputError(fmt::format("batch index {} out of range [0, {})", batch,
                                 spec_.total_batches));
  }
  const std::size_t m = classes();
  std::vector<double> probs(m, 0.0);
  switch (spec_.kind) {
    case ScheduleKind::kSplit:
    case ScheduleKind::kIncremental: {
      const std::size_t tasks = task_count();
      const std::size_t per_task = spec_.total_batches / tasks;
      const std::size_t task = batch / per_task;
      const std::size_t width = m / tasks;
      const double p = 1.0 / static_cast<double>(width);
      for (std::size_t i = 0; i < width; ++i) probs[class_order_[task * width + i]] = p;
      break;
    }
    case ScheduleKind::kGaussian: {
      double total = 0.0;
      for (std::size_t pos = 0; pos < m; ++pos) {
        const double w = gaussian_weight(pos, static_cast<double>(batch));
        probs[class_order_[pos]] = w;
        total += w;
      }
      if (!(total > 0.0)) {
        throw NumericError(fmt::format("gaussian schedule has zero mass at batch {}", batch));
      }
      for (double& p : probs) p /= total;
      break;
    }
    case ScheduleKind::kIid:
      std::fill(probs.begin(), probs.end(), 1.0 / static_cast<double>(m));
      break;
  }
  return probs;
}

std::vector<TaskRange> Schedule::tasks() const {
  std::vector<TaskRange> out;
  const std::size_t tasks = task_count();
  if (spec_.kind == ScheduleKind::kSplit || spec_.kind == ScheduleKind::kIncremental) {
    const std::size_t per_task = spec_.total_batches / tasks;
    const std::size_t width = classes() / tasks;
    for (std::size_t t = 0; t < tasks; ++t) {
      TaskRange r{t * per_task, (t + 1) * per_task, {}};
      r.classes.assign(class_order_.begin() + static_cast<std::ptrdiff_t>(t * width),
                       class_order_.begin() + static_cast<std::ptrdiff_t>((t + 1) * width));
      out.push_back(std::move(r));
    }
  } else {
    TaskRange r{0, spec_.total_batches, class_order_};
    out.push_back(std::move(r));
  }
  return out;
}

std::string describe(const Schedule& schedule) {
  const ScheduleSpec& spec = schedule.spec();
  std::string out = fmt::format("schedule {}: {} batches x {} examples, {} classes\n", spec.name(),
                                spec.total_batches, spec.batch_size, schedule.classes());
  if (spec.kind == ScheduleKind::kGaussian) {
    out += fmt::format("  gaussian height {} width {} spacing {}\n", spec.height,
                       schedule.gaussian_width(), schedule.gaussian_spacing());
  }
  std::size_t index = 0;
  for (const TaskRange& r : schedule.tasks()) {
    out += fmt::format("  task {}: batches [{}, {}) classes {{{}}}\n", index++, r.begin, r.end,
                       fmt::join(r.classes, ", "));
  }
  if (spec.kind == ScheduleKind::kGaussian) {
    for (std::size_t pos = 0; pos < schedule.classes(); ++pos) {
      out += fmt::format("  class {} peaks at batch {}\n", schedule.class_order()[pos],
                         static_cast<double>(pos) * schedule.gaussian_spacing());
    }
  }
  return out;
}

ClassPools::ClassPools(const EmbeddingDataset& ds) : pools_(ds.classes()) {
  const Split& train = ds.train();
  for (std::size_t i = 0; i < train.size(); ++i) pools_[train.label(i)].push_back(i);
}

std::vector<SampledExample> sample_batch(const Schedule& schedule, std::size_t batch,
                                         const ClassPools& pools, Rng& rng) {
  const std::vector<double> probs = schedule.class_distribution(batch);
  if (pools.classes() < probs.size()) {
    throw DataError(fmt::format("dataset has {} classes but the schedule needs {}",
                                pools.classes(), probs.size()));
  }
  for (std::size_t c = 0; c < probs.size(); ++c) {
    if (probs[c] > 0.0 && pools.pool(c).empty()) {
      throw DataError(fmt::format("class {} has no training examples but is scheduled at batch {}",
                                  c, batch));
    }
  }
  std::discrete_distribution<std::size_t> pick_class(probs.begin(), probs.end());
  std::vector<SampledExample> out;
  out.reserve(schedule.batch_size());
  for (std::size_t i = 0; i < schedule.batch_size(); ++i) {
    const std::size_t label = pick_class(rng);
    const std::vector<std::size_t>& pool = pools.pool(label);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    out.push_back({pool[pick(rng)], label});
  }
  return out;
}

}  // namespace emc
