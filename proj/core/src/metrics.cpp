#include "emc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "emc/errors.hpp"

namespace emc {

std::size_t RunRecord::classes() const {
  return eval_points.empty() ? 0 : eval_points.front().per_class.size();
}

const EvalPoint& RunRecord::final_point() const {
  if (eval_points.empty()) throw InputError("run record has no evaluation points");
  return eval_points.back();
}

void RunRecord::validate() const {
  if (eval_points.empty()) throw InputError("run record has no evaluation points");
  const std::size_t m = classes();
  if (m == 0) throw InputError("run record has no per-class series");
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  for (std::size_t i = 0; i < eval_points.size(); ++i) {
    const EvalPoint& p = eval_points[i];
    if (i > 0 && p.batch <= eval_points[i - 1].batch) {
      throw InputError("run record eval points are not strictly increasing");
    }
    if (p.per_class.size() != m) {
      throw InputError(fmt::format("eval point at batch {} is missing per-class accuracies",
                                   p.batch));
    }
    if (!in_unit(p.overall) || !std::all_of(p.per_class.begin(), p.per_class.end(), in_unit)) {
      throw InputError(fmt::format("accuracy outside [0, 1] at batch {}", p.batch));
    }
  }
}

double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> labels) {
  if (preds.empty()) throw InputError("accuracy of an empty prediction list");
  if (preds.size() != labels.size()) throw InputError("accuracy: length mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

std::vector<double> per_class_accuracy(std::span<const std::size_t> preds,
                                       std::span<const std::size_t> labels, std::size_t classes) {
  if (preds.size() != labels.size()) throw InputError("per-class accuracy: length mismatch");
  std::vector<std::size_t> hits(classes, 0), totals(classes, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] >= classes) throw InputError("per-class accuracy: label out of range");
    ++totals[labels[i]];
    if (preds[i] == labels[i]) ++hits[labels[i]];
  }
  std::vector<double> out(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    if (totals[c] > 0) out[c] = static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
  }
  return out;
}

double generalised_forgetting(const RunRecord& rec) {
  rec.validate();
  const std::size_t m = rec.classes();
  const EvalPoint& last = rec.final_point();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double worst = 0.0;  // t = n contributes exactly zero
    for (const EvalPoint& p : rec.eval_points) worst = std::max(worst, p.per_class[i] - last.per_class[i]);
    total += worst;
  }
  return total / static_cast<double>(m);
}

double taskwise_forgetting(const RunRecord& rec,
                           const std::vector<std::vector<std::size_t>>& task_classes) {
  rec.validate();
  const std::size_t m = rec.classes();
  const EvalPoint& last = rec.final_point();
  auto task_mean = [&](const EvalPoint& p, const std::vector<std::size_t>& classes) {
    double s = 0.0;
    for (std::size_t c : classes) s += p.per_class.at(c);
    return s / static_cast<double>(classes.size());
  };
  double total = 0.0;
  for (const auto& classes : task_classes) {
    if (classes.empty()) throw InputError("task-wise forgetting: empty task");
    const double final_acc = task_mean(last, classes);
    double worst = 0.0;
    for (const EvalPoint& p : rec.eval_points) worst = std::max(worst, task_mean(p, classes) - final_acc);
    total += worst * static_cast<double>(classes.size());
  }
  return total / static_cast<double>(m);
}

MetricStats mean_stddev(std::span<const double> values) {
  MetricStats s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::string format_float(double v) { return fmt::format("{:.6g}", v); }

nlohmann::json run_summary(const RunRecord& rec) {
  const EvalPoint& last = rec.final_point();
  nlohmann::json j;
  j["seed"] = rec.seed;
  j["config_hash"] = rec.config_hash;
  j["final_batch"] = last.batch;
  j["final_accuracy"] = std::stod(format_float(last.overall));
  double class_mean = 0.0;
  for (double a : last.per_class) class_mean += a;
  class_mean /= static_cast<double>(last.per_class.size());
  j["final_class_accuracy_mean"] = std::stod(format_float(class_mean));
  j["forgetting"] = std::stod(format_float(generalised_forgetting(rec)));
  j["eval_points"] = rec.eval_points.size();
  return j;
}

void emit_run(const RunRecord& rec, const std::filesystem::path& stem) {
  rec.validate();
  const std::size_t m = rec.classes();
  std::ostringstream csv;
  csv << "batch,overall";
  for (std::size_t c = 0; c < m; ++c) csv << ",acc_" << c;
  csv << '\n';
  for (const EvalPoint& p : rec.eval_points) {
    csv << p.batch << ',' << format_float(p.overall);
    for (double a : p.per_class) csv << ',' << format_float(a);
    csv << '\n';
  }
  const std::filesystem::path csv_path = stem.string() + ".csv";
  std::ofstream out(csv_path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + csv_path.string() + "'");
  out << csv.str();

  const std::filesystem::path json_path = stem.string() + ".json";
  std::ofstream js(json_path, std::ios::trunc);
  if (!js) throw DataError("cannot write '" + json_path.string() + "'");
  js << run_summary(rec).dump(2) << '\n';
}

std::vector<EvalPoint> read_run_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("batch,overall", 0) != 0) {
    throw DataError("'" + path.string() + "' is not a run CSV");
  }
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  std::vector<EvalPoint> points;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != columns) {
      throw DataError(fmt::format("{}: row {} has {} columns, expected {}", path.string(), row,
                                  cells.size(), columns));
    }
    EvalPoint p;
    try {
      p.batch = std::stoull(cells[0]);
      p.overall = std::stod(cells[1]);
      for (std::size_t c = 2; c < cells.size(); ++c) p.per_class.push_back(std::stod(cells[c]));
    } catch (const std::exception&) {
      throw DataError(fmt::format("{}: row {} is not numeric", path.string(), row));
    }
    points.push_back(std::move(p));
  }
  return points;
}

AggregateSummary aggregate(std::span<const RunRecord> records) {
  if (records.empty()) throw InputError("aggregate of zero runs");
  AggregateSummary s;
  s.runs = records.size();
  s.config_hash = records.front().config_hash;
  std::vector<double> acc, forget;
  for (const RunRecord& r : records) {
    if (r.config_hash != s.config_hash) throw InputError("aggregate over runs with different configs");
    acc.push_back(r.final_point().overall);
    forget.push_back(generalised_forgetting(r));
  }
  s.final_accuracy = mean_stddev(acc);
  s.forgetting = mean_stddev(forget);
  return s;
}

nlohmann::json to_json(const AggregateSummary& summary) {
  auto stats = [](const MetricStats& m) {
    return nlohmann::json{{"mean", std::stod(format_float(m.mean))},
                          {"std", std::stod(format_float(m.stddev))}};
  };
  return {{"runs", summary.runs},
          {"config_hash", summary.config_hash},
          {"final_accuracy", stats(summary.final_accuracy)},
          {"forgetting", stats(summary.forgetting)}};
}

}  // namespace emc
