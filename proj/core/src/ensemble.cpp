#include "emc/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "emc/errors.hpp"
#include "emc/rng.hpp"

namespace emc {

namespace {

constexpr double kDegenerateTolerance = 1e-9;

double sign(double g) { return static_cast<double>((g > 0.0) - (g < 0.0)); }

double sech2(double x) {
  const double c = std::cosh(x);
  return 1.0 / (c * c);
}

void check_dim(std::size_t expected, std::size_t got, const char* what) {
  if (expected != got) {
    throw ConfigError(std::string(what) + ": expected dimension " + std::to_string(expected) +
                      ", got " + std::to_string(got));
  }
}

}  // namespace

void Hyperparams::validate() const {
  if (dim < 1) throw ConfigError("hyperparams: dim must be >= 1");
  if (classes < 1) throw ConfigError("hyperparams: classes must be >= 1");
  if (ensemble_size < 1) throw ConfigError("hyperparams: ensemble_size must be >= 1");
  if (k < 1 || k > ensemble_size) {
    throw ConfigError("hyperparams: k must satisfy 1 <= k <= ensemble_size (k=" +
                      std::to_string(k) + ", n=" + std::to_string(ensemble_size) + ")");
  }
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("hyperparams: tau must be > 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("hyperparams: lr must be > 0");
  if (!(decay >= 0.0) || !std::isfinite(decay)) throw ConfigError("hyperparams: decay must be >= 0");
  if (!(init_scale > 0.0) || !std::isfinite(init_scale)) {
    throw ConfigError("hyperparams: init_scale must be > 0");
  }
}

// ---------------------------------------------------------------------------
// t-classifier

TClassifier::TClassifier(std::size_t classes_, std::size_t dim_)
    : classes(classes_), dim(dim_), weights(classes_ * dim_, 0.0), biases(classes_, 0.0) {}

void TClassifier::fill_zero() {
  std::fill(weights.begin(), weights.end(), 0.0);
  std::fill(biases.begin(), biases.end(), 0.0);
}

bool TClassifier::all_finite() const {
  auto finite = [](double v) { return std::isfinite(v); };
  return std::all_of(weights.begin(), weights.end(), finite) &&
         std::all_of(biases.begin(), biases.end(), finite);
}

double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  check_dim(a.size(), b.size(), "cosine_similarity");
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw InputError("cosine similarity is undefined for a zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

void t_preactivation(const TClassifier& c, std::span<const double> z, std::span<double> out) {
  check_dim(c.dim, z.size(), "t-classifier input");
  check_dim(c.classes, out.size(), "t-classifier output");
  for (std::size_t i = 0; i < c.classes; ++i) out[i] = dot(c.row(i), z) + c.biases[i];
}

void t_forward(const TClassifier& c, std::span<const double> z, double tau, std::span<double> out) {
  t_preactivation(c, z, out);
  for (double& v : out) v = tau * std::tanh(v / tau);
}

std::vector<double> t_forward(const TClassifier& c, std::span<const double> z, double tau) {
  std::vector<double> out(c.classes);
  t_forward(c, z, tau, out);
  return out;
}

// ---------------------------------------------------------------------------
// Memory

EnsembleMemory EnsembleMemory::initialize(const Hyperparams& hp) {
  hp.validate();
  const std::size_t n = hp.ensemble_size;
  const std::size_t d = hp.dim;

  std::vector<double> keys(n * d);
  {
    Rng rng = make_rng(hp.seed, Stream::kKeys);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : keys) v = normal(rng);
  }

  std::vector<TClassifier> classifiers;
  classifiers.reserve(n);
  Rng rng = make_rng(hp.seed, Stream::kWeights);
  const double stddev = variance_scaling_stddev(hp.init_scale, d);
  for (std::size_t i = 0; i < n; ++i) {
    TClassifier c(hp.classes, d);
    fill_truncated_normal(rng, stddev, c.weights);
    classifiers.push_back(std::move(c));
  }
  return EnsembleMemory(std::move(keys), std::move(classifiers));
}

EnsembleMemory::EnsembleMemory(std::vector<double> keys, std::vector<TClassifier> classifiers)
    : keys_(std::move(keys)), classifiers_(std::move(classifiers)) {
  if (classifiers_.empty()) throw ConfigError("ensemble memory needs at least one classifier");
  dim_ = classifiers_.front().dim;
  classes_ = classifiers_.front().classes;
  if (dim_ == 0 || classes_ == 0) throw ConfigError("ensemble memory: empty classifier shape");
  check_dim(classifiers_.size() * dim_, keys_.size(), "ensemble keys");
  for (const TClassifier& c : classifiers_) {
    if (c.dim != dim_ || c.classes != classes_ || c.weights.size() != dim_ * classes_ ||
        c.biases.size() != classes_) {
      throw ConfigError("ensemble memory: classifiers disagree on shape");
    }
  }
  unit_keys_.resize(keys_.size());
  for (std::size_t i = 0; i < classifiers_.size(); ++i) {
    const double nk = norm(key(i));
    if (nk == 0.0 || !std::isfinite(nk)) {
      throw ConfigError("ensemble memory: key " + std::to_string(i) + " is zero or non-finite");
    }
    for (std::size_t j = 0; j < dim_; ++j) unit_keys_[i * dim_ + j] = keys_[i * dim_ + j] / nk;
  }
}

// ---------------------------------------------------------------------------
// Gradient buffers

Gradients::Gradients(std::size_t size, std::size_t classes, std::size_t dim)
    : buffers_(size, TClassifier(classes, dim)), touched_(size, 0) {}

void Gradients::clear() {
  for (std::size_t i : touched_list_) {
    buffers_[i].fill_zero();
    touched_[i] = 0;
  }
  touched_list_.clear();
}

TClassifier& Gradients::touch(std::size_t i) {
  if (!touched_[i]) {
    touched_[i] = 1;
    touched_list_.push_back(i);
  }
  return buffers_[i];
}

// ---------------------------------------------------------------------------
// Selection and aggregation

Selection top_k_select(const EnsembleMemory& mem, std::span<const double> z, std::size_t k) {
  const std::size_t n = mem.size();
  if (k < 1 || k > n) {
    throw ConfigError("top-k selection: k=" + std::to_string(k) + " must be in [1, " +
                      std::to_string(n) + "]");
  }
  check_dim(mem.dim(), z.size(), "top-k selection");
  const double nz = norm(z);
  if (nz == 0.0) throw InputError("top-k selection: embedding is the zero vector");
  if (!std::isfinite(nz)) throw InputError("top-k selection: embedding is not finite");

  std::vector<double> sims(n);
  for (std::size_t i = 0; i < n; ++i) {
    sims[i] = std::clamp(dot(mem.unit_key(i), z) / nz, -1.0, 1.0);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto better = [&](std::size_t a, std::size_t b) {
    return sims[a] > sims[b] || (sims[a] == sims[b] && a < b);
  };
  if (k < n) {
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1),
                     order.end(), better);
  }
  std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), better);

  Selection sel;
  sel.index.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  sel.similarity.reserve(k);
  for (std::size_t i : sel.index) sel.similarity.push_back(sims[i]);
  return sel;
}

std::vector<double> aggregation_weights(const Selection& selection) {
  double total = 0.0;
  for (double s : selection.similarity) total += s;
  if (std::abs(total) <= kDegenerateTolerance) throw DegenerateAggregationError(total);
  std::vector<double> weights(selection.size());
  for (std::size_t i = 0; i < selection.size(); ++i) weights[i] = selection.similarity[i] / total;
  return weights;
}

void aggregate_forward(const EnsembleMemory& mem, std::span<const double> z,
                       const Selection& selection, std::span<const double> weights, double tau,
                       std::span<double> out) {
  check_dim(mem.classes(), out.size(), "ensemble output");
  std::fill(out.begin(), out.end(), 0.0);
  std::vector<double> v(mem.classes());
  for (std::size_t s = 0; s < selection.size(); ++s) {
    t_forward(mem.classifier(selection.index[s]), z, tau, v);
    const double w = weights[s];
    for (std::size_t c = 0; c < v.size(); ++c) out[c] += w * v[c];
  }
}

ModelOutput ensemble_forward(const EnsembleMemory& mem, std::span<const double> z,
                             const Hyperparams& hp) {
  ModelOutput out;
  out.selected = top_k_select(mem, z, hp.k);
  out.weights = aggregation_weights(out.selected);
  out.y_hat.resize(mem.classes());
  aggregate_forward(mem, z, out.selected, out.weights, hp.tau, out.y_hat);
  return out;
}

// ---------------------------------------------------------------------------
// Loss and gradients

double loss(std::span<const double> y, std::span<const double> y_hat) {
  check_dim(y.size(), y_hat.size(), "loss");
  std::size_t ones = 0;
  std::size_t label = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 1.0) {
      ++ones;
      label = i;
    } else if (y[i] != 0.0) {
      throw InputError("loss: target is not one-hot");
    }
  }
  if (ones != 1) throw InputError("loss: target is not one-hot");
  return -y_hat[label];
}

double loss_for_label(std::size_t label, std::span<const double> y_hat) {
  if (label >= y_hat.size()) throw InputError("loss: label out of range");
  return -y_hat[label];
}

void accumulate_t_gradient(const TClassifier& c, std::span<const double> z, std::size_t label,
                           double tau, double scale, TClassifier& grad) {
  check_dim(c.dim, z.size(), "t-classifier gradient");
  if (label >= c.classes) throw InputError("gradient: label out of range");
  const double psi = dot(c.row(label), z) + c.biases[label];
  const double coef = -scale * sech2(psi / tau);
  std::span<double> g = grad.row(label);
  for (std::size_t j = 0; j < z.size(); ++j) g[j] += coef * z[j];
  grad.biases[label] += coef;
}

void accumulate_gradient(const EnsembleMemory& mem, std::span<const double> z, std::size_t label,
                         const Hyperparams& hp, Gradients& grads) {
  if (label >= mem.classes()) throw InputError("gradient: label out of range");
  // Only the target row of each selected classifier has a nonzero gradient,
  // so the full output vector is never needed here.
  const Selection selected = top_k_select(mem, z, hp.k);
  const std::vector<double> weights = aggregation_weights(selected);
  for (std::size_t s = 0; s < selected.size(); ++s) {
    const std::size_t i = selected.index[s];
    accumulate_t_gradient(mem.classifier(i), z, label, hp.tau, weights[s], grads.touch(i));
  }
}

Gradients grad(const EnsembleMemory& mem, std::span<const double> z, std::size_t label,
               const Hyperparams& hp) {
  Gradients g(mem.size(), mem.classes(), mem.dim());
  accumulate_gradient(mem, z, label, hp, g);
  return g;
}

void sign_update(TClassifier& params, const TClassifier& grad, const Hyperparams& hp) {
  const double lr = hp.lr;
  const double decay = hp.decay;
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    double& p = params.weights[i];
    p = p - lr * sign(grad.weights[i]) - decay * p;
  }
  const double bias_decay = hp.decay_biases ? decay : 0.0;
  for (std::size_t i = 0; i < params.biases.size(); ++i) {
    double& p = params.biases[i];
    p = p - lr * sign(grad.biases[i]) - bias_decay * p;
  }
  if (!params.all_finite()) throw NumericError("sign update produced a non-finite parameter");
}

void sign_update(EnsembleMemory& mem, const Gradients& grads, const Hyperparams& hp) {
  if (grads.size() != mem.size()) throw ConfigError("sign update: gradient/memory size mismatch");
  for (std::size_t i = 0; i < mem.size(); ++i) sign_update(mem.classifier(i), grads[i], hp);
}

void train_step(EnsembleMemory& mem, std::span<const Example> batch, const Hyperparams& hp,
                Gradients& scratch) {
  scratch.clear();
  for (const Example& ex : batch) accumulate_gradient(mem, ex.z, ex.label, hp, scratch);
  sign_update(mem, scratch, hp);
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw InputError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

std::size_t predict(const EnsembleMemory& mem, std::span<const double> z, const Hyperparams& hp) {
  return argmax(ensemble_forward(mem, z, hp).y_hat);
}

}  // namespace emc
