#include "emc/baseline.hpp"

#include <algorithm>
#include <cmath>

#include "emc/errors.hpp"
#include "emc/rng.hpp"

namespace emc {

BaselineClassifier BaselineClassifier::initialize(BaselineFlavor flavor, const Hyperparams& hp) {
  hp.validate();
  BaselineClassifier b{TClassifier(hp.classes, hp.dim), flavor};
  Rng rng = make_rng(hp.seed, Stream::kWeights);
  fill_truncated_normal(rng, variance_scaling_stddev(hp.init_scale, hp.dim), b.params.weights);
  return b;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  if (logits.empty()) throw InputError("log_softmax of an empty vector");
  const double peak = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - peak);
  const double lse = peak + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::vector<double> baseline_forward(const BaselineClassifier& b, std::span<const double> z,
                                     const Hyperparams& hp) {
  if (b.flavor == BaselineFlavor::kTanh) return t_forward(b.params, z, hp.tau);
  std::vector<double> logits(b.params.classes);
  t_preactivation(b.params, z, logits);
  return log_softmax(logits);
}

double vanilla_loss(const TClassifier& c, std::span<const double> z, std::size_t label) {
  if (label >= c.classes) throw InputError("vanilla loss: label out of range");
  std::vector<double> logits(c.classes);
  t_preactivation(c, z, logits);
  return -log_softmax(logits)[label];
}

void accumulate_vanilla_gradient(const TClassifier& c, std::span<const double> z,
                                 std::size_t label, TClassifier& grad) {
  if (label >= c.classes) throw InputError("vanilla gradient: label out of range");
  std::vector<double> logp(c.classes);
  t_preactivation(c, z, logp);
  logp = log_softmax(logp);
  for (std::size_t r = 0; r < c.classes; ++r) {
    const double coef = std::exp(logp[r]) - (r == label ? 1.0 : 0.0);
    std::span<double> g = grad.row(r);
    for (std::size_t j = 0; j < z.size(); ++j) g[j] += coef * z[j];
    grad.biases[r] += coef;
  }
}

void run_baseline_step(BaselineClassifier& b, std::span<const Example> batch,
                       const Hyperparams& hp, TClassifier& scratch) {
  scratch.fill_zero();
  for (const Example& ex : batch) {
    if (b.flavor == BaselineFlavor::kTanh) {
      // Identical arithmetic to a one-member ensemble, whose weight is exactly 1.
      accumulate_t_gradient(b.params, ex.z, ex.label, hp.tau, 1.0, scratch);
    } else {
      accumulate_vanilla_gradient(b.params, ex.z, ex.label, scratch);
    }
  }
  sign_update(b.params, scratch, hp);
}

std::size_t baseline_predict(const BaselineClassifier& b, std::span<const double> z,
                             const Hyperparams& hp) {
  return argmax(baseline_forward(b, z, hp));
}

}  // namespace emc
