#pragma once

#include <span>
#include <vector>

#include "emc/ensemble.hpp"

namespace emc {

enum class BaselineFlavor {
  kTanh,     ///< scaled tanh output, dot-product loss
  kVanilla,  ///< log-softmax output, negative log-likelihood loss
};

/// A single stand-alone linear classifier trained with the sign optimiser.
struct BaselineClassifier {
  TClassifier params;
  BaselineFlavor flavor = BaselineFlavor::kTanh;

  /// Truncated-normal fan-in init with hp.init_scale, drawn from the same
  /// stream as ensemble member 0; biases 0.
  static BaselineClassifier initialize(BaselineFlavor flavor, const Hyperparams& hp);
};

/// tanh flavour: tau*tanh(psi/tau); vanilla flavour: log_softmax(psi).
std::vector<double> baseline_forward(const BaselineClassifier& b, std::span<const double> z,
                                     const Hyperparams& hp);

std::vector<double> log_softmax(std::span<const double> logits);

/// -log_softmax(W z + b)[label].
double vanilla_loss(const TClassifier& c, std::span<const double> z, std::size_t label);

/// Adds d(vanilla_loss)/d(W, b) to `grad`: row r gets (p_r - [r == label]) * z.
void accumulate_vanilla_gradient(const TClassifier& c, std::span<const double> z,
                                 std::size_t label, TClassifier& grad);

/// Batch-summed gradient followed by one sign step. `scratch` must have the
/// classifier's shape.
void run_baseline_step(BaselineClassifier& b, std::span<const Example> batch,
                       const Hyperparams& hp, TClassifier& scratch);

std::size_t baseline_predict(const BaselineClassifier& b, std::span<const double> z,
                             const Hyperparams& hp);

}  // namespace emc
