#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace emc {

/// Model and optimiser settings. Defaults are the published ones and are used
/// unchanged for every dataset.
struct Hyperparams {
  std::size_t ensemble_size = 1024;  ///< number of key/classifier pairs
  std::size_t dim = 0;               ///< embedding dimension
  std::size_t classes = 0;           ///< number of output classes
  std::size_t k = 32;                ///< classifiers selected per input
  double tau = 250.0;                ///< tanh scaling factor
  double lr = 1e-4;                  ///< fixed step of the sign optimiser
  double decay = 1e-4;               ///< decoupled weight decay factor
  double init_scale = 1.0;           ///< fan-in variance scaling factor
  bool decay_biases = true;
  std::uint64_t seed = 0;

  /// Throws ConfigError when any field is out of range.
  void validate() const;
};

/// A single linear layer followed by tau * tanh(x / tau). Also used as the
/// gradient buffer for one classifier since the shapes coincide.
struct TClassifier {
  std::size_t classes = 0;
  std::size_t dim = 0;
  std::vector<double> weights;  // classes x dim, row-major
  std::vector<double> biases;   // classes

  TClassifier() = default;
  TClassifier(std::size_t classes, std::size_t dim);

  [[nodiscard]] std::span<const double> row(std::size_t c) const {
    return {weights.data() + c * dim, dim};
  }
  [[nodiscard]] std::span<double> row(std::size_t c) { return {weights.data() + c * dim, dim}; }

  void fill_zero();
  [[nodiscard]] bool all_finite() const;

  friend bool operator==(const TClassifier&, const TClassifier&) = default;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

/// (a . b) / (|a| |b|), clamped to [-1, 1]. Throws InputError on a zero vector.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Pre-activations psi_c(z) = w_c . z + b_c.
void t_preactivation(const TClassifier& c, std::span<const double> z, std::span<double> out);

/// out_c = tau * tanh(psi_c(z) / tau).
void t_forward(const TClassifier& c, std::span<const double> z, double tau, std::span<double> out);
std::vector<double> t_forward(const TClassifier& c, std::span<const double> z, double tau);

/// The k classifiers whose keys are most similar to an embedding, ordered by
/// non-increasing similarity (lower index first on ties).
struct Selection {
  std::vector<std::size_t> index;
  std::vector<double> similarity;

  [[nodiscard]] std::size_t size() const noexcept { return index.size(); }
  friend bool operator==(const Selection&, const Selection&) = default;
};

/// Normalised aggregation weights gamma_i / sum(gamma). Throws
/// DegenerateAggregationError when |sum(gamma)| <= 1e-9.
std::vector<double> aggregation_weights(const Selection& selection);

struct ModelOutput {
  std::vector<double> y_hat;
  Selection selected;
  std::vector<double> weights;  // aggregation weights, parallel to selected
};

/// Fixed random keys paired with trainable t-classifiers.
class EnsembleMemory {
 public:
  /// Keys ~ N(0, 1); weights ~ truncated-normal fan-in scaling; biases 0.
  static EnsembleMemory initialize(const Hyperparams& hp);

  /// Explicit construction; keys is size x dim row-major. Every key must be
  /// nonzero and every classifier must agree on its shape.
  EnsembleMemory(std::vector<double> keys, std::vector<TClassifier> classifiers);

  [[nodiscard]] std::size_t size() const noexcept { return classifiers_.size(); }
  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] std::size_t classes() const noexcept { return classes_; }

  [[nodiscard]] std::span<const double> keys() const noexcept { return keys_; }
  [[nodiscard]] std::span<const double> key(std::size_t i) const {
    return {keys_.data() + i * dim_, dim_};
  }
  [[nodiscard]] std::span<const double> unit_key(std::size_t i) const {
    return {unit_keys_.data() + i * dim_, dim_};
  }

  [[nodiscard]] const TClassifier& classifier(std::size_t i) const { return classifiers_[i]; }
  [[nodiscard]] TClassifier& classifier(std::size_t i) { return classifiers_[i]; }
  [[nodiscard]] std::span<const TClassifier> classifiers() const noexcept { return classifiers_; }
  [[nodiscard]] std::span<TClassifier> classifiers() noexcept { return classifiers_; }

 private:
  std::vector<double> keys_;
  std::vector<double> unit_keys_;
  std::vector<TClassifier> classifiers_;
  std::size_t dim_ = 0;
  std::size_t classes_ = 0;
};

/// Sparse-friendly gradient accumulator with one TClassifier-shaped buffer per
/// ensemble member. Only touched members are cleared.
class Gradients {
 public:
  Gradients(std::size_t size, std::size_t classes, std::size_t dim);

  void clear();
  [[nodiscard]] std::size_t size() const noexcept { return buffers_.size(); }
  [[nodiscard]] const TClassifier& operator[](std::size_t i) const { return buffers_[i]; }
  [[nodiscard]] TClassifier& touch(std::size_t i);
  [[nodiscard]] bool touched(std::size_t i) const { return touched_[i] != 0; }

 private:
  std::vector<TClassifier> buffers_;
  std::vector<unsigned char> touched_;
  std::vector<std::size_t> touched_list_;
};

Selection top_k_select(const EnsembleMemory& mem, std::span<const double> z, std::size_t k);

/// y_hat = sum_i alpha_i v_i over the selected classifiers.
void aggregate_forward(const EnsembleMemory& mem, std::span<const double> z,
                       const Selection& selection, std::span<const double> weights, double tau,
                       std::span<double> out);

ModelOutput ensemble_forward(const EnsembleMemory& mem, std::span<const double> z,
                             const Hyperparams& hp);

/// -(y . y_hat). Throws InputError when y is not one-hot.
double loss(std::span<const double> y, std::span<const double> y_hat);
double loss_for_label(std::size_t label, std::span<const double> y_hat);

/// Adds scale * dL/d(W, b) of a single t-classifier to `grad`. Only row
/// `label` is written.
void accumulate_t_gradient(const TClassifier& c, std::span<const double> z, std::size_t label,
                           double tau, double scale, TClassifier& grad);

/// Adds the per-sample gradient of the ensemble loss to `grads`.
void accumulate_gradient(const EnsembleMemory& mem, std::span<const double> z, std::size_t label,
                         const Hyperparams& hp, Gradients& grads);

/// Gradient for one sample in a fresh buffer.
Gradients grad(const EnsembleMemory& mem, std::span<const double> z, std::size_t label,
               const Hyperparams& hp);

/// theta <- theta - lr * sign(g) - decay * theta, with sign(0) = 0.
/// Throws NumericError if a parameter becomes non-finite.
void sign_update(TClassifier& params, const TClassifier& grad, const Hyperparams& hp);
void sign_update(EnsembleMemory& mem, const Gradients& grads, const Hyperparams& hp);

struct Example {
  std::span<const double> z;
  std::size_t label;
};

/// One optimiser step: gradients summed over the batch, one sign step.
void train_step(EnsembleMemory& mem, std::span<const Example> batch, const Hyperparams& hp,
                Gradients& scratch);

/// Index of the largest component; lowest index wins ties.
std::size_t argmax(std::span<const double> v);

std::size_t predict(const EnsembleMemory& mem, std::span<const double> z, const Hyperparams& hp);

}  // namespace emc
