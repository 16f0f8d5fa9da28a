#pragma once

// Small dense networks: affine layers with tanh between them and a linear
// output layer. Exact reverse-mode gradients, softmax policy heads and an
// Adam optimizer. Everything runs in double precision.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlah/rng.hpp"

namespace mlah {

enum class OutputHead { kCategoricalLogits, kScalarValue };

std::string to_string(OutputHead head);
OutputHead output_head_from_string(const std::string& name);

struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;  // outputs x inputs, row-major
  std::vector<double> bias;     // outputs

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out)
      : inputs(in), outputs(out), weights(in * out, 0.0), bias(out, 0.0) {}

  double& weight(std::size_t row, std::size_t col) { return weights[row * inputs + col]; }
  double weight(std::size_t row, std::size_t col) const { return weights[row * inputs + col]; }
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Parameter-shaped bundle; used for gradients and optimizer moments.
struct ParameterSet {
  std::vector<DenseLayer> layers;

  void fill(double value);
  void add_scaled(const ParameterSet& other, double scale);
  void scale(double factor);
  double squared_norm() const;
  bool same_shape(const ParameterSet& other) const;
  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;
};

using Gradients = ParameterSet;

/// Intermediates from one forward pass. activations[0] is the input and
/// activations[k] the output of layer k (post-tanh for hidden layers).
struct ForwardCache {
  std::vector<std::vector<double>> activations;
  const std::vector<double>& output() const { return activations.back(); }
};

class Mlp {
 public:
  Mlp() = default;

  /// Zero-initialized network.
  Mlp(std::vector<std::size_t> layer_sizes, OutputHead head);

  /// Uniform Glorot initialization, zero biases.
  static Mlp glorot(std::vector<std::size_t> layer_sizes, OutputHead head, Rng& rng);

  std::vector<double> forward(std::span<const double> input) const;
  const std::vector<double>& forward(std::span<const double> input, ForwardCache& cache) const;

  /// Gradient of dot(upstream, output) w.r.t. every parameter.
  Gradients backward(const ForwardCache& cache, std::span<const double> upstream) const;
  Gradients backward(std::span<const double> input, std::span<const double> upstream) const;

  /// Accumulates into an existing bundle instead of allocating one.
  void accumulate_backward(const ForwardCache& cache, std::span<const double> upstream,
                           Gradients& into) const;

  Gradients zero_gradients() const;

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  OutputHead head() const { return head_; }
  std::size_t parameter_count() const;

  const std::vector<DenseLayer>& layers() const { return params_.layers; }
  std::vector<DenseLayer>& layers() { return params_.layers; }
  const ParameterSet& parameters() const { return params_; }
  ParameterSet& parameters() { return params_; }

  bool all_finite() const;

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  std::vector<std::size_t> sizes_;
  OutputHead head_ = OutputHead::kScalarValue;
  ParameterSet params_;
};

// ---- categorical policy head ----------------------------------------------

std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);
double categorical_entropy(std::span<const double> logits);

struct CategoricalSample {
  std::size_t action = 0;
  double log_prob = 0.0;
  double entropy = 0.0;
};

/// Samples from softmax(logits).
CategoricalSample policy_head(std::span<const double> logits, Rng& rng);

/// Argmax action (lowest index on ties) with its log-probability.
CategoricalSample greedy_head(std::span<const double> logits);

// ---- optimizer -------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct AdamState {
  AdamConfig config;
  ParameterSet first_moment;
  ParameterSet second_moment;
  long step_count = 0;

  static AdamState for_network(const Mlp& net, AdamConfig config = {});

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam update. Throws NumericError naming the layer if a
/// gradient is non-finite; parameters are left untouched in that case.
void adam_step(Mlp& net, const Gradients& grads, AdamState& state);

/// Rescales grads in place so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_global_norm(Gradients& grads, double max_norm);

// ---- finite-difference gradient check ---------------------------------------

struct GradCheckReport {
  std::size_t cases = 0;
  std::size_t parameters_checked = 0;
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t failures = 0;
  bool passed() const { return failures == 0; }
};

struct GradCheckOptions {
  double perturbation = 1e-5;
  double relative_tolerance = 1e-5;
  double absolute_floor = 1e-8;
  /// max_relative_error only covers entries at least this large.
  double magnitude_floor = 1e-4;
};

/// Compares backward() against central differences of dot(upstream, forward(x))
/// on one (net, input, upstream) triple and merges the result into report.
void check_gradients(const Mlp& net, std::span<const double> input,
                     std::span<const double> upstream, const GradCheckOptions& options,
                     GradCheckReport& report);

/// Runs check_gradients over `cases_per_shape` random triples for every shape.
GradCheckReport gradient_check_suite(const std::vector<std::vector<std::size_t>>& shapes,
                                     std::size_t cases_per_shape, std::uint64_t seed,
                                     const GradCheckOptions& options = {});

// ---- serialization -----------------------------------------------------------

nlohmann::json to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AdamState& state);
AdamState adam_from_json(const nlohmann::json& j);

}  // namespace mlah
