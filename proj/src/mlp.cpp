#include "mlah/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mlah/errors.hpp"

namespace mlah {

std::string to_string(OutputHead head) {
  return head == OutputHead::kCategoricalLogits ? "categorical_logits" : "scalar_value";
}

OutputHead output_head_from_string(const std::string& name) {
  if (name == "categorical_logits") return OutputHead::kCategoricalLogits;
  if (name == "scalar_value") return OutputHead::kScalarValue;
  throw ConfigError("unknown output head '" + name + "'");
}

// ---- ParameterSet ------------------------------------------------------------

void ParameterSet::fill(double value) {
  for (auto& layer : layers) {
    std::fill(layer.weights.begin(), layer.weights.end(), value);
    std::fill(layer.bias.begin(), layer.bias.end(), value);
  }
}

void ParameterSet::add_scaled(const ParameterSet& other, double scale) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& dst = layers[l];
    const auto& src = other.layers[l];
    for (std::size_t i = 0; i < dst.weights.size(); ++i) dst.weights[i] += scale * src.weights[i];
    for (std::size_t i = 0; i < dst.bias.size(); ++i) dst.bias[i] += scale * src.bias[i];
  }
}

void ParameterSet::scale(double factor) {
  for (auto& layer : layers) {
    for (double& w : layer.weights) w *= factor;
    for (double& b : layer.bias) b *= factor;
  }
}

double ParameterSet::squared_norm() const {
  double total = 0.0;
  for (const auto& layer : layers) {
    for (double w : layer.weights) total += w * w;
    for (double b : layer.bias) total += b * b;
  }
  return total;
}

bool ParameterSet::same_shape(const ParameterSet& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].inputs != other.layers[l].inputs ||
        layers[l].outputs != other.layers[l].outputs ||
        layers[l].weights.size() != other.layers[l].weights.size() ||
        layers[l].bias.size() != other.layers[l].bias.size()) {
      return false;
    }
  }
  return true;
}

// ---- Mlp -----------------------------------------------------------------------

Mlp::Mlp(std::vector<std::size_t> layer_sizes, OutputHead head)
    : sizes_(std::move(layer_sizes)), head_(head) {
  if (sizes_.size() < 2) throw ConfigError("an Mlp needs at least an input and an output layer");
  for (std::size_t s : sizes_) {
    if (s == 0) throw ConfigError("layer sizes must be positive");
  }
  if (head_ == OutputHead::kScalarValue && sizes_.back() != 1) {
    throw ConfigError("a scalar-value head must have output size 1");
  }
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    params_.layers.emplace_back(sizes_[l], sizes_[l + 1]);
  }
}

Mlp Mlp::glorot(std::vector<std::size_t> layer_sizes, OutputHead head, Rng& rng) {
  Mlp net(std::move(layer_sizes), head);
  for (auto& layer : net.params_.layers) {
    const double a = std::sqrt(6.0 / static_cast<double>(layer.inputs + layer.outputs));
    for (double& w : layer.weights) w = rng.uniform(-a, a);
  }
  return net;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : params_.layers) n += layer.weights.size() + layer.bias.size();
  return n;
}

bool Mlp::all_finite() const {
  for (const auto& layer : params_.layers) {
    for (double w : layer.weights) {
      if (!std::isfinite(w)) return false;
    }
    for (double b : layer.bias) {
      if (!std::isfinite(b)) return false;
    }
  }
  return true;
}

std::vector<double> Mlp::forward(std::span<const double> input) const {
  ForwardCache cache;
  forward(input, cache);
  return std::move(cache.activations.back());
}

const std::vector<double>& Mlp::forward(std::span<const double> input, ForwardCache& cache) const {
  if (input.size() != input_size()) {
    throw ConfigError("forward: input has " + std::to_string(input.size()) +
                      " entries, network expects " + std::to_string(input_size()));
  }
  const std::size_t n_layers = params_.layers.size();
  cache.activations.resize(n_layers + 1);
  cache.activations[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < n_layers; ++l) {
    const DenseLayer& layer = params_.layers[l];
    const std::vector<double>& x = cache.activations[l];
    std::vector<double>& y = cache.activations[l + 1];
    y.resize(layer.outputs);
    const bool hidden = l + 1 < n_layers;
    for (std::size_t r = 0; r < layer.outputs; ++r) {
      const double* row = layer.weights.data() + r * layer.inputs;
      double acc = layer.bias[r];
      for (std::size_t c = 0; c < layer.inputs; ++c) acc += row[c] * x[c];
      y[r] = hidden ? std::tanh(acc) : acc;
      if (!std::isfinite(y[r])) {
        throw NumericError("forward: non-finite activation in layer " + std::to_string(l));
      }
    }
  }
  return cache.activations.back();
}

Gradients Mlp::zero_gradients() const {
  Gradients g;
  for (const auto& layer : params_.layers) g.layers.emplace_back(layer.inputs, layer.outputs);
  return g;
}

void Mlp::accumulate_backward(const ForwardCache& cache, std::span<const double> upstream,
                              Gradients& into) const {
  const std::size_t n_layers = params_.layers.size();
  if (cache.activations.size() != n_layers + 1) {
    throw ConfigError("backward: forward cache does not match this network");
  }
  if (upstream.size() != output_size()) {
    throw ConfigError("backward: upstream gradient has " + std::to_string(upstream.size()) +
                      " entries, network output has " + std::to_string(output_size()));
  }
  if (!into.same_shape(params_)) throw ConfigError("backward: gradient bundle shape mismatch");

  // delta holds dL/d(pre-activation) of the current layer.
  std::vector<double> delta(upstream.begin(), upstream.end());
  std::vector<double> next_delta;
  for (std::size_t l = n_layers; l-- > 0;) {
    const DenseLayer& layer = params_.layers[l];
    DenseLayer& grad = into.layers[l];
    const std::vector<double>& x = cache.activations[l];
    for (std::size_t r = 0; r < layer.outputs; ++r) {
      const double d = delta[r];
      grad.bias[r] += d;
      double* grow = grad.weights.data() + r * layer.inputs;
      for (std::size_t c = 0; c < layer.inputs; ++c) grow[c] += d * x[c];
    }
    if (l == 0) break;
    // Propagate through W^T and the tanh of the previous layer.
    next_delta.assign(layer.inputs, 0.0);
    for (std::size_t r = 0; r < layer.outputs; ++r) {
      const double d = delta[r];
      const double* row = layer.weights.data() + r * layer.inputs;
      for (std::size_t c = 0; c < layer.inputs; ++c) next_delta[c] += row[c] * d;
    }
    for (std::size_t c = 0; c < layer.inputs; ++c) next_delta[c] *= 1.0 - x[c] * x[c];
    delta.swap(next_delta);
  }
}

Gradients Mlp::backward(const ForwardCache& cache, std::span<const double> upstream) const {
  Gradients g = zero_gradients();
  accumulate_backward(cache, upstream, g);
  return g;
}

Gradients Mlp::backward(std::span<const double> input, std::span<const double> upstream) const {
  ForwardCache cache;
  forward(input, cache);
  return backward(cache, upstream);
}

// ---- categorical head -------------------------------------------------------------

namespace {

void require_finite(std::span<const double> logits) {
  for (double z : logits) {
    if (!std::isfinite(z)) throw NumericError("policy head: non-finite logit");
  }
}

}  // namespace

std::vector<double> log_softmax(std::span<const double> logits) {
  require_finite(logits);
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - max_logit);
  const double log_norm = max_logit + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_norm;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  require_finite(logits);
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - max_logit);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double categorical_entropy(std::span<const double> logits) {
  const auto logp = log_softmax(logits);
  double h = 0.0;
  for (double lp : logp) h -= std::exp(lp) * lp;
  return h;
}

CategoricalSample policy_head(std::span<const double> logits, Rng& rng) {
  const auto logp = log_softmax(logits);
  const double u = rng.uniform();
  double cumulative = 0.0;
  std::size_t action = logp.size() - 1;
  double entropy = 0.0;
  bool chosen = false;
  for (std::size_t i = 0; i < logp.size(); ++i) {
    const double p = std::exp(logp[i]);
    entropy -= p * logp[i];
    cumulative += p;
    if (!chosen && u < cumulative) {
      action = i;
      chosen = true;
    }
  }
  return {action, logp[action], entropy};
}

CategoricalSample greedy_head(std::span<const double> logits) {
  const auto logp = log_softmax(logits);
  const auto best = static_cast<std::size_t>(
      std::distance(logp.begin(), std::max_element(logp.begin(), logp.end())));
  double entropy = 0.0;
  for (double lp : logp) entropy -= std::exp(lp) * lp;
  return {best, logp[best], entropy};
}

// ---- Adam ----------------------------------------------------------------------------

AdamState AdamState::for_network(const Mlp& net, AdamConfig config) {
  AdamState state;
  state.config = config;
  state.first_moment = net.zero_gradients();
  state.second_moment = net.zero_gradients();
  return state;
}

void adam_step(Mlp& net, const Gradients& grads, AdamState& state) {
  if (!grads.same_shape(net.parameters()) || !state.first_moment.same_shape(net.parameters()) ||
      !state.second_moment.same_shape(net.parameters())) {
    throw ConfigError("adam_step: gradient/optimizer shapes do not match the network");
  }
  for (std::size_t l = 0; l < grads.layers.size(); ++l) {
    const auto& g = grads.layers[l];
    const bool finite =
        std::all_of(g.weights.begin(), g.weights.end(), [](double v) { return std::isfinite(v); }) &&
        std::all_of(g.bias.begin(), g.bias.end(), [](double v) { return std::isfinite(v); });
    if (!finite) throw NumericError("adam_step: non-finite gradient in layer " + std::to_string(l));
  }

  const AdamConfig& cfg = state.config;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);

  auto update = [&](std::vector<double>& param, const std::vector<double>& grad,
                    std::vector<double>& m, std::vector<double>& v) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      param[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  };
  for (std::size_t l = 0; l < grads.layers.size(); ++l) {
    auto& layer = net.layers()[l];
    update(layer.weights, grads.layers[l].weights, state.first_moment.layers[l].weights,
           state.second_moment.layers[l].weights);
    update(layer.bias, grads.layers[l].bias, state.first_moment.layers[l].bias,
           state.second_moment.layers[l].bias);
  }
}

double clip_global_norm(Gradients& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (max_norm > 0.0 && norm > max_norm) grads.scale(max_norm / norm);
  return norm;
}

// ---- gradient check ---------------------------------------------------------------------

namespace {

double scalar_objective(const Mlp& net, std::span<const double> input,
                        std::span<const double> upstream) {
  const auto out = net.forward(input);
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) total += upstream[i] * out[i];
  return total;
}

}  // namespace

void check_gradients(const Mlp& net, std::span<const double> input,
                     std::span<const double> upstream, const GradCheckOptions& options,
                     GradCheckReport& report) {
  const Gradients analytic = net.backward(input, upstream);
  Mlp probe = net;
  const double h = options.perturbation;

  auto compare = [&](double& param, double analytic_value) {
    const double saved = param;
    param = saved + h;
    const double plus = scalar_objective(probe, input, upstream);
    param = saved - h;
    const double minus = scalar_objective(probe, input, upstream);
    param = saved;
    const double numeric = (plus - minus) / (2.0 * h);
    const double abs_err = std::abs(analytic_value - numeric);
    const double scale = std::max(std::abs(analytic_value), std::abs(numeric));
    const double rel_err = scale > 0.0 ? abs_err / scale : 0.0;
    report.parameters_checked += 1;
    report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
    if (scale >= options.magnitude_floor) {
      report.max_relative_error = std::max(report.max_relative_error, rel_err);
    }
    // Entries whose absolute error is under the floor pass regardless of scale.
    if (abs_err > options.absolute_floor && rel_err > options.relative_tolerance) report.failures += 1;
  };

  for (std::size_t l = 0; l < probe.layers().size(); ++l) {
    auto& layer = probe.layers()[l];
    for (std::size_t i = 0; i < layer.weights.size(); ++i) {
      compare(layer.weights[i], analytic.layers[l].weights[i]);
    }
    for (std::size_t i = 0; i < layer.bias.size(); ++i) {
      compare(layer.bias[i], analytic.layers[l].bias[i]);
    }
  }
  report.cases += 1;
}

GradCheckReport gradient_check_suite(const std::vector<std::vector<std::size_t>>& shapes,
                                     std::size_t cases_per_shape, std::uint64_t seed,
                                     const GradCheckOptions& options) {
  GradCheckReport report;
  Rng rng(seed, 0x9c);
  for (const auto& shape : shapes) {
    const OutputHead head =
        shape.back() == 1 ? OutputHead::kScalarValue : OutputHead::kCategoricalLogits;
    for (std::size_t c = 0; c < cases_per_shape; ++c) {
      const Mlp net = Mlp::glorot(shape, head, rng);
      std::vector<double> input(shape.front());
      for (double& v : input) v = rng.uniform(-2.0, 2.0);
      std::vector<double> upstream(shape.back());
      for (double& v : upstream) v = rng.uniform(-1.0, 1.0);
      check_gradients(net, input, upstream, options, report);
    }
  }
  return report;
}

// ---- JSON --------------------------------------------------------------------------------

namespace {

nlohmann::json parameters_to_json(const ParameterSet& params) {
  auto layers = nlohmann::json::array();
  for (const auto& layer : params.layers) {
    layers.push_back({{"inputs", layer.inputs},
                      {"outputs", layer.outputs},
                      {"weights", layer.weights},
                      {"bias", layer.bias}});
  }
  return layers;
}

ParameterSet parameters_from_json(const nlohmann::json& j) {
  ParameterSet params;
  for (const auto& entry : j) {
    DenseLayer layer(entry.at("inputs").get<std::size_t>(), entry.at("outputs").get<std::size_t>());
    layer.weights = entry.at("weights").get<std::vector<double>>();
    layer.bias = entry.at("bias").get<std::vector<double>>();
    if (layer.weights.size() != layer.inputs * layer.outputs || layer.bias.size() != layer.outputs) {
      throw ConfigError("checkpoint layer arrays do not match declared shape");
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

}  // namespace

nlohmann::json to_json(const Mlp& net) {
  return {{"layer_sizes", net.layer_sizes()},
          {"head", to_string(net.head())},
          {"layers", parameters_to_json(net.parameters())}};
}

Mlp mlp_from_json(const nlohmann::json& j) {
  Mlp net(j.at("layer_sizes").get<std::vector<std::size_t>>(),
          output_head_from_string(j.at("head").get<std::string>()));
  ParameterSet params = parameters_from_json(j.at("layers"));
  if (!params.same_shape(net.parameters())) {
    throw ConfigError("checkpoint layers do not match layer_sizes");
  }
  net.parameters() = std::move(params);
  return net;
}

nlohmann::json to_json(const AdamState& state) {
  return {{"learning_rate", state.config.learning_rate},
          {"beta1", state.config.beta1},
          {"beta2", state.config.beta2},
          {"epsilon", state.config.epsilon},
          {"step_count", state.step_count},
          {"first_moment", parameters_to_json(state.first_moment)},
          {"second_moment", parameters_to_json(state.second_moment)}};
}

AdamState adam_from_json(const nlohmann::json& j) {
  AdamState state;
  state.config.learning_rate = j.at("learning_rate").get<double>();
  state.config.beta1 = j.at("beta1").get<double>();
  state.config.beta2 = j.at("beta2").get<double>();
  state.config.epsilon = j.at("epsilon").get<double>();
  state.step_count = j.at("step_count").get<long>();
  state.first_moment = parameters_from_json(j.at("first_moment"));
  state.second_moment = parameters_from_json(j.at("second_moment"));
  return state;
}

}  // namespace mlah
