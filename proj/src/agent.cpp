#include "mlah/agent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mlah/errors.hpp"

namespace mlah {

std::string_view to_string(MasterConditioning c) {
  return c == MasterConditioning::kValues ? "values" : "advantages";
}

MasterConditioning master_conditioning_from_string(std::string_view name) {
  if (name == "values") return MasterConditioning::kValues;
  if (name == "advantages") return MasterConditioning::kAdvantages;
  throw ConfigError("unknown master conditioning '" + std::string(name) + "'");
}

std::vector<std::string> AgentConfig::validate() const {
  std::vector<std::string> errors;
  if (num_subpolicies < 1) errors.push_back("agent.num_subpolicies must be >= 1");
  if (master_hidden < 1) errors.push_back("agent.master_hidden must be >= 1");
  if (sub_hidden < 1) errors.push_back("agent.sub_hidden must be >= 1");
  if (decision_period < 1) errors.push_back("agent.decision_period must be >= 1");
  if (!(ppo.gamma >= 0.0 && ppo.gamma <= 1.0)) errors.push_back("agent.gamma must lie in [0, 1]");
  if (!(ppo.lambda >= 0.0 && ppo.lambda <= 1.0)) errors.push_back("agent.lambda must lie in [0, 1]");
  if (!(ppo.clip_ratio > 0.0)) errors.push_back("agent.clip_ratio must be positive");
  if (!(ppo.entropy_coef >= 0.0)) errors.push_back("agent.entropy_coef must be >= 0");
  if (ppo.epochs < 1) errors.push_back("agent.epochs must be >= 1");
  if (ppo.minibatch_size < 1) errors.push_back("agent.minibatch_size must be >= 1");
  if (!(ppo.max_grad_norm >= 0.0)) errors.push_back("agent.max_grad_norm must be >= 0");
  if (!(master_learning_rate > 0.0)) errors.push_back("agent.master_learning_rate must be positive");
  if (!(sub_learning_rate > 0.0)) errors.push_back("agent.sub_learning_rate must be positive");
  if (!(value_scale > 0.0)) errors.push_back("agent.value_scale must be positive");
  if (!(value_feature_scale > 0.0)) errors.push_back("agent.value_feature_scale must be positive");
  if (!(advantage_feature_scale > 0.0)) {
    errors.push_back("agent.advantage_feature_scale must be positive");
  }
  if (!(advantage_trace_rate > 0.0 && advantage_trace_rate <= 1.0)) {
    errors.push_back("agent.advantage_trace_rate must lie in (0, 1]");
  }
  if (!(advantage_trace_decay >= 0.0 && advantage_trace_decay <= 1.0)) {
    errors.push_back("agent.advantage_trace_decay must lie in [0, 1]");
  }
  return errors;
}

// ---- networks --------------------------------------------------------------------

SubPolicy SubPolicy::create(const AgentConfig& config, Rng& rng) {
  const std::size_t h = config.sub_hidden;
  SubPolicy sub;
  sub.actor = Mlp::glorot({2, h, h, kNumActions}, OutputHead::kCategoricalLogits, rng);
  sub.critic = Mlp::glorot({2, h, h, 1}, OutputHead::kScalarValue, rng);
  sub.actor_opt = AdamState::for_network(sub.actor, {.learning_rate = config.sub_learning_rate});
  sub.critic_opt = AdamState::for_network(sub.critic, {.learning_rate = config.sub_learning_rate});
  return sub;
}

MasterPolicy MasterPolicy::create(const AgentConfig& config, Rng& rng) {
  const std::size_t h = config.master_hidden;
  const auto k = static_cast<std::size_t>(config.num_subpolicies);
  MasterPolicy master;
  master.actor = Mlp::glorot({2 + k, h, h, k}, OutputHead::kCategoricalLogits, rng);
  master.critic = Mlp::glorot({2 + k, h, h, 1}, OutputHead::kScalarValue, rng);
  master.actor_opt =
      AdamState::for_network(master.actor, {.learning_rate = config.master_learning_rate});
  master.critic_opt =
      AdamState::for_network(master.critic, {.learning_rate = config.master_learning_rate});
  master.decision_period = config.decision_period;
  return master;
}

// ---- buffer --------------------------------------------------------------------------

void RolloutBuffer::push_sub(Transition t) {
  if (full()) throw UsageError("RolloutBuffer: capacity exceeded");
  sub_.push_back(std::move(t));
}

void RolloutBuffer::push_master(Transition t) { master_.push_back(std::move(t)); }

void RolloutBuffer::accumulate_master(double reward, bool done) {
  if (master_.empty()) return;
  master_.back().reward += reward;
  master_.back().done = master_.back().done || done;
}

void RolloutBuffer::clear() {
  sub_.clear();
  master_.clear();
  sub_bootstrap.clear();
  master_bootstrap = 0.0;
}

// ---- advantages ----------------------------------------------------------------------

AdvantageEstimate compute_advantages(std::span<const Transition> transitions,
                                     std::span<const double> values, double gamma, double lambda,
                                     double bootstrap_value,
                                     std::span<const std::size_t> normalize_over) {
  const std::size_t n = transitions.size();
  AdvantageEstimate est;
  est.returns.resize(n);
  est.raw_advantages.resize(n);
  est.advantages.assign(n, 0.0);
  double next_value = bootstrap_value;
  double running = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const Transition& t = transitions[i];
    const double continuation = t.done ? 0.0 : 1.0;
    const double delta = t.reward + gamma * continuation * next_value - values[i];
    running = delta + gamma * lambda * continuation * running;
    est.raw_advantages[i] = running;
    est.returns[i] = running + values[i];
    next_value = values[i];
  }

  std::vector<std::size_t> all;
  if (normalize_over.empty()) {
    all.resize(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    normalize_over = all;
  }
  const auto m = static_cast<double>(normalize_over.size());
  if (normalize_over.size() < 2) return est;
  double mean = 0.0;
  for (std::size_t i : normalize_over) mean += est.raw_advantages[i];
  mean /= m;
  double var = 0.0;
  for (std::size_t i : normalize_over) var += (est.raw_advantages[i] - mean) * (est.raw_advantages[i] - mean);
  var /= m;
  const double denom = std::sqrt(var) + 1e-8;
  for (std::size_t i : normalize_over) est.advantages[i] = (est.raw_advantages[i] - mean) / denom;
  return est;
}

AdvantageEstimate compute_advantages(std::span<const Transition> transitions, double gamma,
                                     double lambda, double bootstrap_value) {
  std::vector<double> values(transitions.size());
  for (std::size_t i = 0; i < transitions.size(); ++i) values[i] = transitions[i].value_estimate;
  return compute_advantages(transitions, values, gamma, lambda, bootstrap_value);
}

AdvantageEstimate subpolicy_advantages(const RolloutBuffer& buffer, int sub, double gamma,
                                       double lambda, std::span<const std::size_t> own_steps) {
  const auto steps = buffer.sub();
  std::vector<double> values(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    values[i] = steps[i].sub_values.empty() ? steps[i].value_estimate : steps[i].sub_values[sub];
  }
  const double bootstrap = static_cast<std::size_t>(sub) < buffer.sub_bootstrap.size()
                               ? buffer.sub_bootstrap[sub]
                               : 0.0;
  if (own_steps.empty()) return {};
  return compute_advantages(steps, values, gamma, lambda, bootstrap, own_steps);
}

// ---- clipped surrogate update -------------------------------------------------------

UpdateStats ppo_update(Mlp& actor, AdamState& actor_opt, Mlp& critic, AdamState& critic_opt,
                       const PpoBatch& batch, const PpoConfig& config, double value_scale,
                       Rng& rng) {
  UpdateStats stats;
  stats.samples = batch.indices.size();
  if (batch.indices.empty()) return stats;

  std::vector<std::size_t> order(batch.indices.begin(), batch.indices.end());
  ForwardCache actor_cache;
  ForwardCache critic_cache;
  Gradients actor_grad = actor.zero_gradients();
  Gradients critic_grad = critic.zero_gradients();
  std::vector<double> upstream(actor.output_size());
  double clipped = 0.0;
  double evaluated = 0.0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.minibatch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.minibatch_size));
      const double inv_count = 1.0 / static_cast<double>(end - start);
      actor_grad.fill(0.0);
      critic_grad.fill(0.0);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const Transition& t = batch.transitions[i];
        const double adv = batch.advantages[i];

        const auto& logits = actor.forward(t.observation, actor_cache);
        const auto logp = log_softmax(logits);
        double entropy = 0.0;
        for (double lp : logp) entropy -= std::exp(lp) * lp;
        const double ratio = std::exp(logp[t.action] - t.log_prob);
        const double unclipped = ratio * adv;
        const double clipped_ratio =
            std::clamp(ratio, 1.0 - config.clip_ratio, 1.0 + config.clip_ratio);
        const double surrogate = std::min(unclipped, clipped_ratio * adv);
        const bool gradient_flows = unclipped <= clipped_ratio * adv;
        clipped += gradient_flows ? 0.0 : 1.0;
        evaluated += 1.0;
        stats.policy_loss -= surrogate;
        stats.entropy += entropy;

        // d(loss)/d(logit_j) for loss = -surrogate - c * entropy.
        const double d_logp = gradient_flows ? -adv * ratio : 0.0;
        for (std::size_t j = 0; j < upstream.size(); ++j) {
          const double p = std::exp(logp[j]);
          const double indicator = j == t.action ? 1.0 : 0.0;
          upstream[j] = d_logp * (indicator - p) + config.entropy_coef * p * (logp[j] + entropy);
          upstream[j] *= inv_count;
        }
        actor.accumulate_backward(actor_cache, upstream, actor_grad);

        const double value = critic.forward(t.observation, critic_cache)[0];
        const double error = value - batch.returns[i] / value_scale;
        stats.value_loss += 0.5 * error * error;
        const double d_value = error * inv_count;
        critic.accumulate_backward(critic_cache, std::span<const double>(&d_value, 1), critic_grad);
      }
      clip_global_norm(actor_grad, config.max_grad_norm);
      clip_global_norm(critic_grad, config.max_grad_norm);
      adam_step(actor, actor_grad, actor_opt);
      adam_step(critic, critic_grad, critic_opt);
      stats.minibatches += 1;
    }
  }
  stats.policy_loss /= evaluated;
  stats.value_loss /= evaluated;
  stats.entropy /= evaluated;
  stats.clip_fraction = clipped / evaluated;
  if (!std::isfinite(stats.policy_loss) || !std::isfinite(stats.value_loss) ||
      !actor.all_finite() || !critic.all_finite()) {
    throw NumericError("ppo_update: non-finite loss or parameters after update");
  }
  return stats;
}

UpdateStats update_subpolicy(SubPolicy& sub, const PpoBatch& batch, const AgentConfig& config,
                             Rng& rng) {
  return ppo_update(sub.actor, sub.actor_opt, sub.critic, sub.critic_opt, batch, config.ppo,
                    config.value_scale, rng);
}

UpdateStats update_master(MasterPolicy& master, const PpoBatch& batch, const AgentConfig& config,
                          Rng& rng) {
  return ppo_update(master.actor, master.actor_opt, master.critic, master.critic_opt, batch,
                    config.ppo, config.value_scale, rng);
}

// ---- agent -----------------------------------------------------------------------------

MlahAgent::MlahAgent(const AgentConfig& config, const GridSpec& grid, Rng& rng)
    : config_(config),
      center_(grid.goal),
      half_width_(std::max(1.0, (grid.width - 1) / 2.0)),
      half_height_(std::max(1.0, (grid.height - 1) / 2.0)) {
  if (auto errors = config.validate(); !errors.empty()) throw ConfigError(errors.front());
  for (int i = 0; i < config.num_subpolicies; ++i) subs_.push_back(SubPolicy::create(config, rng));
  master_ = MasterPolicy::create(config, rng);
  traces_.assign(subs_.size(), 0.0);
}

std::vector<double> MlahAgent::normalize(Observation obs) const {
  return {(obs.x - center_.x) / half_width_, (obs.y - center_.y) / half_height_};
}

std::vector<double> MlahAgent::sub_values(std::span<const double> normalized) const {
  std::vector<double> values(subs_.size());
  for (std::size_t i = 0; i < subs_.size(); ++i) {
    values[i] = subs_[i].critic.forward(normalized)[0] * config_.value_scale;
  }
  return values;
}

std::vector<double> MlahAgent::traces_after_pending(std::span<const double> values) const {
  std::vector<double> traces = traces_;
  if (!pending_ || !pending_->has_reward) return traces;
  const PendingOutcome& p = *pending_;
  const double next = p.done ? 0.0 : values[p.sub];
  const double td = p.reward + config_.ppo.gamma * next - p.value;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (static_cast<int>(i) == p.sub) {
      traces[i] += config_.advantage_trace_rate * (td - traces[i]);
    } else {
      traces[i] *= 1.0 - config_.advantage_trace_decay;
    }
  }
  return traces;
}

std::vector<double> MlahAgent::build_master_input(std::span<const double> normalized,
                                                  std::span<const double> values,
                                                  std::span<const double> traces) const {
  std::vector<double> input(normalized.begin(), normalized.end());
  for (std::size_t i = 0; i < subs_.size(); ++i) {
    input.push_back(config_.conditioning == MasterConditioning::kValues
                        ? values[i] / config_.value_feature_scale
                        : traces[i] / config_.advantage_feature_scale);
  }
  return input;
}

std::vector<double> MlahAgent::master_observation(Observation obs) const {
  const auto normalized = normalize(obs);
  const auto values = sub_values(normalized);
  return build_master_input(normalized, values, traces_after_pending(values));
}

ActDecision MlahAgent::act(Observation obs, int episode_step, Rng& rng, const ActOptions& options) {
  const auto normalized = normalize(obs);
  ActDecision decision;
  decision.sub_values = sub_values(normalized);
  traces_ = traces_after_pending(decision.sub_values);
  pending_.reset();

  if (options.use_master && subs_.size() > 1) {
    const bool decide = current_sub_ < 0 || episode_step % master_.decision_period == 0;
    if (decide) {
      Transition t;
      t.level = Level::kMaster;
      t.observation = build_master_input(normalized, decision.sub_values, traces_);
      const auto& logits = master_.actor.forward(t.observation);
      const CategoricalSample pick = options.greedy ? greedy_head(logits) : policy_head(logits, rng);
      t.action = pick.action;
      t.log_prob = pick.log_prob;
      t.value_estimate = master_.critic.forward(t.observation)[0] * config_.value_scale;
      t.chosen_sub = static_cast<int>(pick.action);
      current_sub_ = t.chosen_sub;
      decision.new_master_decision = true;
      decision.master = std::move(t);
    }
  } else {
    if (options.forced_sub < 0 || options.forced_sub >= num_subpolicies()) {
      throw UsageError("act: forced sub-policy index out of range");
    }
    current_sub_ = options.forced_sub;
  }

  const int k = current_sub_;
  decision.chosen_sub = k;
  Transition t;
  t.level = Level::kSub;
  t.observation = normalized;
  const auto logits = subs_[k].actor.forward(normalized);
  const CategoricalSample pick = options.greedy ? greedy_head(logits) : policy_head(logits, rng);
  t.action = pick.action;
  t.log_prob = pick.log_prob;
  t.value_estimate = decision.sub_values[k];
  t.chosen_sub = k;
  t.sub_values = decision.sub_values;
  decision.action = action_from_index(pick.action);
  decision.sub = std::move(t);

  pending_ = PendingOutcome{.sub = k, .value = decision.sub_values[k]};
  return decision;
}

void MlahAgent::observe_outcome(double reward, bool done) {
  if (!pending_) throw UsageError("observe_outcome: no pending action");
  pending_->reward = reward;
  pending_->done = done;
  pending_->has_reward = true;
  if (done) current_sub_ = -1;
}

void MlahAgent::set_bootstrap(RolloutBuffer& buffer, Observation next_obs, bool use_master) const {
  const auto normalized = normalize(next_obs);
  const auto values = sub_values(normalized);
  buffer.sub_bootstrap = values;
  buffer.master_bootstrap = 0.0;
  if (use_master && subs_.size() > 1) {
    const auto input = build_master_input(normalized, values, traces_after_pending(values));
    buffer.master_bootstrap = master_.critic.forward(input)[0] * config_.value_scale;
  }
}

AgentUpdateReport MlahAgent::update(const RolloutBuffer& buffer, const UpdateOptions& options,
                                    Rng& rng) {
  AgentUpdateReport report;
  report.subs.resize(subs_.size());
  const PpoConfig& ppo = config_.ppo;

  if (!buffer.sub().empty()) {
    std::vector<std::vector<std::size_t>> partition(subs_.size());
    for (std::size_t i = 0; i < buffer.sub().size(); ++i) {
      partition[buffer.sub()[i].chosen_sub].push_back(i);
    }
    for (std::size_t s = 0; s < subs_.size(); ++s) {
      const bool trainable =
          options.trainable_subs.empty() ||
          std::find(options.trainable_subs.begin(), options.trainable_subs.end(),
                    static_cast<int>(s)) != options.trainable_subs.end();
      if (!trainable || partition[s].empty()) continue;
      const auto est =
          subpolicy_advantages(buffer, static_cast<int>(s), ppo.gamma, ppo.lambda, partition[s]);
      const PpoBatch batch{buffer.sub(), partition[s], est.advantages, est.returns};
      report.subs[s] = update_subpolicy(subs_[s], batch, config_, rng);
    }
  }

  if (options.train_master && subs_.size() > 1 && !buffer.master().empty()) {
    const auto est =
        compute_advantages(buffer.master(), ppo.gamma, ppo.lambda, buffer.master_bootstrap);
    std::vector<std::size_t> all(buffer.master().size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const PpoBatch batch{buffer.master(), all, est.advantages, est.returns};
    report.master = update_master(master_, batch, config_, rng);
  }
  return report;
}

void MlahAgent::reset_episode_state() { current_sub_ = -1; }

void MlahAgent::reset_traces() {
  std::fill(traces_.begin(), traces_.end(), 0.0);
  pending_.reset();
}

// ---- serialization ---------------------------------------------------------------------

nlohmann::json to_json(const AgentConfig& c) {
  return {{"num_subpolicies", c.num_subpolicies},
          {"master_hidden", c.master_hidden},
          {"sub_hidden", c.sub_hidden},
          {"decision_period", c.decision_period},
          {"conditioning", std::string(to_string(c.conditioning))},
          {"gamma", c.ppo.gamma},
          {"lambda", c.ppo.lambda},
          {"clip_ratio", c.ppo.clip_ratio},
          {"entropy_coef", c.ppo.entropy_coef},
          {"epochs", c.ppo.epochs},
          {"minibatch_size", c.ppo.minibatch_size},
          {"max_grad_norm", c.ppo.max_grad_norm},
          {"master_learning_rate", c.master_learning_rate},
          {"sub_learning_rate", c.sub_learning_rate},
          {"value_scale", c.value_scale},
          {"value_feature_scale", c.value_feature_scale},
          {"advantage_feature_scale", c.advantage_feature_scale},
          {"advantage_trace_rate", c.advantage_trace_rate},
          {"advantage_trace_decay", c.advantage_trace_decay}};
}

AgentConfig agent_config_from_json(const nlohmann::json& j, AgentConfig c) {
  auto read = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  read("num_subpolicies", c.num_subpolicies);
  read("master_hidden", c.master_hidden);
  read("sub_hidden", c.sub_hidden);
  read("decision_period", c.decision_period);
  if (j.contains("conditioning")) {
    c.conditioning = master_conditioning_from_string(j.at("conditioning").get<std::string>());
  }
  read("gamma", c.ppo.gamma);
  read("lambda", c.ppo.lambda);
  read("clip_ratio", c.ppo.clip_ratio);
  read("entropy_coef", c.ppo.entropy_coef);
  read("epochs", c.ppo.epochs);
  read("minibatch_size", c.ppo.minibatch_size);
  read("max_grad_norm", c.ppo.max_grad_norm);
  if (j.contains("learning_rate")) {
    c.master_learning_rate = c.sub_learning_rate = j.at("learning_rate").get<double>();
  }
  read("master_learning_rate", c.master_learning_rate);
  read("sub_learning_rate", c.sub_learning_rate);
  read("value_scale", c.value_scale);
  read("value_feature_scale", c.value_feature_scale);
  read("advantage_feature_scale", c.advantage_feature_scale);
  read("advantage_trace_rate", c.advantage_trace_rate);
  read("advantage_trace_decay", c.advantage_trace_decay);
  return c;
}

nlohmann::json MlahAgent::to_json() const {
  nlohmann::json subs = nlohmann::json::array();
  for (const auto& s : subs_) {
    subs.push_back({{"actor", mlah::to_json(s.actor)},
                    {"critic", mlah::to_json(s.critic)},
                    {"actor_opt", mlah::to_json(s.actor_opt)},
                    {"critic_opt", mlah::to_json(s.critic_opt)}});
  }
  return {{"config", mlah::to_json(config_)},
          {"master",
           {{"actor", mlah::to_json(master_.actor)},
            {"critic", mlah::to_json(master_.critic)},
            {"actor_opt", mlah::to_json(master_.actor_opt)},
            {"critic_opt", mlah::to_json(master_.critic_opt)},
            {"decision_period", master_.decision_period}}},
          {"subpolicies", subs}};
}

MlahAgent MlahAgent::from_json(const nlohmann::json& j, const GridSpec& grid) {
  MlahAgent agent;
  agent.config_ = agent_config_from_json(j.at("config"));
  agent.center_ = grid.goal;
  agent.half_width_ = std::max(1.0, (grid.width - 1) / 2.0);
  agent.half_height_ = std::max(1.0, (grid.height - 1) / 2.0);
  for (const auto& s : j.at("subpolicies")) {
    agent.subs_.push_back({mlp_from_json(s.at("actor")), mlp_from_json(s.at("critic")),
                           adam_from_json(s.at("actor_opt")), adam_from_json(s.at("critic_opt"))});
  }
  const auto& m = j.at("master");
  agent.master_ = {mlp_from_json(m.at("actor")), mlp_from_json(m.at("critic")),
                   adam_from_json(m.at("actor_opt")), adam_from_json(m.at("critic_opt")),
                   m.at("decision_period").get<int>()};
  agent.traces_.assign(agent.subs_.size(), 0.0);
  return agent;
}

}  // namespace mlah
