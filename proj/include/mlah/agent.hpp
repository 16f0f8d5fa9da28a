#pragma once

// Two-level agent: a master policy picks which sub-policy acts, the chosen
// sub-policy picks the grid action. Both levels learn from the same reward
// with a clipped-surrogate policy gradient over GAE advantages.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlah/adversary.hpp"
#include "mlah/gridworld.hpp"
#include "mlah/mlp.hpp"
#include "mlah/rng.hpp"

namespace mlah {

/// What the master sees besides the observation.
enum class MasterConditioning {
  /// Each sub-policy critic's value at the current observation.
  kValues,
  /// Each sub-policy's running TD advantage over the steps it acted.
  kAdvantages,
};

std::string_view to_string(MasterConditioning c);
MasterConditioning master_conditioning_from_string(std::string_view name);

struct PpoConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip_ratio = 0.2;
  double entropy_coef = 0.01;
  int epochs = 4;
  int minibatch_size = 64;
  double max_grad_norm = 0.5;
};

struct AgentConfig {
  int num_subpolicies = 2;
  std::size_t master_hidden = 16;
  std::size_t sub_hidden = 32;
  int decision_period = 1;
  MasterConditioning conditioning = MasterConditioning::kAdvantages;
  PpoConfig ppo;
  double master_learning_rate = 3e-4;
  double sub_learning_rate = 3e-4;
  /// Critics regress return / value_scale; value estimates are rescaled back.
  double value_scale = 100.0;
  /// Master input scaling for the value / advantage features.
  double value_feature_scale = 100.0;
  double advantage_feature_scale = 10.0;
  /// Smoothing rate of the acting sub-policy's advantage trace.
  double advantage_trace_rate = 0.5;
  /// Per-step decay toward zero of traces of sub-policies that did not act.
  double advantage_trace_decay = 0.01;

  std::vector<std::string> validate() const;
};

struct SubPolicy {
  Mlp actor;   // 2 -> h -> h -> 5 logits
  Mlp critic;  // 2 -> h -> h -> 1
  AdamState actor_opt;
  AdamState critic_opt;

  static SubPolicy create(const AgentConfig& config, Rng& rng);
};

struct MasterPolicy {
  Mlp actor;   // (2 + k) -> h -> h -> k logits
  Mlp critic;  // (2 + k) -> h -> h -> 1
  AdamState actor_opt;
  AdamState critic_opt;
  int decision_period = 1;

  static MasterPolicy create(const AgentConfig& config, Rng& rng);
};

enum class Level { kMaster, kSub };

struct Transition {
  Level level = Level::kSub;
  std::vector<double> observation;
  std::size_t action = 0;
  double log_prob = 0.0;
  double reward = 0.0;
  double value_estimate = 0.0;
  bool done = false;
  int chosen_sub = 0;
  int latent = 0;  // evaluation-only
  /// Sub level only: every sub-policy critic's value at this observation.
  std::vector<double> sub_values;
};

/// Per-update storage for both levels. `sub` holds one transition per
/// environment step; `master` one per decision window.
class RolloutBuffer {
 public:
  explicit RolloutBuffer(std::size_t capacity = 1000) : capacity_(capacity) {}

  void push_sub(Transition t);
  void push_master(Transition t);
  /// Adds a step reward to the open master window; marks it done if the
  /// episode ended.
  void accumulate_master(double reward, bool done);

  std::span<const Transition> sub() const { return sub_; }
  std::span<const Transition> master() const { return master_; }
  std::size_t size() const { return sub_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool full() const { return sub_.size() >= capacity_; }
  bool empty() const { return sub_.empty(); }
  void clear();

  /// Per sub-policy critic value after the last transition.
  std::vector<double> sub_bootstrap;
  double master_bootstrap = 0.0;

 private:
  std::size_t capacity_;
  std::vector<Transition> sub_;
  std::vector<Transition> master_;
};

struct AdvantageEstimate {
  std::vector<double> returns;
  std::vector<double> raw_advantages;
  std::vector<double> advantages;  // normalized
};

/// GAE over one level's ordered transitions. Bootstrapping stops at done
/// flags; `bootstrap_value` is used after the last transition if it is not
/// done. Normalized advantages have zero mean and unit (population) variance.
AdvantageEstimate compute_advantages(std::span<const Transition> transitions, double gamma,
                                     double lambda, double bootstrap_value);

/// Same recursion with explicit per-step value estimates, normalizing only
/// over the steps listed in `normalize_over` (all steps when empty).
AdvantageEstimate compute_advantages(std::span<const Transition> transitions,
                                     std::span<const double> values, double gamma, double lambda,
                                     double bootstrap_value,
                                     std::span<const std::size_t> normalize_over = {});

/// Advantages and returns of sub-policy `sub` over the whole step stream,
/// using that sub-policy's own critic values; normalized over its own steps.
AdvantageEstimate subpolicy_advantages(const RolloutBuffer& buffer, int sub, double gamma,
                                       double lambda, std::span<const std::size_t> own_steps);

struct UpdateStats {
  std::size_t samples = 0;
  int minibatches = 0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

struct PpoBatch {
  std::span<const Transition> transitions;
  std::span<const std::size_t> indices;  // which transitions to train on
  std::span<const double> advantages;    // indexed like transitions
  std::span<const double> returns;
};

/// Clipped-surrogate actor update plus critic regression toward returns.
UpdateStats ppo_update(Mlp& actor, AdamState& actor_opt, Mlp& critic, AdamState& critic_opt,
                       const PpoBatch& batch, const PpoConfig& config, double value_scale, Rng& rng);

UpdateStats update_subpolicy(SubPolicy& sub, const PpoBatch& batch, const AgentConfig& config,
                             Rng& rng);
UpdateStats update_master(MasterPolicy& master, const PpoBatch& batch, const AgentConfig& config,
                          Rng& rng);

struct ActOptions {
  bool greedy = false;
  /// When false the master is bypassed and `forced_sub` acts.
  bool use_master = true;
  int forced_sub = 0;
};

struct ActDecision {
  int chosen_sub = 0;
  Action action = Action::kNoOp;
  bool new_master_decision = false;
  std::optional<Transition> master;  // present on decision steps
  Transition sub;
  std::vector<double> sub_values;
};

struct UpdateOptions {
  bool train_master = true;
  /// Sub-policies to update; empty means all.
  std::vector<int> trainable_subs;
};

struct AgentUpdateReport {
  UpdateStats master;
  std::vector<UpdateStats> subs;
};

class MlahAgent {
 public:
  MlahAgent(const AgentConfig& config, const GridSpec& grid, Rng& rng);

  const AgentConfig& config() const { return config_; }
  int num_subpolicies() const { return static_cast<int>(subs_.size()); }

  /// Observation scaled to roughly [-1, 1] around the goal.
  std::vector<double> normalize(Observation obs) const;

  /// Master input for this observation, using current critics and traces.
  std::vector<double> master_observation(Observation obs) const;

  ActDecision act(Observation obs, int episode_step, Rng& rng, const ActOptions& options = {});

  /// Reward and termination of the step that followed the last act().
  void observe_outcome(double reward, bool done);

  /// Fills the buffer's bootstrap values for a rollout that stops with the
  /// agent about to observe `next_obs`.
  void set_bootstrap(RolloutBuffer& buffer, Observation next_obs, bool use_master) const;

  AgentUpdateReport update(const RolloutBuffer& buffer, const UpdateOptions& options, Rng& rng);

  /// Clears the master's held choice so the next act() decides afresh.
  void reset_episode_state();
  /// Clears advantage traces and pending outcomes.
  void reset_traces();

  const std::vector<SubPolicy>& subpolicies() const { return subs_; }
  std::vector<SubPolicy>& subpolicies() { return subs_; }
  const MasterPolicy& master() const { return master_; }
  MasterPolicy& master() { return master_; }
  const std::vector<double>& advantage_traces() const { return traces_; }

  nlohmann::json to_json() const;
  static MlahAgent from_json(const nlohmann::json& j, const GridSpec& grid);

 private:
  MlahAgent() = default;

  std::vector<double> sub_values(std::span<const double> normalized) const;
  std::vector<double> traces_after_pending(std::span<const double> values) const;
  std::vector<double> build_master_input(std::span<const double> normalized,
                                         std::span<const double> values,
                                         std::span<const double> traces) const;

  AgentConfig config_;
  Position center_{11, 11};
  double half_width_ = 10.0;
  double half_height_ = 10.0;
  std::vector<SubPolicy> subs_;
  MasterPolicy master_;

  int current_sub_ = -1;
  std::vector<double> traces_;
  struct PendingOutcome {
    int sub = 0;
    double value = 0.0;
    double reward = 0.0;
    bool done = false;
    bool has_reward = false;
  };
  std::optional<PendingOutcome> pending_;
};

nlohmann::json to_json(const AgentConfig& config);
AgentConfig agent_config_from_json(const nlohmann::json& j, AgentConfig defaults = {});

}  // namespace mlah
