#include "mlah/config.hpp"

#include <fstream>
#include <set>

#include "mlah/errors.hpp"

namespace mlah {

using nlohmann::json;

json to_json(const ExperimentConfig& c) {
  return {
      {"grid",
       {{"width", c.grid.width},
        {"height", c.grid.height},
        {"goal_x", c.grid.goal.x},
        {"goal_y", c.grid.goal.y},
        {"max_episode_steps", c.grid.max_episode_steps},
        {"shaping_scale", c.grid.shaping_scale},
        {"step_penalty", c.grid.step_penalty},
        {"goal_reward", c.grid.goal_reward}}},
      {"reward", {{"verbatim_sign", c.grid.verbatim_sign}}},
      {"attack",
       {{"variant", std::string(to_string(c.attack.variant))},
        {"bias_amount", c.attack.bias_amount},
        {"interval_steps", c.schedule.interval_steps},
        {"duty", c.schedule.duty},
        {"phase_offset_steps", c.schedule.phase_offset_steps}}},
      {"agent", to_json(c.agent)},
      {"training",
       {{"pretrain_rollouts", c.training.pretrain_rollouts},
        {"joint_rollouts", c.training.joint_rollouts},
        {"rollout_step_cap", c.training.rollout_step_cap},
        {"seeds", c.training.seeds},
        {"mode", std::string(to_string(c.training.mode))},
        {"eval_episodes", c.training.eval_episodes},
        {"eval_seed", c.training.eval_seed}}},
      {"sweep",
       {{"intervals", c.sweep.intervals}, {"seeds", c.sweep.seeds}, {"workers", c.sweep.workers}}},
  };
}

namespace {

// Reads fields out of one block, collecting errors instead of throwing.
class BlockReader {
 public:
  BlockReader(const json& root, std::string name, std::vector<std::string>& errors)
      : name_(std::move(name)), errors_(errors) {
    if (!root.contains(name_)) return;
    const json& block = root.at(name_);
    if (!block.is_object()) {
      errors_.push_back(name_ + " must be an object");
      return;
    }
    block_ = &block;
  }

  template <typename T>
  void read(const std::string& key, T& field) {
    seen_.insert(key);
    if (!block_ || !block_->contains(key)) return;
    try {
      field = block_->at(key).get<T>();
    } catch (const json::exception&) {
      errors_.push_back(name_ + "." + key + " has the wrong type");
    }
  }

  template <typename T, typename Parse>
  void read_enum(const std::string& key, T& field, Parse parse) {
    std::string text;
    read(key, text);
    if (text.empty()) return;
    try {
      field = parse(text);
    } catch (const ConfigError& e) {
      errors_.push_back(name_ + "." + key + ": " + e.what());
    }
  }

  void mark(const std::string& key) { seen_.insert(key); }
  const json* block() const { return block_; }

  void check_unknown() {
    if (!block_) return;
    for (const auto& [key, value] : block_->items()) {
      if (!seen_.count(key)) errors_.push_back("unknown key " + name_ + "." + key);
    }
  }

 private:
  std::string name_;
  std::vector<std::string>& errors_;
  const json* block_ = nullptr;
  std::set<std::string> seen_;
};

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  std::vector<std::string> errors;
  ExperimentConfig c;
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");

  static const std::set<std::string> kBlocks = {"grid", "reward", "attack", "agent", "training", "sweep"};
  for (const auto& [key, value] : j.items()) {
    if (!kBlocks.count(key)) errors.push_back("unknown block '" + key + "'");
  }

  BlockReader grid(j, "grid", errors);
  grid.read("width", c.grid.width);
  grid.read("height", c.grid.height);
  grid.read("goal_x", c.grid.goal.x);
  grid.read("goal_y", c.grid.goal.y);
  grid.read("max_episode_steps", c.grid.max_episode_steps);
  grid.read("shaping_scale", c.grid.shaping_scale);
  grid.read("step_penalty", c.grid.step_penalty);
  grid.read("goal_reward", c.grid.goal_reward);
  grid.check_unknown();

  BlockReader reward(j, "reward", errors);
  reward.read("verbatim_sign", c.grid.verbatim_sign);
  reward.check_unknown();

  BlockReader attack(j, "attack", errors);
  attack.read_enum("variant", c.attack.variant, attack_variant_from_string);
  attack.read("bias_amount", c.attack.bias_amount);
  attack.read("interval_steps", c.schedule.interval_steps);
  attack.read("duty", c.schedule.duty);
  attack.read("phase_offset_steps", c.schedule.phase_offset_steps);
  attack.check_unknown();

  BlockReader agent(j, "agent", errors);
  if (agent.block()) {
    const json agent_keys = to_json(AgentConfig{});
    for (const auto& key : agent_keys.items()) agent.mark(key.key());
    agent.mark("learning_rate");
    try {
      c.agent = agent_config_from_json(*agent.block(), c.agent);
    } catch (const json::exception&) {
      errors.push_back("agent block has a value of the wrong type");
    } catch (const ConfigError& e) {
      errors.push_back(std::string("agent: ") + e.what());
    }
  }
  agent.check_unknown();

  BlockReader training(j, "training", errors);
  training.read("pretrain_rollouts", c.training.pretrain_rollouts);
  training.read("joint_rollouts", c.training.joint_rollouts);
  training.read("rollout_step_cap", c.training.rollout_step_cap);
  training.read("seeds", c.training.seeds);
  training.read_enum("mode", c.training.mode, run_mode_from_string);
  training.read("eval_episodes", c.training.eval_episodes);
  training.read("eval_seed", c.training.eval_seed);
  training.check_unknown();

  BlockReader sweep(j, "sweep", errors);
  sweep.read("intervals", c.sweep.intervals);
  sweep.read("seeds", c.sweep.seeds);
  sweep.read("workers", c.sweep.workers);
  sweep.check_unknown();

  for (auto& e : c.validate()) errors.push_back(std::move(e));
  if (!errors.empty()) {
    std::string message = "invalid configuration:";
    for (const auto& e : errors) message += "\n  - " + e;
    throw ConfigError(message);
  }
  return c;
}

void apply_override(json& j, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = text;

  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

ExperimentConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j = json::parse(in, nullptr, /*allow_exceptions=*/false, /*ignore_comments=*/true);
  if (j.is_discarded()) throw ConfigError("config file " + path.string() + " is not valid JSON");
  for (const auto& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

}  // namespace mlah
