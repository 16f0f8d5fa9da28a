#include "mlah/gridworld.hpp"

#include <algorithm>
#include <cmath>

#include "mlah/errors.hpp"

namespace mlah {

std::string_view to_string(Action a) {
  switch (a) {
    case Action::kUp: return "up";
    case Action::kDown: return "down";
    case Action::kLeft: return "left";
    case Action::kRight: return "right";
    case Action::kNoOp: return "noop";
  }
  return "?";
}

std::string_view to_string(DoneReason r) {
  switch (r) {
    case DoneReason::kRunning: return "running";
    case DoneReason::kGoal: return "goal";
    case DoneReason::kStepLimit: return "step_limit";
  }
  return "?";
}

std::vector<std::string> GridSpec::validate() const {
  std::vector<std::string> errors;
  if (width < 1) errors.push_back("grid.width must be positive");
  if (height < 1) errors.push_back("grid.height must be positive");
  if (width * height < 2) errors.push_back("grid must have at least one non-goal cell");
  if (!contains(goal)) errors.push_back("grid.goal must lie inside the grid");
  if (max_episode_steps < 1) errors.push_back("grid.max_episode_steps must be >= 1");
  if (shaping_scale < 0.0) errors.push_back("grid.shaping_scale must be >= 0");
  return errors;
}

Position reset(const GridSpec& spec, Rng& rng) {
  const int goal_index = (spec.goal.y - 1) * spec.width + (spec.goal.x - 1);
  auto index = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(spec.cell_count() - 1)));
  if (index >= goal_index) ++index;
  return {index % spec.width + 1, index / spec.width + 1};
}

double distance(Position p, const GridSpec& spec) {
  const double dx = p.x - spec.goal.x;
  const double dy = p.y - spec.goal.y;
  return std::sqrt(dx * dx + dy * dy);
}

double reward_fn(Position prev, Position next, const GridSpec& spec) {
  if (next == spec.goal) return spec.goal_reward;
  const double progress = spec.verbatim_sign ? distance(next, spec) - distance(prev, spec)
                                             : distance(prev, spec) - distance(next, spec);
  return spec.step_penalty + spec.shaping_scale * progress;
}

Position apply_move(Position pos, Action a, const GridSpec& spec) {
  switch (a) {
    case Action::kUp: pos.y += 1; break;
    case Action::kDown: pos.y -= 1; break;
    case Action::kLeft: pos.x -= 1; break;
    case Action::kRight: pos.x += 1; break;
    case Action::kNoOp: break;
  }
  pos.x = std::clamp(pos.x, 1, spec.width);
  pos.y = std::clamp(pos.y, 1, spec.height);
  return pos;
}

StepOutcome step(Position pos, Action a, const GridSpec& spec, int step_count) {
  if (step_count >= spec.max_episode_steps) {
    throw UsageError("step: episode already reached its step limit");
  }
  if (pos == spec.goal) throw UsageError("step: episode already reached the goal");
  if (!spec.contains(pos)) throw UsageError("step: position outside the grid");

  StepOutcome out;
  out.next_position = apply_move(pos, a, spec);
  out.reward = reward_fn(pos, out.next_position, spec);
  if (out.next_position == spec.goal) {
    out.done_reason = DoneReason::kGoal;
  } else if (step_count + 1 >= spec.max_episode_steps) {
    out.done_reason = DoneReason::kStepLimit;
  }
  out.done = out.done_reason != DoneReason::kRunning;
  return out;
}

}  // namespace mlah
