#pragma once

// Episodic grid world: reach the goal cell, shaped by the change in
// Euclidean distance to the goal. Coordinates are 1-indexed; Up increments y
// and Right increments x. Moves into a wall leave the agent in place.

#include <array>
#include <compare>
#include <string>
#include <string_view>
#include <vector>

#include "mlah/rng.hpp"

namespace mlah {

struct Position {
  int x = 1;
  int y = 1;
  friend auto operator<=>(const Position&, const Position&) = default;
};

enum class Action : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kNoOp = 4 };
inline constexpr int kNumActions = 5;
inline constexpr std::array<Action, kNumActions> kAllActions = {
    Action::kUp, Action::kDown, Action::kLeft, Action::kRight, Action::kNoOp};

std::string_view to_string(Action a);
inline Action action_from_index(std::size_t index) { return static_cast<Action>(index); }
inline std::size_t index_of(Action a) { return static_cast<std::size_t>(a); }

struct GridSpec {
  int width = 21;
  int height = 21;
  Position goal{11, 11};
  int max_episode_steps = 100;
  double shaping_scale = 10.0;
  double step_penalty = -1.0;
  double goal_reward = 100.0;
  /// Use the shaping term exactly as printed, 10 x (d_t - d_{t-1}), which
  /// rewards moving away from the goal. Off by default.
  bool verbatim_sign = false;

  /// Human-readable descriptions of every violated constraint.
  std::vector<std::string> validate() const;
  bool contains(Position p) const { return p.x >= 1 && p.x <= width && p.y >= 1 && p.y <= height; }
  int cell_count() const { return width * height; }
};

enum class DoneReason { kRunning, kGoal, kStepLimit };
std::string_view to_string(DoneReason r);

struct StepOutcome {
  Position next_position;
  double reward = 0.0;
  bool done = false;
  DoneReason done_reason = DoneReason::kRunning;
};

/// Uniform draw over non-goal cells.
Position reset(const GridSpec& spec, Rng& rng);

double distance(Position p, const GridSpec& spec);

double reward_fn(Position prev, Position next, const GridSpec& spec);

/// Move one cell, clamped to the grid.
Position apply_move(Position pos, Action a, const GridSpec& spec);

/// `step_count` is the number of steps already taken in this episode.
/// Throws UsageError if the episode is already over.
StepOutcome step(Position pos, Action a, const GridSpec& spec, int step_count);

}  // namespace mlah
