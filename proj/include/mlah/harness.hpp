#pragma once

// Experiment protocol: nominal pre-training of sub-policy 0, joint training
// of the hierarchy under a scheduled adversary, the single-policy baseline,
// interval sweeps, and the summary statistics used to compare them.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlah/adversary.hpp"
#include "mlah/agent.hpp"
#include "mlah/gridworld.hpp"

namespace mlah {

enum class RunMode { kMlah, kBaselineSinglePolicy };
std::string_view to_string(RunMode m);
RunMode run_mode_from_string(std::string_view name);

struct TrainingConfig {
  int pretrain_rollouts = 40;
  int joint_rollouts = 450;
  int rollout_step_cap = 1000;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  RunMode mode = RunMode::kMlah;
  int eval_episodes = 100;
  std::uint64_t eval_seed = 20190610;
};

struct SweepConfig {
  std::vector<long> intervals{10000, 5000, 2000, 1000, 500, 250, 100, 50, 10, 2};
  /// Empty means the training seeds.
  std::vector<std::uint64_t> seeds;
  /// OpenMP worker count; 0 uses every available core.
  int workers = 0;
};

struct ExperimentConfig {
  GridSpec grid;
  AttackKind attack;
  AttackSchedule schedule;
  AgentConfig agent;
  TrainingConfig training;
  SweepConfig sweep;

  std::vector<std::string> validate() const;
  const std::vector<std::uint64_t>& sweep_seeds() const {
    return sweep.seeds.empty() ? training.seeds : sweep.seeds;
  }
};

enum class Phase { kPretrain, kJoint };

struct EpisodeSummary {
  double episode_return = 0.0;
  int length = 0;
  int attacked_steps = 0;
  bool reached_goal = false;
  /// Majority of the episode's steps were attacked.
  bool mostly_attacked() const { return 2 * attacked_steps > length; }
};

struct RolloutRecord {
  int rollout_index = 0;
  std::uint64_t seed = 0;
  Phase phase = Phase::kJoint;
  /// Episodes that finished inside this rollout (returns include any reward
  /// earned in the previous rollout).
  std::vector<EpisodeSummary> episodes;
  double rollout_cumulative_reward = 0.0;
  /// Reward of the unfinished episode carried in from the previous rollout.
  double carried_in_reward = 0.0;
  /// Reward of the unfinished episode at the end of this rollout.
  double trailing_partial_reward = 0.0;
  int steps = 0;
  int goals_reached = 0;
  int wrong_selection_count = 0;
  double wrong_selection_ratio = 0.0;
  int steps_attacked = 0;
  long first_global_step = 0;
  AgentUpdateReport update;
};

using RecordSink = std::function<void(const RolloutRecord&)>;

/// Mutable per-run state that persists across rollouts.
struct RunState {
  std::uint64_t seed = 0;
  Rng rng;
  Position position;
  int episode_step = 0;
  bool in_episode = false;
  double episode_return = 0.0;
  int episode_attacked = 0;
  long global_step = 0;
  int next_rollout_index = 0;

  explicit RunState(std::uint64_t s) : seed(s), rng(s, 2) {}
};

struct CollectOptions {
  Phase phase = Phase::kJoint;
  bool use_master = true;
  bool attacks = true;
};

/// Runs rollout_step_cap environment steps, filling `buffer`. Episodes that
/// are unfinished at the cap continue in the next rollout.
RolloutRecord collect_rollout(const ExperimentConfig& config, MlahAgent& agent, RunState& state,
                              RolloutBuffer& buffer, const CollectOptions& options);

/// Sub-policy 0 acts alone with attacks disabled; only it is updated.
std::vector<RolloutRecord> pretrain_nominal(const ExperimentConfig& config, MlahAgent& agent,
                                            RunState& state, const RecordSink& sink = {});

/// Joint training under the attack schedule, whose clock starts at 0 here.
/// In baseline mode (single sub-policy) the master is bypassed.
std::vector<RolloutRecord> train_joint(const ExperimentConfig& config, MlahAgent& agent,
                                       RunState& state, const RecordSink& sink = {});

struct EvalResult {
  std::vector<double> returns;
  int goals_reached = 0;
  int episodes = 0;
  double goal_rate() const { return episodes ? static_cast<double>(goals_reached) / episodes : 0.0; }
  double median_return() const;
};

/// Greedy rollouts of a copy of `agent`; adversary off unless `attack` is given
/// (then it is applied on every step).
EvalResult evaluate_greedy(const MlahAgent& agent, const GridSpec& grid, int episodes,
                           std::uint64_t seed, bool use_master,
                           const std::optional<AttackKind>& attack = std::nullopt);

MlahAgent make_agent(const ExperimentConfig& config, std::uint64_t seed);

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<RolloutRecord> records;
  std::optional<EvalResult> nominal_eval;  // after pre-training
  std::optional<MlahAgent> agent;
};

/// Pre-training followed by joint training, in the config's mode.
RunResult run_experiment(const ExperimentConfig& config, std::uint64_t seed,
                         const RecordSink& sink = {});

/// Single sub-policy, no master; same pre-training and schedule.
RunResult train_baseline(const ExperimentConfig& config, std::uint64_t seed,
                         const RecordSink& sink = {});

// ---- statistics ------------------------------------------------------------------

/// Linear-interpolation quantile of sorted data.
double quantile_sorted(std::span<const double> sorted, double p);

struct DistributionSummary {
  std::size_t count = 0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double variance = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
  std::size_t outlier_count = 0;
};

/// Box-plot statistics; outliers lie beyond 1.5 x IQR from the quartiles.
/// Throws UsageError on empty input.
DistributionSummary summarize(std::span<const double> values);

/// Episode returns from the last `window` joint-phase records.
std::vector<double> final_window_returns(std::span<const RolloutRecord> records, int window);

std::vector<double> wrong_selection_trace(std::span<const RolloutRecord> records);

// ---- sweeps -------------------------------------------------------------------------

struct SweepCellResult {
  long interval = 0;
  std::uint64_t seed = 0;
  std::vector<RolloutRecord> records;
  std::string error;  // empty on success
};

struct SweepSummaryRow {
  long interval = 0;
  int n_runs = 0;
  DistributionSummary stats;
};

struct SweepResult {
  std::vector<SweepCellResult> cells;  // interval-major, seed-minor
  std::vector<SweepSummaryRow> summary;
};

/// Called from worker threads, once per cell, before it runs.
using CellSinkFactory = std::function<RecordSink(long interval, std::uint64_t seed)>;

SweepResult run_sweep_serial(const ExperimentConfig& config, const CellSinkFactory& sinks = {});
SweepResult run_sweep_parallel(const ExperimentConfig& config, const CellSinkFactory& sinks = {});

/// Summary rows over each interval's final-window returns, pooled across seeds.
std::vector<SweepSummaryRow> summarize_sweep(std::span<const SweepCellResult> cells,
                                             int final_window = 100);

}  // namespace mlah
