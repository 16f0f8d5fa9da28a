#include "mlah/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mlah/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mlah {

std::string_view to_string(RunMode m) {
  return m == RunMode::kMlah ? "mlah" : "baseline_single_policy";
}

RunMode run_mode_from_string(std::string_view name) {
  if (name == "mlah") return RunMode::kMlah;
  if (name == "baseline_single_policy" || name == "baseline") return RunMode::kBaselineSinglePolicy;
  throw ConfigError("unknown training.mode '" + std::string(name) + "'");
}

std::vector<std::string> ExperimentConfig::validate() const {
  std::vector<std::string> errors = grid.validate();
  for (auto& e : mlah::validate(attack, schedule, grid)) errors.push_back(std::move(e));
  for (auto& e : agent.validate()) errors.push_back(std::move(e));
  if (training.pretrain_rollouts < 0) errors.push_back("training.pretrain_rollouts must be >= 0");
  if (training.joint_rollouts < 0) errors.push_back("training.joint_rollouts must be >= 0");
  if (training.rollout_step_cap < 1) errors.push_back("training.rollout_step_cap must be positive");
  if (training.rollout_step_cap < grid.max_episode_steps) {
    errors.push_back("training.rollout_step_cap must be >= grid.max_episode_steps");
  }
  if (training.seeds.empty()) errors.push_back("training.seeds must not be empty");
  if (training.eval_episodes < 1) errors.push_back("training.eval_episodes must be positive");
  if (sweep.intervals.empty()) errors.push_back("sweep.intervals must not be empty");
  for (std::size_t i = 0; i < sweep.intervals.size(); ++i) {
    if (sweep.intervals[i] < 1) errors.push_back("sweep.intervals must all be >= 1");
    if (i > 0 && sweep.intervals[i] >= sweep.intervals[i - 1]) {
      errors.push_back("sweep.intervals must be strictly decreasing");
    }
  }
  if (sweep.workers < 0) errors.push_back("sweep.workers must be >= 0");
  if (training.mode == RunMode::kMlah && agent.num_subpolicies < 2) {
    errors.push_back("agent.num_subpolicies must be >= 2 in mlah mode");
  }
  return errors;
}

// ---- rollouts --------------------------------------------------------------------

RolloutRecord collect_rollout(const ExperimentConfig& config, MlahAgent& agent, RunState& state,
                              RolloutBuffer& buffer, const CollectOptions& options) {
  const GridSpec& grid = config.grid;
  buffer.clear();
  RolloutRecord record;
  record.rollout_index = state.next_rollout_index++;
  record.seed = state.seed;
  record.phase = options.phase;
  record.first_global_step = state.global_step;
  record.carried_in_reward = state.in_episode ? state.episode_return : 0.0;
  const ActOptions act_options{.greedy = false, .use_master = options.use_master, .forced_sub = 0};

  for (int s = 0; s < config.training.rollout_step_cap; ++s) {
    if (!state.in_episode) {
      state.position = reset(grid, state.rng);
      state.episode_step = 0;
      state.episode_return = 0.0;
      state.episode_attacked = 0;
      state.in_episode = true;
      agent.reset_episode_state();
    }
    const bool active = options.attacks && is_active(state.global_step, config.schedule);
    const Observation obs =
        active ? perturb(state.position, config.attack, grid) : observe(state.position);
    ActDecision decision = agent.act(obs, state.episode_step, state.rng, act_options);
    const StepOutcome outcome = step(state.position, decision.action, grid, state.episode_step);
    agent.observe_outcome(outcome.reward, outcome.done);

    const int latent = active ? 1 : 0;
    if (decision.master) {
      decision.master->latent = latent;
      buffer.push_master(std::move(*decision.master));
    }
    buffer.accumulate_master(outcome.reward, outcome.done);
    decision.sub.reward = outcome.reward;
    decision.sub.done = outcome.done;
    decision.sub.latent = latent;
    buffer.push_sub(std::move(decision.sub));

    record.rollout_cumulative_reward += outcome.reward;
    record.steps += 1;
    record.steps_attacked += latent;
    if (decision.chosen_sub != latent) record.wrong_selection_count += 1;

    state.episode_return += outcome.reward;
    state.episode_attacked += latent;
    state.episode_step += 1;
    state.global_step += 1;
    state.position = outcome.next_position;
    if (outcome.done) {
      const bool goal = outcome.done_reason == DoneReason::kGoal;
      record.episodes.push_back({state.episode_return, state.episode_step, state.episode_attacked, goal});
      record.goals_reached += goal ? 1 : 0;
      state.in_episode = false;
    }
  }
  record.wrong_selection_ratio =
      record.steps ? static_cast<double>(record.wrong_selection_count) / record.steps : 0.0;

  if (state.in_episode) {
    record.trailing_partial_reward = state.episode_return;
    const bool active = options.attacks && is_active(state.global_step, config.schedule);
    const Observation next =
        active ? perturb(state.position, config.attack, grid) : observe(state.position);
    agent.set_bootstrap(buffer, next, options.use_master);
  }
  return record;
}

std::vector<RolloutRecord> pretrain_nominal(const ExperimentConfig& config, MlahAgent& agent,
                                            RunState& state, const RecordSink& sink) {
  std::vector<RolloutRecord> records;
  RolloutBuffer buffer(static_cast<std::size_t>(config.training.rollout_step_cap));
  const CollectOptions options{.phase = Phase::kPretrain, .use_master = false, .attacks = false};
  const UpdateOptions update{.train_master = false, .trainable_subs = {0}};
  for (int r = 0; r < config.training.pretrain_rollouts; ++r) {
    RolloutRecord record = collect_rollout(config, agent, state, buffer, options);
    record.update = agent.update(buffer, update, state.rng);
    if (sink) sink(record);
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<RolloutRecord> train_joint(const ExperimentConfig& config, MlahAgent& agent,
                                       RunState& state, const RecordSink& sink) {
  std::vector<RolloutRecord> records;
  RolloutBuffer buffer(static_cast<std::size_t>(config.training.rollout_step_cap));
  const bool hierarchical = agent.num_subpolicies() > 1;
  const CollectOptions options{.phase = Phase::kJoint, .use_master = hierarchical, .attacks = true};
  const UpdateOptions update{.train_master = hierarchical, .trainable_subs = {}};

  // Fresh episode and schedule clock for the joint phase.
  state.in_episode = false;
  state.global_step = 0;
  agent.reset_traces();
  for (int r = 0; r < config.training.joint_rollouts; ++r) {
    RolloutRecord record = collect_rollout(config, agent, state, buffer, options);
    record.update = agent.update(buffer, update, state.rng);
    if (sink) sink(record);
    records.push_back(std::move(record));
  }
  return records;
}

// ---- evaluation -------------------------------------------------------------------

double EvalResult::median_return() const {
  if (returns.empty()) return 0.0;
  std::vector<double> sorted = returns;
  std::sort(sorted.begin(), sorted.end());
  return quantile_sorted(sorted, 0.5);
}

EvalResult evaluate_greedy(const MlahAgent& agent, const GridSpec& grid, int episodes,
                           std::uint64_t seed, bool use_master,
                           const std::optional<AttackKind>& attack) {
  MlahAgent probe = agent;
  probe.reset_traces();
  Rng rng(seed, 3);
  EvalResult result;
  const ActOptions options{.greedy = true, .use_master = use_master, .forced_sub = 0};
  for (int e = 0; e < episodes; ++e) {
    Position pos = reset(grid, rng);
    probe.reset_episode_state();
    double total = 0.0;
    for (int t = 0;; ++t) {
      const Observation obs = attack ? perturb(pos, *attack, grid) : observe(pos);
      const ActDecision d = probe.act(obs, t, rng, options);
      const StepOutcome out = step(pos, d.action, grid, t);
      probe.observe_outcome(out.reward, out.done);
      total += out.reward;
      pos = out.next_position;
      if (out.done) {
        if (out.done_reason == DoneReason::kGoal) result.goals_reached += 1;
        break;
      }
    }
    result.returns.push_back(total);
    result.episodes += 1;
  }
  return result;
}

// ---- full runs ----------------------------------------------------------------------

MlahAgent make_agent(const ExperimentConfig& config, std::uint64_t seed) {
  AgentConfig agent_config = config.agent;
  if (config.training.mode == RunMode::kBaselineSinglePolicy) agent_config.num_subpolicies = 1;
  Rng init(seed, 1);
  return MlahAgent(agent_config, config.grid, init);
}

RunResult run_experiment(const ExperimentConfig& config, std::uint64_t seed, const RecordSink& sink) {
  if (auto errors = config.validate(); !errors.empty()) throw ConfigError(errors.front());
  RunResult result;
  result.seed = seed;
  MlahAgent agent = make_agent(config, seed);
  RunState state(seed);
  result.records = pretrain_nominal(config, agent, state, sink);
  result.nominal_eval = evaluate_greedy(agent, config.grid, config.training.eval_episodes,
                                        config.training.eval_seed, /*use_master=*/false);
  auto joint = train_joint(config, agent, state, sink);
  result.records.insert(result.records.end(), std::make_move_iterator(joint.begin()),
                        std::make_move_iterator(joint.end()));
  result.agent = std::move(agent);
  return result;
}

RunResult train_baseline(const ExperimentConfig& config, std::uint64_t seed, const RecordSink& sink) {
  ExperimentConfig baseline = config;
  baseline.training.mode = RunMode::kBaselineSinglePolicy;
  return run_experiment(baseline, seed, sink);
}

// ---- statistics ------------------------------------------------------------------------

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw UsageError("quantile of empty data");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

DistributionSummary summarize(std::span<const double> values) {
  if (values.empty()) throw UsageError("summarize: no values");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  DistributionSummary s;
  s.count = sorted.size();
  s.median = quantile_sorted(sorted, 0.5);
  s.q1 = quantile_sorted(sorted, 0.25);
  s.q3 = quantile_sorted(sorted, 0.75);
  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(s.count);
  if (s.count > 1) {
    double ss = 0.0;
    for (double v : sorted) ss += (v - mean) * (v - mean);
    s.variance = ss / static_cast<double>(s.count - 1);
  }
  const double iqr = s.q3 - s.q1;
  const double lo_fence = s.q1 - 1.5 * iqr;
  const double hi_fence = s.q3 + 1.5 * iqr;
  s.whisker_low = s.q1;
  s.whisker_high = s.q3;
  bool have_low = false;
  for (double v : sorted) {
    if (v < lo_fence || v > hi_fence) {
      s.outlier_count += 1;
      continue;
    }
    if (!have_low) {
      s.whisker_low = v;
      have_low = true;
    }
    s.whisker_high = v;
  }
  return s;
}

std::vector<double> final_window_returns(std::span<const RolloutRecord> records, int window) {
  std::vector<const RolloutRecord*> joint;
  for (const auto& r : records) {
    if (r.phase == Phase::kJoint) joint.push_back(&r);
  }
  const std::size_t start =
      joint.size() > static_cast<std::size_t>(window) ? joint.size() - static_cast<std::size_t>(window) : 0;
  std::vector<double> out;
  for (std::size_t i = start; i < joint.size(); ++i) {
    for (const auto& e : joint[i]->episodes) out.push_back(e.episode_return);
  }
  return out;
}

std::vector<double> wrong_selection_trace(std::span<const RolloutRecord> records) {
  std::vector<double> trace;
  for (const auto& r : records) {
    if (r.phase == Phase::kJoint) trace.push_back(r.wrong_selection_ratio);
  }
  return trace;
}

// ---- sweeps ------------------------------------------------------------------------------

namespace {

struct CellSpec {
  long interval;
  std::uint64_t seed;
};

std::vector<CellSpec> sweep_cells(const ExperimentConfig& config) {
  std::vector<CellSpec> cells;
  for (long interval : config.sweep.intervals) {
    for (std::uint64_t seed : config.sweep_seeds()) cells.push_back({interval, seed});
  }
  return cells;
}

SweepCellResult run_cell(const ExperimentConfig& base, const CellSpec& cell,
                         const CellSinkFactory& sinks) {
  SweepCellResult out;
  out.interval = cell.interval;
  out.seed = cell.seed;
  try {
    ExperimentConfig config = base;
    config.schedule.interval_steps = cell.interval;
    RecordSink sink = sinks ? sinks(cell.interval, cell.seed) : RecordSink{};
    out.records = run_experiment(config, cell.seed, sink).records;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace

SweepResult run_sweep_serial(const ExperimentConfig& config, const CellSinkFactory& sinks) {
  const auto cells = sweep_cells(config);
  SweepResult result;
  for (const auto& cell : cells) result.cells.push_back(run_cell(config, cell, sinks));
  result.summary = summarize_sweep(result.cells);
  return result;
}

SweepResult run_sweep_parallel(const ExperimentConfig& config, const CellSinkFactory& sinks) {
  const auto cells = sweep_cells(config);
  SweepResult result;
  result.cells.resize(cells.size());
  const int n = static_cast<int>(cells.size());
#ifdef _OPENMP
  const int workers = config.sweep.workers > 0 ? config.sweep.workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
#endif
  for (int i = 0; i < n; ++i) result.cells[i] = run_cell(config, cells[i], sinks);
  result.summary = summarize_sweep(result.cells);
  return result;
}

std::vector<SweepSummaryRow> summarize_sweep(std::span<const SweepCellResult> cells, int final_window) {
  std::vector<SweepSummaryRow> rows;
  for (const auto& cell : cells) {
    auto it = std::find_if(rows.begin(), rows.end(),
                           [&](const SweepSummaryRow& r) { return r.interval == cell.interval; });
    if (it == rows.end()) {
      rows.push_back({cell.interval, 0, {}});
    }
  }
  for (auto& row : rows) {
    std::vector<double> pooled;
    for (const auto& cell : cells) {
      if (cell.interval != row.interval || !cell.error.empty()) continue;
      row.n_runs += 1;
      const auto returns = final_window_returns(cell.records, final_window);
      pooled.insert(pooled.end(), returns.begin(), returns.end());
    }
    if (!pooled.empty()) row.stats = summarize(pooled);
  }
  return rows;
}

}  // namespace mlah
