#include <doctest.h>

#include <numeric>

#include "mlah/errors.hpp"
#include "mlah/harness.hpp"

using namespace mlah;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.attack = {AttackVariant::kMirrorY, 11.0};
  c.schedule = {500, 0.5, 0};
  c.training.pretrain_rollouts = 2;
  c.training.joint_rollouts = 4;
  c.training.rollout_step_cap = 400;
  c.training.seeds = {0, 1};
  c.training.eval_episodes = 5;
  return c;
}

void check_same(const std::vector<RolloutRecord>& a, const std::vector<RolloutRecord>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].rollout_index == b[i].rollout_index);
    CHECK(a[i].rollout_cumulative_reward == b[i].rollout_cumulative_reward);
    CHECK(a[i].wrong_selection_count == b[i].wrong_selection_count);
    CHECK(a[i].steps_attacked == b[i].steps_attacked);
    REQUIRE(a[i].episodes.size() == b[i].episodes.size());
    for (std::size_t e = 0; e < a[i].episodes.size(); ++e) {
      CHECK(a[i].episodes[e].episode_return == b[i].episodes[e].episode_return);
    }
  }
}

}  // namespace

TEST_CASE("summary statistics") {
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  const auto s = summarize(v);
  CHECK(s.median == 50.5);
  CHECK(s.q1 == 25.75);
  CHECK(s.q3 == 75.25);
  CHECK(s.outlier_count == 0);
  CHECK(s.whisker_low == 1.0);
  CHECK(s.whisker_high == 100.0);
  CHECK(s.variance == doctest::Approx(841.6666667));

  const std::vector<double> flat(20, 7.0);
  const auto f = summarize(flat);
  CHECK(f.q3 - f.q1 == 0.0);
  CHECK(f.variance == 0.0);
  CHECK(f.outlier_count == 0);

  std::vector<double> with_outliers(v);
  with_outliers.push_back(1000.0);
  with_outliers.push_back(-1000.0);
  CHECK(summarize(with_outliers).outlier_count == 2);
  CHECK_THROWS_AS(summarize(std::vector<double>{}), UsageError);
}

TEST_CASE("quantiles interpolate linearly") {
  const std::vector<double> s{1, 2, 3, 4};
  CHECK(quantile_sorted(s, 0.0) == 1.0);
  CHECK(quantile_sorted(s, 1.0) == 4.0);
  CHECK(quantile_sorted(s, 0.5) == 2.5);
  CHECK(quantile_sorted(s, 1.0 / 3.0) == doctest::Approx(2.0));
}

TEST_CASE("rollout step accounting") {
  const ExperimentConfig config = small_config();
  MlahAgent agent = make_agent(config, 0);
  RunState state(0);
  const auto pre = pretrain_nominal(config, agent, state);
  const auto joint = train_joint(config, agent, state);
  REQUIRE(pre.size() == 2);
  REQUIRE(joint.size() == 4);
  long expected_first = 0;
  for (const auto& r : joint) {
    CHECK(r.phase == Phase::kJoint);
    CHECK(r.steps == 400);
    CHECK(r.first_global_step == expected_first);
    expected_first += r.steps;
    double episode_sum = 0.0;
    for (const auto& e : r.episodes) episode_sum += e.episode_return;
    CHECK(r.rollout_cumulative_reward ==
          doctest::Approx(episode_sum - r.carried_in_reward + r.trailing_partial_reward));
    CHECK(r.wrong_selection_ratio == doctest::Approx(r.wrong_selection_count / 400.0));
  }
  for (const auto& r : pre) {
    CHECK(r.phase == Phase::kPretrain);
    CHECK(r.steps_attacked == 0);
  }
  // Schedule clock restarts for the joint phase: first 500 steps are nominal.
  CHECK(joint[0].steps_attacked == 0);
  CHECK(joint[1].steps_attacked == 300);
}

TEST_CASE("duty accounting over the joint phase") {
  ExperimentConfig config = small_config();
  config.training.joint_rollouts = 10;
  config.training.rollout_step_cap = 1000;
  config.schedule = {700, 0.5, 0};
  MlahAgent agent = make_agent(config, 3);
  RunState state(3);
  const auto joint = train_joint(config, agent, state);
  long attacked = 0;
  for (const auto& r : joint) attacked += r.steps_attacked;
  CHECK(std::abs(attacked - 5000) <= 700);
}

TEST_CASE("no attack: nothing is attacked and wrong selection means leaving sub-policy 0") {
  ExperimentConfig config = small_config();
  config.attack = {AttackVariant::kNone, 11.0};
  MlahAgent agent = make_agent(config, 1);
  RunState state(1);
  RolloutBuffer buffer(400);
  const auto record = collect_rollout(config, agent, state, buffer, {});
  CHECK(record.steps_attacked == 0);
  int nonzero = 0;
  for (const auto& t : buffer.sub()) nonzero += t.chosen_sub != 0 ? 1 : 0;
  CHECK(record.wrong_selection_count == nonzero);
}

TEST_CASE("decision period 1: each master transition carries one step reward") {
  const ExperimentConfig config = small_config();
  MlahAgent agent = make_agent(config, 2);
  RunState state(2);
  RolloutBuffer buffer(400);
  collect_rollout(config, agent, state, buffer, {});
  REQUIRE(buffer.master().size() == buffer.sub().size());
  for (std::size_t i = 0; i < buffer.sub().size(); ++i) {
    CHECK(buffer.master()[i].reward == buffer.sub()[i].reward);
    CHECK(buffer.master()[i].done == buffer.sub()[i].done);
    CHECK(buffer.master()[i].action == static_cast<std::size_t>(buffer.sub()[i].chosen_sub));
  }
}

TEST_CASE("longer decision windows sum their step rewards") {
  ExperimentConfig config = small_config();
  config.agent.decision_period = 5;
  MlahAgent agent = make_agent(config, 2);
  RunState state(2);
  RolloutBuffer buffer(400);
  collect_rollout(config, agent, state, buffer, {});
  double master_total = 0.0, sub_total = 0.0;
  for (const auto& t : buffer.master()) master_total += t.reward;
  for (const auto& t : buffer.sub()) sub_total += t.reward;
  CHECK(master_total == doctest::Approx(sub_total));
  CHECK(buffer.master().size() < buffer.sub().size());
}

TEST_CASE("zero pre-training rollouts leave the agent untouched") {
  ExperimentConfig config = small_config();
  config.training.pretrain_rollouts = 0;
  MlahAgent agent = make_agent(config, 0);
  const auto before = agent.to_json();
  RunState state(0);
  CHECK(pretrain_nominal(config, agent, state).empty());
  CHECK(agent.to_json() == before);
}

TEST_CASE("identical seeds give identical records, different seeds differ") {
  const ExperimentConfig config = small_config();
  const auto a = run_experiment(config, 5);
  const auto b = run_experiment(config, 5);
  check_same(a.records, b.records);
  CHECK(a.agent->to_json() == b.agent->to_json());
  const auto c = run_experiment(config, 6);
  CHECK(c.records.back().rollout_cumulative_reward != a.records.back().rollout_cumulative_reward);

  const auto base1 = train_baseline(config, 5);
  const auto base2 = train_baseline(config, 5);
  check_same(base1.records, base2.records);
  CHECK(base1.agent->num_subpolicies() == 1);
  for (const auto& r : base1.records) {
    for (const auto& e : r.episodes) CHECK(e.length >= 1);
  }
}

TEST_CASE("greedy evaluation is deterministic and does not mutate the agent") {
  const ExperimentConfig config = small_config();
  const MlahAgent agent = make_agent(config, 0);
  const auto before = agent.to_json();
  const auto a = evaluate_greedy(agent, config.grid, 10, 99, false);
  const auto b = evaluate_greedy(agent, config.grid, 10, 99, false);
  CHECK(a.returns == b.returns);
  CHECK(a.episodes == 10);
  CHECK(agent.to_json() == before);
}

TEST_CASE("sweeps: serial equals parallel, cells equal direct runs") {
  ExperimentConfig config = small_config();
  config.training.joint_rollouts = 2;
  config.sweep.intervals = {500, 2};
  config.sweep.workers = 2;
  const auto serial = run_sweep_serial(config);
  const auto parallel = run_sweep_parallel(config);
  REQUIRE(serial.cells.size() == 4);
  REQUIRE(parallel.cells.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(serial.cells[i].interval == parallel.cells[i].interval);
    CHECK(serial.cells[i].seed == parallel.cells[i].seed);
    CHECK(serial.cells[i].error.empty());
    check_same(serial.cells[i].records, parallel.cells[i].records);
  }
  REQUIRE(serial.summary.size() == 2);
  CHECK(serial.summary[0].interval == 500);
  CHECK(serial.summary[0].n_runs == 2);
  CHECK(serial.summary[0].stats.median == parallel.summary[0].stats.median);

  ExperimentConfig direct = config;
  direct.schedule.interval_steps = 2;
  const auto run = run_experiment(direct, 1);
  std::vector<RolloutRecord> joint;
  for (const auto& r : run.records) {
    if (r.phase == Phase::kJoint) joint.push_back(r);
  }
  std::vector<RolloutRecord> cell_joint;
  for (const auto& r : serial.cells[3].records) {
    if (r.phase == Phase::kJoint) cell_joint.push_back(r);
  }
  CHECK(serial.cells[3].interval == 2);
  CHECK(serial.cells[3].seed == 1);
  check_same(cell_joint, joint);
}

TEST_CASE("final window and wrong-selection trace use joint records only") {
  std::vector<RolloutRecord> records(5);
  for (int i = 0; i < 5; ++i) {
    records[i].rollout_index = i;
    records[i].phase = i < 2 ? Phase::kPretrain : Phase::kJoint;
    records[i].episodes = {EpisodeSummary{static_cast<double>(i), 10, 0, true}};
    records[i].wrong_selection_ratio = i * 0.1;
  }
  CHECK(final_window_returns(records, 2) == std::vector<double>{3.0, 4.0});
  CHECK(final_window_returns(records, 10) == std::vector<double>{2.0, 3.0, 4.0});
  CHECK(wrong_selection_trace(records).size() == 3);
}

TEST_CASE("episode attack majority") {
  CHECK(EpisodeSummary{0, 10, 6, false}.mostly_attacked());
  CHECK_FALSE(EpisodeSummary{0, 10, 5, false}.mostly_attacked());
}
