#include <doctest.h>

#include <cmath>
#include <numeric>

#include "mlah/agent.hpp"
#include "mlah/errors.hpp"

using namespace mlah;

namespace {

Transition step_transition(double reward, double value, bool done) {
  Transition t;
  t.reward = reward;
  t.value_estimate = value;
  t.done = done;
  return t;
}

double within_sigmas(double observed_freq, double p, int n) {
  return std::abs(observed_freq - p) / std::sqrt(p * (1 - p) / n);
}

}  // namespace

TEST_CASE("fresh agent at the centre chooses uniformly") {
  const GridSpec grid;
  Rng init(1, 1);
  MlahAgent agent(AgentConfig{}, grid, init);
  Rng rng(3);
  const int n = 10000;
  std::vector<int> subs(2, 0), actions(kNumActions, 0);
  for (int i = 0; i < n; ++i) {
    agent.reset_episode_state();
    const auto d = agent.act(observe(grid.goal), 0, rng);
    subs[d.chosen_sub] += 1;
    actions[index_of(d.action)] += 1;
    CHECK(d.new_master_decision);
  }
  for (int c : subs) CHECK(within_sigmas(c / double(n), 0.5, n) < 3.0);
  for (int c : actions) CHECK(within_sigmas(c / double(n), 0.2, n) < 3.0);
}

TEST_CASE("fresh agent elsewhere samples from its own near-uniform heads") {
  const GridSpec grid;
  Rng init(2, 1);
  MlahAgent agent(AgentConfig{}, grid, init);
  const Observation obs{4, 17};
  const auto probs = softmax(agent.subpolicies()[0].actor.forward(agent.normalize(obs)));
  for (double p : probs) CHECK(std::abs(p - 0.2) < 0.1);
  Rng rng(4);
  const int n = 10000;
  std::vector<int> actions(kNumActions, 0);
  for (int i = 0; i < n; ++i) {
    actions[index_of(agent.act(obs, 1, rng, {.use_master = false, .forced_sub = 0}).action)] += 1;
  }
  for (int a = 0; a < kNumActions; ++a) CHECK(within_sigmas(actions[a] / double(n), probs[a], n) < 3.0);
}

TEST_CASE("forced master logits pick sub-policy 0") {
  const GridSpec grid;
  Rng init(1, 1);
  MlahAgent agent(AgentConfig{}, grid, init);
  auto& last = agent.master().actor.layers().back();
  std::fill(last.weights.begin(), last.weights.end(), 0.0);
  last.bias = {10.0, -10.0};
  CHECK(softmax(agent.master().actor.forward(agent.master_observation({3, 3})))[0] > 0.9999);
  Rng rng(5);
  int zeros = 0;
  for (int i = 0; i < 10000; ++i) {
    agent.reset_episode_state();
    zeros += agent.act({3, 3}, 0, rng).chosen_sub == 0 ? 1 : 0;
  }
  CHECK(zeros >= 9995);
}

TEST_CASE("decision period holds the choice within each window") {
  const GridSpec grid;
  AgentConfig config;
  config.decision_period = 10;
  Rng init(6, 1);
  MlahAgent agent(config, grid, init);
  Rng rng(7);
  int decisions = 0;
  for (int window = 0; window < 20; ++window) {
    int first = -1;
    for (int k = 0; k < 10; ++k) {
      const int step = window * 10 + k;
      const auto d = agent.act({static_cast<double>(1 + step % 21), 5.0}, step, rng);
      if (k == 0) {
        CHECK(d.new_master_decision);
        first = d.chosen_sub;
        decisions += 1;
      } else {
        CHECK_FALSE(d.new_master_decision);
        CHECK(d.chosen_sub == first);
      }
      agent.observe_outcome(-1.0, false);
    }
  }
  CHECK(decisions == 20);
}

TEST_CASE("episode end clears the held choice") {
  const GridSpec grid;
  AgentConfig config;
  config.decision_period = 10;
  Rng init(6, 1);
  MlahAgent agent(config, grid, init);
  Rng rng(7);
  agent.act({3, 3}, 0, rng);
  agent.observe_outcome(100.0, true);
  CHECK(agent.act({5, 5}, 3, rng).new_master_decision);
}

TEST_CASE("baseline mode bypasses the master") {
  const GridSpec grid;
  AgentConfig config;
  config.num_subpolicies = 1;
  Rng init(1, 1);
  MlahAgent agent(config, grid, init);
  Rng rng(1);
  const auto d = agent.act({2, 2}, 0, rng, {.use_master = true});
  CHECK(d.chosen_sub == 0);
  CHECK_FALSE(d.master.has_value());
  CHECK_THROWS_AS(agent.act({2, 2}, 0, rng, {.use_master = false, .forced_sub = 1}), UsageError);
}

TEST_CASE("advantages: one-step case with gamma 0") {
  const std::vector<Transition> ts{step_transition(3.0, 1.0, false), step_transition(-2.0, 0.5, false),
                                   step_transition(7.0, -4.0, true)};
  for (double lambda : {0.0, 0.5, 1.0}) {
    const auto est = compute_advantages(ts, 0.0, lambda, 123.0);
    CHECK(est.raw_advantages[0] == 2.0);
    CHECK(est.raw_advantages[1] == -2.5);
    CHECK(est.raw_advantages[2] == 11.0);
  }
}

TEST_CASE("advantages: discounted returns of a three-step episode") {
  const std::vector<Transition> ts{step_transition(-1, 0, false), step_transition(-1, 0, false),
                                   step_transition(100, 0, true)};
  const auto est = compute_advantages(ts, 0.99, 1.0, 0.0);
  // Hand-rolled discounted sums.
  const double g2 = 100.0;
  const double g1 = -1.0 + 0.99 * g2;
  const double g0 = -1.0 + 0.99 * g1;
  CHECK(est.returns[0] == doctest::Approx(g0));
  CHECK(est.returns[1] == doctest::Approx(g1));
  CHECK(est.returns[2] == doctest::Approx(g2));
  CHECK(est.returns[0] == doctest::Approx(96.02));
  CHECK(est.returns[1] == doctest::Approx(98.0));
}

TEST_CASE("advantages: a perfect critic gives zero advantage") {
  const double gamma = 0.9;
  std::vector<Transition> ts;
  std::vector<double> truth(6);
  double g = 0.0;
  for (int i = 5; i >= 0; --i) truth[i] = g = 2.0 + gamma * g;
  for (int i = 0; i < 6; ++i) ts.push_back(step_transition(2.0, truth[i], i == 5));
  for (double lambda : {0.0, 0.7, 1.0}) {
    const auto est = compute_advantages(ts, gamma, lambda, 999.0);
    for (double a : est.raw_advantages) CHECK(a == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("advantages: bootstrap only when the last step is not terminal") {
  const std::vector<Transition> open{step_transition(1.0, 0.0, false)};
  CHECK(compute_advantages(open, 0.5, 1.0, 10.0).returns[0] == 6.0);
  const std::vector<Transition> closed{step_transition(1.0, 0.0, true)};
  CHECK(compute_advantages(closed, 0.5, 1.0, 10.0).returns[0] == 1.0);
}

TEST_CASE("advantages: normalization and subsets") {
  Rng rng(12);
  std::vector<Transition> ts;
  for (int i = 0; i < 50; ++i) ts.push_back(step_transition(rng.uniform(-5, 5), rng.uniform(-1, 1), i % 7 == 6));
  const auto est = compute_advantages(ts, 0.99, 0.95, 0.3);
  const double mean = std::accumulate(est.advantages.begin(), est.advantages.end(), 0.0) / 50.0;
  double var = 0.0;
  for (double a : est.advantages) var += (a - mean) * (a - mean);
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(var / 50.0 == doctest::Approx(1.0).epsilon(1e-6));

  std::vector<double> values(50);
  for (int i = 0; i < 50; ++i) values[i] = ts[i].value_estimate;
  const std::vector<std::size_t> subset{1, 4, 9, 16, 25};
  const auto part = compute_advantages(ts, values, 0.99, 0.95, 0.3, subset);
  double m = 0.0;
  for (auto i : subset) m += part.advantages[i];
  CHECK(m == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(part.advantages[0] == 0.0);
  CHECK(part.raw_advantages == est.raw_advantages);
}

TEST_CASE("sub-policy advantages use that sub-policy's critic") {
  RolloutBuffer buffer(10);
  for (int i = 0; i < 4; ++i) {
    Transition t = step_transition(1.0, 0.0, false);
    t.chosen_sub = i % 2;
    t.sub_values = {10.0, 0.0};
    buffer.push_sub(t);
  }
  buffer.sub_bootstrap = {10.0, 0.0};
  const std::vector<std::size_t> own{0, 2};
  const auto est0 = subpolicy_advantages(buffer, 0, 0.0, 0.0, own);
  const auto est1 = subpolicy_advantages(buffer, 1, 0.0, 0.0, own);
  CHECK(est0.raw_advantages[0] == -9.0);
  CHECK(est1.raw_advantages[0] == 1.0);
}

TEST_CASE("buffer capacity and master accumulation") {
  RolloutBuffer buffer(2);
  buffer.accumulate_master(5.0, false);  // no open window: ignored
  buffer.push_sub({});
  buffer.push_sub({});
  CHECK(buffer.full());
  CHECK_THROWS_AS(buffer.push_sub({}), UsageError);
  Transition m;
  m.level = Level::kMaster;
  buffer.push_master(m);
  buffer.accumulate_master(-1.0, false);
  buffer.accumulate_master(-2.0, true);
  CHECK(buffer.master()[0].reward == -3.0);
  CHECK(buffer.master()[0].done);
  buffer.clear();
  CHECK(buffer.empty());
  CHECK(buffer.master().empty());
}

namespace {

struct TinyPolicy {
  Mlp actor;
  Mlp critic;
  AdamState actor_opt;
  AdamState critic_opt;

  explicit TinyPolicy(std::uint64_t seed) {
    Rng rng(seed);
    actor = Mlp::glorot({2, 8, 8, 5}, OutputHead::kCategoricalLogits, rng);
    critic = Mlp::glorot({2, 8, 8, 1}, OutputHead::kScalarValue, rng);
    actor_opt = AdamState::for_network(actor);
    critic_opt = AdamState::for_network(critic);
  }
};

Transition sample_at(const Mlp& actor, std::vector<double> obs, std::size_t action) {
  Transition t;
  t.observation = std::move(obs);
  t.action = action;
  t.log_prob = log_softmax(actor.forward(t.observation))[action];
  return t;
}

}  // namespace

TEST_CASE("zero advantage and zero entropy coefficient leave the actor unchanged") {
  TinyPolicy p(1);
  PpoConfig config;
  config.entropy_coef = 0.0;
  std::vector<Transition> ts;
  for (std::size_t a = 0; a < 5; ++a) ts.push_back(sample_at(p.actor, {0.3, -0.2}, a));
  const std::vector<std::size_t> idx{0, 1, 2, 3, 4};
  const std::vector<double> adv(5, 0.0), ret(5, 1.0);
  const Mlp before = p.actor;
  Rng rng(2);
  ppo_update(p.actor, p.actor_opt, p.critic, p.critic_opt, {ts, idx, adv, ret}, config, 1.0, rng);
  CHECK(p.actor == before);
}

TEST_CASE("critic regresses a fixed target") {
  TinyPolicy p(3);
  PpoConfig config;
  config.epochs = 1;
  std::vector<Transition> ts{sample_at(p.actor, {0.5, 0.5}, 0)};
  const std::vector<std::size_t> idx{0};
  const std::vector<double> adv{0.0}, ret{0.8};
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    ppo_update(p.actor, p.actor_opt, p.critic, p.critic_opt, {ts, idx, adv, ret}, config, 1.0, rng);
  }
  CHECK(std::abs(p.critic.forward(ts[0].observation)[0] - 0.8) < 1e-2);
}

TEST_CASE("positive advantage raises the chosen action's probability") {
  for (std::size_t action = 0; action < 5; ++action) {
    TinyPolicy p(10 + action);
    const std::vector<double> obs{-0.4, 0.9};
    const double before = softmax(p.actor.forward(obs))[action];
    std::vector<Transition> ts{sample_at(p.actor, obs, action)};
    const std::vector<std::size_t> idx{0};
    const std::vector<double> adv{1.0}, ret{0.0};
    Rng rng(1);
    PpoConfig config;
    config.epochs = 1;
    ppo_update(p.actor, p.actor_opt, p.critic, p.critic_opt, {ts, idx, adv, ret}, config, 1.0, rng);
    CHECK(softmax(p.actor.forward(obs))[action] > before);

    TinyPolicy q(10 + action);
    const std::vector<double> neg{-1.0};
    ppo_update(q.actor, q.actor_opt, q.critic, q.critic_opt, {ts, idx, neg, ret}, config, 1.0, rng);
    CHECK(softmax(q.actor.forward(obs))[action] < before);
  }
}

TEST_CASE("master update: sign check and symmetry") {
  const GridSpec grid;
  Rng init(1, 1);
  MlahAgent agent(AgentConfig{}, grid, init);
  const auto input = agent.master_observation({6, 14});
  MasterPolicy& master = agent.master();
  const double before = softmax(master.actor.forward(input))[1];
  Transition t;
  t.level = Level::kMaster;
  t.observation = input;
  t.action = 1;
  t.log_prob = std::log(before);
  std::vector<Transition> ts{t};
  const std::vector<std::size_t> idx{0};
  const std::vector<double> adv{1.0}, ret{0.0};
  Rng rng(2);
  update_master(master, {ts, idx, adv, ret}, agent.config(), rng);
  CHECK(softmax(master.actor.forward(input))[1] > before);

  Mlp symmetric({4, 16, 16, 2}, OutputHead::kCategoricalLogits);
  Mlp critic({4, 16, 16, 1}, OutputHead::kScalarValue);
  auto so = AdamState::for_network(symmetric), co = AdamState::for_network(critic);
  std::vector<Transition> pair;
  for (std::size_t a = 0; a < 2; ++a) {
    Transition m;
    m.observation = {0.2, 0.1, 0.3, 0.3};
    m.action = a;
    m.log_prob = std::log(0.5);
    pair.push_back(m);
  }
  const std::vector<std::size_t> both{0, 1};
  const std::vector<double> same{1.0, 1.0}, r2{0.0, 0.0};
  ppo_update(symmetric, so, critic, co, {pair, both, same, r2}, PpoConfig{}, 1.0, rng);
  const auto p = softmax(symmetric.forward(pair[0].observation));
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("advantage traces follow the acting sub-policy's TD error") {
  const GridSpec grid;
  AgentConfig config;
  Rng init(1, 1);
  MlahAgent agent(config, grid, init);
  Rng rng(2);
  const auto d = agent.act({4, 4}, 0, rng);
  agent.observe_outcome(-1.0, false);
  const auto d2 = agent.act({4, 5}, 1, rng);
  const int k = d.chosen_sub;
  const double delta = -1.0 + config.ppo.gamma * d2.sub_values[k] - d.sub_values[k];
  CHECK(agent.advantage_traces()[k] == doctest::Approx(config.advantage_trace_rate * delta));
  CHECK(agent.advantage_traces()[1 - k] == 0.0);
  agent.reset_traces();
  CHECK(agent.advantage_traces()[k] == 0.0);
}

TEST_CASE("agent json round trip") {
  const GridSpec grid;
  Rng init(9, 1);
  const MlahAgent agent(AgentConfig{}, grid, init);
  const MlahAgent back = MlahAgent::from_json(agent.to_json(), grid);
  CHECK(back.to_json() == agent.to_json());
  CHECK(back.subpolicies()[1].actor == agent.subpolicies()[1].actor);
}

TEST_CASE("agent config validation and json") {
  AgentConfig c;
  CHECK(c.validate().empty());
  c.num_subpolicies = 0;
  c.decision_period = 0;
  CHECK(c.validate().size() >= 2);
  const AgentConfig d = agent_config_from_json({{"learning_rate", 1e-3}, {"conditioning", "values"}});
  CHECK(d.master_learning_rate == 1e-3);
  CHECK(d.sub_learning_rate == 1e-3);
  CHECK(d.conditioning == MasterConditioning::kValues);
  CHECK(to_json(agent_config_from_json(to_json(AgentConfig{}))) == to_json(AgentConfig{}));
}
