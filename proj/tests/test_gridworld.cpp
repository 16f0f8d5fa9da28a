#include <doctest.h>

#include <cmath>
#include <map>

#include "mlah/errors.hpp"
#include "mlah/gridworld.hpp"

using namespace mlah;

TEST_CASE("reset on a 1x2 grid always returns the only non-goal cell") {
  GridSpec spec;
  spec.width = 1;
  spec.height = 2;
  spec.goal = {1, 1};
  Rng rng(1);
  for (int i = 0; i < 100; ++i) CHECK(reset(spec, rng) == Position{1, 2});
}

TEST_CASE("reset is uniform over the 440 non-goal cells") {
  const GridSpec spec;
  Rng rng(2024);
  std::map<Position, int> counts;
  const int n = 44000;
  for (int i = 0; i < n; ++i) {
    const Position p = reset(spec, rng);
    REQUIRE(spec.contains(p));
    REQUIRE(p != spec.goal);
    counts[p] += 1;
  }
  CHECK(counts.size() == 440);
  const double p = 1.0 / 440.0;
  const double se = std::sqrt(p * (1 - p) / n);
  int outside = 0;
  double chi2 = 0.0;
  for (const auto& [pos, c] : counts) {
    const double f = c / double(n);
    if (std::abs(f - p) > 3 * se) outside += 1;
    chi2 += (c - n * p) * (c - n * p) / (n * p);
  }
  // 3-sigma bands cover 99.73% of cells; allow a handful of excursions.
  CHECK(outside <= 5);
  // 439 degrees of freedom: mean 439, sd ~29.6.
  CHECK(chi2 < 439 + 4 * 29.6);
}

TEST_CASE("reset never returns the goal") {
  const GridSpec spec;
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) CHECK(reset(spec, rng) != spec.goal);
}

TEST_CASE("distance") {
  const GridSpec spec;
  CHECK(distance({11, 11}, spec) == 0.0);
  CHECK(distance({5, 8}, spec) == doctest::Approx(std::sqrt(45.0)));
  CHECK(distance({5, 8}, spec) == doctest::Approx(6.7082).epsilon(1e-4));
  CHECK(distance({1, 11}, spec) == distance({21, 11}, spec));
  CHECK(distance({1, 11}, spec) == 10.0);
}

TEST_CASE("reward") {
  const GridSpec spec;
  CHECK(reward_fn({11, 10}, {11, 11}, spec) == 100.0);
  CHECK(reward_fn({3, 3}, {3, 3}, spec) == -1.0);
  const double r = reward_fn({5, 8}, {6, 8}, spec);
  CHECK(r == doctest::Approx(-1.0 + 10.0 * (std::sqrt(45.0) - std::sqrt(34.0))));
  CHECK(r == doctest::Approx(7.772).epsilon(1e-3));

  GridSpec verbatim = spec;
  verbatim.verbatim_sign = true;
  CHECK(reward_fn({5, 8}, {6, 8}, verbatim) ==
        doctest::Approx(-1.0 - 10.0 * (std::sqrt(45.0) - std::sqrt(34.0))));
  CHECK(reward_fn({11, 10}, {11, 11}, verbatim) == 100.0);
}

TEST_CASE("step") {
  const GridSpec spec;
  SUBCASE("reaching the goal") {
    const auto out = step({11, 10}, Action::kUp, spec, 0);
    CHECK(out.next_position == Position{11, 11});
    CHECK(out.reward == 100.0);
    CHECK(out.done);
    CHECK(out.done_reason == DoneReason::kGoal);
  }
  SUBCASE("wall clamp") {
    const auto out = step({1, 1}, Action::kLeft, spec, 0);
    CHECK(out.next_position == Position{1, 1});
    CHECK(out.reward == -1.0);
    CHECK_FALSE(out.done);
  }
  SUBCASE("axis conventions") {
    CHECK(apply_move({5, 5}, Action::kUp, spec) == Position{5, 6});
    CHECK(apply_move({5, 5}, Action::kDown, spec) == Position{5, 4});
    CHECK(apply_move({5, 5}, Action::kLeft, spec) == Position{4, 5});
    CHECK(apply_move({5, 5}, Action::kRight, spec) == Position{6, 5});
    CHECK(apply_move({5, 5}, Action::kNoOp, spec) == Position{5, 5});
    CHECK(apply_move({21, 21}, Action::kUp, spec) == Position{21, 21});
    CHECK(apply_move({21, 21}, Action::kRight, spec) == Position{21, 21});
  }
  SUBCASE("step limit after 100 no-ops") {
    Position p{5, 8};
    double total = 0.0;
    StepOutcome out;
    int t = 0;
    for (; t < spec.max_episode_steps; ++t) {
      out = step(p, Action::kNoOp, spec, t);
      total += out.reward;
      p = out.next_position;
      if (out.done) break;
    }
    CHECK(t == 99);
    CHECK(out.done_reason == DoneReason::kStepLimit);
    CHECK(total == -100.0);
    CHECK_THROWS_AS(step(p, Action::kNoOp, spec, 100), UsageError);
  }
  SUBCASE("misuse") {
    CHECK_THROWS_AS(step({11, 11}, Action::kUp, spec, 0), UsageError);
    CHECK_THROWS_AS(step({0, 3}, Action::kUp, spec, 0), UsageError);
  }
}

TEST_CASE("random trajectories telescope") {
  const GridSpec spec;
  Rng rng(77);
  for (int k = 0; k < 300; ++k) {
    Position p = reset(spec, rng);
    const double d0 = distance(p, spec);
    double total = 0.0;
    int t = 0;
    StepOutcome out;
    do {
      out = step(p, action_from_index(rng.uniform_index(kNumActions)), spec, t++);
      total += out.reward;
      p = out.next_position;
    } while (!out.done);
    if (out.done_reason == DoneReason::kGoal) {
      // The final step pays the goal reward in place of its shaping term; it
      // always starts one cell from the goal.
      CHECK(total == doctest::Approx(-(t - 1) + 10.0 * (d0 - 1.0) + 100.0).epsilon(1e-12));
    } else {
      CHECK(total == doctest::Approx(-t + 10.0 * (d0 - distance(p, spec))).epsilon(1e-12));
    }
  }
}

TEST_CASE("spec validation lists problems") {
  GridSpec spec;
  spec.width = 0;
  spec.goal = {30, 11};
  spec.max_episode_steps = 0;
  CHECK(spec.validate().size() >= 2);
  CHECK(GridSpec{}.validate().empty());
}
