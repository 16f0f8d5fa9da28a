#pragma once

// Exact planning on the (deterministic, fully known) grid world. Used as a
// brute-force reference for what the optimal action is at each cell.
//
// Two kernels compute the same synchronous (Jacobi) Bellman iteration: a plain
// serial loop and an OpenMP loop over states. Each sweep reads only the
// previous value vector, so both produce bit-identical results.

#include <vector>

#include "mlah/gridworld.hpp"

namespace mlah {

struct ValueIterationOptions {
  double gamma = 0.99;
  double tolerance = 1e-12;
  int max_iterations = 10000;
};

struct ValueFunction {
  std::vector<double> values;  // indexed by state_index()
  int iterations = 0;
  double residual = 0.0;
};

inline int state_index(Position p, const GridSpec& spec) { return (p.y - 1) * spec.width + (p.x - 1); }
inline Position state_position(int index, const GridSpec& spec) {
  return {index % spec.width + 1, index / spec.width + 1};
}

/// Q(s, a) under the goal-terminal MDP (no step limit).
double action_value(const std::vector<double>& values, Position s, Action a, const GridSpec& spec,
                    double gamma);

ValueFunction value_iteration_serial(const GridSpec& spec, const ValueIterationOptions& options = {});
ValueFunction value_iteration_parallel(const GridSpec& spec, const ValueIterationOptions& options = {});

/// All actions within tie_tolerance of the best Q-value at s.
std::vector<Action> optimal_actions(const std::vector<double>& values, Position s,
                                    const GridSpec& spec, double gamma, double tie_tolerance = 1e-9);

}  // namespace mlah
