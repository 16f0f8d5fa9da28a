#include "mlah/planning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mlah {

double action_value(const std::vector<double>& values, Position s, Action a, const GridSpec& spec,
                    double gamma) {
  const Position next = apply_move(s, a, spec);
  const double r = reward_fn(s, next, spec);
  if (next == spec.goal) return r;
  return r + gamma * values[state_index(next, spec)];
}

namespace {

inline double backup(const std::vector<double>& values, int index, const GridSpec& spec,
                     double gamma) {
  const Position s = state_position(index, spec);
  if (s == spec.goal) return 0.0;
  double best = -std::numeric_limits<double>::infinity();
  for (Action a : kAllActions) best = std::max(best, action_value(values, s, a, spec, gamma));
  return best;
}

}  // namespace

ValueFunction value_iteration_serial(const GridSpec& spec, const ValueIterationOptions& options) {
  const int n = spec.cell_count();
  ValueFunction vf;
  vf.values.assign(n, 0.0);
  std::vector<double> next(n, 0.0);
  for (vf.iterations = 0; vf.iterations < options.max_iterations;) {
    double residual = 0.0;
    for (int i = 0; i < n; ++i) {
      next[i] = backup(vf.values, i, spec, options.gamma);
      residual = std::max(residual, std::abs(next[i] - vf.values[i]));
    }
    vf.values.swap(next);
    vf.residual = residual;
    ++vf.iterations;
    if (residual <= options.tolerance) break;
  }
  return vf;
}

ValueFunction value_iteration_parallel(const GridSpec& spec, const ValueIterationOptions& options) {
  const int n = spec.cell_count();
  ValueFunction vf;
  vf.values.assign(n, 0.0);
  std::vector<double> next(n, 0.0);
  const double gamma = options.gamma;
  for (vf.iterations = 0; vf.iterations < options.max_iterations;) {
    double residual = 0.0;
    const std::vector<double>& current = vf.values;
#pragma omp parallel for schedule(static) reduction(max : residual)
    for (int i = 0; i < n; ++i) {
      next[i] = backup(current, i, spec, gamma);
      residual = std::max(residual, std::abs(next[i] - current[i]));
    }
    vf.values.swap(next);
    vf.residual = residual;
    ++vf.iterations;
    if (residual <= options.tolerance) break;
  }
  return vf;
}

std::vector<Action> optimal_actions(const std::vector<double>& values, Position s,
                                    const GridSpec& spec, double gamma, double tie_tolerance) {
  double best = -std::numeric_limits<double>::infinity();
  for (Action a : kAllActions) best = std::max(best, action_value(values, s, a, spec, gamma));
  std::vector<Action> out;
  for (Action a : kAllActions) {
    if (action_value(values, s, a, spec, gamma) >= best - tie_tolerance) out.push_back(a);
  }
  return out;
}

}  // namespace mlah
