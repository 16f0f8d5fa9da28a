#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mlah/gridworld.hpp"

namespace mlah {

enum class AttackVariant {
  kNone,
  kBiasX,
  kBiasY,
  kBiasXY,
  kMirrorX,
  kMirrorY,
  kMirrorXY,
  kMirrorBias,  // mirror about both axes, then bias both coordinates
};

std::string_view to_string(AttackVariant v);
AttackVariant attack_variant_from_string(std::string_view name);

struct AttackKind {
  AttackVariant variant = AttackVariant::kNone;
  double bias_amount = 11.0;

  bool biases_x() const;
  bool biases_y() const;
};

/// What the agent perceives. May lie outside the grid under bias attacks.
struct Observation {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Observation&, const Observation&) = default;
};

inline Observation observe(Position p) { return {static_cast<double>(p.x), static_cast<double>(p.y)}; }

/// Square-wave activation: each period of interval/duty steps is inactive
/// first and active for its last `interval_steps` steps.
struct AttackSchedule {
  long interval_steps = 10000;
  double duty = 0.5;
  long phase_offset_steps = 0;

  long period() const;
};

Observation perturb(Position obs, const AttackKind& kind, const GridSpec& spec);

bool is_active(long global_step, const AttackSchedule& schedule);

/// 0 = nominal, 1 = adversarial. Evaluation-only label.
inline int latent_state(long global_step, const AttackSchedule& schedule) {
  return is_active(global_step, schedule) ? 1 : 0;
}

std::vector<std::string> validate(const AttackKind& kind, const AttackSchedule& schedule,
                                  const GridSpec& spec);

}  // namespace mlah
