#include "mlah/adversary.hpp"

#include <cmath>

#include "mlah/errors.hpp"

namespace mlah {

namespace {

struct VariantName {
  AttackVariant variant;
  std::string_view name;
};

constexpr VariantName kVariantNames[] = {
    {AttackVariant::kNone, "none"},          {AttackVariant::kBiasX, "bias_x"},
    {AttackVariant::kBiasY, "bias_y"},       {AttackVariant::kBiasXY, "bias_xy"},
    {AttackVariant::kMirrorX, "mirror_x"},   {AttackVariant::kMirrorY, "mirror_y"},
    {AttackVariant::kMirrorXY, "mirror_xy"}, {AttackVariant::kMirrorBias, "mirror_bias"},
};

}  // namespace

std::string_view to_string(AttackVariant v) {
  for (const auto& entry : kVariantNames) {
    if (entry.variant == v) return entry.name;
  }
  return "?";
}

AttackVariant attack_variant_from_string(std::string_view name) {
  for (const auto& entry : kVariantNames) {
    if (entry.name == name) return entry.variant;
  }
  throw ConfigError("unknown attack variant '" + std::string(name) + "'");
}

bool AttackKind::biases_x() const {
  return variant == AttackVariant::kBiasX || variant == AttackVariant::kBiasXY ||
         variant == AttackVariant::kMirrorBias;
}

bool AttackKind::biases_y() const {
  return variant == AttackVariant::kBiasY || variant == AttackVariant::kBiasXY ||
         variant == AttackVariant::kMirrorBias;
}

long AttackSchedule::period() const {
  return std::lround(static_cast<double>(interval_steps) / duty);
}

Observation perturb(Position obs, const AttackKind& kind, const GridSpec& spec) {
  Observation out = observe(obs);
  const double mirror_x = spec.width + 1 - out.x;
  const double mirror_y = spec.height + 1 - out.y;
  switch (kind.variant) {
    case AttackVariant::kNone:
    case AttackVariant::kBiasX:
    case AttackVariant::kBiasY:
    case AttackVariant::kBiasXY:
      break;
    case AttackVariant::kMirrorX:
      out.x = mirror_x;
      break;
    case AttackVariant::kMirrorY:
      out.y = mirror_y;
      break;
    case AttackVariant::kMirrorXY:
    case AttackVariant::kMirrorBias:
      out.x = mirror_x;
      out.y = mirror_y;
      break;
  }
  if (kind.biases_x()) out.x += kind.bias_amount;
  if (kind.biases_y()) out.y += kind.bias_amount;
  return out;
}

bool is_active(long global_step, const AttackSchedule& schedule) {
  const long period = schedule.period();
  const long active_from = period - schedule.interval_steps;
  long phase = (global_step + schedule.phase_offset_steps) % period;
  if (phase < 0) phase += period;
  return phase >= active_from;
}

std::vector<std::string> validate(const AttackKind& kind, const AttackSchedule& schedule,
                                  const GridSpec& spec) {
  std::vector<std::string> errors;
  if (!std::isfinite(kind.bias_amount)) errors.push_back("attack.bias_amount must be finite");
  if (kind.biases_x() && !(std::abs(kind.bias_amount) > spec.width / 2.0)) {
    errors.push_back("attack.bias_amount must exceed half the grid width (" +
                     std::to_string(spec.width / 2.0) + ")");
  }
  if (kind.biases_y() && !(std::abs(kind.bias_amount) > spec.height / 2.0)) {
    errors.push_back("attack.bias_amount must exceed half the grid height (" +
                     std::to_string(spec.height / 2.0) + ")");
  }
  if (schedule.interval_steps < 1) errors.push_back("attack.interval_steps must be >= 1");
  if (!(schedule.duty > 0.0 && schedule.duty < 1.0)) {
    errors.push_back("attack.duty must lie strictly between 0 and 1");
  } else if (schedule.interval_steps >= 1 && schedule.period() <= schedule.interval_steps) {
    errors.push_back("attack.duty leaves no inactive steps in a period");
  }
  if (schedule.phase_offset_steps < 0) errors.push_back("attack.phase_offset_steps must be >= 0");
  return errors;
}

}  // namespace mlah
