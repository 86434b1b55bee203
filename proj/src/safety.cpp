#include "opengo/safety.hpp"

#include <cmath>
#include <cstdio>

namespace opengo::safety {

std::string_view to_string(Reason r) {
  switch (r) {
    case Reason::TILT_LIMIT: return "TILT_LIMIT";
    case Reason::COLLISION: return "COLLISION";
    case Reason::BATTERY_CUTOFF: return "BATTERY_CUTOFF";
    case Reason::CONSTRAINT_RUNTIME_VIOLATION: return "CONSTRAINT_RUNTIME_VIOLATION";
  }
  return "TILT_LIMIT";
}

bool Verdict::has(Reason r) const {
  for (const auto& item : reasons)
    if (item.code == r) return true;
  return false;
}

Verdict assess(const RobotState& s, const Limits& limits) {
  Verdict v;
  char buf[96];
  // NaN attitude counts as a tilt violation: the comparison below is false for NaN.
  if (!(std::abs(s.roll) <= limits.tilt_limit_rad) || !(std::abs(s.pitch) <= limits.tilt_limit_rad)) {
    std::snprintf(buf, sizeof buf, "roll=%.3f pitch=%.3f limit=%.3f", s.roll, s.pitch,
                  limits.tilt_limit_rad);
    v.reasons.push_back({Reason::TILT_LIMIT, buf});
  }
  if (s.collision) v.reasons.push_back({Reason::COLLISION, "collision flag set"});
  if (!(s.battery >= limits.battery_cutoff_pct)) {
    std::snprintf(buf, sizeof buf, "battery=%.2f%% cutoff=%.2f%%", s.battery,
                  limits.battery_cutoff_pct);
    v.reasons.push_back({Reason::BATTERY_CUTOFF, buf});
  }
  if (s.posture == Posture::fallen)
    v.reasons.push_back({Reason::CONSTRAINT_RUNTIME_VIOLATION, "posture=fallen"});
  return v;
}

Limits limits_from_json(const nlohmann::json& j) {
  Limits l;
  l.tilt_limit_rad = j.value("tilt_limit_rad", l.tilt_limit_rad);
  l.battery_cutoff_pct = j.value("battery_cutoff_pct", l.battery_cutoff_pct);
  return l;
}

nlohmann::json to_json(const Limits& l) {
  return {{"tilt_limit_rad", l.tilt_limit_rad}, {"battery_cutoff_pct", l.battery_cutoff_pct}};
}

}  // namespace opengo::safety
