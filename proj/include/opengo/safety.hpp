#pragma once

#include <string>
#include <vector>

#include "opengo/types.hpp"

namespace opengo::safety {

enum class Reason { TILT_LIMIT, COLLISION, BATTERY_CUTOFF, CONSTRAINT_RUNTIME_VIOLATION };

std::string_view to_string(Reason r);

struct Limits {
  double tilt_limit_rad = 0.9;
  double battery_cutoff_pct = 5.0;
};

struct Verdict {
  struct Item {
    Reason code;
    std::string detail;
  };
  std::vector<Item> reasons;

  bool safe() const { return reasons.empty(); }
  bool has(Reason r) const;
};

/// Pure and total: the verdict depends only on `state` and `limits`.
Verdict assess(const RobotState& state, const Limits& limits = {});

Limits limits_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Limits& l);

}  // namespace opengo::safety
