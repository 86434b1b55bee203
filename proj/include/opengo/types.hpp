#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace opengo {

/// Discrete terrain / scene label. Map files use the single letters F R U D O N.
enum class TerrainClass { flat, rough, stairs_up, stairs_down, obstacle, narrow };

enum class Posture { standing, crouched, mid_air, fallen };

std::string_view to_string(TerrainClass t);
std::string_view to_string(Posture p);
std::optional<TerrainClass> terrain_from_string(std::string_view s);
std::optional<TerrainClass> terrain_from_letter(char c);
char terrain_letter(TerrainClass t);
std::optional<Posture> posture_from_string(std::string_view s);

inline constexpr TerrainClass kAllTerrains[] = {
    TerrainClass::flat,        TerrainClass::rough,    TerrainClass::stairs_up,
    TerrainClass::stairs_down, TerrainClass::obstacle, TerrainClass::narrow};

struct RobotState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // (-pi, pi]
  Posture posture = Posture::standing;
  double roll = 0.0;
  double pitch = 0.0;
  double battery = 100.0;  // percent
  bool collision = false;
  bool estop = false;

  bool operator==(const RobotState&) const = default;
};

/// Normalizes an angle into (-pi, pi].
double normalize_angle(double a);

nlohmann::json to_json(const RobotState& s);
RobotState robot_state_from_json(const nlohmann::json& j);

using Clock = std::int64_t;  // monotonic nanoseconds

/// Monotonic nanoseconds since an arbitrary epoch.
Clock mono_now_ns();
/// Wall-clock nanoseconds since the Unix epoch.
std::int64_t wall_now_ns();
std::string iso8601(std::int64_t wall_ns);

}  // namespace opengo
