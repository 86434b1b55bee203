#include "opengo/types.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <numbers>

#include "opengo/error.hpp"

namespace opengo {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::SchemaError: return "SchemaError";
    case Errc::DuplicateParameter: return "DuplicateParameter";
    case Errc::NotValidated: return "NotValidated";
    case Errc::VersionConflict: return "VersionConflict";
    case Errc::NotFound: return "NotFound";
    case Errc::SimulatorUnavailable: return "SimulatorUnavailable";
    case Errc::NoFeasiblePlan: return "NoFeasiblePlan";
    case Errc::NoMatch: return "NoMatch";
    case Errc::UnknownParameter: return "UnknownParameter";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::EndpointUnavailable: return "EndpointUnavailable";
    case Errc::MalformedReply: return "MalformedReply";
    case Errc::TimestampOrder: return "TimestampOrder";
    case Errc::UnknownPlan: return "UnknownPlan";
    case Errc::EstopLatched: return "EstopLatched";
    case Errc::OutOfMap: return "OutOfMap";
    case Errc::BadConfig: return "BadConfig";
    case Errc::RuntimeDown: return "RuntimeDown";
    case Errc::BadK: return "BadK";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::SessionBusy: return "SessionBusy";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

std::string_view to_string(TerrainClass t) {
  switch (t) {
    case TerrainClass::flat: return "flat";
    case TerrainClass::rough: return "rough";
    case TerrainClass::stairs_up: return "stairs_up";
    case TerrainClass::stairs_down: return "stairs_down";
    case TerrainClass::obstacle: return "obstacle";
    case TerrainClass::narrow: return "narrow";
  }
  return "flat";
}

std::string_view to_string(Posture p) {
  switch (p) {
    case Posture::standing: return "standing";
    case Posture::crouched: return "crouched";
    case Posture::mid_air: return "mid_air";
    case Posture::fallen: return "fallen";
  }
  return "standing";
}

std::optional<TerrainClass> terrain_from_string(std::string_view s) {
  for (auto t : kAllTerrains)
    if (to_string(t) == s) return t;
  return std::nullopt;
}

std::optional<TerrainClass> terrain_from_letter(char c) {
  switch (c) {
    case 'F': return TerrainClass::flat;
    case 'R': return TerrainClass::rough;
    case 'U': return TerrainClass::stairs_up;
    case 'D': return TerrainClass::stairs_down;
    case 'O': return TerrainClass::obstacle;
    case 'N': return TerrainClass::narrow;
    default: return std::nullopt;
  }
}

char terrain_letter(TerrainClass t) {
  switch (t) {
    case TerrainClass::flat: return 'F';
    case TerrainClass::rough: return 'R';
    case TerrainClass::stairs_up: return 'U';
    case TerrainClass::stairs_down: return 'D';
    case TerrainClass::obstacle: return 'O';
    case TerrainClass::narrow: return 'N';
  }
  return 'F';
}

std::optional<Posture> posture_from_string(std::string_view s) {
  for (auto p : {Posture::standing, Posture::crouched, Posture::mid_air, Posture::fallen})
    if (to_string(p) == s) return p;
  return std::nullopt;
}

double normalize_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(a, two_pi);
  if (r <= -std::numbers::pi) r += two_pi;
  if (r > std::numbers::pi) r -= two_pi;
  return r;
}

nlohmann::json to_json(const RobotState& s) {
  return {{"x", s.x},
          {"y", s.y},
          {"heading", s.heading},
          {"posture", std::string(to_string(s.posture))},
          {"roll", s.roll},
          {"pitch", s.pitch},
          {"battery", s.battery},
          {"collision", s.collision},
          {"estop", s.estop}};
}

RobotState robot_state_from_json(const nlohmann::json& j) {
  RobotState s;
  s.x = j.value("x", 0.0);
  s.y = j.value("y", 0.0);
  s.heading = normalize_angle(j.value("heading", 0.0));
  if (auto p = posture_from_string(j.value("posture", std::string("standing")))) s.posture = *p;
  s.roll = j.value("roll", 0.0);
  s.pitch = j.value("pitch", 0.0);
  s.battery = j.value("battery", 100.0);
  s.collision = j.value("collision", false);
  s.estop = j.value("estop", false);
  return s;
}

Clock mono_now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::int64_t wall_now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string iso8601(std::int64_t wall_ns) {
  std::time_t secs = static_cast<std::time_t>(wall_ns / 1'000'000'000);
  long frac_us = static_cast<long>((wall_ns % 1'000'000'000) / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[64];
  std::snprintf(out, sizeof out, "%s.%06ldZ", buf, frac_us);
  return out;
}

}  // namespace opengo
