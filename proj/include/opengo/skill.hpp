#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "opengo/types.hpp"

namespace opengo {

enum class ParamKind { continuous, integer, enumeration };

struct ParameterSpec {
  std::string name;
  std::string unit;
  double lower = 0.0;
  double upper = 0.0;
  double default_value = 0.0;
  ParamKind kind = ParamKind::continuous;
  std::vector<std::string> values;  // enum kind only; bounds index into this list

  bool contains(double v) const { return v >= lower && v <= upper; }
  bool operator==(const ParameterSpec&) const = default;
};

enum class ConstraintKind {
  required_terrain,
  required_posture,
  min_battery,
  forbidden_prior_skill,
  max_speed_context,
  unknown,  // parsed but not understood; review rejects it
};

struct SpeedContext {
  std::vector<TerrainClass> scenes;
  std::string param;
  double max = 0.0;
  bool operator==(const SpeedContext&) const = default;
};

struct Constraint {
  ConstraintKind kind = ConstraintKind::unknown;
  std::string raw_kind;  // original spelling, kept for unknown kinds
  std::vector<TerrainClass> terrains;
  std::vector<Posture> postures;
  double min_battery = 0.0;
  std::string skill;
  SpeedContext speed;

  bool operator==(const Constraint&) const = default;
};

std::string_view to_string(ConstraintKind k);

struct FunctionRef {
  std::string executor;
  std::string digest;
  bool operator==(const FunctionRef&) const = default;
};

/// Import pipeline state. Transitions only move forward along
/// draft -> reviewed -> validated -> registered, or to rejected.
enum class SkillStatus { draft, reviewed, validated, registered, rejected };

std::string_view to_string(SkillStatus s);

class SkillTemplate {
 public:
  std::string id;     // head identifier
  std::string label;  // head semantic label
  std::vector<ParameterSpec> parameters;
  std::vector<Constraint> constraints;
  std::string prompts;
  int version = 0;  // 0 until registered

  const FunctionRef& function() const { return function_; }
  SkillStatus status() const { return status_; }
  const std::vector<SkillStatus>& transitions() const { return transitions_; }

  /// Moves to `next`; throws std::logic_error on any skip or backwards step.
  void advance(SkillStatus next);

  /// Changing the function of a validated (or later) template yields a new
  /// draft at version + 1; earlier states are edited in place.
  SkillTemplate with_function(FunctionRef fn) const;
  void set_function(FunctionRef fn);

  const ParameterSpec* parameter(std::string_view name) const;
  std::string qualified_id() const;  // "head@version"

  bool same_content(const SkillTemplate& other) const;

 private:
  FunctionRef function_;
  SkillStatus status_ = SkillStatus::draft;
  std::vector<SkillStatus> transitions_{SkillStatus::draft};
};

enum class Severity { info, warning, error };

/// Head id of a skill reference: "crouch@2" -> "crouch".
std::string_view skill_head(std::string_view ref);

struct Finding {
  std::string code;
  Severity severity = Severity::error;
  std::string message;
};

/// Shared shape of ReviewReport and ValidationReport.
struct Report {
  std::string subject;  // "head@version"
  std::vector<Finding> findings;
  bool pass() const;
  bool has(std::string_view code) const;
};
using ReviewReport = Report;
using ValidationReport = Report;

SkillTemplate parse_skill_document(const nlohmann::json& doc);
SkillTemplate parse_skill_document(std::string_view text);
nlohmann::json to_document(const SkillTemplate& t);

/// Registry persistence form: document plus status and version.
nlohmann::json to_registry_json(const SkillTemplate& t);
SkillTemplate from_registry_json(const nlohmann::json& j);

nlohmann::json to_json(const Report& r);

}  // namespace opengo
