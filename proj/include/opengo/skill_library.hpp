#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "opengo/simulator.hpp"
#include "opengo/skill.hpp"

namespace opengo {

/// Snapshot a constraint is decided against.
struct ConstraintContext {
  const RobotState& state;
  TerrainClass scene;
  std::optional<std::string> last_skill;
};

/// O(1) check of one constraint. max_speed_context is satisfied when the
/// constrained parameter's lower bound is feasible in the current scene.
bool constraint_satisfied(const Constraint& c, const SkillTemplate& skill,
                          const ConstraintContext& ctx);

std::vector<Constraint> violated_constraints(const SkillTemplate& skill,
                                             const ConstraintContext& ctx);

/// Terrains a skill may run on (empty: unconstrained).
std::vector<TerrainClass> required_terrains(const SkillTemplate& skill);

/// Static checks: executor resolves, digest matches, consumed parameters are
/// declared, bounds finite and ordered, constraint kinds known. Moves a
/// passing draft to reviewed.
ReviewReport review_skill(SkillTemplate& t);

/// Runs the skill at its defaults and at every bound corner (d <= 4) or at
/// 16 seeded in-bounds samples (d > 4). Moves a passing reviewed template to
/// validated. Throws SimulatorUnavailable when the config has no map.
ValidationReport validate_in_simulation(SkillTemplate& t, const SimConfig& cfg);

/// Parameter vectors the validator runs, defaults first, duplicates removed.
std::vector<Params> validation_points(const SkillTemplate& t, std::uint64_t seed);

using PreferenceLookup = std::function<double(TerrainClass, const std::string&)>;

/// Versioned store of registered skills. Single writer, many readers.
class Registry {
 public:
  /// Persists a validated template and returns its "head@version" id.
  std::string register_skill(SkillTemplate t);

  /// Accepts "head" (latest version) or "head@version".
  std::shared_ptr<const SkillTemplate> lookup(const std::string& id) const;
  std::shared_ptr<const SkillTemplate> find(const std::string& id) const;  // nullptr if absent

  /// Latest version of every head, ordered by head id.
  std::vector<std::shared_ptr<const SkillTemplate>> latest() const;
  std::vector<std::shared_ptr<const SkillTemplate>> versions(const std::string& head) const;
  bool empty() const;
  std::size_t size() const;

  nlohmann::json to_json() const;
  static Registry from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& p) const;
  static Registry load(const std::filesystem::path& p);

  Registry() = default;
  Registry(const Registry& other);
  Registry& operator=(const Registry& other);

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, std::vector<std::shared_ptr<const SkillTemplate>>> by_head_;
};

/// Registered skills whose every constraint holds, by descending preference
/// then ascending head id.
std::vector<std::string> filter_candidates(TerrainClass scene, const RobotState& state,
                                           const Registry& registry,
                                           const PreferenceLookup& preference = {},
                                           const std::optional<std::string>& last_skill = {});

/// Outcome of the full import pipeline for one document.
struct ImportResult {
  SkillTemplate skill;
  std::optional<ReviewReport> review;
  std::optional<ValidationReport> validation;
  std::optional<std::string> registered_id;
  std::string error;  // parse error, if parsing failed
  bool admitted() const { return registered_id.has_value(); }
};

/// Validation config for a skill: a uniform map of its first required
/// terrain with the robot standing at full battery.
SimConfig validation_config_for(const SkillTemplate& t);

/// parse -> review -> validate -> register. `cfg` overrides the per-skill
/// validation config when given.
ImportResult import_skill(const nlohmann::json& doc, Registry& registry,
                          const std::optional<SimConfig>& cfg = {});

/// Imports every *.json document in `dir` (sorted by file name).
std::vector<ImportResult> import_directory(const std::filesystem::path& dir, Registry& registry);

}  // namespace opengo
