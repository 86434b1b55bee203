#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "opengo/learning.hpp"
#include "opengo/memory_state.hpp"
#include "opengo/skill_library.hpp"

namespace opengo {

struct CandidateInfo {
  std::string id;
  std::string label;
  std::string prompts;
  std::vector<ParameterSpec> parameters;
};

/// Everything a planner backend sees. Serializes byte-for-byte
/// deterministically so prompts are reproducible.
struct PlannerContext {
  std::string task;
  std::string instruction;
  TerrainClass scene = TerrainClass::flat;
  RobotState state;
  std::optional<std::string> last_skill;
  std::vector<CandidateInfo> candidates;  // executable now, preference order
  std::vector<std::string> library;       // every registered head
  std::vector<ExecutionRecord> recent_history;
  std::vector<PlanStep> remaining;        // replans: steps still to cover
  std::vector<std::string> excluded;      // replans: skills that just failed
  std::vector<std::string> feedback;      // findings / errors from earlier attempts

  bool is_candidate(const std::string& id) const;
  bool in_library(const std::string& id) const;
  nlohmann::json to_json() const;
  std::string serialize() const;
};

PlannerContext build_planner_context(const std::string& task, const std::string& instruction,
                                     TerrainClass scene, const RobotState& state,
                                     const Registry& registry,
                                     const std::vector<ExecutionRecord>& history,
                                     const PreferenceLookup& preference = {},
                                     std::size_t window = kHistoryWindow);

enum class PlanOrigin { llm, rule, replan };
std::string_view to_string(PlanOrigin o);

struct DispatchPlan {
  std::string id;
  std::vector<PlanStep> steps;
  PlanOrigin origin = PlanOrigin::rule;
  Timestamp created;

  /// Plan wire format: {"plan":[{"skill":..., "params":{...}}, ...]}.
  nlohmann::json to_wire() const;
  nlohmann::json to_json() const;  // wire + id, origin, created
};

nlohmann::json steps_to_wire(const std::vector<PlanStep>& steps);

/// Planner backends return untrusted proposals in the plan wire format.
class PlannerBackend {
 public:
  virtual ~PlannerBackend() = default;
  virtual nlohmann::json propose(const PlannerContext& ctx) = 0;
  virtual PlanOrigin origin() const = 0;
  virtual std::string name() const = 0;
};

/// Deterministic lexicon planner: offline fallback and test oracle.
class RuleBackend : public PlannerBackend {
 public:
  nlohmann::json propose(const PlannerContext& ctx) override;
  PlanOrigin origin() const override { return PlanOrigin::rule; }
  std::string name() const override { return "rule"; }

  /// Lexicon parse of free text into steps with only the explicitly stated
  /// parameters. Throws NoMatch if any clause is not understood.
  static std::vector<PlanStep> parse_instruction(const std::string& text);

  /// Lexicon alternates used when a skill is excluded or not executable.
  static std::vector<std::string> alternates(const std::string& skill);
};

using DefaultLookup =
    std::function<std::optional<double>(const std::string& skill, const std::string& param)>;

/// Fills missing parameters from learned defaults, then template defaults.
/// Throws UnknownParameter / OutOfRange; never clamps.
Params bind_parameters(const SkillTemplate& skill, const Params& raw,
                       const DefaultLookup& learned = {});

struct PlanValidation {
  std::vector<PlanStep> steps;  // bound steps, valid only when findings is empty
  std::vector<Finding> findings;
  bool ok() const { return findings.empty(); }
};

inline constexpr std::size_t kMaxPlanSteps = 16;

/// Checks a raw proposal: skills registered, parameters declared, numeric,
/// finite, in range, integral where required; first step executable now;
/// no forbidden transitions. Rejects with findings, never clamps.
PlanValidation validate_plan(const nlohmann::json& raw, const Registry& registry,
                             const RobotState& state, TerrainClass scene,
                             const std::optional<std::string>& last_skill = {},
                             const DefaultLookup& learned = {},
                             std::size_t max_steps = kMaxPlanSteps);

struct DispatcherConfig {
  int max_attempts = 3;  // R
  std::chrono::milliseconds timeout{30000};
  std::size_t max_plan_steps = kMaxPlanSteps;
  std::size_t history_window = kHistoryWindow;
};

/// Validated planning with bounded retries and rule fallback.
class Dispatcher {
 public:
  Dispatcher(const Registry& registry, const PreferenceStore* prefs = nullptr,
             DispatcherConfig cfg = {});

  DispatchPlan plan(PlannerContext ctx, PlannerBackend& backend);

  /// Completion feedback returns the untouched suffix after `fb.step`;
  /// error feedback re-plans the remaining steps from `ctx` (built on the
  /// current state) with the failed skill excluded.
  DispatchPlan replan(const FeedbackSignal& fb, const DispatchPlan& current, PlannerContext ctx,
                      PlannerBackend& backend);

  /// Backend invocations made by the last plan()/replan() call.
  int last_backend_calls() const { return last_calls_; }
  bool last_used_fallback() const { return last_fallback_; }
  const std::vector<Finding>& last_findings() const { return last_findings_; }
  const DispatcherConfig& config() const { return cfg_; }

 private:
  std::string next_plan_id();
  DefaultLookup learned_lookup(TerrainClass scene) const;

  const Registry& registry_;
  const PreferenceStore* prefs_;
  DispatcherConfig cfg_;
  RuleBackend rule_;
  std::uint64_t counter_ = 0;
  int last_calls_ = 0;
  bool last_fallback_ = false;
  std::vector<Finding> last_findings_;
};

}  // namespace opengo
