#pragma once

#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "opengo/simulator.hpp"
#include "opengo/skill.hpp"

namespace opengo {

struct PlanStep {
  std::string skill;
  Params params;
  bool operator==(const PlanStep&) const = default;
};

struct Timestamp {
  Clock mono_ns = 0;
  std::int64_t wall_ns = 0;
  static Timestamp now();
  bool operator==(const Timestamp&) const = default;
};

enum class OutcomeKind { completed, error, preempted };

struct ExecutionRecord {
  std::string plan_id;
  int step = 0;  // 1-based
  std::string skill;
  Params params;
  Timestamp t_instruction, t_dispatch_done, t_execution_start, t_execution_end;
  OutcomeKind outcome = OutcomeKind::completed;
  std::string error_code;
  TerrainClass scene = TerrainClass::flat;  // scene at execution start
  RobotState state_before, state_after;

  bool timestamps_ordered() const;
  bool operator==(const ExecutionRecord&) const = default;
};

nlohmann::json to_json(const ExecutionRecord& r);
ExecutionRecord record_from_json(const nlohmann::json& j);

struct CheckResult {
  std::vector<Constraint> violated;
  bool ok() const { return violated.empty(); }
  bool violates(ConstraintKind k) const;
};

/// Evaluates all of `skill`'s constraints, with forbidden_prior_skill checked
/// against `last` (the most recent record).
CheckResult precheck(const SkillTemplate& skill, const RobotState& state, TerrainClass scene,
                     const ExecutionRecord* last);

struct PlanStatus {
  enum class Kind { pending, in_progress, completed, failed, aborted };
  Kind kind = Kind::pending;
  int failed_step = 0;
  bool operator==(const PlanStatus&) const = default;
};

std::string to_string(const PlanStatus& s);

/// Pure fold over the record sequence for one plan.
PlanStatus fold_status(std::span<const ExecutionRecord> records, const std::string& plan_id,
                       int step_count);

inline constexpr std::size_t kHistoryWindow = 32;

/// Execution history: a bounded ring for planner context plus an
/// append-only log. One writer; readers take snapshots.
class MemoryState {
 public:
  explicit MemoryState(std::size_t capacity = kHistoryWindow,
                       std::optional<std::filesystem::path> log_path = {});

  void register_plan(const std::string& plan_id, int step_count);
  void record(const ExecutionRecord& r);
  /// Episode boundary: empties the planner window; the log is kept.
  void clear_recent();

  std::vector<ExecutionRecord> recent() const;  // oldest first
  std::vector<ExecutionRecord> all() const;
  std::optional<ExecutionRecord> last() const;
  std::vector<ExecutionRecord> records_for(const std::string& plan_id) const;
  PlanStatus completion_status(const std::string& plan_id) const;
  bool knows_plan(const std::string& plan_id) const;
  int step_count(const std::string& plan_id) const;

 private:
  mutable std::mutex mu_;
  std::size_t capacity_;
  std::deque<ExecutionRecord> ring_;
  std::vector<ExecutionRecord> log_;
  std::map<std::string, int> plans_;
  std::optional<std::filesystem::path> log_path_;
  std::ofstream log_file_;
};

std::vector<ExecutionRecord> read_execution_log(const std::filesystem::path& p);

}  // namespace opengo
