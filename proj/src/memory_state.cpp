#include "opengo/memory_state.hpp"

#include <algorithm>

#include "opengo/error.hpp"
#include "opengo/skill_library.hpp"

namespace opengo {
namespace {

std::string_view outcome_name(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::completed: return "completed";
    case OutcomeKind::error: return "error";
    case OutcomeKind::preempted: return "preempted";
  }
  return "completed";
}

nlohmann::json ts_json(const Timestamp& t) {
  return {{"mono_ns", t.mono_ns}, {"wall", iso8601(t.wall_ns)}, {"wall_ns", t.wall_ns}};
}

Timestamp ts_from(const nlohmann::json& j) {
  return {j.at("mono_ns").get<Clock>(), j.value("wall_ns", std::int64_t{0})};
}

}  // namespace

Timestamp Timestamp::now() { return {mono_now_ns(), wall_now_ns()}; }

bool ExecutionRecord::timestamps_ordered() const {
  return t_instruction.mono_ns <= t_dispatch_done.mono_ns &&
         t_dispatch_done.mono_ns <= t_execution_start.mono_ns &&
         t_execution_start.mono_ns <= t_execution_end.mono_ns;
}

nlohmann::json to_json(const ExecutionRecord& r) {
  nlohmann::json outcome{{"kind", std::string(outcome_name(r.outcome))}};
  if (r.outcome == OutcomeKind::error) outcome["code"] = r.error_code;
  return {{"plan_id", r.plan_id},
          {"step", r.step},
          {"skill", r.skill},
          {"params", r.params},
          {"t_instruction", ts_json(r.t_instruction)},
          {"t_dispatch_done", ts_json(r.t_dispatch_done)},
          {"t_execution_start", ts_json(r.t_execution_start)},
          {"t_execution_end", ts_json(r.t_execution_end)},
          {"outcome", outcome},
          {"scene", std::string(to_string(r.scene))},
          {"state_before", to_json(r.state_before)},
          {"state_after", to_json(r.state_after)}};
}

ExecutionRecord record_from_json(const nlohmann::json& j) {
  ExecutionRecord r;
  r.plan_id = j.at("plan_id").get<std::string>();
  r.step = j.at("step").get<int>();
  r.skill = j.at("skill").get<std::string>();
  r.params = j.at("params").get<Params>();
  r.t_instruction = ts_from(j.at("t_instruction"));
  r.t_dispatch_done = ts_from(j.at("t_dispatch_done"));
  r.t_execution_start = ts_from(j.at("t_execution_start"));
  r.t_execution_end = ts_from(j.at("t_execution_end"));
  const auto& o = j.at("outcome");
  const auto kind = o.at("kind").get<std::string>();
  if (kind == "completed") {
    r.outcome = OutcomeKind::completed;
  } else if (kind == "error") {
    r.outcome = OutcomeKind::error;
    r.error_code = o.value("code", "");
  } else if (kind == "preempted") {
    r.outcome = OutcomeKind::preempted;
  } else {
    throw Error(Errc::SchemaError, "unknown outcome '" + kind + "'");
  }
  if (auto s = terrain_from_string(j.value("scene", "flat"))) r.scene = *s;
  r.state_before = robot_state_from_json(j.at("state_before"));
  r.state_after = robot_state_from_json(j.at("state_after"));
  return r;
}

bool CheckResult::violates(ConstraintKind k) const {
  return std::any_of(violated.begin(), violated.end(), [k](const Constraint& c) { return c.kind == k; });
}

CheckResult precheck(const SkillTemplate& skill, const RobotState& state, TerrainClass scene,
                     const ExecutionRecord* last) {
  std::optional<std::string> last_skill;
  if (last) last_skill = last->skill;
  return {violated_constraints(skill, {state, scene, last_skill})};
}

std::string to_string(const PlanStatus& s) {
  switch (s.kind) {
    case PlanStatus::Kind::pending: return "pending";
    case PlanStatus::Kind::in_progress: return "in_progress";
    case PlanStatus::Kind::completed: return "completed";
    case PlanStatus::Kind::failed: return "failed(" + std::to_string(s.failed_step) + ")";
    case PlanStatus::Kind::aborted: return "aborted";
  }
  return "pending";
}

PlanStatus fold_status(std::span<const ExecutionRecord> records, const std::string& plan_id,
                       int step_count) {
  bool any = false, aborted = false;
  int first_failed = 0;
  std::vector<bool> done(static_cast<std::size_t>(std::max(step_count, 0)) + 1, false);
  for (const auto& r : records) {
    if (r.plan_id != plan_id) continue;
    any = true;
    switch (r.outcome) {
      case OutcomeKind::preempted: aborted = true; break;
      case OutcomeKind::error:
        if (first_failed == 0 || r.step < first_failed) first_failed = r.step;
        break;
      case OutcomeKind::completed:
        if (r.step >= 1 && r.step <= step_count) done[r.step] = true;
        break;
    }
  }
  if (aborted) return {PlanStatus::Kind::aborted, 0};
  if (first_failed) return {PlanStatus::Kind::failed, first_failed};
  if (!any) return {PlanStatus::Kind::pending, 0};
  if (step_count > 0 && std::all_of(done.begin() + 1, done.end(), [](bool b) { return b; }))
    return {PlanStatus::Kind::completed, 0};
  return {PlanStatus::Kind::in_progress, 0};
}

MemoryState::MemoryState(std::size_t capacity, std::optional<std::filesystem::path> log_path)
    : capacity_(capacity), log_path_(std::move(log_path)) {
  if (log_path_) {
    if (log_path_->has_parent_path()) std::filesystem::create_directories(log_path_->parent_path());
    log_file_.open(*log_path_, std::ios::app);
    if (!log_file_) throw Error(Errc::IoError, "cannot open execution log " + log_path_->string());
  }
}

void MemoryState::register_plan(const std::string& plan_id, int step_count) {
  std::lock_guard lock(mu_);
  plans_[plan_id] = step_count;
}

void MemoryState::record(const ExecutionRecord& r) {
  if (!r.timestamps_ordered())
    throw Error(Errc::TimestampOrder, "record " + r.plan_id + "#" + std::to_string(r.step) +
                                          " has out-of-order timestamps");
  std::lock_guard lock(mu_);
  ring_.push_back(r);
  while (ring_.size() > capacity_) ring_.pop_front();
  log_.push_back(r);
  if (log_file_.is_open()) {
    log_file_ << to_json(r).dump() << '\n';
    log_file_.flush();
  }
}

std::vector<ExecutionRecord> MemoryState::recent() const {
  std::lock_guard lock(mu_);
  return {ring_.begin(), ring_.end()};
}

std::vector<ExecutionRecord> MemoryState::all() const {
  std::lock_guard lock(mu_);
  return log_;
}

void MemoryState::clear_recent() {
  std::lock_guard lock(mu_);
  ring_.clear();
}

std::optional<ExecutionRecord> MemoryState::last() const {
  std::lock_guard lock(mu_);
  if (ring_.empty()) return std::nullopt;
  return ring_.back();
}

std::vector<ExecutionRecord> MemoryState::records_for(const std::string& plan_id) const {
  std::lock_guard lock(mu_);
  std::vector<ExecutionRecord> out;
  for (const auto& r : log_)
    if (r.plan_id == plan_id) out.push_back(r);
  return out;
}

bool MemoryState::knows_plan(const std::string& plan_id) const {
  std::lock_guard lock(mu_);
  return plans_.count(plan_id) > 0;
}

int MemoryState::step_count(const std::string& plan_id) const {
  std::lock_guard lock(mu_);
  auto it = plans_.find(plan_id);
  if (it == plans_.end()) throw Error(Errc::UnknownPlan, plan_id);
  return it->second;
}

PlanStatus MemoryState::completion_status(const std::string& plan_id) const {
  std::lock_guard lock(mu_);
  auto it = plans_.find(plan_id);
  if (it == plans_.end()) throw Error(Errc::UnknownPlan, "unknown plan '" + plan_id + "'");
  return fold_status(log_, plan_id, it->second);
}

std::vector<ExecutionRecord> read_execution_log(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(Errc::IoError, "cannot read " + p.string());
  std::vector<ExecutionRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::SchemaError, "malformed log line in " + p.string());
    out.push_back(record_from_json(j));
  }
  return out;
}

}  // namespace opengo
