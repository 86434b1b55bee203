#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "opengo/dispatcher.hpp"
#include "opengo/learning.hpp"
#include "opengo/memory_state.hpp"
#include "opengo/simulator.hpp"
#include "opengo/skill_library.hpp"

namespace opengo {

enum class UpdateKind {
  plan_proposed,
  step_started,
  step_completed,
  step_failed,
  plan_done,
  estop,
  ask_feedback,
};

std::string_view to_string(UpdateKind k);
std::optional<UpdateKind> update_kind_from_string(std::string_view s);

using UpdateSink = std::function<void(UpdateKind, const nlohmann::json&)>;

/// Pauses inserted between consecutive steps of a plan. Zero by default;
/// the latency harness configures them.
struct CoordinationDelays {
  std::chrono::microseconds scheduling{0};
  std::chrono::microseconds state_transition{0};
  std::chrono::microseconds dependency_check{0};
};

/// Measured inter-step coordination time, summed over a run.
struct OverheadItems {
  std::int64_t scheduling_ns = 0;
  std::int64_t state_transition_ns = 0;
  std::int64_t dependency_check_ns = 0;
  std::int64_t total_ns() const { return scheduling_ns + state_transition_ns + dependency_check_ns; }
};

struct RuntimeConfig {
  SimConfig sim = SimConfig::default_config();
  DispatcherConfig dispatcher;
  LearningConfig learning;
  CoordinationDelays coordination;
  std::optional<std::filesystem::path> log_path;
  int max_replans = 3;
  bool learn = true;

  static RuntimeConfig from_json(const nlohmann::json& j);
};

struct RunResult {
  std::vector<DispatchPlan> plans;  // initial plan first, then replans
  std::vector<ExecutionRecord> records;
  PlanStatus status;  // of the last plan
  bool aborted = false;
  std::string error;  // NoFeasiblePlan / EstopLatched etc.
  OverheadItems overhead;
  Timestamp t_instruction;
  Timestamp t_dispatch_done;
};

/// One robot session: registry, simulator, memory, learning and dispatcher
/// wired into the closed loop. Calls are serialized per session; e-stop is
/// delivered out of band and honoured within one simulator tick.
class Runtime {
 public:
  Runtime(Registry registry, RuntimeConfig cfg = {},
          std::unique_ptr<PlannerBackend> backend = nullptr);

  RunResult run_instruction(const std::string& task, const std::string& instruction,
                            const UpdateSink& sink = {},
                            std::optional<Timestamp> t_instruction = {});

  /// Applies operator feedback to a known plan. `correct` re-executes the
  /// flagged step with the overrides and attracts defaults on success.
  AppliedUpdates feedback(const std::string& plan_id, const HumanFeedback& fb,
                          const UpdateSink& sink = {});

  void trigger_estop();
  void resume();
  bool estop_latched() const { return sim_.estop_latched(); }

  RobotState state_snapshot() const;
  std::optional<DispatchPlan> plan_by_id(const std::string& id) const;
  std::optional<std::string> last_plan_id() const;

  void set_backend(std::unique_ptr<PlannerBackend> backend);
  PlannerBackend& backend() { return *backend_; }
  void set_coordination(CoordinationDelays d) { cfg_.coordination = d; }

  /// Starts a new episode: resets the simulator (faults re-applied from cfg)
  /// and empties the recent-history window. Not timed.
  void reset_simulation(const SimConfig& cfg);

  Registry& registry() { return registry_; }
  Simulator& simulator() { return sim_; }
  MemoryState& memory() { return memory_; }
  PreferenceStore& preferences() { return prefs_; }
  Dispatcher& dispatcher() { return dispatcher_; }
  const RuntimeConfig& config() const { return cfg_; }

 private:
  PlannerContext context_for(const std::string& task, const std::string& instruction);
  bool execute_plan(const DispatchPlan& plan, const Timestamp& t_instruction,
                    const Timestamp& t_dispatch, const UpdateSink& sink, RunResult& out,
                    int& failed_step, std::string& failed_code);
  ExecutionRecord execute_step(const DispatchPlan& plan, int step_no, const Timestamp& t_instr,
                               const Timestamp& t_dispatch, const UpdateSink& sink);

  mutable std::recursive_mutex session_;
  Registry registry_;
  RuntimeConfig cfg_;
  Simulator sim_;
  MemoryState memory_;
  PreferenceStore prefs_;
  Dispatcher dispatcher_;
  std::unique_ptr<PlannerBackend> backend_;
  std::map<std::string, DispatchPlan> plans_;
  std::optional<std::string> last_plan_;
  mutable std::mutex state_mu_;
  RobotState published_state_;
};

}  // namespace opengo
