#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "opengo/safety.hpp"
#include "opengo/types.hpp"

namespace opengo {

inline constexpr int kTicksPerSecond = 50;
inline constexpr double kTickSeconds = 1.0 / kTicksPerSecond;
inline constexpr double kCellSize = 0.5;

/// Fraction of commanded distance covered per tick on rough terrain under a slip fault.
inline constexpr double kSlipFactor = 0.7;

using Params = std::map<std::string, double>;

struct FaultSpec {
  enum class Kind { slip, battery_drain, collision_at, executor_fail };
  Kind kind = Kind::slip;
  double x = 0.0, y = 0.0;          // collision_at
  std::string skill;                // executor_fail
  double probability = 1.0;         // executor_fail
  std::uint64_t seed = 0;           // executor_fail
  double drain_per_tick = 0.05;     // battery_drain, percent

  static FaultSpec slip_fault() { return {}; }
  static FaultSpec battery_drain(double per_tick);
  static FaultSpec collision(double x, double y);
  static FaultSpec executor_fail(std::string skill, double probability, std::uint64_t seed);
};

nlohmann::json to_json(const FaultSpec& f);
FaultSpec fault_from_json(const nlohmann::json& j);

/// Row-major terrain grid. Row r of the map file covers
/// y in [origin_y + r*cell, origin_y + (r+1)*cell); column c covers x likewise.
class TerrainMap {
 public:
  TerrainMap() = default;
  explicit TerrainMap(const std::vector<std::string>& rows, double origin_x = 0.0,
                      double origin_y = 0.0);

  static TerrainMap parse(std::string_view text, double origin_x = 0.0, double origin_y = 0.0);
  static TerrainMap uniform(TerrainClass t, int rows, int cols, double origin_x, double origin_y);

  std::optional<TerrainClass> at(double x, double y) const;
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double origin_x() const { return origin_x_; }
  double origin_y() const { return origin_y_; }
  std::vector<std::string> lines() const;
  bool empty() const { return cells_.empty(); }

 private:
  int rows_ = 0;
  int cols_ = 0;
  double origin_x_ = 0.0;
  double origin_y_ = 0.0;
  std::vector<TerrainClass> cells_;
};

struct SimConfig {
  TerrainMap map;
  RobotState start;
  std::uint64_t seed = 42;
  std::int64_t step_budget_ticks = 10000;
  safety::Limits safety;
  std::vector<FaultSpec> faults;
  bool realtime = false;  // pace ticks to wall time (gateway demos)

  /// 24x64 flat map around the origin; robot at (0,0) heading 0.
  static SimConfig default_config();
  /// Uniform map of one terrain class, same geometry as the default.
  static SimConfig uniform(TerrainClass t);

  /// A relative `map_file` is resolved against `base_dir`.
  static SimConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  /// Reads a config file; its directory is the base for `map_file`.
  static SimConfig load(const std::filesystem::path& p);
  nlohmann::json to_json() const;
};

enum class Terminal { completed, error, preempted };
std::string_view to_string(Terminal t);

struct SkillOutcome {
  Terminal terminal = Terminal::completed;
  std::string error_code;  // set when terminal == error
  std::int64_t ticks = 0;
  std::vector<RobotState> trajectory;  // one snapshot per tick; back() is the final state
};

/// One simulator tick as seen by the safety monitor.
struct TickEvent {
  std::int64_t tick = 0;
  std::string skill;
  bool actuated = false;
  bool safe = true;
};

struct ExecOptions {
  std::string skill_id;  // keys executor_fail faults; defaults to the executor name
  std::vector<TerrainClass> required_terrain;  // empty: any terrain
};

/// Deterministic kinematic quadruped. Single-threaded tick processing;
/// trigger_estop() may be called from any thread and is honoured at the
/// next tick boundary.
class Simulator {
 public:
  Simulator();
  explicit Simulator(SimConfig cfg);

  RobotState reset(const SimConfig& cfg);
  RobotState reset() { return reset(cfg_); }

  const RobotState& state() const { return state_; }
  const SimConfig& config() const { return cfg_; }
  TerrainClass scene_class() const { return scene_class(state_); }
  TerrainClass scene_class(const RobotState& s) const;

  void inject_fault(const FaultSpec& f);
  void clear_faults();

  SkillOutcome execute_skill(const std::string& executor, const Params& params,
                             const ExecOptions& opts = {});

  void trigger_estop();
  void resume();
  bool estop_latched() const { return estop_.load(); }

  std::int64_t tick() const { return tick_; }
  const std::vector<TickEvent>& trace() const { return trace_; }
  void clear_trace() { trace_.clear(); }

  /// Called after each tick's actuation and safety check. Test hook for
  /// fault injection and e-stop timing.
  void set_tick_observer(std::function<void(std::int64_t, const RobotState&)> fn) {
    observer_ = std::move(fn);
  }

 private:
  struct FaultState {
    FaultSpec spec;
    std::mt19937_64 rng;
  };

  bool slip_active() const;
  double extra_drain() const;
  void apply_collision_faults();
  void apply_safe_stand();

  SimConfig cfg_;
  RobotState state_;
  std::vector<FaultState> faults_;
  std::mt19937_64 rng_;
  std::atomic<bool> estop_{false};
  std::int64_t tick_ = 0;
  std::vector<TickEvent> trace_;
  std::function<void(std::int64_t, const RobotState&)> observer_;
};

}  // namespace opengo
