#include "opengo/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

#include "opengo/error.hpp"
#include "opengo/executors.hpp"

namespace opengo {
namespace {

constexpr double kStairTread = 0.3;      // meters advanced per stair
constexpr double kDanceAmplitude = 0.15; // rad
constexpr std::int64_t kBackflipTicks = 50;
constexpr std::int64_t kPostureTicks = 25;

std::int64_t ticks_for(double seconds) {
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(seconds * kTicksPerSecond - 1e-9)));
}

/// Pose of one executor as a function of the tick index, relative to the
/// state at execution start.
struct Motion {
  std::int64_t ticks = 1;
  double speed = 0.0;     // m/s for translating executors
  double distance = 0.0;  // commanded distance
  double pitch = 0.0;     // held while translating (stairs)
  std::function<void(RobotState&, std::int64_t)> shape;  // non-translational part
};

double param(const Params& p, const char* name) {
  auto it = p.find(name);
  if (it == p.end()) throw Error(Errc::OutOfRange, std::string("missing parameter ") + name);
  if (!std::isfinite(it->second))
    throw Error(Errc::OutOfRange, std::string("non-finite parameter ") + name);
  return it->second;
}

double positive(const Params& p, const char* name) {
  double v = param(p, name);
  if (v <= 0.0) throw Error(Errc::OutOfRange, std::string(name) + " must be positive");
  return v;
}

}  // namespace

FaultSpec FaultSpec::battery_drain(double per_tick) {
  FaultSpec f;
  f.kind = Kind::battery_drain;
  f.drain_per_tick = per_tick;
  return f;
}

FaultSpec FaultSpec::collision(double x, double y) {
  FaultSpec f;
  f.kind = Kind::collision_at;
  f.x = x;
  f.y = y;
  return f;
}

FaultSpec FaultSpec::executor_fail(std::string skill, double probability, std::uint64_t seed) {
  FaultSpec f;
  f.kind = Kind::executor_fail;
  f.skill = std::move(skill);
  f.probability = probability;
  f.seed = seed;
  return f;
}

nlohmann::json to_json(const FaultSpec& f) {
  switch (f.kind) {
    case FaultSpec::Kind::slip: return {{"kind", "slip"}};
    case FaultSpec::Kind::battery_drain: return {{"kind", "battery_drain"}, {"per_tick", f.drain_per_tick}};
    case FaultSpec::Kind::collision_at: return {{"kind", "collision_at"}, {"x", f.x}, {"y", f.y}};
    case FaultSpec::Kind::executor_fail:
      return {{"kind", "executor_fail"}, {"skill", f.skill}, {"probability", f.probability},
              {"seed", f.seed}};
  }
  return {};
}

FaultSpec fault_from_json(const nlohmann::json& j) {
  const std::string kind = j.value("kind", "");
  if (kind == "slip") return FaultSpec::slip_fault();
  if (kind == "battery_drain") return FaultSpec::battery_drain(j.value("per_tick", 0.05));
  if (kind == "collision_at") return FaultSpec::collision(j.at("x").get<double>(), j.at("y").get<double>());
  if (kind == "executor_fail")
    return FaultSpec::executor_fail(j.at("skill").get<std::string>(), j.value("probability", 1.0),
                                    j.value("seed", std::uint64_t{0}));
  throw Error(Errc::BadConfig, "unknown fault kind '" + kind + "'");
}

TerrainMap::TerrainMap(const std::vector<std::string>& rows, double origin_x, double origin_y)
    : origin_x_(origin_x), origin_y_(origin_y) {
  if (rows.empty()) throw Error(Errc::BadConfig, "map has no rows");
  rows_ = static_cast<int>(rows.size());
  cols_ = static_cast<int>(rows.front().size());
  if (cols_ == 0) throw Error(Errc::BadConfig, "map has empty rows");
  cells_.reserve(static_cast<std::size_t>(rows_) * cols_);
  for (int r = 0; r < rows_; ++r) {
    if (static_cast<int>(rows[r].size()) != cols_)
      throw Error(Errc::BadConfig, "map row " + std::to_string(r) + " has ragged width");
    for (char c : rows[r]) {
      auto t = terrain_from_letter(c);
      if (!t) throw Error(Errc::BadConfig, std::string("map has unknown class letter '") + c + "'");
      cells_.push_back(*t);
    }
  }
}

TerrainMap TerrainMap::parse(std::string_view text, double origin_x, double origin_y) {
  std::vector<std::string> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(line);
  }
  return TerrainMap(rows, origin_x, origin_y);
}

TerrainMap TerrainMap::uniform(TerrainClass t, int rows, int cols, double origin_x, double origin_y) {
  return TerrainMap(std::vector<std::string>(rows, std::string(cols, terrain_letter(t))), origin_x,
                    origin_y);
}

std::optional<TerrainClass> TerrainMap::at(double x, double y) const {
  if (!std::isfinite(x) || !std::isfinite(y)) return std::nullopt;
  const double cx = std::floor((x - origin_x_) / kCellSize);
  const double cy = std::floor((y - origin_y_) / kCellSize);
  if (cx < 0 || cy < 0 || cx >= cols_ || cy >= rows_) return std::nullopt;
  return cells_[static_cast<std::size_t>(cy) * cols_ + static_cast<std::size_t>(cx)];
}

std::vector<std::string> TerrainMap::lines() const {
  std::vector<std::string> out;
  for (int r = 0; r < rows_; ++r) {
    std::string row;
    for (int c = 0; c < cols_; ++c) row.push_back(terrain_letter(cells_[r * cols_ + c]));
    out.push_back(std::move(row));
  }
  return out;
}

SimConfig SimConfig::default_config() { return uniform(TerrainClass::flat); }

SimConfig SimConfig::uniform(TerrainClass t) {
  SimConfig cfg;
  cfg.map = TerrainMap::uniform(t, 24, 64, -8.0, -6.0);
  return cfg;
}

SimConfig SimConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw Error(Errc::BadConfig, "sim config must be an object");
  SimConfig cfg;
  double ox = -8.0, oy = -6.0;
  if (j.contains("origin")) {
    const auto& o = j.at("origin");
    if (!o.is_array() || o.size() != 2) throw Error(Errc::BadConfig, "origin must be [x, y]");
    ox = o[0].get<double>();
    oy = o[1].get<double>();
  }
  if (j.contains("map")) {
    const auto& m = j.at("map");
    if (!m.is_array()) throw Error(Errc::BadConfig, "map must be an array of rows");
    std::vector<std::string> rows;
    for (const auto& r : m) {
      if (!r.is_string()) throw Error(Errc::BadConfig, "map rows must be strings");
      rows.push_back(r.get<std::string>());
    }
    cfg.map = TerrainMap(rows, ox, oy);
  } else if (j.contains("map_file")) {
    std::filesystem::path file = j.at("map_file").get<std::string>();
    if (file.is_relative() && !base_dir.empty()) file = base_dir / file;
    std::ifstream in(file);
    if (!in) throw Error(Errc::BadConfig, "cannot open map file");
    std::stringstream ss;
    ss << in.rdbuf();
    cfg.map = TerrainMap::parse(ss.str(), ox, oy);
  } else if (j.contains("terrain")) {
    auto t = terrain_from_string(j.at("terrain").get<std::string>());
    if (!t) throw Error(Errc::BadConfig, "unknown terrain");
    cfg.map = TerrainMap::uniform(*t, 24, 64, ox, oy);
  } else {
    cfg.map = SimConfig::default_config().map;
  }
  if (j.contains("start")) cfg.start = robot_state_from_json(j.at("start"));
  cfg.seed = j.value("seed", cfg.seed);
  cfg.step_budget_ticks = j.value("step_budget_ticks", cfg.step_budget_ticks);
  if (j.contains("safety")) cfg.safety = safety::limits_from_json(j.at("safety"));
  if (j.contains("faults"))
    for (const auto& f : j.at("faults")) cfg.faults.push_back(fault_from_json(f));
  cfg.realtime = j.value("realtime", false);
  return cfg;
}

SimConfig SimConfig::load(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(Errc::BadConfig, "cannot open sim config " + p.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::BadConfig, p.string() + " is not valid JSON");
  return from_json(j, p.parent_path());
}

nlohmann::json SimConfig::to_json() const {
  nlohmann::json faults_json = nlohmann::json::array();
  for (const auto& f : faults) faults_json.push_back(opengo::to_json(f));
  return {{"map", map.lines()},
          {"origin", {map.origin_x(), map.origin_y()}},
          {"start", opengo::to_json(start)},
          {"seed", seed},
          {"step_budget_ticks", step_budget_ticks},
          {"safety", safety::to_json(safety)},
          {"faults", faults_json},
          {"realtime", realtime}};
}

std::string_view to_string(Terminal t) {
  switch (t) {
    case Terminal::completed: return "completed";
    case Terminal::error: return "error";
    case Terminal::preempted: return "preempted";
  }
  return "completed";
}

Simulator::Simulator() : Simulator(SimConfig::default_config()) {}

Simulator::Simulator(SimConfig cfg) { reset(cfg); }

RobotState Simulator::reset(const SimConfig& cfg) {
  if (cfg.map.empty()) throw Error(Errc::BadConfig, "sim config has no map");
  if (!cfg.map.at(cfg.start.x, cfg.start.y))
    throw Error(Errc::BadConfig, "start position lies outside the map");
  if (!(cfg.start.battery >= 0.0 && cfg.start.battery <= 100.0))
    throw Error(Errc::BadConfig, "start battery outside [0, 100]");
  if (cfg.step_budget_ticks <= 0) throw Error(Errc::BadConfig, "step budget must be positive");
  cfg_ = cfg;
  state_ = cfg.start;
  state_.heading = normalize_angle(state_.heading);
  state_.estop = false;
  estop_ = false;
  rng_.seed(cfg.seed);
  faults_.clear();
  for (const auto& f : cfg.faults) inject_fault(f);
  tick_ = 0;
  trace_.clear();
  return state_;
}

TerrainClass Simulator::scene_class(const RobotState& s) const {
  auto t = cfg_.map.at(s.x, s.y);
  if (!t) throw Error(Errc::OutOfMap, "position (" + std::to_string(s.x) + ", " +
                                          std::to_string(s.y) + ") outside the map");
  return *t;
}

void Simulator::inject_fault(const FaultSpec& f) {
  FaultState fs{f, std::mt19937_64(f.seed)};
  faults_.push_back(std::move(fs));
}

void Simulator::clear_faults() { faults_.clear(); }

void Simulator::trigger_estop() { estop_.store(true); }

void Simulator::resume() {
  estop_.store(false);
  state_.estop = false;
}

bool Simulator::slip_active() const {
  return std::any_of(faults_.begin(), faults_.end(),
                     [](const FaultState& f) { return f.spec.kind == FaultSpec::Kind::slip; });
}

double Simulator::extra_drain() const {
  double d = 0.0;
  for (const auto& f : faults_)
    if (f.spec.kind == FaultSpec::Kind::battery_drain) d += f.spec.drain_per_tick;
  return d;
}

void Simulator::apply_collision_faults() {
  for (const auto& f : faults_) {
    if (f.spec.kind != FaultSpec::Kind::collision_at) continue;
    const double ox = cfg_.map.origin_x(), oy = cfg_.map.origin_y();
    const bool same_cell =
        std::floor((state_.x - ox) / kCellSize) == std::floor((f.spec.x - ox) / kCellSize) &&
        std::floor((state_.y - oy) / kCellSize) == std::floor((f.spec.y - oy) / kCellSize);
    if (same_cell) state_.collision = true;
  }
}

void Simulator::apply_safe_stand() {
  if (state_.posture != Posture::fallen) state_.posture = Posture::standing;
  state_.estop = true;
}

SkillOutcome Simulator::execute_skill(const std::string& executor, const Params& params,
                                      const ExecOptions& opts) {
  if (estop_.load()) {
    state_.estop = true;
    throw Error(Errc::EstopLatched, "e-stop latched; resume required");
  }
  const ExecutorInfo* info = find_executor(executor);
  if (!info) throw Error(Errc::NotFound, "no executor named '" + executor + "'");

  const RobotState start = state_;
  Motion m;
  std::string precondition_error;

  if (executor == "move_forward") {
    m.distance = positive(params, "distance");
    m.speed = positive(params, "speed");
    m.ticks = ticks_for(m.distance / m.speed);
    if (start.posture != Posture::standing) precondition_error = "INVALID_POSTURE";
  } else if (executor == "climb_stairs") {
    const double steps = positive(params, "steps");
    const double height = positive(params, "step_height");
    m.speed = positive(params, "speed");
    m.distance = steps * kStairTread;
    m.ticks = ticks_for(m.distance / m.speed);
    m.pitch = -std::atan(height / kStairTread);  // nose up
    if (start.posture != Posture::standing) precondition_error = "INVALID_POSTURE";
  } else if (executor == "turn") {
    const double angle = param(params, "angle");
    const double rate = positive(params, "rate");
    m.ticks = std::abs(angle) > 0.0 ? ticks_for(std::abs(angle) / rate) : 1;
    m.shape = [=](RobotState& s, std::int64_t k) {
      const double swept = std::min(k * rate * kTickSeconds, std::abs(angle));
      s.heading = normalize_angle(start.heading + std::copysign(swept, angle));
    };
    if (start.posture != Posture::standing) precondition_error = "INVALID_POSTURE";
  } else if (executor == "backflip") {
    m.ticks = kBackflipTicks;
    m.shape = [](RobotState& s, std::int64_t k) {
      s.posture = (k > 10 && k <= 35) ? Posture::mid_air : Posture::standing;
    };
    if (start.posture != Posture::standing) precondition_error = "INVALID_POSTURE";
  } else if (executor == "dance") {
    const double duration = positive(params, "duration");
    m.ticks = ticks_for(duration);
    const std::int64_t n = m.ticks;
    m.shape = [n](RobotState& s, std::int64_t k) {
      s.roll = k == n ? 0.0 : kDanceAmplitude * std::sin(2.0 * std::numbers::pi * k * kTickSeconds);
    };
    if (start.posture != Posture::standing) precondition_error = "INVALID_POSTURE";
  } else if (executor == "stand") {
    m.ticks = kPostureTicks;
    m.shape = [=](RobotState& s, std::int64_t k) {
      const double f = 1.0 - static_cast<double>(k) / kPostureTicks;
      s.roll = start.roll * f;
      s.pitch = start.pitch * f;
      if (k == kPostureTicks) s.posture = Posture::standing;
    };
    if (start.posture == Posture::fallen || start.posture == Posture::mid_air)
      precondition_error = "INVALID_POSTURE";
  } else if (executor == "crouch") {
    positive(params, "depth");
    m.ticks = kPostureTicks;
    m.shape = [](RobotState& s, std::int64_t) { s.posture = Posture::crouched; };
    if (start.posture != Posture::standing && start.posture != Posture::crouched)
      precondition_error = "INVALID_POSTURE";
  } else if (executor == "stop") {
    m.ticks = 1;
  }

  SkillOutcome out;
  const std::string label = opts.skill_id.empty() ? executor : opts.skill_id;
  auto finish_without_actuation = [&](Terminal t, std::string code) {
    ++tick_;
    trace_.push_back({tick_, label, false, safety::assess(state_, cfg_.safety).safe()});
    out.terminal = t;
    out.error_code = std::move(code);
    out.ticks = 1;
    out.trajectory.push_back(state_);
    return out;
  };

  if (!precondition_error.empty()) return finish_without_actuation(Terminal::error, precondition_error);

  for (auto& f : faults_) {
    if (f.spec.kind != FaultSpec::Kind::executor_fail || f.spec.skill != label) continue;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(f.rng) < f.spec.probability) return finish_without_actuation(Terminal::error, "EXECUTOR_FAULT");
  }

  const std::int64_t limit = std::min(m.ticks + 10, cfg_.step_budget_ticks);
  const bool translating = m.distance > 0.0;
  const bool slip = slip_active();
  double commanded_prev = 0.0;
  double traveled = 0.0;

  for (std::int64_t k = 1; k <= m.ticks; ++k) {
    if (k > limit) {
      out.terminal = Terminal::error;
      out.error_code = "TIMEOUT";
      break;
    }
    if (estop_.load()) {
      apply_safe_stand();
      ++tick_;
      trace_.push_back({tick_, label, false, safety::assess(state_, cfg_.safety).safe()});
      out.trajectory.push_back(state_);
      out.terminal = Terminal::preempted;
      ++out.ticks;
      break;
    }

    ++tick_;
    ++out.ticks;
    if (translating) {
      const double commanded = std::min(k * m.speed * kTickSeconds, m.distance);
      double factor = 1.0;
      if (slip && cfg_.map.at(state_.x, state_.y) == TerrainClass::rough) factor = kSlipFactor;
      traveled += (commanded - commanded_prev) * factor;
      commanded_prev = commanded;
      state_.x = start.x + traveled * std::cos(start.heading);
      state_.y = start.y + traveled * std::sin(start.heading);
      state_.pitch = k == m.ticks ? 0.0 : m.pitch;
    }
    if (m.shape) m.shape(state_, k);
    state_.battery = std::max(0.0, state_.battery - info->battery_per_tick - extra_drain());
    apply_collision_faults();

    const auto verdict = safety::assess(state_, cfg_.safety);
    trace_.push_back({tick_, label, true, verdict.safe()});
    if (!verdict.safe()) {
      // Latch now; the next tick of this or any skill will not actuate.
      estop_.store(true);
      apply_safe_stand();
      out.trajectory.push_back(state_);
      out.terminal = Terminal::preempted;
      out.error_code = std::string(safety::to_string(verdict.reasons.front().code));
      if (observer_) observer_(tick_, state_);
      break;
    }

    auto cell = cfg_.map.at(state_.x, state_.y);
    out.trajectory.push_back(state_);
    if (observer_) observer_(tick_, state_);
    if (!cell) {
      out.terminal = Terminal::error;
      out.error_code = "OUT_OF_MAP";
      break;
    }
    if (!opts.required_terrain.empty() &&
        std::find(opts.required_terrain.begin(), opts.required_terrain.end(), *cell) ==
            opts.required_terrain.end()) {
      out.terminal = Terminal::error;
      out.error_code = "TERRAIN_MISMATCH";
      break;
    }
    if (cfg_.realtime) std::this_thread::sleep_for(std::chrono::milliseconds(1000 / kTicksPerSecond));
  }
  if (out.trajectory.empty()) out.trajectory.push_back(state_);
  return out;
}

}  // namespace opengo
