#include "opengo/skill_library.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "opengo/error.hpp"
#include "opengo/executors.hpp"

namespace opengo {
namespace {

template <typename T>
bool contains(const std::vector<T>& v, const T& x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

void add(Report& r, std::string code, Severity sev, std::string msg) {
  r.findings.push_back({std::move(code), sev, std::move(msg)});
}

bool integral(double v) { return std::isfinite(v) && std::floor(v) == v; }

}  // namespace

bool constraint_satisfied(const Constraint& c, const SkillTemplate& skill,
                          const ConstraintContext& ctx) {
  switch (c.kind) {
    case ConstraintKind::required_terrain: return contains(c.terrains, ctx.scene);
    case ConstraintKind::required_posture: return contains(c.postures, ctx.state.posture);
    case ConstraintKind::min_battery: return ctx.state.battery >= c.min_battery;
    case ConstraintKind::forbidden_prior_skill: return !ctx.last_skill || skill_head(*ctx.last_skill) != c.skill;
    case ConstraintKind::max_speed_context: {
      if (!contains(c.speed.scenes, ctx.scene)) return true;
      const ParameterSpec* p = skill.parameter(c.speed.param);
      return !p || p->lower <= c.speed.max;
    }
    case ConstraintKind::unknown: return false;
  }
  return false;
}

std::vector<Constraint> violated_constraints(const SkillTemplate& skill,
                                             const ConstraintContext& ctx) {
  std::vector<Constraint> out;
  for (const auto& c : skill.constraints)
    if (!constraint_satisfied(c, skill, ctx)) out.push_back(c);
  return out;
}

std::vector<TerrainClass> required_terrains(const SkillTemplate& skill) {
  std::vector<TerrainClass> out;
  bool constrained = false;
  for (const auto& c : skill.constraints) {
    if (c.kind != ConstraintKind::required_terrain) continue;
    if (!constrained) {
      out = c.terrains;
      constrained = true;
    } else {
      std::vector<TerrainClass> both;
      for (auto t : out)
        if (contains(c.terrains, t)) both.push_back(t);
      out = both;
    }
  }
  return out;
}

ReviewReport review_skill(SkillTemplate& t) {
  ReviewReport r;
  r.subject = t.qualified_id();
  if (t.status() != SkillStatus::draft) {
    add(r, "NOT_DRAFT", Severity::error, "review requires a draft template");
    return r;
  }

  const ExecutorInfo* exec = find_executor(t.function().executor);
  if (!exec) {
    add(r, "UNKNOWN_EXECUTOR", Severity::error, "no built-in executor '" + t.function().executor + "'");
  } else {
    if (executor_digest(exec->name) != t.function().digest)
      add(r, "DIGEST_MISMATCH", Severity::error,
          "digest does not pin executor '" + std::string(exec->name) + "'");
    for (auto consumed : exec->consumed_params)
      if (!t.parameter(consumed))
        add(r, "UNDECLARED_PARAMETER", Severity::error,
            "executor consumes '" + std::string(consumed) + "' but it is not declared");
    for (const auto& p : t.parameters)
      if (!contains(exec->consumed_params, std::string_view(p.name)))
        add(r, "UNUSED_PARAMETER", Severity::warning, "'" + p.name + "' is not read by the executor");
  }

  for (const auto& p : t.parameters) {
    if (!std::isfinite(p.lower) || !std::isfinite(p.upper) || !std::isfinite(p.default_value)) {
      add(r, "NONFINITE_BOUNDS", Severity::error, p.name + ": bounds and default must be finite");
      continue;
    }
    if (p.lower > p.upper) {
      add(r, "INVERTED_BOUNDS", Severity::error, p.name + ": lower bound exceeds upper bound");
      continue;
    }
    if (!p.contains(p.default_value))
      add(r, "DEFAULT_OUT_OF_BOUNDS", Severity::error, p.name + ": default outside [lower, upper]");
    if (p.kind == ParamKind::integer &&
        !(integral(p.lower) && integral(p.upper) && integral(p.default_value)))
      add(r, "NON_INTEGRAL_BOUNDS", Severity::error, p.name + ": integer parameter with fractional bounds");
    if (p.kind == ParamKind::enumeration) {
      const double last = static_cast<double>(p.values.size()) - 1.0;
      if (!(integral(p.lower) && integral(p.upper) && integral(p.default_value)) || p.lower < 0 ||
          p.upper > last)
        add(r, "ENUM_BOUNDS", Severity::error, p.name + ": enum bounds must index the value list");
    }
  }

  for (const auto& c : t.constraints) {
    switch (c.kind) {
      case ConstraintKind::unknown:
        add(r, "UNKNOWN_CONSTRAINT", Severity::error, "constraint kind '" + c.raw_kind + "' is not known");
        break;
      case ConstraintKind::min_battery:
        if (!(c.min_battery >= 0.0 && c.min_battery <= 100.0))
          add(r, "INVALID_CONSTRAINT", Severity::error, "min_battery outside [0, 100]");
        break;
      case ConstraintKind::max_speed_context:
        if (!t.parameter(c.speed.param))
          add(r, "UNDECLARED_PARAMETER", Severity::error,
              "max_speed_context names undeclared parameter '" + c.speed.param + "'");
        break;
      default: break;
    }
  }

  t.advance(r.pass() ? SkillStatus::reviewed : SkillStatus::rejected);
  return r;
}

std::vector<Params> validation_points(const SkillTemplate& t, std::uint64_t seed) {
  std::vector<Params> pts;
  auto push_unique = [&](Params p) {
    if (std::find(pts.begin(), pts.end(), p) == pts.end()) pts.push_back(std::move(p));
  };
  Params defaults;
  for (const auto& p : t.parameters) defaults[p.name] = p.default_value;
  push_unique(defaults);

  const std::size_t d = t.parameters.size();
  if (d <= 4) {
    for (std::size_t mask = 0; mask < (std::size_t{1} << d); ++mask) {
      Params corner;
      for (std::size_t i = 0; i < d; ++i) {
        const auto& p = t.parameters[i];
        corner[p.name] = (mask >> i) & 1U ? p.upper : p.lower;
      }
      push_unique(std::move(corner));
    }
  } else {
    std::mt19937_64 rng(seed);
    for (int s = 0; s < 16; ++s) {
      Params sample;
      for (const auto& p : t.parameters) {
        std::uniform_real_distribution<double> u(p.lower, p.upper);
        double v = u(rng);
        if (p.kind != ParamKind::continuous) v = std::clamp(std::round(v), p.lower, p.upper);
        sample[p.name] = v;
      }
      push_unique(std::move(sample));
    }
  }
  return pts;
}

ValidationReport validate_in_simulation(SkillTemplate& t, const SimConfig& cfg) {
  ValidationReport r;
  r.subject = t.qualified_id();
  if (t.status() != SkillStatus::reviewed) {
    add(r, "NOT_REVIEWED", Severity::error, "simulation validation requires a reviewed template");
    return r;
  }
  if (cfg.map.empty()) throw Error(Errc::SimulatorUnavailable, "sim config has no map");

  Simulator sim;
  try {
    sim.reset(cfg);
  } catch (const Error& e) {
    throw Error(Errc::SimulatorUnavailable, e.what());
  }

  const auto points = validation_points(t, cfg.seed);
  const auto terrains = required_terrains(t);
  const TerrainClass scene = sim.scene_class();
  ExecOptions opts{t.id, terrains};
  int runs = 0;

  for (const auto& point : points) {
    sim.reset(cfg);
    const ConstraintContext ctx{sim.state(), scene, std::nullopt};
    bool unsatisfiable = false;
    for (const auto& c : t.constraints) {
      if (c.kind == ConstraintKind::forbidden_prior_skill) continue;
      if (c.kind == ConstraintKind::max_speed_context) {
        auto it = point.find(c.speed.param);
        if (contains(c.speed.scenes, scene) && it != point.end() && it->second > c.speed.max) {
          add(r, "POINT_SKIPPED", Severity::info,
              c.speed.param + "=" + std::to_string(it->second) + " exceeds the scene speed limit");
          unsatisfiable = true;
          break;
        }
        continue;
      }
      if (!constraint_satisfied(c, t, ctx)) {
        add(r, "CONSTRAINT_UNSATISFIABLE_IN_CONFIG", Severity::error,
            std::string(to_string(c.kind)) + " cannot hold in the initial state of this config");
        t.advance(SkillStatus::rejected);
        return r;
      }
    }
    if (unsatisfiable) continue;

    ++runs;
    SkillOutcome out;
    try {
      out = sim.execute_skill(t.function().executor, point, opts);
    } catch (const Error& e) {
      add(r, "EXECUTION_ERROR", Severity::error, e.what());
      continue;
    }
    if (out.terminal == Terminal::preempted) {
      add(r, "SAFETY_VIOLATION", Severity::error, "run preempted: " + out.error_code);
    } else if (out.terminal == Terminal::error) {
      add(r, out.error_code == "TIMEOUT" ? "STEP_BUDGET_EXCEEDED" : "EXECUTION_ERROR",
          Severity::error, "run ended with " + out.error_code);
    } else if (out.ticks > cfg.step_budget_ticks) {
      add(r, "STEP_BUDGET_EXCEEDED", Severity::error, "run used " + std::to_string(out.ticks) + " ticks");
    }
  }
  add(r, "RUNS", Severity::info, std::to_string(runs));
  t.advance(r.pass() ? SkillStatus::validated : SkillStatus::rejected);
  return r;
}

Registry::Registry(const Registry& other) {
  std::shared_lock lock(other.mu_);
  by_head_ = other.by_head_;
}

Registry& Registry::operator=(const Registry& other) {
  if (this == &other) return *this;
  std::map<std::string, std::vector<std::shared_ptr<const SkillTemplate>>> copy;
  {
    std::shared_lock lock(other.mu_);
    copy = other.by_head_;
  }
  std::unique_lock lock(mu_);
  by_head_ = std::move(copy);
  return *this;
}

std::string Registry::register_skill(SkillTemplate t) {
  if (t.status() != SkillStatus::validated)
    throw Error(Errc::NotValidated, t.id + " is " + std::string(to_string(t.status())));
  std::unique_lock lock(mu_);
  auto& versions = by_head_[t.id];
  const int next = static_cast<int>(versions.size()) + 1;
  if (t.version != 0 && t.version != next)
    throw Error(Errc::VersionConflict, t.id + ": version " + std::to_string(t.version) +
                                           " but next is " + std::to_string(next));
  t.version = next;
  t.advance(SkillStatus::registered);
  versions.push_back(std::make_shared<const SkillTemplate>(std::move(t)));
  return versions.back()->qualified_id();
}

std::shared_ptr<const SkillTemplate> Registry::find(const std::string& id) const {
  std::string head = id;
  int version = 0;
  if (auto at = id.find('@'); at != std::string::npos) {
    head = id.substr(0, at);
    try {
      std::size_t used = 0;
      version = std::stoi(id.substr(at + 1), &used);
      if (used != id.size() - at - 1 || version <= 0) return nullptr;
    } catch (const std::exception&) {
      return nullptr;
    }
  }
  std::shared_lock lock(mu_);
  auto it = by_head_.find(head);
  if (it == by_head_.end() || it->second.empty()) return nullptr;
  if (version == 0) return it->second.back();
  if (version > static_cast<int>(it->second.size())) return nullptr;
  return it->second[version - 1];
}

std::shared_ptr<const SkillTemplate> Registry::lookup(const std::string& id) const {
  auto t = find(id);
  if (!t) throw Error(Errc::NotFound, "no registered skill '" + id + "'");
  return t;
}

std::vector<std::shared_ptr<const SkillTemplate>> Registry::latest() const {
  std::shared_lock lock(mu_);
  std::vector<std::shared_ptr<const SkillTemplate>> out;
  for (const auto& [head, versions] : by_head_)
    if (!versions.empty()) out.push_back(versions.back());
  return out;
}

std::vector<std::shared_ptr<const SkillTemplate>> Registry::versions(const std::string& head) const {
  std::shared_lock lock(mu_);
  auto it = by_head_.find(head);
  if (it == by_head_.end()) return {};
  return it->second;
}

bool Registry::empty() const {
  std::shared_lock lock(mu_);
  return by_head_.empty();
}

std::size_t Registry::size() const {
  std::shared_lock lock(mu_);
  return by_head_.size();
}

nlohmann::json Registry::to_json() const {
  std::shared_lock lock(mu_);
  nlohmann::json skills = nlohmann::json::array();
  for (const auto& [head, versions] : by_head_)
    for (const auto& t : versions) skills.push_back(to_registry_json(*t));
  return {{"skills", skills}};
}

Registry Registry::from_json(const nlohmann::json& j) {
  Registry r;
  for (const auto& entry : j.at("skills")) {
    SkillTemplate t = from_registry_json(entry);
    if (t.status() != SkillStatus::registered)
      throw Error(Errc::SchemaError, "registry entry " + t.qualified_id() + " is not registered");
    auto& versions = r.by_head_[t.id];
    if (t.version != static_cast<int>(versions.size()) + 1)
      throw Error(Errc::VersionConflict, "registry file has out-of-order versions for " + t.id);
    versions.push_back(std::make_shared<const SkillTemplate>(std::move(t)));
  }
  return r;
}

void Registry::save(const std::filesystem::path& p) const {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw Error(Errc::IoError, "cannot write " + p.string());
  out << to_json().dump(2) << '\n';
}

Registry Registry::load(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(Errc::IoError, "cannot read " + p.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::SchemaError, p.string() + " is not valid JSON");
  return from_json(j);
}

std::vector<std::string> filter_candidates(TerrainClass scene, const RobotState& state,
                                           const Registry& registry,
                                           const PreferenceLookup& preference,
                                           const std::optional<std::string>& last_skill) {
  struct Ranked {
    std::string id;
    double score;
  };
  std::vector<Ranked> ranked;
  const ConstraintContext ctx{state, scene, last_skill};
  for (const auto& t : registry.latest()) {
    if (t->status() != SkillStatus::registered) continue;
    if (!violated_constraints(*t, ctx).empty()) continue;
    ranked.push_back({t->id, preference ? preference(scene, t->id) : 0.5});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  std::vector<std::string> out;
  out.reserve(ranked.size());
  for (auto& r : ranked) out.push_back(std::move(r.id));
  return out;
}

SimConfig validation_config_for(const SkillTemplate& t) {
  const auto terrains = required_terrains(t);
  return SimConfig::uniform(terrains.empty() ? TerrainClass::flat : terrains.front());
}

ImportResult import_skill(const nlohmann::json& doc, Registry& registry,
                          const std::optional<SimConfig>& cfg) {
  ImportResult res;
  try {
    res.skill = parse_skill_document(doc);
  } catch (const Error& e) {
    res.error = e.what();
    return res;
  }
  res.review = review_skill(res.skill);
  if (!res.review->pass()) return res;
  res.validation = validate_in_simulation(res.skill, cfg ? *cfg : validation_config_for(res.skill));
  if (!res.validation->pass()) return res;
  try {
    res.registered_id = registry.register_skill(res.skill);
    res.skill = *registry.lookup(*res.registered_id);
  } catch (const Error& e) {
    res.error = e.what();
  }
  return res;
}

std::vector<ImportResult> import_directory(const std::filesystem::path& dir, Registry& registry) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<ImportResult> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::stringstream ss;
    ss << in.rdbuf();
    auto doc = nlohmann::json::parse(ss.str(), nullptr, false);
    if (doc.is_discarded()) {
      ImportResult bad;
      bad.error = "SchemaError: " + f.filename().string() + " is not valid JSON";
      out.push_back(std::move(bad));
      continue;
    }
    out.push_back(import_skill(doc, registry));
  }
  return out;
}

}  // namespace opengo
