#include "opengo/dispatcher.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <regex>

#include "opengo/error.hpp"

namespace opengo {
namespace {

using nlohmann::json;

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

void add(std::vector<Finding>& out, std::string code, std::string msg) {
  out.push_back({std::move(code), Severity::error, std::move(msg)});
}

bool integral(double v) { return std::floor(v) == v; }

// Numbers in instructions: digits or small number words.
constexpr const char* kNumber = R"((\d+(?:\.\d+)?|one|two|three|four|five|six|seven|eight|nine|ten|half a|a half))";

double parse_number(const std::string& s) {
  static const std::pair<const char*, double> kWords[] = {
      {"one", 1},  {"two", 2},   {"three", 3}, {"four", 4}, {"five", 5},       {"six", 6},
      {"seven", 7}, {"eight", 8}, {"nine", 9},  {"ten", 10}, {"half a", 0.5}, {"a half", 0.5}};
  for (const auto& [w, v] : kWords)
    if (s == w) return v;
  return std::stod(s);
}

std::optional<double> capture(const std::string& clause, const std::string& pattern) {
  std::smatch m;
  if (std::regex_search(clause, m, std::regex(pattern))) return parse_number(m[1].str());
  return std::nullopt;
}

/// One lexicon clause -> one step, or nullopt.
std::optional<PlanStep> parse_clause(const std::string& clause) {
  const std::string num = kNumber;
  auto has = [&](const char* pattern) { return std::regex_search(clause, std::regex(pattern)); };

  if (has(R"(\bturn(ing)?\s+around\b|\bturn\s+back\b|\babout[- ]face\b)")) {
    return PlanStep{"turn", {{"angle", std::numbers::pi}}};
  }
  if (has(R"(\b(turn|rotate)\b)")) {
    PlanStep s{"turn", {}};
    double sign = has(R"(\bright\b|\bclockwise\b)") ? -1.0 : 1.0;
    if (auto deg = capture(clause, num + R"(\s*(?:degrees?|deg)\b)")) {
      s.params["angle"] = sign * *deg * std::numbers::pi / 180.0;
    } else if (has(R"(\b(left|right)\b)")) {
      s.params["angle"] = sign * std::numbers::pi / 2.0;
    }
    return s;
  }
  if (has(R"(\bback\s*-?\s*flip\b|\bflip\b|\bsomersault\b)")) return PlanStep{"backflip", {}};
  if (has(R"(\bdanc(e|ing)\b)")) {
    PlanStep s{"dance", {}};
    if (auto d = capture(clause, num + R"(\s*(?:seconds?|secs?|s)\b)")) s.params["duration"] = *d;
    return s;
  }
  if (has(R"(\bclimb\b|\bstairs\b|\bupstairs\b)")) {
    PlanStep s{"climb_stairs", {}};
    if (auto n = capture(clause, num + R"(\s*(?:steps?|stairs)\b)")) s.params["steps"] = *n;
    return s;
  }
  if (has(R"(\b(move|go|walk|head|step)\s+(forward|ahead|straight)\b|^forward\b|\badvance\b)")) {
    PlanStep s{"move_forward", {}};
    if (auto d = capture(clause, num + R"(\s*(?:meters?|metres?|m)\b)")) s.params["distance"] = *d;
    if (auto v = capture(clause, R"(\bat\s+)" + num + R"(\s*(?:m/s|meters? per second))")) s.params["speed"] = *v;
    return s;
  }
  if (has(R"(\bcrouch\b|\bsit(\s+down)?\b|\bget\s+down\b|\bduck\b)")) return PlanStep{"crouch", {}};
  if (has(R"(\bstand\b|\bget\s+up\b)")) return PlanStep{"stand", {}};
  if (has(R"(\bstop\b|\bhalt\b|\bfreeze\b)")) return PlanStep{"stop", {}};
  return std::nullopt;
}

}  // namespace

// ---------------------------------------------------------------------------
// Context

bool PlannerContext::is_candidate(const std::string& id) const {
  return std::any_of(candidates.begin(), candidates.end(),
                     [&](const CandidateInfo& c) { return c.id == id; });
}

bool PlannerContext::in_library(const std::string& id) const {
  return std::find(library.begin(), library.end(), id) != library.end();
}

json PlannerContext::to_json() const {
  json cands = json::array();
  for (const auto& c : candidates) {
    json params = json::array();
    for (const auto& p : c.parameters)
      params.push_back({{"name", p.name},
                        {"unit", p.unit},
                        {"lower", p.lower},
                        {"upper", p.upper},
                        {"default", p.default_value}});
    cands.push_back({{"id", c.id}, {"label", c.label}, {"prompts", c.prompts}, {"parameters", params}});
  }
  json history = json::array();
  for (const auto& r : recent_history) history.push_back(opengo::to_json(r));
  return {{"task", task},
          {"instruction", instruction},
          {"scene", std::string(opengo::to_string(scene))},
          {"state", opengo::to_json(state)},
          {"last_skill", last_skill ? json(*last_skill) : json(nullptr)},
          {"candidates", cands},
          {"library", library},
          {"recent_history", history},
          {"remaining", steps_to_wire(remaining)["plan"]},
          {"excluded", excluded},
          {"feedback", feedback}};
}

std::string PlannerContext::serialize() const { return to_json().dump(); }

PlannerContext build_planner_context(const std::string& task, const std::string& instruction,
                                     TerrainClass scene, const RobotState& state,
                                     const Registry& registry,
                                     const std::vector<ExecutionRecord>& history,
                                     const PreferenceLookup& preference, std::size_t window) {
  PlannerContext ctx;
  ctx.task = task;
  ctx.instruction = instruction;
  ctx.scene = scene;
  ctx.state = state;
  if (!history.empty()) ctx.last_skill = history.back().skill;
  const std::size_t keep = std::min(window, history.size());
  ctx.recent_history.assign(history.end() - static_cast<std::ptrdiff_t>(keep), history.end());
  for (const auto& id : filter_candidates(scene, state, registry, preference, ctx.last_skill)) {
    auto t = registry.lookup(id);
    ctx.candidates.push_back({t->id, t->label, t->prompts, t->parameters});
  }
  for (const auto& t : registry.latest()) ctx.library.push_back(t->id);
  return ctx;
}

// ---------------------------------------------------------------------------
// Plans

std::string_view to_string(PlanOrigin o) {
  switch (o) {
    case PlanOrigin::llm: return "llm";
    case PlanOrigin::rule: return "rule";
    case PlanOrigin::replan: return "replan";
  }
  return "rule";
}

json steps_to_wire(const std::vector<PlanStep>& steps) {
  json arr = json::array();
  for (const auto& s : steps) arr.push_back({{"skill", s.skill}, {"params", json(s.params)}});
  return {{"plan", arr}};
}

json DispatchPlan::to_wire() const { return steps_to_wire(steps); }

json DispatchPlan::to_json() const {
  json j = to_wire();
  j["id"] = id;
  j["origin"] = std::string(opengo::to_string(origin));
  j["created"] = iso8601(created.wall_ns);
  return j;
}

// ---------------------------------------------------------------------------
// Rule backend

std::vector<PlanStep> RuleBackend::parse_instruction(const std::string& text) {
  std::string t = lower(text);
  // Clause separators: punctuation, "then", "and", "after that".
  static const std::regex kSplit(R"(\s*(?:,|;|\.(?!\d)|!|\band then\b|\bthen\b|\bafter that\b|\band\b)\s*)");
  std::vector<PlanStep> steps;
  std::sregex_token_iterator it(t.begin(), t.end(), kSplit, -1), end;
  for (; it != end; ++it) {
    std::string clause = it->str();
    clause = std::regex_replace(clause, std::regex(R"(^\s+|\s+$)"), "");
    clause = std::regex_replace(clause, std::regex(R"(^(please|now|first|finally|next)\s+)"), "");
    if (clause.empty()) continue;
    auto step = parse_clause(clause);
    if (!step) throw Error(Errc::NoMatch, "no lexicon entry for '" + clause + "'");
    steps.push_back(std::move(*step));
  }
  if (steps.empty()) throw Error(Errc::NoMatch, "empty instruction");
  return steps;
}

std::vector<std::string> RuleBackend::alternates(const std::string& skill) {
  if (skill == "climb_stairs") return {"move_forward"};
  if (skill == "backflip") return {"dance"};
  return {};
}

json RuleBackend::propose(const PlannerContext& ctx) {
  std::vector<PlanStep> steps;
  if (!ctx.remaining.empty()) {
    steps = ctx.remaining;
  } else {
    try {
      steps = parse_instruction(ctx.instruction.empty() ? ctx.task : ctx.instruction);
    } catch (const Error&) {
      if (ctx.instruction.empty() || ctx.task.empty()) throw;
      steps = parse_instruction(ctx.task);
    }
  }

  auto usable = [&](const std::string& skill, std::size_t index) {
    if (std::find(ctx.excluded.begin(), ctx.excluded.end(), skill) != ctx.excluded.end()) return false;
    return index == 0 ? ctx.is_candidate(skill) : ctx.in_library(skill);
  };
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (usable(steps[i].skill, i)) continue;
    bool replaced = false;
    for (const auto& alt : alternates(steps[i].skill)) {
      if (usable(alt, i)) {
        steps[i] = PlanStep{alt, {}};
        replaced = true;
        break;
      }
    }
    if (!replaced)
      throw Error(Errc::NoMatch, "'" + steps[i].skill + "' is not executable here and has no alternate");
  }
  return steps_to_wire(steps);
}

// ---------------------------------------------------------------------------
// Binding and validation

Params bind_parameters(const SkillTemplate& skill, const Params& raw, const DefaultLookup& learned) {
  for (const auto& [name, value] : raw) {
    const ParameterSpec* spec = skill.parameter(name);
    if (!spec) throw Error(Errc::UnknownParameter, skill.id + " has no parameter '" + name + "'");
    if (!std::isfinite(value) || !spec->contains(value))
      throw Error(Errc::OutOfRange, skill.id + "." + name + "=" + fmt_num(value) + " outside [" +
                                        fmt_num(spec->lower) + ", " + fmt_num(spec->upper) + "]");
    if (spec->kind != ParamKind::continuous && !integral(value))
      throw Error(Errc::OutOfRange, skill.id + "." + name + " must be integral");
  }
  Params bound;
  for (const auto& spec : skill.parameters) {
    if (auto it = raw.find(spec.name); it != raw.end()) {
      bound[spec.name] = it->second;
      continue;
    }
    double v = spec.default_value;
    if (learned) {
      if (auto l = learned(skill.id, spec.name); l && spec.contains(*l)) v = *l;
    }
    if (spec.kind != ParamKind::continuous) v = std::round(v);
    if (!spec.contains(v))
      throw Error(Errc::OutOfRange, skill.id + "." + spec.name + " default outside its bounds");
    bound[spec.name] = v;
  }
  return bound;
}

PlanValidation validate_plan(const json& raw, const Registry& registry, const RobotState& state,
                             TerrainClass scene, const std::optional<std::string>& last_skill,
                             const DefaultLookup& learned, std::size_t max_steps) {
  PlanValidation v;
  if (!raw.is_object() || !raw.contains("plan") || !raw.at("plan").is_array()) {
    add(v.findings, "MALFORMED_PLAN", "proposal must be an object with a 'plan' array");
    return v;
  }
  const json& plan = raw.at("plan");
  if (plan.empty()) {
    add(v.findings, "EMPTY_PLAN", "plan has no steps");
    return v;
  }
  if (plan.size() > max_steps) {
    add(v.findings, "PLAN_TOO_LONG",
        std::to_string(plan.size()) + " steps exceed the limit of " + std::to_string(max_steps));
    return v;
  }

  std::optional<std::string> prev = last_skill;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const std::string where = "step " + std::to_string(i + 1);
    const json& step = plan[i];
    if (!step.is_object() || !step.contains("skill") || !step.at("skill").is_string()) {
      add(v.findings, "MALFORMED_STEP", where + ": expected {skill, params}");
      prev.reset();
      continue;
    }
    const std::string skill_id = step.at("skill").get<std::string>();
    auto tmpl = registry.find(skill_id);
    if (!tmpl || tmpl->status() != SkillStatus::registered) {
      add(v.findings, "UNKNOWN_SKILL", where + ": '" + skill_id + "' is not a registered skill");
      prev = skill_id;
      continue;
    }

    Params raw_params;
    bool params_ok = true;
    if (step.contains("params")) {
      const json& params = step.at("params");
      if (!params.is_object()) {
        add(v.findings, "MALFORMED_STEP", where + ": params must be an object");
        params_ok = false;
      } else {
        for (auto it = params.begin(); it != params.end(); ++it) {
          const std::string& name = it.key();
          const ParameterSpec* spec = tmpl->parameter(name);
          if (!spec) {
            add(v.findings, "UNKNOWN_PARAMETER", where + ": " + skill_id + " has no parameter '" + name + "'");
            params_ok = false;
            continue;
          }
          double value = 0.0;
          if (it->is_string() && spec->kind == ParamKind::enumeration) {
            auto pos = std::find(spec->values.begin(), spec->values.end(), it->get<std::string>());
            if (pos == spec->values.end()) {
              add(v.findings, "PARAM_OUT_OF_RANGE", where + ": " + name + " has no value '" + it->get<std::string>() + "'");
              params_ok = false;
              continue;
            }
            value = static_cast<double>(pos - spec->values.begin());
          } else if (!it->is_number()) {
            add(v.findings, "PARAM_NOT_NUMBER", where + ": " + name + " must be a number");
            params_ok = false;
            continue;
          } else {
            value = it->get<double>();
          }
          if (!std::isfinite(value)) {
            add(v.findings, "PARAM_NOT_FINITE", where + ": " + name + " is not finite");
            params_ok = false;
          } else if (!spec->contains(value)) {
            add(v.findings, "PARAM_OUT_OF_RANGE", where + ": " + name + "=" + fmt_num(value) +
                                                       " outside [" + fmt_num(spec->lower) + ", " +
                                                       fmt_num(spec->upper) + "]");
            params_ok = false;
          } else if (spec->kind != ParamKind::continuous && !integral(value)) {
            add(v.findings, "PARAM_NOT_INTEGRAL", where + ": " + name + " must be integral");
            params_ok = false;
          } else {
            raw_params[name] = value;
          }
        }
      }
    }

    Params bound;
    if (params_ok) {
      try {
        bound = bind_parameters(*tmpl, raw_params, learned);
      } catch (const Error& e) {
        add(v.findings, "PARAM_OUT_OF_RANGE", where + ": " + e.what());
        params_ok = false;
      }
    }

    for (const auto& c : tmpl->constraints) {
      if (c.kind == ConstraintKind::forbidden_prior_skill) {
        if (prev && skill_head(*prev) == c.skill)
          add(v.findings, "FORBIDDEN_TRANSITION", where + ": " + skill_id + " may not follow " + c.skill);
        continue;
      }
      if (i != 0) continue;
      if (c.kind == ConstraintKind::max_speed_context) {
        if (!params_ok) continue;
        const bool in_scene = std::find(c.speed.scenes.begin(), c.speed.scenes.end(), scene) != c.speed.scenes.end();
        auto it = bound.find(c.speed.param);
        if (in_scene && it != bound.end() && it->second > c.speed.max)
          add(v.findings, "SPEED_CONTEXT", where + ": " + c.speed.param + "=" + fmt_num(it->second) +
                                               " exceeds " + fmt_num(c.speed.max) + " on " +
                                               std::string(to_string(scene)));
        continue;
      }
      if (!constraint_satisfied(c, *tmpl, {state, scene, last_skill}))
        add(v.findings, "PRECONDITION_FAILED",
            where + ": " + skill_id + " " + std::string(to_string(c.kind)) + " does not hold");
    }

    if (params_ok) v.steps.push_back({skill_id, std::move(bound)});
    prev = skill_id;
  }
  if (!v.ok()) v.steps.clear();
  return v;
}

// ---------------------------------------------------------------------------
// Dispatcher

Dispatcher::Dispatcher(const Registry& registry, const PreferenceStore* prefs, DispatcherConfig cfg)
    : registry_(registry), prefs_(prefs), cfg_(cfg) {}

std::string Dispatcher::next_plan_id() {
  char buf[32];
  std::snprintf(buf, sizeof buf, "plan-%06llu", static_cast<unsigned long long>(++counter_));
  return buf;
}

DefaultLookup Dispatcher::learned_lookup(TerrainClass scene) const {
  if (!prefs_) return {};
  const PreferenceStore* prefs = prefs_;
  return [prefs, scene](const std::string& skill, const std::string& param) {
    return prefs->learned_default(skill, param, scene);
  };
}

DispatchPlan Dispatcher::plan(PlannerContext ctx, PlannerBackend& backend) {
  last_calls_ = 0;
  last_fallback_ = false;
  last_findings_.clear();
  const auto learned = learned_lookup(ctx.scene);

  auto accept = [&](const json& raw, PlanOrigin origin) -> std::optional<DispatchPlan> {
    auto v = validate_plan(raw, registry_, ctx.state, ctx.scene, ctx.last_skill, learned,
                           cfg_.max_plan_steps);
    if (!v.ok()) {
      for (const auto& f : v.findings) {
        ctx.feedback.push_back(f.code + ": " + f.message);
        last_findings_.push_back(f);
      }
      return std::nullopt;
    }
    return DispatchPlan{next_plan_id(), std::move(v.steps), origin, Timestamp::now()};
  };

  // A deterministic backend gives the same answer on retry; one call is enough.
  const int attempts = backend.origin() == PlanOrigin::rule ? 1 : cfg_.max_attempts;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    ++last_calls_;
    const Clock t0 = mono_now_ns();
    json raw;
    try {
      raw = backend.propose(ctx);
    } catch (const std::exception& e) {
      ctx.feedback.push_back("attempt " + std::to_string(attempt) + " failed: " + e.what());
      last_findings_.push_back({"BACKEND_FAILURE", Severity::error, e.what()});
      continue;
    }
    const auto elapsed = std::chrono::nanoseconds(mono_now_ns() - t0);
    if (elapsed > cfg_.timeout) {
      ctx.feedback.push_back("attempt " + std::to_string(attempt) + " timed out");
      last_findings_.push_back({"BACKEND_TIMEOUT", Severity::error, "planner exceeded its timeout"});
      continue;
    }
    if (auto p = accept(raw, backend.origin())) return *p;
  }

  if (backend.origin() != PlanOrigin::rule) {
    last_fallback_ = true;
    try {
      if (auto p = accept(rule_.propose(ctx), PlanOrigin::rule)) return *p;
    } catch (const Error& e) {
      last_findings_.push_back({"RULE_NO_MATCH", Severity::error, e.what()});
    }
  }
  std::string why = "no valid plan for '" + (ctx.instruction.empty() ? ctx.task : ctx.instruction) + "'";
  if (!last_findings_.empty()) why += " (last: " + last_findings_.back().code + ")";
  throw Error(Errc::NoFeasiblePlan, why);
}

DispatchPlan Dispatcher::replan(const FeedbackSignal& fb, const DispatchPlan& current,
                                PlannerContext ctx, PlannerBackend& backend) {
  if (fb.plan_id != current.id) throw Error(Errc::UnknownPlan, "feedback for " + fb.plan_id + " on " + current.id);
  const int n = static_cast<int>(current.steps.size());
  if (fb.step < 1 || fb.step > n) throw Error(Errc::UnknownPlan, "step " + std::to_string(fb.step) + " not in plan");

  if (fb.kind == FeedbackSignal::Kind::completion) {
    last_calls_ = 0;
    if (fb.step == n) throw Error(Errc::NoFeasiblePlan, "plan already complete");
    DispatchPlan next{next_plan_id(), {current.steps.begin() + fb.step, current.steps.end()},
                      PlanOrigin::replan, Timestamp::now()};
    return next;
  }

  const PlanStep& failed = current.steps[fb.step - 1];
  ctx.remaining.assign(current.steps.begin() + (fb.step - 1), current.steps.end());
  if (std::find(ctx.excluded.begin(), ctx.excluded.end(), failed.skill) == ctx.excluded.end())
    ctx.excluded.push_back(failed.skill);
  // Drop excluded skills from the candidate list the planner sees.
  ctx.candidates.erase(std::remove_if(ctx.candidates.begin(), ctx.candidates.end(),
                                      [&](const CandidateInfo& c) {
                                        return std::find(ctx.excluded.begin(), ctx.excluded.end(),
                                                         c.id) != ctx.excluded.end();
                                      }),
                       ctx.candidates.end());
  const std::string reason = fb.kind == FeedbackSignal::Kind::error ? fb.error_code : "HUMAN_REJECT";
  ctx.feedback.push_back("step " + std::to_string(fb.step) + " (" + failed.skill + ") failed: " + reason);
  if (ctx.candidates.empty()) throw Error(Errc::NoFeasiblePlan, "no surviving candidates after " + reason);

  DispatchPlan next = plan(std::move(ctx), backend);
  next.origin = PlanOrigin::replan;
  return next;
}

}  // namespace opengo
