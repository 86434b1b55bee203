#include "opengo/skill.hpp"

#include <set>
#include <stdexcept>

#include "opengo/error.hpp"

namespace opengo {
namespace {

using nlohmann::json;

[[noreturn]] void schema(const std::string& msg) { throw Error(Errc::SchemaError, msg); }

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) schema(where + ": missing field '" + key + "'");
  return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& where,
                           bool non_empty = true) {
  const json& v = require(obj, key, where);
  if (!v.is_string()) schema(where + "." + key + ": expected string");
  auto s = v.get<std::string>();
  if (non_empty && s.empty()) schema(where + "." + key + ": must not be empty");
  return s;
}

double require_number(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number()) schema(where + "." + key + ": expected number");
  return v.get<double>();
}

std::string_view kind_name(ParamKind k) {
  switch (k) {
    case ParamKind::continuous: return "continuous";
    case ParamKind::integer: return "integer";
    case ParamKind::enumeration: return "enum";
  }
  return "continuous";
}

ParameterSpec parse_parameter(const json& p, std::size_t index) {
  const std::string where = "parameters[" + std::to_string(index) + "]";
  if (!p.is_object()) schema(where + ": expected object");
  ParameterSpec spec;
  spec.name = require_string(p, "name", where);
  spec.unit = p.contains("unit") ? require_string(p, "unit", where, false) : "unitless";
  const std::string kind = p.contains("kind") ? require_string(p, "kind", where) : "continuous";
  if (kind == "continuous") {
    spec.kind = ParamKind::continuous;
  } else if (kind == "integer") {
    spec.kind = ParamKind::integer;
  } else if (kind == "enum") {
    spec.kind = ParamKind::enumeration;
  } else {
    schema(where + ".kind: unknown parameter kind '" + kind + "'");
  }
  if (spec.kind == ParamKind::enumeration) {
    const json& vals = require(p, "values", where);
    if (!vals.is_array() || vals.empty()) schema(where + ".values: expected non-empty array");
    for (const auto& v : vals) {
      if (!v.is_string()) schema(where + ".values: expected strings");
      spec.values.push_back(v.get<std::string>());
    }
    spec.lower = p.contains("lower") ? require_number(p, "lower", where) : 0.0;
    spec.upper = p.contains("upper") ? require_number(p, "upper", where)
                                     : static_cast<double>(spec.values.size() - 1);
    spec.default_value = p.contains("default") ? require_number(p, "default", where) : spec.lower;
  } else {
    spec.lower = require_number(p, "lower", where);
    spec.upper = require_number(p, "upper", where);
    spec.default_value = require_number(p, "default", where);
  }
  return spec;
}

template <typename T, typename F>
std::vector<T> parse_enum_list(const json& c, const char* key, const std::string& where, F conv) {
  const json& arr = require(c, key, where);
  if (!arr.is_array() || arr.empty()) schema(where + "." + key + ": expected non-empty array");
  std::vector<T> out;
  for (const auto& v : arr) {
    if (!v.is_string()) schema(where + "." + key + ": expected strings");
    auto parsed = conv(v.get<std::string>());
    if (!parsed) schema(where + "." + key + ": unknown value '" + v.get<std::string>() + "'");
    out.push_back(*parsed);
  }
  return out;
}

Constraint parse_constraint(const json& c, std::size_t index) {
  const std::string where = "constraints[" + std::to_string(index) + "]";
  if (!c.is_object()) schema(where + ": expected object");
  Constraint out;
  out.raw_kind = require_string(c, "kind", where);
  const std::string& k = out.raw_kind;
  if (k == "required_terrain") {
    out.kind = ConstraintKind::required_terrain;
    out.terrains = parse_enum_list<TerrainClass>(c, "terrains", where, terrain_from_string);
  } else if (k == "required_posture") {
    out.kind = ConstraintKind::required_posture;
    out.postures = parse_enum_list<Posture>(c, "postures", where, posture_from_string);
  } else if (k == "min_battery") {
    out.kind = ConstraintKind::min_battery;
    out.min_battery = require_number(c, "percent", where);
  } else if (k == "forbidden_prior_skill") {
    out.kind = ConstraintKind::forbidden_prior_skill;
    out.skill = require_string(c, "skill", where);
  } else if (k == "max_speed_context") {
    out.kind = ConstraintKind::max_speed_context;
    out.speed.scenes = parse_enum_list<TerrainClass>(c, "scenes", where, terrain_from_string);
    out.speed.param = c.contains("param") ? require_string(c, "param", where) : "speed";
    out.speed.max = require_number(c, "max", where);
  } else {
    out.kind = ConstraintKind::unknown;
  }
  return out;
}

json constraint_to_json(const Constraint& c) {
  json j{{"kind", c.raw_kind.empty() ? std::string(to_string(c.kind)) : c.raw_kind}};
  switch (c.kind) {
    case ConstraintKind::required_terrain: {
      json arr = json::array();
      for (auto t : c.terrains) arr.push_back(std::string(to_string(t)));
      j["terrains"] = arr;
      break;
    }
    case ConstraintKind::required_posture: {
      json arr = json::array();
      for (auto p : c.postures) arr.push_back(std::string(to_string(p)));
      j["postures"] = arr;
      break;
    }
    case ConstraintKind::min_battery: j["percent"] = c.min_battery; break;
    case ConstraintKind::forbidden_prior_skill: j["skill"] = c.skill; break;
    case ConstraintKind::max_speed_context: {
      json arr = json::array();
      for (auto t : c.speed.scenes) arr.push_back(std::string(to_string(t)));
      j["scenes"] = arr;
      j["param"] = c.speed.param;
      j["max"] = c.speed.max;
      break;
    }
    case ConstraintKind::unknown: break;
  }
  return j;
}

}  // namespace

std::string_view to_string(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::required_terrain: return "required_terrain";
    case ConstraintKind::required_posture: return "required_posture";
    case ConstraintKind::min_battery: return "min_battery";
    case ConstraintKind::forbidden_prior_skill: return "forbidden_prior_skill";
    case ConstraintKind::max_speed_context: return "max_speed_context";
    case ConstraintKind::unknown: return "unknown";
  }
  return "unknown";
}

std::string_view to_string(SkillStatus s) {
  switch (s) {
    case SkillStatus::draft: return "draft";
    case SkillStatus::reviewed: return "reviewed";
    case SkillStatus::validated: return "validated";
    case SkillStatus::registered: return "registered";
    case SkillStatus::rejected: return "rejected";
  }
  return "draft";
}

void SkillTemplate::advance(SkillStatus next) {
  const bool ok = (status_ == SkillStatus::draft && next == SkillStatus::reviewed) ||
                  (status_ == SkillStatus::reviewed && next == SkillStatus::validated) ||
                  (status_ == SkillStatus::validated && next == SkillStatus::registered) ||
                  (next == SkillStatus::rejected && status_ != SkillStatus::registered &&
                   status_ != SkillStatus::rejected);
  if (!ok) {
    throw std::logic_error("illegal skill status transition " + std::string(to_string(status_)) +
                           " -> " + std::string(to_string(next)) + " for " + id);
  }
  status_ = next;
  transitions_.push_back(next);
}

SkillTemplate SkillTemplate::with_function(FunctionRef fn) const {
  SkillTemplate copy = *this;
  if (status_ == SkillStatus::draft) {
    copy.function_ = std::move(fn);
    return copy;
  }
  copy.function_ = std::move(fn);
  copy.status_ = SkillStatus::draft;
  copy.transitions_ = {SkillStatus::draft};
  copy.version = version + 1;
  return copy;
}

void SkillTemplate::set_function(FunctionRef fn) {
  if (status_ != SkillStatus::draft)
    throw std::logic_error("function of " + id + " is pinned; use with_function()");
  function_ = std::move(fn);
}

const ParameterSpec* SkillTemplate::parameter(std::string_view name) const {
  for (const auto& p : parameters)
    if (p.name == name) return &p;
  return nullptr;
}

std::string_view skill_head(std::string_view ref) { return ref.substr(0, ref.find('@')); }

std::string SkillTemplate::qualified_id() const { return id + "@" + std::to_string(version); }

bool SkillTemplate::same_content(const SkillTemplate& o) const {
  return id == o.id && label == o.label && parameters == o.parameters &&
         constraints == o.constraints && prompts == o.prompts && function_ == o.function_;
}

bool Report::pass() const {
  for (const auto& f : findings)
    if (f.severity == Severity::error) return false;
  return true;
}

bool Report::has(std::string_view code) const {
  for (const auto& f : findings)
    if (f.code == code) return true;
  return false;
}

SkillTemplate parse_skill_document(const json& doc) {
  if (!doc.is_object()) schema("document: expected object");
  static const std::set<std::string> kKeys = {"head", "parameters", "constraints", "function",
                                              "prompts"};
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (!kKeys.count(it.key())) schema("document: unexpected key '" + it.key() + "'");

  SkillTemplate t;
  const json& head = require(doc, "head", "document");
  if (!head.is_object()) schema("head: expected object");
  t.id = require_string(head, "id", "head");
  if (t.id.empty() || t.id.find_first_of("@ \t\r\n") != std::string::npos)
    schema("head.id: must be non-empty without whitespace or '@'");
  t.label = require_string(head, "label", "head");

  const json& params = require(doc, "parameters", "document");
  if (!params.is_array()) schema("parameters: expected array");
  std::set<std::string> names;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto spec = parse_parameter(params[i], i);
    if (!names.insert(spec.name).second)
      throw Error(Errc::DuplicateParameter, t.id + ": parameter '" + spec.name + "' declared twice");
    t.parameters.push_back(std::move(spec));
  }

  const json& cons = require(doc, "constraints", "document");
  if (!cons.is_array()) schema("constraints: expected array");
  for (std::size_t i = 0; i < cons.size(); ++i) t.constraints.push_back(parse_constraint(cons[i], i));

  const json& fn = require(doc, "function", "document");
  if (!fn.is_object()) schema("function: expected object");
  t.set_function({require_string(fn, "executor", "function"),
                  require_string(fn, "digest", "function")});

  t.prompts = require_string(doc, "prompts", "document");
  return t;
}

SkillTemplate parse_skill_document(std::string_view text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) schema("document is not valid JSON");
  return parse_skill_document(doc);
}

json to_document(const SkillTemplate& t) {
  json params = json::array();
  for (const auto& p : t.parameters) {
    json pj{{"name", p.name},       {"unit", p.unit},   {"kind", std::string(kind_name(p.kind))},
            {"lower", p.lower},     {"upper", p.upper}, {"default", p.default_value}};
    if (p.kind == ParamKind::enumeration) pj["values"] = p.values;
    params.push_back(std::move(pj));
  }
  json cons = json::array();
  for (const auto& c : t.constraints) cons.push_back(constraint_to_json(c));
  return {{"head", {{"id", t.id}, {"label", t.label}}},
          {"parameters", params},
          {"constraints", cons},
          {"function", {{"executor", t.function().executor}, {"digest", t.function().digest}}},
          {"prompts", t.prompts}};
}

json to_registry_json(const SkillTemplate& t) {
  json transitions = json::array();
  for (auto s : t.transitions()) transitions.push_back(std::string(to_string(s)));
  return {{"document", to_document(t)},
          {"version", t.version},
          {"status", std::string(to_string(t.status()))},
          {"transitions", transitions}};
}

SkillTemplate from_registry_json(const json& j) {
  SkillTemplate t = parse_skill_document(j.at("document"));
  t.version = j.at("version").get<int>();
  // Replay the recorded transitions so the audit trail survives persistence.
  const auto& transitions = j.at("transitions");
  for (std::size_t i = 1; i < transitions.size(); ++i) {
    const auto name = transitions[i].get<std::string>();
    for (auto s : {SkillStatus::reviewed, SkillStatus::validated, SkillStatus::registered,
                   SkillStatus::rejected})
      if (to_string(s) == name) t.advance(s);
  }
  return t;
}

json to_json(const Report& r) {
  json findings = json::array();
  for (const auto& f : r.findings) {
    const char* sev = f.severity == Severity::error     ? "error"
                      : f.severity == Severity::warning ? "warning"
                                                        : "info";
    findings.push_back({{"code", f.code}, {"severity", sev}, {"message", f.message}});
  }
  return {{"subject", r.subject}, {"pass", r.pass()}, {"findings", findings}};
}

}  // namespace opengo
