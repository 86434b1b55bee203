#include "opengo/learning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "opengo/error.hpp"
#include "opengo/skill_library.hpp"

namespace opengo {

PreferenceStore::PreferenceStore(const PreferenceStore& o) {
  std::lock_guard lock(o.mu_);
  cfg_ = o.cfg_;
  pref_ = o.pref_;
  defaults_ = o.defaults_;
}

PreferenceStore& PreferenceStore::operator=(const PreferenceStore& o) {
  if (this == &o) return *this;
  std::scoped_lock lock(mu_, o.mu_);
  cfg_ = o.cfg_;
  pref_ = o.pref_;
  defaults_ = o.defaults_;
  return *this;
}

double PreferenceStore::preference(TerrainClass scene, const std::string& skill) const {
  std::lock_guard lock(mu_);
  auto it = pref_.find({scene, skill});
  return it == pref_.end() ? cfg_.initial_score : it->second.value;
}

std::size_t PreferenceStore::preference_count(TerrainClass scene, const std::string& skill) const {
  std::lock_guard lock(mu_);
  auto it = pref_.find({scene, skill});
  return it == pref_.end() ? 0 : it->second.count;
}

double PreferenceStore::update_dispatch_preference(TerrainClass scene, const std::string& skill,
                                                   double outcome) {
  std::lock_guard lock(mu_);
  auto [it, inserted] = pref_.try_emplace({scene, skill}, Score{cfg_.initial_score, 0});
  Score& s = it->second;
  s.value = std::clamp((1.0 - cfg_.alpha) * s.value + cfg_.alpha * outcome, 0.0, 1.0);
  ++s.count;
  return s.value;
}

double PreferenceStore::update_param_default(const SkillTemplate& skill, const std::string& param,
                                             TerrainClass scene, double value, bool success) {
  const ParameterSpec* spec = skill.parameter(param);
  if (!spec) throw Error(Errc::UnknownParameter, skill.id + " has no parameter '" + param + "'");
  if (!std::isfinite(value) || !spec->contains(value))
    throw Error(Errc::OutOfRange, skill.id + "." + param + "=" + std::to_string(value) +
                                      " outside [" + std::to_string(spec->lower) + ", " +
                                      std::to_string(spec->upper) + "]");
  std::lock_guard lock(mu_);
  auto [it, inserted] =
      defaults_.try_emplace({skill.id, param, scene}, Score{spec->default_value, 0});
  Score& d = it->second;
  if (success) {
    d.value = std::clamp((1.0 - cfg_.beta) * d.value + cfg_.beta * value, spec->lower, spec->upper);
    ++d.count;
  }
  return d.value;
}

std::optional<double> PreferenceStore::learned_default(const std::string& skill,
                                                       const std::string& param,
                                                       TerrainClass scene) const {
  std::lock_guard lock(mu_);
  auto it = defaults_.find({skill, param, scene});
  if (it == defaults_.end() || it->second.count == 0) return std::nullopt;
  return it->second.value;
}

void PreferenceStore::observe(const ExecutionRecord& r, const Registry& registry) {
  if (r.outcome == OutcomeKind::preempted) return;
  const bool success = r.outcome == OutcomeKind::completed;
  update_dispatch_preference(r.scene, r.skill, success ? 1.0 : 0.0);
  if (!success) return;
  auto skill = registry.find(r.skill);
  if (!skill) return;
  for (const auto& [name, value] : r.params)
    if (skill->parameter(name) && skill->parameter(name)->contains(value))
      update_param_default(*skill, name, r.scene, value, true);
}

PreferenceStore PreferenceStore::replay(std::span<const ExecutionRecord> records,
                                        const Registry& registry, LearningConfig cfg) {
  PreferenceStore store(cfg);
  for (const auto& r : records) store.observe(r, registry);
  return store;
}

AppliedUpdates PreferenceStore::ingest_human_feedback(const HumanFeedback& msg,
                                                      std::span<const ExecutionRecord> records,
                                                      const Registry& registry) {
  AppliedUpdates out;
  auto flagged = [&]() -> const ExecutionRecord* {
    if (records.empty()) return nullptr;
    if (msg.step == 0) return &records.back();
    for (const auto& r : records)
      if (r.step == msg.step) return &r;
    return nullptr;
  };

  switch (msg.verdict) {
    case Verdict::approve:
      for (const auto& r : records) {
        if (r.outcome != OutcomeKind::completed) continue;
        out.preference.push_back(
            {r.scene, r.skill, 1.0, update_dispatch_preference(r.scene, r.skill, 1.0)});
      }
      break;
    case Verdict::reject: {
      const ExecutionRecord* r = flagged();
      if (!r) throw Error(Errc::UnknownPlan, "no executed step " + std::to_string(msg.step));
      out.preference.push_back(
          {r->scene, r->skill, 0.0, update_dispatch_preference(r->scene, r->skill, 0.0)});
      out.replan_requested = true;
      break;
    }
    case Verdict::correct: {
      const ExecutionRecord* r = flagged();
      if (!r) throw Error(Errc::UnknownPlan, "no executed step " + std::to_string(msg.step));
      auto skill = registry.lookup(r->skill);
      // Validate every override before touching the store.
      for (const auto& [name, value] : msg.overrides) {
        const ParameterSpec* spec = skill->parameter(name);
        if (!spec) throw Error(Errc::UnknownParameter, skill->id + " has no parameter '" + name + "'");
        if (!std::isfinite(value) || !spec->contains(value))
          throw Error(Errc::OutOfRange, skill->id + "." + name + "=" + std::to_string(value) +
                                            " outside [" + std::to_string(spec->lower) + ", " +
                                            std::to_string(spec->upper) + "]");
      }
      out.preference.push_back(
          {r->scene, r->skill, 0.0, update_dispatch_preference(r->scene, r->skill, 0.0)});
      PlanStep corrected{r->skill, r->params};
      for (const auto& [name, value] : msg.overrides) corrected.params[name] = value;
      out.corrected_step = corrected;
      out.corrected_scene = r->scene;
      break;
    }
  }
  return out;
}

void PreferenceStore::complete_correction(const PlanStep& corrected, TerrainClass scene,
                                          const Registry& registry) {
  auto skill = registry.lookup(corrected.skill);
  for (const auto& [name, value] : corrected.params) update_param_default(*skill, name, scene, value, true);
}

void PreferenceStore::reset() {
  std::lock_guard lock(mu_);
  pref_.clear();
  defaults_.clear();
}

nlohmann::json PreferenceStore::to_json() const {
  std::lock_guard lock(mu_);
  nlohmann::json prefs = nlohmann::json::array();
  for (const auto& [key, s] : pref_)
    prefs.push_back({{"scene", std::string(opengo::to_string(key.first))},
                     {"skill", key.second},
                     {"score", s.value},
                     {"count", s.count}});
  nlohmann::json defs = nlohmann::json::array();
  for (const auto& [key, s] : defaults_)
    defs.push_back({{"skill", std::get<0>(key)},
                    {"param", std::get<1>(key)},
                    {"scene", std::string(opengo::to_string(std::get<2>(key)))},
                    {"value", s.value},
                    {"count", s.count}});
  return {{"config", {{"alpha", cfg_.alpha}, {"beta", cfg_.beta}, {"initial_score", cfg_.initial_score}}},
          {"preferences", prefs},
          {"param_defaults", defs}};
}

PreferenceStore PreferenceStore::from_json(const nlohmann::json& j) {
  LearningConfig cfg;
  if (j.contains("config")) {
    const auto& c = j.at("config");
    cfg.alpha = c.value("alpha", cfg.alpha);
    cfg.beta = c.value("beta", cfg.beta);
    cfg.initial_score = c.value("initial_score", cfg.initial_score);
  }
  PreferenceStore s(cfg);
  auto scene_of = [](const nlohmann::json& e) {
    auto t = terrain_from_string(e.at("scene").get<std::string>());
    if (!t) throw Error(Errc::SchemaError, "unknown scene in learning_state");
    return *t;
  };
  for (const auto& e : j.value("preferences", nlohmann::json::array()))
    s.pref_[{scene_of(e), e.at("skill").get<std::string>()}] =
        Score{std::clamp(e.at("score").get<double>(), 0.0, 1.0), e.value("count", std::size_t{0})};
  for (const auto& e : j.value("param_defaults", nlohmann::json::array()))
    s.defaults_[{e.at("skill").get<std::string>(), e.at("param").get<std::string>(), scene_of(e)}] =
        Score{e.at("value").get<double>(), e.value("count", std::size_t{0})};
  return s;
}

void PreferenceStore::save(const std::filesystem::path& p) const {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw Error(Errc::IoError, "cannot write " + p.string());
  out << to_json().dump(2) << '\n';
}

PreferenceStore PreferenceStore::load(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(Errc::IoError, "cannot read " + p.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::SchemaError, p.string() + " is not valid JSON");
  return from_json(j);
}

bool PreferenceStore::operator==(const PreferenceStore& o) const {
  if (this == &o) return true;
  std::scoped_lock lock(mu_, o.mu_);
  return pref_ == o.pref_ && defaults_ == o.defaults_;
}

}  // namespace opengo
