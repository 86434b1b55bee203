#include "opengo/latency.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "opengo/error.hpp"

namespace opengo {
namespace {

using nlohmann::json;

std::chrono::microseconds us(double ms) {
  return std::chrono::microseconds(static_cast<std::int64_t>(std::llround(ms * 1000.0)));
}

void sleep_ms(double ms) {
  if (ms > 0) std::this_thread::sleep_for(us(ms));
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

DelayModel DelayModel::from_json(const json& j) {
  DelayModel m;
  m.base_ms = j.value("base_ms", m.base_ms);
  m.per_candidate_ms = j.value("per_candidate_ms", m.per_candidate_ms);
  m.per_step_ms = j.value("per_step_ms", m.per_step_ms);
  m.per_param_ms = j.value("per_param_ms", m.per_param_ms);
  m.skill_load_ms = j.value("skill_load_ms", m.skill_load_ms);
  m.session_init_ms = j.value("session_init_ms", m.session_init_ms);
  m.scheduling_ms = j.value("scheduling_ms", m.scheduling_ms);
  m.state_transition_ms = j.value("state_transition_ms", m.state_transition_ms);
  m.dependency_check_ms = j.value("dependency_check_ms", m.dependency_check_ms);
  for (double v : {m.base_ms, m.per_candidate_ms, m.per_step_ms, m.per_param_ms, m.skill_load_ms,
                   m.session_init_ms, m.scheduling_ms, m.state_transition_ms, m.dependency_check_ms})
    if (!std::isfinite(v) || v < 0) throw Error(Errc::BadConfig, "delay model values must be finite and >= 0");
  return m;
}

json DelayModel::to_json() const {
  return {{"base_ms", base_ms},
          {"per_candidate_ms", per_candidate_ms},
          {"per_step_ms", per_step_ms},
          {"per_param_ms", per_param_ms},
          {"skill_load_ms", skill_load_ms},
          {"session_init_ms", session_init_ms},
          {"scheduling_ms", scheduling_ms},
          {"state_transition_ms", state_transition_ms},
          {"dependency_check_ms", dependency_check_ms}};
}

CoordinationDelays DelayModel::coordination() const {
  return {us(scheduling_ms), us(state_transition_ms), us(dependency_check_ms)};
}

json MockPlannerBackend::propose(const PlannerContext& ctx) {
  double ms = 0.0;
  if (!session_ready_) {
    ms += model_.session_init_ms;
    session_ready_ = true;
  }
  json plan = rule_.propose(ctx);
  ms += model_.base_ms + model_.per_candidate_ms * static_cast<double>(ctx.candidates.size());
  for (const auto& step : plan.at("plan")) {
    const std::string skill = step.at("skill").get<std::string>();
    if (loaded_.insert(skill).second) ms += model_.skill_load_ms;
    std::size_t params = step.contains("params") ? step.at("params").size() : 0;
    for (const auto& c : ctx.candidates)
      if (c.id == skill) params = c.parameters.size();
    ms += model_.per_step_ms + model_.per_param_ms * static_cast<double>(params);
  }
  sleep_ms(ms);
  return plan;
}

void MockPlannerBackend::flush() {
  session_ready_ = false;
  loaded_.clear();
}

json LatencyTrial::to_json() const {
  return {{"label", label},
          {"skills", skills},
          {"param_count", param_count},
          {"rep", rep},
          {"cold", cold},
          {"latency_ms", latency_ms},
          {"overhead",
           {{"scheduling_ns", overhead.scheduling_ns},
            {"state_transition_ns", overhead.state_transition_ns},
            {"dependency_check_ns", overhead.dependency_check_ns}}}};
}

LatencyTrial LatencyTrial::from_json(const json& j) {
  LatencyTrial t;
  t.label = j.at("label").get<std::string>();
  t.skills = j.at("skills").get<std::vector<std::string>>();
  t.param_count = j.value("param_count", 0);
  t.rep = j.value("rep", 0);
  t.cold = j.value("cold", false);
  t.latency_ms = j.at("latency_ms").get<double>();
  if (j.contains("overhead")) {
    const auto& o = j.at("overhead");
    t.overhead.scheduling_ns = o.value("scheduling_ns", std::int64_t{0});
    t.overhead.state_transition_ns = o.value("state_transition_ns", std::int64_t{0});
    t.overhead.dependency_check_ns = o.value("dependency_check_ns", std::int64_t{0});
  }
  return t;
}

LatencyStats summarize(std::span<const double> values) {
  LatencyStats s;
  s.n = values.size();
  if (values.empty()) return s;
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  s.min = v.front();
  s.max = v.back();
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  const std::size_t n = v.size();
  s.median = n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  s.p95 = v[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

std::string canonical_instruction(const std::string& skill) {
  if (skill == "move_forward") return "move forward";
  if (skill == "turn") return "turn around";
  if (skill == "climb_stairs") return "climb the stairs";
  if (skill == "backflip" || skill == "dance" || skill == "crouch" || skill == "stand" || skill == "stop")
    return skill;
  throw Error(Errc::NotFound, "no canonical instruction for '" + skill + "'");
}

LatencyHarness::LatencyHarness(Registry registry, DelayModel model) : model_(model) {
  RuntimeConfig cfg;
  cfg.coordination = model_.coordination();
  cfg.learn = false;
  cfg.max_replans = 0;
  auto mock = std::make_unique<MockPlannerBackend>(model_);
  mock_ = mock.get();
  runtime_ = std::make_unique<Runtime>(std::move(registry), cfg, std::move(mock));
}

void LatencyHarness::flush() { mock_->flush(); }

void LatencyHarness::prepare_scene(const std::vector<std::string>& skills) {
  std::optional<std::vector<TerrainClass>> allowed;
  for (const auto& id : skills) {
    auto req = required_terrains(*runtime_->registry().lookup(id));
    if (req.empty()) continue;
    if (!allowed) {
      allowed = req;
      continue;
    }
    std::vector<TerrainClass> both;
    for (auto t : *allowed)
      if (std::find(req.begin(), req.end(), t) != req.end()) both.push_back(t);
    allowed = both;
  }
  if (allowed && allowed->empty())
    throw Error(Errc::BadConfig, "no single terrain admits every skill of the instruction");
  runtime_->resume();
  runtime_->reset_simulation(SimConfig::uniform(allowed ? allowed->front() : TerrainClass::flat));
}

LatencyTrial LatencyHarness::measure(const std::string& label, const std::string& instruction,
                                     const std::vector<std::string>& skills, int rep) {
  prepare_scene(skills);
  bool cold = !mock_->session_ready();
  for (const auto& s : skills) cold = cold || !mock_->warm(s);
  const Timestamp t0 = Timestamp::now();
  RunResult res = runtime_->run_instruction("", instruction, {}, t0);
  if (!res.error.empty()) throw Error(Errc::RuntimeDown, "trial '" + label + "': " + res.error);
  if (res.plans.size() != 1 || res.status.kind != PlanStatus::Kind::completed ||
      res.records.size() != skills.size())
    throw Error(Errc::RuntimeDown, "trial '" + label + "' did not complete as one plan");

  std::int64_t ns = res.records.front().t_execution_start.mono_ns - t0.mono_ns;
  for (std::size_t i = 1; i < res.records.size(); ++i)
    ns += res.records[i].t_execution_start.mono_ns - res.records[i - 1].t_execution_end.mono_ns;

  LatencyTrial t;
  t.label = label;
  t.skills = skills;
  for (const auto& s : skills)
    t.param_count += static_cast<int>(runtime_->registry().lookup(s)->parameters.size());
  t.rep = rep;
  t.cold = cold;
  t.latency_ms = static_cast<double>(ns) / 1e6;
  t.overhead = res.overhead;
  return t;
}

std::vector<LatencyTrial> LatencyHarness::run_single_skill_trial(const std::string& skill, int n,
                                                                 bool flush_cache_first) {
  if (n <= 0) throw Error(Errc::BadConfig, "n must be positive");
  (void)runtime_->registry().lookup(skill);
  if (flush_cache_first) flush();
  const std::string instruction = canonical_instruction(skill);
  std::vector<LatencyTrial> out;
  for (int rep = 0; rep < n; ++rep)
    out.push_back(measure(skill, instruction, {skill}, rep));
  return out;
}

CompositionResult LatencyHarness::run_composition_trial(const std::string& instruction, int n) {
  if (n <= 0) throw Error(Errc::BadConfig, "n must be positive");
  std::vector<std::string> skills;
  for (const auto& step : RuleBackend::parse_instruction(instruction)) skills.push_back(step.skill);
  if (skills.size() < 2 || skills.size() > 4)
    throw Error(Errc::BadK, "composition needs 2-4 skills, got " + std::to_string(skills.size()));

  CompositionResult out;
  std::string label;
  for (const auto& s : skills) label += (label.empty() ? "" : "+") + s;

  // Reach a stable state: one untimed composed run primes every cache.
  measure(label, instruction, skills, -1);

  for (const auto& s : skills) {
    std::vector<double> ms;
    for (const auto& t : run_single_skill_trial(s, n, false)) ms.push_back(t.latency_ms);
    out.constituent_warm_means_ms.push_back(mean_of(ms));
  }
  out.constituent_sum_ms =
      std::accumulate(out.constituent_warm_means_ms.begin(), out.constituent_warm_means_ms.end(), 0.0);

  std::vector<double> composed;
  OverheadItems sum;
  for (int rep = 0; rep < n; ++rep) {
    out.trials.push_back(measure(label, instruction, skills, rep));
    composed.push_back(out.trials.back().latency_ms);
    sum.scheduling_ns += out.trials.back().overhead.scheduling_ns;
    sum.state_transition_ns += out.trials.back().overhead.state_transition_ns;
    sum.dependency_check_ns += out.trials.back().overhead.dependency_check_ns;
  }
  out.composed_mean_ms = mean_of(composed);
  out.overhead_ms = out.composed_mean_ms - out.constituent_sum_ms;
  out.mean_items = {sum.scheduling_ns / n, sum.state_transition_ns / n, sum.dependency_check_ns / n};
  return out;
}

std::string to_csv(std::span<const LatencyTrial> trials) {
  std::ostringstream os;
  os << "label,skills,param_count,rep,cold,latency_ms\n";
  for (const auto& t : trials) {
    std::string skills;
    for (const auto& s : t.skills) skills += (skills.empty() ? "" : "+") + s;
    char ms[64];
    std::snprintf(ms, sizeof ms, "%.3f", t.latency_ms);
    os << t.label << ',' << skills << ',' << t.param_count << ',' << t.rep << ','
       << (t.cold ? "true" : "false") << ',' << ms << '\n';
  }
  return os.str();
}

void export_csv(std::span<const LatencyTrial> trials, const std::filesystem::path& out) {
  if (trials.empty()) throw Error(Errc::EmptyInput, "no trials to export");
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::IoError, "cannot write " + out.string());
  f << to_csv(trials);
  if (!f) throw Error(Errc::IoError, "write failed: " + out.string());
}

}  // namespace opengo
