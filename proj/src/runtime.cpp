#include "opengo/runtime.hpp"

#include <thread>

#include "opengo/error.hpp"

namespace opengo {
namespace {

using nlohmann::json;

std::int64_t pause_for(std::chrono::microseconds d) {
  const Clock t0 = mono_now_ns();
  if (d.count() > 0) std::this_thread::sleep_for(d);
  return mono_now_ns() - t0;
}

json step_payload(const DispatchPlan& plan, int step_no) {
  const auto& s = plan.steps[step_no - 1];
  return {{"plan_id", plan.id}, {"step", step_no}, {"skill", s.skill}, {"params", json(s.params)}};
}

}  // namespace

std::string_view to_string(UpdateKind k) {
  switch (k) {
    case UpdateKind::plan_proposed: return "plan_proposed";
    case UpdateKind::step_started: return "step_started";
    case UpdateKind::step_completed: return "step_completed";
    case UpdateKind::step_failed: return "step_failed";
    case UpdateKind::plan_done: return "plan_done";
    case UpdateKind::estop: return "estop";
    case UpdateKind::ask_feedback: return "ask_feedback";
  }
  return "plan_done";
}

std::optional<UpdateKind> update_kind_from_string(std::string_view s) {
  for (auto k : {UpdateKind::plan_proposed, UpdateKind::step_started, UpdateKind::step_completed,
                 UpdateKind::step_failed, UpdateKind::plan_done, UpdateKind::estop,
                 UpdateKind::ask_feedback})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

RuntimeConfig RuntimeConfig::from_json(const json& j) {
  RuntimeConfig cfg;
  if (j.contains("sim")) cfg.sim = SimConfig::from_json(j.at("sim"));
  if (j.contains("safety")) cfg.sim.safety = safety::limits_from_json(j.at("safety"));
  if (j.contains("dispatcher")) {
    const auto& d = j.at("dispatcher");
    cfg.dispatcher.max_attempts = d.value("max_attempts", cfg.dispatcher.max_attempts);
    cfg.dispatcher.timeout = std::chrono::milliseconds(
        d.value("timeout_ms", static_cast<std::int64_t>(cfg.dispatcher.timeout.count())));
    cfg.dispatcher.history_window = d.value("history_window", cfg.dispatcher.history_window);
  }
  if (j.contains("learning")) {
    const auto& l = j.at("learning");
    cfg.learning.alpha = l.value("alpha", cfg.learning.alpha);
    cfg.learning.beta = l.value("beta", cfg.learning.beta);
    cfg.learning.initial_score = l.value("initial_score", cfg.learning.initial_score);
  }
  if (j.contains("log_path")) cfg.log_path = j.at("log_path").get<std::string>();
  cfg.max_replans = j.value("max_replans", cfg.max_replans);
  cfg.learn = j.value("learn", cfg.learn);
  return cfg;
}

Runtime::Runtime(Registry registry, RuntimeConfig cfg, std::unique_ptr<PlannerBackend> backend)
    : registry_(std::move(registry)),
      cfg_(std::move(cfg)),
      sim_(cfg_.sim),
      memory_(cfg_.dispatcher.history_window, cfg_.log_path),
      prefs_(cfg_.learning),
      dispatcher_(registry_, &prefs_, cfg_.dispatcher),
      backend_(backend ? std::move(backend) : std::make_unique<RuleBackend>()) {
  published_state_ = sim_.state();
  sim_.set_tick_observer([this](std::int64_t, const RobotState& s) {
    std::lock_guard lock(state_mu_);
    published_state_ = s;
  });
}

void Runtime::set_backend(std::unique_ptr<PlannerBackend> backend) {
  std::lock_guard lock(session_);
  backend_ = std::move(backend);
}

void Runtime::reset_simulation(const SimConfig& cfg) {
  std::lock_guard lock(session_);
  sim_.reset(cfg);
  memory_.clear_recent();
  std::lock_guard slock(state_mu_);
  published_state_ = sim_.state();
}

RobotState Runtime::state_snapshot() const {
  std::lock_guard lock(state_mu_);
  RobotState s = published_state_;
  s.estop = sim_.estop_latched();
  return s;
}

std::optional<DispatchPlan> Runtime::plan_by_id(const std::string& id) const {
  std::lock_guard lock(session_);
  auto it = plans_.find(id);
  if (it == plans_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> Runtime::last_plan_id() const {
  std::lock_guard lock(session_);
  return last_plan_;
}

void Runtime::trigger_estop() { sim_.trigger_estop(); }

void Runtime::resume() {
  std::lock_guard lock(session_);
  sim_.resume();
  std::lock_guard slock(state_mu_);
  published_state_ = sim_.state();
}

PlannerContext Runtime::context_for(const std::string& task, const std::string& instruction) {
  const RobotState state = sim_.state();
  const TerrainClass scene = sim_.scene_class();
  PreferenceLookup pref = [this](TerrainClass s, const std::string& id) { return prefs_.preference(s, id); };
  return build_planner_context(task, instruction, scene, state, registry_, memory_.recent(), pref,
                               cfg_.dispatcher.history_window);
}

ExecutionRecord Runtime::execute_step(const DispatchPlan& plan, int step_no, const Timestamp& t_instr,
                                      const Timestamp& t_dispatch, const UpdateSink& sink) {
  const PlanStep& step = plan.steps[step_no - 1];
  auto tmpl = registry_.lookup(step.skill);

  ExecutionRecord rec;
  rec.plan_id = plan.id;
  rec.step = step_no;
  rec.skill = step.skill;
  rec.params = step.params;
  rec.t_instruction = t_instr;
  rec.t_dispatch_done = t_dispatch;
  rec.state_before = sim_.state();

  std::optional<TerrainClass> scene;
  try {
    scene = sim_.scene_class();
  } catch (const Error&) {
  }
  rec.scene = scene.value_or(TerrainClass::flat);

  auto finish = [&](OutcomeKind kind, std::string code) {
    rec.outcome = kind;
    rec.error_code = std::move(code);
    rec.t_execution_end = Timestamp::now();
    rec.state_after = sim_.state();
    {
      std::lock_guard lock(state_mu_);
      published_state_ = rec.state_after;
    }
    return rec;
  };

  rec.t_execution_start = Timestamp::now();
  if (!scene) return finish(OutcomeKind::error, "OUT_OF_MAP");
  if (sim_.estop_latched()) return finish(OutcomeKind::preempted, "ESTOP_LATCHED");

  const auto last = memory_.last();
  const auto check = precheck(*tmpl, rec.state_before, *scene, last ? &*last : nullptr);
  if (!check.ok()) {
    std::string code = "PRECHECK_FAILED";
    if (check.violates(ConstraintKind::required_terrain)) code = "TERRAIN_MISMATCH";
    return finish(OutcomeKind::error, code);
  }

  if (sink) sink(UpdateKind::step_started, step_payload(plan, step_no));
  rec.t_execution_start = Timestamp::now();
  SkillOutcome out;
  try {
    out = sim_.execute_skill(tmpl->function().executor, step.params,
                             {tmpl->id, required_terrains(*tmpl)});
  } catch (const Error& e) {
    if (e.code() == Errc::EstopLatched) return finish(OutcomeKind::preempted, "ESTOP_LATCHED");
    return finish(OutcomeKind::error, std::string(to_string(e.code())));
  }
  switch (out.terminal) {
    case Terminal::completed: return finish(OutcomeKind::completed, "");
    case Terminal::error: return finish(OutcomeKind::error, out.error_code);
    case Terminal::preempted: return finish(OutcomeKind::preempted, out.error_code);
  }
  return finish(OutcomeKind::error, "UNKNOWN");
}

bool Runtime::execute_plan(const DispatchPlan& plan, const Timestamp& t_instruction,
                           const Timestamp& t_dispatch, const UpdateSink& sink, RunResult& out,
                           int& failed_step, std::string& failed_code) {
  failed_step = 0;
  for (int i = 1; i <= static_cast<int>(plan.steps.size()); ++i) {
    if (i > 1) {
      out.overhead.scheduling_ns += pause_for(cfg_.coordination.scheduling);
      const Clock t0 = mono_now_ns();
      // Dependency check: the next step's skill must still resolve and its
      // forbidden transitions are re-read before the precheck.
      (void)registry_.lookup(plan.steps[i - 1].skill);
      pause_for(cfg_.coordination.dependency_check);
      out.overhead.dependency_check_ns += mono_now_ns() - t0;
      out.overhead.state_transition_ns += pause_for(cfg_.coordination.state_transition);
    }
    ExecutionRecord rec = execute_step(plan, i, t_instruction, t_dispatch, sink);
    memory_.record(rec);
    if (cfg_.learn) prefs_.observe(rec, registry_);
    out.records.push_back(rec);

    json payload = step_payload(plan, i);
    payload["state"] = to_json(rec.state_after);
    if (rec.outcome == OutcomeKind::completed) {
      if (sink) sink(UpdateKind::step_completed, payload);
      continue;
    }
    if (rec.outcome == OutcomeKind::preempted) {
      out.aborted = true;
      failed_step = i;
      failed_code = rec.error_code;
      return false;
    }
    failed_step = i;
    failed_code = rec.error_code;
    return false;
  }
  return true;
}

RunResult Runtime::run_instruction(const std::string& task, const std::string& instruction,
                                   const UpdateSink& sink, std::optional<Timestamp> t_instruction) {
  std::lock_guard lock(session_);
  RunResult res;
  res.t_instruction = t_instruction.value_or(Timestamp::now());

  if (sim_.estop_latched()) {
    res.error = "EstopLatched";
    res.aborted = true;
    if (sink) sink(UpdateKind::estop, {{"error", "ESTOP_LATCHED"}, {"latched", true}});
    return res;
  }

  DispatchPlan plan;
  try {
    plan = dispatcher_.plan(context_for(task, instruction), *backend_);
  } catch (const Error& e) {
    res.error = e.what();
    if (sink) sink(UpdateKind::step_failed, {{"terminal", true}, {"error", e.what()}});
    return res;
  }
  res.t_dispatch_done = Timestamp::now();
  Timestamp t_dispatch = res.t_dispatch_done;

  for (int replans = 0;; ++replans) {
    plans_[plan.id] = plan;
    last_plan_ = plan.id;
    memory_.register_plan(plan.id, static_cast<int>(plan.steps.size()));
    res.plans.push_back(plan);
    if (sink) {
      json p = plan.to_json();
      if (replans > 0) p["replaces"] = res.plans[res.plans.size() - 2].id;
      sink(UpdateKind::plan_proposed, p);
    }

    int failed_step = 0;
    std::string code;
    const bool done = execute_plan(plan, res.t_instruction, t_dispatch, sink, res, failed_step, code);
    res.status = memory_.completion_status(plan.id);
    if (done) {
      if (sink) {
        sink(UpdateKind::ask_feedback, {{"plan_id", plan.id}});
        sink(UpdateKind::plan_done, {{"plan_id", plan.id}, {"status", to_string(res.status)}});
      }
      return res;
    }
    if (res.aborted) {
      if (sink)
        sink(UpdateKind::estop, {{"plan_id", plan.id}, {"step", failed_step}, {"reason", code},
                                 {"status", to_string(res.status)}});
      return res;
    }

    const bool last_chance = replans >= cfg_.max_replans;
    json failure = step_payload(plan, failed_step);
    failure["error"] = code;
    failure["status"] = to_string(res.status);
    if (last_chance) {
      failure["terminal"] = true;
      if (sink) sink(UpdateKind::step_failed, failure);
      return res;
    }

    FeedbackSignal fb;
    fb.kind = FeedbackSignal::Kind::error;
    fb.error_code = code;
    fb.plan_id = plan.id;
    fb.step = failed_step;
    fb.scene = res.records.back().scene;
    try {
      plan = dispatcher_.replan(fb, plan, context_for(task, instruction), *backend_);
    } catch (const Error& e) {
      res.error = e.what();
      failure["terminal"] = true;
      failure["replan_error"] = e.what();
      if (sink) sink(UpdateKind::step_failed, failure);
      return res;
    }
    failure["terminal"] = false;
    if (sink) sink(UpdateKind::step_failed, failure);
    t_dispatch = Timestamp::now();
  }
}

AppliedUpdates Runtime::feedback(const std::string& plan_id, const HumanFeedback& fb,
                                 const UpdateSink& sink) {
  std::lock_guard lock(session_);
  auto it = plans_.find(plan_id);
  if (it == plans_.end()) throw Error(Errc::UnknownPlan, "unknown plan '" + plan_id + "'");
  const DispatchPlan current = it->second;
  const auto records = memory_.records_for(plan_id);
  AppliedUpdates applied = prefs_.ingest_human_feedback(fb, records, registry_);

  if (applied.corrected_step && !sim_.estop_latched()) {
    DispatchPlan redo{plan_id + "-corr" + std::to_string(plans_.size()), {*applied.corrected_step},
                      PlanOrigin::replan, Timestamp::now()};
    plans_[redo.id] = redo;
    memory_.register_plan(redo.id, 1);
    if (sink) sink(UpdateKind::plan_proposed, redo.to_json());
    const Timestamp t = Timestamp::now();
    ExecutionRecord rec = execute_step(redo, 1, t, t, sink);
    memory_.record(rec);
    if (rec.outcome == OutcomeKind::completed) {
      prefs_.complete_correction(*applied.corrected_step, applied.corrected_scene, registry_);
      if (sink) sink(UpdateKind::step_completed, step_payload(redo, 1));
    } else if (sink) {
      json f = step_payload(redo, 1);
      f["error"] = rec.error_code;
      f["terminal"] = true;
      sink(UpdateKind::step_failed, f);
      return applied;
    }
    if (sink) sink(UpdateKind::plan_done, {{"plan_id", redo.id}, {"status", "completed"}});
    return applied;
  }

  if (applied.replan_requested) {
    int step = fb.step == 0 && !records.empty() ? records.back().step : fb.step;
    FeedbackSignal sig;
    sig.kind = FeedbackSignal::Kind::human;
    sig.human = fb;
    sig.plan_id = plan_id;
    sig.step = std::max(step, 1);
    try {
      DispatchPlan next = dispatcher_.replan(sig, current, context_for("", ""), *backend_);
      plans_[next.id] = next;
      last_plan_ = next.id;
      memory_.register_plan(next.id, static_cast<int>(next.steps.size()));
      if (sink) {
        json p = next.to_json();
        p["replaces"] = plan_id;
        sink(UpdateKind::plan_proposed, p);
      }
      RunResult res;
      int failed = 0;
      std::string code;
      const Timestamp t = Timestamp::now();
      const bool done = execute_plan(next, t, t, sink, res, failed, code);
      if (sink) {
        if (done)
          sink(UpdateKind::plan_done, {{"plan_id", next.id}, {"status", "completed"}});
        else if (res.aborted)
          sink(UpdateKind::estop, {{"plan_id", next.id}, {"reason", code}});
        else
          sink(UpdateKind::step_failed, {{"plan_id", next.id}, {"step", failed}, {"error", code}, {"terminal", true}});
      }
    } catch (const Error& e) {
      if (sink) sink(UpdateKind::step_failed, {{"plan_id", plan_id}, {"error", e.what()}, {"terminal", true}});
    }
    return applied;
  }

  if (sink) sink(UpdateKind::plan_done, {{"plan_id", plan_id}, {"ack", "feedback applied"}});
  return applied;
}

}  // namespace opengo
