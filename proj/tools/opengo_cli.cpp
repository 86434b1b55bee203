// opengo: command-line front end for the orchestration runtime.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "opengo/error.hpp"
#include "opengo/executors.hpp"
#include "opengo/gateway.hpp"
#include "opengo/latency.hpp"
#include "opengo/llm_backend.hpp"
#include "opengo/runtime.hpp"
#include "opengo/skill_library.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace opengo;

namespace {

std::atomic<bool> g_interrupted{false};

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(Errc::IoError, "cannot read " + p.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::SchemaError, p.string() + " is not valid JSON");
  return j;
}

void write_json(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw Error(Errc::IoError, "cannot write " + p.string());
}

struct State {
  fs::path dir;
  fs::path registry() const { return dir / "registry.json"; }
  fs::path learning() const { return dir / "learning_state.json"; }
  fs::path log() const { return dir / "execution.log"; }
  fs::path bench() const { return dir / "bench_trials.json"; }

  Registry load_registry() const {
    if (!fs::exists(registry())) return {};
    return Registry::load(registry());
  }
  Registry require_registry() const {
    Registry r = load_registry();
    if (r.empty())
      throw Error(Errc::NotFound, "skill registry is empty; run `opengo skill import skills/` first");
    return r;
  }
  PreferenceStore load_prefs(const LearningConfig& cfg) const {
    if (!fs::exists(learning())) return PreferenceStore(cfg);
    return PreferenceStore::load(learning());
  }
};

RuntimeConfig runtime_config(const std::string& config_path, const std::string& sim_path,
                             const State& st) {
  RuntimeConfig cfg;
  if (!config_path.empty()) cfg = RuntimeConfig::from_json(read_json(config_path));
  if (!sim_path.empty()) cfg.sim = SimConfig::load(sim_path);
  if (!cfg.log_path) cfg.log_path = st.log();
  return cfg;
}

std::unique_ptr<PlannerBackend> make_backend(const std::string& kind, const std::string& llm_path) {
  if (kind == "rule") return std::make_unique<RuleBackend>();
  if (kind == "mock") return std::make_unique<MockPlannerBackend>(DelayModel{});
  if (kind == "llm") {
    LlmEndpointConfig cfg;
    if (!llm_path.empty()) cfg = LlmEndpointConfig::from_json(read_json(llm_path));
    return std::make_unique<LlmBackend>(cfg);
  }
  throw Error(Errc::BadConfig, "unknown backend '" + kind + "' (rule, llm, mock)");
}

json import_summary(const ImportResult& r, const std::string& source) {
  json j{{"source", source}, {"admitted", r.admitted()}};
  if (!r.skill.id.empty()) j["skill"] = r.skill.id;
  if (r.registered_id) j["registered"] = *r.registered_id;
  if (!r.error.empty()) j["error"] = r.error;
  if (r.review) j["review"] = to_json(*r.review);
  if (r.validation) j["validation"] = to_json(*r.validation);
  return j;
}

std::pair<std::string, int> bind_address(const std::string& host, int port) {
  const char* env = std::getenv("OPENGO_BIND_ADDR");
  if (!env || !*env) return {host, port};
  std::string s = env;
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) return {s, port};
  return {s.substr(0, colon), std::stoi(s.substr(colon + 1))};
}

std::vector<LatencyTrial> load_trials(const State& st) {
  std::vector<LatencyTrial> out;
  if (!fs::exists(st.bench())) return out;
  for (const auto& t : read_json(st.bench())) out.push_back(LatencyTrial::from_json(t));
  return out;
}

void append_trials(const State& st, const std::vector<LatencyTrial>& trials) {
  json all = fs::exists(st.bench()) ? read_json(st.bench()) : json::array();
  for (const auto& t : trials) all.push_back(t.to_json());
  write_json(st.bench(), all);
}

void print_stats(const std::string& label, const std::vector<double>& v) {
  const auto s = summarize(v);
  std::printf("%-28s n=%zu mean=%.3f median=%.3f p95=%.3f min=%.3f max=%.3f ms\n", label.c_str(),
              s.n, s.mean, s.median, s.p95, s.min, s.max);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"opengo: language-guided skill orchestration for a simulated quadruped"};
  app.require_subcommand(1);
  std::string state_dir = ".opengo";
  if (const char* env = std::getenv("OPENGO_STATE_DIR")) state_dir = env;
  app.add_option("--state-dir", state_dir, "Directory for registry, learning state and logs");

  // skill
  auto* skill = app.add_subcommand("skill", "Skill library");
  skill->require_subcommand(1);
  std::vector<std::string> import_paths;
  std::string sim_config;
  auto* s_import = skill->add_subcommand("import", "Review, validate and register skill documents");
  s_import->add_option("paths", import_paths, "Files or directories")->required();
  s_import->add_option("--sim-config", sim_config, "Validation simulator config");
  auto* s_list = skill->add_subcommand("list", "List registered skills");
  std::string show_id;
  auto* s_show = skill->add_subcommand("show", "Print a registered skill");
  s_show->add_option("id", show_id, "head or head@version")->required();
  std::string validate_path;
  auto* s_validate = skill->add_subcommand("validate", "Review and validate without registering");
  s_validate->add_option("file", validate_path)->required();
  s_validate->add_option("--sim-config", sim_config, "Validation simulator config");
  std::string digest_name;
  auto* s_digest = skill->add_subcommand("digest", "Print the digest of a built-in executor");
  s_digest->add_option("executor", digest_name)->required();

  // sim
  auto* sim = app.add_subcommand("sim", "Simulator utilities");
  sim->require_subcommand(1);
  std::string replay_log, replay_plan;
  bool replay_learn = false;
  auto* sim_replay = sim->add_subcommand("replay", "Re-drive a recorded plan in the simulator");
  sim_replay->add_option("log", replay_log)->required();
  sim_replay->add_option("--plan", replay_plan, "Plan id (default: first plan in the log)");
  sim_replay->add_option("--sim-config", sim_config, "Simulator config (map, faults)");
  sim_replay->add_flag("--learn", replay_learn, "Also print the learning state rebuilt from the log");

  // learn
  auto* learn = app.add_subcommand("learn", "Preference store");
  learn->require_subcommand(1);
  auto* l_show = learn->add_subcommand("show", "Print learned preferences and defaults");
  auto* l_reset = learn->add_subcommand("reset", "Clear learned state");

  // bench
  auto* bench = app.add_subcommand("bench", "Latency harness");
  bench->require_subcommand(1);
  std::string delay_path, bench_skill, compose_spec, csv_out;
  int bench_n = 10;
  bool bench_flush = false;
  bench->add_option("--delay-model", delay_path, "Delay model config");
  auto* b_single = bench->add_subcommand("single", "Single-skill response time");
  b_single->add_option("--skill", bench_skill)->required();
  b_single->add_option("-n", bench_n);
  b_single->add_flag("--flush", bench_flush, "Flush planner caches first");
  auto* b_compose = bench->add_subcommand("compose", "Composition latency");
  b_compose->add_option("--instructions", compose_spec, "JSON list of instructions")->required();
  b_compose->add_option("-n", bench_n);
  auto* b_export = bench->add_subcommand("export", "Write recorded trials as CSV");
  b_export->add_option("--out", csv_out)->required();

  // run
  std::string instruction, run_config, backend_kind = "rule", llm_config, task;
  auto* run = app.add_subcommand("run", "Plan and execute one instruction");
  run->add_option("instruction", instruction)->required();
  run->add_option("--task", task, "Task description");
  run->add_option("--config", run_config, "Runtime config");
  run->add_option("--sim-config", sim_config, "Simulator config");
  run->add_option("--backend", backend_kind, "rule | llm | mock");
  run->add_option("--llm-config", llm_config, "LLM endpoint config");

  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Run the chat gateway (HTTP)");
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--config", run_config, "Runtime config");
  serve->add_option("--sim-config", sim_config, "Simulator config");
  serve->add_option("--backend", backend_kind, "rule | llm | mock");
  serve->add_option("--llm-config", llm_config, "LLM endpoint config");

  // estop
  std::string url = "http://127.0.0.1:8080";
  auto* estop = app.add_subcommand("estop", "Latch the e-stop of a running gateway");
  estop->add_option("--url", url);

  CLI11_PARSE(app, argc, argv);
  const State st{state_dir};

  try {
    if (*s_import) {
      Registry reg = st.load_registry();
      std::optional<SimConfig> cfg;
      if (!sim_config.empty()) cfg = SimConfig::load(sim_config);
      json out = json::array();
      int admitted = 0;
      for (const auto& p : import_paths) {
        std::vector<fs::path> files;
        if (fs::is_directory(p)) {
          for (const auto& e : fs::directory_iterator(p))
            if (e.path().extension() == ".json") files.push_back(e.path());
          std::sort(files.begin(), files.end());
        } else {
          files.push_back(p);
        }
        for (const auto& f : files) {
          json doc;
          ImportResult r;
          std::ifstream in(f);
          doc = json::parse(in, nullptr, false);
          if (doc.is_discarded()) r.error = "SchemaError: not valid JSON";
          else r = import_skill(doc, reg, cfg);
          admitted += r.admitted();
          out.push_back(import_summary(r, f.string()));
        }
      }
      fs::create_directories(st.dir);
      reg.save(st.registry());
      std::cout << out.dump(2) << '\n';
      std::cerr << admitted << " of " << out.size() << " admitted\n";
      return 0;
    }
    if (*s_list) {
      for (const auto& t : st.load_registry().latest())
        std::printf("%-14s v%-3d %-10s %s\n", t->id.c_str(), t->version,
                    std::string(to_string(t->status())).c_str(), t->label.c_str());
      return 0;
    }
    if (*s_show) {
      std::cout << to_registry_json(*st.require_registry().lookup(show_id)).dump(2) << '\n';
      return 0;
    }
    if (*s_validate) {
      SkillTemplate t = parse_skill_document(read_json(validate_path));
      json out{{"review", to_json(review_skill(t))}};
      if (t.status() == SkillStatus::reviewed) {
        SimConfig cfg = sim_config.empty() ? validation_config_for(t)
                                           : SimConfig::load(sim_config);
        out["validation"] = to_json(validate_in_simulation(t, cfg));
      }
      out["status"] = to_string(t.status());
      std::cout << out.dump(2) << '\n';
      return t.status() == SkillStatus::validated ? 0 : 1;
    }
    if (*s_digest) {
      if (!find_executor(digest_name)) throw Error(Errc::NotFound, "no executor '" + digest_name + "'");
      std::cout << executor_digest(digest_name) << '\n';
      return 0;
    }
    if (*sim_replay) {
      const auto records = read_execution_log(replay_log);
      if (records.empty()) throw Error(Errc::EmptyInput, replay_log + " has no records");
      const std::string plan_id = replay_plan.empty() ? records.front().plan_id : replay_plan;
      std::vector<ExecutionRecord> steps;
      for (const auto& r : records)
        if (r.plan_id == plan_id) steps.push_back(r);
      if (steps.empty()) throw Error(Errc::UnknownPlan, "no records for " + plan_id);
      std::sort(steps.begin(), steps.end(), [](const auto& a, const auto& b) { return a.step < b.step; });

      const Registry reg = st.load_registry();
      SimConfig cfg = sim_config.empty() ? SimConfig::default_config() : SimConfig::load(sim_config);
      cfg.start = steps.front().state_before;
      cfg.start.estop = false;
      Simulator sim(cfg);
      int diverged = 0;
      for (const auto& r : steps) {
        ExecOptions opts{r.skill, {}};
        std::string executor = std::string(skill_head(r.skill));
        if (auto t = reg.find(r.skill)) {
          executor = t->function().executor;
          opts.required_terrain = required_terrains(*t);
        }
        const Terminal recorded = r.outcome == OutcomeKind::completed ? Terminal::completed
                                  : r.outcome == OutcomeKind::error   ? Terminal::error
                                                                      : Terminal::preempted;
        SkillOutcome out;
        try {
          out = sim.execute_skill(executor, r.params, opts);
        } catch (const Error& e) {
          out.terminal = Terminal::preempted;
          out.error_code = e.what();
        }
        const RobotState& s = sim.state();
        const double dpos = std::hypot(s.x - r.state_after.x, s.y - r.state_after.y);
        const double dhead = std::abs(normalize_angle(s.heading - r.state_after.heading));
        const bool same = out.terminal == recorded && out.error_code == r.error_code && dpos <= 1e-6 &&
                          dhead <= 1e-9;
        diverged += !same;
        std::printf("%s step %d %-13s recorded %-9s replayed %-9s %s |dpos| %.3g m |dheading| %.3g rad %s\n",
                    plan_id.c_str(), r.step, r.skill.c_str(), std::string(to_string(recorded)).c_str(),
                    std::string(to_string(out.terminal)).c_str(), out.error_code.c_str(), dpos, dhead,
                    same ? "match" : "DIVERGED");
        // Continue from the recorded state so one divergence does not cascade.
        if (!same) {
          SimConfig next = cfg;
          next.start = r.state_after;
          next.start.estop = false;
          sim.reset(next);
        }
      }
      if (replay_learn && !reg.empty())
        std::cout << PreferenceStore::replay(records, reg).to_json().dump(2) << '\n';
      return diverged == 0 ? 0 : 1;
    }
    if (*l_show) {
      std::cout << st.load_prefs({}).to_json().dump(2) << '\n';
      return 0;
    }
    if (*l_reset) {
      PreferenceStore empty;
      fs::create_directories(st.dir);
      empty.save(st.learning());
      return 0;
    }
    if (*b_single || *b_compose) {
      const DelayModel model = delay_path.empty() ? DelayModel{} : DelayModel::from_json(read_json(delay_path));
      LatencyHarness harness(st.require_registry(), model);
      if (*b_single) {
        auto trials = harness.run_single_skill_trial(bench_skill, bench_n, bench_flush);
        std::vector<double> cold, warm;
        for (const auto& t : trials) (t.cold ? cold : warm).push_back(t.latency_ms);
        if (!cold.empty()) print_stats(bench_skill + " cold", cold);
        print_stats(bench_skill + " warm", warm);
        append_trials(st, trials);
      } else {
        const json spec = read_json(compose_spec);
        const json& list = spec.is_object() ? spec.at("instructions") : spec;
        for (const auto& item : list) {
          auto res = harness.run_composition_trial(item.get<std::string>(), bench_n);
          std::vector<double> v;
          for (const auto& t : res.trials) v.push_back(t.latency_ms);
          print_stats(res.trials.front().label, v);
          std::printf("  constituent sum %.3f ms, overhead %.3f ms (scheduling %.3f, state transition %.3f, dependency check %.3f)\n",
                      res.constituent_sum_ms, res.overhead_ms, res.mean_items.scheduling_ns / 1e6,
                      res.mean_items.state_transition_ns / 1e6, res.mean_items.dependency_check_ns / 1e6);
          append_trials(st, res.trials);
        }
      }
      return 0;
    }
    if (*b_export) {
      const auto trials = load_trials(st);
      export_csv(trials, csv_out);
      std::cerr << trials.size() << " trials written to " << csv_out << '\n';
      return 0;
    }
    if (*run) {
      RuntimeConfig cfg = runtime_config(run_config, sim_config, st);
      fs::create_directories(st.dir);
      Runtime rt(st.require_registry(), cfg, make_backend(backend_kind, llm_config));
      rt.preferences() = st.load_prefs(cfg.learning);
      const RunResult res = rt.run_instruction(task, instruction, [](UpdateKind k, const json& p) {
        std::cout << json{{"kind", to_string(k)}, {"payload", p}}.dump() << '\n';
      });
      rt.preferences().save(st.learning());
      return res.status.kind == PlanStatus::Kind::completed ? 0 : 2;
    }
    if (*serve) {
      RuntimeConfig cfg = runtime_config(run_config, sim_config, st);
      cfg.sim.realtime = true;
      fs::create_directories(st.dir);
      Runtime rt(st.require_registry(), cfg, make_backend(backend_kind, llm_config));
      rt.preferences() = st.load_prefs(cfg.learning);
      Gateway gw(rt);
      gw.start();
      HttpGateway http(gw);
      const auto [bind_host, bind_port] = bind_address(host, port);
      const int bound = http.start(bind_host, bind_port);
      std::cerr << "gateway listening on " << bind_host << ':' << bound << '\n';
      std::signal(SIGINT, [](int) { g_interrupted = true; });
      std::signal(SIGTERM, [](int) { g_interrupted = true; });
      while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      http.stop();
      gw.stop();
      rt.preferences().save(st.learning());
      return 0;
    }
    if (*estop) {
      httplib::Client cli(url);
      auto res = cli.Post("/estop", "", "application/json");
      if (!res) throw Error(Errc::EndpointUnavailable, "no gateway at " + url);
      std::cout << res->body << '\n';
      return res->status == 200 ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
