#include <algorithm>
#include <random>

#include "helpers.hpp"
#include "opengo/error.hpp"
#include "opengo/memory_state.hpp"

using namespace opengo;

namespace {

ExecutionRecord rec(const std::string& plan, int step, const std::string& skill, OutcomeKind o,
                    std::int64_t t0 = 1000) {
  ExecutionRecord r;
  r.plan_id = plan;
  r.step = step;
  r.skill = skill;
  r.outcome = o;
  if (o == OutcomeKind::error) r.error_code = "EXECUTOR_FAULT";
  r.t_instruction = {t0, 1'700'000'000'000'000'000 + t0};
  r.t_dispatch_done = {t0 + 10, 1'700'000'000'000'000'000 + t0 + 10};
  r.t_execution_start = {t0 + 20, 1'700'000'000'000'000'000 + t0 + 20};
  r.t_execution_end = {t0 + 30, 1'700'000'000'000'000'000 + t0 + 30};
  return r;
}

}  // namespace

TEST_CASE("precheck examples") {
  const auto& reg = testing::shipped_registry();
  RobotState s;
  auto crouched = rec("p", 1, "crouch", OutcomeKind::completed);
  auto c = precheck(*reg.lookup("backflip"), s, TerrainClass::flat, &crouched);
  CHECK_FALSE(c.ok());
  REQUIRE(c.violated.size() == 1);
  CHECK(c.violated[0].kind == ConstraintKind::forbidden_prior_skill);

  RobotState weird;
  weird.posture = Posture::fallen;
  weird.battery = 1.0;
  CHECK(precheck(*reg.lookup("stand"), weird, TerrainClass::obstacle, &crouched).ok());

  auto stairs = precheck(*reg.lookup("climb_stairs"), s, TerrainClass::flat, nullptr);
  CHECK_FALSE(stairs.ok());
  REQUIRE(stairs.violated.size() == 1);
  CHECK(stairs.violates(ConstraintKind::required_terrain));
}

TEST_CASE("record: ring eviction, persistent log, timestamp order") {
  auto log = testing::temp_path("exec.log");
  {
    MemoryState m(kHistoryWindow, log);
    m.register_plan("p", 40);
    for (int i = 1; i <= 33; ++i) m.record(rec("p", i, "stand", OutcomeKind::completed, i * 100));
    CHECK(m.recent().size() == 32);
    CHECK(m.recent().front().step == 2);
    CHECK(m.all().size() == 33);
    CHECK(m.last()->step == 33);

    auto bad = rec("p", 34, "stand", OutcomeKind::completed);
    bad.t_execution_end = {bad.t_execution_start.mono_ns - 1, bad.t_execution_start.wall_ns};
    try {
      m.record(bad);
      FAIL("expected TimestampOrder");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::TimestampOrder);
    }
    CHECK(m.all().size() == 33);
  }
  auto back = read_execution_log(log);
  REQUIRE(back.size() == 33);
  CHECK(back.front() == rec("p", 1, "stand", OutcomeKind::completed, 100));
}

TEST_CASE("completion status examples") {
  MemoryState m;
  m.register_plan("a", 2);
  CHECK(m.completion_status("a").kind == PlanStatus::Kind::pending);
  m.record(rec("a", 1, "stand", OutcomeKind::completed));
  CHECK(m.completion_status("a").kind == PlanStatus::Kind::in_progress);
  m.record(rec("a", 2, "stop", OutcomeKind::completed));
  CHECK(m.completion_status("a").kind == PlanStatus::Kind::completed);

  m.register_plan("b", 3);
  m.record(rec("b", 1, "stand", OutcomeKind::completed));
  m.record(rec("b", 2, "turn", OutcomeKind::error));
  CHECK(m.completion_status("b") == PlanStatus{PlanStatus::Kind::failed, 2});
  CHECK(to_string(m.completion_status("b")) == "failed(2)");

  m.register_plan("c", 2);
  m.record(rec("c", 1, "move_forward", OutcomeKind::preempted));
  CHECK(m.completion_status("c").kind == PlanStatus::Kind::aborted);

  try {
    m.completion_status("zzz");
    FAIL("expected UnknownPlan");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnknownPlan);
  }
}

TEST_CASE("property: completion status is a pure fold") {
  std::mt19937_64 rng(21);
  const OutcomeKind kinds[] = {OutcomeKind::completed, OutcomeKind::completed, OutcomeKind::error,
                               OutcomeKind::preempted};
  for (int trial = 0; trial < 500; ++trial) {
    const int steps = 1 + static_cast<int>(rng() % 5);
    std::vector<ExecutionRecord> log;
    for (int s = 1; s <= steps; ++s)
      if (rng() % 4) log.push_back(rec("p", s, "stand", kinds[rng() % 4], s * 100));
    for (int noise = 0; noise < 3; ++noise) log.push_back(rec("other", 1, "stop", OutcomeKind::error));
    const PlanStatus expect = fold_status(log, "p", steps);

    auto shuffled = log;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(fold_status(shuffled, "p", steps) == expect);

    MemoryState m;
    m.register_plan("p", steps);
    for (const auto& r : log) m.record(r);
    CHECK(m.completion_status("p") == expect);
  }
}

TEST_CASE("record JSON round trip") {
  auto r = rec("plan-000007", 3, "move_forward", OutcomeKind::error);
  r.params = {{"distance", 2.0}, {"speed", 0.5}};
  r.scene = TerrainClass::rough;
  r.state_after.x = 1.25;
  auto j = to_json(r);
  CHECK(j["outcome"]["kind"] == "error");
  CHECK(j["t_execution_start"]["mono_ns"] == r.t_execution_start.mono_ns);
  CHECK(j["t_execution_start"]["wall"].get<std::string>().back() == 'Z');
  CHECK(record_from_json(j) == r);
}
