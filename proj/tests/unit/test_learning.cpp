#include <cmath>
#include <random>

#include "helpers.hpp"
#include "opengo/error.hpp"
#include "opengo/learning.hpp"

using namespace opengo;

namespace {

ExecutionRecord done(const std::string& plan, int step, const std::string& skill, OutcomeKind o,
                     TerrainClass scene = TerrainClass::flat, Params params = {}) {
  ExecutionRecord r;
  r.plan_id = plan;
  r.step = step;
  r.skill = skill;
  r.outcome = o;
  r.scene = scene;
  r.params = std::move(params);
  return r;
}

}  // namespace

TEST_CASE("dispatch preference EMA") {
  PreferenceStore p;
  CHECK(p.preference(TerrainClass::flat, "dance") == 0.5);
  CHECK(p.update_dispatch_preference(TerrainClass::flat, "dance", 1.0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(p.preference_count(TerrainClass::flat, "dance") == 1);

  for (int i = 0; i < 10; ++i) p.update_dispatch_preference(TerrainClass::rough, "turn", 0.0);
  CHECK(std::abs(p.preference(TerrainClass::rough, "turn") - 0.5 * std::pow(0.8, 10)) <= 1e-12);

  for (int i = 0; i < 200; ++i) p.update_dispatch_preference(TerrainClass::narrow, "stop", 1.0);
  CHECK(p.preference(TerrainClass::narrow, "stop") <= 1.0);
  CHECK(p.update_dispatch_preference(TerrainClass::narrow, "stop", 1.0) <= 1.0);
}

TEST_CASE("parameter default attraction") {
  const auto& reg = testing::shipped_registry();
  const auto& mf = *reg.lookup("move_forward");
  PreferenceStore p;
  // Seed the learned default at 0.8, then succeed at 1.2.
  double d = 0.5;
  while (std::abs(d - 0.8) > 1e-12) d = p.update_param_default(mf, "speed", TerrainClass::flat, 0.8, true);
  CHECK(p.update_param_default(mf, "speed", TerrainClass::flat, 1.2, true) == doctest::Approx(0.92));
  CHECK(p.update_param_default(mf, "speed", TerrainClass::flat, 0.1, false) == doctest::Approx(0.92));

  PreferenceStore q;
  for (int i = 0; i < 300; ++i) q.update_param_default(mf, "speed", TerrainClass::rough, 1.5, true);
  auto v = q.learned_default("move_forward", "speed", TerrainClass::rough);
  REQUIRE(v);
  CHECK(*v <= 1.5);
  CHECK(*v == doctest::Approx(1.5));

  try {
    q.update_param_default(mf, "speed", TerrainClass::flat, 2.0, true);
    FAIL("expected OutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::OutOfRange);
  }
  CHECK_FALSE(p.learned_default("move_forward", "distance", TerrainClass::flat));
}

TEST_CASE("human feedback") {
  const auto& reg = testing::shipped_registry();
  std::vector<ExecutionRecord> plan = {
      done("p", 1, "move_forward", OutcomeKind::completed, TerrainClass::flat, {{"distance", 1.0}, {"speed", 0.5}}),
      done("p", 2, "turn", OutcomeKind::completed, TerrainClass::flat, {{"angle", 1.0}, {"rate", 1.0}})};

  PreferenceStore p;
  auto a = p.ingest_human_feedback({Verdict::approve, "good", 0, {}}, plan, reg);
  CHECK(a.preference.size() == 2);
  for (const auto& u : a.preference) CHECK(u.outcome == 1.0);

  auto r = p.ingest_human_feedback({Verdict::reject, "no", 1, {}}, plan, reg);
  REQUIRE(r.preference.size() == 1);
  CHECK(r.preference[0].skill == "move_forward");
  CHECK(r.preference[0].outcome == 0.0);
  CHECK(r.replan_requested);

  const PreferenceStore before = p;
  try {
    p.ingest_human_feedback({Verdict::correct, "faster", 1, {{"speed", 2.0}}}, plan, reg);
    FAIL("expected OutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::OutOfRange);
  }
  CHECK(p == before);

  auto c = p.ingest_human_feedback({Verdict::correct, "faster", 1, {{"speed", 1.2}}}, plan, reg);
  REQUIRE(c.corrected_step);
  CHECK(c.corrected_step->params.at("speed") == 1.2);
  CHECK(c.corrected_step->params.at("distance") == 1.0);
  CHECK_FALSE(p.learned_default("move_forward", "speed", TerrainClass::flat));
  p.complete_correction(*c.corrected_step, c.corrected_scene, reg);
  CHECK(p.learned_default("move_forward", "speed", TerrainClass::flat).has_value());
}

TEST_CASE("observe: completed, error, preempted") {
  const auto& reg = testing::shipped_registry();
  PreferenceStore p;
  p.observe(done("p", 1, "dance", OutcomeKind::completed, TerrainClass::flat, {{"duration", 6.0}}), reg);
  CHECK(p.preference(TerrainClass::flat, "dance") == doctest::Approx(0.6));
  CHECK(*p.learned_default("dance", "duration", TerrainClass::flat) == doctest::Approx(0.7 * 4.0 + 0.3 * 6.0));
  p.observe(done("p", 2, "dance", OutcomeKind::error), reg);
  CHECK(p.preference(TerrainClass::flat, "dance") == doctest::Approx(0.48));
  p.observe(done("p", 3, "dance", OutcomeKind::preempted), reg);
  CHECK(p.preference(TerrainClass::flat, "dance") == doctest::Approx(0.48));
  CHECK(p.preference_count(TerrainClass::flat, "dance") == 2);
}

TEST_CASE("property: bounded learning and replay determinism") {
  const auto& reg = testing::shipped_registry();
  std::mt19937_64 rng(17);
  const auto skills = reg.latest();
  std::vector<ExecutionRecord> log;
  PreferenceStore live;
  for (int i = 0; i < 3000; ++i) {
    const auto& t = *skills[rng() % skills.size()];
    Params params;
    for (const auto& spec : t.parameters) {
      std::uniform_real_distribution<double> u(spec.lower, spec.upper);
      double v = u(rng);
      if (spec.kind != ParamKind::continuous) v = std::round(v);
      params[spec.name] = v;
    }
    const OutcomeKind o = static_cast<OutcomeKind>(rng() % 3);
    auto r = done("p", i + 1, t.id, o, static_cast<TerrainClass>(rng() % 6), params);
    live.observe(r, reg);
    log.push_back(r);
    const double s = live.preference(r.scene, t.id);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
    for (const auto& spec : t.parameters)
      if (auto d = live.learned_default(t.id, spec.name, r.scene)) {
        CHECK(*d >= spec.lower);
        CHECK(*d <= spec.upper);
      }
  }
  CHECK(PreferenceStore::replay(log, reg) == live);
  // Templates are untouched by learning.
  CHECK(reg.lookup("move_forward")->same_content(parse_skill_document(testing::shipped_doc("move_forward"))));
}

TEST_CASE("persistence") {
  const auto& reg = testing::shipped_registry();
  PreferenceStore p;
  p.update_dispatch_preference(TerrainClass::stairs_up, "climb_stairs", 0.0);
  p.update_param_default(*reg.lookup("turn"), "rate", TerrainClass::flat, 2.0, true);
  auto path = testing::temp_path("learning_state.json");
  p.save(path);
  auto back = PreferenceStore::load(path);
  CHECK(back == p);
  CHECK(back.preference(TerrainClass::stairs_up, "climb_stairs") == p.preference(TerrainClass::stairs_up, "climb_stairs"));
}
