#include <algorithm>
#include <random>

#include "helpers.hpp"
#include "opengo/error.hpp"
#include "opengo/executors.hpp"
#include "opengo/skill_library.hpp"

using namespace opengo;
using nlohmann::json;

namespace {

SkillTemplate draft(const std::string& id) { return parse_skill_document(testing::shipped_doc(id)); }

SkillTemplate validated(const std::string& id) {
  SkillTemplate t = draft(id);
  REQUIRE(review_skill(t).pass());
  REQUIRE(validate_in_simulation(t, validation_config_for(t)).pass());
  return t;
}

int runs_of(const Report& r) {
  for (const auto& f : r.findings)
    if (f.code == "RUNS") return std::stoi(f.message);
  return -1;
}

// Independent constraint oracle used to re-check filter_candidates.
bool oracle_ok(const SkillTemplate& t, TerrainClass scene, const RobotState& s,
               const std::optional<std::string>& last) {
  for (const auto& c : t.constraints) {
    switch (c.kind) {
      case ConstraintKind::required_terrain:
        if (std::find(c.terrains.begin(), c.terrains.end(), scene) == c.terrains.end()) return false;
        break;
      case ConstraintKind::required_posture:
        if (std::find(c.postures.begin(), c.postures.end(), s.posture) == c.postures.end()) return false;
        break;
      case ConstraintKind::min_battery:
        if (s.battery < c.min_battery) return false;
        break;
      case ConstraintKind::forbidden_prior_skill:
        if (last && *last == c.skill) return false;
        break;
      case ConstraintKind::max_speed_context: {
        if (std::find(c.speed.scenes.begin(), c.speed.scenes.end(), scene) == c.speed.scenes.end()) break;
        const auto* p = t.parameter(c.speed.param);
        if (p && p->lower > c.speed.max) return false;
        break;
      }
      case ConstraintKind::unknown: return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("review: well-formed move_forward passes") {
  SkillTemplate t = draft("move_forward");
  auto r = review_skill(t);
  CHECK(r.pass());
  CHECK(t.status() == SkillStatus::reviewed);
  for (const auto& f : r.findings) CHECK(f.severity != Severity::error);
}

TEST_CASE("review: unknown executor") {
  json doc = testing::shipped_doc("move_forward");
  doc["function"]["executor"] = "teleport";
  SkillTemplate t = parse_skill_document(doc);
  auto r = review_skill(t);
  CHECK_FALSE(r.pass());
  CHECK(r.has("UNKNOWN_EXECUTOR"));
  CHECK(t.status() == SkillStatus::rejected);
}

TEST_CASE("review: inverted bounds on speed") {
  json doc = testing::shipped_doc("move_forward");
  doc["parameters"][1]["lower"] = 1.5;
  doc["parameters"][1]["upper"] = 0.1;
  SkillTemplate t = parse_skill_document(doc);
  auto r = review_skill(t);
  CHECK_FALSE(r.pass());
  CHECK(r.has("INVERTED_BOUNDS"));
}

TEST_CASE("review: other static findings") {
  {
    json doc = testing::shipped_doc("move_forward");
    doc["function"]["digest"] = "fnv1a64:0000000000000000";
    SkillTemplate t = parse_skill_document(doc);
    CHECK(review_skill(t).has("DIGEST_MISMATCH"));
  }
  {
    json doc = testing::shipped_doc("move_forward");
    doc["parameters"].erase(1);
    SkillTemplate t = parse_skill_document(doc);
    CHECK(review_skill(t).has("UNDECLARED_PARAMETER"));
  }
  {
    json doc = testing::shipped_doc("move_forward");
    doc["parameters"][0]["default"] = 50.0;
    SkillTemplate t = parse_skill_document(doc);
    CHECK(review_skill(t).has("DEFAULT_OUT_OF_BOUNDS"));
  }
  {
    json doc = testing::shipped_doc("stand");
    doc["constraints"].push_back({{"kind", "moon_phase"}});
    SkillTemplate t = parse_skill_document(doc);
    CHECK(review_skill(t).has("UNKNOWN_CONSTRAINT"));
  }
  {
    SkillTemplate t = draft("stand");
    review_skill(t);
    auto again = review_skill(t);
    CHECK(again.has("NOT_DRAFT"));
  }
}

TEST_CASE("validation: move_forward on flat passes, stand runs once") {
  SkillTemplate mf = draft("move_forward");
  review_skill(mf);
  auto r = validate_in_simulation(mf, SimConfig::uniform(TerrainClass::flat));
  CHECK(r.pass());
  CHECK(mf.status() == SkillStatus::validated);
  CHECK(runs_of(r) == 5);  // default + 4 corners

  SkillTemplate st = draft("stand");
  review_skill(st);
  auto rs = validate_in_simulation(st, SimConfig::uniform(TerrainClass::flat));
  CHECK(rs.pass());
  CHECK(runs_of(rs) == 1);
}

TEST_CASE("validation: backflip with battery below its threshold") {
  SkillTemplate t = draft("backflip");
  review_skill(t);
  SimConfig cfg = SimConfig::uniform(TerrainClass::flat);
  cfg.start.battery = 10.0;
  auto r = validate_in_simulation(t, cfg);
  CHECK_FALSE(r.pass());
  CHECK(r.has("CONSTRAINT_UNSATISFIABLE_IN_CONFIG"));
  CHECK(t.status() == SkillStatus::rejected);
}

TEST_CASE("validation: requires reviewed and a simulator") {
  SkillTemplate t = draft("stand");
  auto r = validate_in_simulation(t, SimConfig::uniform(TerrainClass::flat));
  CHECK(r.has("NOT_REVIEWED"));
  SkillTemplate u = draft("stand");
  review_skill(u);
  SimConfig empty;
  try {
    validate_in_simulation(u, empty);
    FAIL("expected SimulatorUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::SimulatorUnavailable);
  }
}

TEST_CASE("validation points: corners for d<=4, seeded samples beyond") {
  SkillTemplate cs = draft("climb_stairs");
  auto pts = validation_points(cs, 1);
  CHECK(pts.size() == 9);
  CHECK(pts.front().at("steps") == 5);

  json doc = testing::shipped_doc("dance");
  for (int i = 0; i < 4; ++i)
    doc["parameters"].push_back({{"name", "extra" + std::to_string(i)}, {"unit", "u"}, {"lower", 0.0},
                                 {"upper", 1.0}, {"default", 0.5}});
  SkillTemplate wide = parse_skill_document(doc);
  auto a = validation_points(wide, 42);
  auto b = validation_points(wide, 42);
  CHECK(a.size() == 17);
  CHECK(a == b);
  for (const auto& p : a)
    for (const auto& spec : wide.parameters) CHECK(spec.contains(p.at(spec.name)));
}

TEST_CASE("registry: register, lookup, versions") {
  Registry reg;
  SkillTemplate d = validated("dance");
  const std::string id = reg.register_skill(d);
  CHECK(id == "dance@1");
  auto got = reg.lookup("dance");
  CHECK(got->same_content(d));
  CHECK(got->status() == SkillStatus::registered);

  SkillTemplate raw = draft("stand");
  try {
    reg.register_skill(raw);
    FAIL("expected NotValidated");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NotValidated);
  }

  json doc = testing::shipped_doc("dance");
  doc["prompts"] = "Dance, version two.";
  SkillTemplate v2 = parse_skill_document(doc);
  review_skill(v2);
  validate_in_simulation(v2, validation_config_for(v2));
  CHECK(reg.register_skill(v2) == "dance@2");
  CHECK(reg.lookup("dance")->prompts == "Dance, version two.");
  CHECK(reg.lookup("dance@1")->same_content(d));
  CHECK(reg.versions("dance").size() == 2);

  try {
    reg.lookup("fly");
    FAIL("expected NotFound");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NotFound);
  }
  CHECK(reg.find("dance@7") == nullptr);

  // A template that claims a stale version number conflicts.
  SkillTemplate stale = validated("dance");
  stale.version = 1;
  try {
    reg.register_skill(stale);
    FAIL("expected VersionConflict");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::VersionConflict);
  }
}

TEST_CASE("registry persistence round trip") {
  const auto& reg = testing::shipped_registry();
  auto p = testing::temp_path("registry.json");
  reg.save(p);
  Registry back = Registry::load(p);
  REQUIRE(back.size() == reg.size());
  for (const auto& t : reg.latest()) {
    auto b = back.lookup(t->qualified_id());
    CHECK(b->same_content(*t));
    CHECK(b->transitions() == t->transitions());
  }
}

TEST_CASE("filter_candidates examples") {
  const auto& reg = testing::shipped_registry();
  RobotState s;
  auto stairs = filter_candidates(TerrainClass::stairs_up, s, reg);
  CHECK(std::count(stairs.begin(), stairs.end(), "climb_stairs") == 1);
  CHECK(std::count(stairs.begin(), stairs.end(), "backflip") == 0);

  RobotState low;
  low.battery = 6.0;
  CHECK(filter_candidates(TerrainClass::flat, low, reg) == std::vector<std::string>{"stand", "stop"});

  CHECK(filter_candidates(TerrainClass::flat, s, Registry{}).empty());

  auto flat = filter_candidates(TerrainClass::flat, s, reg, {}, std::string("crouch"));
  CHECK(std::count(flat.begin(), flat.end(), "backflip") == 0);
}

TEST_CASE("filter_candidates orders by preference then id") {
  const auto& reg = testing::shipped_registry();
  RobotState s;
  PreferenceLookup pref = [](TerrainClass, const std::string& id) { return id == "turn" ? 0.9 : 0.5; };
  auto c = filter_candidates(TerrainClass::flat, s, reg, pref);
  REQUIRE(!c.empty());
  CHECK(c.front() == "turn");
  CHECK(std::is_sorted(c.begin() + 1, c.end()));
}

TEST_CASE("property: filter_candidates is sound and complete over random snapshots") {
  const auto& reg = testing::shipped_registry();
  std::mt19937_64 rng(11);
  const TerrainClass terrains[] = {TerrainClass::flat, TerrainClass::rough, TerrainClass::stairs_up,
                                   TerrainClass::stairs_down, TerrainClass::obstacle, TerrainClass::narrow};
  const Posture postures[] = {Posture::standing, Posture::crouched, Posture::mid_air, Posture::fallen};
  const std::vector<std::optional<std::string>> lasts = {std::nullopt, "crouch", "stand", "backflip"};
  std::uniform_real_distribution<double> bat(0.0, 100.0);
  for (int i = 0; i < 2000; ++i) {
    RobotState s;
    s.posture = postures[rng() % 4];
    s.battery = bat(rng);
    const TerrainClass scene = terrains[rng() % 6];
    const auto last = lasts[rng() % lasts.size()];
    auto got = filter_candidates(scene, s, reg, {}, last);
    std::vector<std::string> expect;
    for (const auto& t : reg.latest())
      if (oracle_ok(*t, scene, s, last)) expect.push_back(t->id);
    CHECK(got == expect);
    for (const auto& id : got) CHECK(reg.lookup(id)->status() == SkillStatus::registered);
  }
}

TEST_CASE("import pipeline: no stage is skipped") {
  Registry reg;
  auto res = import_skill(testing::shipped_doc("turn"), reg);
  REQUIRE(res.admitted());
  CHECK(reg.lookup("turn")->transitions() ==
        std::vector<SkillStatus>{SkillStatus::draft, SkillStatus::reviewed, SkillStatus::validated,
                                 SkillStatus::registered});

  json bad = testing::shipped_doc("turn");
  bad["parameters"][0]["lower"] = 4.0;
  auto r2 = import_skill(bad, reg);
  CHECK_FALSE(r2.admitted());
  CHECK(r2.review.has_value());
  CHECK_FALSE(r2.validation.has_value());
  CHECK(r2.skill.transitions() == std::vector<SkillStatus>{SkillStatus::draft, SkillStatus::rejected});
}
