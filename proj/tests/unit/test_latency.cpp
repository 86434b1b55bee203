#include <numeric>

#include "helpers.hpp"
#include "opengo/error.hpp"
#include "opengo/latency.hpp"

using namespace opengo;
using nlohmann::json;

TEST_CASE("summarize against hand-computed statistics") {
  std::vector<double> v(20);
  std::iota(v.begin(), v.end(), 1.0);
  auto s = summarize(v);
  CHECK(s.n == 20);
  CHECK(s.mean == 10.5);
  CHECK(s.median == 10.5);
  CHECK(s.p95 == 19.0);
  CHECK(s.min == 1.0);
  CHECK(s.max == 20.0);

  std::vector<double> odd{5.0, 1.0, 3.0};
  s = summarize(odd);
  CHECK(s.median == 3.0);
  CHECK(s.p95 == 5.0);
  CHECK(summarize(std::vector<double>{}).n == 0);
}

TEST_CASE("delay model config") {
  auto m = DelayModel::from_json(json::parse(R"({"base_ms":1.0,"skill_load_ms":10})"));
  CHECK(m.base_ms == 1.0);
  CHECK(m.skill_load_ms == 10.0);
  CHECK(m.per_param_ms == DelayModel{}.per_param_ms);
  CHECK(DelayModel::from_json(m.to_json()).to_json() == m.to_json());
  try {
    DelayModel::from_json(json::parse(R"({"base_ms":-1})"));
    FAIL("expected BadConfig");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::BadConfig);
  }
  auto c = m.coordination();
  CHECK(c.scheduling.count() == 2000);
}

TEST_CASE("canonical instructions parse back to their skill") {
  for (const auto& t : testing::shipped_registry().latest()) {
    auto steps = RuleBackend::parse_instruction(canonical_instruction(t->id));
    REQUIRE(steps.size() == 1);
    CHECK(steps[0].skill == t->id);
  }
}

TEST_CASE("csv export") {
  LatencyTrial t;
  t.label = "single:dance";
  t.skills = {"dance"};
  t.param_count = 1;
  t.rep = 0;
  t.cold = true;
  t.latency_ms = 12.34567;
  auto csv = to_csv(std::vector<LatencyTrial>{t});
  CHECK(csv == "label,skills,param_count,rep,cold,latency_ms\nsingle:dance,dance,1,0,true,12.346\n");
  CHECK(LatencyTrial::from_json(t.to_json()).latency_ms == t.latency_ms);

  auto p = testing::temp_path("csv") / "out.csv";
  try {
    export_csv(std::vector<LatencyTrial>{}, p);
    FAIL("expected EmptyInput");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyInput);
  }
}

TEST_CASE("cold trial is slower than warm trials") {
  DelayModel m;
  LatencyHarness h(testing::shipped_registry(), m);
  auto trials = h.run_single_skill_trial("dance", 4, true);
  REQUIRE(trials.size() == 4);
  CHECK(trials[0].cold);
  CHECK_FALSE(trials[1].cold);
  double warm = 0;
  for (std::size_t i = 1; i < trials.size(); ++i) warm += trials[i].latency_ms;
  warm /= 3;
  CHECK(trials[0].latency_ms > warm + m.session_init_ms * 0.5);
  CHECK(trials[0].param_count == 1);
  for (const auto& t : trials) CHECK(t.latency_ms > 0);

  auto again = h.run_single_skill_trial("dance", 2, false);
  CHECK_FALSE(again[0].cold);

  LatencyHarness fresh(testing::shipped_registry(), m);
  auto first = fresh.run_single_skill_trial("stand", 2, false);
  CHECK(first[0].cold);
  CHECK_FALSE(first[1].cold);
}

TEST_CASE("composition overhead is itemized") {
  LatencyHarness h(testing::shipped_registry());
  auto r = h.run_composition_trial("stand then dance", 2);
  CHECK(r.trials.size() == 2);
  CHECK(r.constituent_warm_means_ms.size() == 2);
  CHECK(r.mean_items.scheduling_ns > 0);
  CHECK(r.mean_items.state_transition_ns > 0);
  CHECK(r.mean_items.dependency_check_ns > 0);
  CHECK(r.overhead_ms == doctest::Approx(r.composed_mean_ms - r.constituent_sum_ms));

  for (auto bad : {"dance", "stand then dance then stand then dance then stand"}) {
    try {
      h.run_composition_trial(bad, 1);
      FAIL("expected BadK");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::BadK);
    }
  }
}
