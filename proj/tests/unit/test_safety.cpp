#include <cmath>
#include <limits>
#include <random>

#include "helpers.hpp"
#include "opengo/safety.hpp"

using namespace opengo;

TEST_CASE("assess examples") {
  RobotState s;
  s.battery = 80.0;
  CHECK(safety::assess(s).safe());

  s.pitch = 1.2;
  auto v = safety::assess(s);
  CHECK_FALSE(v.safe());
  CHECK(v.has(safety::Reason::TILT_LIMIT));

  RobotState low;
  low.battery = 3.0;
  auto b = safety::assess(low);
  CHECK_FALSE(b.safe());
  CHECK(b.has(safety::Reason::BATTERY_CUTOFF));

  RobotState hit;
  hit.collision = true;
  CHECK(safety::assess(hit).has(safety::Reason::COLLISION));

  RobotState fallen;
  fallen.posture = Posture::fallen;
  CHECK(safety::assess(fallen).has(safety::Reason::CONSTRAINT_RUNTIME_VIOLATION));
}

TEST_CASE("assess thresholds are strict and configurable") {
  RobotState s;
  s.roll = 0.9;
  CHECK(safety::assess(s).safe());
  s.roll = -0.9000001;
  CHECK_FALSE(safety::assess(s).safe());
  safety::Limits loose{1.0, 5.0};
  CHECK(safety::assess(s, loose).safe());
  s.roll = 0;
  s.battery = 5.0;
  CHECK(safety::assess(s).safe());
}

TEST_CASE("assess is total on non-finite input") {
  RobotState s;
  s.pitch = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(safety::assess(s).safe());
  RobotState b;
  b.battery = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(safety::assess(b).safe());
}

TEST_CASE("property: safe iff no reasons, and pure") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ang(-1.5, 1.5), bat(0.0, 100.0);
  for (int i = 0; i < 5000; ++i) {
    RobotState s;
    s.roll = ang(rng);
    s.pitch = ang(rng);
    s.battery = bat(rng);
    s.collision = rng() % 7 == 0;
    s.posture = static_cast<Posture>(rng() % 4);
    auto v = safety::assess(s);
    CHECK(v.safe() == v.reasons.empty());
    const bool expect = std::abs(s.roll) <= 0.9 && std::abs(s.pitch) <= 0.9 && s.battery >= 5.0 &&
                        !s.collision && s.posture != Posture::fallen;
    CHECK(v.safe() == expect);
    CHECK(safety::assess(s).reasons.size() == v.reasons.size());
  }
}

TEST_CASE("limits JSON keys") {
  auto l = safety::limits_from_json({{"tilt_limit_rad", 0.5}, {"battery_cutoff_pct", 10.0}});
  CHECK(l.tilt_limit_rad == 0.5);
  CHECK(l.battery_cutoff_pct == 10.0);
  CHECK(safety::to_json(l)["tilt_limit_rad"] == 0.5);
}
