#include <algorithm>
#include <filesystem>
#include <random>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "ethplan/scenario.hpp"
#include "test_util.hpp"

using namespace ethplan;
using namespace ethplan::scenario;

namespace {

bool has_code(const std::vector<Violation>& v, const std::string& code) {
  return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.code == code; });
}

}  // namespace

TEST_CASE("minimal fixture loads with its counts") {
  const Scenario s = load_scenario(fixture("minimal.json"));
  CHECK(s.id == "minimal");
  CHECK(s.agents.size() == 1);
  CHECK(s.lanelets.size() == 1);
  CHECK(s.duration_steps == 4);
  CHECK(s.time_step == 0.5);
  CHECK(s.agents[0].track.size() == 4);
  CHECK(s.goal.radius == 3.0);
  CHECK(validate_scenario(s).empty());
}

TEST_CASE("missing time_step names the field") {
  CHECK_THROWS_WITH_AS(load_scenario(fixture("missing_time_step.json")),
                       doctest::Contains("time_step"), Error);
  try {
    load_scenario(fixture("missing_time_step.json"));
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kScenario);
  }
}

TEST_CASE("non-monotone track names the agent") {
  try {
    load_scenario(fixture("nonmonotone_track.json"));
    FAIL("expected a scenario error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kScenario);
    CHECK(std::string(e.what()).find("walker") != std::string::npos);
  }
}

TEST_CASE("unknown keys and unreadable files are scenario errors") {
  CHECK_THROWS_AS(load_scenario(fixture("unknown_key.json")), Error);
  CHECK_THROWS_AS(load_scenario(fixture("truncated.json")), Error);
  CHECK_THROWS_AS(load_scenario(fixture("does_not_exist.json")), Error);
}

TEST_CASE("validate_scenario reports goal radius and every defect") {
  Scenario s = load_scenario(fixture("minimal.json"));
  s.goal.radius = 0.0;
  auto v = validate_scenario(s);
  REQUIRE(v.size() == 1);
  CHECK(v[0].code == "goal.radius.nonpositive");

  s.time_step = -0.1;
  v = validate_scenario(s);
  CHECK(v.size() == 2);
  CHECK(has_code(v, "goal.radius.nonpositive"));
  CHECK(has_code(v, "time_step.nonpositive"));
  for (const auto& x : v) CHECK_FALSE(x.message.empty());
}

TEST_CASE("validate_scenario covers the remaining invariants") {
  const Scenario base = load_scenario(fixture("minimal.json"));
  auto with = [&](auto mutate) {
    Scenario s = base;
    mutate(s);
    return validate_scenario(s);
  };
  CHECK(has_code(with([](Scenario& s) { s.duration_steps = 0; }), "duration_steps.range"));
  CHECK(has_code(with([](Scenario& s) { s.reference_path.resize(1); }), "reference_path.short"));
  CHECK(has_code(with([](Scenario& s) { s.reference_path[1] = s.reference_path[0]; }),
                 "reference_path.degenerate_segment"));
  CHECK(has_code(with([](Scenario& s) { s.goal.deadline_step = 5; }), "goal.deadline_step.range"));
  CHECK(has_code(with([](Scenario& s) { s.agents[0].track[0].step = 1; }), "agent.track.start"));
  CHECK(has_code(with([](Scenario& s) { s.agents[0].track[2].state.v = -1; }), "agent.track.v.negative"));
  CHECK(has_code(with([](Scenario& s) { s.agents[0].shape.width = 0; }), "agent.shape.nonpositive"));
  CHECK(has_code(with([](Scenario& s) { s.agents.push_back(s.agents[0]); }), "agent.duplicate_id"));
  CHECK(has_code(with([](Scenario& s) { s.ego_shape.length = 0; }), "ego_shape.nonpositive"));
}

TEST_CASE("agent_state_at: exact samples, interpolation, hold-last") {
  Agent a;
  a.id = "a";
  a.track = {{0, {0.0, 0.0, 1.0, 0.0}}, {2, {4.0, 2.0, 3.0, 0.5}}, {3, {10.0, 0.0, 2.0, 0.0}}};
  const AgentState s3 = agent_state_at(a, 3);
  CHECK(s3.x == 10.0);
  CHECK(s3.y == 0.0);
  const AgentState s1 = agent_state_at(a, 1);
  CHECK(s1.x == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(s1.y == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s1.v == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(s1.heading == doctest::Approx(0.25).epsilon(1e-15));
  const AgentState past = agent_state_at(a, 40);
  CHECK(past.x == 10.0);
  CHECK(past.v == 2.0);
  CHECK_THROWS_AS(agent_state_at(a, -1), Error);
}

TEST_CASE("agent_state_at interpolates heading along the shortest arc") {
  const Scenario s = load_scenario(fixture("minimal.json"));
  // Samples at pi and -pi are the same direction: no swing through zero.
  const AgentState mid = agent_state_at(s.agents[0], 2);
  CHECK(std::abs(std::abs(mid.heading) - std::numbers::pi) < 1e-12);
  CHECK(mid.x == doctest::Approx(28.0));

  Agent a;
  a.track = {{0, {0, 0, 1, 3.0}}, {1, {1, 0, 1, -3.0}}};
  const double h = agent_state_at(a, 0.5).heading;
  CHECK(std::abs(std::abs(h) - std::numbers::pi) < 1e-9);
}

TEST_CASE("agent_state_at is continuous inside segments") {
  Agent a;
  a.track = {{0, {0, 0, 1, 0.1}}, {5, {10, 3, 4, 1.0}}, {9, {12, -1, 0, -2.5}}};
  for (double step : {0.5, 2.0, 4.9, 5.5, 8.2}) {
    const AgentState lo = agent_state_at(a, step - 1e-9);
    const AgentState hi = agent_state_at(a, step + 1e-9);
    CHECK(std::abs(lo.x - hi.x) < 1e-7);
    CHECK(std::abs(lo.y - hi.y) < 1e-7);
    CHECK(std::abs(lo.v - hi.v) < 1e-7);
    CHECK(std::abs(angle_diff(lo.heading, hi.heading)) < 1e-7);
  }
}

TEST_CASE("write then load round-trips random valid scenarios") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::uniform_real_distribution<double> pos(0.1, 10.0);
  std::uniform_real_distribution<double> ang(-3.14159, 3.14159);
  TempDir dir("roundtrip");
  for (int trial = 0; trial < 25; ++trial) {
    Scenario s = load_scenario(fixture("minimal.json"));
    s.id = "rt" + std::to_string(trial);
    s.time_step = pos(rng) / 10.0;
    s.ego_start = {u(rng), u(rng), pos(rng), ang(rng)};
    s.goal.center = {u(rng), u(rng)};
    s.agents.clear();
    const int n = static_cast<int>(rng() % 4);
    for (int k = 0; k < n; ++k) {
      Agent a;
      a.id = "a" + std::to_string(k);
      a.cls = static_cast<RoadUserClass>(rng() % 4);
      a.shape = {pos(rng), pos(rng)};
      int step = 0;
      for (int j = 0; j < 5; ++j) {
        a.track.push_back({step, {u(rng), u(rng), pos(rng), ang(rng)}});
        step += 1 + static_cast<int>(rng() % 3);
      }
      s.agents.push_back(a);
    }
    REQUIRE(validate_scenario(s).empty());
    const auto path = dir.path() / (s.id + ".json");
    write_scenario(s, path);
    CHECK(load_scenario(path) == s);
  }
}

TEST_CASE("validation agrees with loading the serialized form") {
  const Scenario base = load_scenario(fixture("minimal.json"));
  TempDir dir("agree");
  std::vector<Scenario> cases(4, base);
  cases[1].goal.radius = -1.0;
  cases[2].agents[0].track[1].step = 0;
  cases[3].duration_steps = 0;
  for (std::size_t k = 0; k < cases.size(); ++k) {
    const auto path = dir.path() / ("c" + std::to_string(k) + ".json");
    std::ofstream(path) << scenario_to_json(cases[k]).dump();
    bool loaded = true;
    try {
      load_scenario(path);
    } catch (const Error&) {
      loaded = false;
    }
    CHECK(loaded == validate_scenario(cases[k]).empty());
  }
}

TEST_CASE("VRU membership follows class") {
  CHECK(is_vru(RoadUserClass::kPedestrian));
  CHECK(is_vru(RoadUserClass::kCyclist));
  CHECK_FALSE(is_vru(RoadUserClass::kCar));
  CHECK_FALSE(is_vru(RoadUserClass::kTruck));
  CHECK(parse_class("truck") == RoadUserClass::kTruck);
  CHECK_THROWS_AS(parse_class("tram"), Error);
}
