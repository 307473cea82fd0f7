// Generates the bundled synthetic scenario suite and the toy training set.
//
//   make_suite --suite-dir data/suite --toy-dir data/toy [--seed N]
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "ethplan/scenario.hpp"

namespace fs = std::filesystem;
using namespace ethplan;
using scenario::Agent;
using scenario::AgentState;
using scenario::RoadUserClass;
using scenario::Scenario;

namespace {

constexpr double kDt = 0.2;
constexpr int kSteps = 60;
constexpr double kRoadHalfWidth = 5.25;  // three 3.5 m lanes
constexpr double kLane = 3.5;

using Motion = std::function<AgentState(double t)>;

Agent make_agent(const std::string& id, RoadUserClass cls, double length, double width,
                 const Motion& motion, int steps, double dt) {
  Agent a;
  a.id = id;
  a.cls = cls;
  a.shape = {length, width};
  for (int k = 0; k <= steps; ++k) {
    AgentState s = motion(k * dt);
    s.heading = normalize_angle(s.heading);
    a.track.push_back({k, s});
  }
  return a;
}

Motion straight(double x0, double y0, double heading, double v) {
  return [=](double t) {
    return AgentState{x0 + v * t * std::cos(heading), y0 + v * t * std::sin(heading), v, heading};
  };
}

// Lane change from y0 to y1 starting at t0 over `dur` seconds, cosine blend.
Motion lane_change(double x0, double y0, double y1, double v, double t0, double dur) {
  return [=](double t) {
    const double u = std::clamp((t - t0) / dur, 0.0, 1.0);
    const double y = y0 + (y1 - y0) * 0.5 * (1.0 - std::cos(std::numbers::pi * u));
    const double dy = (t > t0 && t < t0 + dur)
                          ? (y1 - y0) * 0.5 * std::numbers::pi / dur * std::sin(std::numbers::pi * u)
                          : 0.0;
    return AgentState{x0 + v * t, y, std::hypot(v, dy), std::atan2(dy, v)};
  };
}

Scenario base_scenario(const std::string& id, double goal_x) {
  Scenario s;
  s.id = id;
  s.time_step = kDt;
  s.duration_steps = kSteps;
  s.lanelets.push_back({"road", {{-40.0, kRoadHalfWidth}, {260.0, kRoadHalfWidth}},
                        {{-40.0, -kRoadHalfWidth}, {260.0, -kRoadHalfWidth}}});
  s.reference_path = {{-40.0, 0.0}, {60.0, 0.0}, {160.0, 0.0}, {260.0, 0.0}};
  s.ego_start = {0.0, 0.0, 10.0, 0.0};
  s.ego_shape = {4.5, 1.8};
  s.goal = {{goal_x, 0.0}, 6.0, kSteps};
  return s;
}

Scenario make_case(int index, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  auto sign = [&] { return u(rng) < 0.5 ? -1.0 : 1.0; };

  static const char* kinds[] = {"pedestrian", "cyclist", "lead", "oncoming", "cutin", "benign"};
  // 12 pedestrian, 6 cyclist, 8 lead, 6 oncoming, 8 cut-in, 10 benign.
  static const int counts[] = {12, 6, 8, 6, 8, 10};
  int kind = 0, acc = 0;
  while (index >= acc + counts[kind]) acc += counts[kind++];

  char id[32];
  std::snprintf(id, sizeof id, "s%02d_%s", index, kinds[kind]);
  Scenario s = base_scenario(id, range(75.0, 90.0));
  const double ego_v = s.ego_start.v;

  switch (kind) {
    case 0: {  // pedestrian crossing timed to meet the ego
      const double xc = range(25.0, 55.0);
      const double vp = range(1.1, 1.8);
      const double side = sign();
      const double tc = xc / ego_v + range(-0.3, 0.3);
      s.agents.push_back(make_agent("ped", RoadUserClass::kPedestrian, 0.5, 0.5,
                                    straight(xc, side * -vp * tc, side * std::numbers::pi / 2, vp),
                                    kSteps, kDt));
      if (u(rng) < 0.5)
        s.agents.push_back(make_agent("car_adj", RoadUserClass::kCar, 4.5, 1.8,
                                      straight(range(-20.0, 10.0), -side * kLane, 0.0, range(8.0, 11.0)),
                                      kSteps, kDt));
      break;
    }
    case 1: {  // cyclist crossing
      const double xc = range(30.0, 60.0);
      const double vc = range(3.5, 5.0);
      const double side = sign();
      const double tc = xc / ego_v + range(-0.2, 0.2);
      s.agents.push_back(make_agent("bike", RoadUserClass::kCyclist, 1.8, 0.6,
                                    straight(xc, side * -vc * tc, side * std::numbers::pi / 2, vc),
                                    kSteps, kDt));
      break;
    }
    case 2: {  // slow or stopped vehicle ahead in the ego lane
      const bool truck = u(rng) < 0.3;
      s.agents.push_back(make_agent("lead", truck ? RoadUserClass::kTruck : RoadUserClass::kCar,
                                    truck ? 9.0 : 4.5, truck ? 2.5 : 1.8,
                                    straight(range(25.0, 45.0), 0.0, 0.0, range(0.0, 3.0)), kSteps, kDt));
      if (u(rng) < 0.5)
        s.agents.push_back(make_agent("ped_side", RoadUserClass::kPedestrian, 0.5, 0.5,
                                      straight(range(30.0, 70.0), sign() * 6.5, 0.0, range(0.8, 1.5)),
                                      kSteps, kDt));
      break;
    }
    case 3: {  // oncoming vehicle drifting into the ego lane
      const double v = range(7.0, 10.0);
      s.agents.push_back(make_agent("oncoming", RoadUserClass::kCar, 4.5, 1.8,
                                    [=, x0 = range(90.0, 120.0)](double t) {
                                      return AgentState{x0 - v * t, 0.0, v, std::numbers::pi};
                                    },
                                    kSteps, kDt));
      break;
    }
    case 4: {  // adjacent vehicle cutting in ahead, slower than the ego
      const double side = sign();
      s.agents.push_back(make_agent("cutin", RoadUserClass::kCar, 4.5, 1.8,
                                    lane_change(range(10.0, 20.0), side * kLane, 0.0, range(4.0, 7.0),
                                                range(0.5, 1.5), range(1.5, 2.5)),
                                    kSteps, kDt));
      break;
    }
    default: {  // parallel traffic and a pedestrian on the verge
      s.agents.push_back(make_agent("car_left", RoadUserClass::kCar, 4.5, 1.8,
                                    straight(range(-15.0, 15.0), kLane, 0.0, range(8.0, 12.0)), kSteps, kDt));
      if (u(rng) < 0.6)
        s.agents.push_back(make_agent("car_right", RoadUserClass::kCar, 4.5, 1.8,
                                      straight(range(-15.0, 15.0), -kLane, 0.0, range(8.0, 12.0)), kSteps,
                                      kDt));
      s.agents.push_back(make_agent("walker", RoadUserClass::kPedestrian, 0.5, 0.5,
                                    straight(range(20.0, 80.0), -7.0, 0.0, range(0.8, 1.5)), kSteps, kDt));
      break;
    }
  }
  return s;
}

// Agents weaving with smooth speed and heading changes, for predictor training.
Scenario make_toy(int index, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  Scenario s = base_scenario("toy" + std::to_string(index), 80.0);
  s.agents.clear();
  for (int a = 0; a < 4; ++a) {
    const double x0 = range(0.0, 30.0);
    const double y0 = range(-4.0, 4.0);
    const double v0 = range(1.0, 4.0);
    const double acc = range(-0.2, 0.3);
    const double h0 = range(-0.3, 0.3);
    const double yaw = range(-0.08, 0.08);
    Agent ag;
    ag.id = "a" + std::to_string(a);
    ag.cls = a == 0 ? RoadUserClass::kCyclist : RoadUserClass::kPedestrian;
    ag.shape = {1.0, 0.6};
    double x = x0, y = y0;
    for (int k = 0; k <= kSteps; ++k) {
      const double t = k * kDt;
      const double v = std::max(0.2, v0 + acc * t);
      const double h = normalize_angle(h0 + yaw * t);
      ag.track.push_back({k, {x, y, v, h}});
      x += v * kDt * std::cos(h);
      y += v * kDt * std::sin(h);
    }
    s.agents.push_back(std::move(ag));
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate the bundled scenario suite and toy dataset"};
  std::string suite_dir, toy_dir;
  std::uint64_t seed = 2024;
  app.add_option("--suite-dir", suite_dir, "output directory for the 50-scenario suite");
  app.add_option("--toy-dir", toy_dir, "output directory for the toy training set");
  app.add_option("--seed", seed, "generator seed");
  CLI11_PARSE(app, argc, argv);

  try {
    if (!suite_dir.empty()) {
      fs::create_directories(suite_dir);
      std::mt19937_64 rng(derive_seed(seed, "suite"));
      for (int i = 0; i < 50; ++i) {
        const Scenario s = make_case(i, rng);
        scenario::write_scenario(s, fs::path(suite_dir) / (s.id + ".json"));
      }
    }
    if (!toy_dir.empty()) {
      fs::create_directories(toy_dir);
      std::mt19937_64 rng(derive_seed(seed, "toy"));
      nlohmann::json ds;
      ds["scenarios"] = nlohmann::json::array();
      ds["samples"] = nlohmann::json::array();
      for (int i = 0; i < 4; ++i) {
        const Scenario s = make_toy(i, rng);
        const std::string file = s.id + ".json";
        scenario::write_scenario(s, fs::path(toy_dir) / file);
        ds["scenarios"].push_back(file);
        // Eight samples per scene: two anchors for each agent.
        for (const auto& a : s.agents)
          for (int anchor : {10, 30})
            ds["samples"].push_back({{"scenario", i}, {"agent", a.id}, {"anchor", anchor}});
      }
      std::ofstream out(fs::path(toy_dir) / "dataset.json");
      out << ds.dump(1) << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "make_suite: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
