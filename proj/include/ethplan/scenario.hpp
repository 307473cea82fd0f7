#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ethplan/common.hpp"

namespace ethplan::scenario {

enum class RoadUserClass { kCar, kTruck, kPedestrian, kCyclist };

std::string_view to_string(RoadUserClass cls);
RoadUserClass parse_class(std::string_view name);  // throws kInvalidArgument

inline bool is_vru(RoadUserClass cls) {
  return cls == RoadUserClass::kPedestrian || cls == RoadUserClass::kCyclist;
}

struct AgentState {
  double x = 0.0;
  double y = 0.0;
  double v = 0.0;
  double heading = 0.0;

  Vec2 position() const { return {x, y}; }
  Vec2 velocity() const { return {v * std::cos(heading), v * std::sin(heading)}; }
  bool operator==(const AgentState&) const = default;
};

struct Footprint {
  double length = 0.0;
  double width = 0.0;
  bool operator==(const Footprint&) const = default;
};

struct TrackPoint {
  int step = 0;
  AgentState state;
  bool operator==(const TrackPoint&) const = default;
};

struct Agent {
  std::string id;
  RoadUserClass cls = RoadUserClass::kCar;
  Footprint shape;
  std::vector<TrackPoint> track;
  bool operator==(const Agent&) const = default;
};

struct Lanelet {
  std::string id;
  std::vector<Vec2> left;
  std::vector<Vec2> right;
  bool operator==(const Lanelet&) const = default;

  // Closed boundary: left bound followed by the reversed right bound.
  std::vector<Vec2> polygon() const;
};

struct GoalRegion {
  Vec2 center;
  double radius = 0.0;
  int deadline_step = 0;
  bool operator==(const GoalRegion&) const = default;
};

struct Scenario {
  std::string id;
  double time_step = 0.0;
  int duration_steps = 0;
  std::vector<Lanelet> lanelets;
  std::vector<Agent> agents;
  AgentState ego_start;
  Footprint ego_shape;
  GoalRegion goal;
  std::vector<Vec2> reference_path;
  bool operator==(const Scenario&) const = default;
};

struct Violation {
  std::string code;
  std::string message;
};

std::vector<Violation> validate_scenario(const Scenario& s);

// Parses and validates. Throws Error{kScenario} naming the offending
// field or agent.
Scenario scenario_from_json(const nlohmann::json& doc);
nlohmann::json scenario_to_json(const Scenario& s);

Scenario load_scenario(const std::filesystem::path& path);
void write_scenario(const Scenario& s, const std::filesystem::path& path);

// Exact at recorded steps, linear in between (shortest arc for heading),
// hold-last past the end. Throws kInvalidArgument before the first sample.
AgentState agent_state_at(const Agent& a, double step);
inline AgentState agent_state_at(const Agent& a, int step) {
  return agent_state_at(a, static_cast<double>(step));
}

}  // namespace ethplan::scenario
