#include "ethplan/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ethplan::scenario {

using nlohmann::json;

std::string_view to_string(RoadUserClass cls) {
  switch (cls) {
    case RoadUserClass::kCar: return "car";
    case RoadUserClass::kTruck: return "truck";
    case RoadUserClass::kPedestrian: return "pedestrian";
    case RoadUserClass::kCyclist: return "cyclist";
  }
  return "car";
}

RoadUserClass parse_class(std::string_view name) {
  if (name == "car") return RoadUserClass::kCar;
  if (name == "truck") return RoadUserClass::kTruck;
  if (name == "pedestrian") return RoadUserClass::kPedestrian;
  if (name == "cyclist") return RoadUserClass::kCyclist;
  throw Error(ErrorKind::kInvalidArgument,
              "unknown road-user class '" + std::string(name) + "'");
}

std::vector<Vec2> Lanelet::polygon() const {
  std::vector<Vec2> poly(left.begin(), left.end());
  poly.insert(poly.end(), right.rbegin(), right.rend());
  return poly;
}

std::vector<Violation> validate_scenario(const Scenario& s) {
  std::vector<Violation> out;
  auto add = [&out](std::string code, std::string msg) {
    out.push_back({std::move(code), std::move(msg)});
  };

  if (!(s.time_step > 0.0) || !std::isfinite(s.time_step))
    add("time_step.nonpositive", "time_step must be > 0");
  if (s.duration_steps < 1) add("duration_steps.range", "duration_steps must be >= 1");

  if (s.reference_path.size() < 2) {
    add("reference_path.short", "reference_path needs at least 2 points");
  } else {
    for (std::size_t i = 1; i < s.reference_path.size(); ++i) {
      if ((s.reference_path[i] - s.reference_path[i - 1]).norm() <= 0.0) {
        add("reference_path.degenerate_segment",
            "reference_path segment " + std::to_string(i - 1) + " has zero length");
      }
    }
  }

  if (!(s.ego_shape.length > 0.0) || !(s.ego_shape.width > 0.0))
    add("ego_shape.nonpositive", "ego_shape dimensions must be > 0");
  if (s.ego_start.v < 0.0) add("ego_start.v.negative", "ego_start.v must be >= 0");
  if (std::abs(s.ego_start.heading) > std::numbers::pi)
    add("ego_start.heading.range", "ego_start.heading must lie in [-pi, pi]");

  if (!(s.goal.radius > 0.0)) add("goal.radius.nonpositive", "goal.radius must be > 0");
  if (s.goal.deadline_step > s.duration_steps || s.goal.deadline_step < 0)
    add("goal.deadline_step.range", "goal.deadline_step must lie in [0, duration_steps]");

  for (const auto& l : s.lanelets) {
    if (l.left.size() < 2 || l.right.size() < 2)
      add("lanelet.short_bound", "lanelet '" + l.id + "' bounds need at least 2 points");
  }

  std::set<std::string> ids;
  for (const auto& a : s.agents) {
    const std::string who = "agent '" + a.id + "'";
    if (!ids.insert(a.id).second) add("agent.duplicate_id", who + " id is not unique");
    if (!(a.shape.length > 0.0) || !(a.shape.width > 0.0))
      add("agent.shape.nonpositive", who + " shape dimensions must be > 0");
    if (a.track.empty()) {
      add("agent.track.empty", who + " has an empty track");
      continue;
    }
    if (a.track.front().step != 0)
      add("agent.track.start", who + " track must cover step 0");
    for (std::size_t i = 1; i < a.track.size(); ++i) {
      if (a.track[i].step <= a.track[i - 1].step) {
        add("agent.track.non_monotone", who + " track steps must be strictly increasing");
        break;
      }
    }
    for (const auto& p : a.track) {
      if (p.state.v < 0.0) {
        add("agent.track.v.negative", who + " has negative speed at step " +
                                          std::to_string(p.step));
        break;
      }
    }
    for (const auto& p : a.track) {
      if (std::abs(p.state.heading) > std::numbers::pi) {
        add("agent.track.heading.range", who + " heading outside [-pi, pi] at step " +
                                             std::to_string(p.step));
        break;
      }
    }
  }
  return out;
}

namespace {

[[noreturn]] void schema_error(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::kScenario, "schema violation at '" + where + "': " + what);
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed,
                    const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      schema_error(where.empty() ? it.key() : where + "." + it.key(), "unknown key");
  }
}

const json& require(const json& obj, const char* key, const std::string& where) {
  const std::string path = where.empty() ? key : where + "." + key;
  if (!obj.is_object()) schema_error(where, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(path, "missing required field");
  return *it;
}

double number(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number()) schema_error(where.empty() ? key : where + "." + key, "expected a number");
  return v.get<double>();
}

int integer(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number_integer())
    schema_error(where.empty() ? key : where + "." + key, "expected an integer");
  return v.get<int>();
}

std::string string(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_string()) schema_error(where.empty() ? key : where + "." + key, "expected a string");
  return v.get<std::string>();
}

Vec2 point(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    schema_error(where, "expected [x, y]");
  return {v[0].get<double>(), v[1].get<double>()};
}

std::vector<Vec2> polyline(const json& v, const std::string& where) {
  if (!v.is_array()) schema_error(where, "expected an array of [x, y]");
  std::vector<Vec2> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(point(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

AgentState state(const json& v, const std::string& where) {
  AgentState s;
  s.x = number(v, "x", where);
  s.y = number(v, "y", where);
  s.v = number(v, "v", where);
  s.heading = number(v, "heading", where);
  return s;
}

Footprint footprint(const json& v, const std::string& where) {
  reject_unknown(v, {"length", "width"}, where);
  return {number(v, "length", where), number(v, "width", where)};
}

json to_json(const Vec2& p) { return json::array({p.x, p.y}); }

json to_json(const std::vector<Vec2>& line) {
  json arr = json::array();
  for (const auto& p : line) arr.push_back(to_json(p));
  return arr;
}

}  // namespace

Scenario scenario_from_json(const json& doc) {
  if (!doc.is_object()) schema_error("<root>", "expected an object");
  reject_unknown(doc,
                 {"id", "time_step", "duration_steps", "lanelets", "reference_path",
                  "ego_start", "ego_shape", "goal", "agents"},
                 "");
  Scenario s;
  s.id = string(doc, "id", "");
  s.time_step = number(doc, "time_step", "");
  s.duration_steps = integer(doc, "duration_steps", "");

  const json& lanelets = require(doc, "lanelets", "");
  if (!lanelets.is_array()) schema_error("lanelets", "expected an array");
  for (std::size_t i = 0; i < lanelets.size(); ++i) {
    const std::string where = "lanelets[" + std::to_string(i) + "]";
    reject_unknown(lanelets[i], {"id", "left", "right"}, where);
    Lanelet l;
    l.id = string(lanelets[i], "id", where);
    l.left = polyline(require(lanelets[i], "left", where), where + ".left");
    l.right = polyline(require(lanelets[i], "right", where), where + ".right");
    s.lanelets.push_back(std::move(l));
  }

  s.reference_path = polyline(require(doc, "reference_path", ""), "reference_path");

  const json& ego = require(doc, "ego_start", "");
  reject_unknown(ego, {"x", "y", "v", "heading"}, "ego_start");
  s.ego_start = state(ego, "ego_start");
  s.ego_shape = footprint(require(doc, "ego_shape", ""), "ego_shape");

  const json& goal = require(doc, "goal", "");
  reject_unknown(goal, {"center", "radius", "deadline_step"}, "goal");
  s.goal.center = point(require(goal, "center", "goal"), "goal.center");
  s.goal.radius = number(goal, "radius", "goal");
  s.goal.deadline_step = integer(goal, "deadline_step", "goal");

  const json& agents = require(doc, "agents", "");
  if (!agents.is_array()) schema_error("agents", "expected an array");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const std::string where = "agents[" + std::to_string(i) + "]";
    const json& aj = agents[i];
    reject_unknown(aj, {"id", "cls", "shape", "track"}, where);
    Agent a;
    a.id = string(aj, "id", where);
    const std::string who = where + " ('" + a.id + "')";
    try {
      a.cls = parse_class(string(aj, "cls", who));
    } catch (const Error& e) {
      schema_error(who + ".cls", e.what());
    }
    a.shape = footprint(require(aj, "shape", who), who + ".shape");
    const json& track = require(aj, "track", who);
    if (!track.is_array()) schema_error(who + ".track", "expected an array");
    for (std::size_t k = 0; k < track.size(); ++k) {
      const std::string tw = who + ".track[" + std::to_string(k) + "]";
      reject_unknown(track[k], {"step", "x", "y", "v", "heading"}, tw);
      a.track.push_back({integer(track[k], "step", tw), state(track[k], tw)});
    }
    s.agents.push_back(std::move(a));
  }

  auto violations = validate_scenario(s);
  if (!violations.empty()) {
    std::ostringstream msg;
    msg << "invariant violation in scenario '" << s.id << "':";
    for (const auto& v : violations) msg << " [" << v.code << "] " << v.message << ";";
    throw Error(ErrorKind::kScenario, msg.str());
  }
  return s;
}

json scenario_to_json(const Scenario& s) {
  json doc;
  doc["id"] = s.id;
  doc["time_step"] = s.time_step;
  doc["duration_steps"] = s.duration_steps;
  json lanelets = json::array();
  for (const auto& l : s.lanelets)
    lanelets.push_back({{"id", l.id}, {"left", to_json(l.left)}, {"right", to_json(l.right)}});
  doc["lanelets"] = lanelets;
  doc["reference_path"] = to_json(s.reference_path);
  doc["ego_start"] = {{"x", s.ego_start.x},
                      {"y", s.ego_start.y},
                      {"v", s.ego_start.v},
                      {"heading", s.ego_start.heading}};
  doc["ego_shape"] = {{"length", s.ego_shape.length}, {"width", s.ego_shape.width}};
  doc["goal"] = {{"center", to_json(s.goal.center)},
                 {"radius", s.goal.radius},
                 {"deadline_step", s.goal.deadline_step}};
  json agents = json::array();
  for (const auto& a : s.agents) {
    json track = json::array();
    for (const auto& p : a.track) {
      track.push_back({{"step", p.step},
                       {"x", p.state.x},
                       {"y", p.state.y},
                       {"v", p.state.v},
                       {"heading", p.state.heading}});
    }
    agents.push_back({{"id", a.id},
                      {"cls", std::string(to_string(a.cls))},
                      {"shape", {{"length", a.shape.length}, {"width", a.shape.width}}},
                      {"track", track}});
  }
  doc["agents"] = agents;
  return doc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kScenario, "cannot read scenario file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kScenario, "malformed scenario file " + path.string() + ": " + e.what());
  }
  return scenario_from_json(doc);
}

void write_scenario(const Scenario& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << scenario_to_json(s).dump(1) << '\n';
}

AgentState agent_state_at(const Agent& a, double step) {
  if (a.track.empty() || step < a.track.front().step) {
    throw Error(ErrorKind::kInvalidArgument,
                "agent '" + a.id + "' has no state before step " +
                    std::to_string(a.track.empty() ? 0 : a.track.front().step));
  }
  if (step >= a.track.back().step) return a.track.back().state;

  auto hi = std::upper_bound(a.track.begin(), a.track.end(), step,
                             [](double s, const TrackPoint& p) { return s < p.step; });
  auto lo = std::prev(hi);
  if (step == lo->step) return lo->state;

  const double w = (step - lo->step) / static_cast<double>(hi->step - lo->step);
  const AgentState& p = lo->state;
  const AgentState& q = hi->state;
  AgentState r;
  r.x = p.x + w * (q.x - p.x);
  r.y = p.y + w * (q.y - p.y);
  r.v = p.v + w * (q.v - p.v);
  r.heading = normalize_angle(p.heading + w * angle_diff(q.heading, p.heading));
  return r;
}

}  // namespace ethplan::scenario
