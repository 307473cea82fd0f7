#include "ethplan/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

namespace ethplan::simulation {

using scenario::AgentState;
using scenario::Scenario;

std::string_view to_string(Predictor p) {
  return p == Predictor::kConstantVelocity ? "constant-velocity" : "attention-lstm";
}

Predictor parse_predictor(std::string_view name) {
  if (name == "constant-velocity") return Predictor::kConstantVelocity;
  if (name == "attention-lstm") return Predictor::kAttentionLstm;
  throw Error(ErrorKind::kConfig, "unknown predictor '" + std::string(name) + "'");
}

void SimConfig::validate() const {
  if (predictor == Predictor::kAttentionLstm && !params)
    throw Error(ErrorKind::kConfig, "params_file is required for the attention-lstm predictor");
  if (!(cv_sigma0 > 0.0) || !(cv_sigma_growth >= 0.0))
    throw Error(ErrorKind::kConfig, "prediction.cv_sigma0 must be > 0 and cv_sigma_growth >= 0");
  if (cv_history < 1) throw Error(ErrorKind::kConfig, "prediction.cv_history must be >= 1");
  if (!(neighbor_radius >= 0.0)) throw Error(ErrorKind::kConfig, "prediction.neighbor_radius must be >= 0");
  if (risk.quadrature_nodes < 1) throw Error(ErrorKind::kConfig, "risk.quadrature_nodes must be >= 1");
  planner.validate();
  harm.validate();
}

bool detect_collision(const AgentState& ego, const scenario::Footprint& ego_shape,
                      const AgentState& agent, const scenario::Footprint& agent_shape) {
  return geometry::boxes_overlap({ego.position(), ego.heading, ego_shape.length, ego_shape.width},
                                 {agent.position(), agent.heading, agent_shape.length, agent_shape.width});
}

std::optional<CollisionEvent> CollisionScorer::score(int step, const AgentState& ego,
                                                     const scenario::Agent& agent,
                                                     const AgentState& agent_state) {
  if (!scored_.insert(agent.id).second) return std::nullopt;
  CollisionEvent e;
  e.step = step;
  e.agent_id = agent.id;
  e.cls = agent.cls;
  e.relative_speed = (ego.velocity() - agent_state.velocity()).norm();
  const risk::Harm h = risk::harm(ego_class_, agent.cls, e.relative_speed, model_);
  e.harm_to_ego = h.to_ego;
  e.harm_to_other = h.to_other;
  return e;
}

namespace {

prediction::TrackHistory agent_history(const scenario::Agent& a, int step, int length) {
  std::vector<AgentState> states;
  for (int k = std::max(0, step - length + 1); k <= step; ++k) states.push_back(scenario::agent_state_at(a, k));
  return prediction::make_history(a.id, states, length);
}

prediction::TrackHistory ego_history(const std::vector<AgentState>& executed, int length) {
  const std::size_t n = std::min(executed.size(), static_cast<std::size_t>(length));
  return prediction::make_history("ego", std::span(executed).last(n), length);
}

// Forecasts of every agent at `step`, `horizon` steps long for the
// constant-velocity model and the network's own horizon otherwise.
std::vector<risk::AgentForecast> forecast_agents(const Scenario& s, const SimConfig& cfg, int step,
                                                 int horizon, const std::vector<AgentState>& executed) {
  std::vector<risk::AgentForecast> out;
  const bool lstm = cfg.predictor == Predictor::kAttentionLstm;
  const int length = lstm ? cfg.params->config.history : cfg.cv_history;

  std::vector<prediction::TrackHistory> histories;
  for (const auto& a : s.agents) histories.push_back(agent_history(a, step, length));
  prediction::TrackHistory ego;
  if (lstm) ego = ego_history(executed, length);

  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    const auto& a = s.agents[i];
    risk::AgentForecast f;
    f.agent_id = a.id;
    f.cls = a.cls;
    f.shape = a.shape;
    f.position = histories[i].last().position();
    if (!lstm) {
      f.forecast = prediction::constant_velocity_predict(histories[i], horizon, s.time_step,
                                                         cfg.cv_sigma0, cfg.cv_sigma_growth);
    } else {
      std::vector<prediction::TrackHistory> nbs;
      auto near = [&](const prediction::TrackHistory& h) {
        return (h.last().position() - f.position).norm() <= cfg.neighbor_radius;
      };
      if (near(ego)) nbs.push_back(ego);
      for (std::size_t k = 0; k < histories.size(); ++k)
        if (k != i && near(histories[k])) nbs.push_back(histories[k]);
      f.forecast = prediction::predict(*cfg.params, histories[i], nbs);
    }
    out.push_back(std::move(f));
  }
  return out;
}

struct PlanOutcome {
  AgentState next;
  double accel = 0.0;
  StepRecord record;
};

std::optional<PlanOutcome> plan_step(const Scenario& s, const SimConfig& cfg, const geometry::Polyline& path,
                                     const std::vector<std::vector<Vec2>>& polygons, int step,
                                     const AgentState& ego, double accel,
                                     const std::vector<AgentState>& executed, SimResult& result) {
  std::vector<planner::CandidateTrajectory> candidates;
  try {
    candidates = planner::sample_candidates(ego, path, cfg.planner, s.time_step, accel);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kInvalidArgument) return std::nullopt;  // ran off the path
    throw;
  }
  std::size_t horizon = 0;
  for (auto& c : candidates) {
    c.violations = planner::feasibility_check(c, cfg.planner, polygons);
    horizon = std::max(horizon, c.poses.size());
  }
  const auto forecasts = forecast_agents(s, cfg, step, static_cast<int>(horizon), executed);

  std::vector<risk::RiskProfile> profiles;
  profiles.reserve(candidates.size());
  for (const auto& c : candidates)
    profiles.push_back(risk::build_risk_profile(c.id, c.poses, s.ego_shape, forecasts, cfg.harm,
                                                s.time_step, cfg.risk));
  const auto costs = planner::score_candidates(candidates, profiles, cfg.planner, s.time_step);

  std::optional<planner::Selection> sel;
  try {
    sel = planner::select_trajectory(candidates, costs);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kNoFeasibleTrajectory) throw;
  }
  if (cfg.planner_log)
    result.planner_log += planner::planner_csv_rows(step, candidates, costs,
                                                    sel ? std::optional(sel->chosen) : std::nullopt);
  if (cfg.risk_log)
    for (const auto& p : profiles) result.risk_log += risk::risk_csv_rows(step, p);
  if (!sel) return std::nullopt;

  const auto& c = candidates[sel->chosen];
  PlanOutcome out;
  out.next = c.poses.front();
  out.accel = c.accel.front();
  out.record = {step, c.id, c.d_T, c.v_T, c.T, static_cast<int>(sel->ranking.size()), costs[sel->chosen]};
  return out;
}

AgentState brake(const AgentState& ego, double a_max, double dt) {
  AgentState next = ego;
  const double v1 = std::max(0.0, ego.v - a_max * dt);
  const double dist = v1 > 0.0 ? 0.5 * (ego.v + v1) * dt : ego.v * ego.v / (2.0 * a_max);
  next.x += dist * std::cos(ego.heading);
  next.y += dist * std::sin(ego.heading);
  next.v = v1;
  return next;
}

// Shared loop; `ego_track` replaces the planner when given.
SimResult simulate(const Scenario& s, const SimConfig& cfg, const scenario::Agent* ego_track,
                   std::uint64_t seed) {
  cfg.validate();
  SimResult r;
  r.scenario_id = s.id;
  r.seed = seed;
  const geometry::Polyline path(s.reference_path);
  std::vector<std::vector<Vec2>> polygons;
  for (const auto& l : s.lanelets) polygons.push_back(l.polygon());

  CollisionScorer scorer(cfg.harm, cfg.risk.ego_class);
  AgentState ego = ego_track ? scenario::agent_state_at(*ego_track, 0) : s.ego_start;
  double accel = 0.0;
  bool braking = false;
  std::vector<AgentState> executed{ego};
  const int last_step = std::min(s.goal.deadline_step, s.duration_steps);

  for (int step = 0;; ++step) {
    r.steps_executed = step;
    r.trace.push_back({step, "ego", ego});
    bool hit = false;
    for (const auto& a : s.agents) {
      const AgentState st = scenario::agent_state_at(a, step);
      r.trace.push_back({step, a.id, st});
      if (detect_collision(ego, s.ego_shape, st, a.shape)) {
        if (auto e = scorer.score(step, ego, a, st)) r.collisions.push_back(*e);
        hit = true;
      }
    }
    if (hit) {
      r.termination = "collision";
      break;
    }
    if ((ego.position() - s.goal.center).norm() <= s.goal.radius) {
      r.completed = true;
      r.termination = "goal";
      break;
    }
    if (step >= last_step) {
      r.termination = "deadline";
      break;
    }

    if (ego_track) {
      ego = scenario::agent_state_at(*ego_track, step + 1);
    } else {
      std::optional<PlanOutcome> plan;
      if (!braking) plan = plan_step(s, cfg, path, polygons, step, ego, accel, executed, r);
      if (plan) {
        ego = plan->next;
        accel = plan->accel;
        r.cost_trace.push_back(plan->record);
      } else {
        if (!braking) r.no_feasible_step = step;
        braking = true;
        accel = ego.v > 0.0 ? -cfg.planner.a_max : 0.0;
        ego = brake(ego, cfg.planner.a_max, s.time_step);
        StepRecord rec;
        rec.step = step;
        r.cost_trace.push_back(rec);
      }
    }
    executed.push_back(ego);
  }
  return r;
}

}  // namespace

SimResult run_scenario(const Scenario& s, const SimConfig& config, std::uint64_t seed) {
  return simulate(s, config, nullptr, seed);
}

SimResult replay_scenario(const Scenario& s, const scenario::Agent& ego_track, const SimConfig& config) {
  return simulate(s, config, &ego_track, 0);
}

SuiteMetrics aggregate_metrics(const std::string& variant, std::span<const SimResult> results) {
  SuiteMetrics m;
  m.variant = variant;
  m.scenarios = static_cast<int>(results.size());
  for (const auto& r : results) {
    if (r.completed) ++m.completed;
    for (const auto& e : r.collisions) {
      m.total_harm += e.harm_to_ego + e.harm_to_other;
      m.harm_ego += e.harm_to_ego;
      (scenario::is_vru(e.cls) ? m.harm_vru : m.harm_third_party) += e.harm_to_other;
    }
  }
  m.completed_rate = m.scenarios > 0 ? 100.0 * m.completed / m.scenarios : 0.0;
  return m;
}

SuiteReport evaluate_suite(std::span<const Scenario> scenarios, std::span<const Variant> variants,
                           std::uint64_t seed, int jobs) {
  if (scenarios.empty()) throw Error(ErrorKind::kConfig, "scenario suite is empty");
  for (const auto& v : variants) v.config.validate();
  SuiteReport report;
  report.results.assign(variants.size(), std::vector<SimResult>(scenarios.size()));

  const std::size_t total = variants.size() * scenarios.size();
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t k = next++; k < total; k = next++) {
      const std::size_t v = k / scenarios.size();
      const std::size_t i = k % scenarios.size();
      try {
        report.results[v][i] = run_scenario(scenarios[i], variants[v].config,
                                            derive_seed(seed, "scenario/" + scenarios[i].id));
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = total;
      }
    }
  };
  const int n = std::clamp(jobs, 1, static_cast<int>(total));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t v = 0; v < variants.size(); ++v)
    report.metrics.push_back(aggregate_metrics(variants[v].name, report.results[v]));
  return report;
}

std::string comparison_csv(std::span<const SuiteMetrics> metrics) {
  std::string out = "variant,completed_rate,total_harm,harm_ego,harm_third_party,harm_vru\n";
  for (const auto& m : metrics)
    out += m.variant + ',' + format_double(m.completed_rate) + ',' + format_double(m.total_harm) + ',' +
           format_double(m.harm_ego) + ',' + format_double(m.harm_third_party) + ',' +
           format_double(m.harm_vru) + '\n';
  return out;
}

std::string trace_csv(const SimResult& r) {
  std::string out = "step,actor,x,y,heading,v\n";
  for (const auto& row : r.trace)
    out += std::to_string(row.step) + ',' + row.actor + ',' + format_double(row.state.x) + ',' +
           format_double(row.state.y) + ',' + format_double(row.state.heading) + ',' +
           format_double(row.state.v) + '\n';
  return out;
}

nlohmann::json result_to_json(const SimResult& r) {
  nlohmann::json j;
  j["scenario_id"] = r.scenario_id;
  j["seed"] = r.seed;
  j["completed"] = r.completed;
  j["termination"] = r.termination;
  j["steps_executed"] = r.steps_executed;
  j["no_feasible_step"] = r.no_feasible_step ? nlohmann::json(*r.no_feasible_step) : nlohmann::json();
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : r.collisions)
    events.push_back({{"step", e.step},
                      {"agent_id", e.agent_id},
                      {"cls", scenario::to_string(e.cls)},
                      {"relative_speed", e.relative_speed},
                      {"harm_to_ego", e.harm_to_ego},
                      {"harm_to_other", e.harm_to_other}});
  j["collisions"] = events;
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& s : r.cost_trace)
    trace.push_back({{"step", s.step},
                     {"candidate", s.candidate},
                     {"d_T", s.d_T},
                     {"v_T", s.v_T},
                     {"T", s.T},
                     {"feasible", s.feasible},
                     {"J_origin", s.cost.J_origin},
                     {"J", s.cost.J},
                     {"J_mean", s.cost.J_mean},
                     {"J_utility", s.cost.J_utility},
                     {"J_risk", s.cost.J_risk},
                     {"omega_o", s.cost.omega_o},
                     {"omega_u", s.cost.omega_u}});
  j["cost_trace"] = trace;
  return j;
}

SimResult result_from_json(const nlohmann::json& j) {
  SimResult r;
  try {
    r.scenario_id = j.at("scenario_id").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.completed = j.at("completed").get<bool>();
    r.termination = j.at("termination").get<std::string>();
    r.steps_executed = j.at("steps_executed").get<int>();
    if (!j.at("no_feasible_step").is_null()) r.no_feasible_step = j.at("no_feasible_step").get<int>();
    for (const auto& e : j.at("collisions")) {
      CollisionEvent c;
      c.step = e.at("step").get<int>();
      c.agent_id = e.at("agent_id").get<std::string>();
      c.cls = scenario::parse_class(e.at("cls").get<std::string>());
      c.relative_speed = e.at("relative_speed").get<double>();
      c.harm_to_ego = e.at("harm_to_ego").get<double>();
      c.harm_to_other = e.at("harm_to_other").get<double>();
      r.collisions.push_back(c);
    }
    for (const auto& s : j.at("cost_trace")) {
      StepRecord rec;
      rec.step = s.at("step").get<int>();
      rec.candidate = s.at("candidate").get<int>();
      rec.d_T = s.at("d_T").get<double>();
      rec.v_T = s.at("v_T").get<double>();
      rec.T = s.at("T").get<double>();
      rec.feasible = s.at("feasible").get<int>();
      rec.cost = {s.at("J_origin").get<double>(), s.at("J").get<double>(), s.at("J_mean").get<double>(),
                  s.at("J_utility").get<double>(), s.at("J_risk").get<double>(),
                  s.at("omega_o").get<double>(), s.at("omega_u").get<double>()};
      r.cost_trace.push_back(rec);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kIo, std::string("malformed result document: ") + e.what());
  }
  return r;
}

}  // namespace ethplan::simulation
