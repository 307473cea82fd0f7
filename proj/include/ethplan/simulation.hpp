#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ethplan/geometry.hpp"
#include "ethplan/network.hpp"
#include "ethplan/planner.hpp"
#include "ethplan/risk.hpp"
#include "ethplan/scenario.hpp"

namespace ethplan::simulation {

enum class Predictor { kConstantVelocity, kAttentionLstm };

std::string_view to_string(Predictor p);
Predictor parse_predictor(std::string_view name);  // throws kConfig

struct SimConfig {
  Predictor predictor = Predictor::kConstantVelocity;
  std::shared_ptr<const prediction::NetworkParams> params;  // attention-lstm only
  double cv_sigma0 = 0.5;        // meters
  double cv_sigma_growth = 0.5;  // meters per second
  int cv_history = 8;
  double neighbor_radius = 30.0;  // meters, for the attention-lstm scene
  planner::PlannerConfig planner;
  risk::HarmModel harm;
  risk::RiskOptions risk;
  bool planner_log = false;
  bool risk_log = false;

  void validate() const;  // throws kConfig
};

struct CollisionEvent {
  int step = 0;
  std::string agent_id;
  scenario::RoadUserClass cls = scenario::RoadUserClass::kCar;
  double relative_speed = 0.0;
  double harm_to_ego = 0.0;
  double harm_to_other = 0.0;
};

// Chosen plan of one step; candidate -1 marks an emergency-braking step.
struct StepRecord {
  int step = 0;
  int candidate = -1;
  double d_T = 0.0;
  double v_T = 0.0;
  double T = 0.0;
  int feasible = 0;
  planner::CostBreakdown cost;
};

struct TraceRow {
  int step = 0;
  std::string actor;
  scenario::AgentState state;
};

struct SimResult {
  std::string scenario_id;
  std::uint64_t seed = 0;  // the loop itself draws nothing; kept for provenance
  bool completed = false;
  std::string termination;  // goal, deadline, collision
  int steps_executed = 0;
  std::optional<int> no_feasible_step;
  std::vector<CollisionEvent> collisions;
  std::vector<StepRecord> cost_trace;
  std::vector<TraceRow> trace;
  std::string planner_log;  // CSV rows, when enabled
  std::string risk_log;
};

// Oriented-rectangle overlap; touching counts.
bool detect_collision(const scenario::AgentState& ego, const scenario::Footprint& ego_shape,
                      const scenario::AgentState& agent, const scenario::Footprint& agent_shape);

// Scores each agent at most once per scenario.
class CollisionScorer {
 public:
  explicit CollisionScorer(const risk::HarmModel& model,
                           scenario::RoadUserClass ego_class = scenario::RoadUserClass::kCar)
      : model_(model), ego_class_(ego_class) {}

  // Event for a detected overlap, or nothing if the agent was already scored.
  std::optional<CollisionEvent> score(int step, const scenario::AgentState& ego,
                                      const scenario::Agent& agent,
                                      const scenario::AgentState& agent_state);

 private:
  risk::HarmModel model_;
  scenario::RoadUserClass ego_class_;
  std::set<std::string> scored_;
};

// Closed loop: forecast, plan, execute the first step, advance replayed
// agents. When no candidate is feasible the ego brakes at a_max until it
// stops and then holds; planning does not resume.
SimResult run_scenario(const scenario::Scenario& s, const SimConfig& config, std::uint64_t seed);

// Same loop with the ego following a recorded track instead of the planner.
SimResult replay_scenario(const scenario::Scenario& s, const scenario::Agent& ego_track,
                          const SimConfig& config);

struct SuiteMetrics {
  std::string variant;
  int scenarios = 0;
  int completed = 0;
  double completed_rate = 0.0;  // percent
  double total_harm = 0.0;
  double harm_ego = 0.0;
  double harm_third_party = 0.0;
  double harm_vru = 0.0;
};

// Sums in the order given.
SuiteMetrics aggregate_metrics(const std::string& variant, std::span<const SimResult> results);

struct Variant {
  std::string name;
  SimConfig config;
};

struct SuiteReport {
  std::vector<SuiteMetrics> metrics;            // one per variant
  std::vector<std::vector<SimResult>> results;  // [variant][scenario]
};

// Scenarios run independently on up to `jobs` threads; results are placed by
// index so the report does not depend on scheduling.
SuiteReport evaluate_suite(std::span<const scenario::Scenario> scenarios,
                           std::span<const Variant> variants, std::uint64_t seed, int jobs = 1);

std::string comparison_csv(std::span<const SuiteMetrics> metrics);
std::string trace_csv(const SimResult& r);
nlohmann::json result_to_json(const SimResult& r);
SimResult result_from_json(const nlohmann::json& j);

}  // namespace ethplan::simulation
