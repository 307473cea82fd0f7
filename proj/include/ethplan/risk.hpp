#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "ethplan/geometry.hpp"
#include "ethplan/prediction.hpp"
#include "ethplan/scenario.hpp"

namespace ethplan::risk {

using scenario::RoadUserClass;

struct ClassHarm {
  double beta0 = -5.0;
  double beta1 = 0.25;   // per m/s, must be > 0
  double kappa = 1.0;    // vulnerability multiplier
};

struct HarmModel {
  // Indexed by RoadUserClass: car, truck, pedestrian, cyclist.
  std::array<ClassHarm, 4> classes{ClassHarm{-5.0, 0.25, 1.0}, ClassHarm{-5.0, 0.25, 1.0},
                                   ClassHarm{-3.5, 0.35, 1.0}, ClassHarm{-3.5, 0.35, 1.0}};
  // Ego occupants are harmed more by heavier partners.
  double truck_ego_factor = 1.5;

  const ClassHarm& of(RoadUserClass cls) const { return classes[static_cast<std::size_t>(cls)]; }
  ClassHarm& of(RoadUserClass cls) { return classes[static_cast<std::size_t>(cls)]; }
  void validate() const;  // throws kConfig
};

struct Harm {
  double to_ego = 0.0;
  double to_other = 0.0;
};

// Logistic harm per party, capped at 1. Ego occupants use the ego class's
// coefficients.
Harm harm(RoadUserClass ego_cls, RoadUserClass other_cls, double relative_speed,
          const HarmModel& model);

// R = p * h.
double risk(double p, double h);

// Gauss-Legendre rule on [-1, 1].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
// Cached per node count; safe to call concurrently.
const QuadratureRule& gauss_legendre(int n);

// Probability that a point drawn from `g` lies in `box`. The integral runs
// over the box in its own frame, clipped to +-6.5 sigma of the Gaussian; the
// inner limits follow the conditional distribution so correlated densities
// stay resolved.
double box_probability(const prediction::GaussianStep& g, const geometry::OrientedBox& box,
                       int nodes = 24);

// Per-step probability that the obstacle centre enters the ego footprint
// expanded by the obstacle's half dimensions, oriented by the ego heading.
std::vector<double> collision_probability(std::span<const scenario::AgentState> ego_poses,
                                          const scenario::Footprint& ego_shape,
                                          const prediction::PredictedDistribution& forecast,
                                          const scenario::Footprint& obstacle, int nodes = 24);

enum class Aggregation {
  kMax,       // worst single step
  kSurvival,  // 1 - prod(1 - r_t)
};

double aggregate(std::span<const double> step_risks, Aggregation mode);

struct AgentForecast {
  std::string agent_id;
  RoadUserClass cls = RoadUserClass::kCar;
  scenario::Footprint shape;
  Vec2 position;  // at prediction time; anchors the speed proxy of step 1
  prediction::PredictedDistribution forecast;
};

struct RiskOptions {
  Aggregation aggregation = Aggregation::kMax;
  int quadrature_nodes = 24;
  RoadUserClass ego_class = RoadUserClass::kCar;
};

struct Attribution {
  double ego_av = 0.0;
  double third_party = 0.0;
  double vru = 0.0;
};

struct RiskProfile {
  int candidate_id = 0;
  std::vector<std::string> agent_ids;
  std::vector<double> ego_risks;      // R_i, one per agent
  std::vector<double> imposed_risks;  // R_j, one per agent
  Attribution attribution;
};

// Ego poses are steps 1..n of a candidate; the forecasts are evaluated on
// their first n steps.
RiskProfile build_risk_profile(int candidate_id, std::span<const scenario::AgentState> ego_poses,
                               const scenario::Footprint& ego_shape,
                               std::span<const AgentForecast> agents, const HarmModel& model,
                               double dt, const RiskOptions& options = {});

// One CSV row per candidate x agent.
std::string risk_csv_header();
std::string risk_csv_rows(int step, const RiskProfile& profile);

}  // namespace ethplan::risk
