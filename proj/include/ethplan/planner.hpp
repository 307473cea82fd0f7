#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ethplan/geometry.hpp"
#include "ethplan/risk.hpp"
#include "ethplan/scenario.hpp"

namespace ethplan::planner {

enum class MeanMode {
  kPaperLiteral,  // (sum R_i + sum R_j) / N_r of the candidate's own profile
  kCohortMean,    // mean J over the feasible candidates of the planning step
};

enum class UtilityVariant {
  kEquation,  // J when J > J_mean
  kProse,     // J_mean when J > J_mean
};

struct PlannerConfig {
  std::vector<double> lateral_offsets{-3.0, -1.5, 0.0, 1.5, 3.0};  // D, meters
  std::vector<double> speed_factors{0.8, 1.0, 1.2};  // V relative to current speed
  std::vector<double> speed_values;                  // extra absolute terminal speeds
  std::vector<double> horizons{2.0, 3.0};            // T_set, seconds

  double w_jerk = 0.1;
  double w_time = 0.1;
  double w_lat = 1.0;
  double w_vel = 1.0;
  double v_target = 10.0;

  double a_max = 6.0;
  double v_max = 20.0;
  double kappa_max = 0.5;
  bool check_road = true;

  double omega_o = 1.0;
  double omega_u = 1.0;
  MeanMode mean_mode = MeanMode::kPaperLiteral;
  UtilityVariant utility = UtilityVariant::kEquation;

  void validate() const;  // throws kConfig
};

struct CandidateTrajectory {
  int id = 0;
  double d_T = 0.0;
  double v_T = 0.0;
  double T = 0.0;
  // Poses at steps 1..N after the current state, N = T / dt.
  std::vector<scenario::AgentState> poses;
  std::vector<double> accel;      // dv/dt
  std::vector<double> jerk_sq;    // squared jerk of the Frenet polynomials
  std::vector<double> curvature;  // |d heading / d arc length|
  std::vector<double> s_dot;      // longitudinal Frenet speed
  std::vector<std::string> violations;

  bool feasible() const { return violations.empty(); }
};

// Quintic in time with given start and end value, slope and curvature.
struct Quintic {
  double c[6] = {0, 0, 0, 0, 0, 0};
  static Quintic fit(double x0, double v0, double a0, double x1, double v1, double a1, double T);
  double value(double t) const;
  double d1(double t) const;
  double d2(double t) const;
  double d3(double t) const;
};

// Quartic with given start value, slope and curvature and end slope and curvature.
struct Quartic {
  double c[5] = {0, 0, 0, 0, 0};
  static Quartic fit(double x0, double v0, double a0, double v1, double a1, double T);
  double value(double t) const;
  double d1(double t) const;
  double d2(double t) const;
  double d3(double t) const;
};

// One candidate per (d_T, v_T, T) in D x V x T_set, ids in that order. The
// longitudinal profile starts from `accel` and ends at zero acceleration.
std::vector<CandidateTrajectory> sample_candidates(const scenario::AgentState& ego,
                                                   const geometry::Polyline& path,
                                                   const PlannerConfig& config, double dt,
                                                   double accel = 0.0);

// Terminal speeds for the current speed: factors first, then absolute
// values, each clamped to [0, v_max].
std::vector<double> terminal_speeds(double v_current, const PlannerConfig& config);

// Violation codes: "accel", "speed.max", "speed.negative", "curvature",
// "off_road". Lanelets are only consulted when config.check_road is set.
std::vector<std::string> feasibility_check(const CandidateTrajectory& c, const PlannerConfig& config,
                                           std::span<const std::vector<Vec2>> lanelet_polygons);

struct CostBreakdown {
  double J_origin = 0.0;
  double J = 0.0;
  double J_mean = 0.0;
  double J_utility = 0.0;
  double J_risk = 0.0;
  double omega_o = 0.0;
  double omega_u = 0.0;
};

double cost_origin(const CandidateTrajectory& c, const PlannerConfig& config, double dt);
double cost_J(const risk::RiskProfile& profile);
// `cohort` is required in cohort-mean mode and ignored otherwise.
double cost_J_mean(const risk::RiskProfile& profile, MeanMode mode,
                   std::optional<std::span<const double>> cohort = std::nullopt);
double cost_utility(double J, double J_mean, UtilityVariant variant = UtilityVariant::kEquation);
double cost_total(double J_origin, double J_utility, const PlannerConfig& config);

// Breakdowns for every candidate (infeasible ones included); the cohort for
// cohort-mean mode is the J of the feasible candidates.
std::vector<CostBreakdown> score_candidates(std::span<const CandidateTrajectory> candidates,
                                            std::span<const risk::RiskProfile> profiles,
                                            const PlannerConfig& config, double dt);

struct Selection {
  std::size_t chosen = 0;             // index into the candidate list
  std::vector<std::size_t> ranking;   // feasible indices, best first
};

// Argmin of J_risk over feasible candidates; ties go to lower J_origin, then
// lower id. Throws kNoFeasibleTrajectory when none is feasible.
Selection select_trajectory(std::span<const CandidateTrajectory> candidates,
                            std::span<const CostBreakdown> costs);

std::string planner_csv_header();
std::string planner_csv_rows(int step, std::span<const CandidateTrajectory> candidates,
                             std::span<const CostBreakdown> costs, std::optional<std::size_t> chosen);

}  // namespace ethplan::planner
