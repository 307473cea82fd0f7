#include "ethplan/planner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ethplan::planner {

namespace {

// Heading changes over a near-standstill step say nothing about the path.
constexpr double kCurvatureMinSpeed = 1.0;

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorKind::kConfig, "planner config: " + message);
}

}  // namespace

void PlannerConfig::validate() const {
  require(!lateral_offsets.empty(), "lateral_offsets is empty");
  require(!speed_factors.empty() || !speed_values.empty(), "no terminal speeds configured");
  require(!horizons.empty(), "horizons is empty");
  for (double f : speed_factors) require(f >= 0.0 && std::isfinite(f), "speed_factors must be >= 0");
  for (double v : speed_values) require(v >= 0.0 && std::isfinite(v), "speed_values must be >= 0");
  for (double T : horizons) require(T > 0.0 && std::isfinite(T), "horizons must be > 0");
  for (double d : lateral_offsets) require(std::isfinite(d), "lateral_offsets must be finite");
  require(w_jerk >= 0.0 && w_time >= 0.0 && w_lat >= 0.0 && w_vel >= 0.0,
          "comfort weights must be >= 0");
  require(v_target >= 0.0, "v_target must be >= 0");
  require(a_max > 0.0 && v_max > 0.0 && kappa_max > 0.0, "limits must be > 0");
  require(omega_o >= 0.0 && omega_u >= 0.0, "omega_o and omega_u must be >= 0");
  require(omega_o > 0.0 || omega_u > 0.0, "omega_o and omega_u cannot both be 0");
}

Quintic Quintic::fit(double x0, double v0, double a0, double x1, double v1, double a1, double T) {
  Quintic q;
  const double h = x1 - (x0 + v0 * T + 0.5 * a0 * T * T);
  const double dv = v1 - (v0 + a0 * T);
  const double da = a1 - a0;
  const double T2 = T * T, T3 = T2 * T;
  q.c[0] = x0;
  q.c[1] = v0;
  q.c[2] = 0.5 * a0;
  q.c[3] = (T2 * da - 8.0 * T * dv + 20.0 * h) / (2.0 * T3);
  q.c[4] = (-T2 * da + 7.0 * T * dv - 15.0 * h) / (T3 * T);
  q.c[5] = (T2 * da - 6.0 * T * dv + 12.0 * h) / (2.0 * T3 * T2);
  return q;
}

double Quintic::value(double t) const {
  return c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
}
double Quintic::d1(double t) const {
  return c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5])));
}
double Quintic::d2(double t) const {
  return 2.0 * c[2] + t * (6.0 * c[3] + t * (12.0 * c[4] + t * 20.0 * c[5]));
}
double Quintic::d3(double t) const { return 6.0 * c[3] + t * (24.0 * c[4] + t * 60.0 * c[5]); }

Quartic Quartic::fit(double x0, double v0, double a0, double v1, double a1, double T) {
  Quartic q;
  const double dv = v1 - (v0 + a0 * T);
  const double da = a1 - a0;
  q.c[0] = x0;
  q.c[1] = v0;
  q.c[2] = 0.5 * a0;
  q.c[3] = (3.0 * dv - da * T) / (3.0 * T * T);
  q.c[4] = (da * T - 2.0 * dv) / (4.0 * T * T * T);
  return q;
}

double Quartic::value(double t) const {
  return c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * c[4])));
}
double Quartic::d1(double t) const {
  return c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * 4.0 * c[4]));
}
double Quartic::d2(double t) const { return 2.0 * c[2] + t * (6.0 * c[3] + t * 12.0 * c[4]); }
double Quartic::d3(double t) const { return 6.0 * c[3] + t * 24.0 * c[4]; }

std::vector<double> terminal_speeds(double v_current, const PlannerConfig& config) {
  std::vector<double> out;
  for (double f : config.speed_factors) out.push_back(std::clamp(f * v_current, 0.0, config.v_max));
  for (double v : config.speed_values) out.push_back(std::clamp(v, 0.0, config.v_max));
  return out;
}

std::vector<CandidateTrajectory> sample_candidates(const scenario::AgentState& ego,
                                                   const geometry::Polyline& path,
                                                   const PlannerConfig& config, double dt,
                                                   double accel) {
  if (!(dt > 0.0)) throw Error(ErrorKind::kInvalidArgument, "time step must be > 0");
  const auto proj = path.project(ego.position());
  if (proj.s < 0.0 || proj.s > path.length())
    throw Error(ErrorKind::kInvalidArgument, "ego is beyond the ends of the reference path");
  const double rel = angle_diff(ego.heading, path.heading_at(proj.s));
  const double s_dot0 = ego.v * std::cos(rel);
  const double d_dot0 = ego.v * std::sin(rel);

  const std::vector<double> speeds = terminal_speeds(ego.v, config);
  std::vector<CandidateTrajectory> out;
  out.reserve(config.lateral_offsets.size() * speeds.size() * config.horizons.size());
  for (double d_T : config.lateral_offsets) {
    for (double v_T : speeds) {
      for (double T : config.horizons) {
        const long steps = std::lround(T / dt);
        if (steps < 1 || std::abs(static_cast<double>(steps) * dt - T) > 1e-9 * std::max(1.0, T))
          throw Error(ErrorKind::kConfig, "horizon " + format_double(T) +
                                              " s is not a whole number of time steps");
        CandidateTrajectory c;
        c.id = static_cast<int>(out.size());
        c.d_T = d_T;
        c.v_T = v_T;
        c.T = T;
        const Quintic lat = Quintic::fit(proj.d, d_dot0, 0.0, d_T, 0.0, 0.0, T);
        const Quartic lon = Quartic::fit(proj.s, s_dot0, accel, v_T, 0.0, T);
        scenario::AgentState prev = ego;
        for (long k = 1; k <= steps; ++k) {
          const double t = static_cast<double>(k) * dt;
          const double s = lon.value(t), sd = lon.d1(t), sdd = lon.d2(t), sddd = lon.d3(t);
          const double d = lat.value(t), dd = lat.d1(t), ddd = lat.d2(t), dddd = lat.d3(t);
          const double theta = path.heading_at(s);
          const Vec2 base = path.point_at(s);
          scenario::AgentState p;
          p.x = base.x - d * std::sin(theta);
          p.y = base.y + d * std::cos(theta);
          p.v = std::hypot(sd, dd);
          p.heading = normalize_angle(theta + std::atan2(dd, sd));
          c.poses.push_back(p);
          c.accel.push_back(p.v > 1e-9 ? (sd * sdd + dd * ddd) / p.v : sdd);
          c.jerk_sq.push_back(sddd * sddd + dddd * dddd);
          c.s_dot.push_back(sd);
          const double ds = (p.position() - prev.position()).norm();
          const double vmid = 0.5 * (p.v + prev.v);
          c.curvature.push_back(vmid >= kCurvatureMinSpeed && ds > 0.0
                                    ? std::abs(angle_diff(p.heading, prev.heading)) / ds
                                    : 0.0);
          prev = p;
        }
        out.push_back(std::move(c));
      }
    }
  }
  return out;
}

std::vector<std::string> feasibility_check(const CandidateTrajectory& c, const PlannerConfig& config,
                                           std::span<const std::vector<Vec2>> lanelet_polygons) {
  constexpr double kSlack = 1e-9;
  bool accel = false, vmax = false, vneg = false, curv = false, road = false;
  for (std::size_t k = 0; k < c.poses.size(); ++k) {
    accel = accel || std::abs(c.accel[k]) > config.a_max + kSlack;
    vmax = vmax || c.poses[k].v > config.v_max + kSlack;
    vneg = vneg || c.s_dot[k] < -kSlack;
    curv = curv || c.curvature[k] > config.kappa_max + kSlack;
    if (config.check_road && !lanelet_polygons.empty() && !road) {
      const Vec2 p = c.poses[k].position();
      road = std::none_of(lanelet_polygons.begin(), lanelet_polygons.end(),
                          [&](const std::vector<Vec2>& poly) { return geometry::point_in_polygon(p, poly); });
    }
  }
  std::vector<std::string> v;
  if (accel) v.emplace_back("accel");
  if (vmax) v.emplace_back("speed.max");
  if (vneg) v.emplace_back("speed.negative");
  if (curv) v.emplace_back("curvature");
  if (road) v.emplace_back("off_road");
  return v;
}

double cost_origin(const CandidateTrajectory& c, const PlannerConfig& config, double dt) {
  double jerk = 0.0;
  for (double j : c.jerk_sq) jerk += j;
  const double dv = c.v_T - config.v_target;
  return config.w_jerk * jerk * dt + config.w_time * c.T + config.w_lat * c.d_T * c.d_T +
         config.w_vel * dv * dv;
}

double cost_J(const risk::RiskProfile& profile) {
  double sum = 0.0;
  for (double r : profile.ego_risks) sum += r;
  for (double r : profile.imposed_risks) sum += r;
  return sum;
}

double cost_J_mean(const risk::RiskProfile& profile, MeanMode mode,
                   std::optional<std::span<const double>> cohort) {
  if (mode == MeanMode::kCohortMean) {
    if (!cohort) throw Error(ErrorKind::kInvalidArgument, "cohort-mean J_mean needs the cohort");
    if (cohort->empty()) return 0.0;
    double sum = 0.0;
    for (double j : *cohort) sum += j;
    return sum / static_cast<double>(cohort->size());
  }
  const double J = cost_J(profile);
  const std::size_t n_r = profile.ego_risks.size();
  if (n_r == 0) {
    if (J != 0.0)
      throw Error(ErrorKind::kInvalidArgument, "J_mean undefined: empty ego risk vector with nonzero risk");
    return 0.0;
  }
  return J / static_cast<double>(n_r);
}

double cost_utility(double J, double J_mean, UtilityVariant variant) {
  if (J <= J_mean) return 0.0;
  return variant == UtilityVariant::kEquation ? J : J_mean;
}

double cost_total(double J_origin, double J_utility, const PlannerConfig& config) {
  return config.omega_o * J_origin + config.omega_u * J_utility;
}

std::vector<CostBreakdown> score_candidates(std::span<const CandidateTrajectory> candidates,
                                            std::span<const risk::RiskProfile> profiles,
                                            const PlannerConfig& config, double dt) {
  if (candidates.size() != profiles.size())
    throw Error(ErrorKind::kDimension, "one risk profile per candidate is required");
  std::vector<CostBreakdown> out(candidates.size());
  std::vector<double> cohort;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    out[k].J = cost_J(profiles[k]);
    if (candidates[k].feasible()) cohort.push_back(out[k].J);
  }
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    CostBreakdown& b = out[k];
    b.omega_o = config.omega_o;
    b.omega_u = config.omega_u;
    b.J_origin = cost_origin(candidates[k], config, dt);
    b.J_mean = cost_J_mean(profiles[k], config.mean_mode, std::span<const double>(cohort));
    b.J_utility = cost_utility(b.J, b.J_mean, config.utility);
    b.J_risk = cost_total(b.J_origin, b.J_utility, config);
  }
  return out;
}

Selection select_trajectory(std::span<const CandidateTrajectory> candidates,
                            std::span<const CostBreakdown> costs) {
  if (candidates.size() != costs.size())
    throw Error(ErrorKind::kDimension, "one cost breakdown per candidate is required");
  Selection sel;
  for (std::size_t k = 0; k < candidates.size(); ++k)
    if (candidates[k].feasible()) sel.ranking.push_back(k);
  if (sel.ranking.empty()) throw Error(ErrorKind::kNoFeasibleTrajectory, "no feasible trajectory");
  std::sort(sel.ranking.begin(), sel.ranking.end(), [&](std::size_t a, std::size_t b) {
    if (costs[a].J_risk != costs[b].J_risk) return costs[a].J_risk < costs[b].J_risk;
    if (costs[a].J_origin != costs[b].J_origin) return costs[a].J_origin < costs[b].J_origin;
    return candidates[a].id < candidates[b].id;
  });
  sel.chosen = sel.ranking.front();
  return sel;
}

std::string planner_csv_header() {
  return "step,candidate,d_T,v_T,T,feasible,violations,J_origin,J,J_mean,J_utility,J_risk,chosen\n";
}

std::string planner_csv_rows(int step, std::span<const CandidateTrajectory> candidates,
                             std::span<const CostBreakdown> costs, std::optional<std::size_t> chosen) {
  std::string out;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const auto& c = candidates[k];
    const auto& b = costs[k];
    std::string codes;
    for (const auto& v : c.violations) codes += (codes.empty() ? "" : ";") + v;
    out += std::to_string(step) + ',' + std::to_string(c.id) + ',' + format_double(c.d_T) + ',' +
           format_double(c.v_T) + ',' + format_double(c.T) + ',' + (c.feasible() ? "1" : "0") + ',' +
           codes + ',' + format_double(b.J_origin) + ',' + format_double(b.J) + ',' +
           format_double(b.J_mean) + ',' + format_double(b.J_utility) + ',' +
           format_double(b.J_risk) + ',' + (chosen && *chosen == k ? "1" : "0") + '\n';
  }
  return out;
}

}  // namespace ethplan::planner
