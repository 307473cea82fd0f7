#include "ethplan/risk.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace ethplan::risk {

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double std_normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

constexpr double kClip = 6.5;      // quadrature window, in standard deviations
constexpr double kFarField = 9.0;  // beyond this the mass is below 1e-17

QuadratureRule make_rule(int n) {
  QuadratureRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    // Newton on P_n from the Chebyshev-like initial guess.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[static_cast<std::size_t>(i)] = -x;
    rule.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
    rule.weights[static_cast<std::size_t>(i)] = w;
    rule.weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  if (n % 2 == 1) rule.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
  return rule;
}

}  // namespace

void HarmModel::validate() const {
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const auto cls = static_cast<RoadUserClass>(k);
    const ClassHarm& c = classes[k];
    const std::string name(scenario::to_string(cls));
    if (!(c.beta1 > 0.0)) throw Error(ErrorKind::kConfig, "harm." + name + ".beta1 must be > 0");
    if (!std::isfinite(c.beta0)) throw Error(ErrorKind::kConfig, "harm." + name + ".beta0 must be finite");
    if (scenario::is_vru(cls) ? !(c.kappa >= 1.0) : c.kappa != 1.0)
      throw Error(ErrorKind::kConfig, "harm." + name + ".kappa out of range");
  }
  if (!(truck_ego_factor >= 1.0)) throw Error(ErrorKind::kConfig, "harm.truck_ego_factor must be >= 1");
}

Harm harm(RoadUserClass ego_cls, RoadUserClass other_cls, double relative_speed,
          const HarmModel& model) {
  if (!(relative_speed >= 0.0))
    throw Error(ErrorKind::kInvalidArgument, "relative speed must be >= 0");
  const ClassHarm& o = model.of(other_cls);
  const ClassHarm& e = model.of(ego_cls);
  Harm h;
  h.to_other = std::min(1.0, o.kappa * logistic(o.beta0 + o.beta1 * relative_speed));
  const double mass = other_cls == RoadUserClass::kTruck ? model.truck_ego_factor : 1.0;
  h.to_ego = std::min(1.0, e.kappa * mass * logistic(e.beta0 + e.beta1 * relative_speed));
  return h;
}

double risk(double p, double h) { return p * h; }

const QuadratureRule& gauss_legendre(int n) {
  if (n < 1) throw Error(ErrorKind::kInvalidArgument, "quadrature needs at least one node");
  static std::mutex mu;
  static std::map<int, std::unique_ptr<QuadratureRule>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<QuadratureRule>(make_rule(n));
  return *slot;
}

double box_probability(const prediction::GaussianStep& g, const geometry::OrientedBox& box,
                       int nodes) {
  const double c = std::cos(box.heading);
  const double s = std::sin(box.heading);
  const Vec2 d{g.mu_x - box.center.x, g.mu_y - box.center.y};
  const double mx = c * d.x + s * d.y;
  const double my = -s * d.x + c * d.y;
  const double a = 0.5 * box.length;
  const double b = 0.5 * box.width;

  const double spread = std::hypot(g.sigma_x, g.sigma_y);
  const double gap = std::hypot(std::max(std::abs(mx) - a, 0.0), std::max(std::abs(my) - b, 0.0));
  if (gap > kFarField * spread) return 0.0;

  // Covariance in the box frame.
  const double vxx = g.sigma_x * g.sigma_x;
  const double vyy = g.sigma_y * g.sigma_y;
  const double vxy = g.rho * g.sigma_x * g.sigma_y;
  const double sxx = c * c * vxx + 2.0 * c * s * vxy + s * s * vyy;
  const double syy = s * s * vxx - 2.0 * c * s * vxy + c * c * vyy;
  const double sxy = c * s * (vyy - vxx) + (c * c - s * s) * vxy;
  const double sx = std::sqrt(sxx);
  const double sy = std::sqrt(syy);
  const double r = std::clamp(sxy / (sx * sy), -prediction::kRhoBound, prediction::kRhoBound);
  const double sc = sy * std::sqrt(1.0 - r * r);

  const double lo = std::max(-a, mx - kClip * sx);
  const double hi = std::min(a, mx + kClip * sx);
  if (!(lo < hi)) return 0.0;

  const QuadratureRule& rule = gauss_legendre(nodes);
  const double hx = 0.5 * (hi - lo);
  const double cx = 0.5 * (hi + lo);
  double total = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double x = cx + hx * rule.nodes[i];
    const double m = my + r * sy / sx * (x - mx);
    const double ylo = std::max(-b, m - kClip * sc);
    const double yhi = std::min(b, m + kClip * sc);
    if (!(ylo < yhi)) continue;
    const double hy = 0.5 * (yhi - ylo);
    const double cy = 0.5 * (yhi + ylo);
    double inner = 0.0;
    for (std::size_t j = 0; j < rule.nodes.size(); ++j)
      inner += rule.weights[j] * std_normal_pdf((cy + hy * rule.nodes[j] - m) / sc);
    total += rule.weights[i] * std_normal_pdf((x - mx) / sx) / sx * inner * hy / sc;
  }
  return std::clamp(total * hx, 0.0, 1.0);
}

std::vector<double> collision_probability(std::span<const scenario::AgentState> ego_poses,
                                          const scenario::Footprint& ego_shape,
                                          const prediction::PredictedDistribution& forecast,
                                          const scenario::Footprint& obstacle, int nodes) {
  if (ego_poses.size() != forecast.steps.size())
    throw Error(ErrorKind::kDimension, "ego trajectory has " + std::to_string(ego_poses.size()) +
                                           " steps, forecast has " +
                                           std::to_string(forecast.steps.size()));
  prediction::check_distribution(forecast);
  std::vector<double> p(ego_poses.size());
  for (std::size_t t = 0; t < ego_poses.size(); ++t) {
    const auto& e = ego_poses[t];
    const geometry::OrientedBox expanded{e.position(), e.heading, ego_shape.length + obstacle.length,
                                         ego_shape.width + obstacle.width};
    p[t] = box_probability(forecast.steps[t], expanded, nodes);
  }
  return p;
}

double aggregate(std::span<const double> step_risks, Aggregation mode) {
  if (mode == Aggregation::kMax) {
    double m = 0.0;
    for (double r : step_risks) m = std::max(m, r);
    return m;
  }
  double survive = 1.0;
  for (double r : step_risks) survive *= 1.0 - r;
  return std::clamp(1.0 - survive, 0.0, 1.0);
}

RiskProfile build_risk_profile(int candidate_id, std::span<const scenario::AgentState> ego_poses,
                               const scenario::Footprint& ego_shape,
                               std::span<const AgentForecast> agents, const HarmModel& model,
                               double dt, const RiskOptions& options) {
  if (!(dt > 0.0)) throw Error(ErrorKind::kInvalidArgument, "time step must be > 0");
  RiskProfile profile;
  profile.candidate_id = candidate_id;
  for (const auto& agent : agents) {
    const std::size_t n = std::min(ego_poses.size(), agent.forecast.steps.size());
    if (n == 0 && !ego_poses.empty())
      throw Error(ErrorKind::kInvalidArgument, "missing forecast for agent '" + agent.agent_id + "'");
    prediction::PredictedDistribution head;
    head.steps.assign(agent.forecast.steps.begin(), agent.forecast.steps.begin() + static_cast<std::ptrdiff_t>(n));
    const auto poses = ego_poses.first(n);
    const std::vector<double> p =
        collision_probability(poses, ego_shape, head, agent.shape, options.quadrature_nodes);

    std::vector<double> r_ego(n), r_other(n);
    Vec2 prev = agent.position;
    for (std::size_t t = 0; t < n; ++t) {
      const auto& g = head.steps[t];
      const Vec2 mu{g.mu_x, g.mu_y};
      const Vec2 v_agent = (mu - prev) * (1.0 / dt);
      prev = mu;
      const double rel = (poses[t].velocity() - v_agent).norm();
      const Harm h = harm(options.ego_class, agent.cls, rel, model);
      r_ego[t] = risk(p[t], h.to_ego);
      r_other[t] = risk(p[t], h.to_other);
    }
    const double ri = aggregate(r_ego, options.aggregation);
    const double rj = aggregate(r_other, options.aggregation);
    profile.agent_ids.push_back(agent.agent_id);
    profile.ego_risks.push_back(ri);
    profile.imposed_risks.push_back(rj);
    profile.attribution.ego_av += ri;
    (scenario::is_vru(agent.cls) ? profile.attribution.vru : profile.attribution.third_party) += rj;
  }
  return profile;
}

std::string risk_csv_header() { return "step,candidate,agent,ego_risk,imposed_risk\n"; }

std::string risk_csv_rows(int step, const RiskProfile& profile) {
  std::string out;
  for (std::size_t k = 0; k < profile.agent_ids.size(); ++k) {
    out += std::to_string(step) + ',' + std::to_string(profile.candidate_id) + ',' +
           profile.agent_ids[k] + ',' + format_double(profile.ego_risks[k]) + ',' +
           format_double(profile.imposed_risks[k]) + '\n';
  }
  return out;
}

}  // namespace ethplan::risk
