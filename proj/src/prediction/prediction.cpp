#include "ethplan/prediction.hpp"

#include <numbers>

namespace ethplan::prediction {

TrackHistory make_history(std::string agent_id, std::span<const scenario::AgentState> recorded,
                          int length) {
  if (recorded.empty() || length < 1)
    throw Error(ErrorKind::kInvalidArgument, "history of '" + agent_id + "' is empty");
  TrackHistory h;
  h.agent_id = std::move(agent_id);
  const std::size_t n = static_cast<std::size_t>(length);
  const std::size_t have = std::min(recorded.size(), n);
  const std::size_t pad = n - have;
  const auto first = recorded.end() - static_cast<std::ptrdiff_t>(have);
  h.states.assign(pad, *first);
  h.real.assign(pad, false);
  h.states.insert(h.states.end(), first, recorded.end());
  h.real.insert(h.real.end(), have, true);
  return h;
}

void check_distribution(const PredictedDistribution& d) {
  for (std::size_t t = 0; t < d.steps.size(); ++t) {
    const auto& g = d.steps[t];
    const bool ok = std::isfinite(g.mu_x) && std::isfinite(g.mu_y) && g.sigma_x > 0.0 &&
                    g.sigma_y > 0.0 && std::isfinite(g.sigma_x) && std::isfinite(g.sigma_y) &&
                    std::abs(g.rho) <= kRhoBound;
    if (!ok)
      throw Error(ErrorKind::kInvalidArgument,
                  "invalid predicted distribution at step " + std::to_string(t + 1));
  }
}

std::vector<double> attention_weights(const Vector& query, std::span<const Vector> neighbors) {
  const std::size_t m = neighbors.size();
  std::vector<double> weights(m);
  if (m == 0) return weights;
  for (const auto& h : neighbors) {
    if (h.size() != query.size())
      throw Error(ErrorKind::kDimension, "attention operand dimension mismatch");
  }
  const std::vector<double> uniform(m, 1.0 / static_cast<double>(m));
  const double qn = query.norm();
  if (qn < 1e-12) return uniform;
  double denom = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double hn = neighbors[i].norm();
    if (hn < 1e-12) return uniform;
    weights[i] = query.dot(neighbors[i]) / (qn * hn);
    denom += weights[i];
  }
  if (std::abs(denom) < 1e-6) return uniform;
  for (auto& w : weights) w /= denom;
  return weights;
}

Vector attention_fuse(std::span<const double> weights, std::span<const Vector> neighbors,
                      Eigen::Index dim) {
  if (weights.size() != neighbors.size())
    throw Error(ErrorKind::kDimension, "attention weights and neighbors differ in length");
  Vector out = Vector::Zero(dim);
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    if (neighbors[i].size() != dim)
      throw Error(ErrorKind::kDimension, "attention operand dimension mismatch");
    out += weights[i] * neighbors[i];
  }
  return out;
}

PredictedDistribution constant_velocity_predict(const TrackHistory& history, int horizon,
                                                double dt, double sigma0, double sigma_growth) {
  const auto& s = history.last();
  const Vec2 vel = s.velocity();
  PredictedDistribution out;
  out.steps.reserve(static_cast<std::size_t>(horizon));
  for (int t = 1; t <= horizon; ++t) {
    const double tau = t * dt;
    const double sigma = std::max(sigma0 + sigma_growth * tau, kSigmaFloor);
    out.steps.push_back({s.x + vel.x * tau, s.y + vel.y * tau, sigma, sigma, 0.0});
  }
  return out;
}

double gaussian_nll(const GaussianStep& g, const Vec2& truth) {
  const double dx = (truth.x - g.mu_x) / g.sigma_x;
  const double dy = (truth.y - g.mu_y) / g.sigma_y;
  const double z = 1.0 - g.rho * g.rho;
  const double q = (dx * dx - 2.0 * g.rho * dx * dy + dy * dy) / z;
  return std::log(2.0 * std::numbers::pi) + std::log(g.sigma_x) + std::log(g.sigma_y) +
         0.5 * std::log(z) + 0.5 * q;
}

double nll_loss(const PredictedDistribution& pred, std::span<const Vec2> truth) {
  if (pred.steps.size() != truth.size())
    throw Error(ErrorKind::kDimension, "prediction and truth lengths differ");
  if (truth.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t t = 0; t < truth.size(); ++t) sum += gaussian_nll(pred.steps[t], truth[t]);
  return sum / static_cast<double>(truth.size());
}

}  // namespace ethplan::prediction
