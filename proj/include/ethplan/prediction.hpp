#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ethplan/common.hpp"
#include "ethplan/scenario.hpp"

namespace ethplan::prediction {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Fixed-length past window of one road user, oldest state first.
struct TrackHistory {
  std::string agent_id;
  std::vector<scenario::AgentState> states;
  std::vector<bool> real;  // false for front padding

  std::size_t length() const { return states.size(); }
  const scenario::AgentState& last() const { return states.back(); }
};

// Front-pads `recorded` (oldest first) by repeating its earliest state until
// it holds exactly `length` entries; keeps only the newest `length` otherwise.
TrackHistory make_history(std::string agent_id, std::span<const scenario::AgentState> recorded,
                          int length);

struct GaussianStep {
  double mu_x = 0.0;
  double mu_y = 0.0;
  double sigma_x = 1.0;
  double sigma_y = 1.0;
  double rho = 0.0;
};

// Bivariate Gaussian over position for future steps 1..h_f.
struct PredictedDistribution {
  std::vector<GaussianStep> steps;
};

inline constexpr double kSigmaFloor = 1e-3;
inline constexpr double kRhoBound = 0.999;

// Throws kInvalidArgument when sigma <= 0, |rho| > kRhoBound or values are
// non-finite.
void check_distribution(const PredictedDistribution& d);

// A_i = cos(X, H_i) / sum_j cos(X, H_j). Uniform when the denominator is
// below 1e-6 in magnitude or any operand is near zero.
std::vector<double> attention_weights(const Vector& query, std::span<const Vector> neighbors);

// W_H = sum_i A_i H_i; the zero vector of `dim` when there are no neighbors.
Vector attention_fuse(std::span<const double> weights, std::span<const Vector> neighbors,
                      Eigen::Index dim);

PredictedDistribution constant_velocity_predict(const TrackHistory& history, int horizon,
                                                double dt, double sigma0, double sigma_growth);

// Per-step bivariate-Gaussian negative log density, and its mean over steps.
double gaussian_nll(const GaussianStep& g, const Vec2& truth);
double nll_loss(const PredictedDistribution& pred, std::span<const Vec2> truth);

}  // namespace ethplan::prediction
