#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ethplan/prediction.hpp"

namespace ethplan::prediction {

struct NetworkConfig {
  int hidden = 16;          // encoder state size d_h
  int decoder_hidden = 16;
  int history = 8;          // h_p
  int horizon = 12;         // h_f
  int grid_long = 13;       // cells along the target's heading
  int grid_lat = 3;
  double cell_size = 4.0;   // meters
  int kernel_long = 3;
  int kernel_lat = 3;
  int conv_channels = 8;
  double pool_leak = 0.1;   // leaky-ReLU slope after the convolution; 1 = linear
  double speed_scale = 0.1; // speed feature multiplier

  static constexpr int kInputDim = 4;  // dx, dy, scaled speed, relative heading
  static constexpr int kOutputDim = 5; // mu_x, mu_y, s_x, s_y, r

  int conv_out_long() const { return grid_long - kernel_long + 1; }
  int conv_out_lat() const { return grid_lat - kernel_lat + 1; }
  int pooled_features() const { return conv_out_long() * conv_out_lat() * conv_channels; }
  void validate() const;  // throws kConfig
  bool operator==(const NetworkConfig&) const = default;
};

// Encoder and decoder are LSTM cells with gate order (input, forget, cell, output).
struct NetworkParams {
  NetworkConfig config;

  Matrix enc_wx, enc_wh;
  Vector enc_b;
  Matrix conv_w;  // channels x (kernel_long * kernel_lat * hidden)
  Vector conv_b;
  Matrix proj_w;  // hidden x pooled_features
  Vector proj_b;
  Matrix dec_wx, dec_wh;  // input is concat(E, H)
  Vector dec_b;
  Matrix out_w;  // 5 x decoder_hidden
  Vector out_b;

  static NetworkParams zeros(const NetworkConfig& config);
  static NetworkParams random(const NetworkConfig& config, std::uint64_t seed, double scale);

  // Visits every block as (name, data, rows, cols); storage is column-major.
  template <typename F>
  void for_each_block(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each_block(F&& f) const {
    visit(*this, f);
  }

  std::size_t parameter_count() const;
  bool all_finite() const;
  void check_shapes() const;  // throws kDimension

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F& f) {
    f("enc_wx", self.enc_wx.data(), self.enc_wx.rows(), self.enc_wx.cols());
    f("enc_wh", self.enc_wh.data(), self.enc_wh.rows(), self.enc_wh.cols());
    f("enc_b", self.enc_b.data(), self.enc_b.rows(), Eigen::Index{1});
    f("conv_w", self.conv_w.data(), self.conv_w.rows(), self.conv_w.cols());
    f("conv_b", self.conv_b.data(), self.conv_b.rows(), Eigen::Index{1});
    f("proj_w", self.proj_w.data(), self.proj_w.rows(), self.proj_w.cols());
    f("proj_b", self.proj_b.data(), self.proj_b.rows(), Eigen::Index{1});
    f("dec_wx", self.dec_wx.data(), self.dec_wx.rows(), self.dec_wx.cols());
    f("dec_wh", self.dec_wh.data(), self.dec_wh.rows(), self.dec_wh.cols());
    f("dec_b", self.dec_b.data(), self.dec_b.rows(), Eigen::Index{1});
    f("out_w", self.out_w.data(), self.out_w.rows(), self.out_w.cols());
    f("out_b", self.out_b.data(), self.out_b.rows(), Eigen::Index{1});
  }
};

// Versioned structured-text params document (row-major values).
void save_params(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_params(const std::filesystem::path& path);

// Scene expressed in the target's frame at prediction time: origin at its
// last position, x axis along its last heading.
struct Frame {
  Vec2 origin;
  double heading = 0.0;

  Vec2 to_local(const Vec2& world) const;
  Vec2 to_world(const Vec2& local) const;
};

struct EncodedScene {
  Frame frame;
  Matrix target_inputs;                // history x 4
  std::vector<Matrix> neighbor_inputs; // each history x 4
  std::vector<std::string> neighbor_ids;
  // Neighbor index occupying each grid cell (long-major), -1 when empty.
  std::vector<int> grid_cells;
};

// Builds network inputs. Neighbors are placed in agent-id order so a later id
// overwrites an earlier one sharing its cell; off-grid neighbors still take
// part in attention.
EncodedScene encode_scene(const NetworkConfig& config, const TrackHistory& target,
                          std::span<const TrackHistory> neighbors);

// Grid cell (long-major) for a position in the target frame, or -1 off-grid.
int grid_cell(const NetworkConfig& config, const Vec2& local);

Vector encode_history(const NetworkParams& params, const Matrix& inputs);
Vector encode_history(const NetworkParams& params, const TrackHistory& history);

// cs_pool over neighbor hidden states assigned to cells.
Vector social_pool(const NetworkParams& params, std::span<const Vector> neighbor_hidden,
                   std::span<const int> grid_cells);

struct FusedContext {
  Vector context;        // E = pooled + W_H
  Vector decoder_input;  // concat(E, H)
};
FusedContext fuse(const Vector& pooled, const Vector& attended, const Vector& ego_hidden);

// Raw head outputs (mu_x, mu_y, s_x, s_y, r) per step in the target frame.
Matrix forward_raw(const NetworkParams& params, const EncodedScene& scene);
GaussianStep squash(const Eigen::Ref<const Vector>& raw);

// Distribution in the target frame (origin at its last position).
PredictedDistribution predict_local(const NetworkParams& params, const EncodedScene& scene);

// Distribution in world coordinates.
PredictedDistribution predict(const NetworkParams& params, const TrackHistory& target,
                              std::span<const TrackHistory> neighbors);

struct TrainingSample {
  EncodedScene scene;
  std::vector<Vec2> truth_local;  // h_f future positions in the target frame
};

TrainingSample make_sample(const NetworkConfig& config, const TrackHistory& target,
                           std::span<const TrackHistory> neighbors,
                           std::span<const Vec2> truth_world);

struct BackwardOptions {
  // Test hook: drops the cosine-similarity path from the attention backward
  // pass so gradient checks can prove they notice a wrong derivative.
  bool corrupt_attention = false;
};

// Mean NLL of one sample and its gradient with respect to every parameter.
double loss_and_gradient(const NetworkParams& params, const TrainingSample& sample,
                         NetworkParams* grad, const BackwardOptions& options = {});
double sample_loss(const NetworkParams& params, const TrainingSample& sample);

struct TrainConfig {
  double learning_rate = 1e-2;
  int steps = 500;
  int batch_size = 0;  // 0 = full batch, otherwise seeded shuffle per epoch
  std::uint64_t seed = 0;
};

struct TrainResult {
  NetworkParams params;
  std::vector<double> loss_trace;  // loss before each update
};

TrainResult train(NetworkParams params, std::span<const TrainingSample> data,
                  const TrainConfig& config);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_block;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Every analytic gradient against central differences:
// max |g_a - g_n| / max(|g_a|, |g_n|, 1e-8).
GradCheckReport check_gradients(const NetworkParams& params, const TrainingSample& sample,
                                double eps, const BackwardOptions& options = {});

// Random scene with `neighbors` road users on distinct grid cells and a
// random truth future, for gradient checks.
TrainingSample random_sample(const NetworkConfig& config, int neighbors, std::uint64_t seed);

}  // namespace ethplan::prediction
