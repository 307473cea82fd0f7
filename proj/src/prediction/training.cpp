#include <algorithm>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "ethplan/network.hpp"

namespace ethplan::prediction {

namespace {

void axpy(NetworkParams& dst, double alpha, const NetworkParams& src) {
  std::vector<const double*> srcs;
  src.for_each_block([&](const char*, const double* d, Eigen::Index, Eigen::Index) { srcs.push_back(d); });
  std::size_t b = 0;
  dst.for_each_block([&](const char*, double* d, Eigen::Index r, Eigen::Index c) {
    const double* s = srcs[b++];
    for (Eigen::Index i = 0; i < r * c; ++i) d[i] += alpha * s[i];
  });
}

std::string first_nonfinite_block(const NetworkParams& p) {
  std::string name;
  p.for_each_block([&](const char* n, const double* d, Eigen::Index r, Eigen::Index c) {
    if (!name.empty()) return;
    for (Eigen::Index i = 0; i < r * c; ++i) {
      if (!std::isfinite(d[i])) {
        name = n;
        return;
      }
    }
  });
  return name;
}

}  // namespace

TrainResult train(NetworkParams params, std::span<const TrainingSample> data,
                  const TrainConfig& config) {
  if (data.empty()) throw Error(ErrorKind::kConfig, "training dataset is empty");
  if (config.steps < 0 || !(config.learning_rate >= 0.0))
    throw Error(ErrorKind::kConfig, "training steps and learning rate must be non-negative");
  params.check_shapes();

  std::mt19937_64 rng(derive_seed(config.seed, "shuffle"));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = config.batch_size <= 0
                                ? data.size()
                                : std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), data.size());
  std::size_t cursor = data.size();

  TrainResult result{std::move(params), {}};
  NetworkParams& p = result.params;
  result.loss_trace.reserve(static_cast<std::size_t>(config.steps));
  for (int step = 0; step < config.steps; ++step) {
    if (batch < data.size() && cursor + batch > data.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const std::size_t begin = batch < data.size() ? cursor : 0;
    cursor = begin + batch;

    NetworkParams total = NetworkParams::zeros(p.config);
    NetworkParams g;
    double loss = 0.0;
    for (std::size_t k = begin; k < begin + batch; ++k) {
      loss += loss_and_gradient(p, data[order[k]], &g);
      axpy(total, 1.0, g);
    }
    loss /= static_cast<double>(batch);
    if (!std::isfinite(loss) || !total.all_finite()) {
      std::string block = first_nonfinite_block(total);
      if (block.empty()) block = first_nonfinite_block(p);
      throw Error(ErrorKind::kDivergence,
                  "non-finite loss at step " + std::to_string(step) + " (parameter block: " +
                      (block.empty() ? std::string("none, loss only") : block) + ")");
    }
    result.loss_trace.push_back(loss);
    axpy(p, -config.learning_rate / static_cast<double>(batch), total);
  }
  return result;
}

TrainingSample random_sample(const NetworkConfig& config, int neighbors, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  auto walk = [&](const std::string& id, Vec2 start, double heading, double speed) {
    std::vector<scenario::AgentState> states;
    double x = start.x, y = start.y;
    for (int k = 0; k < config.history; ++k) {
      heading = normalize_angle(heading + 0.05 * unit(rng));
      speed = std::max(0.5, speed + 0.3 * unit(rng));
      states.push_back({x, y, speed, heading});
      x += 0.2 * speed * std::cos(heading);
      y += 0.2 * speed * std::sin(heading);
    }
    return make_history(id, states, config.history);
  };

  const double ego_heading = 0.3 * unit(rng);
  TrackHistory target = walk("target", {0.0, 0.0}, ego_heading, 8.0 + 2.0 * unit(rng));

  // Distinct cells, chosen relative to the target's final frame.
  const Frame frame{target.last().position(), target.last().heading};
  const int ncell = config.grid_long * config.grid_lat;
  std::vector<int> cells(static_cast<std::size_t>(ncell));
  std::iota(cells.begin(), cells.end(), 0);
  const int centre = (config.grid_long / 2) * config.grid_lat + config.grid_lat / 2;
  cells.erase(std::remove(cells.begin(), cells.end(), centre), cells.end());
  std::shuffle(cells.begin(), cells.end(), rng);

  std::vector<TrackHistory> nbs;
  for (int i = 0; i < neighbors; ++i) {
    const int cell = cells[static_cast<std::size_t>(i) % cells.size()];
    const double cl = (cell / config.grid_lat - 0.5 * config.grid_long + 0.5) * config.cell_size;
    const double ct = (cell % config.grid_lat - 0.5 * config.grid_lat + 0.5) * config.cell_size;
    // Walk backwards from the chosen end point so the last state lands in the cell.
    const double heading = frame.heading + 0.4 * unit(rng);
    const double speed = 6.0 + 3.0 * unit(rng);
    const double back = 0.2 * speed * (config.history - 1);
    const Vec2 end = frame.to_world({cl, ct});
    const Vec2 start{end.x - back * std::cos(heading), end.y - back * std::sin(heading)};
    std::vector<scenario::AgentState> states;
    for (int k = 0; k < config.history; ++k) {
      const double s = 0.2 * speed * k;
      states.push_back({start.x + s * std::cos(heading), start.y + s * std::sin(heading), speed, heading});
    }
    nbs.push_back(make_history("n" + std::to_string(i), states, config.history));
  }

  // Truth near the target keeps the loss O(1), so central differences are not
  // swamped by rounding in the loss value.
  std::vector<Vec2> truth;
  for (int t = 1; t <= config.horizon; ++t)
    truth.push_back(frame.to_world({0.1 * t + 0.5 * unit(rng), 0.5 * unit(rng)}));
  return make_sample(config, target, nbs, truth);
}

namespace {

nlohmann::json config_to_json(const NetworkConfig& c) {
  return {{"hidden", c.hidden},           {"decoder_hidden", c.decoder_hidden},
          {"history", c.history},         {"horizon", c.horizon},
          {"grid_long", c.grid_long},     {"grid_lat", c.grid_lat},
          {"cell_size", c.cell_size},     {"kernel_long", c.kernel_long},
          {"kernel_lat", c.kernel_lat},   {"conv_channels", c.conv_channels},
          {"pool_leak", c.pool_leak},     {"speed_scale", c.speed_scale}};
}

NetworkConfig config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.hidden = j.at("hidden").get<int>();
  c.decoder_hidden = j.at("decoder_hidden").get<int>();
  c.history = j.at("history").get<int>();
  c.horizon = j.at("horizon").get<int>();
  c.grid_long = j.at("grid_long").get<int>();
  c.grid_lat = j.at("grid_lat").get<int>();
  c.cell_size = j.at("cell_size").get<double>();
  c.kernel_long = j.at("kernel_long").get<int>();
  c.kernel_lat = j.at("kernel_lat").get<int>();
  c.conv_channels = j.at("conv_channels").get<int>();
  c.pool_leak = j.at("pool_leak").get<double>();
  c.speed_scale = j.at("speed_scale").get<double>();
  return c;
}

constexpr const char* kParamsFormat = "ethplan-network-params";
constexpr int kParamsVersion = 1;

}  // namespace

void save_params(const NetworkParams& params, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["format"] = kParamsFormat;
  doc["version"] = kParamsVersion;
  doc["config"] = config_to_json(params.config);
  nlohmann::json blocks = nlohmann::json::array();
  params.for_each_block([&](const char* name, const double* d, Eigen::Index r, Eigen::Index c) {
    nlohmann::json values = nlohmann::json::array();
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index k = 0; k < c; ++k) values.push_back(d[k * r + i]);
    blocks.push_back({{"name", name}, {"shape", {r, c}}, {"values", values}});
  });
  doc["blocks"] = blocks;
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write params file " + path.string());
  out << doc.dump() << '\n';
}

NetworkParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kConfig, "cannot read params file " + path.string());
  NetworkParams p;
  try {
    const nlohmann::json doc = nlohmann::json::parse(in);
    if (doc.at("format") != kParamsFormat || doc.at("version") != kParamsVersion)
      throw Error(ErrorKind::kConfig, "unsupported params format in " + path.string());
    p = NetworkParams::zeros(config_from_json(doc.at("config")));
    const auto& blocks = doc.at("blocks");
    std::size_t b = 0;
    p.for_each_block([&](const char* name, double* d, Eigen::Index r, Eigen::Index c) {
      if (b >= blocks.size()) throw Error(ErrorKind::kConfig, std::string("params file lacks block ") + name);
      const auto& blk = blocks[b++];
      if (blk.at("name") != name || blk.at("shape")[0] != r || blk.at("shape")[1] != c)
        throw Error(ErrorKind::kConfig, std::string("params block mismatch at ") + name);
      const auto& values = blk.at("values");
      if (values.size() != static_cast<std::size_t>(r * c))
        throw Error(ErrorKind::kConfig, std::string("params block ") + name + " has wrong length");
      for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index k = 0; k < c; ++k) d[k * r + i] = values[static_cast<std::size_t>(i * c + k)].get<double>();
    });
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, "malformed params file " + path.string() + ": " + e.what());
  }
  return p;
}

}  // namespace ethplan::prediction
