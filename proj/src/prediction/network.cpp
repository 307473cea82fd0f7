#include "ethplan/network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace ethplan::prediction {

void NetworkConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorKind::kConfig, "network config: " + what); };
  if (hidden < 1 || decoder_hidden < 1) bad("hidden sizes must be >= 1");
  if (history < 1 || horizon < 1) bad("history and horizon must be >= 1");
  if (grid_long < 1 || grid_lat < 1 || !(cell_size > 0.0)) bad("grid must be non-empty");
  if (kernel_long < 1 || kernel_lat < 1 || kernel_long > grid_long || kernel_lat > grid_lat)
    bad("convolution kernel must fit inside the grid");
  if (conv_channels < 1) bad("conv_channels must be >= 1");
  if (!(pool_leak >= 0.0)) bad("pool_leak must be >= 0");
}

NetworkParams NetworkParams::zeros(const NetworkConfig& c) {
  c.validate();
  NetworkParams p;
  p.config = c;
  const int h = c.hidden;
  const int hd = c.decoder_hidden;
  p.enc_wx = Matrix::Zero(4 * h, NetworkConfig::kInputDim);
  p.enc_wh = Matrix::Zero(4 * h, h);
  p.enc_b = Vector::Zero(4 * h);
  p.conv_w = Matrix::Zero(c.conv_channels, c.kernel_long * c.kernel_lat * h);
  p.conv_b = Vector::Zero(c.conv_channels);
  p.proj_w = Matrix::Zero(h, c.pooled_features());
  p.proj_b = Vector::Zero(h);
  p.dec_wx = Matrix::Zero(4 * hd, 2 * h);
  p.dec_wh = Matrix::Zero(4 * hd, hd);
  p.dec_b = Vector::Zero(4 * hd);
  p.out_w = Matrix::Zero(NetworkConfig::kOutputDim, hd);
  p.out_b = Vector::Zero(NetworkConfig::kOutputDim);
  return p;
}

NetworkParams NetworkParams::random(const NetworkConfig& c, std::uint64_t seed, double scale) {
  NetworkParams p = zeros(c);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  p.for_each_block([&](const char*, double* data, Eigen::Index rows, Eigen::Index cols) {
    // Fan-in scaling keeps pre-activations O(scale) for every block.
    const double s = scale / std::sqrt(static_cast<double>(std::max<Eigen::Index>(cols, 1)));
    for (Eigen::Index i = 0; i < rows * cols; ++i) data[i] = s * normal(rng);
  });
  return p;
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t n = 0;
  for_each_block([&](const char*, const double*, Eigen::Index r, Eigen::Index c) {
    n += static_cast<std::size_t>(r * c);
  });
  return n;
}

bool NetworkParams::all_finite() const {
  bool ok = true;
  for_each_block([&](const char*, const double* d, Eigen::Index r, Eigen::Index c) {
    for (Eigen::Index i = 0; i < r * c; ++i) ok = ok && std::isfinite(d[i]);
  });
  return ok;
}

void NetworkParams::check_shapes() const {
  const NetworkParams ref = zeros(config);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> want;
  ref.for_each_block([&](const char*, const double*, Eigen::Index r, Eigen::Index c) {
    want.emplace_back(r, c);
  });
  std::size_t i = 0;
  for_each_block([&](const char* name, const double*, Eigen::Index r, Eigen::Index c) {
    if (want[i].first != r || want[i].second != c)
      throw Error(ErrorKind::kDimension, std::string("parameter block ") + name +
                                             " has shape inconsistent with the network config");
    ++i;
  });
}

Vec2 Frame::to_local(const Vec2& w) const {
  const Vec2 d = w - origin;
  const double c = std::cos(heading);
  const double s = std::sin(heading);
  return {c * d.x + s * d.y, -s * d.x + c * d.y};
}

Vec2 Frame::to_world(const Vec2& l) const {
  const double c = std::cos(heading);
  const double s = std::sin(heading);
  return {origin.x + c * l.x - s * l.y, origin.y + s * l.x + c * l.y};
}

namespace {

Matrix history_features(const NetworkConfig& config, const Frame& frame, const TrackHistory& h) {
  if (static_cast<int>(h.length()) != config.history)
    throw Error(ErrorKind::kDimension, "history of '" + h.agent_id + "' has length " +
                                           std::to_string(h.length()) + ", network expects " +
                                           std::to_string(config.history));
  Matrix x(config.history, NetworkConfig::kInputDim);
  for (int k = 0; k < config.history; ++k) {
    const auto& s = h.states[static_cast<std::size_t>(k)];
    Vec2 inc{0.0, 0.0};
    if (k > 0 && h.real[static_cast<std::size_t>(k)]) {
      const Vec2 a = frame.to_local(h.states[static_cast<std::size_t>(k - 1)].position());
      const Vec2 b = frame.to_local(s.position());
      inc = b - a;
    }
    x(k, 0) = inc.x;
    x(k, 1) = inc.y;
    x(k, 2) = s.v * config.speed_scale;
    x(k, 3) = angle_diff(s.heading, frame.heading);
  }
  return x;
}

template <typename T>
using VecT = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using MatT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

template <typename T>
T sigmoid(T z) { return T(1) / (T(1) + std::exp(-z)); }

template <typename T>
T softplus(T z) { return z > T(30) ? z : std::log1p(std::exp(z)); }

// Parameters at the working precision of a forward pass.
template <typename T>
struct Weights {
  explicit Weights(const NetworkParams& p)
      : enc_wx(p.enc_wx.cast<T>()), enc_wh(p.enc_wh.cast<T>()), enc_b(p.enc_b.cast<T>()),
        conv_w(p.conv_w.cast<T>()), conv_b(p.conv_b.cast<T>()),
        proj_w(p.proj_w.cast<T>()), proj_b(p.proj_b.cast<T>()),
        dec_wx(p.dec_wx.cast<T>()), dec_wh(p.dec_wh.cast<T>()), dec_b(p.dec_b.cast<T>()),
        out_w(p.out_w.cast<T>()), out_b(p.out_b.cast<T>()) {}

  MatT<T> enc_wx, enc_wh;
  VecT<T> enc_b;
  MatT<T> conv_w;
  VecT<T> conv_b;
  MatT<T> proj_w;
  VecT<T> proj_b;
  MatT<T> dec_wx, dec_wh;
  VecT<T> dec_b;
  MatT<T> out_w;
  VecT<T> out_b;
};

template <typename T>
struct LstmTape {
  std::vector<VecT<T>> x;      // per-step input (a single entry when constant)
  std::vector<VecT<T>> gates;  // post-activation (i, f, g, o)
  std::vector<VecT<T>> c;
  std::vector<VecT<T>> h;
};

template <typename T>
void lstm_step(const MatT<T>& wx, const MatT<T>& wh, const VecT<T>& b, const VecT<T>& x,
               const VecT<T>& h_prev, const VecT<T>& c_prev, LstmTape<T>& tape) {
  const Eigen::Index n = wh.cols();
  VecT<T> a = wx * x + wh * h_prev + b;
  for (Eigen::Index k = 0; k < n; ++k) {
    a(k) = sigmoid(a(k));
    a(n + k) = sigmoid(a(n + k));
    a(2 * n + k) = std::tanh(a(2 * n + k));
    a(3 * n + k) = sigmoid(a(3 * n + k));
  }
  VecT<T> c = a.segment(n, n).cwiseProduct(c_prev) + a.head(n).cwiseProduct(a.segment(2 * n, n));
  VecT<T> h = a.tail(n).cwiseProduct(c.array().tanh().matrix());
  tape.gates.push_back(std::move(a));
  tape.c.push_back(std::move(c));
  tape.h.push_back(std::move(h));
}

template <typename T>
LstmTape<T> run_encoder(const Weights<T>& w, const NetworkConfig& cfg, const Matrix& inputs) {
  if (inputs.cols() != NetworkConfig::kInputDim || inputs.rows() != cfg.history)
    throw Error(ErrorKind::kDimension, "encoder input has shape " + std::to_string(inputs.rows()) +
                                           "x" + std::to_string(inputs.cols()));
  const Eigen::Index n = w.enc_wh.cols();
  LstmTape<T> tape;
  VecT<T> h = VecT<T>::Zero(n);
  VecT<T> c = VecT<T>::Zero(n);
  for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
    tape.x.push_back(inputs.row(t).transpose().cast<T>());
    lstm_step(w.enc_wx, w.enc_wh, w.enc_b, tape.x.back(), h, c, tape);
    h = tape.h.back();
    c = tape.c.back();
  }
  return tape;
}

// Backpropagates through an unrolled cell. `dh_ext[t]` is the gradient
// reaching h_t from outside the recurrence. Input gradients are written to
// `dx` when non-null (one per step).
void lstm_backward(const Matrix& wx, const Matrix& wh, const LstmTape<double>& tape,
                   const std::vector<Vector>& dh_ext, Matrix& gwx, Matrix& gwh, Vector& gb,
                   std::vector<Vector>* dx) {
  const Eigen::Index n = wh.cols();
  const std::size_t steps = tape.h.size();
  const Vector zero = Vector::Zero(n);
  Vector dh_next = Vector::Zero(n);
  Vector dc_next = Vector::Zero(n);
  if (dx) dx->assign(steps, Vector());
  for (std::size_t t = steps; t-- > 0;) {
    const Vector& g = tape.gates[t];
    const Vector& c = tape.c[t];
    const Vector& c_prev = t > 0 ? tape.c[t - 1] : zero;
    const Vector& h_prev = t > 0 ? tape.h[t - 1] : zero;
    const Vector& x = tape.x.size() == 1 ? tape.x[0] : tape.x[t];

    const Vector dh = dh_ext[t] + dh_next;
    const Vector tc = c.array().tanh().matrix();
    Vector da(4 * n);
    Vector dc = dc_next;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double i = g(k), f = g(n + k), gg = g(2 * n + k), o = g(3 * n + k);
      const double d_o = dh(k) * tc(k);
      dc(k) += dh(k) * o * (1.0 - tc(k) * tc(k));
      da(k) = dc(k) * gg * i * (1.0 - i);
      da(n + k) = dc(k) * c_prev(k) * f * (1.0 - f);
      da(2 * n + k) = dc(k) * i * (1.0 - gg * gg);
      da(3 * n + k) = d_o * o * (1.0 - o);
      dc_next(k) = dc(k) * f;
    }
    gwx.noalias() += da * x.transpose();
    gwh.noalias() += da * h_prev.transpose();
    gb += da;
    dh_next = wh.transpose() * da;
    if (dx) (*dx)[t] = wx.transpose() * da;
  }
}

template <typename T>
struct PoolTape {
  std::vector<VecT<T>> patches;  // one per conv output position
  std::vector<VecT<T>> pre;      // conv pre-activation
  VecT<T> flat;                  // activated conv output
  VecT<T> pooled;
};

template <typename T>
PoolTape<T> run_pool(const Weights<T>& w, const NetworkConfig& cfg,
                     std::span<const VecT<T>> hidden, std::span<const int> cells) {
  const Eigen::Index n = cfg.hidden;
  const std::size_t ncell = static_cast<std::size_t>(cfg.grid_long * cfg.grid_lat);
  if (cells.size() != ncell) throw Error(ErrorKind::kDimension, "grid assignment has wrong size");
  const VecT<T> zero = VecT<T>::Zero(n);
  auto cell_vec = [&](int cl, int ct) -> const VecT<T>& {
    const int idx = cells[static_cast<std::size_t>(cl * cfg.grid_lat + ct)];
    if (idx < 0) return zero;
    if (static_cast<std::size_t>(idx) >= hidden.size())
      throw Error(ErrorKind::kDimension, "grid cell refers to a missing neighbor");
    const VecT<T>& v = hidden[static_cast<std::size_t>(idx)];
    if (v.size() != n) throw Error(ErrorKind::kDimension, "pooled hidden state dimension mismatch");
    return v;
  };

  PoolTape<T> tape;
  const int ol = cfg.conv_out_long();
  const int ot = cfg.conv_out_lat();
  const int ch = cfg.conv_channels;
  const T leak = static_cast<T>(cfg.pool_leak);
  tape.flat.resize(static_cast<Eigen::Index>(ol) * ot * ch);
  for (int a = 0; a < ol; ++a) {
    for (int b = 0; b < ot; ++b) {
      VecT<T> patch(static_cast<Eigen::Index>(cfg.kernel_long) * cfg.kernel_lat * n);
      for (int ka = 0; ka < cfg.kernel_long; ++ka)
        for (int kb = 0; kb < cfg.kernel_lat; ++kb)
          patch.segment((ka * cfg.kernel_lat + kb) * n, n) = cell_vec(a + ka, b + kb);
      VecT<T> z = w.conv_w * patch + w.conv_b;
      for (int k = 0; k < ch; ++k) {
        const T zk = z(k);
        tape.flat((a * ot + b) * ch + k) = zk > T(0) ? zk : leak * zk;
      }
      tape.patches.push_back(std::move(patch));
      tape.pre.push_back(std::move(z));
    }
  }
  tape.pooled = w.proj_w * tape.flat + w.proj_b;
  return tape;
}

template <typename T>
struct AttentionTape {
  std::vector<T> cos;
  std::vector<T> weights;
  T denom = 0;
  T query_norm = 0;
  std::vector<T> norms;
  bool fallback = true;
};

template <typename T>
AttentionTape<T> run_attention(const VecT<T>& query, std::span<const VecT<T>> keys) {
  AttentionTape<T> t;
  const std::size_t m = keys.size();
  if (m == 0) return t;
  t.weights.assign(m, T(1) / static_cast<T>(m));
  t.query_norm = query.norm();
  t.cos.assign(m, T(0));
  t.norms.assign(m, T(0));
  bool near_zero = t.query_norm < T(1e-12);
  for (std::size_t i = 0; i < m; ++i) {
    t.norms[i] = keys[i].norm();
    near_zero = near_zero || t.norms[i] < T(1e-12);
  }
  if (near_zero) return t;
  for (std::size_t i = 0; i < m; ++i) {
    t.cos[i] = query.dot(keys[i]) / (t.query_norm * t.norms[i]);
    t.denom += t.cos[i];
  }
  t.fallback = std::abs(t.denom) < T(1e-6);
  if (!t.fallback)
    for (std::size_t i = 0; i < m; ++i) t.weights[i] = t.cos[i] / t.denom;
  return t;
}

template <typename T>
struct ForwardTape {
  LstmTape<T> target;
  std::vector<LstmTape<T>> neighbors;
  std::vector<VecT<T>> neighbor_hidden;
  AttentionTape<T> attention;
  VecT<T> attended;
  PoolTape<T> pool;
  VecT<T> decoder_input;
  LstmTape<T> decoder;
  MatT<T> raw;  // horizon x 5
};

// Everything downstream of the encoders, given their final hidden states.
template <typename T>
void run_fusion(const Weights<T>& w, const NetworkConfig& cfg, const EncodedScene& scene,
                const VecT<T>& ego, ForwardTape<T>& f) {
  const std::span<const VecT<T>> nbh(f.neighbor_hidden);
  f.attention = run_attention<T>(ego, nbh);
  f.attended = VecT<T>::Zero(cfg.hidden);
  for (std::size_t i = 0; i < nbh.size(); ++i) f.attended += f.attention.weights[i] * nbh[i];
  f.pool = run_pool<T>(w, cfg, nbh, scene.grid_cells);
  // E = cs_pool + W_H, decoder sees concat(E, H).
  f.decoder_input.resize(2 * cfg.hidden);
  f.decoder_input << f.pool.pooled + f.attended, ego;
}

template <typename T>
void run_decoder(const Weights<T>& w, const NetworkConfig& cfg, ForwardTape<T>& f) {
  const Eigen::Index nd = w.dec_wh.cols();
  if (w.dec_wx.cols() != f.decoder_input.size())
    throw Error(ErrorKind::kDimension, "decoder input dimension mismatch");
  f.decoder = LstmTape<T>{};
  f.decoder.x.push_back(f.decoder_input);
  VecT<T> h = VecT<T>::Zero(nd);
  VecT<T> c = VecT<T>::Zero(nd);
  f.raw.resize(cfg.horizon, NetworkConfig::kOutputDim);
  for (int t = 0; t < cfg.horizon; ++t) {
    lstm_step(w.dec_wx, w.dec_wh, w.dec_b, f.decoder.x[0], h, c, f.decoder);
    h = f.decoder.h.back();
    c = f.decoder.c.back();
    f.raw.row(t) = (w.out_w * h + w.out_b).transpose();
  }
}

template <typename T>
ForwardTape<T> run_forward(const Weights<T>& w, const NetworkConfig& cfg, const EncodedScene& scene) {
  ForwardTape<T> f;
  f.target = run_encoder(w, cfg, scene.target_inputs);
  for (const auto& in : scene.neighbor_inputs) {
    f.neighbors.push_back(run_encoder(w, cfg, in));
    f.neighbor_hidden.push_back(f.neighbors.back().h.back());
  }
  run_fusion(w, cfg, scene, f.target.h.back(), f);
  run_decoder(w, cfg, f);
  return f;
}

template <typename T>
ForwardTape<T> run_forward(const NetworkParams& p, const EncodedScene& scene) {
  p.check_shapes();
  return run_forward<T>(Weights<T>(p), p.config, scene);
}

// Mean NLL less its ln(2*pi) constant, at working precision T.
template <typename T>
T centered_nll(const MatT<T>& raw, std::span<const Vec2> truth) {
  T sum = 0;
  for (Eigen::Index t = 0; t < raw.rows(); ++t) {
    const T sx = softplus(raw(t, 2)) + T(kSigmaFloor);
    const T sy = softplus(raw(t, 3)) + T(kSigmaFloor);
    const T rho = T(kRhoBound) * std::tanh(raw(t, 4));
    const T dx = (T(truth[static_cast<std::size_t>(t)].x) - raw(t, 0)) / sx;
    const T dy = (T(truth[static_cast<std::size_t>(t)].y) - raw(t, 1)) / sy;
    const T z = T(1) - rho * rho;
    sum += std::log(sx) + std::log(sy) + T(0.5) * std::log(z) +
           T(0.5) * (dx * dx - T(2) * rho * dx * dy + dy * dy) / z;
  }
  return sum / static_cast<T>(raw.rows());
}

}  // namespace

int grid_cell(const NetworkConfig& config, const Vec2& local) {
  const double fl = std::floor(local.x / config.cell_size + 0.5 * config.grid_long);
  const double ft = std::floor(local.y / config.cell_size + 0.5 * config.grid_lat);
  if (fl < 0.0 || ft < 0.0 || fl >= config.grid_long || ft >= config.grid_lat) return -1;
  return static_cast<int>(fl) * config.grid_lat + static_cast<int>(ft);
}

EncodedScene encode_scene(const NetworkConfig& config, const TrackHistory& target,
                          std::span<const TrackHistory> neighbors) {
  config.validate();
  EncodedScene scene;
  scene.frame = {target.last().position(), target.last().heading};
  scene.target_inputs = history_features(config, scene.frame, target);

  std::vector<std::size_t> order(neighbors.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return neighbors[a].agent_id < neighbors[b].agent_id;
  });
  scene.grid_cells.assign(static_cast<std::size_t>(config.grid_long * config.grid_lat), -1);
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const TrackHistory& h = neighbors[order[rank]];
    scene.neighbor_inputs.push_back(history_features(config, scene.frame, h));
    scene.neighbor_ids.push_back(h.agent_id);
    const int cell = grid_cell(config, scene.frame.to_local(h.last().position()));
    if (cell >= 0) scene.grid_cells[static_cast<std::size_t>(cell)] = static_cast<int>(rank);
  }
  return scene;
}

Vector encode_history(const NetworkParams& params, const Matrix& inputs) {
  return run_encoder<double>(Weights<double>(params), params.config, inputs).h.back();
}

Vector encode_history(const NetworkParams& params, const TrackHistory& history) {
  const Frame frame{history.last().position(), history.last().heading};
  return encode_history(params, history_features(params.config, frame, history));
}

Vector social_pool(const NetworkParams& params, std::span<const Vector> neighbor_hidden,
                   std::span<const int> grid_cells) {
  return run_pool<double>(Weights<double>(params), params.config, neighbor_hidden, grid_cells).pooled;
}

FusedContext fuse(const Vector& pooled, const Vector& attended, const Vector& ego_hidden) {
  if (pooled.size() != attended.size() || ego_hidden.size() != attended.size())
    throw Error(ErrorKind::kDimension, "fusion operands differ in dimension");
  FusedContext out;
  out.context = pooled + attended;
  out.decoder_input.resize(2 * attended.size());
  out.decoder_input << out.context, ego_hidden;
  return out;
}

GaussianStep squash(const Eigen::Ref<const Vector>& raw) {
  GaussianStep g;
  g.mu_x = raw(0);
  g.mu_y = raw(1);
  g.sigma_x = softplus(raw(2)) + kSigmaFloor;
  g.sigma_y = softplus(raw(3)) + kSigmaFloor;
  g.rho = kRhoBound * std::tanh(raw(4));
  return g;
}

Matrix forward_raw(const NetworkParams& params, const EncodedScene& scene) {
  return run_forward<double>(params, scene).raw;
}

PredictedDistribution predict_local(const NetworkParams& params, const EncodedScene& scene) {
  const Matrix raw = forward_raw(params, scene);
  PredictedDistribution d;
  for (Eigen::Index t = 0; t < raw.rows(); ++t) d.steps.push_back(squash(raw.row(t).transpose()));
  return d;
}

PredictedDistribution predict(const NetworkParams& params, const TrackHistory& target,
                              std::span<const TrackHistory> neighbors) {
  const EncodedScene scene = encode_scene(params.config, target, neighbors);
  PredictedDistribution local = predict_local(params, scene);
  const double c = std::cos(scene.frame.heading);
  const double s = std::sin(scene.frame.heading);
  for (auto& g : local.steps) {
    const Vec2 mu = scene.frame.to_world({g.mu_x, g.mu_y});
    const double sxx = g.sigma_x * g.sigma_x;
    const double syy = g.sigma_y * g.sigma_y;
    const double sxy = g.rho * g.sigma_x * g.sigma_y;
    // R * Sigma * R^T
    const double wxx = c * c * sxx - 2.0 * c * s * sxy + s * s * syy;
    const double wyy = s * s * sxx + 2.0 * c * s * sxy + c * c * syy;
    const double wxy = c * s * (sxx - syy) + (c * c - s * s) * sxy;
    g.mu_x = mu.x;
    g.mu_y = mu.y;
    g.sigma_x = std::sqrt(wxx);
    g.sigma_y = std::sqrt(wyy);
    g.rho = std::clamp(wxy / (g.sigma_x * g.sigma_y), -kRhoBound, kRhoBound);
  }
  return local;
}

TrainingSample make_sample(const NetworkConfig& config, const TrackHistory& target,
                           std::span<const TrackHistory> neighbors,
                           std::span<const Vec2> truth_world) {
  if (static_cast<int>(truth_world.size()) != config.horizon)
    throw Error(ErrorKind::kDimension, "truth length " + std::to_string(truth_world.size()) +
                                           " differs from horizon " + std::to_string(config.horizon));
  TrainingSample sample;
  sample.scene = encode_scene(config, target, neighbors);
  for (const auto& p : truth_world) sample.truth_local.push_back(sample.scene.frame.to_local(p));
  return sample;
}

double sample_loss(const NetworkParams& params, const TrainingSample& sample) {
  return nll_loss(predict_local(params, sample.scene), sample.truth_local);
}

double loss_and_gradient(const NetworkParams& p, const TrainingSample& sample,
                         NetworkParams* grad, const BackwardOptions& options) {
  const NetworkConfig& cfg = p.config;
  if (static_cast<int>(sample.truth_local.size()) != cfg.horizon)
    throw Error(ErrorKind::kDimension, "truth length differs from horizon");
  const ForwardTape<double> f = run_forward<double>(p, sample.scene);
  const double inv_t = 1.0 / cfg.horizon;

  double loss = 0.0;
  std::vector<Vector> dh_dec(static_cast<std::size_t>(cfg.horizon));
  Matrix d_raw(cfg.horizon, NetworkConfig::kOutputDim);
  for (int t = 0; t < cfg.horizon; ++t) {
    const Vector raw = f.raw.row(t).transpose();
    const GaussianStep g = squash(raw);
    const Vec2& truth = sample.truth_local[static_cast<std::size_t>(t)];
    loss += gaussian_nll(g, truth);

    const double dx = (truth.x - g.mu_x) / g.sigma_x;
    const double dy = (truth.y - g.mu_y) / g.sigma_y;
    const double z = 1.0 - g.rho * g.rho;
    const double num = dx * dx - 2.0 * g.rho * dx * dy + dy * dy;
    const double d_mux = -(dx - g.rho * dy) / (z * g.sigma_x);
    const double d_muy = -(dy - g.rho * dx) / (z * g.sigma_y);
    const double d_sx = 1.0 / g.sigma_x - dx * (dx - g.rho * dy) / (z * g.sigma_x);
    const double d_sy = 1.0 / g.sigma_y - dy * (dy - g.rho * dx) / (z * g.sigma_y);
    const double d_rho = -g.rho / z - dx * dy / z + num * g.rho / (z * z);
    const double tr = std::tanh(raw(4));
    d_raw(t, 0) = d_mux * inv_t;
    d_raw(t, 1) = d_muy * inv_t;
    d_raw(t, 2) = d_sx * sigmoid(raw(2)) * inv_t;
    d_raw(t, 3) = d_sy * sigmoid(raw(3)) * inv_t;
    d_raw(t, 4) = d_rho * kRhoBound * (1.0 - tr * tr) * inv_t;
  }
  loss *= inv_t;
  if (!grad) return loss;

  *grad = NetworkParams::zeros(cfg);
  NetworkParams& g = *grad;
  const Eigen::Index n = cfg.hidden;

  for (int t = 0; t < cfg.horizon; ++t) {
    const Vector dr = d_raw.row(t).transpose();
    g.out_w.noalias() += dr * f.decoder.h[static_cast<std::size_t>(t)].transpose();
    g.out_b += dr;
    dh_dec[static_cast<std::size_t>(t)] = p.out_w.transpose() * dr;
  }
  std::vector<Vector> dx_dec;
  lstm_backward(p.dec_wx, p.dec_wh, f.decoder, dh_dec, g.dec_wx, g.dec_wh, g.dec_b, &dx_dec);
  Vector d_in = Vector::Zero(2 * n);
  for (const auto& d : dx_dec) d_in += d;
  const Vector d_context = d_in.head(n);
  Vector d_ego = d_in.tail(n);

  const std::size_t m = f.neighbor_hidden.size();
  std::vector<Vector> d_nb(m, Vector::Zero(n));

  // W_H = sum_i A_i H_i
  const Vector& ego = f.target.h.back();
  const AttentionTape<double>& at = f.attention;
  std::vector<double> d_weight(m);
  for (std::size_t i = 0; i < m; ++i) {
    d_nb[i] += at.weights[i] * d_context;
    d_weight[i] = d_context.dot(f.neighbor_hidden[i]);
  }
  if (m > 0 && !at.fallback && !options.corrupt_attention) {
    double mean_term = 0.0;
    for (std::size_t i = 0; i < m; ++i) mean_term += d_weight[i] * at.weights[i];
    for (std::size_t i = 0; i < m; ++i) {
      const double d_cos = (d_weight[i] - mean_term) / at.denom;
      const Vector& hi = f.neighbor_hidden[i];
      const double qn = at.query_norm;
      const double hn = at.norms[i];
      d_ego += d_cos * (hi / (qn * hn) - at.cos[i] * ego / (qn * qn));
      d_nb[i] += d_cos * (ego / (qn * hn) - at.cos[i] * hi / (hn * hn));
    }
  }

  // Social pooling.
  {
    const Vector& d_pooled = d_context;
    g.proj_w.noalias() += d_pooled * f.pool.flat.transpose();
    g.proj_b += d_pooled;
    const Vector d_flat = p.proj_w.transpose() * d_pooled;
    const int ot = cfg.conv_out_lat();
    const int ch = cfg.conv_channels;
    std::size_t pos = 0;
    for (int a = 0; a < cfg.conv_out_long(); ++a) {
      for (int b = 0; b < ot; ++b, ++pos) {
        Vector dz(ch);
        for (int k = 0; k < ch; ++k) {
          const double slope = f.pool.pre[pos](k) > 0.0 ? 1.0 : cfg.pool_leak;
          dz(k) = d_flat((a * ot + b) * ch + k) * slope;
        }
        g.conv_w.noalias() += dz * f.pool.patches[pos].transpose();
        g.conv_b += dz;
        const Vector d_patch = p.conv_w.transpose() * dz;
        for (int ka = 0; ka < cfg.kernel_long; ++ka) {
          for (int kb = 0; kb < cfg.kernel_lat; ++kb) {
            const int idx = sample.scene.grid_cells[static_cast<std::size_t>(
                (a + ka) * cfg.grid_lat + (b + kb))];
            if (idx >= 0)
              d_nb[static_cast<std::size_t>(idx)] += d_patch.segment((ka * cfg.kernel_lat + kb) * n, n);
          }
        }
      }
    }
  }

  auto encoder_backward = [&](const LstmTape<double>& tape, const Vector& d_final) {
    std::vector<Vector> dh(tape.h.size(), Vector::Zero(n));
    dh.back() = d_final;
    lstm_backward(p.enc_wx, p.enc_wh, tape, dh, g.enc_wx, g.enc_wh, g.enc_b, nullptr);
  };
  encoder_backward(f.target, d_ego);
  for (std::size_t i = 0; i < m; ++i) encoder_backward(f.neighbors[i], d_nb[i]);
  return loss;
}

GradCheckReport check_gradients(const NetworkParams& params, const TrainingSample& sample,
                                double eps, const BackwardOptions& options) {
  if (!(eps > 0.0)) throw Error(ErrorKind::kInvalidArgument, "finite-difference step must be > 0");
  NetworkParams analytic;
  loss_and_gradient(params, sample, &analytic, options);

  std::vector<const double*> grads;
  analytic.for_each_block([&](const char*, const double* d, Eigen::Index, Eigen::Index) { grads.push_back(d); });

  // The numeric side runs the same forward pass in extended precision on the
  // loss less its constant; in double, rounding in the loss (~1e-16) over
  // 2*eps swamps gradients below ~1e-7.
  using Ext = long double;
  const NetworkConfig& cfg = params.config;
  Weights<Ext> w(params);
  std::vector<Ext*> ext_blocks = {w.enc_wx.data(), w.enc_wh.data(), w.enc_b.data(),
                                  w.conv_w.data(), w.conv_b.data(), w.proj_w.data(),
                                  w.proj_b.data(), w.dec_wx.data(), w.dec_wh.data(),
                                  w.dec_b.data(), w.out_w.data(),  w.out_b.data()};
  // Blocks are visited encoder, pooling, decoder; a perturbation only needs
  // the stages downstream of its block recomputed.
  const ForwardTape<Ext> base = run_forward<Ext>(w, cfg, sample.scene);
  ForwardTape<Ext> scratch = base;
  auto loss_at = [&](std::size_t block) {
    if (block < 3) {
      scratch = run_forward<Ext>(w, cfg, sample.scene);
    } else {
      scratch.neighbor_hidden = base.neighbor_hidden;
      scratch.decoder_input = base.decoder_input;
      if (block < 7) run_fusion<Ext>(w, cfg, sample.scene, base.target.h.back(), scratch);
      run_decoder<Ext>(w, cfg, scratch);
    }
    return centered_nll<Ext>(scratch.raw, sample.truth_local);
  };

  GradCheckReport report;
  std::size_t b = 0;
  params.for_each_block([&](const char* name, const double* d, Eigen::Index r, Eigen::Index c) {
    const double* ga = grads[b];
    Ext* we = ext_blocks[b];
    ++b;
    for (Eigen::Index i = 0; i < r * c; ++i) {
      we[i] = static_cast<Ext>(d[i]) + static_cast<Ext>(eps);
      const Ext up = loss_at(b - 1);
      we[i] = static_cast<Ext>(d[i]) - static_cast<Ext>(eps);
      const Ext down = loss_at(b - 1);
      we[i] = static_cast<Ext>(d[i]);
      const double gn = static_cast<double>((up - down) / (2 * static_cast<Ext>(eps)));
      const double denom = std::max({std::abs(ga[i]), std::abs(gn), 1e-8});
      const double rel = std::abs(ga[i] - gn) / denom;
      ++report.checked;
      if (rel > report.max_rel_error || report.checked == 1) {
        report.max_rel_error = rel;
        report.worst_block = name;
        report.worst_index = static_cast<std::size_t>(i);
      }
    }
  });
  return report;
}

}  // namespace ethplan::prediction
