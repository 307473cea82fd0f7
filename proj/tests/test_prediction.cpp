#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "ethplan/network.hpp"
#include "ethplan/prediction.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace ethplan;
using namespace ethplan::prediction;
using scenario::AgentState;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

Vector random_vec(std::mt19937_64& rng, int dim, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Vector v(dim);
  for (int k = 0; k < dim; ++k) v(k) = n(rng);
  return v;
}

NetworkConfig small_config() {
  NetworkConfig c;
  c.hidden = 6;
  c.decoder_hidden = 5;
  c.history = 5;
  c.horizon = 4;
  c.grid_long = 5;
  c.conv_channels = 3;
  return c;
}

double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

// ---- histories ----

TEST_CASE("make_history front-pads short tracks and keeps the newest states") {
  std::vector<AgentState> rec{{1, 0, 1, 0}, {2, 0, 1, 0}, {3, 0, 1, 0}};
  const TrackHistory h = make_history("a", rec, 5);
  REQUIRE(h.length() == 5);
  CHECK(h.states[0].x == 1.0);
  CHECK(h.states[1].x == 1.0);
  CHECK(h.states[2].x == 1.0);
  CHECK(h.states[4].x == 3.0);
  CHECK(h.real == std::vector<bool>{false, false, true, true, true});

  const TrackHistory t = make_history("a", rec, 2);
  CHECK(t.states[0].x == 2.0);
  CHECK(t.real == std::vector<bool>{true, true});
  CHECK_THROWS_AS(make_history("a", std::span<const AgentState>(), 4), Error);
}

TEST_CASE("padded steps contribute zero increments") {
  const NetworkConfig cfg = small_config();
  std::vector<AgentState> rec{{0, 0, 2, 0}, {0.4, 0, 2, 0}};
  const TrackHistory h = make_history("a", rec, cfg.history);
  const EncodedScene s = encode_scene(cfg, h, {});
  for (int k = 0; k < cfg.history - 1; ++k) {
    CHECK(s.target_inputs(k, 0) == 0.0);
    CHECK(s.target_inputs(k, 1) == 0.0);
  }
  CHECK(s.target_inputs(cfg.history - 1, 0) == doctest::Approx(0.4));
}

// ---- encoder ----

TEST_CASE("encode_history returns d_h values and zero for zero weights") {
  const NetworkConfig cfg;
  const TrackHistory h = oracle::to_history("t", oracle::golden_target());
  const Vector z = encode_history(NetworkParams::zeros(cfg), h);
  CHECK(z.size() == cfg.hidden);
  CHECK(z.isZero(0.0));
  const Vector r = encode_history(NetworkParams::random(cfg, 3, 0.5), h);
  CHECK(r.size() == cfg.hidden);
  CHECK(r.allFinite());
}

TEST_CASE("encode_history rejects mismatched inputs") {
  const NetworkParams p = NetworkParams::random(small_config(), 1, 0.5);
  CHECK_THROWS_AS(encode_history(p, Matrix::Zero(3, 4)), Error);
  CHECK_THROWS_AS(encode_history(p, Matrix::Zero(5, 3)), Error);
  const TrackHistory wrong = oracle::to_history("t", oracle::golden_target());  // 8 states
  CHECK_THROWS_AS(encode_history(p, wrong), Error);
}

TEST_CASE("encoder golden vector matches stored file and the step-by-step oracle") {
  const auto golden = nlohmann::json::parse(read_file(source_path("tests/golden/encoder.json")));
  const NetworkConfig cfg = oracle::golden_config();
  const NetworkParams p = NetworkParams::random(cfg, golden.at("seed").get<std::uint64_t>(), 0.8);
  const auto want = golden.at("hidden").get<std::vector<double>>();
  const auto inputs = golden.at("inputs").get<oracle::Mat>();

  const Vector got = encode_history(p, oracle::to_history("t", oracle::golden_target()));
  REQUIRE(static_cast<std::size_t>(got.size()) == want.size());
  for (std::size_t k = 0; k < want.size(); ++k) CHECK(std::abs(got(k) - want[k]) < 1e-12);

  // Regenerating from the oracle reproduces the stored vector.
  const auto regen = oracle::encode(oracle::Net(p), inputs);
  for (std::size_t k = 0; k < want.size(); ++k) CHECK(std::abs(regen[k] - want[k]) < 1e-14);
}

// ---- attention ----

TEST_CASE("attention_weights examples") {
  const std::vector<Vector> one{vec({0.3, -2.0})};
  const auto a1 = attention_weights(vec({1.0, 5.0}), one);
  REQUIRE(a1.size() == 1);
  CHECK(a1[0] == doctest::Approx(1.0).epsilon(1e-15));

  const std::vector<Vector> two{vec({1, 0}), vec({0, 1})};
  const auto a2 = attention_weights(vec({1, 1}), two);
  CHECK(std::abs(a2[0] - 0.5) <= 1e-12);
  CHECK(std::abs(a2[1] - 0.5) <= 1e-12);

  const std::vector<Vector> ortho{vec({0, 1, 0}), vec({0, 0, 2}), vec({0, -3, 1})};
  const auto a3 = attention_weights(vec({1, 0, 0}), ortho);
  for (double w : a3) CHECK(w == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  CHECK(attention_weights(vec({1, 2}), {}).empty());
}

TEST_CASE("attention fallbacks: near-zero operands and cancelling cosines") {
  const std::vector<Vector> keys{vec({1, 0}), vec({0, 0})};
  const auto a = attention_weights(vec({1, 1}), keys);
  CHECK(a[0] == 0.5);
  CHECK(a[1] == 0.5);
  const auto b = attention_weights(vec({0, 0}), std::vector<Vector>{vec({1, 0}), vec({0, 1})});
  CHECK(b[0] == 0.5);
  // cos = +1 and -1 cancel.
  const auto c = attention_weights(vec({1, 0}), std::vector<Vector>{vec({2, 0}), vec({-3, 0})});
  CHECK(c[0] == 0.5);
  CHECK(c[1] == 0.5);
}

TEST_CASE("attention rejects dimension mismatch") {
  const std::vector<Vector> keys{vec({1, 0, 0})};
  CHECK_THROWS_AS(attention_weights(vec({1, 0}), keys), Error);
}

TEST_CASE("attention weights sum to one over random draws") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const int m = 1 + static_cast<int>(rng() % 7);
    const double scale = trial % 5 == 0 ? 1e-13 : 1.0;
    std::vector<Vector> keys;
    for (int i = 0; i < m; ++i) keys.push_back(random_vec(rng, 6, i == 0 ? scale : 1.0));
    const auto a = attention_weights(random_vec(rng, 6), keys);
    CHECK(std::abs(sum(a) - 1.0) <= 1e-9);
  }
}

TEST_CASE("attention permutes with its neighbors and ignores positive scaling") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector q = random_vec(rng, 5);
    std::vector<Vector> keys;
    for (int i = 0; i < 4; ++i) keys.push_back(random_vec(rng, 5));
    const auto a = attention_weights(q, keys);
    const Vector wh = attention_fuse(a, keys, 5);

    std::vector<std::size_t> perm{2, 0, 3, 1};
    std::vector<Vector> pk;
    for (auto i : perm) pk.push_back(keys[i]);
    const auto pa = attention_weights(q, pk);
    for (std::size_t i = 0; i < perm.size(); ++i) CHECK(pa[i] == doctest::Approx(a[perm[i]]).epsilon(1e-12));
    CHECK((attention_fuse(pa, pk, 5) - wh).norm() < 1e-12);

    std::vector<Vector> scaled;
    for (std::size_t i = 0; i < keys.size(); ++i) scaled.push_back(keys[i] * (0.1 + 3.0 * static_cast<double>(i)));
    const auto sa = attention_weights(q, scaled);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(sa[i] == doctest::Approx(a[i]).epsilon(1e-12));
  }
}

TEST_CASE("attention_fuse examples") {
  const std::vector<Vector> h1{vec({3, 4}), vec({7, 7})};
  const std::vector<double> sel{1.0, 0.0};
  CHECK(attention_fuse(sel, h1, 2) == vec({3, 4}));
  const std::vector<Vector> h2{vec({2, 0}), vec({0, 2})};
  const std::vector<double> half{0.5, 0.5};
  CHECK(attention_fuse(half, h2, 2) == vec({1, 1}));
  const Vector z = attention_fuse({}, {}, 16);
  CHECK(z.size() == 16);
  CHECK(z.isZero(0.0));
  const std::vector<double> three{0.2, 0.3, 0.5};
  CHECK_THROWS_AS(attention_fuse(three, h2, 2), Error);
}

// ---- social pooling ----

TEST_CASE("social_pool of an empty grid is the bias path") {
  const NetworkConfig cfg = small_config();
  const NetworkParams p = NetworkParams::random(cfg, 8, 0.7);
  const std::vector<int> cells(static_cast<std::size_t>(cfg.grid_long * cfg.grid_lat), -1);
  const Vector got = social_pool(p, {}, cells);

  // Every conv output sees only the bias.
  Vector flat(cfg.pooled_features());
  for (int pos = 0; pos < cfg.conv_out_long() * cfg.conv_out_lat(); ++pos)
    for (int ch = 0; ch < cfg.conv_channels; ++ch) {
      const double z = p.conv_b(ch);
      flat(pos * cfg.conv_channels + ch) = z > 0 ? z : cfg.pool_leak * z;
    }
  const Vector want = p.proj_w * flat + p.proj_b;
  CHECK((got - want).norm() < 1e-14);
}

TEST_CASE("social_pool with a 1x1 identity kernel projects the occupied cell") {
  NetworkConfig cfg = small_config();
  cfg.kernel_long = 1;
  cfg.kernel_lat = 1;
  cfg.conv_channels = cfg.hidden;
  cfg.pool_leak = 1.0;
  NetworkParams p = NetworkParams::random(cfg, 4, 0.5);
  p.conv_w = Matrix::Identity(cfg.hidden, cfg.hidden);
  p.conv_b.setZero();
  std::vector<int> cells(static_cast<std::size_t>(cfg.grid_long * cfg.grid_lat), -1);
  const int cell = 2 * cfg.grid_lat + 1;
  cells[cell] = 0;
  const Vector h = vec({0.5, -1.0, 2.0, 0.25, -0.75, 1.5});
  const std::vector<Vector> hidden{h};
  const Vector got = social_pool(p, hidden, cells);
  // Flattened layout: (cell, channel), so the active block starts at cell*channels.
  const Vector want = p.proj_w.middleCols(cell * cfg.hidden, cfg.hidden) * h + p.proj_b;
  CHECK((got - want).norm() < 1e-13);
}

TEST_CASE("neighbors sharing a cell: the later id wins") {
  const NetworkConfig cfg = small_config();
  std::vector<AgentState> tgt(5, AgentState{0, 0, 1, 0});
  std::vector<AgentState> a(5, AgentState{4.1, 0.2, 1, 0});
  std::vector<AgentState> b(5, AgentState{4.3, -0.2, 1, 0});
  const TrackHistory th = make_history("t", tgt, cfg.history);
  const std::vector<TrackHistory> nb{make_history("zeta", b, 5), make_history("alpha", a, 5)};
  const EncodedScene s = encode_scene(cfg, th, nb);
  REQUIRE(s.neighbor_ids == std::vector<std::string>{"alpha", "zeta"});
  const int cell = grid_cell(cfg, {4.2, 0.0});
  REQUIRE(cell >= 0);
  CHECK(s.grid_cells[static_cast<std::size_t>(cell)] == 1);
  CHECK(std::count(s.grid_cells.begin(), s.grid_cells.end(), 0) == 0);
}

TEST_CASE("grid_cell maps the target to the centre and drops far points") {
  const NetworkConfig cfg;
  CHECK(grid_cell(cfg, {0, 0}) == 6 * cfg.grid_lat + 1);
  CHECK(grid_cell(cfg, {100, 0}) == -1);
  CHECK(grid_cell(cfg, {0, -7}) == -1);
  CHECK(grid_cell(cfg, {-26, 0}) == 0 * cfg.grid_lat + 1);
}

// ---- fusion ----

TEST_CASE("fuse adds pooled and attended and appends the ego state") {
  const Vector p = vec({1, 2, 3});
  const Vector w = vec({-0.5, 4, 0.25});
  const Vector e = vec({9, 8, 7});
  CHECK(fuse(Vector::Zero(3), w, e).context == w);
  CHECK(fuse(p, Vector::Zero(3), e).context == p);
  const FusedContext f = fuse(p, w, e);
  CHECK(f.context == vec({0.5, 6, 3.25}));
  CHECK(f.decoder_input == vec({0.5, 6, 3.25, 9, 8, 7}));
  CHECK_THROWS_AS(fuse(vec({1, 2}), w, e), Error);
}

// ---- prediction ----

TEST_CASE("predict honours the distribution contract") {
  const NetworkConfig cfg;
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const NetworkParams p = NetworkParams::random(cfg, rng(), 2.0);
    const auto target = oracle::to_history("t", oracle::arc_track(0, 0, 5, 0.2 * trial, 0.1, 8, 0.2));
    std::vector<TrackHistory> nb;
    for (const auto& n : oracle::golden_neighbors()) nb.push_back(oracle::to_history(n.id, n.track));
    const PredictedDistribution d = predict(p, target, nb);
    CHECK(static_cast<int>(d.steps.size()) == cfg.horizon);
    CHECK_NOTHROW(check_distribution(d));
    for (const auto& g : d.steps) {
      CHECK(g.sigma_x >= kSigmaFloor * (1 - 1e-12));
      CHECK(std::abs(g.rho) < 1.0);
    }
  }
}

TEST_CASE("zero parameters predict the squashing functions at zero") {
  const NetworkConfig cfg;
  const NetworkParams p = NetworkParams::zeros(cfg);
  const auto track = oracle::arc_track(3, -2, 4, 0.7, 0.0, 8, 0.2);
  const auto target = oracle::to_history("t", track);
  std::vector<TrackHistory> nb;
  for (const auto& n : oracle::golden_neighbors()) nb.push_back(oracle::to_history(n.id, n.track));
  const double sigma = std::log(2.0) + 1e-3;
  const PredictedDistribution local = predict_local(p, encode_scene(cfg, target, nb));
  for (const auto& g : local.steps) {
    CHECK(g.mu_x == 0.0);
    CHECK(g.mu_y == 0.0);
    CHECK(g.sigma_x == doctest::Approx(sigma).epsilon(1e-15));
    CHECK(g.sigma_y == doctest::Approx(sigma).epsilon(1e-15));
    CHECK(g.rho == 0.0);
  }
  // World output sits on the target's last position.
  const PredictedDistribution world = predict(p, target, nb);
  for (const auto& g : world.steps) {
    CHECK(g.mu_x == doctest::Approx(track.back().x).epsilon(1e-14));
    CHECK(g.mu_y == doctest::Approx(track.back().y).epsilon(1e-14));
    CHECK(g.sigma_x == doctest::Approx(sigma).epsilon(1e-12));
    CHECK(std::abs(g.rho) < 1e-12);
  }
}

TEST_CASE("predict golden output matches stored file and the layer-by-layer oracle") {
  const auto golden = nlohmann::json::parse(read_file(source_path("tests/golden/predict.json")));
  const NetworkConfig cfg = oracle::golden_config();
  const NetworkParams p = NetworkParams::random(cfg, golden.at("seed").get<std::uint64_t>(), 0.8);
  const auto want = golden.at("raw").get<oracle::Mat>();

  std::vector<TrackHistory> nb;
  for (const auto& n : oracle::golden_neighbors()) nb.push_back(oracle::to_history(n.id, n.track));
  const EncodedScene scene = encode_scene(cfg, oracle::to_history("t", oracle::golden_target()), nb);
  const Matrix raw = forward_raw(p, scene);
  REQUIRE(static_cast<std::size_t>(raw.rows()) == want.size());
  for (std::size_t t = 0; t < want.size(); ++t)
    for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(raw(t, k) - want[t][k]) < 1e-12);

  const auto regen = oracle::forward(oracle::Net(p), oracle::golden_target(), oracle::golden_neighbors());
  for (std::size_t t = 0; t < want.size(); ++t)
    for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(regen[t][k] - want[t][k]) < 1e-14);

  // Squashing of the stored raw values.
  const PredictedDistribution d = predict_local(p, scene);
  for (std::size_t t = 0; t < want.size(); ++t) {
    CHECK(d.steps[t].sigma_x == doctest::Approx(oracle::softplus(want[t][2]) + 1e-3).epsilon(1e-12));
    CHECK(d.steps[t].rho == doctest::Approx(0.999 * std::tanh(want[t][4])).epsilon(1e-12));
  }
}

TEST_CASE("predict is invariant to neighbor order") {
  const NetworkConfig cfg;
  const NetworkParams p = NetworkParams::random(cfg, 77, 1.0);
  const auto target = oracle::to_history("t", oracle::golden_target());
  std::vector<TrackHistory> nb;
  for (const auto& n : oracle::golden_neighbors()) nb.push_back(oracle::to_history(n.id, n.track));
  const auto a = predict(p, target, nb);
  std::reverse(nb.begin(), nb.end());
  const auto b = predict(p, target, nb);
  for (std::size_t t = 0; t < a.steps.size(); ++t) {
    CHECK(a.steps[t].mu_x == b.steps[t].mu_x);
    CHECK(a.steps[t].sigma_y == b.steps[t].sigma_y);
  }
}

// ---- constant velocity ----

TEST_CASE("constant velocity predictor") {
  std::vector<AgentState> still(3, AgentState{4, -1, 0, 1.0});
  const auto s = constant_velocity_predict(make_history("s", still, 8), 6, 0.5, 0.5, 0.5);
  REQUIRE(s.steps.size() == 6);
  for (const auto& g : s.steps) {
    CHECK(g.mu_x == 4.0);
    CHECK(g.mu_y == -1.0);
  }

  std::vector<AgentState> moving{{0, 0, 2, 0}, {1, 0, 2, 0}};
  const auto m = constant_velocity_predict(make_history("m", moving, 8), 4, 0.5, 0.5, 0.5);
  for (int t = 0; t < 4; ++t) {
    CHECK(m.steps[t].mu_x == doctest::Approx(1.0 + (t + 1)).epsilon(1e-15));
    CHECK(m.steps[t].mu_y == doctest::Approx(0.0));
    CHECK(m.steps[t].rho == 0.0);
    CHECK(m.steps[t].sigma_x == doctest::Approx(0.5 + 0.5 * (t + 1) * 0.5).epsilon(1e-15));
    if (t > 0) CHECK(m.steps[t].sigma_x > m.steps[t - 1].sigma_x);
  }
}

// ---- loss ----

TEST_CASE("nll at the mean with unit sigma is ln(2 pi)") {
  PredictedDistribution d;
  d.steps.assign(5, GaussianStep{1, 2, 1, 1, 0});
  const std::vector<Vec2> truth(5, Vec2{1, 2});
  CHECK(nll_loss(d, truth) == doctest::Approx(std::log(2 * std::numbers::pi)).epsilon(1e-14));
  CHECK(std::abs(nll_loss(d, truth) - 1.83788) < 1e-5);
  CHECK_THROWS_AS(nll_loss(d, std::vector<Vec2>(4)), Error);
}

TEST_CASE("nll decreases as sigma shrinks at the mean and grows quadratically off it") {
  double prev = 1e300;
  for (double s = 2.0; s > 2e-3; s *= 0.7) {
    const double l = gaussian_nll({0, 0, s, s, 0.3}, {0, 0});
    CHECK(l < prev);
    prev = l;
  }
  const GaussianStep g{0, 0, 1, 1, 0};
  const double base = gaussian_nll(g, {0, 0});
  for (double d : {10.0, 20.0, 40.0})
    CHECK(gaussian_nll(g, {d, 0}) - base == doctest::Approx(0.5 * d * d).epsilon(1e-12));
}

TEST_CASE("nll matches the bivariate closed form with correlation") {
  const GaussianStep g{0.5, -1.0, 1.3, 0.7, -0.4};
  const Vec2 p{1.2, -0.2};
  const double zx = (p.x - g.mu_x) / g.sigma_x;
  const double zy = (p.y - g.mu_y) / g.sigma_y;
  const double q = (zx * zx - 2 * g.rho * zx * zy + zy * zy) / (1 - g.rho * g.rho);
  const double want = std::log(2 * std::numbers::pi * g.sigma_x * g.sigma_y * std::sqrt(1 - g.rho * g.rho)) + 0.5 * q;
  CHECK(gaussian_nll(g, p) == doctest::Approx(want).epsilon(1e-14));
}

// ---- training ----

namespace {

std::vector<TrainingSample> toy_samples(const NetworkConfig& cfg, int n) {
  std::vector<TrainingSample> out;
  for (int k = 0; k < n; ++k) out.push_back(random_sample(cfg, 2, 100 + static_cast<std::uint64_t>(k)));
  return out;
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters unchanged with a flat trace") {
  const NetworkConfig cfg = small_config();
  const NetworkParams p = NetworkParams::random(cfg, 9, 0.5);
  const auto data = toy_samples(cfg, 3);
  const TrainResult r = train(p, data, {0.0, 6, 0, 1});
  REQUIRE(r.loss_trace.size() == 6);
  for (double l : r.loss_trace) CHECK(l == r.loss_trace.front());
  CHECK(r.params.enc_wx == p.enc_wx);
  CHECK(r.params.out_b == p.out_b);
}

TEST_CASE("training is deterministic and reduces the loss") {
  const NetworkConfig cfg = small_config();
  const NetworkParams p = NetworkParams::random(cfg, 9, 0.5);
  const auto data = toy_samples(cfg, 4);
  const TrainResult a = train(p, data, {1e-2, 40, 2, 5});
  const TrainResult b = train(p, data, {1e-2, 40, 2, 5});
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.params.dec_wh == b.params.dec_wh);
  const TrainResult full = train(p, data, {1e-2, 60, 0, 5});
  CHECK(full.loss_trace.back() < full.loss_trace.front());
}

TEST_CASE("training errors: empty data and divergence") {
  const NetworkConfig cfg = small_config();
  const NetworkParams p = NetworkParams::random(cfg, 9, 0.5);
  CHECK_THROWS_AS(train(p, {}, {}), Error);
  NetworkParams bad = p;
  bad.out_b(2) = std::numeric_limits<double>::quiet_NaN();
  try {
    train(bad, toy_samples(cfg, 2), {1e-2, 3, 0, 0});
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDivergence);
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
}

TEST_CASE("params round-trip through the params file") {
  const NetworkParams p = NetworkParams::random(small_config(), 12, 0.9);
  TempDir dir("params");
  save_params(p, dir.path() / "p.json");
  const NetworkParams q = load_params(dir.path() / "p.json");
  CHECK(q.config == p.config);
  bool same = true;
  std::vector<const double*> pd;
  std::vector<Eigen::Index> sizes;
  p.for_each_block([&](const char*, const double* d, Eigen::Index r, Eigen::Index c) {
    pd.push_back(d);
    sizes.push_back(r * c);
  });
  std::size_t i = 0;
  q.for_each_block([&](const char*, const double* d, Eigen::Index r, Eigen::Index c) {
    for (Eigen::Index k = 0; k < r * c; ++k) same = same && d[k] == pd[i][k];
    ++i;
  });
  CHECK(same);
  write_text(dir.path() / "bad.json", "{\"format\": \"other\"}");
  CHECK_THROWS_AS(load_params(dir.path() / "bad.json"), Error);
}

// ---- gradient checks ----

TEST_CASE("gradient check passes on a small network") {
  const NetworkConfig cfg = small_config();
  for (std::uint64_t seed : {1u, 2u}) {
    const NetworkParams p = NetworkParams::random(cfg, seed, 0.5);
    const TrainingSample s = random_sample(cfg, 3, seed + 10);
    const GradCheckReport r = check_gradients(p, s, 1e-5);
    CHECK(r.checked == p.parameter_count());
    CHECK(r.max_rel_error <= 1e-4);
  }
}

TEST_CASE("gradient check at the zero-parameter point stays finite") {
  const NetworkConfig cfg = small_config();
  const GradCheckReport r = check_gradients(NetworkParams::zeros(cfg), random_sample(cfg, 2, 4), 1e-5);
  CHECK(std::isfinite(r.max_rel_error));
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("gradient check notices a corrupted attention backward pass") {
  NetworkConfig cfg;
  cfg.horizon = 10;
  const NetworkParams p = NetworkParams::random(cfg, 1, 0.5);
  const TrainingSample s = random_sample(cfg, 3, 2);
  BackwardOptions bad;
  bad.corrupt_attention = true;
  const GradCheckReport r = check_gradients(p, s, 1e-5, bad);
  CHECK(r.max_rel_error > 1e-2);
}
