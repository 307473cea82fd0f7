#include "ethplan/app.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

namespace ethplan::app {

namespace fs = std::filesystem;
using nlohmann::json;

ExitCode exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kScenario:
      return ExitCode::kScenario;
    case ErrorKind::kDivergence:
      return ExitCode::kDivergence;
    default:
      return ExitCode::kConfig;
  }
}

namespace {

json network_defaults(int horizon) {
  prediction::NetworkConfig c;
  c.horizon = horizon;
  return {{"hidden", c.hidden},           {"decoder_hidden", c.decoder_hidden},
          {"history", c.history},         {"horizon", c.horizon},
          {"grid_long", c.grid_long},     {"grid_lat", c.grid_lat},
          {"cell_size", c.cell_size},     {"kernel_long", c.kernel_long},
          {"kernel_lat", c.kernel_lat},   {"conv_channels", c.conv_channels},
          {"pool_leak", c.pool_leak},     {"speed_scale", c.speed_scale}};
}

json class_harm(const risk::ClassHarm& c) {
  return {{"beta0", c.beta0}, {"beta1", c.beta1}, {"kappa", c.kappa}};
}

[[noreturn]] void config_error(const std::string& message) {
  throw Error(ErrorKind::kConfig, message);
}

// Layers `user` over `base`, rejecting keys the defaults do not know.
void merge(json& base, const json& user, const std::string& prefix) {
  if (!user.is_object()) config_error("config section '" + prefix + "' must be an object");
  const bool free_form = base.is_object() && base.empty();
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (free_form) {
      base[key] = value;
      continue;
    }
    if (!base.contains(key)) config_error("unknown config key '" + path + "'");
    json& slot = base[key];
    if (slot.is_object() && !slot.empty()) {
      merge(slot, value, path);
    } else {
      set_key(base, key, value);
    }
  }
}

template <typename T>
T get(const json& doc, const std::string& dotted) {
  const json* v = find_key(doc, dotted);
  if (!v || v->is_null()) config_error("missing config value '" + dotted + "'");
  try {
    return v->get<T>();
  } catch (const json::exception&) {
    config_error("config value '" + dotted + "' has the wrong type");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

// Path-valued keys are stored absolute so the effective config reruns from
// anywhere.
void resolve_paths(json& doc, const fs::path& base) {
  for (const char* key : {"params_file", "train.dataset"}) {
    const json* v = find_key(doc, key);
    if (v && v->is_string()) set_key(doc, key, resolve(base, v->get<std::string>()).string());
  }
  json& suite = doc["suite"];
  if (suite.is_string()) {
    suite = resolve(base, suite.get<std::string>()).string();
  } else if (suite.is_array()) {
    for (auto& e : suite)
      if (e.is_string()) e = resolve(base, e.get<std::string>()).string();
  }
}

std::string read_text(const fs::path& path, ErrorKind kind, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(kind, "cannot read " + what + " " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

planner::MeanMode parse_mean_mode(const std::string& s) {
  if (s == "paper-literal") return planner::MeanMode::kPaperLiteral;
  if (s == "cohort-mean") return planner::MeanMode::kCohortMean;
  config_error("planner.mean_mode must be paper-literal or cohort-mean");
}

planner::UtilityVariant parse_utility(const std::string& s) {
  if (s == "equation") return planner::UtilityVariant::kEquation;
  if (s == "prose") return planner::UtilityVariant::kProse;
  config_error("planner.utility_variant must be equation or prose");
}

risk::Aggregation parse_aggregation(const std::string& s) {
  if (s == "max") return risk::Aggregation::kMax;
  if (s == "survival") return risk::Aggregation::kSurvival;
  config_error("risk.aggregation must be max or survival");
}

}  // namespace

json default_config() {
  const planner::PlannerConfig p;
  const risk::HarmModel h;
  const simulation::SimConfig s;
  json doc;
  doc["predictor"] = "constant-velocity";
  doc["params_file"] = nullptr;
  doc["suite"] = nullptr;
  doc["seed"] = 0;
  doc["planner"] = {{"lateral_offsets", p.lateral_offsets},
                    {"speed_factors", p.speed_factors},
                    {"speed_values", p.speed_values},
                    {"horizons", p.horizons},
                    {"w_jerk", p.w_jerk},
                    {"w_time", p.w_time},
                    {"w_lat", p.w_lat},
                    {"w_vel", p.w_vel},
                    {"v_target", p.v_target},
                    {"a_max", p.a_max},
                    {"v_max", p.v_max},
                    {"kappa_max", p.kappa_max},
                    {"check_road", p.check_road},
                    {"omega_o", p.omega_o},
                    {"omega_u", p.omega_u},
                    {"mean_mode", "paper-literal"},
                    {"utility_variant", "equation"}};
  doc["harm"] = {{"car", class_harm(h.of(scenario::RoadUserClass::kCar))},
                 {"truck", class_harm(h.of(scenario::RoadUserClass::kTruck))},
                 {"pedestrian", class_harm(h.of(scenario::RoadUserClass::kPedestrian))},
                 {"cyclist", class_harm(h.of(scenario::RoadUserClass::kCyclist))},
                 {"truck_ego_factor", h.truck_ego_factor}};
  doc["risk"] = {{"aggregation", "max"}, {"quadrature_nodes", 24}, {"ego_class", "car"}};
  doc["prediction"] = {{"cv_sigma0", s.cv_sigma0},
                       {"cv_sigma_growth", s.cv_sigma_growth},
                       {"cv_history", s.cv_history},
                       {"neighbor_radius", s.neighbor_radius}};
  doc["logs"] = {{"planner", false}, {"risk", false}};
  doc["variants"] = json::array();
  doc["train"] = {{"dataset", nullptr},
                  {"learning_rate", 1e-2},
                  {"steps", 500},
                  {"batch_size", 0},
                  {"init_scale", 0.5},
                  {"neighbor_radius", 30.0},
                  {"network", network_defaults(12)}};
  doc["gradcheck"] = {{"seeds", 5},
                      {"eps", 1e-5},
                      {"tolerance", 1e-4},
                      {"neighbors", 3},
                      {"init_scale", 0.5},
                      {"corrupt_attention", false},
                      {"network", network_defaults(10)}};
  doc["sweep"] = {{"grid", json::object()}};
  return doc;
}

const json* find_key(const json& doc, std::string_view dotted) {
  const json* cur = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string part(dotted.substr(start, dot == std::string_view::npos ? dotted.npos : dot - start));
    if (!cur->is_object() || !cur->contains(part)) return nullptr;
    cur = &(*cur)[part];
    if (dot == std::string_view::npos) return cur;
    start = dot + 1;
  }
}

void set_key(json& doc, std::string_view dotted, const json& value) {
  json* cur = &doc;
  std::size_t start = 0;
  const std::string full(dotted);
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string part(dotted.substr(start, dot == std::string_view::npos ? dotted.npos : dot - start));
    if (!cur->is_object() || !cur->contains(part)) config_error("unknown config key '" + full + "'");
    json& next = (*cur)[part];
    if (dot != std::string_view::npos) {
      cur = &next;
      start = dot + 1;
      continue;
    }
    const bool compatible = next.is_null() || value.is_null() ||
                            (next.is_number() && value.is_number()) ||
                            next.type() == value.type() ||
                            (next.is_object() && next.empty() && value.is_object());
    if (!compatible) config_error("config key '" + full + "' expects a " + next.type_name() + " value");
    if (next.is_object() && !next.empty()) config_error("config key '" + full + "' is a section");
    next = value;
    return;
  }
}

json parse_value(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return std::string(text);
  }
}

prediction::NetworkConfig network_config(const json& n) {
  prediction::NetworkConfig c;
  try {
    c.hidden = n.at("hidden").get<int>();
    c.decoder_hidden = n.at("decoder_hidden").get<int>();
    c.history = n.at("history").get<int>();
    c.horizon = n.at("horizon").get<int>();
    c.grid_long = n.at("grid_long").get<int>();
    c.grid_lat = n.at("grid_lat").get<int>();
    c.cell_size = n.at("cell_size").get<double>();
    c.kernel_long = n.at("kernel_long").get<int>();
    c.kernel_lat = n.at("kernel_lat").get<int>();
    c.conv_channels = n.at("conv_channels").get<int>();
    c.pool_leak = n.at("pool_leak").get<double>();
    c.speed_scale = n.at("speed_scale").get<double>();
  } catch (const json::exception& e) {
    config_error(std::string("network section: ") + e.what());
  }
  c.validate();
  return c;
}

simulation::SimConfig sim_config(const json& eff, const fs::path& base_dir) {
  simulation::SimConfig s;
  s.predictor = simulation::parse_predictor(get<std::string>(eff, "predictor"));
  if (s.predictor == simulation::Predictor::kAttentionLstm) {
    const json* pf = find_key(eff, "params_file");
    if (!pf || !pf->is_string())
      config_error("params_file is required for the attention-lstm predictor");
    const fs::path path = resolve(base_dir, pf->get<std::string>());
    if (!fs::exists(path)) config_error("params_file not found: " + path.string());
    s.params = std::make_shared<prediction::NetworkParams>(prediction::load_params(path));
  }
  s.cv_sigma0 = get<double>(eff, "prediction.cv_sigma0");
  s.cv_sigma_growth = get<double>(eff, "prediction.cv_sigma_growth");
  s.cv_history = get<int>(eff, "prediction.cv_history");
  s.neighbor_radius = get<double>(eff, "prediction.neighbor_radius");

  auto& p = s.planner;
  p.lateral_offsets = get<std::vector<double>>(eff, "planner.lateral_offsets");
  p.speed_factors = get<std::vector<double>>(eff, "planner.speed_factors");
  p.speed_values = get<std::vector<double>>(eff, "planner.speed_values");
  p.horizons = get<std::vector<double>>(eff, "planner.horizons");
  p.w_jerk = get<double>(eff, "planner.w_jerk");
  p.w_time = get<double>(eff, "planner.w_time");
  p.w_lat = get<double>(eff, "planner.w_lat");
  p.w_vel = get<double>(eff, "planner.w_vel");
  p.v_target = get<double>(eff, "planner.v_target");
  p.a_max = get<double>(eff, "planner.a_max");
  p.v_max = get<double>(eff, "planner.v_max");
  p.kappa_max = get<double>(eff, "planner.kappa_max");
  p.check_road = get<bool>(eff, "planner.check_road");
  p.omega_o = get<double>(eff, "planner.omega_o");
  p.omega_u = get<double>(eff, "planner.omega_u");
  p.mean_mode = parse_mean_mode(get<std::string>(eff, "planner.mean_mode"));
  p.utility = parse_utility(get<std::string>(eff, "planner.utility_variant"));

  for (const char* cls : {"car", "truck", "pedestrian", "cyclist"}) {
    auto& c = s.harm.of(scenario::parse_class(cls));
    const std::string base = std::string("harm.") + cls;
    c.beta0 = get<double>(eff, base + ".beta0");
    c.beta1 = get<double>(eff, base + ".beta1");
    c.kappa = get<double>(eff, base + ".kappa");
  }
  s.harm.truck_ego_factor = get<double>(eff, "harm.truck_ego_factor");
  s.risk.aggregation = parse_aggregation(get<std::string>(eff, "risk.aggregation"));
  s.risk.quadrature_nodes = get<int>(eff, "risk.quadrature_nodes");
  try {
    s.risk.ego_class = scenario::parse_class(get<std::string>(eff, "risk.ego_class"));
  } catch (const Error&) {
    config_error("risk.ego_class must be a road-user class");
  }
  s.planner_log = get<bool>(eff, "logs.planner");
  s.risk_log = get<bool>(eff, "logs.risk");
  s.validate();
  return s;
}

std::vector<simulation::Variant> variants(const json& eff, const fs::path& base_dir) {
  std::vector<simulation::Variant> out;
  const json& list = eff.at("variants");
  if (!list.is_array()) config_error("variants must be an array");
  if (list.empty()) {
    simulation::SimConfig c = sim_config(eff, base_dir);
    out.push_back({c.planner.omega_u == 0.0 ? "baseline" : "ethical", std::move(c)});
    return out;
  }
  for (const auto& v : list) {
    if (!v.is_object() || !v.contains("name") || !v.at("name").is_string())
      config_error("each variant needs a string name");
    const std::string name = v.at("name").get<std::string>();
    const bool safe = !name.empty() && std::all_of(name.begin(), name.end(), [](char ch) {
      return std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_';
    });
    if (!safe) config_error("variant name '" + name + "' must use letters, digits, '-' or '_'");
    for (const auto& [key, _] : v.items())
      if (key != "name" && key != "set") config_error("unknown variant key '" + key + "'");
    for (const auto& prev : out)
      if (prev.name == name) config_error("duplicate variant name '" + name + "'");
    json doc = eff;
    if (v.contains("set")) {
      if (!v.at("set").is_object()) config_error("variant '" + name + "': set must be an object");
      for (const auto& [key, value] : v.at("set").items()) set_key(doc, key, value);
    }
    out.push_back({name, sim_config(doc, base_dir)});
  }
  return out;
}

std::vector<scenario::Scenario> load_suite(const json& suite, const fs::path& base_dir) {
  std::vector<fs::path> files;
  if (suite.is_string()) {
    const fs::path p = resolve(base_dir, suite.get<std::string>());
    if (!fs::is_directory(p)) config_error("suite directory not found: " + p.string());
    for (const auto& e : fs::directory_iterator(p))
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else if (suite.is_array()) {
    for (const auto& e : suite) {
      if (!e.is_string()) config_error("suite entries must be paths");
      files.push_back(resolve(base_dir, e.get<std::string>()));
    }
  } else {
    config_error("suite must be a directory or a list of scenario files");
  }
  if (files.empty()) config_error("scenario suite is empty");
  std::vector<scenario::Scenario> out;
  for (const auto& f : files) {
    try {
      out.push_back(scenario::load_scenario(f));
    } catch (const Error& e) {
      throw Error(ErrorKind::kScenario, "scenario " + f.filename().string() + ": " + e.what());
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t k = 0; k < i; ++k)
      if (out[i].id == out[k].id) throw Error(ErrorKind::kScenario, "duplicate scenario id '" + out[i].id + "'");
  return out;
}

std::vector<prediction::TrainingSample> load_dataset(const fs::path& path,
                                                     const prediction::NetworkConfig& network,
                                                     double neighbor_radius) {
  json doc;
  try {
    doc = json::parse(read_text(path, ErrorKind::kConfig, "dataset"));
  } catch (const json::exception& e) {
    config_error("malformed dataset " + path.string() + ": " + e.what());
  }
  std::vector<scenario::Scenario> scenarios;
  std::vector<prediction::TrainingSample> out;
  try {
    for (const auto& f : doc.at("scenarios")) {
      const fs::path p = resolve(path.parent_path(), f.get<std::string>());
      try {
        scenarios.push_back(scenario::load_scenario(p));
      } catch (const Error& e) {
        throw Error(ErrorKind::kScenario, "dataset scenario " + p.filename().string() + ": " + e.what());
      }
    }
    for (const auto& s : doc.at("samples")) {
      const std::size_t idx = s.at("scenario").get<std::size_t>();
      if (idx >= scenarios.size()) config_error("dataset sample refers to missing scenario " + std::to_string(idx));
      const scenario::Scenario& sc = scenarios[idx];
      const std::string agent_id = s.at("agent").get<std::string>();
      const int anchor = s.at("anchor").get<int>();
      auto it = std::find_if(sc.agents.begin(), sc.agents.end(),
                             [&](const scenario::Agent& a) { return a.id == agent_id; });
      if (it == sc.agents.end()) config_error("dataset sample names unknown agent '" + agent_id + "'");
      if (anchor < 0) config_error("dataset anchor must be >= 0");

      auto history = [&](const scenario::Agent& a) {
        std::vector<scenario::AgentState> states;
        for (int k = std::max(0, anchor - network.history + 1); k <= anchor; ++k)
          states.push_back(scenario::agent_state_at(a, k));
        return prediction::make_history(a.id, states, network.history);
      };
      const auto target = history(*it);
      std::vector<prediction::TrackHistory> nbs;
      for (const auto& a : sc.agents) {
        if (a.id == agent_id) continue;
        auto h = history(a);
        if ((h.last().position() - target.last().position()).norm() <= neighbor_radius) nbs.push_back(std::move(h));
      }
      std::vector<Vec2> truth;
      for (int t = 1; t <= network.horizon; ++t) truth.push_back(scenario::agent_state_at(*it, anchor + t).position());
      out.push_back(prediction::make_sample(network, target, nbs, truth));
    }
  } catch (const json::exception& e) {
    config_error("malformed dataset " + path.string() + ": " + e.what());
  }
  return out;
}

std::vector<std::pair<std::string, std::vector<json>>> parse_grid(std::string_view spec) {
  std::vector<std::pair<std::string, std::vector<json>>> out;
  std::size_t start = 0;
  while (start <= spec.size()) {
    std::size_t end = spec.find(';', start);
    if (end == std::string_view::npos) end = spec.size();
    const std::string_view item = spec.substr(start, end - start);
    start = end + 1;
    if (item.empty()) continue;
    const std::size_t eq = item.find('=');
    if (eq == std::string_view::npos || eq == 0) config_error("grid entry '" + std::string(item) + "' needs key=values");
    std::vector<json> values;
    std::string_view rest = item.substr(eq + 1);
    std::size_t vs = 0;
    while (vs <= rest.size()) {
      std::size_t ve = rest.find(',', vs);
      if (ve == std::string_view::npos) ve = rest.size();
      if (ve > vs) values.push_back(parse_value(rest.substr(vs, ve - vs)));
      vs = ve + 1;
    }
    if (values.empty()) config_error("grid key '" + std::string(item.substr(0, eq)) + "' has no values");
    out.emplace_back(std::string(item.substr(0, eq)), std::move(values));
  }
  return out;
}

Session Session::open(const fs::path& config_path) {
  json user;
  try {
    user = json::parse(read_text(config_path, ErrorKind::kConfig, "config"));
  } catch (const json::exception& e) {
    config_error("malformed config " + config_path.string() + ": " + e.what());
  }
  if (!user.is_object()) config_error("config must be an object");
  Session s;
  s.base_dir_ = fs::absolute(config_path).parent_path();
  s.output_dir_ = "out";
  if (user.contains("output_dir")) {
    if (!user["output_dir"].is_string()) config_error("output_dir must be a path");
    s.output_dir_ = resolve(s.base_dir_, user["output_dir"].get<std::string>());
    user.erase("output_dir");
  }
  if (user.contains("jobs")) {
    if (!user["jobs"].is_number_integer()) config_error("jobs must be an integer");
    s.set_jobs(user["jobs"].get<int>());
    user.erase("jobs");
  }
  s.config_ = default_config();
  merge(s.config_, user, "");
  resolve_paths(s.config_, s.base_dir_);
  return s;
}

void Session::set(std::string_view key, std::string_view value_text) {
  set_key(config_, key, parse_value(value_text));
  resolve_paths(config_, base_dir_);
}

void Session::set_seed(std::uint64_t seed) { config_["seed"] = seed; }

void Session::set_jobs(int jobs) {
  if (jobs < 1) config_error("jobs must be >= 1");
  jobs_ = jobs;
}

void Session::write_file(const fs::path& rel, const std::string& text) const {
  const fs::path path = output_dir_ / rel;
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
}

void Session::write_effective() const { write_file("effective_config.json", config_.dump(2) + "\n"); }

simulation::SuiteReport Session::run() {
  const auto vs = variants(config_, base_dir_);
  const auto suite = load_suite(config_.at("suite"), base_dir_);
  const std::uint64_t seed = get<std::uint64_t>(config_, "seed");
  simulation::SuiteReport report = simulation::evaluate_suite(suite, vs, seed, jobs_);

  write_effective();
  write_file("comparison.csv", simulation::comparison_csv(report.metrics));
  for (std::size_t v = 0; v < vs.size(); ++v) {
    const fs::path dir = vs[v].name;
    for (const auto& r : report.results[v]) {
      write_file(dir / "results" / (r.scenario_id + ".json"), simulation::result_to_json(r).dump(1) + "\n");
      write_file(dir / "traces" / (r.scenario_id + ".csv"), simulation::trace_csv(r));
      if (vs[v].config.planner_log)
        write_file(dir / "logs" / (r.scenario_id + "_planner.csv"), planner::planner_csv_header() + r.planner_log);
      if (vs[v].config.risk_log)
        write_file(dir / "logs" / (r.scenario_id + "_risk.csv"), risk::risk_csv_header() + r.risk_log);
    }
  }
  return report;
}

std::vector<double> Session::train() {
  const json* ds = find_key(config_, "train.dataset");
  if (!ds || !ds->is_string()) config_error("train.dataset is required for training");
  const prediction::NetworkConfig net = network_config(config_.at("train").at("network"));
  const auto data = load_dataset(ds->get<std::string>(), net, get<double>(config_, "train.neighbor_radius"));
  if (data.empty()) config_error("training dataset is empty");

  const std::uint64_t seed = get<std::uint64_t>(config_, "seed");
  prediction::TrainConfig tc;
  tc.learning_rate = get<double>(config_, "train.learning_rate");
  tc.steps = get<int>(config_, "train.steps");
  tc.batch_size = get<int>(config_, "train.batch_size");
  tc.seed = derive_seed(seed, "train");
  const auto init = prediction::NetworkParams::random(net, derive_seed(seed, "train/init"),
                                                      get<double>(config_, "train.init_scale"));
  const auto result = prediction::train(init, data, tc);

  write_effective();
  std::error_code ec;
  fs::create_directories(output_dir_, ec);
  prediction::save_params(result.params, output_dir_ / "params.json");
  std::string trace = "step,loss\n";
  for (std::size_t k = 0; k < result.loss_trace.size(); ++k)
    trace += std::to_string(k) + ',' + format_double(result.loss_trace[k]) + '\n';
  write_file("loss_trace.csv", trace);
  return result.loss_trace;
}

GradcheckSummary Session::gradcheck(std::optional<double> eps) {
  if (eps) set_key(config_, "gradcheck.eps", *eps);
  GradcheckSummary sum;
  sum.eps = get<double>(config_, "gradcheck.eps");
  sum.tolerance = get<double>(config_, "gradcheck.tolerance");
  if (!(sum.eps > 0.0)) config_error("gradcheck.eps must be > 0");
  const int seeds = get<int>(config_, "gradcheck.seeds");
  const int neighbors = get<int>(config_, "gradcheck.neighbors");
  if (seeds < 1 || neighbors < 0) config_error("gradcheck.seeds must be >= 1 and neighbors >= 0");
  const prediction::NetworkConfig net = network_config(config_.at("gradcheck").at("network"));
  const double scale = get<double>(config_, "gradcheck.init_scale");
  prediction::BackwardOptions opts;
  opts.corrupt_attention = get<bool>(config_, "gradcheck.corrupt_attention");
  const std::uint64_t seed = get<std::uint64_t>(config_, "seed");

  std::string csv = "point,max_rel_error,worst_block,worst_index,checked\n";
  for (int k = 0; k < seeds; ++k) {
    const std::string tag = "gradcheck/" + std::to_string(k);
    const auto params = prediction::NetworkParams::random(net, derive_seed(seed, tag + "/params"), scale);
    const auto sample = prediction::random_sample(net, neighbors, derive_seed(seed, tag + "/scene"));
    const auto rep = prediction::check_gradients(params, sample, sum.eps, opts);
    sum.max_rel_error = std::max(sum.max_rel_error, rep.max_rel_error);
    csv += std::to_string(k) + ',' + format_double(rep.max_rel_error) + ',' + rep.worst_block + ',' +
           std::to_string(rep.worst_index) + ',' + std::to_string(rep.checked) + '\n';
    sum.reports.push_back(rep);
  }
  sum.passed = sum.max_rel_error <= sum.tolerance;
  write_effective();
  write_file("gradcheck.csv", csv);
  return sum;
}

void Session::sweep(std::string_view grid_spec) {
  std::vector<std::pair<std::string, std::vector<json>>> grid;
  if (!grid_spec.empty()) {
    grid = parse_grid(grid_spec);
  } else {
    for (const auto& [key, values] : config_.at("sweep").at("grid").items()) {
      if (!values.is_array() || values.empty()) config_error("sweep.grid." + key + " must be a nonempty list");
      grid.emplace_back(key, std::vector<json>(values.begin(), values.end()));
    }
  }
  if (grid.empty()) config_error("sweep grid is empty");
  if (!grid_spec.empty()) {
    json g = json::object();
    for (const auto& [key, values] : grid) g[key] = values;
    config_["sweep"]["grid"] = g;
  }
  for (const auto& [key, values] : grid) {
    const json* slot = find_key(config_, key);
    if (!slot) config_error("unknown config key '" + key + "' in sweep grid");
    json probe = config_;
    for (const auto& v : values) set_key(probe, key, v);
  }

  json base = config_;
  base["variants"] = json::array();
  const auto suite = load_suite(base.at("suite"), base_dir_);
  const std::uint64_t seed = get<std::uint64_t>(base, "seed");

  std::string csv = "omega_u,omega_o,completed_rate,total_harm,harm_ego,harm_third_party,harm_vru\n";
  std::vector<std::size_t> idx(grid.size(), 0);
  while (true) {
    json point = base;
    for (std::size_t g = 0; g < grid.size(); ++g) set_key(point, grid[g].first, grid[g].second[idx[g]]);
    const auto vs = variants(point, base_dir_);
    const auto report = simulation::evaluate_suite(suite, vs, seed, jobs_);
    const auto& m = report.metrics.front();
    csv += format_double(get<double>(point, "planner.omega_u")) + ',' +
           format_double(get<double>(point, "planner.omega_o")) + ',' + format_double(m.completed_rate) +
           ',' + format_double(m.total_harm) + ',' + format_double(m.harm_ego) + ',' +
           format_double(m.harm_third_party) + ',' + format_double(m.harm_vru) + '\n';
    // Odometer over the grid, last key fastest.
    bool done = true;
    for (std::size_t g = grid.size(); g-- > 0;) {
      if (++idx[g] < grid[g].second.size()) {
        done = false;
        break;
      }
      idx[g] = 0;
    }
    if (done) break;
  }
  write_effective();
  write_file("sweep.csv", csv);
}

}  // namespace ethplan::app
