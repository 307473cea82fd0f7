#include <string>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "ethplan/ethplan.h"
#include "test_util.hpp"

using nlohmann::json;

namespace {

std::string get(const ethp_session* s, const char* key) {
  size_t len = 0;
  REQUIRE(ethp_session_get(s, key, nullptr, 0, &len) == ETHP_OK);
  std::string buf(len + 1, '\0');
  REQUIRE(ethp_session_get(s, key, buf.data(), buf.size(), nullptr) == ETHP_OK);
  buf.resize(len);
  return buf;
}

struct Session {
  ethp_session* s = nullptr;
  ~Session() { ethp_session_close(s); }
};

}  // namespace

TEST_CASE("version and error slot") {
  CHECK(std::string(ethp_version()).size() > 0);
  ethp_session* s = nullptr;
  CHECK(ethp_session_open(nullptr, &s) == ETHP_ERR_ARGUMENT);
  CHECK(std::string(ethp_last_error()).size() > 0);
  CHECK(ethp_session_open("/nonexistent/config.json", &s) == ETHP_ERR_CONFIG);
  CHECK(s == nullptr);
  CHECK(std::string(ethp_last_error()).find("/nonexistent/config.json") != std::string::npos);
  ethp_session_close(nullptr);
}

TEST_CASE("session settings through the C interface") {
  TempDir dir("capi");
  write_text(dir.path() / "cfg.json",
             json{{"suite", fixture("suite_small").string()}, {"output_dir", "o"}}.dump());
  Session h;
  REQUIRE(ethp_session_open((dir.path() / "cfg.json").c_str(), &h.s) == ETHP_OK);
  CHECK(ethp_session_set(h.s, "planner.omega_u", "0.25") == ETHP_OK);
  CHECK(get(h.s, "planner.omega_u") == "0.25");
  CHECK(ethp_session_set(h.s, "planner.mean_mode", "cohort-mean") == ETHP_OK);
  CHECK(get(h.s, "planner.mean_mode") == "\"cohort-mean\"");
  CHECK(ethp_session_set(h.s, "planner.no_such_key", "1") == ETHP_ERR_CONFIG);
  CHECK(std::string(ethp_last_error()).find("planner.no_such_key") != std::string::npos);
  CHECK(ethp_session_set(h.s, nullptr, "1") == ETHP_ERR_ARGUMENT);
  CHECK(ethp_session_set_jobs(h.s, 0) == ETHP_ERR_CONFIG);
  CHECK(ethp_session_set_seed(h.s, 42) == ETHP_OK);
  CHECK(get(h.s, "seed") == "42");
  size_t len = 0;
  CHECK(ethp_session_get(h.s, "planner.missing", nullptr, 0, &len) == ETHP_ERR_CONFIG);

  // Truncated copy stays terminated and reports the full length.
  char small[8];
  CHECK(ethp_session_effective_config(h.s, small, sizeof small, &len) == ETHP_OK);
  CHECK(len > sizeof small);
  CHECK(small[sizeof small - 1] == '\0');
  std::string full(len + 1, '\0');
  CHECK(ethp_session_effective_config(h.s, full.data(), full.size(), nullptr) == ETHP_OK);
  full.resize(len);
  const json eff = json::parse(full);
  CHECK(eff["planner"]["omega_u"] == 0.25);
  CHECK_FALSE(eff.contains("output_dir"));

  CHECK(ethp_session_set_output_dir(h.s, (dir.path() / "run").c_str()) == ETHP_OK);
  CHECK(ethp_run(h.s) == ETHP_OK);
  CHECK(std::filesystem::exists(dir.path() / "run" / "comparison.csv"));
  CHECK(ethp_train(h.s) == ETHP_ERR_CONFIG);
  CHECK(ethp_sweep(h.s, "") == ETHP_ERR_CONFIG);
}

TEST_CASE("gradcheck status through the C interface") {
  TempDir dir("capi_grad");
  const json net = {{"hidden", 6},   {"decoder_hidden", 5}, {"history", 5},       {"horizon", 4},
                    {"grid_long", 5}, {"grid_lat", 3},      {"conv_channels", 3}};
  write_text(dir.path() / "cfg.json",
             json{{"output_dir", "o"}, {"gradcheck", {{"seeds", 1}, {"neighbors", 2}, {"network", net}}}}.dump());
  Session h;
  REQUIRE(ethp_session_open((dir.path() / "cfg.json").c_str(), &h.s) == ETHP_OK);
  double err = -1;
  CHECK(ethp_gradcheck(h.s, 0.0, &err) == ETHP_OK);
  CHECK(err >= 0.0);
  CHECK(err <= 1e-4);
  CHECK(ethp_session_set(h.s, "gradcheck.corrupt_attention", "true") == ETHP_OK);
  CHECK(ethp_gradcheck(h.s, 1e-5, &err) == ETHP_ERR_GRADCHECK);
  CHECK(err > 1e-2);
  CHECK(get(h.s, "gradcheck.eps") == "1e-05");
}

TEST_CASE("scenario handles") {
  ethp_scenario* sc = nullptr;
  REQUIRE(ethp_scenario_load(fixture("minimal.json").c_str(), &sc) == ETHP_OK);
  CHECK(ethp_scenario_agent_count(sc) == 1);
  size_t v = 99;
  CHECK(ethp_scenario_violation_count(sc, &v) == ETHP_OK);
  CHECK(v == 0);
  ethp_scenario_free(sc);

  sc = nullptr;
  CHECK(ethp_scenario_load(fixture("missing_time_step.json").c_str(), &sc) == ETHP_ERR_SCENARIO);
  CHECK(sc == nullptr);
  CHECK(ethp_scenario_load(fixture("truncated.json").c_str(), &sc) == ETHP_ERR_SCENARIO);
  CHECK(ethp_scenario_agent_count(nullptr) == 0);
  CHECK(ethp_scenario_violation_count(nullptr, &v) == ETHP_ERR_ARGUMENT);
}
