#include <sys/wait.h>

#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "test_util.hpp"

#ifndef ETHPLAN_CLI
#error "ETHPLAN_CLI must be defined by the build"
#endif

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Runs the CLI with stdout and stderr captured to `log`; returns the exit code.
int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("'") + ETHPLAN_CLI + "' " + args + " >'" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

fs::path write_config(const fs::path& dir, const std::string& name, const json& cfg) {
  write_text(dir / name, cfg.dump(2));
  return dir / name;
}

json suite_config() { return {{"suite", fixture("suite_small").string()}, {"seed", 9}}; }

json small_network() {
  return {{"hidden", 6}, {"decoder_hidden", 5}, {"history", 5}, {"horizon", 4},
          {"grid_long", 5}, {"grid_lat", 3}, {"conv_channels", 3}};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string field(const std::string& line, int index) {
  std::istringstream in(line);
  std::string f;
  for (int k = 0; k <= index; ++k) std::getline(in, f, ',');
  return f;
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  TempDir dir("cli_usage");
  CHECK(cli("", dir.path() / "log") == 1);
  CHECK(cli("run", dir.path() / "log") == 1);
  CHECK(cli("run --config /nonexistent.json", dir.path() / "log") == 1);
  CHECK(cli("--help", dir.path() / "log") == 0);
  const auto cfg = write_config(dir.path(), "c.json", suite_config());
  CHECK(cli("run --config " + q(cfg) + " --set planner.bogus=1 --out " + q(dir.path() / "o"), dir.path() / "log") == 1);
  CHECK(read_file(dir.path() / "log").find("planner.bogus") != std::string::npos);
  CHECK(cli("run --config " + q(cfg) + " --set novalue --out " + q(dir.path() / "o"), dir.path() / "log") == 1);
  CHECK(cli("run --config " + q(cfg) + " --jobs 0", dir.path() / "log") == 1);
}

TEST_CASE("run with an override names the baseline variant") {
  TempDir dir("cli_run");
  const auto cfg = write_config(dir.path(), "c.json", suite_config());
  const fs::path out = dir.path() / "o";
  REQUIRE(cli("run --config " + q(cfg) + " --set planner.omega_u=0 --out " + q(out), dir.path() / "log") == 0);
  const auto rows = lines(read_file(out / "comparison.csv"));
  REQUIRE(rows.size() == 2);
  CHECK(field(rows[1], 0) == "baseline");
  const json eff = json::parse(read_file(out / "effective_config.json"));
  CHECK(eff["planner"]["omega_u"] == 0);
  CHECK(eff["seed"] == 9);
  CHECK(fs::exists(out / "baseline" / "results" / "s00_pedestrian.json"));

  REQUIRE(cli("run --config " + q(cfg) + " --seed 4 --out " + q(dir.path() / "o2"), dir.path() / "log") == 0);
  CHECK(json::parse(read_file(dir.path() / "o2" / "effective_config.json"))["seed"] == 4);
  CHECK(field(lines(read_file(dir.path() / "o2" / "comparison.csv"))[1], 0) == "ethical");
}

TEST_CASE("rerun from the effective config reproduces every output byte for byte") {
  TempDir dir("cli_rerun");
  json c = suite_config();
  c["logs"] = {{"planner", true}, {"risk", true}};
  const auto cfg = write_config(dir.path(), "c.json", c);
  const fs::path a = dir.path() / "a";
  const fs::path b = dir.path() / "b";
  REQUIRE(cli("run --config " + q(cfg) + " --set planner.omega_u=2 --jobs 2 --out " + q(a), dir.path() / "log") == 0);
  REQUIRE(cli("run --config " + q(a / "effective_config.json") + " --out " + q(b), dir.path() / "log") == 0);
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path rel = fs::relative(e.path(), a);
    CHECK_MESSAGE(read_file(e.path()) == read_file(b / rel), rel.string());
  }
  CHECK(files == 1 + 1 + 2 * 4);
}

TEST_CASE("scenario errors exit 2") {
  TempDir dir("cli_scenario");
  json c = suite_config();
  c["suite"] = json::array({fixture("minimal.json").string(), fixture("nonmonotone_track.json").string()});
  const auto cfg = write_config(dir.path(), "c.json", c);
  CHECK(cli("run --config " + q(cfg) + " --out " + q(dir.path() / "o"), dir.path() / "log") == 2);
  CHECK(read_file(dir.path() / "log").find("nonmonotone_track.json") != std::string::npos);
}

TEST_CASE("training outcomes") {
  TempDir dir("cli_train");
  json c = {{"seed", 1},
            {"train", {{"dataset", source_path("data/toy/dataset.json").string()}, {"steps", 3},
                       {"network", small_network()}}}};
  const auto cfg = write_config(dir.path(), "c.json", c);
  REQUIRE(cli("train --config " + q(cfg) + " --out " + q(dir.path() / "o"), dir.path() / "log") == 0);
  CHECK(lines(read_file(dir.path() / "o" / "loss_trace.csv")).size() == 4);
  CHECK(fs::exists(dir.path() / "o" / "params.json"));

  CHECK(cli("train --config " + q(cfg) + " --set train.learning_rate=1e300 --set train.steps=20 --out " +
                q(dir.path() / "d"),
            dir.path() / "log") == 3);

  write_text(dir.path() / "empty.json", R"({"scenarios":[],"samples":[]})");
  CHECK(cli("train --config " + q(cfg) + " --set train.dataset=" + q(dir.path() / "empty.json") + " --out " +
                q(dir.path() / "e"),
            dir.path() / "log") == 1);
}

TEST_CASE("gradcheck exit codes and step echo") {
  TempDir dir("cli_grad");
  const auto cfg = write_config(
      dir.path(), "c.json",
      json{{"seed", 2}, {"gradcheck", {{"seeds", 1}, {"neighbors", 2}, {"network", small_network()}}}});
  REQUIRE(cli("gradcheck --config " + q(cfg) + " --eps 1e-5 --out " + q(dir.path() / "o"), dir.path() / "log") == 0);
  CHECK(read_file(dir.path() / "log").find("eps=1e-05") != std::string::npos);
  CHECK(json::parse(read_file(dir.path() / "o" / "effective_config.json"))["gradcheck"]["eps"] == 1e-5);
  CHECK(cli("gradcheck --config " + q(cfg) + " --set gradcheck.corrupt_attention=true --out " + q(dir.path() / "o"),
            dir.path() / "log") == 4);
  CHECK(cli("gradcheck --config " + q(cfg) + " --eps -1", dir.path() / "log") == 1);
}

TEST_CASE("sweep rows match individual runs") {
  TempDir dir("cli_sweep");
  const auto cfg = write_config(dir.path(), "c.json", suite_config());
  REQUIRE(cli("sweep --config " + q(cfg) + " --grid 'planner.omega_u=0,1' --out " + q(dir.path() / "s"),
              dir.path() / "log") == 0);
  const auto rows = lines(read_file(dir.path() / "s" / "sweep.csv"));
  REQUIRE(rows.size() == 3);
  for (int k = 0; k < 2; ++k) {
    const fs::path out = dir.path() / ("r" + std::to_string(k));
    REQUIRE(cli("run --config " + q(cfg) + " --set planner.omega_u=" + std::to_string(k) + " --out " + q(out),
                dir.path() / "log") == 0);
    const auto single = lines(read_file(out / "comparison.csv"));
    REQUIRE(single.size() == 2);
    // Sweep: omega_u, omega_o, then the metric columns; comparison: variant first.
    for (int m = 0; m < 5; ++m) CHECK(field(rows[1 + k], 2 + m) == field(single[1], 1 + m));
  }
  CHECK(cli("sweep --config " + q(cfg) + " --out " + q(dir.path() / "e"), dir.path() / "log") == 1);
  CHECK(cli("sweep --config " + q(cfg) + " --grid 'planner.omega_z=0,1' --out " + q(dir.path() / "e"),
            dir.path() / "log") == 1);
}
