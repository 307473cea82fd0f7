#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ethplan/network.hpp"
#include "ethplan/simulation.hpp"

namespace ethplan::app {

enum class ExitCode : int {
  kOk = 0,
  kConfig = 1,
  kScenario = 2,
  kDivergence = 3,
  kGradcheck = 4,
};

ExitCode exit_code_for(ErrorKind kind);

// Every recognised key with its default. Objects left empty here (sweep.grid)
// accept arbitrary keys.
nlohmann::json default_config();

// Dotted-path lookup into a config document; nullptr when absent.
const nlohmann::json* find_key(const nlohmann::json& doc, std::string_view dotted);

// Assigns an existing dotted key. The value text is read as JSON when it
// parses and as a plain string otherwise. Throws kConfig for unknown keys or
// a type change.
void set_key(nlohmann::json& doc, std::string_view dotted, const nlohmann::json& value);
nlohmann::json parse_value(std::string_view text);

// Builds typed settings from an effective config. Relative paths are taken
// from `base_dir`.
simulation::SimConfig sim_config(const nlohmann::json& effective, const std::filesystem::path& base_dir);
prediction::NetworkConfig network_config(const nlohmann::json& section);

// Variant name and config per entry of "variants"; a single variant named
// "baseline" (omega_u == 0) or "ethical" otherwise when the list is empty.
std::vector<simulation::Variant> variants(const nlohmann::json& effective,
                                          const std::filesystem::path& base_dir);

// Directory (every *.json, sorted by name) or explicit list of files.
std::vector<scenario::Scenario> load_suite(const nlohmann::json& suite,
                                           const std::filesystem::path& base_dir);

// Dataset document: {"scenarios": [paths], "samples": [{"scenario": index,
// "agent": id, "anchor": step}]}; paths relative to the dataset file.
std::vector<prediction::TrainingSample> load_dataset(const std::filesystem::path& path,
                                                     const prediction::NetworkConfig& network,
                                                     double neighbor_radius);

// "key=v1,v2;key2=v3" into ordered (key, values) pairs.
std::vector<std::pair<std::string, std::vector<nlohmann::json>>> parse_grid(std::string_view spec);

struct GradcheckSummary {
  std::vector<prediction::GradCheckReport> reports;
  double max_rel_error = 0.0;
  double eps = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// One configured experiment. Settings may be changed until a command runs;
// every command writes effective_config.json into the output directory.
class Session {
 public:
  // Reads the config file, layering it over the defaults. Throws kConfig.
  static Session open(const std::filesystem::path& config_path);

  void set(std::string_view key, std::string_view value_text);
  void set_output_dir(const std::filesystem::path& dir) { output_dir_ = dir; }
  void set_seed(std::uint64_t seed);
  void set_jobs(int jobs);

  const nlohmann::json& effective() const { return config_; }
  const std::filesystem::path& output_dir() const { return output_dir_; }

  simulation::SuiteReport run();
  std::vector<double> train();
  GradcheckSummary gradcheck(std::optional<double> eps = std::nullopt);
  void sweep(std::string_view grid_spec);

 private:
  void write_effective() const;
  void write_file(const std::filesystem::path& rel, const std::string& text) const;

  nlohmann::json config_;
  std::filesystem::path base_dir_;
  std::filesystem::path output_dir_;
  int jobs_ = 1;
};

}  // namespace ethplan::app
