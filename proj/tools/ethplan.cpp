// ethplan command-line driver: run, train, gradcheck and sweep subcommands
// over the C interface.
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ethplan/ethplan.h"

namespace {

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  long long seed = -1;
  int jobs = 0;
  double eps = 0.0;
  std::string grid;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "run config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--set", o.sets, "override KEY=VALUE (repeatable)");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--seed", o.seed, "root seed")->check(CLI::NonNegativeNumber);
  cmd->add_option("--jobs", o.jobs, "worker threads for suite evaluation")->check(CLI::PositiveNumber);
}

int report(ethp_status st) {
  if (st != ETHP_OK) std::fprintf(stderr, "ethplan: %s\n", ethp_last_error());
  return static_cast<int>(st);
}

// Opens the session and applies the command-line settings in a fixed order.
ethp_status open_session(const Options& o, ethp_session** s) {
  ethp_status st = ethp_session_open(o.config.c_str(), s);
  if (st != ETHP_OK) return st;
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::fprintf(stderr, "ethplan: --set expects KEY=VALUE, got '%s'\n", kv.c_str());
      return ETHP_ERR_CONFIG;
    }
    st = ethp_session_set(*s, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (st != ETHP_OK) return st;
  }
  if (!o.out.empty() && (st = ethp_session_set_output_dir(*s, o.out.c_str())) != ETHP_OK) return st;
  if (o.seed >= 0 && (st = ethp_session_set_seed(*s, static_cast<uint64_t>(o.seed))) != ETHP_OK) return st;
  if (o.jobs > 0 && (st = ethp_session_set_jobs(*s, o.jobs)) != ETHP_OK) return st;
  return ETHP_OK;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Risk-aware ethical trajectory planning"};
  app.require_subcommand(1);
  Options o;

  auto* run = app.add_subcommand("run", "evaluate the scenario suite for every variant");
  add_common(run, o);
  auto* train = app.add_subcommand("train", "train the attention-LSTM predictor");
  add_common(train, o);
  auto* grad = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  add_common(grad, o);
  grad->add_option("--eps", o.eps, "finite-difference step")->check(CLI::PositiveNumber);
  auto* sweep = app.add_subcommand("sweep", "evaluate the suite over a parameter grid");
  add_common(sweep, o);
  sweep->add_option("--grid", o.grid, "grid spec KEY=V1,V2;KEY2=V3");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  ethp_session* s = nullptr;
  ethp_status st = open_session(o, &s);
  if (st == ETHP_OK) {
    if (*run) {
      st = ethp_run(s);
      if (st == ETHP_OK) std::printf("wrote comparison.csv\n");
    } else if (*train) {
      st = ethp_train(s);
      if (st == ETHP_OK) std::printf("wrote params.json and loss_trace.csv\n");
    } else if (*grad) {
      double err = 0.0;
      st = ethp_gradcheck(s, o.eps, &err);
      if (st == ETHP_OK || st == ETHP_ERR_GRADCHECK) {
        char eps[64] = "";
        ethp_session_get(s, "gradcheck.eps", eps, sizeof eps, nullptr);
        std::printf("eps=%s max_rel_error=%.6e\n", eps, err);
      }
    } else if (*sweep) {
      st = ethp_sweep(s, o.grid.c_str());
      if (st == ETHP_OK) std::printf("wrote sweep.csv\n");
    }
  }
  const int code = report(st);
  ethp_session_close(s);
  return code;
}
