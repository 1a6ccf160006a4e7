// koopman-ddpc: run experiments described by a JSON config.
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <utility>

#include "CLI11.hpp"
#include "koopman_ddpc/koopman_ddpc.h"

namespace {

int report_failure(kddpc_status st) {
  std::fprintf(stderr, "koopman-ddpc: %s\n", kddpc_last_error());
  return st == KDDPC_ERR_ARGUMENT || st == KDDPC_ERR_INTERNAL ? 2 : static_cast<int>(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman data-driven predictive tracking experiments"};
  app.require_subcommand(1, 1);

  std::string config;
  std::string out;
  int jobs = 1;
  std::uint64_t seed = 0;
  const std::pair<const char*, const char*> commands[] = {
      {"verify", "check embedding, Riccati diagnostics and data excitation"},
      {"collect", "record excitation data and persist it"},
      {"track", "run the tracking controller for each W and score its regret"},
      {"sweep", "regret over a W grid with log-linear fits"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "experiment config (JSON)")->required();
    sub->add_option("--out", out, "output directory (default: $KOOPMAN_DDPC_OUT, config out_dir, .)");
    sub->add_option("--jobs", jobs, "parallel runs")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "override the data seed");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  const bool seed_given = app.get_subcommands().front()->count("--seed") > 0;

  kddpc_experiment* exp = nullptr;
  kddpc_status st = kddpc_experiment_load(config.c_str(), &exp);
  if (st != KDDPC_OK) return report_failure(st);
  if (seed_given) kddpc_experiment_set_seed(exp, seed);

  if (out.empty()) {
    if (const char* env = std::getenv("KOOPMAN_DDPC_OUT"); env && *env)
      out = env;
    else if (*kddpc_experiment_config_out_dir(exp))
      out = kddpc_experiment_config_out_dir(exp);
    else
      out = ".";
  }

  st = kddpc_experiment_run(exp, command.c_str(), out.c_str(), jobs);
  std::fputs(kddpc_experiment_summary(exp), stdout);
  for (int i = 0; i < kddpc_experiment_file_count(exp); ++i)
    std::printf("wrote %s\n", kddpc_experiment_file(exp, i));
  kddpc_experiment_free(exp);
  if (st != KDDPC_OK) return report_failure(st);
  return 0;
}
