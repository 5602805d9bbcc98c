// Command-line front end; talks to the toolkit exclusively through the C API.
#include <CLI11.hpp>
#include <cstdint>
#include <cstdio>
#include <json.hpp>
#include <string>

#include "sdoed.h"

namespace {

int exit_code_for(int rc) {
  switch (rc) {
    case SDOED_OK:
      return 0;
    case SDOED_ERR_CONFIG:
    case SDOED_ERR_INVALID_ARGUMENT:
    case SDOED_ERR_IO:
      return 2;
    default:
      return 1;  // solver non-convergence and other runtime failures
  }
}

void print_summary(sdoed_run* run, const std::string& format) {
  char* json = nullptr;
  if (sdoed_run_summary(run, &json) != SDOED_OK || !json) return;
  if (format == "json") {
    std::fputs(json, stdout);
    std::fputc('\n', stdout);
  } else {
    // key,value rows from the flattened summary
    const auto j = nlohmann::json::parse(json);
    std::fputs("key,value\n", stdout);
    for (const auto& [key, value] : j.flatten().items())
      std::fprintf(stdout, "%s,%s\n", key.c_str(), value.dump().c_str());
  }
  sdoed_string_free(json);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory planning with sensitivity-driven experimental design"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path;
  std::string out_dir = "out";
  std::string format = "json";
  std::uint64_t seed = 0;
  bool seed_given = false;

  app.add_option("--config", config_path, "configuration file (JSON)")->required();
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--format", format, "summary format: csv|json")
      ->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--seed", seed, "override the RNG seed")->each([&](const std::string&) {
    seed_given = true;
  });

  // stages 1..6 of the workflow, individually or fused
  const char* stage_names[] = {"plan", "hdsa", "design", "update", "simulate", "workflow"};
  const char* stage_help[] = {
      "solve the open-loop planning problem",
      "compute controller sensitivities around the plan",
      "solve the budgeted experimental-design problem",
      "evaluate the truth model at the design points, refit, re-plan",
      "run open/closed-loop simulations and write the report",
      "run every stage in order",
  };
  for (int i = 0; i < 6; ++i) app.add_subcommand(stage_names[i], stage_help[i]);

  auto* compare = app.add_subcommand("compare", "random-design comparison study");
  int n_designs = 0, n_truth = 0;
  compare->add_option("--designs", n_designs, "number of random designs (0 = configured)");
  compare->add_option("--truth-models", n_truth, "number of truth models (0 = configured)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // usage problems exit 2
  }

  sdoed_run* run = nullptr;
  int rc = sdoed_run_create(config_path.c_str(), out_dir.c_str(), &run);
  if (rc != SDOED_OK) {
    std::fprintf(stderr, "error: %s\n", run ? sdoed_last_error(run) : "create failed");
    sdoed_run_destroy(run);
    return exit_code_for(rc);
  }
  if (seed_given) {
    rc = sdoed_run_set_seed(run, seed);
    if (rc != SDOED_OK) {
      std::fprintf(stderr, "error: %s\n", sdoed_last_error(run));
      sdoed_run_destroy(run);
      return exit_code_for(rc);
    }
  }

  for (const auto* sub : app.get_subcommands()) {
    const std::string& name = sub->get_name();
    if (name == "compare")
      rc = sdoed_run_compare(run, n_designs, n_truth);
    else
      rc = sdoed_run_stage(run, name.c_str());
    if (rc != SDOED_OK) {
      std::fprintf(stderr, "error: %s\n", sdoed_last_error(run));
      sdoed_run_destroy(run);
      return exit_code_for(rc);
    }
  }

  print_summary(run, format);
  sdoed_run_destroy(run);
  return 0;
}
