#include "sdoed.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "sdoed/errors.hpp"
#include "sdoed/pipeline.hpp"

struct sdoed_run {
  std::unique_ptr<sdoed::Pipeline> pipeline;
  std::string last_error;
};

namespace {

int guard(sdoed_run* run, const std::function<void()>& body) {
  try {
    body();
    run->last_error.clear();
    return SDOED_OK;
  } catch (const sdoed::ConfigError& e) {
    run->last_error = e.what();
    return SDOED_ERR_CONFIG;
  } catch (const sdoed::ContractViolation& e) {
    run->last_error = e.what();
    return SDOED_ERR_INVALID_ARGUMENT;
  } catch (const sdoed::CapacityError& e) {
    run->last_error = e.what();
    return SDOED_ERR_CAPACITY;
  } catch (const sdoed::NlpFailure& e) {
    run->last_error = e.what();
    return SDOED_ERR_NONCONVERGENCE;
  } catch (const sdoed::SolveError& e) {
    run->last_error = e.what();
    return SDOED_ERR_NONCONVERGENCE;
  } catch (const sdoed::EvaluationError& e) {
    run->last_error = e.what();
    return SDOED_ERR_EVALUATION;
  } catch (const std::exception& e) {
    run->last_error = e.what();
    return SDOED_ERR_INTERNAL;
  }
}

}  // namespace

extern "C" {

int sdoed_run_create(const char* config_path, const char* out_dir, sdoed_run** out) {
  if (!config_path || !out_dir || !out) return SDOED_ERR_INVALID_ARGUMENT;
  *out = nullptr;
  auto run = new sdoed_run();
  const int rc = guard(run, [&]() {
    sdoed::WorkflowConfig cfg = sdoed::load_config(config_path);
    run->pipeline = std::make_unique<sdoed::Pipeline>(std::move(cfg), out_dir);
  });
  if (rc != SDOED_OK) {
    // keep the handle so the caller can read the error, pipeline stays empty
    *out = run;
    return rc;
  }
  *out = run;
  return SDOED_OK;
}

void sdoed_run_destroy(sdoed_run* run) { delete run; }

int sdoed_run_set_seed(sdoed_run* run, uint64_t seed) {
  if (!run) return SDOED_ERR_INVALID_ARGUMENT;
  if (!run->pipeline) {
    run->last_error = "run handle holds no pipeline (creation failed)";
    return SDOED_ERR_INVALID_ARGUMENT;
  }
  return guard(run, [&]() { run->pipeline->set_seed(seed); });
}

int sdoed_run_stage(sdoed_run* run, const char* stage) {
  if (!run || !stage) return SDOED_ERR_INVALID_ARGUMENT;
  if (!run->pipeline) {
    run->last_error = "run handle holds no pipeline (creation failed)";
    return SDOED_ERR_INVALID_ARGUMENT;
  }
  const std::string s = stage;
  return guard(run, [&]() {
    if (s == "plan")
      run->pipeline->run_plan();
    else if (s == "hdsa")
      run->pipeline->run_hdsa();
    else if (s == "design")
      run->pipeline->run_design();
    else if (s == "update")
      run->pipeline->run_update();
    else if (s == "simulate")
      run->pipeline->run_simulate();
    else if (s == "workflow")
      run->pipeline->run_workflow();
    else
      throw sdoed::ContractViolation("unknown stage '" + s + "'");
  });
}

int sdoed_run_compare(sdoed_run* run, int n_designs, int n_truth_models) {
  if (!run) return SDOED_ERR_INVALID_ARGUMENT;
  if (!run->pipeline) {
    run->last_error = "run handle holds no pipeline (creation failed)";
    return SDOED_ERR_INVALID_ARGUMENT;
  }
  return guard(run, [&]() { run->pipeline->run_compare(n_designs, n_truth_models); });
}

int sdoed_run_summary(sdoed_run* run, char** out_json) {
  if (!run || !out_json) return SDOED_ERR_INVALID_ARGUMENT;
  if (!run->pipeline) {
    run->last_error = "run handle holds no pipeline (creation failed)";
    return SDOED_ERR_INVALID_ARGUMENT;
  }
  return guard(run, [&]() {
    const std::string s = run->pipeline->summary().dump(2);
    char* buf = static_cast<char*>(std::malloc(s.size() + 1));
    if (!buf) throw std::bad_alloc();
    std::memcpy(buf, s.c_str(), s.size() + 1);
    *out_json = buf;
  });
}

void sdoed_string_free(char* s) { std::free(s); }

const char* sdoed_last_error(const sdoed_run* run) {
  return run ? run->last_error.c_str() : "";
}

const char* sdoed_version(void) { return "0.1.0"; }

}  // extern "C"
