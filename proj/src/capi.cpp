#include "ethplan/ethplan.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "ethplan/app.hpp"

struct ethp_session {
  ethplan::app::Session session;
};

struct ethp_scenario {
  ethplan::scenario::Scenario scenario;
};

namespace {

thread_local std::string last_error;

ethp_status fail(ethp_status status, const std::string& message) {
  last_error = message;
  return status;
}

// Runs `f`, translating exceptions into status codes.
template <typename F>
ethp_status guarded(F&& f) {
  try {
    last_error.clear();
    return f();
  } catch (const ethplan::Error& e) {
    return fail(static_cast<ethp_status>(ethplan::app::exit_code_for(e.kind())), e.what());
  } catch (const std::bad_alloc&) {
    return fail(ETHP_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(ETHP_ERR_INTERNAL, e.what());
  }
}

}  // namespace

extern "C" {

const char* ethp_version(void) { return "0.1.0"; }

const char* ethp_last_error(void) { return last_error.c_str(); }

ethp_status ethp_session_open(const char* config_path, ethp_session** out) {
  if (!config_path || !out) return fail(ETHP_ERR_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    *out = new ethp_session{ethplan::app::Session::open(config_path)};
    return ETHP_OK;
  });
}

void ethp_session_close(ethp_session* s) { delete s; }

ethp_status ethp_session_set(ethp_session* s, const char* key, const char* value) {
  if (!s || !key || !value) return fail(ETHP_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    s->session.set(key, value);
    return ETHP_OK;
  });
}

ethp_status ethp_session_set_output_dir(ethp_session* s, const char* dir) {
  if (!s || !dir) return fail(ETHP_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    s->session.set_output_dir(dir);
    return ETHP_OK;
  });
}

ethp_status ethp_session_set_seed(ethp_session* s, uint64_t seed) {
  if (!s) return fail(ETHP_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    s->session.set_seed(seed);
    return ETHP_OK;
  });
}

ethp_status ethp_session_set_jobs(ethp_session* s, int jobs) {
  if (!s) return fail(ETHP_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    s->session.set_jobs(jobs);
    return ETHP_OK;
  });
}

static ethp_status copy_text(const std::string& text, char* buf, size_t cap, size_t* len) {
  if (len) *len = text.size();
  if (buf && cap > 0) {
    const size_t n = text.size() < cap - 1 ? text.size() : cap - 1;
    std::memcpy(buf, text.data(), n);
    buf[n] = '\0';
  }
  return ETHP_OK;
}

// Read-only queries leave the last error untouched.
ethp_status ethp_session_effective_config(const ethp_session* s, char* buf, size_t cap, size_t* len) {
  if (!s) return fail(ETHP_ERR_ARGUMENT, "null argument");
  return copy_text(s->session.effective().dump(2), buf, cap, len);
}

ethp_status ethp_session_get(const ethp_session* s, const char* key, char* buf, size_t cap, size_t* len) {
  if (!s || !key) return fail(ETHP_ERR_ARGUMENT, "null argument");
  const auto* v = ethplan::app::find_key(s->session.effective(), key);
  if (!v) return fail(ETHP_ERR_CONFIG, std::string("unknown config key '") + key + "'");
  return copy_text(v->dump(), buf, cap, len);
}

ethp_status ethp_run(ethp_session* s) {
  if (!s) return fail(ETHP_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    s->session.run();
    return ETHP_OK;
  });
}

ethp_status ethp_train(ethp_session* s) {
  if (!s) return fail(ETHP_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    s->session.train();
    return ETHP_OK;
  });
}

ethp_status ethp_gradcheck(ethp_session* s, double eps, double* max_rel_error) {
  if (!s) return fail(ETHP_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    const auto sum = s->session.gradcheck(eps > 0.0 ? std::optional<double>(eps) : std::nullopt);
    if (max_rel_error) *max_rel_error = sum.max_rel_error;
    if (!sum.passed)
      return fail(ETHP_ERR_GRADCHECK, "gradient check failed: max relative error " +
                                          ethplan::format_double(sum.max_rel_error) + " > " +
                                          ethplan::format_double(sum.tolerance));
    return ETHP_OK;
  });
}

ethp_status ethp_sweep(ethp_session* s, const char* grid_spec) {
  if (!s) return fail(ETHP_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    s->session.sweep(grid_spec ? grid_spec : "");
    return ETHP_OK;
  });
}

ethp_status ethp_scenario_load(const char* path, ethp_scenario** out) {
  if (!path || !out) return fail(ETHP_ERR_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    *out = new ethp_scenario{ethplan::scenario::load_scenario(path)};
    return ETHP_OK;
  });
}

void ethp_scenario_free(ethp_scenario* sc) { delete sc; }

size_t ethp_scenario_agent_count(const ethp_scenario* sc) { return sc ? sc->scenario.agents.size() : 0; }

ethp_status ethp_scenario_violation_count(const ethp_scenario* sc, size_t* count) {
  if (!sc || !count) return fail(ETHP_ERR_ARGUMENT, "null argument");
  *count = ethplan::scenario::validate_scenario(sc->scenario).size();
  return ETHP_OK;
}

}  // extern "C"
