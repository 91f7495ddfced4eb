#include "tppf/tppf.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include <json.hpp>

#include "tppf/error.hpp"
#include "tppf/filter.hpp"
#include "tppf/harness.hpp"
#include "tppf/models.hpp"
#include "tppf/oracle.hpp"

struct tppf_config {
  tppf::ExperimentConfig value;
};

struct tppf_dataset {
  tppf::Dataset value;
};

namespace {

thread_local std::string g_last_error;

tppf_status to_status(tppf::ErrorCode code) {
  return static_cast<tppf_status>(static_cast<int>(code));
}

template <class F>
tppf_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return TPPF_OK;
  } catch (const tppf::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return TPPF_ERR_RUNTIME;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TPPF_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return TPPF_ERR_RUNTIME;
  }
}

void need(const void* p, const char* what) {
  if (!p) tppf::fail(tppf::ErrorCode::invalid_argument, std::string(what) + " is NULL");
}

tppf::LineSink make_sink(tppf_line_fn fn, void* user) {
  if (!fn) return {};
  return [fn, user](const std::string& line) { fn(line.c_str(), user); };
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* tppf_version(void) { return "0.1.0"; }

const char* tppf_last_error(void) { return g_last_error.c_str(); }

const char* tppf_status_name(tppf_status status) {
  switch (status) {
    case TPPF_OK: return "ok";
    case TPPF_ERR_INVALID_ARGUMENT: return "invalid argument";
    case TPPF_ERR_DEGENERATE: return "degenerate weights";
    case TPPF_ERR_NUMERIC: return "numeric failure";
    case TPPF_ERR_IO: return "i/o error";
    case TPPF_ERR_CONFIG: return "configuration error";
    case TPPF_ERR_REJECTION_EXHAUSTED: return "rejection sampler exhausted";
    case TPPF_ERR_RUNTIME: return "runtime error";
  }
  return "unknown status";
}

tppf_status tppf_config_create(tppf_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new tppf_config();
  });
}

void tppf_config_destroy(tppf_config* config) { delete config; }

tppf_status tppf_config_set(tppf_config* config, const char* key, const char* value) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    tppf::apply_setting(config->value, key, value);
  });
}

tppf_status tppf_config_validate(const tppf_config* config) {
  return guarded([&] {
    need(config, "config");
    config->value.validate();
  });
}

tppf_status tppf_config_hash(const tppf_config* config, char* buffer, size_t len) {
  return guarded([&] {
    need(config, "config");
    need(buffer, "buffer");
    const std::string h = tppf::config_hash(config->value);
    if (len < h.size() + 1) tppf::fail(tppf::ErrorCode::invalid_argument, "hash buffer needs 17 bytes");
    std::memcpy(buffer, h.c_str(), h.size() + 1);
  });
}

tppf_status tppf_run(const tppf_config* config, tppf_line_fn sink, void* user, char** summary_json) {
  return guarded([&] {
    need(config, "config");
    const tppf::RunOutcome out = tppf::run_experiment(config->value, make_sink(sink, user));
    if (summary_json) *summary_json = dup_string(out.table.to_json());
  });
}

tppf_status tppf_sweep(const tppf_config* config, tppf_line_fn sink, void* user, char** summary_json) {
  return guarded([&] {
    need(config, "config");
    const tppf::SweepOutcome out = tppf::run_sweep(config->value, make_sink(sink, user));
    if (summary_json) {
      nlohmann::json cells = nlohmann::json::array();
      for (const auto& c : out.cells) cells.push_back(nlohmann::json::parse(c.to_json()));
      *summary_json = dup_string(nlohmann::json{{"cells", cells}}.dump(2) + "\n");
    }
  });
}

tppf_status tppf_verify(tppf_line_fn sink, void* user, int* failures) {
  return guarded([&] {
    const auto results = tppf::run_verify(make_sink(sink, user));
    int bad = 0;
    for (const auto& r : results) bad += r.pass ? 0 : 1;
    if (failures) *failures = bad;
  });
}

void tppf_string_free(char* text) { std::free(text); }

tppf_status tppf_dataset_generate(const tppf_config* config, tppf_dataset** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    config->value.validate();
    *out = new tppf_dataset{tppf::generate_dataset(config->value.spec(), tppf::SeedSpec{config->value.seed})};
  });
}

tppf_status tppf_dataset_load(const char* path, tppf_dataset** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new tppf_dataset{tppf::load_dataset(path)};
  });
}

tppf_status tppf_dataset_save(const tppf_dataset* data, const char* path) {
  return guarded([&] {
    need(data, "dataset");
    need(path, "path");
    tppf::save_dataset(data->value, path);
  });
}

void tppf_dataset_destroy(tppf_dataset* data) { delete data; }

tppf_status tppf_dataset_info(const tppf_dataset* data, size_t* dim, size_t* horizon) {
  return guarded([&] {
    need(data, "dataset");
    if (dim) *dim = tppf::model_dim(data->value.spec);
    if (horizon) *horizon = tppf::model_horizon(data->value.spec);
  });
}

tppf_status tppf_filter_bpf(const tppf_dataset* data, size_t particles, uint64_t seed, uint64_t replicate,
                            double* log_z_hat, double* mean_ess_rel) {
  return guarded([&] {
    need(data, "dataset");
    tppf::require(particles >= 1, "particles must be positive");
    const tppf::FeynmanKacModel model = tppf::build_model(data->value);
    tppf::FilterOptions opts;
    opts.particles = particles;
    tppf::Rng rng(tppf::SeedSpec{seed}, tppf::StreamTag::filter, replicate);
    const tppf::FilterReport rep = tppf::run_bpf(model, opts, rng);
    if (log_z_hat) *log_z_hat = rep.log_z_hat;
    if (mean_ess_rel) *mean_ess_rel = rep.mean_ess_rel();
  });
}

tppf_status tppf_kalman_log_z(const tppf_dataset* data, double* log_z) {
  return guarded([&] {
    need(data, "dataset");
    need(log_z, "log_z");
    const auto* spec = std::get_if<tppf::LinearGaussianSpec>(&data->value.spec);
    if (!spec) tppf::fail(tppf::ErrorCode::invalid_argument, "Kalman log Z needs a linear Gaussian dataset");
    *log_z = tppf::kalman_log_z(*spec, data->value).log_marginal;
  });
}

}  // extern "C"
