// Command-line front end. Talks to the library only through tppf.h.
#include <malloc.h>

#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tppf/tppf.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

void print_stderr(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }
void print_stdout(const char* line, void*) {
  std::printf("%s\n", line);
  std::fflush(stdout);
}

int exit_for(tppf_status s) {
  if (s == TPPF_OK) return kExitOk;
  std::fprintf(stderr, "error (%s): %s\n", tppf_status_name(s), tppf_last_error());
  return s == TPPF_ERR_CONFIG ? kExitConfig : kExitRuntime;
}

// Options shared by run, sweep and dataset. Values are kept as text and
// forwarded to tppf_config_set, after any config file.
struct Settings {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, std::vector<std::string>> lists;
  bool timing = false;

  void add(CLI::App* app, bool sweep) {
    app->add_option("-c,--config", config_file, "key = value configuration file")->check(CLI::ExistingFile);
    const std::vector<std::pair<std::string, std::string>> scalars = {
        {"--model", "lgm | ngm78 | lorenz96"},
        {"--d", "state dimension"},
        {"--alpha", "Lorenz-96 forcing"},
        {"--dt", "step size (lgm, lorenz96)"},
        {"--t-end", "time horizon T (lgm)"},
        {"--n", "number of steps (ngm78, lorenz96)"},
        {"--replicates", "independent filter runs per method"},
        {"--seed", "master seed"},
        {"--shared-dataset", "one dataset for every replicate (true/false)"},
        {"--dataset", "load observations from this JSON file"},
        {"--train-iters", "training iterations (0 = model default)"},
        {"--train-batch", "training batch size (0 = N)"},
        {"--lr", "Adam learning rate (0 = model default)"},
        {"--loss-mode", "auto | twisted | untwisted"},
        {"--hidden", "hidden width of the twist networks"},
        {"--inner", "Monte Carlo draws per normalizer"},
        {"--eps", "lower bound of the network twist"},
        {"--log-var0", "initial log variance of the Gaussian twist"},
        {"--resample", "always | adaptive"},
        {"--kappa", "adaptive resampling threshold on ESS-r"},
        {"--iapf-sweeps", "maximum iAPF sweeps"},
        {"--iapf-tol", "iAPF stopping tolerance on log Z"},
        {"--csv", "output CSV path"},
        {"--summary", "output summary JSON path"},
        {"--trace-dir", "directory for training traces"},
        {"--workers", "threads for replicates"},
    };
    for (const auto& [flag, help] : scalars) app->add_option(flag, values[flag.substr(2)], help);
    app->add_option("-N,--particles", values["N"], "particles per filter");
    app->add_option("-m,--methods,--method", lists["methods"], "bpf, fa-apf, iapf, tppf-re, tppf-ce, tppf-rece")
        ->delimiter(',');
    if (sweep) {
      app->add_option("--dims", lists["dims"], "dimension grid")->delimiter(',');
      app->add_option("--alphas", lists["alphas"], "Lorenz-96 forcing grid")->delimiter(',');
    }
    app->add_flag("--timing", timing, "record wall-clock times (breaks byte-identical output)");
  }

  // Returns a status; on failure tppf_last_error or stderr holds the reason.
  tppf_status apply(CLI::App* app, tppf_config* cfg, bool& has_csv, bool& has_summary) const {
    std::set<std::string> seen;
    if (!config_file.empty()) {
      std::vector<CLI::ConfigItem> items;
      try {
        items = CLI::ConfigTOML().from_file(config_file);
      } catch (const CLI::Error& e) {
        std::fprintf(stderr, "config file: %s\n", e.what());
        return TPPF_ERR_CONFIG;
      }
      for (const auto& item : items) {
        if (item.name.empty() || item.name == "++" || item.name == "--") continue;
        std::string joined;
        for (std::size_t i = 0; i < item.inputs.size(); ++i) joined += (i ? "," : "") + item.inputs[i];
        const tppf_status s = tppf_config_set(cfg, item.name.c_str(), joined.c_str());
        if (s != TPPF_OK) return s;
        seen.insert(item.name);
      }
    }
    for (const auto& [key, value] : values) {
      const std::string flag = key == "N" ? "--particles" : "--" + key;
      if (app->count(flag) == 0) continue;
      const tppf_status s = tppf_config_set(cfg, key.c_str(), value.c_str());
      if (s != TPPF_OK) return s;
      seen.insert(key);
    }
    for (const auto& [key, items] : lists) {
      const std::string flag = key == "methods" ? "--methods" : "--" + key;
      if (app->count(flag) == 0) continue;
      std::string joined;
      for (std::size_t i = 0; i < items.size(); ++i) joined += (i ? "," : "") + items[i];
      const tppf_status s = tppf_config_set(cfg, key.c_str(), joined.c_str());
      if (s != TPPF_OK) return s;
      seen.insert(key);
    }
    if (timing) {
      const tppf_status s = tppf_config_set(cfg, "timing", "true");
      if (s != TPPF_OK) return s;
    }
    has_csv = seen.count("csv") > 0;
    has_summary = seen.count("summary") > 0;
    return TPPF_OK;
  }
};

struct ConfigHandle {
  tppf_config* ptr = nullptr;
  ~ConfigHandle() { tppf_config_destroy(ptr); }
};

int run_or_sweep(CLI::App* app, const Settings& settings, bool sweep) {
  ConfigHandle cfg;
  if (tppf_config_create(&cfg.ptr) != TPPF_OK) return exit_for(TPPF_ERR_RUNTIME);
  bool has_csv = false, has_summary = false;
  tppf_status s = settings.apply(app, cfg.ptr, has_csv, has_summary);
  if (s != TPPF_OK) return exit_for(s);
  const std::string stem = sweep ? "sweep" : "results";
  if (!has_csv) tppf_config_set(cfg.ptr, "csv", (stem + ".csv").c_str());
  if (!has_summary) tppf_config_set(cfg.ptr, "summary", (stem + ".summary.json").c_str());
  if ((s = tppf_config_validate(cfg.ptr)) != TPPF_OK) return exit_for(s);
  char* summary = nullptr;
  s = sweep ? tppf_sweep(cfg.ptr, print_stderr, nullptr, &summary) : tppf_run(cfg.ptr, print_stderr, nullptr, &summary);
  if (s != TPPF_OK) return exit_for(s);
  std::fputs(summary, stdout);
  tppf_string_free(summary);
  return kExitOk;
}

int dataset_cmd(CLI::App* app, const Settings& settings, const std::string& out, bool show_kalman) {
  ConfigHandle cfg;
  if (tppf_config_create(&cfg.ptr) != TPPF_OK) return exit_for(TPPF_ERR_RUNTIME);
  bool has_csv = false, has_summary = false;
  tppf_status s = settings.apply(app, cfg.ptr, has_csv, has_summary);
  if (s != TPPF_OK) return exit_for(s);
  tppf_dataset* data = nullptr;
  if ((s = tppf_dataset_generate(cfg.ptr, &data)) != TPPF_OK) return exit_for(s);
  s = tppf_dataset_save(data, out.c_str());
  if (s == TPPF_OK) {
    std::size_t dim = 0, horizon = 0;
    tppf_dataset_info(data, &dim, &horizon);
    std::printf("wrote %s (d=%zu, n=%zu)\n", out.c_str(), dim, horizon);
    double log_z = 0.0;
    if (show_kalman && tppf_kalman_log_z(data, &log_z) == TPPF_OK) std::printf("kalman log Z = %.17g\n", log_z);
  }
  tppf_dataset_destroy(data);
  return exit_for(s);
}

}  // namespace

int main(int argc, char** argv) {
  // The network twists churn through multi-megabyte temporaries. Keep them
  // on the heap instead of paying an mmap/munmap pair each time.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  CLI::App app{"Twisted particle filters: experiments, sweeps and oracle checks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(tppf_version()));

  Settings run_settings, sweep_settings, data_settings;
  CLI::App* run = app.add_subcommand("run", "run every configured method and write CSV + summary JSON");
  run_settings.add(run, false);
  CLI::App* sweep = app.add_subcommand("sweep", "run the cartesian product of --dims and --alphas");
  sweep_settings.add(sweep, true);
  CLI::App* verify = app.add_subcommand("verify", "run the oracle suite; one verdict line per check");
  CLI::App* dataset = app.add_subcommand("dataset", "generate and save an observation record");
  data_settings.add(dataset, false);
  std::string dataset_out = "dataset.json";
  bool show_kalman = false;
  dataset->add_option("-o,--out", dataset_out, "output JSON path");
  dataset->add_flag("--kalman", show_kalman, "print the exact log Z (lgm only)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (run->parsed()) return run_or_sweep(run, run_settings, false);
  if (sweep->parsed()) return run_or_sweep(sweep, sweep_settings, true);
  if (dataset->parsed()) return dataset_cmd(dataset, data_settings, dataset_out, show_kalman);
  if (verify->parsed()) {
    int failures = 0;
    const tppf_status s = tppf_verify(print_stdout, nullptr, &failures);
    if (s != TPPF_OK) return exit_for(s);
    std::printf("%s: %d failing check(s)\n", failures ? "FAIL" : "PASS", failures);
    return failures ? kExitRuntime : kExitOk;
  }
  return kExitConfig;
}
