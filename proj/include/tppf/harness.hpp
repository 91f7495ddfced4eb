#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tppf/filter.hpp"
#include "tppf/losses.hpp"
#include "tppf/models.hpp"

namespace tppf {

enum class Method { bpf, fa_apf, iapf, tppf_re, tppf_ce, tppf_rece };

std::string method_name(Method m);
/// Throws ErrorCode::config on an unknown name.
Method parse_method(const std::string& name);

/// One experiment: a model, a list of methods and a replicate count.
/// Every field has a key understood by apply_setting; see README for the
/// schema.
struct ExperimentConfig {
  std::string model = "lgm";  // lgm | ngm78 | lorenz96
  std::size_t d = 2;
  std::optional<double> alpha;     // lorenz96
  std::optional<double> dt;        // lgm, lorenz96
  std::optional<double> t_end;     // lgm
  std::optional<std::size_t> n;    // ngm78, lorenz96
  std::vector<Method> methods{Method::bpf};
  std::size_t particles = 512;
  std::size_t replicates = 200;
  std::uint64_t seed = 1;
  bool shared_dataset = true;
  std::string dataset_path;  // load instead of generating (shared only)

  // Training. Zero means "model default".
  std::size_t train_iters = 0;
  std::size_t train_batch = 0;
  double lr = 0.0;
  std::string loss_mode = "auto";  // auto | twisted | untwisted
  std::size_t hidden = 32;
  std::size_t inner = 50;
  double eps = 1e-2;
  double log_var0 = 0.0;

  ResamplePolicy policy;
  std::size_t iapf_sweeps = 10;
  double iapf_tol = 1e-3;

  std::string csv_path;
  std::string summary_path;
  std::string trace_dir;
  bool timing = false;
  std::size_t workers = 1;

  // Sweep grids; empty means the single value above.
  std::vector<std::size_t> dims;
  std::vector<double> alphas;

  /// Throws ErrorCode::config.
  void validate() const;
  ModelSpec spec() const;
  /// Stable key = value dump of every field (used for config_hash).
  std::string canonical() const;
};

/// Sets one field from text. Keys use the CLI long-option spelling
/// (e.g. "train-iters", "methods"). Throws ErrorCode::config.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);
std::vector<std::string> setting_keys();

inline constexpr const char* kCsvHeader =
    "method,model,d,N,seed,replicate,log_z_hat,mean_ess_rel,resample_count,wall_time_s";

struct ReplicateRow {
  std::string method;
  std::string model;
  std::size_t d = 0;
  std::size_t particles = 0;
  std::uint64_t seed = 0;
  std::size_t replicate = 0;
  double log_z_hat = 0.0;
  double mean_ess_rel = 0.0;
  std::size_t resample_count = 0;
  double wall_time = 0.0;
};

std::string format_row(const ReplicateRow& row);
/// Parses a CSV produced by format_row (header included). Throws on a
/// header mismatch.
std::vector<ReplicateRow> parse_csv(const std::string& text);

struct MethodSummary {
  std::string method;
  std::size_t count = 0;
  double sigma_logz = 0.0;  // sample standard deviation, n - 1 denominator
  double mean_logz = 0.0;
  double mean_ess_rel = 0.0;
};

struct TableReport {
  std::string config_hash;
  std::string model;
  std::size_t d = 0;
  std::vector<MethodSummary> per_method;
  std::optional<double> reference_logz;
  /// Methods that failed, with the error text.
  std::vector<std::pair<std::string, std::string>> failures;

  std::string to_json() const;
  const MethodSummary* find(const std::string& method) const;
};

/// Summaries in first-appearance order of the methods in `rows`.
std::vector<MethodSummary> summarize(const std::vector<ReplicateRow>& rows);

std::string config_hash(const ExperimentConfig& config);

/// Progress sink for long commands; may be empty.
using LineSink = std::function<void(const std::string&)>;

struct RunOutcome {
  std::vector<ReplicateRow> rows;
  TableReport table;
};

/// Generates or loads the data, trains twists where needed, runs the
/// replicates and writes csv_path / summary_path when set. On a runtime
/// failure the rows finished so far are written before the error
/// propagates.
RunOutcome run_experiment(const ExperimentConfig& config, const LineSink& log = {});

struct SweepOutcome {
  std::vector<ReplicateRow> rows;
  std::vector<TableReport> cells;
};

/// Cartesian product of dims x alphas. A failing cell is recorded in its
/// report and the sweep continues.
SweepOutcome run_sweep(const ExperimentConfig& config, const LineSink& log = {});

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Oracle and invariant checks at a scale that finishes in well under a
/// minute. Each verdict is also sent to `log` as one line.
std::vector<CheckResult> run_verify(const LineSink& log = {});

}  // namespace tppf
