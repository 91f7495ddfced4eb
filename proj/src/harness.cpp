#include "tppf/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "tppf/error.hpp"
#include "tppf/iapf.hpp"
#include "tppf/oracle.hpp"
#include "tppf/twist.hpp"

namespace tppf {

using json = nlohmann::json;

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::string cleaned = text;
  std::replace(cleaned.begin(), cleaned.end(), '[', ' ');
  std::replace(cleaned.begin(), cleaned.end(), ']', ' ');
  std::replace(cleaned.begin(), cleaned.end(), '"', ' ');
  std::stringstream ss(cleaned);
  while (std::getline(ss, item, ',')) {
    // CLI11 may hand over space separated vectors too.
    std::stringstream inner(item);
    std::string word;
    while (inner >> word) out.push_back(word);
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& why) {
  fail(ErrorCode::config, "config: bad value '" + value + "' for '" + key + "': " + why);
}

double to_double(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out))
    bad_value(key, value, "expected a finite number");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, value, "expected a non-negative integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  std::string v = trim(value);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  bad_value(key, value, "expected true or false");
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) return;
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
  out << text;
  if (!out) fail(ErrorCode::io, "failed writing '" + path + "'");
}

std::string csv_text(const std::vector<ReplicateRow>& rows) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : rows) out += format_row(r) + "\n";
  return out;
}

std::string model_label(const ExperimentConfig& c) {
  if (c.model == "lorenz96") {
    char buf[64];
    std::snprintf(buf, sizeof buf, "lorenz96[alpha=%g]", c.alpha.value_or(Lorenz96Spec{}.alpha));
    return buf;
  }
  return c.model;
}

LossKind loss_of(Method m) {
  switch (m) {
    case Method::tppf_ce: return LossKind::ce;
    case Method::tppf_rece: return LossKind::rece;
    default: return LossKind::re;
  }
}

// Everything a method needs that is shared by all replicates of one dataset.
struct Prepared {
  FeynmanKacModel model;
  std::shared_ptr<const Twist> twist;
};

std::shared_ptr<TrainableTwist> make_trainable(const ExperimentConfig& c, const FeynmanKacModel& model) {
  if (c.model == "lgm") {
    auto kernel = std::dynamic_pointer_cast<const GaussianKernel>(model.kernel);
    if (!kernel) fail(ErrorCode::runtime, "LGM model without a Gaussian kernel");
    return std::make_shared<GaussianTwist>(kernel, model.horizon, c.hidden, c.log_var0);
  }
  return std::make_shared<NnTwist>(model.kernel, model.horizon, c.hidden, c.eps, c.inner);
}

TrainConfig train_config(const ExperimentConfig& c, Method m, const Twist& twist) {
  TrainConfig t;
  t.loss = loss_of(m);
  const bool parametric = c.model == "lgm";
  t.iterations = c.train_iters ? c.train_iters : (parametric ? 2000 : 100);
  t.batch = c.train_batch ? c.train_batch : c.particles;
  t.adam.lr = c.lr > 0.0 ? c.lr : (parametric ? 1e-2 : 1e-3);
  if (c.loss_mode == "twisted")
    t.mode = SamplingMode::twisted;
  else if (c.loss_mode == "untwisted")
    t.mode = SamplingMode::untwisted;
  else
    t.mode = default_sampling_mode(twist);
  return t;
}

Prepared prepare(const ExperimentConfig& c, Method m, const Dataset& data, std::uint64_t stream, const LineSink& log) {
  Prepared p;
  p.model = build_model(data);
  const SeedSpec seed{c.seed};
  switch (m) {
    case Method::bpf:
    case Method::iapf: break;
    case Method::fa_apf: p.twist = fa_apf_twist(p.model); break;
    case Method::tppf_re:
    case Method::tppf_ce:
    case Method::tppf_rece: {
      auto twist = make_trainable(c, p.model);
      Rng init_rng(seed, StreamTag::training, stream, ~std::uint64_t{0});
      twist->init(init_rng);
      const TrainConfig tc = train_config(c, m, *twist);
      if (log)
        log("training " + method_name(m) + " (" + twist->kind() + " twist, " + std::to_string(tc.iterations) +
            " iterations, batch " + std::to_string(tc.batch) + ", " + sampling_mode_name(tc.mode) + ")");
      TrainResult tr = train_tppf(p.model, *twist, tc, seed, stream);
      if (!c.trace_dir.empty()) {
        if (!c.timing)
          for (auto& row : tr.trace) row.wall_time = 0.0;
        std::filesystem::create_directories(c.trace_dir);
        const std::string stem = c.trace_dir + "/" + method_name(m) + "_" + model_label(c) + "_d" + std::to_string(c.d);
        write_trace_csv(tr.trace, stem + "_stream" + std::to_string(stream) + ".csv");
      }
      p.twist = twist;
      break;
    }
  }
  return p;
}

FilterReport run_one(const ExperimentConfig& c, Method m, const Prepared& p, std::size_t replicate) {
  const SeedSpec seed{c.seed};
  FilterOptions opts;
  opts.particles = c.particles;
  opts.policy = c.policy;
  if (m == Method::iapf) {
    IapfConfig ic;
    ic.particles = c.particles;
    ic.max_sweeps = c.iapf_sweeps;
    ic.tol = c.iapf_tol;
    ic.policy = c.policy;
    return run_iapf(p.model, ic, seed, replicate).report;
  }
  Rng rng(seed, StreamTag::filter, replicate);
  if (m == Method::bpf) return run_bpf(p.model, opts, rng);
  return run_tpf(p.model, *p.twist, opts, rng);
}

Dataset dataset_for(const ExperimentConfig& c, std::size_t replicate) {
  if (c.shared_dataset) {
    if (!c.dataset_path.empty()) {
      Dataset d = load_dataset(c.dataset_path);
      if (model_name(d.spec) != c.model || model_dim(d.spec) != c.d)
        fail(ErrorCode::config, "dataset '" + c.dataset_path + "' does not match the configured model");
      return d;
    }
    return generate_dataset(c.spec(), SeedSpec{c.seed});
  }
  return generate_dataset(c.spec(), SeedSpec{SeedSpec{c.seed}.derive(StreamTag::dataset, replicate + 1)});
}

ReplicateRow make_row(const ExperimentConfig& c, Method m, std::size_t replicate, const FilterReport& rep) {
  ReplicateRow row;
  row.method = method_name(m);
  row.model = model_label(c);
  row.d = c.d;
  row.particles = c.particles;
  row.seed = c.seed;
  row.replicate = replicate;
  row.log_z_hat = rep.log_z_hat;
  row.mean_ess_rel = rep.mean_ess_rel();
  row.resample_count = rep.resample_count;
  row.wall_time = c.timing ? rep.wall_time : 0.0;
  return row;
}

// Runs replicates [0, count) with `workers` threads and returns them in order.
// If any replicate throws, the prefix before the first failure is kept in
// `done` and the first exception is rethrown.
template <class F>
void run_ordered(std::size_t count, std::size_t workers, std::vector<ReplicateRow>& done, F&& task) {
  std::vector<std::optional<ReplicateRow>> slots(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count || stop.load()) return;
      try {
        slots[i] = task(i);
      } catch (...) {
        errors[i] = std::current_exception();
        stop.store(true);
      }
    }
  };
  const std::size_t w = std::max<std::size_t>(1, std::min(workers, count));
  if (w == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < w; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    if (!slots[i]) fail(ErrorCode::runtime, "replicate " + std::to_string(i) + " did not run");
    done.push_back(*slots[i]);
  }
}

std::optional<double> reference_for(const ExperimentConfig& c, const Dataset& data) {
  if (c.model != "lgm" || !c.shared_dataset) return std::nullopt;
  return kalman_log_z(std::get<LinearGaussianSpec>(data.spec), data).log_marginal;
}

// One cell: every method on one configuration. With `tolerate` a failing
// method is recorded and the others still run; otherwise the rows so far
// are kept in `rows` and the error propagates.
TableReport run_cell(const ExperimentConfig& c, std::vector<ReplicateRow>& rows, bool tolerate, const LineSink& log) {
  TableReport table;
  table.config_hash = config_hash(c);
  table.model = model_label(c);
  table.d = c.d;
  std::optional<Dataset> shared;
  if (c.shared_dataset) {
    shared = dataset_for(c, 0);
    table.reference_logz = reference_for(c, *shared);
  }
  std::vector<ReplicateRow> cell_rows;
  for (std::size_t mi = 0; mi < c.methods.size(); ++mi) {
    const Method m = c.methods[mi];
    const auto start = std::chrono::steady_clock::now();
    std::vector<ReplicateRow> method_rows;
    try {
      // Training streams are tied to the method, not its position in the list.
      const auto stream = static_cast<std::uint64_t>(m);
      std::optional<Prepared> prepared;
      if (shared) prepared = prepare(c, m, *shared, stream, log);
      run_ordered(c.replicates, c.workers, method_rows, [&](std::size_t r) {
        if (prepared) return make_row(c, m, r, run_one(c, m, *prepared, r));
        const Prepared own = prepare(c, m, dataset_for(c, r), stream + 64 * (r + 1), {});
        return make_row(c, m, r, run_one(c, m, own, r));
      });
    } catch (const Error& e) {
      if (!tolerate) {
        cell_rows.insert(cell_rows.end(), method_rows.begin(), method_rows.end());
        rows.insert(rows.end(), cell_rows.begin(), cell_rows.end());
        throw;
      }
      table.failures.emplace_back(method_name(m), e.what());
      if (log) log(model_label(c) + " d=" + std::to_string(c.d) + " " + method_name(m) + ": FAILED: " + e.what());
      continue;
    }
    cell_rows.insert(cell_rows.end(), method_rows.begin(), method_rows.end());
    if (log) {
      const auto s = summarize(method_rows).front();
      char buf[256];
      std::snprintf(buf, sizeof buf, "%s d=%zu %s: sigma=%.6g mean=%.6g ess=%.4f (%.1fs)", model_label(c).c_str(), c.d,
                    method_name(m).c_str(), s.sigma_logz, s.mean_logz, s.mean_ess_rel,
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
      log(buf);
    }
  }
  table.per_method = summarize(cell_rows);
  rows.insert(rows.end(), cell_rows.begin(), cell_rows.end());
  return table;
}

}  // namespace

// ---------------------------------------------------------------- config

std::string method_name(Method m) {
  switch (m) {
    case Method::bpf: return "bpf";
    case Method::fa_apf: return "fa-apf";
    case Method::iapf: return "iapf";
    case Method::tppf_re: return "tppf-re";
    case Method::tppf_ce: return "tppf-ce";
    case Method::tppf_rece: return "tppf-rece";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::bpf, Method::fa_apf, Method::iapf, Method::tppf_re, Method::tppf_ce, Method::tppf_rece})
    if (method_name(m) == name) return m;
  fail(ErrorCode::config, "config: unknown method '" + name + "' (bpf, fa-apf, iapf, tppf-re, tppf-ce, tppf-rece)");
}

void ExperimentConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::config, "config: " + what); };
  if (model != "lgm" && model != "ngm78" && model != "lorenz96") bad("unknown model '" + model + "'");
  if (d == 0) bad("d must be positive");
  if (methods.empty()) bad("method list is empty");
  if (particles < 2) bad("N must be at least 2");
  if (replicates < 1) bad("replicates must be at least 1");
  if (loss_mode != "auto" && loss_mode != "twisted" && loss_mode != "untwisted")
    bad("loss-mode must be auto, twisted or untwisted");
  if (alpha && model != "lorenz96") bad("alpha only applies to lorenz96");
  if (!alphas.empty() && model != "lorenz96") bad("alphas only applies to lorenz96");
  if (t_end && model != "lgm") bad("t-end only applies to lgm");
  if (dt && model == "ngm78") bad("dt does not apply to ngm78");
  if (n && model == "lgm") bad("n does not apply to lgm (set t-end and dt)");
  if (model == "lorenz96" && d < 3) bad("lorenz96 needs d >= 3");
  for (std::size_t v : dims)
    if (v == 0 || (model == "lorenz96" && v < 3)) bad("dims contains an invalid dimension");
  if (hidden == 0 || inner == 0) bad("hidden and inner must be positive");
  if (!(eps > 0.0 && eps < 1.0)) bad("eps must lie in (0, 1)");
  if (lr < 0.0) bad("lr must be non-negative");
  if (workers == 0) bad("workers must be positive");
  if (!(policy.kappa > 0.0 && policy.kappa <= 1.0)) bad("kappa must lie in (0, 1]");
  if (iapf_sweeps == 0) bad("iapf-sweeps must be positive");
  if (!dataset_path.empty() && !shared_dataset) bad("dataset only applies with shared-dataset = true");
  if (model == "lgm") {
    const LinearGaussianSpec s = std::get<LinearGaussianSpec>(spec());
    if (!(s.dt > 0.0 && s.t_end > 0.0)) bad("dt and t-end must be positive");
    const double steps = s.t_end / s.dt;
    if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps)) bad("t-end must be a multiple of dt");
  }
  if (model != "lgm" && n && *n == 0) bad("n must be positive");
  if (dt && !(*dt > 0.0)) bad("dt must be positive");
}

ModelSpec ExperimentConfig::spec() const {
  if (model == "lgm") {
    LinearGaussianSpec s;
    s.d = d;
    if (dt) s.dt = *dt;
    if (t_end) s.t_end = *t_end;
    return s;
  }
  if (model == "ngm78") {
    Ngm78Spec s;
    s.d = d;
    if (n) s.n = *n;
    return s;
  }
  Lorenz96Spec s;
  s.d = d;
  if (alpha) s.alpha = *alpha;
  if (dt) s.dt = *dt;
  if (n) s.n = *n;
  return s;
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream o;
  auto opt = [](const auto& v) { return v ? fmt_double(static_cast<double>(*v)) : std::string("default"); };
  o << "model=" << model << "\nd=" << d << "\nalpha=" << opt(alpha) << "\ndt=" << opt(dt) << "\nt-end=" << opt(t_end)
    << "\nn=" << opt(n) << "\nmethods=";
  for (std::size_t i = 0; i < methods.size(); ++i) o << (i ? "," : "") << method_name(methods[i]);
  o << "\nN=" << particles << "\nreplicates=" << replicates << "\nseed=" << seed
    << "\nshared-dataset=" << shared_dataset << "\ndataset=" << dataset_path << "\ntrain-iters=" << train_iters
    << "\ntrain-batch=" << train_batch << "\nlr=" << fmt_double(lr) << "\nloss-mode=" << loss_mode
    << "\nhidden=" << hidden << "\ninner=" << inner << "\neps=" << fmt_double(eps)
    << "\nlog-var0=" << fmt_double(log_var0)
    << "\nresample=" << (policy.kind == ResamplePolicy::Kind::always ? "always" : "adaptive")
    << "\nkappa=" << fmt_double(policy.kappa) << "\niapf-sweeps=" << iapf_sweeps
    << "\niapf-tol=" << fmt_double(iapf_tol) << "\ntiming=" << timing << "\ndims=";
  for (std::size_t i = 0; i < dims.size(); ++i) o << (i ? "," : "") << dims[i];
  o << "\nalphas=";
  for (std::size_t i = 0; i < alphas.size(); ++i) o << (i ? "," : "") << fmt_double(alphas[i]);
  o << "\n";
  return o.str();
}

std::vector<std::string> setting_keys() {
  return {"model",     "d",          "alpha",      "dt",        "t-end",       "n",          "methods",
          "method",    "N",          "replicates", "seed",      "shared-dataset", "dataset", "train-iters",
          "train-batch", "lr",       "loss-mode",  "hidden",    "inner",       "eps",        "log-var0",
          "resample",  "kappa",      "iapf-sweeps", "iapf-tol", "csv",         "summary",    "trace-dir",
          "timing",    "workers",    "dims",       "alphas"};
}

void apply_setting(ExperimentConfig& c, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string value = trim(raw_value);
  auto size = [&] { return static_cast<std::size_t>(to_u64(key, value)); };
  if (key == "model") {
    c.model = value;
  } else if (key == "d") {
    c.d = size();
  } else if (key == "alpha") {
    c.alpha = to_double(key, value);
  } else if (key == "dt") {
    c.dt = to_double(key, value);
  } else if (key == "t-end") {
    c.t_end = to_double(key, value);
  } else if (key == "n") {
    c.n = size();
  } else if (key == "methods" || key == "method") {
    c.methods.clear();
    for (const auto& m : split_list(value)) c.methods.push_back(parse_method(m));
  } else if (key == "N") {
    c.particles = size();
  } else if (key == "replicates") {
    c.replicates = size();
  } else if (key == "seed") {
    c.seed = to_u64(key, value);
  } else if (key == "shared-dataset") {
    c.shared_dataset = to_bool(key, value);
  } else if (key == "dataset") {
    c.dataset_path = value;
  } else if (key == "train-iters") {
    c.train_iters = size();
  } else if (key == "train-batch") {
    c.train_batch = size();
  } else if (key == "lr") {
    c.lr = to_double(key, value);
  } else if (key == "loss-mode") {
    c.loss_mode = value;
  } else if (key == "hidden") {
    c.hidden = size();
  } else if (key == "inner") {
    c.inner = size();
  } else if (key == "eps") {
    c.eps = to_double(key, value);
  } else if (key == "log-var0") {
    c.log_var0 = to_double(key, value);
  } else if (key == "resample") {
    if (value == "always")
      c.policy.kind = ResamplePolicy::Kind::always;
    else if (value == "adaptive")
      c.policy.kind = ResamplePolicy::Kind::adaptive;
    else
      bad_value(key, value, "expected always or adaptive");
  } else if (key == "kappa") {
    c.policy.kappa = to_double(key, value);
  } else if (key == "iapf-sweeps") {
    c.iapf_sweeps = size();
  } else if (key == "iapf-tol") {
    c.iapf_tol = to_double(key, value);
  } else if (key == "csv") {
    c.csv_path = value;
  } else if (key == "summary") {
    c.summary_path = value;
  } else if (key == "trace-dir") {
    c.trace_dir = value;
  } else if (key == "timing") {
    c.timing = to_bool(key, value);
  } else if (key == "workers") {
    c.workers = size();
  } else if (key == "dims") {
    c.dims.clear();
    for (const auto& v : split_list(value)) c.dims.push_back(static_cast<std::size_t>(to_u64(key, v)));
  } else if (key == "alphas") {
    c.alphas.clear();
    for (const auto& v : split_list(value)) c.alphas.push_back(to_double(key, v));
  } else {
    fail(ErrorCode::config, "config: unknown key '" + key + "'");
  }
}

std::string config_hash(const ExperimentConfig& config) {
  // FNV-1a over the canonical dump.
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : config.canonical()) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------- reports

std::string format_row(const ReplicateRow& r) {
  return r.method + "," + r.model + "," + std::to_string(r.d) + "," + std::to_string(r.particles) + "," +
         std::to_string(r.seed) + "," + std::to_string(r.replicate) + "," + fmt_double(r.log_z_hat) + "," +
         fmt_double(r.mean_ess_rel) + "," + std::to_string(r.resample_count) + "," + fmt_double(r.wall_time);
}

std::vector<ReplicateRow> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != kCsvHeader) fail(ErrorCode::io, "CSV header mismatch");
  std::vector<ReplicateRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    // The model label never contains a comma, so a plain split works.
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 10) fail(ErrorCode::io, "CSV row with " + std::to_string(f.size()) + " fields");
    ReplicateRow r;
    r.method = f[0];
    r.model = f[1];
    r.d = to_u64("d", f[2]);
    r.particles = to_u64("N", f[3]);
    r.seed = to_u64("seed", f[4]);
    r.replicate = to_u64("replicate", f[5]);
    r.log_z_hat = std::strtod(f[6].c_str(), nullptr);
    r.mean_ess_rel = std::strtod(f[7].c_str(), nullptr);
    r.resample_count = to_u64("resample_count", f[8]);
    r.wall_time = std::strtod(f[9].c_str(), nullptr);
    rows.push_back(r);
  }
  return rows;
}

std::vector<MethodSummary> summarize(const std::vector<ReplicateRow>& rows) {
  std::vector<MethodSummary> out;
  std::map<std::string, std::vector<const ReplicateRow*>> groups;
  for (const auto& r : rows) {
    if (!groups.count(r.method)) out.push_back(MethodSummary{r.method});
    groups[r.method].push_back(&r);
  }
  for (auto& s : out) {
    const auto& g = groups[s.method];
    s.count = g.size();
    double sum = 0.0, ess = 0.0;
    for (const auto* r : g) {
      sum += r->log_z_hat;
      ess += r->mean_ess_rel;
    }
    s.mean_logz = sum / static_cast<double>(s.count);
    s.mean_ess_rel = ess / static_cast<double>(s.count);
    double ss = 0.0;
    for (const auto* r : g) ss += (r->log_z_hat - s.mean_logz) * (r->log_z_hat - s.mean_logz);
    s.sigma_logz = s.count > 1 ? std::sqrt(ss / static_cast<double>(s.count - 1)) : 0.0;
  }
  return out;
}

const MethodSummary* TableReport::find(const std::string& method) const {
  for (const auto& s : per_method)
    if (s.method == method) return &s;
  return nullptr;
}

namespace {
json table_json(const TableReport& t) {
  json j;
  j["config_hash"] = t.config_hash;
  j["model"] = t.model;
  j["d"] = t.d;
  json per = json::object();
  for (const auto& s : t.per_method)
    per[s.method] = {{"sigma_logz", s.sigma_logz},
                     {"mean_logz", s.mean_logz},
                     {"mean_ess_rel", s.mean_ess_rel},
                     {"replicates", s.count}};
  j["per_method"] = per;
  if (t.reference_logz) j["reference_logz"] = *t.reference_logz;
  if (!t.failures.empty()) {
    json f = json::object();
    for (const auto& [m, e] : t.failures) f[m] = e;
    j["failures"] = f;
  }
  return j;
}
}  // namespace

std::string TableReport::to_json() const { return table_json(*this).dump(2) + "\n"; }

// ---------------------------------------------------------------- commands

RunOutcome run_experiment(const ExperimentConfig& config, const LineSink& log) {
  config.validate();
  RunOutcome out;
  try {
    out.table = run_cell(config, out.rows, false, log);
  } catch (...) {
    write_text(config.csv_path, csv_text(out.rows));
    throw;
  }
  write_text(config.csv_path, csv_text(out.rows));
  write_text(config.summary_path, out.table.to_json());
  return out;
}

SweepOutcome run_sweep(const ExperimentConfig& config, const LineSink& log) {
  config.validate();
  SweepOutcome out;
  const std::vector<std::size_t> dims = config.dims.empty() ? std::vector<std::size_t>{config.d} : config.dims;
  std::vector<std::optional<double>> alphas;
  if (config.alphas.empty())
    alphas.push_back(config.alpha);
  else
    for (double a : config.alphas) alphas.emplace_back(a);
  for (std::size_t d : dims) {
    for (const auto& a : alphas) {
      ExperimentConfig cell = config;
      cell.d = d;
      cell.alpha = a;
      cell.dims.clear();
      cell.alphas.clear();
      cell.csv_path.clear();
      cell.summary_path.clear();
      try {
        cell.validate();
        out.cells.push_back(run_cell(cell, out.rows, true, log));
      } catch (const Error& e) {
        TableReport failed;
        failed.config_hash = config_hash(cell);
        failed.model = model_label(cell);
        failed.d = d;
        failed.failures.emplace_back("*", e.what());
        if (log) log(failed.model + " d=" + std::to_string(d) + ": FAILED: " + e.what());
        out.cells.push_back(failed);
      }
      write_text(config.csv_path, csv_text(out.rows));
    }
  }
  json j;
  j["config_hash"] = config_hash(config);
  json cells = json::array();
  for (const auto& c : out.cells) cells.push_back(table_json(c));
  j["cells"] = cells;
  write_text(config.csv_path, csv_text(out.rows));
  write_text(config.summary_path, j.dump(2) + "\n");
  return out;
}

// ---------------------------------------------------------------- verify

namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

CheckResult check_zero_variance() {
  double worst_err = 0.0, worst_spread = 0.0;
  for (std::size_t d : {1, 2, 5}) {
    LinearGaussianSpec spec;
    spec.d = d;
    const Dataset data = generate_dataset(spec, SeedSpec{100 + d});
    const FeynmanKacModel model = build_lgm(spec, data);
    const LinearGaussianSystem sys = lgm_system(spec, data);
    const double exact = kalman_filter(sys).log_marginal;
    const auto twist = as_twist(lgm_optimal_twist(sys), std::dynamic_pointer_cast<const GaussianKernel>(model.kernel));
    FilterOptions opts;
    opts.particles = 64;
    double lo = 1e300, hi = -1e300;
    for (std::uint64_t s = 0; s < 10; ++s) {
      Rng rng(SeedSpec{s}, StreamTag::filter);
      const double v = run_tpf(model, *twist, opts, rng).log_z_hat;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      worst_err = std::max(worst_err, std::abs(v - exact));
    }
    worst_spread = std::max(worst_spread, hi - lo);
  }
  return {"zero-variance optimal twist (LGM d=1,2,5)", worst_err < 1e-8 && worst_spread < 1e-10,
          "max |logZ-hat - Kalman| = " + sci(worst_err) + ", spread = " + sci(worst_spread)};
}

CheckResult check_unbiased() {
  Rng gen(SeedSpec{11}, StreamTag::oracle);
  const FiniteChain chain = random_finite_chain(3, 4, gen);
  const double z = std::exp(forward_log_z(chain));
  const FeynmanKacModel model = finite_chain_model(chain);
  const auto fa = fa_apf_twist(model);
  auto tab = std::make_shared<TabularTwist>(std::static_pointer_cast<const FiniteKernel>(model.kernel), chain.horizon());
  tab->table() = random_log_twist(chain, gen);
  FilterOptions opts;
  opts.particles = 8;
  const std::size_t reps = 20000;
  double worst = 0.0;
  const Twist* twists[] = {nullptr, fa.get(), tab.get()};
  for (std::size_t t = 0; t < 3; ++t) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      Rng rng(SeedSpec{12}, StreamTag::filter, t, r);
      const double v = std::exp((twists[t] ? run_tpf(model, *twists[t], opts, rng) : run_bpf(model, opts, rng)).log_z_hat);
      sum += v;
      sq += v * v;
    }
    const double mean = sum / reps;
    const double se = std::sqrt((sq / reps - mean * mean) / reps);
    worst = std::max(worst, std::abs(mean - z) / se);
  }
  return {"unbiasedness on a finite chain (BPF, FA-APF, random twist)", worst < 4.0,
          "max |mean - Z| / SE = " + sci(worst)};
}

CheckResult check_identities() {
  Rng gen(SeedSpec{21}, StreamTag::oracle);
  double j_err = 0.0, chi_err = 0.0, dv_star = 0.0;
  bool dv_ok = true, bounds_ok = true;
  for (int i = 0; i < 100; ++i) {
    const FiniteChain chain = random_finite_chain(2 + i % 3, 2 + i % 3, gen);
    const Enumeration e = enumerate_chain(chain);
    const DivergenceReport rep = divergences(chain, e, random_log_twist(chain, gen));
    j_err = std::max(j_err, std::abs(rep.j_phi - rep.j_star - rep.kl_phi_star));
    chi_err = std::max(chi_err, std::abs(rep.r2 - rep.chi2));
    dv_ok = dv_ok && rep.dv_gap > -1e-10;
    bounds_ok = bounds_ok && rep.bound_lower <= rep.r2 * (1 + 1e-12) + 1e-12 &&
                rep.r2 <= rep.bound_upper * (1 + 1e-12) + 1e-12 && rep.bound_jensen <= rep.r2 + 1e-12;
    dv_star = std::max(dv_star, std::abs(divergences(chain, e, optimal_log_twist(chain)).dv_gap));
  }
  const bool pass = j_err < 1e-10 && chi_err < 1e-12 && dv_ok && dv_star < 1e-10 && bounds_ok;
  return {"divergence identities on 100 random chains", pass,
          "J err " + sci(j_err) + ", r2-chi2 " + sci(chi_err) + ", DV gap at phi* " + sci(dv_star) +
              (bounds_ok ? ", bounds hold" : ", BOUNDS VIOLATED")};
}

CheckResult check_gradients() {
  Rng gen(SeedSpec{31}, StreamTag::oracle);
  const FiniteChain chain = random_finite_chain(3, 3, gen);
  const Enumeration e = enumerate_chain(chain);
  auto kernel = std::make_shared<FiniteKernel>(chain.p);
  TabularTwist twist(kernel, chain.horizon());
  twist.table() = random_log_twist(chain, gen, 0.5);
  const Eigen::MatrixXd table = twist.table();
  const PathBatch untwisted = enumerated_batch(chain, e, nullptr);
  const PathBatch twisted = enumerated_batch(chain, e, &table);
  const LossEstimate re = loss_re(twist, twisted, 0);
  const LossEstimate ce = loss_ce(twist, untwisted, 0);
  const LossEstimate rece = loss_rece(twist, twisted, untwisted, 0);
  double worst = 0.0;
  const double h = 1e-6;
  for (Eigen::Index k = 1; k < table.cols(); ++k) {
    for (Eigen::Index s = 0; s < table.rows(); ++s) {
      Eigen::MatrixXd up = table, dn = table;
      up(s, k) += h;
      dn(s, k) -= h;
      const double fd_re = (enumerated_loss_re(chain, e, up) - enumerated_loss_re(chain, e, dn)) / (2 * h);
      const double fd_ce = (enumerated_loss_ce(chain, e, up) - enumerated_loss_ce(chain, e, dn)) / (2 * h);
      const Eigen::Index idx = k * table.rows() + s;
      auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1e-6, std::abs(b)); };
      worst = std::max({worst, rel(re.grad[idx], fd_re), rel(ce.grad[idx], fd_ce), rel(rece.grad[idx], fd_re + fd_ce)});
    }
  }
  return {"RE/CE/RECE gradients vs finite differences", worst < 1e-3, "max relative error " + sci(worst)};
}

CheckResult check_slope() {
  const SlopeReport rep = check_em_kernel_convergence({0.2, 0.1, 0.05, 0.025, 0.0125}, 1.0, 7);
  const bool pass = rep.slope >= 1.8 && rep.slope <= 2.2 && rep.monotone && rep.linearity_error < 1e-12;
  return {"Euler-Maruyama kernel KL slope", pass,
          "slope " + sci(rep.slope) + ", d-linearity error " + sci(rep.linearity_error)};
}

CheckResult check_ztrend() {
  const ZTrendReport rep = check_zdis_trend({0.2, 0.1, 0.05, 0.025, 0.0125}, 1.0, 0.1, 200, 128, SeedSpec{41});
  std::string diffs;
  for (double d : rep.diffs) diffs += (diffs.empty() ? "" : " ") + sci(d);
  return {"discrete Z converges as the step shrinks", rep.shrinking && rep.mc_consistent,
          "successive |dZ|: " + diffs + (rep.mc_consistent ? "" : ", MC mismatch")};
}

CheckResult check_training() {
  Rng gen(SeedSpec{51}, StreamTag::oracle);
  const FiniteChain chain = random_finite_chain(3, 3, gen);
  const Enumeration e = enumerate_chain(chain);
  const FeynmanKacModel model = finite_chain_model(chain);
  TabularTwist twist(std::static_pointer_cast<const FiniteKernel>(model.kernel), chain.horizon());
  Rng init(SeedSpec{52}, StreamTag::training);
  twist.init(init);
  TrainConfig tc;
  tc.iterations = 2000;
  tc.batch = 256;
  tc.adam.lr = 0.05;
  train_tppf(model, twist, tc, SeedSpec{53});
  const double kl = divergences(chain, e, twist.table()).kl_phi_star;
  return {"tabular TPPF training reaches the optimal path law", kl < 1e-3, "KL(P^phi || P^phi*) = " + sci(kl)};
}

CheckResult check_harness_contracts() {
  ExperimentConfig c;
  c.model = "lgm";
  c.d = 2;
  c.methods = {Method::bpf, Method::fa_apf};
  c.particles = 64;
  c.replicates = 20;
  const RunOutcome a = run_experiment(c);
  const RunOutcome b = run_experiment(c);
  const std::string ta = csv_text(a.rows), tb = csv_text(b.rows);
  const auto reparsed = summarize(parse_csv(ta));
  double err = 0.0;
  for (std::size_t i = 0; i < reparsed.size(); ++i) {
    err = std::max(err, std::abs(reparsed[i].sigma_logz - a.table.per_method[i].sigma_logz));
    err = std::max(err, std::abs(reparsed[i].mean_ess_rel - a.table.per_method[i].mean_ess_rel));
  }
  const Dataset data = generate_dataset(c.spec(), SeedSpec{c.seed});
  const bool round_trip = dataset_to_json(dataset_from_json(dataset_to_json(data))) == dataset_to_json(data);
  const bool pass = ta == tb && err < 1e-12 && round_trip;
  return {"harness determinism and CSV summaries", pass,
          std::string(ta == tb ? "identical CSV" : "CSV DIFFERS") + ", summary recompute err " + sci(err) +
              (round_trip ? ", dataset round trip exact" : ", DATASET ROUND TRIP FAILED")};
}

}  // namespace

std::vector<CheckResult> run_verify(const LineSink& log) {
  using Check = CheckResult (*)();
  const Check checks[] = {check_zero_variance, check_unbiased, check_identities, check_gradients,
                          check_slope,         check_ztrend,   check_training,   check_harness_contracts};
  std::vector<CheckResult> out;
  for (Check check : checks) {
    CheckResult r;
    const auto start = std::chrono::steady_clock::now();
    try {
      r = check();
    } catch (const std::exception& e) {
      r.name = "check";
      r.pass = false;
      r.detail = std::string("error: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log) {
      char buf[48];
      std::snprintf(buf, sizeof buf, " (%.1fs)", secs);
      log(std::string(r.pass ? "PASS " : "FAIL ") + r.name + ": " + r.detail + buf);
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace tppf
