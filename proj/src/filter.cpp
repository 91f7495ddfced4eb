#include "tppf/filter.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "tppf/error.hpp"

namespace tppf {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Particles gather_columns(const Particles& xs, const std::vector<Eigen::Index>& idx) {
  Particles out(xs.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = xs.col(idx[i]);
  return out;
}

// Folds the potentials of one step into the ensemble weights and log Z.
void absorb(Ensemble& ens, const Eigen::VectorXd& log_potentials, bool uniform_before, FilterReport& report) {
  const auto n = static_cast<double>(log_potentials.size());
  if (uniform_before) {
    ens.log_weights = log_potentials;
    const double lse = normalize_log_weights(ens.log_weights, ens.step);
    ens.log_z_partial += lse - std::log(n);
  } else {
    ens.log_weights += log_potentials;
    ens.log_z_partial += normalize_log_weights(ens.log_weights, ens.step);
  }
  report.ess_rel.push_back(ess_relative(ens.log_weights));
}

void check_options(const FeynmanKacModel& model, const FilterOptions& options) {
  model.validate();
  require(options.particles >= 2, "particle filter needs at least 2 particles");
  if (options.policy.kind == ResamplePolicy::Kind::adaptive)
    require(options.policy.kappa > 0.0 && options.policy.kappa <= 1.0, "adaptive resampling needs kappa in (0, 1]");
}
}  // namespace

double FilterReport::mean_ess_rel() const {
  if (ess_rel.empty()) return 0.0;
  return std::accumulate(ess_rel.begin(), ess_rel.end(), 0.0) / static_cast<double>(ess_rel.size());
}

double normalize_log_weights(Eigen::VectorXd& log_weights, std::size_t step) {
  const double lse = log_sum_exp(log_weights);
  if (lse == kNegInf)
    fail(ErrorCode::degenerate, "degenerate ensemble: every weight is zero at step " + std::to_string(step));
  if (!std::isfinite(lse)) fail(ErrorCode::numeric, "non-finite weights at step " + std::to_string(step));
  log_weights.array() -= lse;
  return lse;
}

double ess_relative(const Eigen::VectorXd& log_weights) {
  require(log_weights.size() > 0, "ess_relative: empty weight vector");
  double sum = 0.0, sum_sq = 0.0;
  for (double lw : log_weights) {
    if (lw == kNegInf) continue;
    const double w = std::exp(lw);
    sum += w;
    sum_sq += w * w;
  }
  if (!(sum > 0.0)) fail(ErrorCode::degenerate, "ess_relative: all weights are zero");
  // Normalized weights have sum 1; dividing keeps the formula exact for
  // slightly unnormalized input.
  return std::min(1.0, sum * sum / (static_cast<double>(log_weights.size()) * sum_sq));
}

std::vector<Eigen::Index> sample_ancestors(const Eigen::VectorXd& log_weights, std::size_t count, Rng& rng) {
  Eigen::VectorXd cumulative(log_weights.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < log_weights.size(); ++i) {
    acc += std::exp(log_weights[i]);
    cumulative[i] = acc;
  }
  if (!(acc > 0.0)) fail(ErrorCode::degenerate, "sample_ancestors: all weights are zero");
  std::vector<Eigen::Index> idx(count);
  for (auto& a : idx) a = static_cast<Eigen::Index>(sample_categorical(rng, cumulative));
  return idx;
}

bool maybe_resample(Ensemble& ensemble, const ResamplePolicy& policy, Rng& rng) {
  if (policy.kind == ResamplePolicy::Kind::adaptive && ess_relative(ensemble.log_weights) >= policy.kappa) return false;
  const auto n = static_cast<std::size_t>(ensemble.particles.cols());
  const auto idx = sample_ancestors(ensemble.log_weights, n, rng);
  ensemble.particles = gather_columns(ensemble.particles, idx);
  ensemble.log_weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), -std::log(static_cast<double>(n)));
  return true;
}

FilterReport run_bpf(const FeynmanKacModel& model, const FilterOptions& options, Rng& rng) {
  check_options(model, options);
  const auto start = std::chrono::steady_clock::now();
  const auto n_part = static_cast<Eigen::Index>(options.particles);
  FilterReport report;
  report.ess_rel.reserve(model.horizon + 1);
  Ensemble ens;
  ens.particles = model.init.replicate(1, n_part);
  bool uniform = true;
  for (std::size_t k = 0;; ++k) {
    ens.step = k;
    if (options.observer) options.observer(k, ens.particles);
    absorb(ens, model.log_g(k, ens.particles), uniform, report);
    if (k == model.horizon) break;
    uniform = maybe_resample(ens, options.policy, rng);
    if (uniform) ++report.resample_count;
    ens.particles = model.kernel->sample(rng, ens.particles);
  }
  report.log_z_hat = ens.log_z_partial;
  report.wall_time = seconds_since(start);
  return report;
}

FilterReport run_tpf(const FeynmanKacModel& model, const Twist& twist, const FilterOptions& options, Rng& rng) {
  check_options(model, options);
  require(twist.horizon() == model.horizon, "run_tpf: twist horizon " + std::to_string(twist.horizon()) +
                                                " does not match model horizon " + std::to_string(model.horizon));
  const auto start = std::chrono::steady_clock::now();
  const auto n_part = static_cast<Eigen::Index>(options.particles);
  FilterReport report;
  report.ess_rel.reserve(model.horizon + 1);
  Ensemble ens;
  ens.particles = model.init.replicate(1, n_part);
  bool uniform = true;
  for (std::size_t k = 0;; ++k) {
    ens.step = k;
    if (options.observer) options.observer(k, ens.particles);
    // Twisted potential: g_k * P[phi](k+1, .) / phi(k, .).
    Eigen::VectorXd lw = model.log_g(k, ens.particles);
    if (k < model.horizon) lw += twist.log_normalizer(k + 1, ens.particles, rng);
    if (k > 0) lw -= twist.log_phi(k, ens.particles);
    for (Eigen::Index i = 0; i < lw.size(); ++i)
      if (std::isnan(lw[i]))
        fail(ErrorCode::numeric, "twisted potential is not a number at step " + std::to_string(k));
    absorb(ens, lw, uniform, report);
    if (k == model.horizon) break;
    uniform = maybe_resample(ens, options.policy, rng);
    if (uniform) ++report.resample_count;
    ens.particles = twist.sample_twisted(k + 1, ens.particles, rng);
  }
  report.log_z_hat = ens.log_z_partial;
  report.wall_time = seconds_since(start);
  return report;
}

}  // namespace tppf
