#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "tppf/model.hpp"
#include "tppf/twist.hpp"

namespace tppf {

struct ResamplePolicy {
  enum class Kind { always, adaptive };
  Kind kind = Kind::always;
  /// Resampling threshold on the relative ESS in adaptive mode.
  double kappa = 0.5;

  static ResamplePolicy always() { return {}; }
  static ResamplePolicy adaptive(double kappa = 0.5) { return {Kind::adaptive, kappa}; }
};

/// Particle cloud at one step. log_weights are normalized (exp sums to 1).
struct Ensemble {
  Particles particles;
  Eigen::VectorXd log_weights;
  double log_z_partial = 0.0;
  std::size_t step = 0;
};

struct FilterReport {
  double log_z_hat = 0.0;
  /// One entry per weighting step k = 0..n.
  std::vector<double> ess_rel;
  std::size_t resample_count = 0;
  double wall_time = 0.0;

  double mean_ess_rel() const;
};

/// Called with (k, particles at step k) before weighting.
using ParticleObserver = std::function<void(std::size_t, const Particles&)>;

struct FilterOptions {
  std::size_t particles = 512;
  ResamplePolicy policy;
  ParticleObserver observer;
};

/// 1 / (N sum w_i^2) for normalized log-weights. Throws ErrorCode::degenerate
/// when every weight is zero.
double ess_relative(const Eigen::VectorXd& log_weights);

/// Normalizes log-weights in place and returns log(sum(exp(.))) before
/// normalization. Throws ErrorCode::degenerate (naming `step`) when every
/// weight is -inf.
double normalize_log_weights(Eigen::VectorXd& log_weights, std::size_t step);

/// Multinomial ancestor indices drawn from normalized log-weights.
std::vector<Eigen::Index> sample_ancestors(const Eigen::VectorXd& log_weights, std::size_t count, Rng& rng);

/// Resamples when the policy asks for it. Returns true if it did; weights are
/// then uniform.
bool maybe_resample(Ensemble& ensemble, const ResamplePolicy& policy, Rng& rng);

/// Bootstrap particle filter.
FilterReport run_bpf(const FeynmanKacModel& model, const FilterOptions& options, Rng& rng);

/// Twisted particle filter. With phi = 1 it draws from `rng` in exactly the
/// same order as run_bpf.
FilterReport run_tpf(const FeynmanKacModel& model, const Twist& twist, const FilterOptions& options, Rng& rng);

}  // namespace tppf
