#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tppf/autodiff.hpp"
#include "tppf/model.hpp"
#include "tppf/twist.hpp"

namespace tppf {

enum class LossKind { re, ce, rece };
enum class SamplingMode { twisted, untwisted };

std::string loss_name(LossKind kind);
std::string sampling_mode_name(SamplingMode mode);

/// Weighted set of whole paths x_0..x_n. Monte Carlo batches carry weight
/// 1/M per path; enumerated batches carry exact path probabilities.
struct PathBatch {
  SamplingMode mode = SamplingMode::untwisted;
  /// states[k] is d x M.
  std::vector<Particles> states;
  Eigen::VectorXd log_weight;
  /// sum_{k=0}^n log g_k along each path.
  Eigen::VectorXd log_g;
  /// sum_{k=1}^n log g_k along each path.
  Eigen::VectorXd log_g_tail;

  std::size_t size() const { return static_cast<std::size_t>(log_weight.size()); }
};

/// M independent paths from the untwisted chain (twist == nullptr) or from
/// the twisted chain.
PathBatch sample_paths(const FeynmanKacModel& model, const Twist* twist, std::size_t count, Rng& rng);

/// Fills log_g and log_g_tail from the states.
void score_paths(const FeynmanKacModel& model, PathBatch& batch);

struct LossEstimate {
  /// phi-dependent part of the loss (the constant log phi*_0(x) is omitted).
  double value = 0.0;
  Eigen::VectorXd grad;
  std::size_t batch_size = 0;
  /// Relative ESS of the weights the estimator puts on the batch.
  double batch_ess = 1.0;
};

/// R = sum_{k=1}^n log phi(k, x_k) - log P[phi](k, x_{k-1}) per path. Monte
/// Carlo normalizers draw from streams derived from `normalizer_seed` and k,
/// so repeated calls see the same draws.
Eigen::VectorXd log_path_ratio(const TrainableTwist& twist, const PathBatch& batch, std::uint64_t normalizer_seed);

/// Parameter gradient of sum_i seed_i * R_i.
Eigen::VectorXd log_path_ratio_vjp(const TrainableTwist& twist, const PathBatch& batch, std::uint64_t normalizer_seed,
                                   const Eigen::VectorXd& seed);

/// Reverse KL. Twisted batches: mean of (R - G) with gradient from the
/// surrogate stop(1 - G_tail + R - b) * R with a baseline b. Untwisted
/// batches: mean of e^R (R - G).
LossEstimate loss_re(const TrainableTwist& twist, const PathBatch& batch, std::uint64_t normalizer_seed);
/// Cross-entropy KL on an untwisted batch: -sum w_i R_i with w proportional
/// to (batch weight) * e^G, self-normalized.
LossEstimate loss_ce(const TrainableTwist& twist, const PathBatch& batch, std::uint64_t normalizer_seed);
/// Sum of the two. Pass the same batch twice to share it (untwisted only).
LossEstimate loss_rece(const TrainableTwist& twist, const PathBatch& re_batch, const PathBatch& ce_batch,
                       std::uint64_t normalizer_seed);

struct TrainConfig {
  LossKind loss = LossKind::re;
  /// Sampling mode of the reverse-KL term; CE always uses untwisted paths.
  SamplingMode mode = SamplingMode::twisted;
  std::size_t batch = 512;
  std::size_t iterations = 2000;
  AdamConfig adam;
};

/// Twisted sampling for twists with exact normalizers, untwisted otherwise.
SamplingMode default_sampling_mode(const Twist& twist);

struct TrainTraceRow {
  std::size_t iter = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double batch_ess = 0.0;
  double wall_time = 0.0;
};

struct TrainResult {
  std::vector<TrainTraceRow> trace;
  std::size_t skipped = 0;
};

/// Stochastic-gradient training of the twist. Iteration i draws its paths
/// from (seed, training, i). Non-finite losses skip the update; three in a
/// row abort with ErrorCode::numeric.
TrainResult train_tppf(const FeynmanKacModel& model, TrainableTwist& twist, const TrainConfig& config,
                       const SeedSpec& seed, std::uint64_t stream = 0);

void write_trace_csv(const std::vector<TrainTraceRow>& trace, const std::string& path);

}  // namespace tppf
