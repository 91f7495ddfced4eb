#include "tppf/losses.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "tppf/error.hpp"

namespace tppf {

namespace {

Rng chunk_rng(std::uint64_t normalizer_seed, std::size_t k) {
  return Rng(derive_seed(normalizer_seed, StreamTag::normalizer, k));
}

double relative_ess_of_log_weights(const Eigen::VectorXd& lw) {
  const double lse = log_sum_exp(lw);
  if (!std::isfinite(lse)) return 0.0;
  const Eigen::ArrayXd w = (lw.array() - lse).exp();
  return 1.0 / (static_cast<double>(lw.size()) * w.square().sum());
}

// Subtracts a baseline from the per-path coefficients s of grad R. The
// score identity sum_i v_i grad R_i = 0 (in expectation for Monte Carlo
// batches, exactly for enumerated ones) keeps the gradient unbiased. Uniform
// batches use the leave-one-out mean; weighted batches the global mean.
Eigen::ArrayXd centered(const Eigen::ArrayXd& v, const Eigen::ArrayXd& s) {
  const Eigen::Index m = v.size();
  const double total = v.sum();
  const double vs = (v * s).sum();
  const bool uniform = m > 1 && (v - v[0]).abs().maxCoeff() <= 1e-15 * std::abs(v[0]);
  if (uniform) {
    const double mean_rest_scale = 1.0 / static_cast<double>(m - 1);
    const double ssum = s.sum();
    return v * (s - (ssum - s) * mean_rest_scale);
  }
  if (!(total > 0.0)) return v * s;
  return v * (s - vs / total);
}

void check_batch(const TrainableTwist& twist, const PathBatch& batch) {
  require(batch.size() >= 1, "loss: empty path batch");
  require(batch.states.size() == twist.horizon() + 1, "loss: batch horizon does not match the twist");
  require(batch.log_g.size() == batch.log_weight.size() && batch.log_g_tail.size() == batch.log_weight.size(),
          "loss: batch has not been scored");
}

void check_finite(const Eigen::VectorXd& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i]))
      fail(ErrorCode::numeric, std::string("loss: ") + what + " is not finite on path " + std::to_string(i));
}

}  // namespace

std::string loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::re: return "re";
    case LossKind::ce: return "ce";
    case LossKind::rece: return "rece";
  }
  return "?";
}

std::string sampling_mode_name(SamplingMode mode) {
  return mode == SamplingMode::twisted ? "twisted" : "untwisted";
}

void score_paths(const FeynmanKacModel& model, PathBatch& batch) {
  const auto m = static_cast<Eigen::Index>(batch.size());
  batch.log_g = Eigen::VectorXd::Zero(m);
  batch.log_g_tail = Eigen::VectorXd::Zero(m);
  for (std::size_t k = 0; k < batch.states.size(); ++k) {
    const Eigen::VectorXd lg = model.log_g(k, batch.states[k]);
    batch.log_g += lg;
    if (k > 0) batch.log_g_tail += lg;
  }
}

PathBatch sample_paths(const FeynmanKacModel& model, const Twist* twist, std::size_t count, Rng& rng) {
  model.validate();
  require(count >= 1, "sample_paths: need at least one path");
  if (twist) require(twist->horizon() == model.horizon, "sample_paths: twist horizon does not match the model");
  PathBatch batch;
  batch.mode = twist ? SamplingMode::twisted : SamplingMode::untwisted;
  const auto m = static_cast<Eigen::Index>(count);
  batch.states.reserve(model.horizon + 1);
  batch.states.push_back(model.init.replicate(1, m));
  for (std::size_t k = 1; k <= model.horizon; ++k) {
    const Particles& prev = batch.states.back();
    batch.states.push_back(twist ? twist->sample_twisted(k, prev, rng) : model.kernel->sample(rng, prev));
  }
  batch.log_weight = Eigen::VectorXd::Constant(m, -std::log(static_cast<double>(count)));
  score_paths(model, batch);
  return batch;
}

Eigen::VectorXd log_path_ratio(const TrainableTwist& twist, const PathBatch& batch, std::uint64_t normalizer_seed) {
  check_batch(twist, batch);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t k = 1; k < batch.states.size(); ++k) {
    Rng rng = chunk_rng(normalizer_seed, k);
    const Eigen::VectorXd chunk = twist.log_phi(k, batch.states[k]) - twist.log_normalizer(k, batch.states[k - 1], rng);
    for (Eigen::Index i = 0; i < chunk.size(); ++i)
      if (!std::isfinite(chunk[i]))
        fail(ErrorCode::numeric, "loss: log(phi / P[phi]) is not finite at step " + std::to_string(k));
    r += chunk;
  }
  return r;
}

Eigen::VectorXd log_path_ratio_vjp(const TrainableTwist& twist, const PathBatch& batch, std::uint64_t normalizer_seed,
                                   const Eigen::VectorXd& seed) {
  check_batch(twist, batch);
  require(seed.size() == static_cast<Eigen::Index>(batch.size()), "log_path_ratio_vjp: seed length mismatch");
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(twist.params().size());
  const Eigen::MatrixXd seed_row = seed.transpose();
  for (std::size_t k = 1; k < batch.states.size(); ++k) {
    Rng rng = chunk_rng(normalizer_seed, k);
    Tape tape(&twist.params());
    const Var chunk = twist.tape_log_phi(tape, k, batch.states[k]) -
                      twist.tape_log_normalizer(tape, k, batch.states[k - 1], rng);
    tape.backward(chunk, seed_row, &grad);
  }
  return grad;
}

LossEstimate loss_re(const TrainableTwist& twist, const PathBatch& batch, std::uint64_t normalizer_seed) {
  check_batch(twist, batch);
  const Eigen::VectorXd r = log_path_ratio(twist, batch, normalizer_seed);
  const Eigen::ArrayXd w = batch.log_weight.array().exp();
  const Eigen::ArrayXd bracket = r.array() - batch.log_g.array();
  check_finite(bracket.matrix(), "reverse-KL bracket");
  LossEstimate est;
  est.batch_size = batch.size();
  Eigen::VectorXd seed;
  if (batch.mode == SamplingMode::twisted) {
    est.value = (w * bracket).sum();
    seed = centered(w, 1.0 - batch.log_g_tail.array() + r.array()).matrix();
    est.batch_ess = relative_ess_of_log_weights(batch.log_weight);
  } else {
    const Eigen::ArrayXd er = r.array().exp();
    est.value = (w * er * bracket).sum();
    seed = centered(w * er, 1.0 - batch.log_g_tail.array() + r.array()).matrix();
    est.batch_ess = relative_ess_of_log_weights(batch.log_weight + r);
  }
  if (!std::isfinite(est.value)) fail(ErrorCode::numeric, "loss: reverse-KL estimate is not finite");
  est.grad = log_path_ratio_vjp(twist, batch, normalizer_seed, seed);
  return est;
}

LossEstimate loss_ce(const TrainableTwist& twist, const PathBatch& batch, std::uint64_t normalizer_seed) {
  check_batch(twist, batch);
  require(batch.mode == SamplingMode::untwisted, "loss_ce: needs untwisted paths");
  Eigen::VectorXd lw = batch.log_weight + batch.log_g;
  const double lse = log_sum_exp(lw);
  if (!std::isfinite(lse)) fail(ErrorCode::numeric, "loss_ce: every path has zero weight");
  const Eigen::ArrayXd w = (lw.array() - lse).exp();
  const Eigen::VectorXd r = log_path_ratio(twist, batch, normalizer_seed);
  LossEstimate est;
  est.batch_size = batch.size();
  est.value = -(w * r.array()).sum();
  if (!std::isfinite(est.value)) fail(ErrorCode::numeric, "loss: cross-entropy estimate is not finite");
  est.batch_ess = relative_ess_of_log_weights(lw);
  est.grad = log_path_ratio_vjp(twist, batch, normalizer_seed, (-w).matrix());
  return est;
}

LossEstimate loss_rece(const TrainableTwist& twist, const PathBatch& re_batch, const PathBatch& ce_batch,
                       std::uint64_t normalizer_seed) {
  const LossEstimate re = loss_re(twist, re_batch, normalizer_seed);
  const LossEstimate ce = loss_ce(twist, ce_batch, normalizer_seed);
  LossEstimate est;
  est.value = re.value + ce.value;
  est.grad = re.grad + ce.grad;
  est.batch_size = re.batch_size;
  est.batch_ess = std::min(re.batch_ess, ce.batch_ess);
  return est;
}

SamplingMode default_sampling_mode(const Twist& twist) {
  return twist.exact_normalizer() ? SamplingMode::twisted : SamplingMode::untwisted;
}

TrainResult train_tppf(const FeynmanKacModel& model, TrainableTwist& twist, const TrainConfig& config,
                       const SeedSpec& seed, std::uint64_t stream) {
  model.validate();
  require(config.batch >= 2, "train_tppf: batch size must be at least 2");
  require(twist.horizon() == model.horizon, "train_tppf: twist horizon does not match the model");
  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  result.trace.reserve(config.iterations);
  AdamState adam;
  std::size_t bad_streak = 0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    Rng rng(seed, StreamTag::training, stream, it);
    const std::uint64_t norm_seed = seed.derive(StreamTag::normalizer, stream, it);
    TrainTraceRow row;
    row.iter = it;
    try {
      LossEstimate est;
      const bool twisted_re = config.mode == SamplingMode::twisted && config.loss != LossKind::ce;
      const bool need_untwisted = !twisted_re || config.loss != LossKind::re;
      PathBatch twisted, untwisted;
      if (twisted_re) twisted = sample_paths(model, &twist, config.batch, rng);
      if (need_untwisted) untwisted = sample_paths(model, nullptr, config.batch, rng);
      const PathBatch& re_batch = twisted_re ? twisted : untwisted;
      switch (config.loss) {
        case LossKind::re: est = loss_re(twist, re_batch, norm_seed); break;
        case LossKind::ce: est = loss_ce(twist, untwisted, norm_seed); break;
        case LossKind::rece: est = loss_rece(twist, re_batch, untwisted, norm_seed); break;
      }
      row.loss = est.value;
      row.grad_norm = est.grad.norm();
      row.batch_ess = est.batch_ess;
      adam_step(twist.params().values(), est.grad, adam, config.adam);
      bad_streak = 0;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::numeric && e.code() != ErrorCode::degenerate) throw;
      row.loss = std::numeric_limits<double>::quiet_NaN();
      row.grad_norm = std::numeric_limits<double>::quiet_NaN();
      ++result.skipped;
      if (++bad_streak >= 3) {
        row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.trace.push_back(row);
        fail(ErrorCode::numeric, "training aborted at iteration " + std::to_string(it) +
                                     " after three non-finite losses in a row: " + e.what());
      }
    }
    row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.trace.push_back(row);
  }
  return result;
}

void write_trace_csv(const std::vector<TrainTraceRow>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
  out << "iter,loss,grad_norm,batch_ess,wall_time\n" << std::setprecision(17);
  for (const auto& r : trace)
    out << r.iter << ',' << r.loss << ',' << r.grad_norm << ',' << r.batch_ess << ',' << r.wall_time << '\n';
  if (!out) fail(ErrorCode::io, "failed writing '" + path + "'");
}

}  // namespace tppf
