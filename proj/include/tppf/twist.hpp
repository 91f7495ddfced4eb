#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tppf/autodiff.hpp"
#include "tppf/model.hpp"

namespace tppf {

/// Twisting function phi(k, .) for k = 1..n together with its normalizer
/// log P[phi](k, x) = log int phi(k, y) P(x, dy) and a sampler for the
/// twisted kernel proportional to phi(k, .) P(x, .). All calls are batched
/// over the columns of `xs`.
class Twist {
 public:
  virtual ~Twist() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t horizon() const = 0;

  virtual Eigen::VectorXd log_phi(std::size_t k, const Particles& xs) const = 0;
  /// xs are states at step k-1. Monte Carlo implementations draw from `rng`;
  /// closed-form ones leave it untouched.
  virtual Eigen::VectorXd log_normalizer(std::size_t k, const Particles& xs, Rng& rng) const = 0;
  /// One draw per column of xs (states at step k-1) from the twisted kernel.
  virtual Particles sample_twisted(std::size_t k, const Particles& xs, Rng& rng) const = 0;
  /// True when log_normalizer is exact (no Monte Carlo).
  virtual bool exact_normalizer() const = 0;

 protected:
  void check_step(std::size_t k) const;
};

/// phi = 1. Samples and normalizes exactly like the untwisted kernel, drawing
/// nothing extra from the rng.
class UnitTwist final : public Twist {
 public:
  UnitTwist(std::shared_ptr<const TransitionKernel> kernel, std::size_t horizon);

  std::string kind() const override { return "unit"; }
  std::size_t horizon() const override { return horizon_; }
  Eigen::VectorXd log_phi(std::size_t k, const Particles& xs) const override;
  Eigen::VectorXd log_normalizer(std::size_t k, const Particles& xs, Rng& rng) const override;
  Particles sample_twisted(std::size_t k, const Particles& xs, Rng& rng) const override;
  bool exact_normalizer() const override { return true; }

 private:
  std::shared_ptr<const TransitionKernel> kernel_;
  std::size_t horizon_;
};

/// log phi(k, x) = -1/2 x'L_k x + h_k'x + c_k under a Gaussian kernel
/// N(m(x), s^2 I). L_k symmetric with L_k + I/s^2 positive definite.
struct QuadraticStep {
  Eigen::MatrixXd lambda;
  Eigen::VectorXd h;
  double c = 0.0;
};

class QuadraticTwist final : public Twist {
 public:
  /// steps[k] for k = 0..n; steps[0] is ignored.
  QuadraticTwist(std::shared_ptr<const GaussianKernel> kernel, std::vector<QuadraticStep> steps);

  std::string kind() const override { return "quadratic"; }
  std::size_t horizon() const override { return steps_.size() - 1; }
  Eigen::VectorXd log_phi(std::size_t k, const Particles& xs) const override;
  Eigen::VectorXd log_normalizer(std::size_t k, const Particles& xs, Rng& rng) const override;
  Particles sample_twisted(std::size_t k, const Particles& xs, Rng& rng) const override;
  bool exact_normalizer() const override { return true; }

  /// Normalizer for a kernel mean already computed (d x B).
  Eigen::VectorXd log_normalizer_at_mean(std::size_t k, const Particles& means) const;
  const QuadraticStep& step(std::size_t k) const { return steps_.at(k); }
  const std::vector<QuadraticStep>& steps() const { return steps_; }
  const GaussianKernel& kernel() const { return *kernel_; }

 private:
  struct Cache {
    Eigen::LLT<Eigen::MatrixXd> precision;  // L + I/s^2
    double log_det_ratio = 0.0;             // log det(I + s^2 L)
  };
  std::shared_ptr<const GaussianKernel> kernel_;
  std::vector<QuadraticStep> steps_;
  std::vector<Cache> cache_;
};

/// Twist whose parameters live in a Params vector and can be evaluated on a
/// Tape. Tape methods return 1 x B rows.
class TrainableTwist : public Twist {
 public:
  Params& params() { return params_; }
  const Params& params() const { return params_; }

  virtual Var tape_log_phi(Tape& tape, std::size_t k, const Particles& xs) const = 0;
  virtual Var tape_log_normalizer(Tape& tape, std::size_t k, const Particles& xs, Rng& rng) const = 0;
  /// Random initialization of the parameters.
  virtual void init(Rng& rng) = 0;

  void save(const std::string& path) const { params_.save(path); }
  void load(const std::string& path) { params_.load(path); }

 protected:
  Params params_;
};

/// phi(k, x) = exp(-|x - mu_k|^2 / (2 sigma_k^2)) with mu_k = NN1(k/n) and
/// log sigma_k^2 = NN2(k/n) + log_var0. Requires a Gaussian kernel; normalizer
/// and twisted sampling are closed form.
class GaussianTwist final : public TrainableTwist {
 public:
  GaussianTwist(std::shared_ptr<const GaussianKernel> kernel, std::size_t horizon, std::size_t hidden = 32,
                double log_var0 = 0.0);

  std::string kind() const override { return "gaussian"; }
  std::size_t horizon() const override { return horizon_; }
  Eigen::VectorXd log_phi(std::size_t k, const Particles& xs) const override;
  Eigen::VectorXd log_normalizer(std::size_t k, const Particles& xs, Rng& rng) const override;
  Particles sample_twisted(std::size_t k, const Particles& xs, Rng& rng) const override;
  bool exact_normalizer() const override { return true; }

  Var tape_log_phi(Tape& tape, std::size_t k, const Particles& xs) const override;
  Var tape_log_normalizer(Tape& tape, std::size_t k, const Particles& xs, Rng& rng) const override;
  void init(Rng& rng) override;

  Eigen::VectorXd mean(std::size_t k) const;
  double variance(std::size_t k) const;
  /// Equivalent quadratic twist for the current parameters.
  QuadraticTwist snapshot() const;

 private:
  Eigen::MatrixXd step_input(std::size_t k) const;
  std::shared_ptr<const GaussianKernel> kernel_;
  std::size_t horizon_;
  double log_var0_;
  DenseNet mean_net_;
  DenseNet var_net_;
};

/// phi(k, x) = eps + (1 - eps)(tanh(NN(x, k/n)) + 1)/2, so phi lies in
/// (eps, 1). Normalizer by Monte Carlo over `inner` kernel draws; twisted
/// sampling by rejection.
class NnTwist final : public TrainableTwist {
 public:
  NnTwist(std::shared_ptr<const TransitionKernel> kernel, std::size_t horizon, std::size_t hidden = 32,
          double eps = 1e-3, std::size_t inner = 50, std::size_t max_attempts = 10000);

  std::string kind() const override { return "nn"; }
  std::size_t horizon() const override { return horizon_; }
  Eigen::VectorXd log_phi(std::size_t k, const Particles& xs) const override;
  Eigen::VectorXd log_normalizer(std::size_t k, const Particles& xs, Rng& rng) const override;
  Particles sample_twisted(std::size_t k, const Particles& xs, Rng& rng) const override;
  bool exact_normalizer() const override { return false; }

  Var tape_log_phi(Tape& tape, std::size_t k, const Particles& xs) const override;
  Var tape_log_normalizer(Tape& tape, std::size_t k, const Particles& xs, Rng& rng) const override;
  void init(Rng& rng) override;

  double eps() const { return eps_; }
  std::size_t inner() const { return inner_; }
  const DenseNet& net() const { return net_; }

 private:
  Eigen::MatrixXd net_input(std::size_t k, const Particles& xs) const;
  std::shared_ptr<const TransitionKernel> kernel_;
  std::size_t horizon_;
  double eps_;
  std::size_t inner_;
  std::size_t max_attempts_;
  DenseNet net_;
};

/// Free table log phi(k, s) on a finite chain (parameter block "log_phi",
/// S x (n+1), column k). Exact normalizer and sampling.
class TabularTwist final : public TrainableTwist {
 public:
  TabularTwist(std::shared_ptr<const FiniteKernel> kernel, std::size_t horizon);

  std::string kind() const override { return "tabular"; }
  std::size_t horizon() const override { return horizon_; }
  Eigen::VectorXd log_phi(std::size_t k, const Particles& xs) const override;
  Eigen::VectorXd log_normalizer(std::size_t k, const Particles& xs, Rng& rng) const override;
  Particles sample_twisted(std::size_t k, const Particles& xs, Rng& rng) const override;
  bool exact_normalizer() const override { return true; }

  Var tape_log_phi(Tape& tape, std::size_t k, const Particles& xs) const override;
  Var tape_log_normalizer(Tape& tape, std::size_t k, const Particles& xs, Rng& rng) const override;
  /// Zero table (phi = 1).
  void init(Rng& rng) override;

  Eigen::Map<Eigen::MatrixXd> table() { return params_.block(0); }
  Eigen::Map<const Eigen::MatrixXd> table() const { return params_.block(0); }

 private:
  std::shared_ptr<const FiniteKernel> kernel_;
  std::size_t horizon_;
};

/// phi(k, .) = g_k of the model, on models without a closed form: Monte Carlo
/// normalizer and rejection against the potential bound.
class PotentialTwist final : public Twist {
 public:
  PotentialTwist(const FeynmanKacModel& model, std::size_t inner = 50, std::size_t max_attempts = 100000);

  std::string kind() const override { return "potential"; }
  std::size_t horizon() const override { return model_.horizon; }
  Eigen::VectorXd log_phi(std::size_t k, const Particles& xs) const override;
  Eigen::VectorXd log_normalizer(std::size_t k, const Particles& xs, Rng& rng) const override;
  Particles sample_twisted(std::size_t k, const Particles& xs, Rng& rng) const override;
  bool exact_normalizer() const override { return false; }

 private:
  FeynmanKacModel model_;
  std::size_t inner_;
  std::size_t max_attempts_;
};

/// log int exp(-1/2 y'Ly + h'y + c) N(y; m(x), s^2 I) dy per column of xs.
Eigen::VectorXd quadratic_log_normalizer(const GaussianKernel& kernel, const QuadraticStep& step, const Particles& xs);

/// Log of the mean of phi(k, U_i) over `inner` draws U_i ~ P(x, .) per column.
Eigen::VectorXd mc_normalizer(const TransitionKernel& kernel, const Twist& twist, std::size_t k, const Particles& xs,
                              std::size_t inner, Rng& rng);

/// Draws from the twisted kernel by proposing from P(x, .) and accepting with
/// probability exp(log_phi - log_bound). Columns are served in order; throws
/// ErrorCode::rejection_exhausted when a column needs more than max_attempts.
Particles rejection_sample_twisted(const TransitionKernel& kernel, const Twist& twist, std::size_t k,
                                   const Particles& xs, Rng& rng, std::size_t max_attempts, double log_bound = 0.0);

/// Twist used by the fully adapted APF: phi(k, .) = g_k. Closed form
/// (quadratic) when the model has a linear Gaussian observation and a
/// Gaussian kernel, tabular on finite chains, Monte Carlo otherwise.
std::shared_ptr<const Twist> fa_apf_twist(const FeynmanKacModel& model);

/// Copies k-sliced state columns `count` times each, consecutively.
Particles repeat_columns(const Particles& xs, std::size_t count);

}  // namespace tppf
