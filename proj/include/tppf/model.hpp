#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "tppf/rng.hpp"

namespace tppf {

using StateVec = Eigen::VectorXd;
/// A batch of states, one per column.
using Particles = Eigen::MatrixXd;

/// log(sum(exp(v))) with -inf entries excluded; returns -inf when all are -inf.
double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v);
/// log(mean(exp(v))).
double log_mean_exp(const Eigen::Ref<const Eigen::VectorXd>& v);

class TransitionKernel {
 public:
  virtual ~TransitionKernel() = default;

  virtual std::size_t dim() const = 0;
  /// One draw from P(x, .) per column of `from`. Columns are processed in
  /// order and each consumes its own draws from `rng`.
  virtual Particles sample(Rng& rng, const Particles& from) const = 0;
  virtual double log_density(const StateVec& x, const StateVec& y) const = 0;
};

/// y ~ N(mean(x), variance * I). Covers the Euler-Maruyama kernels of all
/// benchmark models; the isotropic state-independent covariance is what the
/// closed-form twists rely on.
class GaussianKernel final : public TransitionKernel {
 public:
  using MeanMap = std::function<Particles(const Particles&)>;

  GaussianKernel(std::size_t dim, MeanMap mean, double variance);

  std::size_t dim() const override { return dim_; }
  Particles sample(Rng& rng, const Particles& from) const override;
  double log_density(const StateVec& x, const StateVec& y) const override;

  /// Column-wise mean map; throws ErrorCode::numeric naming the first state
  /// whose image is not finite.
  Particles mean(const Particles& xs) const;
  double variance() const { return variance_; }

 private:
  std::size_t dim_;
  MeanMap mean_;
  double variance_;
};

/// EM kernel y = x + eta*b(x) + sqrt(2 eta) * xi, i.e. density
/// (4 pi eta)^(-d/2) exp(-|y - x - eta b(x)|^2 / (4 eta)).
std::shared_ptr<const GaussianKernel> gaussian_em_kernel(std::size_t dim, GaussianKernel::MeanMap drift,
                                                         double eta);

/// Markov chain on {0, ..., S-1}; a state is a 1-vector holding the index.
class FiniteKernel final : public TransitionKernel {
 public:
  explicit FiniteKernel(Eigen::MatrixXd transition);

  std::size_t dim() const override { return 1; }
  Particles sample(Rng& rng, const Particles& from) const override;
  double log_density(const StateVec& x, const StateVec& y) const override;

  const Eigen::MatrixXd& matrix() const { return p_; }
  std::size_t states() const { return static_cast<std::size_t>(p_.rows()); }

 private:
  Eigen::MatrixXd p_;
  Eigen::MatrixXd cumulative_;
};

/// Draws an index from a categorical distribution given by a cumulative table row.
std::size_t sample_categorical(Rng& rng, const Eigen::Ref<const Eigen::VectorXd>& cumulative);

/// Observation y_k ~ N(H x, noise_var * I). Present on models whose potentials
/// have this form; enables closed-form fully adapted twists.
struct LinearGaussianObservation {
  Eigen::MatrixXd h;
  double noise_var = 1.0;
  std::vector<Eigen::VectorXd> y;
};

struct FeynmanKacModel {
  using LogPotential = std::function<Eigen::VectorXd(std::size_t k, const Particles&)>;

  std::size_t dim = 1;
  std::size_t horizon = 0;
  StateVec init;
  std::shared_ptr<const TransitionKernel> kernel;
  LogPotential log_potential;
  std::optional<LinearGaussianObservation> linear_obs;
  /// sup_x log g_k(x) per step, when known. Used to bound g_k as a twist.
  std::optional<std::vector<double>> log_potential_bound;

  /// log g_k at each column; -inf allowed, NaN rejected.
  Eigen::VectorXd log_g(std::size_t k, const Particles& xs) const;
  void validate() const;
};

/// States x_0..x_n as columns.
using Trajectory = Eigen::MatrixXd;

Trajectory simulate_chain(const FeynmanKacModel& model, Rng& rng);

}  // namespace tppf
