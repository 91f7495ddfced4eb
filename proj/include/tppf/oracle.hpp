#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tppf/losses.hpp"
#include "tppf/model.hpp"
#include "tppf/models.hpp"
#include "tppf/twist.hpp"

namespace tppf {

// ---------------------------------------------------------------- finite chains

/// Finite-state Feynman-Kac model: row-stochastic P, log potentials
/// log_g(s, k) for k = 0..n, deterministic initial state.
struct FiniteChain {
  Eigen::MatrixXd p;
  Eigen::MatrixXd log_g;
  std::size_t init = 0;

  std::size_t states() const { return static_cast<std::size_t>(p.rows()); }
  std::size_t horizon() const { return static_cast<std::size_t>(log_g.cols()) - 1; }
  /// Throws unless S <= 6, n <= 6 and P is row-stochastic.
  void validate() const;
};

/// P rows drawn uniformly on [0.1, 1] then normalized; log g uniform on
/// [log_g_min, 0].
FiniteChain random_finite_chain(std::size_t states, std::size_t horizon, Rng& rng, double log_g_min = -2.0);
/// Table with N(0, scale^2) entries, S x (n+1), column 0 unused.
Eigen::MatrixXd random_log_twist(const FiniteChain& chain, Rng& rng, double scale = 1.0);

FeynmanKacModel finite_chain_model(const FiniteChain& chain);

struct Enumeration {
  /// One row per path x_0..x_n (x_0 = init).
  Eigen::MatrixXi paths;
  /// Untwisted path log-probabilities.
  Eigen::VectorXd log_p;
  /// sum_{k=0}^n log g_k along each path.
  Eigen::VectorXd log_g;
  double log_z = 0.0;
};

Enumeration enumerate_chain(const FiniteChain& chain);
/// log Z by the forward recursion.
double forward_log_z(const FiniteChain& chain);
/// log phi*(k, s) by the backward recursion, S x (n+1); column 0 holds
/// log phi*_0 for every start state.
Eigen::MatrixXd optimal_log_twist(const FiniteChain& chain);
/// Exact log P^phi per enumerated path for the table log_phi (S x (n+1)).
Eigen::VectorXd twisted_path_log_prob(const FiniteChain& chain, const Enumeration& e, const Eigen::MatrixXd& log_phi);
/// R = sum_k log(phi / P[phi]) per path.
Eigen::VectorXd path_log_ratio(const FiniteChain& chain, const Enumeration& e, const Eigen::MatrixXd& log_phi);

/// KL(p || q) for log-probability vectors on the same atoms.
double kl_divergence(const Eigen::VectorXd& log_p, const Eigen::VectorXd& log_q);

struct DivergenceReport {
  double j_phi = 0.0;
  double j_star = 0.0;
  double kl_phi_star = 0.0;  // KL(P^phi || P^phi*)
  double kl_star_phi = 0.0;  // KL(P^phi* || P^phi)
  double r2 = 0.0;           // relative variance of e^G dP/dP^phi
  double chi2 = 0.0;         // chi^2(P^phi* | P^phi)
  double m = 0.0;            // min over paths of dP^phi*/dP^phi
  double big_m = 0.0;        // max over paths
  double bound_lower = 0.0;  // e^{m KL(~||*) + KL(*||~)} - 1
  double bound_upper = 0.0;  // e^{M KL(~||*) + KL(*||~)} - 1
  double bound_jensen = 0.0; // e^{KL(*||~)} - 1
  /// Donsker-Varadhan: E_Q[W] + KL(Q || P) - (-log Z) with Q = P^phi.
  double dv_gap = 0.0;
};

DivergenceReport divergences(const FiniteChain& chain, const Enumeration& e, const Eigen::MatrixXd& log_phi);

/// Exact L_RE (phi-dependent part): E_{P^phi}[R - G].
double enumerated_loss_re(const FiniteChain& chain, const Enumeration& e, const Eigen::MatrixXd& log_phi);
/// Exact L_CE (phi-dependent part): -E_{P^phi*}[R].
double enumerated_loss_ce(const FiniteChain& chain, const Enumeration& e, const Eigen::MatrixXd& log_phi);

/// Every enumerated path weighted by its exact probability under P
/// (log_phi == nullptr) or P^phi.
PathBatch enumerated_batch(const FiniteChain& chain, const Enumeration& e, const Eigen::MatrixXd* log_phi);

// ---------------------------------------------------------------- linear Gaussian

/// x_k = F x_{k-1} + N(0, Q), x_0 deterministic, potentials
/// g_k(x) = exp(log_offset_k) N(y_k; H x, R_k).
struct LinearGaussianSystem {
  Eigen::MatrixXd f;
  Eigen::MatrixXd q;
  Eigen::MatrixXd h;
  std::vector<Eigen::MatrixXd> r;
  std::vector<double> log_offset;
  Eigen::VectorXd x0;
  std::vector<Eigen::VectorXd> y;

  std::size_t horizon() const { return y.size() - 1; }
};

LinearGaussianSystem lgm_system(const LinearGaussianSpec& spec, const Dataset& data);

struct KalmanResult {
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
  double log_marginal = 0.0;
};

KalmanResult kalman_filter(const LinearGaussianSystem& sys);
KalmanResult kalman_log_z(const LinearGaussianSpec& spec, const Dataset& data);

/// log phi*(k, x) = -1/2 x'L_k x + h_k'x + c_k for k = 0..n.
struct LgmOptimalTwist {
  std::vector<QuadraticStep> steps;
  /// log phi*_0(x_0), which equals log Z.
  double log_phi0 = 0.0;
};

LgmOptimalTwist lgm_optimal_twist(const LinearGaussianSystem& sys);
std::shared_ptr<const QuadraticTwist> as_twist(const LgmOptimalTwist& opt, std::shared_ptr<const GaussianKernel> kernel);

// ---------------------------------------------------------------- kernel convergence

/// KL(N(m1, v1 I) || N(m2, v2 I)).
double gaussian_kl(const Eigen::VectorXd& m1, double v1, const Eigen::VectorXd& m2, double v2);

struct SlopeReport {
  std::vector<double> eta;
  std::vector<double> kl;
  double slope = 0.0;
  bool monotone = false;
  /// max_eta |KL_d - d KL_1| / KL_1 at the requested dimension.
  double linearity_error = 0.0;
  std::size_t d = 1;
};

/// KL between the EM kernel for b(x) = -x and the exact OU transition
/// N(e^-eta x, 1 - e^{-2 eta}) at x = (x, ..., x).
SlopeReport check_em_kernel_convergence(const std::vector<double>& etas, double x = 1.0, std::size_t d = 1);

struct ZTrendReport {
  std::vector<double> eta;
  std::vector<double> log_z;      // exact, by the Kalman recursion
  std::vector<double> z_mc;       // BPF replicate mean of Z-hat
  std::vector<double> z_mc_se;
  std::vector<double> diffs;      // |Z(eta_i) - Z(eta_{i+1})|, exact
  bool shrinking = false;
  bool mc_consistent = false;     // every MC mean within 4 SE of exact
};

/// 1-D OU with y_t = X_t + B~_{t + t0} observed on the finest grid and
/// subsampled. Potentials exp(-eta |x - y_k|^2 / (2 (k eta + t0))) for k < n
/// and N(x; y_n, T + t0) at k = n.
ZTrendReport check_zdis_trend(const std::vector<double>& etas, double t_end, double t0, std::size_t replicates,
                              std::size_t particles, const SeedSpec& seed);

}  // namespace tppf
