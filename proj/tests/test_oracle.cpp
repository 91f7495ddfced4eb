#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "support.hpp"
#include "tppf/error.hpp"
#include "tppf/oracle.hpp"

using namespace tppf;

namespace {

double log_normal(double v, double var) { return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * v * v / var; }

// Per-path quantities recomputed from the chain definition alone.
struct PathLaws {
  Eigen::VectorXd log_p, g, log_tilde, log_star;
};

PathLaws path_laws(const FiniteChain& c, const Eigen::MatrixXi& paths, const Eigen::MatrixXd& log_phi) {
  const Eigen::Index n = c.log_g.cols() - 1;
  const Eigen::MatrixXd phi = log_phi.array().exp();
  PathLaws out;
  out.log_p.resize(paths.rows());
  out.g.resize(paths.rows());
  out.log_tilde.resize(paths.rows());
  for (Eigen::Index i = 0; i < paths.rows(); ++i) {
    double lp = 0, g = c.log_g(paths(i, 0), 0), lt = 0;
    for (Eigen::Index k = 1; k <= n; ++k) {
      const int a = paths(i, k - 1), b = paths(i, k);
      lp += std::log(c.p(a, b));
      g += c.log_g(b, k);
      lt += std::log(c.p(a, b) * phi(b, k) / c.p.row(a).dot(phi.col(k)));
    }
    out.log_p[i] = lp;
    out.g[i] = g;
    out.log_tilde[i] = lt;
  }
  const double log_z = std::log((out.log_p + out.g).array().exp().sum());
  out.log_star = (out.log_p + out.g).array() - log_z;
  return out;
}

double kl(const Eigen::VectorXd& lp, const Eigen::VectorXd& lq) { return (lp.array().exp() * (lp - lq).array()).sum(); }

FiniteChain chain_for(std::uint64_t i, std::size_t s = 3, std::size_t n = 3) {
  Rng rng(SeedSpec{i}, StreamTag::test);
  return random_finite_chain(s, n, rng);
}

}  // namespace

TEST(Enumeration, MatchesBruteForce) {
  for (std::uint64_t i = 0; i < 10; ++i) {
    const FiniteChain c = chain_for(i, 2 + i % 3, 1 + i % 4);
    const Enumeration e = enumerate_chain(c);
    const double z = support::brute_force_z(c.p, c.log_g, static_cast<int>(c.init));
    EXPECT_NEAR(e.log_z, std::log(z), 1e-12);
    EXPECT_NEAR(forward_log_z(c), std::log(z), 1e-12);
    EXPECT_EQ(e.paths.rows(), static_cast<Eigen::Index>(std::pow(c.states(), c.horizon())));
    EXPECT_NEAR(e.log_p.array().exp().sum(), 1.0, 1e-12);
  }
}

TEST(Enumeration, HandWorkedTwoStateChain) {
  FiniteChain c;
  c.p.resize(2, 2);
  c.p << 0.7, 0.3, 0.4, 0.6;
  c.log_g.resize(2, 3);
  c.log_g << 0.0, std::log(0.5), std::log(0.9), 0.0, std::log(0.2), std::log(0.1);
  // 0.7*0.5*(0.7*0.9 + 0.3*0.1) + 0.3*0.2*(0.4*0.9 + 0.6*0.1)
  EXPECT_NEAR(std::exp(forward_log_z(c)), 0.2562, 1e-14);
  EXPECT_NEAR(std::exp(enumerate_chain(c).log_z), 0.2562, 1e-14);
}

TEST(Enumeration, FlatPotentialsGiveUnitZAndFlatTwist) {
  Rng rng(1);
  FiniteChain c = random_finite_chain(3, 3, rng);
  c.log_g.setZero();
  EXPECT_NEAR(forward_log_z(c), 0.0, 1e-14);
  EXPECT_TRUE(optimal_log_twist(c).isZero(1e-14));
}

TEST(Enumeration, RejectsOversizedChains) {
  Rng rng(2);
  EXPECT_THROW(random_finite_chain(7, 2, rng).validate(), Error);
  FiniteChain bad = random_finite_chain(2, 2, rng);
  bad.p(0, 0) += 0.1;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(OptimalTwist, EndsAtTheLastPotentialAndStartsAtZ) {
  const FiniteChain c = chain_for(3, 4, 4);
  const Eigen::MatrixXd t = optimal_log_twist(c);
  EXPECT_TRUE(t.col(4).isApprox(c.log_g.col(4), 1e-14));
  EXPECT_NEAR(t(static_cast<Eigen::Index>(c.init), 0), forward_log_z(c), 1e-12);
  // phi*_k = g_k P[phi*_{k+1}].
  for (Eigen::Index k = 0; k < 4; ++k)
    for (Eigen::Index s = 0; s < 4; ++s)
      EXPECT_NEAR(std::exp(t(s, k)), std::exp(c.log_g(s, k)) * c.p.row(s).dot(t.col(k + 1).array().exp().matrix()), 1e-12);
}

TEST(PathLaws, AgreeWithIndependentRecomputation) {
  const FiniteChain c = chain_for(4);
  const Enumeration e = enumerate_chain(c);
  Rng rng(5);
  const Eigen::MatrixXd log_phi = random_log_twist(c, rng);
  const PathLaws ref = path_laws(c, e.paths, log_phi);
  EXPECT_TRUE(e.log_p.isApprox(ref.log_p, 1e-12));
  EXPECT_TRUE(e.log_g.isApprox(ref.g, 1e-12));
  EXPECT_TRUE(twisted_path_log_prob(c, e, log_phi).isApprox(ref.log_tilde, 1e-12));
  EXPECT_TRUE(twisted_path_log_prob(c, e, optimal_log_twist(c)).isApprox(ref.log_star, 1e-12));
}

TEST(Identities, HoldOnOneHundredRandomInstances) {
  for (std::uint64_t i = 0; i < 100; ++i) {
    const FiniteChain c = chain_for(100 + i, 2 + i % 3, 2 + i % 3);
    const Enumeration e = enumerate_chain(c);
    Rng rng(SeedSpec{i}, StreamTag::oracle);
    const Eigen::MatrixXd log_phi = random_log_twist(c, rng);
    const PathLaws ref = path_laws(c, e.paths, log_phi);
    const DivergenceReport d = divergences(c, e, log_phi);

    // J(Q) = E_Q[-G] + KL(Q || P).
    auto j = [&](const Eigen::VectorXd& lq) { return (lq.array().exp() * -ref.g.array()).sum() + kl(lq, ref.log_p); };
    EXPECT_NEAR(d.j_phi, j(ref.log_tilde), 1e-10);
    EXPECT_NEAR(d.j_phi - d.j_star, d.kl_phi_star, 1e-10) << i;
    EXPECT_NEAR(d.kl_phi_star, kl(ref.log_tilde, ref.log_star), 1e-10);
    EXPECT_NEAR(d.kl_star_phi, kl(ref.log_star, ref.log_tilde), 1e-10);

    // Relative variance of the importance weight equals chi^2(P* | P^phi).
    const Eigen::ArrayXd w = (ref.log_star - ref.log_tilde).array().exp();
    const double chi2 = (ref.log_tilde.array().exp() * (w - 1.0).square()).sum();
    EXPECT_NEAR(d.r2, d.chi2, 1e-12) << i;
    EXPECT_NEAR(d.chi2, chi2, 1e-10 * std::max(1.0, chi2));

    // Donsker-Varadhan: J(Q) >= -log Z, with equality at P*.
    EXPECT_GE(d.dv_gap, -1e-12);
    EXPECT_NEAR(d.j_star, -e.log_z, 1e-10);
    EXPECT_NEAR(d.dv_gap, d.kl_phi_star, 1e-10);

    // Two-sided bounds.
    EXPECT_NEAR(d.m, w.minCoeff(), 1e-12 * w.maxCoeff());
    EXPECT_LE(d.bound_lower, d.r2 * (1 + 1e-12) + 1e-15) << i;
    EXPECT_GE(d.bound_upper, d.r2 * (1 - 1e-12) - 1e-15) << i;
    EXPECT_LE(d.bound_jensen, d.r2 * (1 + 1e-12) + 1e-15) << i;
  }
}

TEST(Identities, OptimalTwistIsAFixedPoint) {
  const FiniteChain c = chain_for(7);
  const Enumeration e = enumerate_chain(c);
  const DivergenceReport d = divergences(c, e, optimal_log_twist(c));
  EXPECT_NEAR(d.kl_phi_star, 0.0, 1e-12);
  EXPECT_NEAR(d.kl_star_phi, 0.0, 1e-12);
  EXPECT_NEAR(d.r2, 0.0, 1e-12);
  EXPECT_NEAR(d.dv_gap, 0.0, 1e-10);
}

TEST(EnumeratedLosses, ReIsJAndCeIsOffsetByKl) {
  const FiniteChain c = chain_for(8);
  const Enumeration e = enumerate_chain(c);
  Rng rng(9);
  const Eigen::MatrixXd log_phi = random_log_twist(c, rng);
  const DivergenceReport d = divergences(c, e, log_phi);
  EXPECT_NEAR(enumerated_loss_re(c, e, log_phi), d.j_phi, 1e-12);
  EXPECT_NEAR(enumerated_loss_ce(c, e, log_phi) - enumerated_loss_ce(c, e, optimal_log_twist(c)), d.kl_star_phi, 1e-12);
}

TEST(Kalman, ZeroStepsIsTheFirstPotential) {
  LinearGaussianSystem sys;
  sys.f = Eigen::MatrixXd::Identity(1, 1);
  sys.q = Eigen::MatrixXd::Identity(1, 1);
  sys.h = Eigen::MatrixXd::Constant(1, 1, 2.0);
  sys.r = {Eigen::MatrixXd::Constant(1, 1, 0.5)};
  sys.log_offset = {0.3};
  sys.x0 = Eigen::VectorXd::Constant(1, 0.4);
  sys.y = {Eigen::VectorXd::Constant(1, 1.1)};
  EXPECT_NEAR(kalman_filter(sys).log_marginal, 0.3 + log_normal(1.1 - 0.8, 0.5), 1e-14);
}

TEST(Kalman, TwoStepsAgreeWithQuadrature) {
  LinearGaussianSystem sys;
  sys.f = Eigen::MatrixXd::Constant(1, 1, 0.8);
  sys.q = Eigen::MatrixXd::Constant(1, 1, 0.5);
  sys.h = Eigen::MatrixXd::Constant(1, 1, 1.5);
  sys.r = {Eigen::MatrixXd::Constant(1, 1, 0.3), Eigen::MatrixXd::Constant(1, 1, 0.4),
           Eigen::MatrixXd::Constant(1, 1, 0.2)};
  sys.log_offset = {0.0, -0.1, 0.2};
  sys.x0 = Eigen::VectorXd::Constant(1, 0.2);
  sys.y = {Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd::Constant(1, -0.3), Eigen::VectorXd::Constant(1, 0.9)};
  auto g = [&](int k, double x) { return std::exp(sys.log_offset[k] + log_normal(sys.y[k][0] - 1.5 * x, sys.r[k](0, 0))); };
  const double z = g(0, 0.2) * support::normal_expectation(
                                   [&](double x1) {
                                     return g(1, x1) * support::normal_expectation([&](double x2) { return g(2, x2); },
                                                                                   0.8 * x1, 0.5);
                                   },
                                   0.8 * 0.2, 0.5);
  EXPECT_NEAR(kalman_filter(sys).log_marginal, std::log(z), 1e-8);

  const LgmOptimalTwist opt = lgm_optimal_twist(sys);
  EXPECT_NEAR(opt.log_phi0, std::log(z), 1e-8);
  // log phi*_n = log g_n as a quadratic in x.
  const QuadraticStep& last = opt.steps.back();
  for (double x : {-1.0, 0.0, 0.7}) {
    const double q = -0.5 * last.lambda(0, 0) * x * x + last.h[0] * x + last.c;
    EXPECT_NEAR(q, std::log(g(2, x)), 1e-12);
  }
}

TEST(GaussianKl, ClosedFormCases) {
  const Eigen::VectorXd a = Eigen::VectorXd::Constant(3, 0.5);
  EXPECT_EQ(gaussian_kl(a, 2.0, a, 2.0), 0.0);
  const Eigen::VectorXd b = Eigen::VectorXd::Zero(3);
  // d/2 (v1/v2 - 1 - log(v1/v2)) + |m1 - m2|^2 / (2 v2)
  EXPECT_NEAR(gaussian_kl(a, 1.0, b, 2.0), 1.5 * (0.5 - 1 - std::log(0.5)) + 0.75 / 4.0, 1e-15);
}

TEST(KernelConvergence, SlopeIsTwoAndLinearInDimension) {
  const SlopeReport rep = check_em_kernel_convergence({0.2, 0.1, 0.05, 0.025, 0.0125}, 1.0, 7);
  EXPECT_GE(rep.slope, 1.8);
  EXPECT_LE(rep.slope, 2.2);
  EXPECT_TRUE(rep.monotone);
  EXPECT_LT(rep.linearity_error, 1e-12);
}

TEST(ZTrend, DifferencesShrinkAndMonteCarloAgrees) {
  const ZTrendReport rep = check_zdis_trend({0.1, 0.05, 0.025, 0.0125}, 1.0, 0.5, 400, 64, SeedSpec{10});
  ASSERT_EQ(rep.diffs.size(), 3u);
  EXPECT_TRUE(rep.shrinking);
  EXPECT_TRUE(rep.mc_consistent);
  for (std::size_t i = 0; i + 1 < rep.diffs.size(); ++i) EXPECT_LT(rep.diffs[i + 1], rep.diffs[i]);
}
