#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "support.hpp"
#include "tppf/error.hpp"
#include "tppf/filter.hpp"
#include "tppf/models.hpp"
#include "tppf/twist.hpp"

using namespace tppf;

namespace {

// log phi given by a scalar function; counts evaluated columns so tests can
// measure how many proposals a sampler made.
class FunctionTwist final : public Twist {
 public:
  FunctionTwist(std::shared_ptr<const TransitionKernel> kernel, std::function<double(double)> log_phi)
      : kernel_(std::move(kernel)), f_(std::move(log_phi)) {}

  std::string kind() const override { return "function"; }
  std::size_t horizon() const override { return 1; }
  Eigen::VectorXd log_phi(std::size_t, const Particles& xs) const override {
    evaluated += static_cast<std::size_t>(xs.cols());
    Eigen::VectorXd out(xs.cols());
    for (Eigen::Index j = 0; j < xs.cols(); ++j) out[j] = f_(xs(0, j));
    return out;
  }
  Eigen::VectorXd log_normalizer(std::size_t k, const Particles& xs, Rng& rng) const override {
    return mc_normalizer(*kernel_, *this, k, xs, 50, rng);
  }
  Particles sample_twisted(std::size_t k, const Particles& xs, Rng& rng) const override {
    return rejection_sample_twisted(*kernel_, *this, k, xs, rng, 100000);
  }
  bool exact_normalizer() const override { return false; }

  mutable std::size_t evaluated = 0;

 private:
  std::shared_ptr<const TransitionKernel> kernel_;
  std::function<double(double)> f_;
};

std::shared_ptr<const GaussianKernel> zero_mean_kernel(std::size_t d, double var) {
  return std::make_shared<GaussianKernel>(
      d, [](const Particles& xs) { return Particles::Zero(xs.rows(), xs.cols()); }, var);
}

double log_normal(double v, double var) { return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * v * v / var; }

}  // namespace

TEST(NnTwist, ZeroNetworkGivesTheMidpointConstant) {
  auto kernel = zero_mean_kernel(2, 1.0);
  NnTwist twist(kernel, 5, 8, 1e-3);
  EXPECT_EQ(twist.inner(), 50u);
  Rng rng(1);
  const Particles xs = Particles::Random(2, 6);
  const double c = 1e-3 + (1.0 - 1e-3) / 2.0;
  for (std::size_t k = 1; k <= 5; ++k) {
    EXPECT_TRUE(twist.log_phi(k, xs).isApprox(Eigen::VectorXd::Constant(6, std::log(c)), 1e-15));
    EXPECT_TRUE(twist.log_normalizer(k, xs, rng).isApprox(Eigen::VectorXd::Constant(6, std::log(c)), 1e-15));
  }
  EXPECT_THROW(twist.log_phi(0, xs), Error);
  EXPECT_THROW(twist.log_phi(6, xs), Error);
}

TEST(NnTwist, StaysInsideTheBand) {
  auto kernel = zero_mean_kernel(2, 1.0);
  NnTwist twist(kernel, 3, 8, 0.01);
  Rng rng(2);
  twist.init(rng);
  for (Eigen::Index i = 0; i < twist.params().size(); ++i) twist.params().values()[i] = 5.0 * rng.normal();
  const Eigen::VectorXd lp = twist.log_phi(2, 10.0 * Particles::Random(2, 200));
  EXPECT_GE(lp.minCoeff(), std::log(0.01) - 1e-12);
  EXPECT_LE(lp.maxCoeff(), 1e-12);
}

TEST(NnTwist, TapeAgreesWithPlainEvaluation) {
  auto kernel = zero_mean_kernel(3, 0.5);
  NnTwist twist(kernel, 4, 6, 1e-3, 7);
  Rng rng(3);
  twist.init(rng);
  for (Eigen::Index i = 0; i < twist.params().size(); ++i) twist.params().values()[i] += 0.3 * rng.normal();
  const Particles xs = Particles::Random(3, 5);
  Tape tape(&twist.params());
  EXPECT_TRUE(twist.tape_log_phi(tape, 2, xs).value().transpose().isApprox(twist.log_phi(2, xs), 1e-14));
  Rng a(SeedSpec{4}, StreamTag::test), b(SeedSpec{4}, StreamTag::test);
  const Eigen::VectorXd plain = twist.log_normalizer(3, xs, a);
  EXPECT_TRUE(twist.tape_log_normalizer(tape, 3, xs, b).value().transpose().isApprox(plain, 1e-14));
}

TEST(GaussianTwist, UnitVarianceNormalizerIsMinusHalfLogTwo) {
  auto kernel = zero_mean_kernel(1, 1.0);
  GaussianTwist twist(kernel, 3, 4, 0.0);
  Rng rng(5);
  const Particles xs = Particles::Random(1, 4);
  EXPECT_TRUE(twist.log_normalizer(2, xs, rng).isApprox(Eigen::VectorXd::Constant(4, -0.5 * std::log(2.0)), 1e-15));
  // Same integral by quadrature.
  const double q = support::simpson([](double y) { return std::exp(-0.5 * y * y + log_normal(y, 1.0)); }, -12, 12);
  EXPECT_NEAR(std::log(q), -0.5 * std::log(2.0), 1e-10);
}

TEST(GaussianTwist, WideTwistIsNearlyFlat) {
  auto kernel = zero_mean_kernel(2, 0.3);
  GaussianTwist twist(kernel, 2, 4, 60.0);
  Rng rng(6);
  const Particles xs = Particles::Random(2, 3);
  EXPECT_LT(twist.log_phi(1, xs).cwiseAbs().maxCoeff(), 1e-20);
  EXPECT_LT(twist.log_normalizer(1, xs, rng).cwiseAbs().maxCoeff(), 1e-20);
}

TEST(GaussianTwist, TwistedSamplerMatchesTheGaussianProduct) {
  auto kernel = std::make_shared<GaussianKernel>(
      1, [](const Particles& xs) -> Particles { return 0.5 * xs; }, 0.8);
  GaussianTwist twist(kernel, 2, 4, std::log(0.3));
  // Mean network output is zero: phi = exp(-y^2 / (2 * 0.3)).
  const double x = 2.0, m = 0.5 * x, c = 0.8, v = 0.3;
  const double prec = 1.0 / c + 1.0 / v;
  const double post_mean = (m / c) / prec, post_var = 1.0 / prec;
  Rng rng(SeedSpec{7}, StreamTag::test);
  const Particles ys = twist.sample_twisted(1, Particles::Constant(1, 100000, x), rng);
  support::Moments mom;
  for (Eigen::Index j = 0; j < ys.cols(); ++j) mom.add(ys(0, j));
  EXPECT_LT(std::abs(mom.mean() - post_mean), 4.0 * mom.se());
  EXPECT_LT(std::abs(mom.var() - post_var), 4.0 * post_var * std::sqrt(2.0 / 100000.0));
}

TEST(GaussianTwist, MonteCarloNormalizerAgreesWithClosedForm) {
  LinearGaussianSpec spec;
  spec.d = 2;
  const Dataset data = generate_dataset(spec, SeedSpec{8});
  const FeynmanKacModel model = build_lgm(spec, data);
  auto kernel = std::dynamic_pointer_cast<const GaussianKernel>(model.kernel);
  GaussianTwist twist(kernel, model.horizon, 8, std::log(0.02));
  Rng init(9);
  twist.init(init);
  Particles xs(2, 3);
  xs << 0.1, -0.3, 0.8, 0.4, 0.0, -0.6;
  Rng rng(SeedSpec{10}, StreamTag::test);
  const Eigen::VectorXd exact = twist.log_normalizer(5, xs, rng);
  const std::size_t inner = 10000;
  const Particles ys = kernel->sample(rng, repeat_columns(xs, inner));
  const Eigen::VectorXd lp = twist.log_phi(5, ys);
  for (Eigen::Index j = 0; j < xs.cols(); ++j) {
    support::Moments mom;
    for (std::size_t i = 0; i < inner; ++i) mom.add(std::exp(lp[j * static_cast<Eigen::Index>(inner) + static_cast<Eigen::Index>(i)]));
    EXPECT_LT(std::abs(mom.mean() - std::exp(exact[j])), 4.0 * mom.se()) << "column " << j;
  }
}

TEST(GaussianTwist, SnapshotIsTheSameFunction) {
  auto kernel = zero_mean_kernel(2, 0.4);
  GaussianTwist twist(kernel, 3, 4, 0.2);
  Rng rng(11);
  twist.init(rng);
  for (Eigen::Index i = 0; i < twist.params().size(); ++i) twist.params().values()[i] += 0.2 * rng.normal();
  const QuadraticTwist q = twist.snapshot();
  const Particles xs = Particles::Random(2, 4);
  for (std::size_t k = 1; k <= 3; ++k) {
    EXPECT_TRUE(q.log_phi(k, xs).isApprox(twist.log_phi(k, xs), 1e-12));
    EXPECT_TRUE(q.log_normalizer(k, xs, rng).isApprox(twist.log_normalizer(k, xs, rng), 1e-12));
  }
}

TEST(QuadraticNormalizer, MatchesQuadratureInOneDimension) {
  auto kernel = std::make_shared<GaussianKernel>(
      1, [](const Particles& xs) -> Particles { return xs.array().sin().matrix(); }, 0.7);
  QuadraticStep step{Eigen::MatrixXd::Constant(1, 1, 1.3), Eigen::VectorXd::Constant(1, -0.4), 0.25};
  const double x = 0.9, m = std::sin(x);
  const double q = support::simpson(
      [&](double y) { return std::exp(-0.5 * 1.3 * y * y - 0.4 * y + 0.25 + log_normal(y - m, 0.7)); }, -15, 15);
  EXPECT_NEAR(quadratic_log_normalizer(*kernel, step, Particles::Constant(1, 1, x))[0], std::log(q), 1e-10);
}

TEST(McNormalizer, ConstantTwistIsExact) {
  auto kernel = zero_mean_kernel(1, 1.0);
  FunctionTwist twist(kernel, [](double) { return std::log(0.37); });
  Rng rng(12);
  for (std::size_t inner : {1, 3, 50}) {
    const Eigen::VectorXd v = mc_normalizer(*kernel, twist, 1, Particles::Random(1, 4), inner, rng);
    EXPECT_TRUE(v.isApprox(Eigen::VectorXd::Constant(4, std::log(0.37)), 1e-15));
  }
  EXPECT_THROW(mc_normalizer(*kernel, twist, 1, Particles::Zero(1, 1), 0, rng), Error);
}

TEST(Rejection, UnitTwistAcceptsTheFirstProposal) {
  auto kernel = zero_mean_kernel(1, 1.0);
  FunctionTwist twist(kernel, [](double) { return 0.0; });
  Rng a(SeedSpec{13}, StreamTag::test), b(SeedSpec{13}, StreamTag::test);
  const Particles xs = Particles::Zero(1, 20);
  const Particles got = rejection_sample_twisted(*kernel, twist, 1, xs, a, 1);
  EXPECT_EQ(twist.evaluated, 20u);
  EXPECT_EQ(got, kernel->sample(b, xs));
}

TEST(Rejection, ConstantTwistAcceptsAtRateC) {
  auto kernel = zero_mean_kernel(1, 1.0);
  const double c = 0.2;
  FunctionTwist twist(kernel, [c](double) { return std::log(c); });
  Rng rng(SeedSpec{14}, StreamTag::test);
  const std::size_t n = 20000;
  rejection_sample_twisted(*kernel, twist, 1, Particles::Zero(1, static_cast<Eigen::Index>(n)), rng, 100000);
  // Proposals per acceptance are geometric with mean 1/c and variance (1-c)/c^2.
  const double mean = static_cast<double>(twist.evaluated) / static_cast<double>(n);
  EXPECT_LT(std::abs(mean - 1.0 / c), 4.0 * std::sqrt((1 - c) / (c * c) / static_cast<double>(n)));
}

TEST(Rejection, SmoothedStepMatchesQuadratureChiSquare) {
  auto kernel = zero_mean_kernel(1, 1.0);
  const double eps = 0.05;
  auto phi = [eps](double y) { return eps + (1.0 - eps) / (1.0 + std::exp(-y / 0.1)); };
  FunctionTwist twist(kernel, [&](double y) { return std::log(phi(y)); });
  const int draws = 100000;
  Rng rng(SeedSpec{15}, StreamTag::test);
  const Particles ys = rejection_sample_twisted(*kernel, twist, 1, Particles::Zero(1, draws), rng, 100000);
  // 20 bins: 18 of width 0.4 on [-3.6, 3.6] plus two tails.
  std::vector<double> edges{-1e9};
  for (int i = 0; i <= 18; ++i) edges.push_back(-3.6 + 0.4 * i);
  edges.push_back(1e9);
  auto density = [&](double y) { return phi(y) * std::exp(log_normal(y, 1.0)); };
  std::vector<double> mass;
  double total = 0.0;
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    const double lo = std::max(edges[b], -12.0), hi = std::min(edges[b + 1], 12.0);
    mass.push_back(support::simpson(density, lo, hi, 2000));
    total += mass.back();
  }
  std::vector<double> counts(mass.size(), 0.0);
  for (Eigen::Index j = 0; j < ys.cols(); ++j) {
    std::size_t b = 0;
    while (ys(0, j) >= edges[b + 1]) ++b;
    counts[b] += 1.0;
  }
  double chi2 = 0.0;
  for (std::size_t b = 0; b < mass.size(); ++b) {
    const double expected = draws * mass[b] / total;
    chi2 += (counts[b] - expected) * (counts[b] - expected) / expected;
  }
  // 99.9% quantile of chi-square with 19 degrees of freedom.
  EXPECT_LT(chi2, 43.82);
}

TEST(Rejection, ExhaustionIsReportedWithItsCode) {
  auto kernel = zero_mean_kernel(1, 1.0);
  FunctionTwist twist(kernel, [](double) { return std::log(1e-6); });
  Rng rng(16);
  try {
    rejection_sample_twisted(*kernel, twist, 1, Particles::Zero(1, 3), rng, 50);
    FAIL() << "expected exhaustion";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::rejection_exhausted);
    EXPECT_NE(std::string(e.what()).find("acceptance rate"), std::string::npos);
  }
}

TEST(FaApf, LgmNormalizerIsTheOneStepPredictive) {
  LinearGaussianSpec spec;
  spec.d = 1;
  const Dataset data = generate_dataset(spec, SeedSpec{17});
  const FeynmanKacModel model = build_lgm(spec, data);
  const auto twist = fa_apf_twist(model);
  EXPECT_TRUE(twist->exact_normalizer());
  Rng rng(SeedSpec{18}, StreamTag::test);
  const double x = 0.4;
  const std::size_t k = 9;
  const double exact = twist->log_normalizer(k, Particles::Constant(1, 1, x), rng)[0];
  // N(y_k; (1 - dt) x, 1 + dt).
  EXPECT_NEAR(exact, log_normal(data.y[k][0] - (1 - spec.dt) * x, 1.0 + spec.dt), 1e-12);
  const std::size_t inner = 10000;
  const Particles ys = model.kernel->sample(rng, Particles::Constant(1, static_cast<Eigen::Index>(inner), x));
  const Eigen::VectorXd lg = model.log_g(k, ys);
  support::Moments mom;
  for (Eigen::Index i = 0; i < lg.size(); ++i) mom.add(std::exp(lg[i]));
  EXPECT_LT(std::abs(mom.mean() - std::exp(exact)), 3.0 * mom.se());
}

TEST(FaApf, FlatPotentialsReduceToBootstrap) {
  FeynmanKacModel m;
  m.dim = 1;
  m.horizon = 6;
  m.init = StateVec::Zero(1);
  m.kernel = zero_mean_kernel(1, 1.0);
  m.log_potential = [](std::size_t, const Particles& xs) { return Eigen::VectorXd::Zero(xs.cols()); };
  m.log_potential_bound = std::vector<double>(7, 0.0);
  const auto twist = fa_apf_twist(m);
  FilterOptions opts;
  opts.particles = 32;
  Rng a(1), b(1);
  const FilterReport tw = run_tpf(m, *twist, opts, a);
  const FilterReport bp = run_bpf(m, opts, b);
  EXPECT_EQ(tw.log_z_hat, 0.0);
  EXPECT_EQ(bp.log_z_hat, 0.0);
  EXPECT_EQ(tw.mean_ess_rel(), 1.0);
}

TEST(TabularTwist, NormalizerAndSamplerFollowTheTable) {
  Eigen::MatrixXd p(3, 3);
  p << 0.5, 0.3, 0.2, 0.1, 0.1, 0.8, 0.3, 0.3, 0.4;
  auto kernel = std::make_shared<FiniteKernel>(p);
  TabularTwist twist(kernel, 2);
  twist.table().col(1) << std::log(2.0), 0.0, std::log(0.5);
  Rng rng(SeedSpec{19}, StreamTag::test);
  const Eigen::VectorXd lz = twist.log_normalizer(1, Particles::Constant(1, 1, 0.0), rng);
  const double z0 = 0.5 * 2.0 + 0.3 + 0.2 * 0.5;
  EXPECT_NEAR(lz[0], std::log(z0), 1e-15);
  const Particles ys = twist.sample_twisted(1, Particles::Zero(1, 100000), rng);
  const double target[3] = {1.0 / z0, 0.3 / z0, 0.1 / z0};
  Eigen::Vector3d freq = Eigen::Vector3d::Zero();
  for (Eigen::Index j = 0; j < ys.cols(); ++j) freq[static_cast<Eigen::Index>(ys(0, j))] += 1e-5;
  for (int s = 0; s < 3; ++s) EXPECT_LT(std::abs(freq[s] - target[s]), 4.0 * std::sqrt(target[s] * (1 - target[s]) / 1e5));
}

TEST(UnitTwist, BehavesLikeTheKernel) {
  auto kernel = zero_mean_kernel(2, 0.5);
  UnitTwist twist(kernel, 3);
  Rng a(20), b(20);
  const Particles xs = Particles::Random(2, 5);
  EXPECT_TRUE(twist.log_phi(2, xs).isZero(0.0));
  EXPECT_TRUE(twist.log_normalizer(2, xs, a).isZero(0.0));
  EXPECT_EQ(twist.sample_twisted(2, xs, a), kernel->sample(b, xs));
}

TEST(RepeatColumns, CopiesEachColumnConsecutively) {
  Particles xs(2, 2);
  xs << 1, 2, 3, 4;
  const Particles r = repeat_columns(xs, 3);
  ASSERT_EQ(r.cols(), 6);
  for (int j = 0; j < 6; ++j) EXPECT_EQ(r.col(j), xs.col(j / 3));
}
