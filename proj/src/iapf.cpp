#include "tppf/iapf.hpp"

#include <cmath>

#include "tppf/error.hpp"

namespace tppf {

namespace {

struct DiagonalFit {
  Eigen::VectorXd a;  // coefficient of x_j^2
  Eigen::VectorXd b;  // coefficient of x_j
  double c = 0.0;
};

// Least squares over features [x_j^2 (free j), x_j, 1] with a ridge penalty.
DiagonalFit solve_fit(const Particles& xs, const Eigen::VectorXd& target, const std::vector<bool>& free_sq,
                      double ridge) {
  const Eigen::Index d = xs.rows();
  std::vector<Eigen::Index> sq_cols;
  for (Eigen::Index j = 0; j < d; ++j)
    if (free_sq[static_cast<std::size_t>(j)]) sq_cols.push_back(j);
  const auto n_sq = static_cast<Eigen::Index>(sq_cols.size());
  const Eigen::Index p = n_sq + d + 1;
  const Eigen::Index m = xs.cols();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m + p, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + p);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index s = 0; s < n_sq; ++s) a(i, s) = xs(sq_cols[static_cast<std::size_t>(s)], i) * xs(sq_cols[static_cast<std::size_t>(s)], i);
    for (Eigen::Index j = 0; j < d; ++j) a(i, n_sq + j) = xs(j, i);
    a(i, p - 1) = 1.0;
    rhs[i] = target[i];
  }
  const double r = std::sqrt(ridge);
  for (Eigen::Index q = 0; q < p; ++q) a(m + q, q) = r;
  const Eigen::VectorXd beta = a.colPivHouseholderQr().solve(rhs);
  DiagonalFit fit{Eigen::VectorXd::Zero(d), beta.segment(n_sq, d), beta[p - 1]};
  for (Eigen::Index s = 0; s < n_sq; ++s) fit.a[sq_cols[static_cast<std::size_t>(s)]] = beta[s];
  return fit;
}

DiagonalFit fit_step(const Particles& xs, const Eigen::VectorXd& target, double ridge) {
  const Eigen::Index d = xs.rows();
  std::vector<bool> free_sq(static_cast<std::size_t>(d), true);
  // Dropping one square can push another positive, so repeat until none is.
  for (;;) {
    DiagonalFit fit = solve_fit(xs, target, free_sq, ridge);
    bool clamped = false;
    for (Eigen::Index j = 0; j < d; ++j)
      if (fit.a[j] > 0.0) {
        free_sq[static_cast<std::size_t>(j)] = false;
        clamped = true;
      }
    if (!clamped) return fit;
  }
}

bool fit_ok(const DiagonalFit& fit) { return fit.a.allFinite() && fit.b.allFinite() && std::isfinite(fit.c); }

}  // namespace

std::shared_ptr<const QuadraticTwist> fit_quadratic_twist(const FeynmanKacModel& model,
                                                          const std::vector<Particles>& cloud, double ridge) {
  model.validate();
  auto kernel = std::dynamic_pointer_cast<const GaussianKernel>(model.kernel);
  require(kernel != nullptr, "iAPF needs a Gaussian transition kernel");
  require(cloud.size() == model.horizon + 1, "iAPF: particle cloud must cover steps 0..n");
  const auto d = static_cast<Eigen::Index>(model.dim);
  std::vector<QuadraticStep> steps(model.horizon + 1);
  steps[0] = {Eigen::MatrixXd::Zero(d, d), Eigen::VectorXd::Zero(d), 0.0};
  for (std::size_t k = model.horizon; k >= 1; --k) {
    const Particles& xs = cloud[k];
    Eigen::VectorXd target = model.log_g(k, xs);
    if (k < model.horizon) target += quadratic_log_normalizer(*kernel, steps[k + 1], xs);
    // Drop points where the target is -inf.
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < target.size(); ++i)
      if (std::isfinite(target[i])) keep.push_back(i);
    if (static_cast<Eigen::Index>(keep.size()) < 2)
      fail(ErrorCode::degenerate, "iAPF: fewer than two usable particles at step " + std::to_string(k));
    Particles px(d, static_cast<Eigen::Index>(keep.size()));
    Eigen::VectorXd pt(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) {
      px.col(static_cast<Eigen::Index>(i)) = xs.col(keep[i]);
      pt[static_cast<Eigen::Index>(i)] = target[keep[i]];
    }
    DiagonalFit fit = fit_step(px, pt, ridge);
    if (!fit_ok(fit)) fit = fit_step(px, pt, std::max(ridge, 1e-4));
    if (!fit_ok(fit)) fail(ErrorCode::numeric, "iAPF: least-squares fit failed at step " + std::to_string(k));
    steps[k] = {Eigen::MatrixXd((-2.0 * fit.a).asDiagonal()), fit.b, fit.c};
  }
  return std::make_shared<QuadraticTwist>(kernel, std::move(steps));
}

IapfResult run_iapf(const FeynmanKacModel& model, const IapfConfig& config, const SeedSpec& seed,
                    std::uint64_t replicate) {
  require(config.max_sweeps >= 1, "iAPF: max_sweeps must be at least 1");
  require(config.tol > 0.0 && config.ridge > 0.0, "iAPF: tol and ridge must be positive");
  IapfResult result;
  std::vector<Particles> cloud(model.horizon + 1);
  FilterOptions opts;
  opts.particles = config.particles;
  opts.policy = config.policy;
  opts.observer = [&cloud](std::size_t k, const Particles& xs) { cloud[k] = xs; };
  std::shared_ptr<const QuadraticTwist> twist;
  for (std::size_t sweep = 0; sweep < config.max_sweeps; ++sweep) {
    Rng rng(seed, StreamTag::iapf, replicate, sweep);
    const FilterReport rep = twist ? run_tpf(model, *twist, opts, rng) : run_bpf(model, opts, rng);
    result.sweep_log_z.push_back(rep.log_z_hat);
    const std::size_t s = result.sweep_log_z.size();
    if (s >= 2 && std::abs(result.sweep_log_z[s - 1] - result.sweep_log_z[s - 2]) < config.tol) break;
    if (model.horizon == 0) break;
    twist = fit_quadratic_twist(model, cloud, config.ridge);
  }
  if (!twist) twist = fit_quadratic_twist(model, cloud, config.ridge);
  opts.observer = nullptr;
  Rng rng(seed, StreamTag::filter, replicate);
  result.report = run_tpf(model, *twist, opts, rng);
  result.twist = twist;
  return result;
}

}  // namespace tppf
