#include "tppf/oracle.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "tppf/error.hpp"
#include "tppf/filter.hpp"

namespace tppf {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log sum_s' P(s, s') phi(s') for every s, given log phi as a column.
Eigen::VectorXd log_kernel_apply(const Eigen::MatrixXd& p, const Eigen::VectorXd& log_phi) {
  Eigen::VectorXd out(p.rows());
  for (Eigen::Index s = 0; s < p.rows(); ++s) {
    Eigen::VectorXd terms(p.cols());
    for (Eigen::Index t = 0; t < p.cols(); ++t) terms[t] = std::log(p(s, t)) + log_phi[t];
    out[s] = log_sum_exp(terms);
  }
  return out;
}

double gaussian_log_density(const Eigen::VectorXd& v, const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    Eigen::MatrixXd jittered = 0.5 * (cov + cov.transpose());
    jittered.diagonal().array() += 1e-12 * std::max(1.0, jittered.diagonal().cwiseAbs().maxCoeff());
    llt.compute(jittered);
    if (llt.info() != Eigen::Success) fail(ErrorCode::numeric, "Kalman: innovation covariance is not positive definite");
  }
  const Eigen::MatrixXd l = llt.matrixL();
  const Eigen::VectorXd z = l.triangularView<Eigen::Lower>().solve(v);
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  return -0.5 * z.squaredNorm() - 0.5 * log_det - 0.5 * static_cast<double>(v.size()) * std::log(2.0 * std::numbers::pi);
}

double log_det_spd(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) fail(ErrorCode::numeric, "covariance degeneracy: matrix is not positive definite");
  const Eigen::MatrixXd l = llt.matrixL();
  return 2.0 * l.diagonal().array().log().sum();
}
}  // namespace

// ---------------------------------------------------------------- finite chains

void FiniteChain::validate() const {
  require(p.rows() > 0 && p.rows() == p.cols(), "FiniteChain: P must be square");
  require(log_g.rows() == p.rows() && log_g.cols() >= 1, "FiniteChain: potentials must be S x (n+1)");
  require(states() <= 6 && horizon() <= 6, "FiniteChain: enumeration limited to S <= 6 and n <= 6");
  require(init < states(), "FiniteChain: initial state out of range");
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    require((p.row(r).array() >= 0.0).all(), "FiniteChain: negative transition probability");
    require(std::abs(p.row(r).sum() - 1.0) < 1e-12, "FiniteChain: rows of P must sum to one");
  }
  for (Eigen::Index i = 0; i < log_g.size(); ++i)
    require(!std::isnan(log_g.data()[i]) && log_g.data()[i] < std::numeric_limits<double>::infinity(),
            "FiniteChain: potentials must be finite or zero");
}

FiniteChain random_finite_chain(std::size_t states, std::size_t horizon, Rng& rng, double log_g_min) {
  const auto s = static_cast<Eigen::Index>(states);
  FiniteChain chain;
  chain.p.resize(s, s);
  for (Eigen::Index r = 0; r < s; ++r) {
    for (Eigen::Index c = 0; c < s; ++c) chain.p(r, c) = 0.1 + 0.9 * rng.uniform();
    chain.p.row(r) /= chain.p.row(r).sum();
  }
  chain.log_g.resize(s, static_cast<Eigen::Index>(horizon + 1));
  for (Eigen::Index k = 0; k < chain.log_g.cols(); ++k)
    for (Eigen::Index r = 0; r < s; ++r) chain.log_g(r, k) = log_g_min * rng.uniform();
  chain.init = 0;
  chain.validate();
  return chain;
}

Eigen::MatrixXd random_log_twist(const FiniteChain& chain, Rng& rng, double scale) {
  Eigen::MatrixXd t(chain.log_g.rows(), chain.log_g.cols());
  for (Eigen::Index k = 0; k < t.cols(); ++k)
    for (Eigen::Index s = 0; s < t.rows(); ++s) t(s, k) = k == 0 ? 0.0 : scale * rng.normal();
  return t;
}

FeynmanKacModel finite_chain_model(const FiniteChain& chain) {
  chain.validate();
  FeynmanKacModel m;
  m.dim = 1;
  m.horizon = chain.horizon();
  m.init = StateVec::Constant(1, static_cast<double>(chain.init));
  m.kernel = std::make_shared<FiniteKernel>(chain.p);
  m.log_potential = [lg = chain.log_g](std::size_t k, const Particles& xs) -> Eigen::VectorXd {
    Eigen::VectorXd out(xs.cols());
    for (Eigen::Index j = 0; j < xs.cols(); ++j)
      out[j] = lg(static_cast<Eigen::Index>(xs(0, j)), static_cast<Eigen::Index>(k));
    return out;
  };
  std::vector<double> bound(chain.horizon() + 1);
  for (std::size_t k = 0; k <= chain.horizon(); ++k) bound[k] = chain.log_g.col(static_cast<Eigen::Index>(k)).maxCoeff();
  m.log_potential_bound = bound;
  return m;
}

Enumeration enumerate_chain(const FiniteChain& chain) {
  chain.validate();
  const auto s = static_cast<Eigen::Index>(chain.states());
  const std::size_t n = chain.horizon();
  Eigen::Index count = 1;
  for (std::size_t k = 0; k < n; ++k) count *= s;
  Enumeration e;
  e.paths.resize(count, static_cast<Eigen::Index>(n + 1));
  e.log_p.resize(count);
  e.log_g.resize(count);
  for (Eigen::Index id = 0; id < count; ++id) {
    Eigen::Index rest = id;
    e.paths(id, 0) = static_cast<int>(chain.init);
    // Digits of id in base S, most significant first, are x_1..x_n.
    for (std::size_t k = n; k >= 1; --k) {
      e.paths(id, static_cast<Eigen::Index>(k)) = static_cast<int>(rest % s);
      rest /= s;
    }
    double lp = 0.0, lg = chain.log_g(e.paths(id, 0), 0);
    for (std::size_t k = 1; k <= n; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      lp += std::log(chain.p(e.paths(id, kk - 1), e.paths(id, kk)));
      lg += chain.log_g(e.paths(id, kk), kk);
    }
    e.log_p[id] = lp;
    e.log_g[id] = lg;
  }
  e.log_z = log_sum_exp(e.log_p + e.log_g);
  return e;
}

double forward_log_z(const FiniteChain& chain) {
  chain.validate();
  const auto s = static_cast<Eigen::Index>(chain.states());
  Eigen::VectorXd alpha = Eigen::VectorXd::Constant(s, kNegInf);
  alpha[static_cast<Eigen::Index>(chain.init)] = chain.log_g(static_cast<Eigen::Index>(chain.init), 0);
  for (Eigen::Index k = 1; k < chain.log_g.cols(); ++k) {
    Eigen::VectorXd next(s);
    for (Eigen::Index t = 0; t < s; ++t) {
      Eigen::VectorXd terms(s);
      for (Eigen::Index r = 0; r < s; ++r) terms[r] = alpha[r] + std::log(chain.p(r, t));
      next[t] = log_sum_exp(terms) + chain.log_g(t, k);
    }
    alpha = next;
  }
  return log_sum_exp(alpha);
}

Eigen::MatrixXd optimal_log_twist(const FiniteChain& chain) {
  chain.validate();
  const Eigen::Index n = chain.log_g.cols() - 1;
  Eigen::MatrixXd t(chain.log_g.rows(), n + 1);
  t.col(n) = chain.log_g.col(n);
  for (Eigen::Index k = n - 1; k >= 0; --k) t.col(k) = chain.log_g.col(k) + log_kernel_apply(chain.p, t.col(k + 1));
  return t;
}

Eigen::VectorXd path_log_ratio(const FiniteChain& chain, const Enumeration& e, const Eigen::MatrixXd& log_phi) {
  require(log_phi.rows() == chain.log_g.rows() && log_phi.cols() == chain.log_g.cols(),
          "twist table must be S x (n+1)");
  const Eigen::Index n = chain.log_g.cols() - 1;
  Eigen::MatrixXd log_norm(chain.log_g.rows(), n + 1);
  for (Eigen::Index k = 1; k <= n; ++k) log_norm.col(k) = log_kernel_apply(chain.p, log_phi.col(k));
  Eigen::VectorXd r = Eigen::VectorXd::Zero(e.paths.rows());
  for (Eigen::Index id = 0; id < e.paths.rows(); ++id)
    for (Eigen::Index k = 1; k <= n; ++k) r[id] += log_phi(e.paths(id, k), k) - log_norm(e.paths(id, k - 1), k);
  return r;
}

Eigen::VectorXd twisted_path_log_prob(const FiniteChain& chain, const Enumeration& e, const Eigen::MatrixXd& log_phi) {
  return e.log_p + path_log_ratio(chain, e, log_phi);
}

double kl_divergence(const Eigen::VectorXd& log_p, const Eigen::VectorXd& log_q) {
  require(log_p.size() == log_q.size(), "kl_divergence: size mismatch");
  double kl = 0.0;
  for (Eigen::Index i = 0; i < log_p.size(); ++i) {
    if (log_p[i] == kNegInf) continue;
    kl += std::exp(log_p[i]) * (log_p[i] - log_q[i]);
  }
  return kl;
}

DivergenceReport divergences(const FiniteChain& chain, const Enumeration& e, const Eigen::MatrixXd& log_phi) {
  const double log_z = forward_log_z(chain);
  const Eigen::VectorXd r = path_log_ratio(chain, e, log_phi);
  const Eigen::VectorXd tilde = e.log_p + r;
  const Eigen::VectorXd star = twisted_path_log_prob(chain, e, optimal_log_twist(chain));
  const Eigen::ArrayXd w_tilde = tilde.array().exp();
  const Eigen::ArrayXd w_star = star.array().exp();
  DivergenceReport rep;
  rep.j_phi = (w_tilde * (-e.log_g.array())).sum() + kl_divergence(tilde, e.log_p);
  rep.j_star = (w_star * (-e.log_g.array())).sum() + kl_divergence(star, e.log_p);
  rep.kl_phi_star = kl_divergence(tilde, star);
  rep.kl_star_phi = kl_divergence(star, tilde);
  // Importance estimate e^G dP/dP^phi = e^{G - R}, relative to Z.
  const Eigen::VectorXd rel = e.log_g - r - Eigen::VectorXd::Constant(r.size(), log_z);
  rep.r2 = std::exp(log_sum_exp(tilde + 2.0 * rel)) - 1.0;
  rep.chi2 = std::exp(log_sum_exp(2.0 * star - tilde)) - 1.0;
  const Eigen::ArrayXd ratio = (star - tilde).array().exp();
  rep.m = ratio.minCoeff();
  rep.big_m = ratio.maxCoeff();
  rep.bound_lower = std::expm1(rep.m * rep.kl_phi_star + rep.kl_star_phi);
  rep.bound_upper = std::expm1(rep.big_m * rep.kl_phi_star + rep.kl_star_phi);
  rep.bound_jensen = std::expm1(rep.kl_star_phi);
  const double dv_lhs = -log_sum_exp(e.log_p + e.log_g);
  rep.dv_gap = rep.j_phi - dv_lhs;
  return rep;
}

double enumerated_loss_re(const FiniteChain& chain, const Enumeration& e, const Eigen::MatrixXd& log_phi) {
  const Eigen::VectorXd r = path_log_ratio(chain, e, log_phi);
  const Eigen::ArrayXd w = (e.log_p + r).array().exp();
  return (w * (r - e.log_g).array()).sum();
}

double enumerated_loss_ce(const FiniteChain& chain, const Enumeration& e, const Eigen::MatrixXd& log_phi) {
  const Eigen::VectorXd r = path_log_ratio(chain, e, log_phi);
  const Eigen::ArrayXd w = (e.log_p + e.log_g).array() - e.log_z;
  return -(w.exp() * r.array()).sum();
}

PathBatch enumerated_batch(const FiniteChain& chain, const Enumeration& e, const Eigen::MatrixXd* log_phi) {
  PathBatch batch;
  batch.mode = log_phi ? SamplingMode::twisted : SamplingMode::untwisted;
  const Eigen::Index count = e.paths.rows();
  for (Eigen::Index k = 0; k < e.paths.cols(); ++k) batch.states.push_back(e.paths.col(k).cast<double>().transpose());
  batch.log_weight = log_phi ? twisted_path_log_prob(chain, e, *log_phi) : e.log_p;
  batch.log_g = e.log_g;
  batch.log_g_tail = Eigen::VectorXd::Zero(count);
  for (Eigen::Index id = 0; id < count; ++id)
    for (Eigen::Index k = 1; k < e.paths.cols(); ++k) batch.log_g_tail[id] += chain.log_g(e.paths(id, k), k);
  return batch;
}

// ---------------------------------------------------------------- linear Gaussian

LinearGaussianSystem lgm_system(const LinearGaussianSpec& spec, const Dataset& data) {
  const auto d = static_cast<Eigen::Index>(spec.d);
  const std::size_t n = spec.horizon();
  require(data.y.size() == n + 1, "lgm_system: dataset length does not match the spec");
  LinearGaussianSystem sys;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  sys.f = (1.0 - spec.dt) * eye;
  sys.q = spec.dt * eye;
  sys.h = eye;
  sys.r.assign(n + 1, eye);
  sys.log_offset.assign(n + 1, 0.0);
  sys.x0 = Eigen::VectorXd::Zero(d);
  sys.y = data.y;
  return sys;
}

KalmanResult kalman_filter(const LinearGaussianSystem& sys) {
  const std::size_t n = sys.horizon();
  require(sys.r.size() == n + 1 && sys.log_offset.size() == n + 1, "Kalman: per-step R and offsets must cover 0..n");
  const Eigen::Index d = sys.x0.size();
  KalmanResult res;
  Eigen::VectorXd m = sys.x0;
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t k = 0; k <= n; ++k) {
    if (k > 0) {
      m = sys.f * m;
      c = sys.f * c * sys.f.transpose() + sys.q;
    }
    const Eigen::VectorXd v = sys.y[k] - sys.h * m;
    Eigen::MatrixXd s = sys.h * c * sys.h.transpose() + sys.r[k];
    s = 0.5 * (s + s.transpose());
    res.log_marginal += gaussian_log_density(v, s) + sys.log_offset[k];
    const Eigen::MatrixXd gain = s.llt().solve(sys.h * c).transpose();
    m += gain * v;
    c -= gain * sys.h * c;
    c = 0.5 * (c + c.transpose());
    res.means.push_back(m);
    res.covs.push_back(c);
  }
  return res;
}

KalmanResult kalman_log_z(const LinearGaussianSpec& spec, const Dataset& data) {
  return kalman_filter(lgm_system(spec, data));
}

LgmOptimalTwist lgm_optimal_twist(const LinearGaussianSystem& sys) {
  const std::size_t n = sys.horizon();
  const Eigen::Index d = sys.x0.size();
  const Eigen::MatrixXd q_inv = sys.q.inverse();
  const double log_det_q = log_det_spd(sys.q);
  LgmOptimalTwist opt;
  opt.steps.resize(n + 1);
  auto add_potential = [&](std::size_t k, QuadraticStep& st) {
    const Eigen::MatrixXd r_inv = sys.r[k].inverse();
    st.lambda += sys.h.transpose() * r_inv * sys.h;
    st.h += sys.h.transpose() * r_inv * sys.y[k];
    st.c += -0.5 * sys.y[k].dot(r_inv * sys.y[k]) - 0.5 * log_det_spd(sys.r[k]) -
            0.5 * static_cast<double>(sys.y[k].size()) * std::log(2.0 * std::numbers::pi) + sys.log_offset[k];
  };
  QuadraticStep last{Eigen::MatrixXd::Zero(d, d), Eigen::VectorXd::Zero(d), 0.0};
  add_potential(n, last);
  opt.steps[n] = last;
  for (std::size_t k = n; k-- > 0;) {
    const QuadraticStep& next = opt.steps[k + 1];
    // Integrate phi*_{k+1} against N(F x, Q).
    const Eigen::MatrixXd prec = next.lambda + q_inv;
    const Eigen::LLT<Eigen::MatrixXd> llt(prec);
    if (llt.info() != Eigen::Success) fail(ErrorCode::numeric, "optimal twist: covariance degeneracy at step " + std::to_string(k));
    const Eigen::MatrixXd qf = q_inv * sys.f;
    QuadraticStep st;
    st.lambda = sys.f.transpose() * qf - qf.transpose() * llt.solve(qf);
    st.lambda = 0.5 * (st.lambda + st.lambda.transpose());
    const Eigen::VectorXd ph = llt.solve(next.h);
    st.h = qf.transpose() * ph;
    const Eigen::MatrixXd l = llt.matrixL();
    st.c = next.c - 0.5 * log_det_q - l.diagonal().array().log().sum() + 0.5 * next.h.dot(ph);
    add_potential(k, st);
    opt.steps[k] = st;
  }
  const QuadraticStep& s0 = opt.steps[0];
  opt.log_phi0 = -0.5 * sys.x0.dot(s0.lambda * sys.x0) + s0.h.dot(sys.x0) + s0.c;
  return opt;
}

std::shared_ptr<const QuadraticTwist> as_twist(const LgmOptimalTwist& opt, std::shared_ptr<const GaussianKernel> kernel) {
  return std::make_shared<QuadraticTwist>(std::move(kernel), opt.steps);
}

// ---------------------------------------------------------------- kernel convergence

double gaussian_kl(const Eigen::VectorXd& m1, double v1, const Eigen::VectorXd& m2, double v2) {
  require(m1.size() == m2.size() && v1 > 0.0 && v2 > 0.0, "gaussian_kl: bad arguments");
  const double d = static_cast<double>(m1.size());
  // r - log(1 + r) with r = v1/v2 - 1; summed as a series near zero, where
  // the direct form loses most of its digits.
  const double r = (v1 - v2) / v2;
  double shape = 0.0;
  if (std::abs(r) < 0.1) {
    double power = r * r;
    for (int k = 2; k < 40; ++k, power *= -r) shape += power / k;
  } else {
    shape = r - std::log1p(r);
  }
  return 0.5 * (d * shape + (m1 - m2).squaredNorm() / v2);
}

SlopeReport check_em_kernel_convergence(const std::vector<double>& etas, double x, std::size_t d) {
  require(etas.size() >= 2, "kernel convergence: need at least two step sizes");
  SlopeReport rep;
  rep.d = d;
  rep.eta = etas;
  auto kl_at = [x](double eta, std::size_t dim) {
    const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), x);
    return gaussian_kl(x0 - eta * x0, 2.0 * eta, std::exp(-eta) * x0, -std::expm1(-2.0 * eta));
  };
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (double eta : etas) {
    require(eta > 0.0, "kernel convergence: step sizes must be positive");
    const double kl = kl_at(eta, 1);
    rep.kl.push_back(kl);
    const double lx = std::log(eta), ly = std::log(kl);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    rep.linearity_error = std::max(rep.linearity_error, std::abs(kl_at(eta, d) - static_cast<double>(d) * kl) / kl);
  }
  const double m = static_cast<double>(etas.size());
  rep.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  rep.monotone = true;
  for (std::size_t i = 0; i + 1 < etas.size(); ++i)
    if ((etas[i + 1] < etas[i]) != (rep.kl[i + 1] < rep.kl[i])) rep.monotone = false;
  return rep;
}

ZTrendReport check_zdis_trend(const std::vector<double>& etas, double t_end, double t0, std::size_t replicates,
                              std::size_t particles, const SeedSpec& seed) {
  require(t0 > 0.0, "Z trend: t0 must be positive");
  require(etas.size() >= 3, "Z trend: need at least three step sizes");
  double fine = etas.front();
  for (double e : etas) fine = std::min(fine, e);
  const auto fine_steps = static_cast<std::size_t>(std::llround(t_end / fine));
  require(std::abs(static_cast<double>(fine_steps) * fine - t_end) < 1e-9, "Z trend: T must be a multiple of every step");
  // Observation path on the finest grid: exact OU plus an independent
  // Brownian motion started at time t0.
  Rng rng(seed, StreamTag::oracle);
  std::vector<double> y(fine_steps + 1);
  double xs = 0.0, b = std::sqrt(t0) * rng.normal();
  const double decay = std::exp(-fine), sd = std::sqrt(-std::expm1(-2.0 * fine));
  for (std::size_t j = 0; j <= fine_steps; ++j) {
    if (j > 0) {
      xs = decay * xs + sd * rng.normal();
      b += std::sqrt(fine) * rng.normal();
    }
    y[j] = xs + b;
  }
  ZTrendReport rep;
  rep.eta = etas;
  for (std::size_t i = 0; i < etas.size(); ++i) {
    const double eta = etas[i];
    const auto stride = static_cast<std::size_t>(std::llround(eta / fine));
    require(std::abs(static_cast<double>(stride) * fine - eta) < 1e-9, "Z trend: steps must be multiples of the finest");
    const std::size_t n = fine_steps / stride;
    std::vector<Eigen::VectorXd> ys(n + 1);
    for (std::size_t k = 0; k <= n; ++k) ys[k] = Eigen::VectorXd::Constant(1, y[k * stride]);
    // Exact value: the potentials are Gaussian in x up to constants.
    LinearGaussianSystem sys;
    sys.f = Eigen::MatrixXd::Constant(1, 1, 1.0 - eta);
    sys.q = Eigen::MatrixXd::Constant(1, 1, 2.0 * eta);
    sys.h = Eigen::MatrixXd::Identity(1, 1);
    sys.x0 = Eigen::VectorXd::Zero(1);
    sys.y = ys;
    for (std::size_t k = 0; k <= n; ++k) {
      const double var = k < n ? (static_cast<double>(k) * eta + t0) / eta : t_end + t0;
      sys.r.push_back(Eigen::MatrixXd::Constant(1, 1, var));
      sys.log_offset.push_back(k < n ? 0.5 * std::log(2.0 * std::numbers::pi * var) : 0.0);
    }
    rep.log_z.push_back(kalman_filter(sys).log_marginal);
    // Monte Carlo cross-check with the bootstrap filter.
    FeynmanKacModel model;
    model.dim = 1;
    model.horizon = n;
    model.init = StateVec::Zero(1);
    model.kernel = gaussian_em_kernel(1, [](const Particles& p) -> Particles { return -p; }, eta);
    model.log_potential = [ys, eta, t0, t_end, n](std::size_t k, const Particles& p) -> Eigen::VectorXd {
      const Eigen::ArrayXd r2 = (p.row(0).array() - ys[k][0]).square().transpose();
      if (k < n) return (-eta * r2 / (2.0 * (static_cast<double>(k) * eta + t0))).matrix();
      const double var = t_end + t0;
      return (-0.5 * r2 / var - 0.5 * std::log(2.0 * std::numbers::pi * var)).matrix();
    };
    FilterOptions opts;
    opts.particles = particles;
    double sum = 0.0, sum_sq = 0.0;
    const double ref = rep.log_z.back();
    for (std::size_t r = 0; r < replicates; ++r) {
      Rng frng(seed, StreamTag::filter, i, r);
      const double z = std::exp(run_bpf(model, opts, frng).log_z_hat - ref);
      sum += z;
      sum_sq += z * z;
    }
    const double mean = sum / static_cast<double>(replicates);
    const double var = std::max(0.0, sum_sq / static_cast<double>(replicates) - mean * mean);
    rep.z_mc.push_back(mean * std::exp(ref));
    rep.z_mc_se.push_back(std::sqrt(var / static_cast<double>(replicates)) * std::exp(ref));
  }
  rep.mc_consistent = true;
  for (std::size_t i = 0; i < etas.size(); ++i)
    if (std::abs(rep.z_mc[i] - std::exp(rep.log_z[i])) > 4.0 * rep.z_mc_se[i] + 1e-300) rep.mc_consistent = false;
  for (std::size_t i = 0; i + 1 < etas.size(); ++i)
    rep.diffs.push_back(std::abs(std::exp(rep.log_z[i]) - std::exp(rep.log_z[i + 1])));
  rep.shrinking = true;
  for (std::size_t i = 0; i + 1 < rep.diffs.size(); ++i)
    if (!(rep.diffs[i + 1] < rep.diffs[i])) rep.shrinking = false;
  return rep;
}

}  // namespace tppf
