#include "tppf/twist.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "tppf/error.hpp"

namespace tppf {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::VectorXd block_log_mean_exp(const Eigen::VectorXd& values, std::size_t block) {
  const auto b = static_cast<Eigen::Index>(block);
  const Eigen::Index groups = values.size() / b;
  Eigen::VectorXd out(groups);
  for (Eigen::Index g = 0; g < groups; ++g) out[g] = log_mean_exp(values.segment(g * b, b));
  return out;
}

std::vector<Eigen::Index> state_indices(const Particles& xs, std::size_t states, std::size_t offset) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(xs.cols()));
  for (Eigen::Index j = 0; j < xs.cols(); ++j) {
    const auto s = static_cast<Eigen::Index>(xs(0, j));
    require(s >= 0 && static_cast<std::size_t>(s) < states, "finite-chain state out of range");
    idx[static_cast<std::size_t>(j)] = static_cast<Eigen::Index>(offset) + s;
  }
  return idx;
}
}  // namespace

void Twist::check_step(std::size_t k) const {
  if (k < 1 || k > horizon())
    fail(ErrorCode::invalid_argument,
         "twist step " + std::to_string(k) + " outside 1.." + std::to_string(horizon()));
}

Particles repeat_columns(const Particles& xs, std::size_t count) {
  const auto c = static_cast<Eigen::Index>(count);
  Particles out(xs.rows(), xs.cols() * c);
  for (Eigen::Index j = 0; j < xs.cols(); ++j) out.middleCols(j * c, c) = xs.col(j).replicate(1, c);
  return out;
}

Eigen::VectorXd mc_normalizer(const TransitionKernel& kernel, const Twist& twist, std::size_t k, const Particles& xs,
                              std::size_t inner, Rng& rng) {
  require(inner >= 1, "mc_normalizer: inner sample count must be at least 1");
  const Particles ys = kernel.sample(rng, repeat_columns(xs, inner));
  return block_log_mean_exp(twist.log_phi(k, ys), inner);
}

Particles rejection_sample_twisted(const TransitionKernel& kernel, const Twist& twist, std::size_t k,
                                   const Particles& xs, Rng& rng, std::size_t max_attempts, double log_bound) {
  require(max_attempts >= 1, "rejection sampler: max_attempts must be at least 1");
  Particles out(xs.rows(), xs.cols());
  std::vector<Eigen::Index> pending(static_cast<std::size_t>(xs.cols()));
  for (Eigen::Index j = 0; j < xs.cols(); ++j) pending[static_cast<std::size_t>(j)] = j;
  std::vector<std::size_t> attempts(static_cast<std::size_t>(xs.cols()), 0);
  std::size_t proposed = 0, accepted = 0;
  while (!pending.empty()) {
    Particles from(xs.rows(), static_cast<Eigen::Index>(pending.size()));
    for (std::size_t i = 0; i < pending.size(); ++i) from.col(static_cast<Eigen::Index>(i)) = xs.col(pending[i]);
    const Particles ys = kernel.sample(rng, from);
    const Eigen::VectorXd lp = twist.log_phi(k, ys);
    std::vector<Eigen::Index> next;
    for (std::size_t i = 0; i < pending.size(); ++i) {
      const Eigen::Index j = pending[i];
      const double log_u = std::log(rng.uniform());
      ++proposed;
      if (lp[static_cast<Eigen::Index>(i)] - log_bound > 1e-12)
        fail(ErrorCode::numeric, "rejection sampler: twist exceeds its bound at step " + std::to_string(k));
      if (log_u < lp[static_cast<Eigen::Index>(i)] - log_bound) {
        out.col(j) = ys.col(static_cast<Eigen::Index>(i));
        ++accepted;
        continue;
      }
      if (++attempts[static_cast<std::size_t>(j)] >= max_attempts) {
        std::ostringstream os;
        os << "rejection sampler exhausted " << max_attempts << " attempts at step " << k << " (particle " << j
           << "); empirical acceptance rate " << static_cast<double>(accepted) / static_cast<double>(proposed)
           << ", the twist is badly scaled";
        fail(ErrorCode::rejection_exhausted, os.str());
      }
      next.push_back(j);
    }
    pending.swap(next);
  }
  return out;
}

// ---------------------------------------------------------------- UnitTwist

UnitTwist::UnitTwist(std::shared_ptr<const TransitionKernel> kernel, std::size_t horizon)
    : kernel_(std::move(kernel)), horizon_(horizon) {
  require(kernel_ != nullptr, "UnitTwist: null kernel");
}

Eigen::VectorXd UnitTwist::log_phi(std::size_t k, const Particles& xs) const {
  check_step(k);
  return Eigen::VectorXd::Zero(xs.cols());
}

Eigen::VectorXd UnitTwist::log_normalizer(std::size_t k, const Particles& xs, Rng&) const {
  check_step(k);
  return Eigen::VectorXd::Zero(xs.cols());
}

Particles UnitTwist::sample_twisted(std::size_t k, const Particles& xs, Rng& rng) const {
  check_step(k);
  return kernel_->sample(rng, xs);
}

// ---------------------------------------------------------------- QuadraticTwist

QuadraticTwist::QuadraticTwist(std::shared_ptr<const GaussianKernel> kernel, std::vector<QuadraticStep> steps)
    : kernel_(std::move(kernel)), steps_(std::move(steps)) {
  require(kernel_ != nullptr, "QuadraticTwist: null kernel");
  require(!steps_.empty(), "QuadraticTwist: needs steps 0..n");
  const auto d = static_cast<Eigen::Index>(kernel_->dim());
  const double s2 = kernel_->variance();
  cache_.resize(steps_.size());
  for (std::size_t k = 1; k < steps_.size(); ++k) {
    const auto& st = steps_[k];
    require(st.lambda.rows() == d && st.lambda.cols() == d && st.h.size() == d,
            "QuadraticTwist: step " + std::to_string(k) + " has wrong dimensions");
    require(st.lambda.allFinite() && st.h.allFinite() && std::isfinite(st.c),
            "QuadraticTwist: step " + std::to_string(k) + " has non-finite coefficients");
    Eigen::MatrixXd p = st.lambda + Eigen::MatrixXd::Identity(d, d) / s2;
    cache_[k].precision.compute(p);
    if (cache_[k].precision.info() != Eigen::Success)
      fail(ErrorCode::numeric, "QuadraticTwist: twisted precision not positive definite at step " + std::to_string(k));
    const Eigen::MatrixXd l = cache_[k].precision.matrixL();
    cache_[k].log_det_ratio = 2.0 * l.diagonal().array().log().sum() + static_cast<double>(d) * std::log(s2);
  }
}

Eigen::VectorXd QuadraticTwist::log_phi(std::size_t k, const Particles& xs) const {
  check_step(k);
  const auto& st = steps_[k];
  const Eigen::MatrixXd lx = st.lambda * xs;
  Eigen::VectorXd out = (xs.transpose() * st.h).array() + st.c;
  out.array() -= 0.5 * xs.cwiseProduct(lx).colwise().sum().transpose().array();
  return out;
}

Eigen::VectorXd QuadraticTwist::log_normalizer_at_mean(std::size_t k, const Particles& means) const {
  check_step(k);
  const auto& st = steps_[k];
  // Expand log phi around the kernel mean m: gradient g = h - L m.
  const Eigen::MatrixXd g = (-(st.lambda * means)).colwise() + st.h;
  const Eigen::MatrixXd pg = cache_[k].precision.solve(g);
  Eigen::VectorXd out = log_phi(k, means);
  out.array() += 0.5 * g.cwiseProduct(pg).colwise().sum().transpose().array() - 0.5 * cache_[k].log_det_ratio;
  return out;
}

Eigen::VectorXd QuadraticTwist::log_normalizer(std::size_t k, const Particles& xs, Rng&) const {
  return log_normalizer_at_mean(k, kernel_->mean(xs));
}

Particles QuadraticTwist::sample_twisted(std::size_t k, const Particles& xs, Rng& rng) const {
  check_step(k);
  const auto& st = steps_[k];
  const Particles m = kernel_->mean(xs);
  const Eigen::MatrixXd g = (-(st.lambda * m)).colwise() + st.h;
  Particles out = m + cache_[k].precision.solve(g);
  Eigen::MatrixXd z(out.rows(), out.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j)
    for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, j) = rng.normal();
  out += cache_[k].precision.matrixU().solve(z);
  return out;
}

Eigen::VectorXd quadratic_log_normalizer(const GaussianKernel& kernel, const QuadraticStep& step, const Particles& xs) {
  std::vector<QuadraticStep> steps{step, step};
  return QuadraticTwist(std::shared_ptr<const GaussianKernel>(&kernel, [](const GaussianKernel*) {}), std::move(steps))
      .log_normalizer_at_mean(1, kernel.mean(xs));
}

// ---------------------------------------------------------------- GaussianTwist

GaussianTwist::GaussianTwist(std::shared_ptr<const GaussianKernel> kernel, std::size_t horizon, std::size_t hidden,
                             double log_var0)
    : kernel_(std::move(kernel)),
      horizon_(horizon),
      log_var0_(log_var0),
      mean_net_(1, hidden, kernel_ ? kernel_->dim() : 1, "mean"),
      var_net_(1, hidden, 1, "log_var") {
  require(kernel_ != nullptr, "GaussianTwist: null kernel");
  require(horizon >= 1, "GaussianTwist: horizon must be at least 1");
  mean_net_.register_params(params_);
  var_net_.register_params(params_);
}

void GaussianTwist::init(Rng& rng) {
  mean_net_.init(params_, rng);
  var_net_.init(params_, rng);
}

Eigen::MatrixXd GaussianTwist::step_input(std::size_t k) const {
  return Eigen::MatrixXd::Constant(1, 1, static_cast<double>(k) / static_cast<double>(horizon_));
}

Eigen::VectorXd GaussianTwist::mean(std::size_t k) const {
  check_step(k);
  return mean_net_.forward(params_, step_input(k)).col(0);
}

double GaussianTwist::variance(std::size_t k) const {
  check_step(k);
  const double v = std::exp(var_net_.forward(params_, step_input(k))(0, 0) + log_var0_);
  if (!(v > 0.0) || !std::isfinite(v))
    fail(ErrorCode::numeric, "GaussianTwist: variance at step " + std::to_string(k) + " is not positive and finite");
  return v;
}

Eigen::VectorXd GaussianTwist::log_phi(std::size_t k, const Particles& xs) const {
  const Eigen::VectorXd mu = mean(k);
  const double v = variance(k);
  return -(xs.colwise() - mu).colwise().squaredNorm().transpose() / (2.0 * v);
}

Eigen::VectorXd GaussianTwist::log_normalizer(std::size_t k, const Particles& xs, Rng&) const {
  const Eigen::VectorXd mu = mean(k);
  const double v = variance(k);
  const double s2 = kernel_->variance();
  const double d = static_cast<double>(kernel_->dim());
  const Particles m = kernel_->mean(xs);
  Eigen::VectorXd out = -(m.colwise() - mu).colwise().squaredNorm().transpose() / (2.0 * (v + s2));
  out.array() -= 0.5 * d * std::log1p(s2 / v);
  return out;
}

Particles GaussianTwist::sample_twisted(std::size_t k, const Particles& xs, Rng& rng) const {
  const Eigen::VectorXd mu = mean(k);
  const double v = variance(k);
  const double s2 = kernel_->variance();
  const double prec = 1.0 / s2 + 1.0 / v;
  const double sd = std::sqrt(1.0 / prec);
  Particles out = ((kernel_->mean(xs) / s2).colwise() + mu / v) / prec;
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) += sd * rng.normal();
  return out;
}

Var GaussianTwist::tape_log_phi(Tape& tape, std::size_t k, const Particles& xs) const {
  check_step(k);
  const Var in = tape.constant(step_input(k));
  const Var mu = mean_net_.forward(tape, in);
  const Var var = tape.exp(tape.shift(var_net_.forward(tape, in), log_var0_));
  const Var sq = tape.sum_rows(tape.square(tape.constant(xs) - mu));
  return tape.div(sq, tape.scale(var, -2.0));
}

Var GaussianTwist::tape_log_normalizer(Tape& tape, std::size_t k, const Particles& xs, Rng&) const {
  check_step(k);
  const double s2 = kernel_->variance();
  const double d = static_cast<double>(kernel_->dim());
  const Var in = tape.constant(step_input(k));
  const Var mu = mean_net_.forward(tape, in);
  const Var var = tape.exp(tape.shift(var_net_.forward(tape, in), log_var0_));
  const Var sq = tape.sum_rows(tape.square(tape.constant(kernel_->mean(xs)) - mu));
  const Var quad = tape.div(sq, tape.scale(tape.shift(var, s2), -2.0));
  const Var logdet = tape.scale(tape.log(tape.shift(tape.div(tape.scalar(s2), var), 1.0)), -0.5 * d);
  return quad + logdet;
}

QuadraticTwist GaussianTwist::snapshot() const {
  const auto d = static_cast<Eigen::Index>(kernel_->dim());
  std::vector<QuadraticStep> steps(horizon_ + 1);
  steps[0] = {Eigen::MatrixXd::Zero(d, d), Eigen::VectorXd::Zero(d), 0.0};
  for (std::size_t k = 1; k <= horizon_; ++k) {
    const Eigen::VectorXd mu = mean(k);
    const double v = variance(k);
    steps[k] = {Eigen::MatrixXd::Identity(d, d) / v, mu / v, -0.5 * mu.squaredNorm() / v};
  }
  return QuadraticTwist(kernel_, std::move(steps));
}

// ---------------------------------------------------------------- NnTwist

NnTwist::NnTwist(std::shared_ptr<const TransitionKernel> kernel, std::size_t horizon, std::size_t hidden, double eps,
                 std::size_t inner, std::size_t max_attempts)
    : kernel_(std::move(kernel)),
      horizon_(horizon),
      eps_(eps),
      inner_(inner),
      max_attempts_(max_attempts),
      net_(kernel_ ? kernel_->dim() + 1 : 1, hidden, 1, "phi") {
  require(kernel_ != nullptr, "NnTwist: null kernel");
  require(horizon >= 1, "NnTwist: horizon must be at least 1");
  require(eps > 0.0 && eps < 1.0, "NnTwist: eps must lie in (0, 1)");
  require(inner >= 1, "NnTwist: inner sample count must be at least 1");
  net_.register_params(params_);
}

void NnTwist::init(Rng& rng) { net_.init(params_, rng); }

Eigen::MatrixXd NnTwist::net_input(std::size_t k, const Particles& xs) const {
  check_step(k);
  Eigen::MatrixXd in(xs.rows() + 1, xs.cols());
  in.topRows(xs.rows()) = xs;
  in.row(xs.rows()).setConstant(static_cast<double>(k) / static_cast<double>(horizon_));
  return in;
}

Eigen::VectorXd NnTwist::log_phi(std::size_t k, const Particles& xs) const {
  const Eigen::MatrixXd z = net_.forward(params_, net_input(k, xs));
  if (!z.allFinite()) fail(ErrorCode::numeric, "NnTwist: network output is not finite at step " + std::to_string(k));
  const double half = 0.5 * (1.0 - eps_);
  return (eps_ + half * (tanh_array(z.row(0).array()) + 1.0)).log().matrix().transpose();
}

Eigen::VectorXd NnTwist::log_normalizer(std::size_t k, const Particles& xs, Rng& rng) const {
  return mc_normalizer(*kernel_, *this, k, xs, inner_, rng);
}

Particles NnTwist::sample_twisted(std::size_t k, const Particles& xs, Rng& rng) const {
  return rejection_sample_twisted(*kernel_, *this, k, xs, rng, max_attempts_, 0.0);
}

Var NnTwist::tape_log_phi(Tape& tape, std::size_t k, const Particles& xs) const {
  const Var z = net_.forward(tape, tape.constant(net_input(k, xs)));
  const double half = 0.5 * (1.0 - eps_);
  return tape.log(tape.shift(tape.scale(tape.tanh(z), half), eps_ + half));
}

Var NnTwist::tape_log_normalizer(Tape& tape, std::size_t k, const Particles& xs, Rng& rng) const {
  const Particles ys = kernel_->sample(rng, repeat_columns(xs, inner_));
  return tape.log_mean_exp_blocks(tape_log_phi(tape, k, ys), static_cast<Eigen::Index>(inner_));
}

// ---------------------------------------------------------------- TabularTwist

TabularTwist::TabularTwist(std::shared_ptr<const FiniteKernel> kernel, std::size_t horizon)
    : kernel_(std::move(kernel)), horizon_(horizon) {
  require(kernel_ != nullptr, "TabularTwist: null kernel");
  require(horizon >= 1, "TabularTwist: horizon must be at least 1");
  params_.add("log_phi", static_cast<Eigen::Index>(kernel_->states()), static_cast<Eigen::Index>(horizon + 1));
}

void TabularTwist::init(Rng&) { params_.values().setZero(); }

Eigen::VectorXd TabularTwist::log_phi(std::size_t k, const Particles& xs) const {
  check_step(k);
  const auto t = table();
  const auto idx = state_indices(xs, kernel_->states(), 0);
  Eigen::VectorXd out(xs.cols());
  for (Eigen::Index j = 0; j < xs.cols(); ++j) out[j] = t(idx[static_cast<std::size_t>(j)], static_cast<Eigen::Index>(k));
  return out;
}

Eigen::VectorXd TabularTwist::log_normalizer(std::size_t k, const Particles& xs, Rng&) const {
  check_step(k);
  const auto t = table();
  const Eigen::MatrixXd& p = kernel_->matrix();
  const auto idx = state_indices(xs, kernel_->states(), 0);
  const Eigen::VectorXd col = t.col(static_cast<Eigen::Index>(k));
  Eigen::VectorXd per_state(p.rows());
  for (Eigen::Index s = 0; s < p.rows(); ++s)
    per_state[s] = log_sum_exp((p.row(s).transpose().array().log() + col.array()).matrix());
  Eigen::VectorXd out(xs.cols());
  for (Eigen::Index j = 0; j < xs.cols(); ++j) out[j] = per_state[idx[static_cast<std::size_t>(j)]];
  return out;
}

Particles TabularTwist::sample_twisted(std::size_t k, const Particles& xs, Rng& rng) const {
  check_step(k);
  const auto t = table();
  const Eigen::MatrixXd& p = kernel_->matrix();
  const Eigen::VectorXd col = t.col(static_cast<Eigen::Index>(k));
  const double hi = col.maxCoeff();
  const Eigen::VectorXd phi = (col.array() - hi).exp();
  Eigen::MatrixXd cumulative(p.rows(), p.cols());
  for (Eigen::Index s = 0; s < p.rows(); ++s) {
    double acc = 0.0;
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      acc += p(s, c) * phi[c];
      cumulative(s, c) = acc;
    }
  }
  const auto idx = state_indices(xs, kernel_->states(), 0);
  Particles out(1, xs.cols());
  for (Eigen::Index j = 0; j < xs.cols(); ++j) {
    const auto row = cumulative.row(idx[static_cast<std::size_t>(j)]).transpose();
    if (!(row[row.size() - 1] > 0.0))
      fail(ErrorCode::degenerate, "TabularTwist: twisted kernel has zero mass at step " + std::to_string(k));
    out(0, j) = static_cast<double>(sample_categorical(rng, row));
  }
  return out;
}

Var TabularTwist::tape_log_phi(Tape& tape, std::size_t k, const Particles& xs) const {
  check_step(k);
  const std::size_t s = kernel_->states();
  return tape.gather(tape.param(std::size_t{0}), state_indices(xs, s, k * s));
}

Var TabularTwist::tape_log_normalizer(Tape& tape, std::size_t k, const Particles& xs, Rng&) const {
  check_step(k);
  const std::size_t s = kernel_->states();
  std::vector<Eigen::Index> column(s);
  for (std::size_t i = 0; i < s; ++i) column[i] = static_cast<Eigen::Index>(k * s + i);
  const Var phi = tape.exp(tape.gather(tape.param(std::size_t{0}), column));
  // Row vector q(s) = sum_s' P(s, s') phi(s').
  const Var q = tape.matmul(phi, tape.constant(kernel_->matrix().transpose()));
  return tape.gather(tape.log(q), state_indices(xs, s, 0));
}

// ---------------------------------------------------------------- PotentialTwist

PotentialTwist::PotentialTwist(const FeynmanKacModel& model, std::size_t inner, std::size_t max_attempts)
    : model_(model), inner_(inner), max_attempts_(max_attempts) {
  model_.validate();
  require(model_.log_potential_bound.has_value() && model_.log_potential_bound->size() == model_.horizon + 1,
          "PotentialTwist: model needs a potential bound per step for rejection sampling");
  require(inner >= 1, "PotentialTwist: inner sample count must be at least 1");
}

Eigen::VectorXd PotentialTwist::log_phi(std::size_t k, const Particles& xs) const {
  check_step(k);
  return model_.log_g(k, xs);
}

Eigen::VectorXd PotentialTwist::log_normalizer(std::size_t k, const Particles& xs, Rng& rng) const {
  return mc_normalizer(*model_.kernel, *this, k, xs, inner_, rng);
}

Particles PotentialTwist::sample_twisted(std::size_t k, const Particles& xs, Rng& rng) const {
  check_step(k);
  return rejection_sample_twisted(*model_.kernel, *this, k, xs, rng, max_attempts_, (*model_.log_potential_bound)[k]);
}

// ---------------------------------------------------------------- FA-APF

std::shared_ptr<const Twist> fa_apf_twist(const FeynmanKacModel& model) {
  model.validate();
  require(model.horizon >= 1, "fa_apf_twist: horizon must be at least 1");
  if (auto finite = std::dynamic_pointer_cast<const FiniteKernel>(model.kernel)) {
    auto twist = std::make_shared<TabularTwist>(finite, model.horizon);
    Particles states(1, static_cast<Eigen::Index>(finite->states()));
    for (Eigen::Index s = 0; s < states.cols(); ++s) states(0, s) = static_cast<double>(s);
    auto table = twist->table();
    for (std::size_t k = 1; k <= model.horizon; ++k)
      table.col(static_cast<Eigen::Index>(k)) = model.log_g(k, states);
    return twist;
  }
  auto gaussian = std::dynamic_pointer_cast<const GaussianKernel>(model.kernel);
  if (gaussian && model.linear_obs) {
    const auto& obs = *model.linear_obs;
    const double r = obs.noise_var;
    const double p = static_cast<double>(obs.h.rows());
    std::vector<QuadraticStep> steps(model.horizon + 1);
    const auto d = static_cast<Eigen::Index>(model.dim);
    steps[0] = {Eigen::MatrixXd::Zero(d, d), Eigen::VectorXd::Zero(d), 0.0};
    for (std::size_t k = 1; k <= model.horizon; ++k) {
      const Eigen::VectorXd& y = obs.y[k];
      steps[k] = {obs.h.transpose() * obs.h / r, obs.h.transpose() * y / r,
                  -0.5 * y.squaredNorm() / r - 0.5 * p * std::log(2.0 * std::numbers::pi * r)};
    }
    return std::make_shared<QuadraticTwist>(gaussian, std::move(steps));
  }
  return std::make_shared<PotentialTwist>(model);
}

}  // namespace tppf
