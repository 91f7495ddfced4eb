#include "tppf/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "tppf/error.hpp"

namespace tppf {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::string format_state(const Eigen::VectorXd& x) {
  std::ostringstream os;
  os << "(";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << ")";
  return os.str();
}
}  // namespace

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  double hi = kNegInf;
  for (double x : v) hi = std::max(hi, x);
  if (hi == kNegInf) return kNegInf;
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double x : v)
    if (x != kNegInf) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

double log_mean_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return log_sum_exp(v) - std::log(static_cast<double>(v.size()));
}

GaussianKernel::GaussianKernel(std::size_t dim, MeanMap mean, double variance)
    : dim_(dim), mean_(std::move(mean)), variance_(variance) {
  require(dim > 0, "GaussianKernel: dimension must be positive");
  require(variance > 0.0 && std::isfinite(variance), "GaussianKernel: variance must be positive");
}

Particles GaussianKernel::mean(const Particles& xs) const {
  Particles m = mean_(xs);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (!m.col(j).allFinite())
      fail(ErrorCode::numeric, "kernel drift is not finite at state " + format_state(xs.col(j)));
  }
  return m;
}

Particles GaussianKernel::sample(Rng& rng, const Particles& from) const {
  Particles out = mean(from);
  const double sd = std::sqrt(variance_);
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) += sd * rng.normal();
  return out;
}

double GaussianKernel::log_density(const StateVec& x, const StateVec& y) const {
  Particles xm(x.size(), 1);
  xm.col(0) = x;
  const Eigen::VectorXd r = y - mean(xm).col(0);
  const double d = static_cast<double>(dim_);
  return -0.5 * d * std::log(2.0 * std::numbers::pi * variance_) - 0.5 * r.squaredNorm() / variance_;
}

std::shared_ptr<const GaussianKernel> gaussian_em_kernel(std::size_t dim, GaussianKernel::MeanMap drift,
                                                         double eta) {
  require(eta > 0.0 && std::isfinite(eta), "gaussian_em_kernel: eta must be positive");
  auto mean = [drift = std::move(drift), eta](const Particles& xs) -> Particles {
    return xs + eta * drift(xs);
  };
  return std::make_shared<GaussianKernel>(dim, std::move(mean), 2.0 * eta);
}

FiniteKernel::FiniteKernel(Eigen::MatrixXd transition) : p_(std::move(transition)) {
  require(p_.rows() > 0 && p_.rows() == p_.cols(), "FiniteKernel: transition matrix must be square");
  cumulative_.resize(p_.rows(), p_.cols());
  for (Eigen::Index r = 0; r < p_.rows(); ++r) {
    double acc = 0.0;
    for (Eigen::Index c = 0; c < p_.cols(); ++c) {
      require(p_(r, c) >= 0.0, "FiniteKernel: negative transition probability");
      acc += p_(r, c);
      cumulative_(r, c) = acc;
    }
    require(std::abs(acc - 1.0) < 1e-12, "FiniteKernel: rows must sum to one");
  }
}

std::size_t sample_categorical(Rng& rng, const Eigen::Ref<const Eigen::VectorXd>& cumulative) {
  const double u = rng.uniform() * cumulative[cumulative.size() - 1];
  const auto* begin = cumulative.data();
  const auto* end = begin + cumulative.size();
  const auto* it = std::upper_bound(begin, end, u);
  const auto idx = static_cast<std::size_t>(it - begin);
  return std::min(idx, static_cast<std::size_t>(cumulative.size() - 1));
}

Particles FiniteKernel::sample(Rng& rng, const Particles& from) const {
  Particles out(1, from.cols());
  for (Eigen::Index j = 0; j < from.cols(); ++j) {
    const auto s = static_cast<Eigen::Index>(from(0, j));
    out(0, j) = static_cast<double>(sample_categorical(rng, cumulative_.row(s).transpose()));
  }
  return out;
}

double FiniteKernel::log_density(const StateVec& x, const StateVec& y) const {
  return std::log(p_(static_cast<Eigen::Index>(x[0]), static_cast<Eigen::Index>(y[0])));
}

Eigen::VectorXd FeynmanKacModel::log_g(std::size_t k, const Particles& xs) const {
  Eigen::VectorXd v = log_potential(k, xs);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isnan(v[i]) || v[i] == std::numeric_limits<double>::infinity())
      fail(ErrorCode::numeric, "log potential at step " + std::to_string(k) + " is not a valid log-density at " +
                                   format_state(xs.col(i)));
  }
  return v;
}

void FeynmanKacModel::validate() const {
  require(dim > 0, "model dimension must be positive");
  require(kernel != nullptr, "model has no transition kernel");
  require(kernel->dim() == dim, "kernel dimension does not match model dimension");
  require(static_cast<std::size_t>(init.size()) == dim, "initial state dimension does not match model");
  require(static_cast<bool>(log_potential), "model has no potentials");
}

Trajectory simulate_chain(const FeynmanKacModel& model, Rng& rng) {
  model.validate();
  Trajectory path(model.dim, model.horizon + 1);
  path.col(0) = model.init;
  for (std::size_t k = 1; k <= model.horizon; ++k) {
    Particles prev = path.col(static_cast<Eigen::Index>(k - 1));
    path.col(static_cast<Eigen::Index>(k)) = model.kernel->sample(rng, prev).col(0);
  }
  return path;
}

}  // namespace tppf
