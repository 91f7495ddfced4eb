#include "tppf/models.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "tppf/error.hpp"

namespace tppf {

namespace {

using nlohmann::json;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double gaussian_log_norm(std::size_t dim, double var) {
  return -0.5 * static_cast<double>(dim) * std::log(2.0 * std::numbers::pi * var);
}

void check_dataset(const Dataset& data, std::size_t dim, std::size_t horizon) {
  if (data.y.size() != horizon + 1)
    fail(ErrorCode::invalid_argument, "dataset has " + std::to_string(data.y.size()) +
                                          " observations, model expects " + std::to_string(horizon + 1));
  for (const auto& y : data.y)
    if (static_cast<std::size_t>(y.size()) != dim)
      fail(ErrorCode::invalid_argument, "dataset observation dimension " + std::to_string(y.size()) +
                                            " does not match model dimension " + std::to_string(dim));
}

// Potentials of a linear Gaussian observation y ~ N(H x, var I).
FeynmanKacModel::LogPotential linear_gaussian_potential(const LinearGaussianObservation& obs) {
  const double c = gaussian_log_norm(static_cast<std::size_t>(obs.h.rows()), obs.noise_var);
  return [obs, c](std::size_t k, const Particles& xs) -> Eigen::VectorXd {
    Eigen::MatrixXd r = (obs.h * xs).colwise() - obs.y[k];
    return (c - 0.5 * r.colwise().squaredNorm().array() / obs.noise_var).matrix().transpose();
  };
}

}  // namespace

std::size_t LinearGaussianSpec::horizon() const {
  require(dt > 0.0 && t_end >= 0.0, "LinearGaussianSpec: dt must be positive and T non-negative");
  const double ratio = t_end / dt;
  const double n = std::round(ratio);
  require(std::abs(ratio - n) < 1e-9, "LinearGaussianSpec: T must be a multiple of dt");
  return static_cast<std::size_t>(n);
}

std::string model_name(const ModelSpec& spec) {
  return std::visit(overloaded{[](const LinearGaussianSpec&) { return std::string("lgm"); },
                               [](const Ngm78Spec&) { return std::string("ngm78"); },
                               [](const Lorenz96Spec&) { return std::string("lorenz96"); }},
                    spec);
}

std::size_t model_dim(const ModelSpec& spec) {
  return std::visit([](const auto& s) { return s.d; }, spec);
}

std::size_t model_horizon(const ModelSpec& spec) {
  return std::visit(overloaded{[](const LinearGaussianSpec& s) { return s.horizon(); },
                               [](const Ngm78Spec& s) { return s.n; },
                               [](const Lorenz96Spec& s) { return s.n; }},
                    spec);
}

FeynmanKacModel build_lgm(const LinearGaussianSpec& spec, const Dataset& data) {
  require(spec.d > 0, "LGM: dimension must be positive");
  const std::size_t n = spec.horizon();
  check_dataset(data, spec.d, n);
  FeynmanKacModel m;
  m.dim = spec.d;
  m.horizon = n;
  m.init = StateVec::Zero(static_cast<Eigen::Index>(spec.d));
  const double dt = spec.dt;
  // x + dt*A x with A = -I; covariance dt * Sigma with Sigma = I.
  m.kernel = std::make_shared<GaussianKernel>(
      spec.d, [dt](const Particles& xs) -> Particles { return (1.0 - dt) * xs; }, dt);
  LinearGaussianObservation obs;
  obs.h = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(spec.d), static_cast<Eigen::Index>(spec.d));
  obs.noise_var = 1.0;
  obs.y = data.y;
  m.log_potential = linear_gaussian_potential(obs);
  m.log_potential_bound = std::vector<double>(n + 1, gaussian_log_norm(spec.d, 1.0));
  m.linear_obs = std::move(obs);
  return m;
}

Particles ngm78_mean(const Particles& xs, double a0, double a1) {
  Particles out(xs.rows(), xs.cols());
  for (Eigen::Index j = 0; j < xs.cols(); ++j) {
    const double r2 = xs.col(j).squaredNorm();
    out.col(j) = a0 * xs.col(j) + a1 * xs.col(j) / (1.0 + r2);
  }
  return out;
}

FeynmanKacModel build_ngm78(const Ngm78Spec& spec, const Dataset& data) {
  require(spec.d > 0, "NGM-78: dimension must be positive");
  require(spec.sigma_v2 > 0.0 && spec.sigma_u2 > 0.0, "NGM-78: noise variances must be positive");
  check_dataset(data, spec.d, spec.n);
  FeynmanKacModel m;
  m.dim = spec.d;
  m.horizon = spec.n;
  m.init = StateVec::Zero(static_cast<Eigen::Index>(spec.d));
  const double a0 = spec.a0, a1 = spec.a1;
  m.kernel = std::make_shared<GaussianKernel>(
      spec.d, [a0, a1](const Particles& xs) { return ngm78_mean(xs, a0, a1); }, spec.sigma_v2);
  const double c = gaussian_log_norm(spec.d, spec.sigma_u2);
  const double a2 = spec.a2, var = spec.sigma_u2;
  m.log_potential = [y = data.y, a2, var, c](std::size_t k, const Particles& xs) -> Eigen::VectorXd {
    Eigen::MatrixXd r = (a2 * xs.array().square()).matrix().colwise() - y[k];
    return (c - 0.5 * r.colwise().squaredNorm().array() / var).matrix().transpose();
  };
  m.log_potential_bound = std::vector<double>(spec.n + 1, c);
  return m;
}

Particles lorenz96_drift(const Particles& xs, double alpha) {
  const Eigen::Index d = xs.rows();
  Particles out(d, xs.cols());
  for (Eigen::Index j = 0; j < xs.cols(); ++j) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double xm1 = xs((i + d - 1) % d, j);
      const double xm2 = xs((i + d - 2) % d, j);
      const double xp1 = xs((i + 1) % d, j);
      out(i, j) = -xm1 * xm2 + xm1 * xp1 - xs(i, j) + alpha;
    }
  }
  return out;
}

FeynmanKacModel build_lorenz96(const Lorenz96Spec& spec, const Dataset& data) {
  require(spec.d >= 3, "Lorenz-96: dimension must be at least 3");
  require(spec.dt > 0.0 && spec.sigma > 0.0 && spec.obs_var > 0.0, "Lorenz-96: dt, sigma, obs_var must be positive");
  check_dataset(data, spec.d, spec.n);
  FeynmanKacModel m;
  m.dim = spec.d;
  m.horizon = spec.n;
  m.init = StateVec::Zero(static_cast<Eigen::Index>(spec.d));
  const double alpha = spec.alpha, dt = spec.dt;
  // dX = b(X) dt + sigma^2 dW, so one EM step has variance sigma^4 dt.
  const double var = std::pow(spec.sigma, 4) * dt;
  m.kernel = std::make_shared<GaussianKernel>(
      spec.d, [alpha, dt](const Particles& xs) -> Particles { return xs + dt * lorenz96_drift(xs, alpha); }, var);
  const auto d = static_cast<Eigen::Index>(spec.d);
  LinearGaussianObservation obs;
  obs.h = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d - 2; ++i) obs.h(i, i) = 1.0;
  obs.noise_var = spec.obs_var;
  obs.y = data.y;
  m.log_potential = linear_gaussian_potential(obs);
  m.log_potential_bound = std::vector<double>(spec.n + 1, gaussian_log_norm(spec.d, spec.obs_var));
  m.linear_obs = std::move(obs);
  return m;
}

FeynmanKacModel build_model(const Dataset& data) {
  return std::visit(overloaded{[&](const LinearGaussianSpec& s) { return build_lgm(s, data); },
                               [&](const Ngm78Spec& s) { return build_ngm78(s, data); },
                               [&](const Lorenz96Spec& s) { return build_lorenz96(s, data); }},
                    data.spec);
}

Dataset generate_dataset(const ModelSpec& spec, const SeedSpec& seed) {
  Dataset data;
  data.spec = spec;
  data.seed = seed.master;
  const std::size_t d = model_dim(spec);
  const std::size_t n = model_horizon(spec);
  // Build the dynamics with placeholder observations, then simulate.
  Dataset placeholder{spec, seed.master, std::vector<Eigen::VectorXd>(n + 1, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d)))};
  const FeynmanKacModel model = build_model(placeholder);
  Rng rng(seed, StreamTag::dataset);
  const Trajectory x = simulate_chain(model, rng);
  data.y.resize(n + 1);
  std::visit(overloaded{[&](const LinearGaussianSpec&) {
                          for (std::size_t k = 0; k <= n; ++k) {
                            Eigen::VectorXd y = x.col(static_cast<Eigen::Index>(k));
                            for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += rng.normal();
                            data.y[k] = y;
                          }
                        },
                        [&](const Ngm78Spec& s) {
                          const double sd = std::sqrt(s.sigma_u2);
                          for (std::size_t k = 0; k <= n; ++k) {
                            Eigen::VectorXd y = s.a2 * x.col(static_cast<Eigen::Index>(k)).array().square();
                            for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += sd * rng.normal();
                            data.y[k] = y;
                          }
                        },
                        [&](const Lorenz96Spec& s) {
                          const double sd = std::sqrt(s.obs_var);
                          const auto dd = static_cast<Eigen::Index>(s.d);
                          for (std::size_t k = 0; k <= n; ++k) {
                            Eigen::VectorXd y = x.col(static_cast<Eigen::Index>(k));
                            y.tail(2).setZero();
                            for (Eigen::Index i = 0; i < dd; ++i) y[i] += sd * rng.normal();
                            data.y[k] = y;
                          }
                        }},
             spec);
  return data;
}

std::string dataset_to_json(const Dataset& data) {
  json j;
  j["model"] = model_name(data.spec);
  json spec;
  std::visit(overloaded{[&](const LinearGaussianSpec& s) {
                          spec = {{"d", s.d}, {"dt", s.dt}, {"T", s.t_end}};
                        },
                        [&](const Ngm78Spec& s) {
                          spec = {{"d", s.d},   {"a0", s.a0},           {"a1", s.a1},           {"a2", s.a2},
                                  {"n", s.n},   {"sigma_v2", s.sigma_v2}, {"sigma_u2", s.sigma_u2}};
                        },
                        [&](const Lorenz96Spec& s) {
                          spec = {{"d", s.d},         {"alpha", s.alpha}, {"sigma", s.sigma},
                                  {"obs_var", s.obs_var}, {"dt", s.dt},       {"n", s.n}};
                        }},
             data.spec);
  j["spec"] = spec;
  j["seed"] = data.seed;
  json ys = json::array();
  for (const auto& y : data.y) ys.push_back(std::vector<double>(y.data(), y.data() + y.size()));
  j["y"] = ys;
  return j.dump();
}

Dataset dataset_from_json(const std::string& text) {
  Dataset data;
  try {
    const json j = json::parse(text);
    const std::string model = j.at("model").get<std::string>();
    const json& s = j.at("spec");
    if (model == "lgm") {
      LinearGaussianSpec spec;
      spec.d = s.at("d").get<std::size_t>();
      spec.dt = s.at("dt").get<double>();
      spec.t_end = s.at("T").get<double>();
      data.spec = spec;
    } else if (model == "ngm78") {
      Ngm78Spec spec;
      spec.d = s.at("d").get<std::size_t>();
      spec.a0 = s.at("a0").get<double>();
      spec.a1 = s.at("a1").get<double>();
      spec.a2 = s.at("a2").get<double>();
      spec.n = s.at("n").get<std::size_t>();
      spec.sigma_v2 = s.at("sigma_v2").get<double>();
      spec.sigma_u2 = s.at("sigma_u2").get<double>();
      data.spec = spec;
    } else if (model == "lorenz96") {
      Lorenz96Spec spec;
      spec.d = s.at("d").get<std::size_t>();
      spec.alpha = s.at("alpha").get<double>();
      spec.sigma = s.at("sigma").get<double>();
      spec.obs_var = s.at("obs_var").get<double>();
      spec.dt = s.at("dt").get<double>();
      spec.n = s.at("n").get<std::size_t>();
      data.spec = spec;
    } else {
      fail(ErrorCode::io, "dataset: unknown model '" + model + "'");
    }
    data.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& row : j.at("y")) {
      const auto v = row.get<std::vector<double>>();
      data.y.emplace_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::io, std::string("dataset: malformed JSON: ") + e.what());
  }
  check_dataset(data, model_dim(data.spec), model_horizon(data.spec));
  return data;
}

void save_dataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
  out << dataset_to_json(data) << '\n';
  if (!out) fail(ErrorCode::io, "failed writing '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return dataset_from_json(ss.str());
}

}  // namespace tppf
