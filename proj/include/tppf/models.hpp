#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "tppf/model.hpp"

namespace tppf {

/// OU discretization x' = x + dt*A x + sqrt(dt) N(0, Sigma) with A = -I,
/// Sigma = I, observed through y = x + N(0, I).
struct LinearGaussianSpec {
  std::size_t d = 2;
  double dt = 0.01;
  double t_end = 0.5;

  /// n = T / dt, rounded; T must be an integer multiple of dt.
  std::size_t horizon() const;
};

struct Ngm78Spec {
  std::size_t d = 1;
  double a0 = 0.5;
  double a1 = 25.0;
  double a2 = 1.0 / 20.0;
  double sigma_v2 = 0.01;
  double sigma_u2 = 1.0;
  std::size_t n = 50;
};

struct Lorenz96Spec {
  std::size_t d = 5;
  double alpha = 3.0;
  double sigma = 1.0;
  double obs_var = 1.0;
  double dt = 0.05;
  std::size_t n = 50;
};

using ModelSpec = std::variant<LinearGaussianSpec, Ngm78Spec, Lorenz96Spec>;

std::string model_name(const ModelSpec& spec);
std::size_t model_dim(const ModelSpec& spec);
std::size_t model_horizon(const ModelSpec& spec);

struct Dataset {
  ModelSpec spec;
  std::uint64_t seed = 0;
  /// y_0 .. y_n; every step carries an observation.
  std::vector<Eigen::VectorXd> y;
};

FeynmanKacModel build_lgm(const LinearGaussianSpec& spec, const Dataset& data);
FeynmanKacModel build_ngm78(const Ngm78Spec& spec, const Dataset& data);
FeynmanKacModel build_lorenz96(const Lorenz96Spec& spec, const Dataset& data);
FeynmanKacModel build_model(const Dataset& data);

/// Lorenz-96 drift, indices modulo d.
Particles lorenz96_drift(const Particles& xs, double alpha);
/// NGM-78 transition mean a0 x + a1 x / (1 + |x|^2).
Particles ngm78_mean(const Particles& xs, double a0, double a1);

/// One latent path from x_0 = 0 and one observation per step, deterministic
/// in the seed.
Dataset generate_dataset(const ModelSpec& spec, const SeedSpec& seed);

void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);
std::string dataset_to_json(const Dataset& data);
Dataset dataset_from_json(const std::string& text);

}  // namespace tppf
