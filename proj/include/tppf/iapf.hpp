#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "tppf/filter.hpp"
#include "tppf/model.hpp"
#include "tppf/twist.hpp"

namespace tppf {

struct IapfConfig {
  std::size_t particles = 512;
  std::size_t max_sweeps = 10;
  /// Stop once successive sweep log Z estimates differ by less than this.
  double tol = 1e-3;
  double ridge = 1e-8;
  ResamplePolicy policy;
};

struct IapfResult {
  /// Report of a fresh run with the final twist.
  FilterReport report;
  std::shared_ptr<const QuadraticTwist> twist;
  std::vector<double> sweep_log_z;
};

/// Fits diagonal log-quadratics backward from k = n to 1 at the given
/// particle locations (cloud[k] is d x N): target log g_k + log P[phi_{k+1}].
/// Curvature is clamped to be non-negative.
std::shared_ptr<const QuadraticTwist> fit_quadratic_twist(const FeynmanKacModel& model,
                                                          const std::vector<Particles>& cloud, double ridge);

/// Iterated auxiliary particle filter. Sweep s draws from
/// (seed, iapf, replicate, s); the reported run draws from
/// (seed, filter, replicate).
IapfResult run_iapf(const FeynmanKacModel& model, const IapfConfig& config, const SeedSpec& seed,
                    std::uint64_t replicate);

}  // namespace tppf
