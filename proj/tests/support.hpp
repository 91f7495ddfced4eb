#pragma once

// Small reference computations used as independent oracles by the tests.
// Nothing here calls into the library's own oracle module.

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace support {

struct Moments {
  double m = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;

  // Welford's update; the plain sum of squares cancels badly for large means.
  void add(double v) {
    ++n;
    const double delta = v - m;
    m += delta / static_cast<double>(n);
    m2 += delta * (v - m);
  }
  double mean() const { return m; }
  double var() const { return m2 / static_cast<double>(n - 1); }
  double se() const { return std::sqrt(var() / static_cast<double>(n)); }
};

// Z of a finite chain by walking every path recursively.
inline double brute_force_z(const Eigen::MatrixXd& p, const Eigen::MatrixXd& log_g, int init) {
  const int n = static_cast<int>(log_g.cols()) - 1;
  std::function<double(int, int)> walk = [&](int k, int s) -> double {
    const double here = std::exp(log_g(s, k));
    if (k == n) return here;
    double acc = 0.0;
    for (int t = 0; t < p.cols(); ++t) acc += p(s, t) * walk(k + 1, t);
    return here * acc;
  };
  return walk(0, init);
}

// x_k = a x_{k-1} + N(0, q), y_k = x_k + N(0, r), x_0 = x0 known; every
// y_0..y_n is observed. Returns log p(y_0..y_n).
inline double scalar_kalman_log_z(double a, double q, double r, const std::vector<double>& ys, double x0) {
  auto log_normal = [](double v, double var) { return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * v * v / var; };
  double out = log_normal(ys[0] - x0, r);
  double m = x0, p = 0.0;
  for (std::size_t k = 1; k < ys.size(); ++k) {
    m = a * m;
    p = a * a * p + q;
    const double s = p + r;
    out += log_normal(ys[k] - m, s);
    const double gain = p / s;
    m += gain * (ys[k] - m);
    p *= 1.0 - gain;
  }
  return out;
}

// Gauss-Hermite rule for the weight e^{-x^2} (Golub-Welsch).
struct Rule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

inline Rule gauss_hermite(int n) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) j(i, i - 1) = j(i - 1, i) = std::sqrt(i / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(j);
  Rule r;
  r.nodes = eig.eigenvalues();
  r.weights = std::sqrt(std::numbers::pi) * eig.eigenvectors().row(0).transpose().array().square();
  return r;
}

// E[f(X)] for X ~ N(mean, var) with an n-point rule.
inline double normal_expectation(const std::function<double(double)>& f, double mean, double var, int n = 80) {
  const Rule r = gauss_hermite(n);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += r.weights[i] * f(mean + std::sqrt(2.0 * var) * r.nodes[i]);
  return acc / std::sqrt(std::numbers::pi);
}

// Composite Simpson rule on [a, b] with an even number of panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int panels = 4000) {
  const double h = (b - a) / panels;
  double acc = f(a) + f(b);
  for (int i = 1; i < panels; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return acc * h / 3.0;
}

inline double rel_err(double a, double b, double floor = 1e-12) { return std::abs(a - b) / std::max(floor, std::abs(b)); }

}  // namespace support
